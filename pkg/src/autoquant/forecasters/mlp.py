"""Fully connected regression network trained with momentum SGD."""

from __future__ import annotations

import copy
import warnings

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .._optim import MomentumSGD, glorot_uniform

ACTIVATIONS = ("logistic", "tanh", "relu")


def _act(name, a):
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "tanh":
        return np.tanh(a)
    return 0.5 * (1.0 + np.tanh(0.5 * a))  # numerically safe logistic


def _act_grad(name, out):
    """Derivative expressed through the activation output."""
    if name == "relu":
        return (out > 0).astype(out.dtype)
    if name == "tanh":
        return 1.0 - out**2
    return out * (1.0 - out)


def init_params(sizes, rng, activation="relu", zero_output=True):
    """Glorot-uniform hidden layers; the output layer starts at zero so the
    untrained network predicts the (standardised) training mean."""
    gain = 2.0**0.5 if activation == "logistic" else 1.0
    params = {}
    last = len(sizes) - 2
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"W{i}"] = np.zeros((a, b)) if zero_output and i == last else glorot_uniform(rng, a, b, gain)
        params[f"b{i}"] = np.zeros(b)
    return params


def forward(params, X, activation):
    n_layers = len(params) // 2
    outs = [X]
    h = X
    for i in range(n_layers):
        h = h @ params[f"W{i}"] + params[f"b{i}"]
        if i < n_layers - 1:
            h = _act(activation, h)
        outs.append(h)
    return outs


def loss_and_grads(params, X, Y, activation):
    """Half mean (over rows) of the per-row squared error summed over outputs."""
    outs = forward(params, X, activation)
    n = X.shape[0]
    err = outs[-1] - Y
    loss = 0.5 * float(np.sum(err**2)) / n
    n_layers = len(params) // 2
    grads = {}
    delta = err / n
    for i in reversed(range(n_layers)):
        grads[f"W{i}"] = outs[i].T @ delta
        grads[f"b{i}"] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params[f"W{i}"].T) * _act_grad(activation, outs[i])
    return loss, grads


class MLP(RegressorMixin, BaseEstimator):
    """Multi-output perceptron regressor.

    Inputs and targets are standardized internally. Training stops early
    when the loss on a random hold-out fraction has not improved for
    ``patience`` epochs; the best hold-out weights are kept.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int
    activation : {'logistic', 'tanh', 'relu'}
    batch_size : int
        Mini-batch size, clamped to the number of training rows.
    learning_rate, momentum : float
    max_epochs : int
    validation_fraction : float
    patience : int
    tol : float
        Minimum hold-out improvement that resets the patience counter.
    random_state : int or None
    """

    def __init__(
        self,
        hidden_layer_sizes=(100,),
        activation="relu",
        batch_size=64,
        learning_rate=1e-3,
        momentum=0.9,
        max_epochs=200,
        validation_fraction=0.2,
        patience=10,
        tol=1e-4,
        random_state=None,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.max_epochs = max_epochs
        self.validation_fraction = validation_fraction
        self.patience = patience
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._single_output = y.ndim == 1
        Y = y.reshape(len(y), -1).astype(float)
        n = X.shape[0]
        self.n_features_in_ = X.shape[1]
        self.x_loc_, self.x_scale_ = X.mean(axis=0), X.std(axis=0)
        self.x_scale_[self.x_scale_ == 0] = 1.0
        self.y_loc_, self.y_scale_ = Y.mean(axis=0), Y.std(axis=0)
        self.y_scale_[self.y_scale_ == 0] = 1.0
        Xs = (X - self.x_loc_) / self.x_scale_
        Ys = (Y - self.y_loc_) / self.y_scale_

        rng = np.random.default_rng(self.random_state)
        n_val = int(round(self.validation_fraction * n)) if n >= 5 else 0
        perm = rng.permutation(n)
        val_idx, tr_idx = perm[:n_val], perm[n_val:]
        sizes = [X.shape[1], *map(int, self.hidden_layer_sizes), Y.shape[1]]
        params = init_params(sizes, rng, self.activation)
        opt = MomentumSGD(params, lr=self.learning_rate, momentum=self.momentum)
        bs = max(1, min(int(self.batch_size), len(tr_idx)))

        best, best_params, stall = np.inf, copy.deepcopy(params), 0
        self.loss_curve_, self.n_iter_ = [], 0
        converged = False
        for epoch in range(int(self.max_epochs)):
            order = tr_idx[rng.permutation(len(tr_idx))]
            total = 0.0
            for s in range(0, len(order), bs):
                b = order[s : s + bs]
                loss, grads = loss_and_grads(params, Xs[b], Ys[b], self.activation)
                opt.step(params, grads)
                total += loss * len(b)
            self.loss_curve_.append(total / len(order))
            self.n_iter_ = epoch + 1
            if n_val:
                score = loss_and_grads(params, Xs[val_idx], Ys[val_idx], self.activation)[0]
            else:
                score = self.loss_curve_[-1]
            if score < best - self.tol:
                best, best_params, stall = score, copy.deepcopy(params), 0
            else:
                stall += 1
                if score < best:
                    best, best_params = score, copy.deepcopy(params)
                if stall >= self.patience:
                    converged = True
                    break
        if not converged and self.max_epochs > 0:
            warnings.warn(
                f"MLP stopped after {self.max_epochs} epochs without hold-out convergence",
                ConvergenceWarning,
                stacklevel=2,
            )
        self.params_ = best_params
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X)
        out = forward(self.params_, (X - self.x_loc_) / self.x_scale_, self.activation)[-1]
        out = out * self.y_scale_ + self.y_loc_
        return out[:, 0] if self._single_output else out

    def state_dict(self):
        p = self.get_params()
        p["hidden_layer_sizes"] = list(p["hidden_layer_sizes"])
        return {
            "params": p,
            "single_output": self._single_output,
            "n_features_in": self.n_features_in_,
            "scalers": {k: getattr(self, k).tolist() for k in ("x_loc_", "x_scale_", "y_loc_", "y_scale_")},
            "weights": {k: v.tolist() for k, v in self.params_.items()},
        }

    @classmethod
    def from_state(cls, state):
        p = dict(state["params"])
        p["hidden_layer_sizes"] = tuple(p["hidden_layer_sizes"])
        est = cls(**p)
        est._single_output = state["single_output"]
        est.n_features_in_ = state["n_features_in"]
        for k, v in state["scalers"].items():
            setattr(est, k, np.asarray(v, dtype=float))
        est.params_ = {k: np.asarray(v, dtype=float) for k, v in state["weights"].items()}
        return est
