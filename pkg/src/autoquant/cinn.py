"""Conditional invertible network built from affine coupling blocks.

Each block permutes the coordinates, splits them into halves ``(u1, u2)`` and
maps ``u2 -> u2 * exp(s_hat) + t`` where ``s_hat = alpha * tanh(s / alpha)``
and ``s``, ``t`` are small ReLU networks of ``(u1, c)``. The accumulated
permutation is undone after the last block, so a freshly initialised model
(zero output layers) is exactly the identity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._optim import MomentumSGD
from .exceptions import CheckpointVersionError, DimMismatch, InvalidDims, NonFiniteLoss, UntrainedModel
from .forecast import QuantileForecast

CINN_VERSION = 1
LOG_2PI = math.log(2 * math.pi)
DEFAULT_LEVELS = tuple(np.round(np.arange(1, 20) / 20, 2))


@dataclass
class CinnModel:
    H: int
    C: int
    raw_dim: int
    n_blocks: int
    hidden: int
    alpha: float
    seed: int
    enc_mean: np.ndarray
    enc_matrix: np.ndarray
    perms: list
    params: dict
    trained: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def H_pad(self):
        return self.H + (self.H % 2)

    @property
    def d1(self):
        return self.H_pad // 2

    def copy(self):
        return replace(self, params={k: v.copy() for k, v in self.params.items()}, meta=dict(self.meta))

    # serialization ------------------------------------------------------
    def to_dict(self):
        return {
            "version": CINN_VERSION,
            "H": self.H,
            "C": self.C,
            "raw_dim": self.raw_dim,
            "n_blocks": self.n_blocks,
            "hidden": self.hidden,
            "alpha": self.alpha,
            "seed": self.seed,
            "trained": self.trained,
            "encoder": {"mean": self.enc_mean.tolist(), "matrix": self.enc_matrix.tolist()},
            "permutations": [p.tolist() for p in self.perms],
            "params": {k: v.tolist() for k, v in self.params.items()},
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != CINN_VERSION:
            raise CheckpointVersionError(f"cinn document version {d.get('version')} != {CINN_VERSION}")
        return cls(
            H=d["H"],
            C=d["C"],
            raw_dim=d["raw_dim"],
            n_blocks=d["n_blocks"],
            hidden=d["hidden"],
            alpha=d["alpha"],
            seed=d["seed"],
            enc_mean=np.asarray(d["encoder"]["mean"], dtype=float),
            enc_matrix=np.asarray(d["encoder"]["matrix"], dtype=float).reshape(d["raw_dim"], d["C"]),
            perms=[np.asarray(p, dtype=int) for p in d["permutations"]],
            params={k: np.asarray(v, dtype=float) for k, v in d["params"].items()},
            trained=d["trained"],
            meta=d.get("meta", {}),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def init_cinn(H, C, n_blocks=8, hidden=32, alpha=2.0, seed=0, raw_dim=None):
    """Identity-initialised model.

    Parameters
    ----------
    H : int
        Target window length; odd lengths get one zero pad channel.
    C : int
        Encoded condition size seen by the subnets.
    raw_dim : int, optional
        Length of the raw condition vector. Defaults to ``C`` with an
        identity encoder; otherwise a seeded Gaussian projection is used
        until :func:`fit_encoder` replaces it.
    """
    if H < 1 or C < 0 or n_blocks < 1 or hidden < 1 or alpha <= 0:
        raise InvalidDims(f"invalid dims H={H}, C={C}, n_blocks={n_blocks}, hidden={hidden}, alpha={alpha}")
    rng = np.random.default_rng(seed)
    H_pad = H + (H % 2)
    d1 = H_pad // 2
    d2 = H_pad - d1
    if raw_dim is None:
        raw_dim, enc = C, np.eye(C)
    else:
        enc = rng.normal(0.0, 1.0 / math.sqrt(max(raw_dim, 1)), size=(raw_dim, C))
    params, perms = {}, []
    for b in range(n_blocks):
        perms.append(rng.permutation(H_pad))
        for net in ("s", "t"):
            fan_in = d1 + C
            params[f"{b}.{net}.W1"] = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, hidden))
            params[f"{b}.{net}.b1"] = np.zeros(hidden)
            params[f"{b}.{net}.W2"] = np.zeros((hidden, d2))
            params[f"{b}.{net}.b2"] = np.zeros(d2)
    return CinnModel(
        H=int(H),
        C=int(C),
        raw_dim=int(raw_dim),
        n_blocks=int(n_blocks),
        hidden=int(hidden),
        alpha=float(alpha),
        seed=int(seed),
        enc_mean=np.zeros(raw_dim),
        enc_matrix=enc,
        perms=perms,
        params=params,
    )


def fit_encoder(model, raw_conditions):
    """Whitened principal-component projection of the raw conditions onto ``C`` dims."""
    R = np.asarray(raw_conditions, dtype=float)
    if R.ndim != 2 or R.shape[1] != model.raw_dim:
        raise DimMismatch(f"expected conditions with {model.raw_dim} columns, got {R.shape}")
    mean = R.mean(axis=0)
    Rc = R - mean
    _, sv, Vt = np.linalg.svd(Rc, full_matrices=False)
    k = min(model.C, Vt.shape[0])
    scale = sv[:k] / math.sqrt(max(len(R) - 1, 1))
    scale[scale < 1e-8] = 1.0
    mat = np.zeros((model.raw_dim, model.C))
    mat[:, :k] = Vt[:k].T / scale
    out = model.copy()
    out.enc_mean, out.enc_matrix = mean, mat
    return out


# ---------------------------------------------------------------------------
# core transforms


def _as_batch(model, y, cond, ydim):
    y = np.asarray(y, dtype=float)
    cond = np.asarray(cond, dtype=float)
    single = y.ndim == 1
    y2 = np.atleast_2d(y)
    c2 = np.atleast_2d(cond)
    if y2.shape[1] != ydim:
        raise DimMismatch(f"expected vectors of length {ydim}, got {y2.shape[1]}")
    if c2.shape[1] != model.raw_dim:
        raise DimMismatch(f"expected condition of length {model.raw_dim}, got {c2.shape[1]}")
    if c2.shape[0] == 1 and y2.shape[0] > 1:
        c2 = np.repeat(c2, y2.shape[0], axis=0)
    if c2.shape[0] != y2.shape[0]:
        raise DimMismatch(f"{y2.shape[0]} vectors but {c2.shape[0]} conditions")
    return y2, c2, single


def encode(model, cond):
    return (np.atleast_2d(np.asarray(cond, dtype=float)) - model.enc_mean) @ model.enc_matrix


def _subnet(p, prefix, h_in):
    a = h_in @ p[prefix + "W1"] + p[prefix + "b1"]
    r = np.maximum(a, 0.0)
    return r @ p[prefix + "W2"] + p[prefix + "b2"], r


def _pad_mask(model):
    m = np.ones(model.H_pad)
    m[model.H :] = 0.0
    return m


def _total_perm(model):
    total = np.arange(model.H_pad)
    for perm in model.perms:
        total = total[perm]
    return total


def _forward(model, y, c, keep=False):
    n = y.shape[0]
    x = np.zeros((n, model.H_pad))
    x[:, : model.H] = y
    mask = _pad_mask(model)
    logdet = np.zeros(n)
    d1, a, p = model.d1, model.alpha, model.params
    cache = []
    for b, perm in enumerate(model.perms):
        x = x[:, perm]
        mask = mask[perm]
        u1, u2 = x[:, :d1], x[:, d1:]
        m2 = mask[d1:]
        h_in = np.hstack([u1, c])
        s_raw, rs = _subnet(p, f"{b}.s.", h_in)
        t_raw, rt = _subnet(p, f"{b}.t.", h_in)
        th = np.tanh(s_raw / a)
        s_hat = a * th * m2
        e = np.exp(s_hat)
        t = t_raw * m2
        v2 = u2 * e + t
        logdet += s_hat.sum(axis=1)
        if keep:
            cache.append((perm, h_in, rs, rt, th, e, u2, m2))
        x = np.hstack([u1, v2])
    z = x[:, np.argsort(_total_perm(model))]
    return z[:, : model.H], logdet, cache


def forward(model, y, cond):
    """Map target windows to latent space; returns ``(z, logdet)``."""
    y2, c2, single = _as_batch(model, y, cond, model.H)
    z, logdet, _ = _forward(model, y2, encode(model, c2))
    return (z[0], float(logdet[0])) if single else (z, logdet)


def _inverse(model, z, c):
    n = z.shape[0]
    x_full = np.zeros((n, model.H_pad))
    x_full[:, : model.H] = z
    total = _total_perm(model)
    x = x_full[:, total]
    masks = [_pad_mask(model)]
    for perm in model.perms:
        masks.append(masks[-1][perm])
    d1, a, p = model.d1, model.alpha, model.params
    for b in reversed(range(model.n_blocks)):
        m2 = masks[b + 1][d1:]
        u1, v2 = x[:, :d1], x[:, d1:]
        h_in = np.hstack([u1, c])
        s_raw, _ = _subnet(p, f"{b}.s.", h_in)
        t_raw, _ = _subnet(p, f"{b}.t.", h_in)
        s_hat = a * np.tanh(s_raw / a) * m2
        u2 = (v2 - t_raw * m2) * np.exp(-s_hat)
        x = np.hstack([u1, u2])
        inv = np.empty_like(model.perms[b])
        inv[model.perms[b]] = np.arange(len(inv))
        x = x[:, inv]
    return x[:, : model.H]


def inverse(model, z, cond):
    z2, c2, single = _as_batch(model, z, cond, model.H)
    y = _inverse(model, z2, encode(model, c2))
    return y[0] if single else y


def nll_and_grads(model, y, cond, encoded=False):
    """Mean negative log-likelihood ``|z|^2/2 - logdet + H/2 ln(2 pi)`` and its parameter gradients."""
    if encoded:
        y2, c = np.atleast_2d(y), np.atleast_2d(cond)
    else:
        y2, c2, _ = _as_batch(model, y, cond, model.H)
        c = encode(model, c2)
    n = y2.shape[0]
    z, logdet, cache = _forward(model, y2, c, keep=True)
    nll = 0.5 * np.sum(z**2, axis=1) - logdet + 0.5 * model.H * LOG_2PI
    loss = float(nll.mean())

    d1, a, p = model.d1, model.alpha, model.params
    dz = np.zeros((n, model.H_pad))
    dz[:, : model.H] = z / n
    total = _total_perm(model)
    dx = dz[:, np.argsort(np.argsort(total))]  # undo the final reordering
    grads = {}
    for b in reversed(range(model.n_blocks)):
        perm, h_in, rs, rt, th, e, u2, m2 = cache[b]
        g1, gv2 = dx[:, :d1], dx[:, d1:]
        du2 = gv2 * e
        dt_raw = gv2 * m2
        ds_hat = (gv2 * u2 * e - 1.0 / n) * m2
        ds_raw = ds_hat * (1.0 - th**2)
        dh = np.zeros_like(h_in)
        for net, dout, r in (("s", ds_raw, rs), ("t", dt_raw, rt)):
            pre = f"{b}.{net}."
            grads[pre + "W2"] = r.T @ dout
            grads[pre + "b2"] = dout.sum(axis=0)
            dr = (dout @ p[pre + "W2"].T) * (r > 0)
            grads[pre + "W1"] = h_in.T @ dr
            grads[pre + "b1"] = dr.sum(axis=0)
            dh += dr @ p[pre + "W1"].T
        dperm = np.hstack([g1 + dh[:, :d1], du2])
        dx = np.empty_like(dperm)
        dx[:, perm] = dperm
    return loss, grads


def mean_nll(model, y, cond):
    y2, c2, _ = _as_batch(model, y, cond, model.H)
    z, logdet, _ = _forward(model, y2, encode(model, c2))
    return float(np.mean(0.5 * np.sum(z**2, axis=1) - logdet + 0.5 * model.H * LOG_2PI))


def train_cinn(model, targets, conditions, epochs=100, batch_size=64, lr=1e-3, momentum=0.9, clip_norm=5.0, seed=0):
    """Mini-batch maximum-likelihood training.

    Returns the trained copy and the per-epoch training NLL trace (full-pass
    mean after each epoch). ``epochs=0`` returns an unchanged copy and an
    empty trace.
    """
    Y = np.atleast_2d(np.asarray(targets, dtype=float))
    Y, R, _ = _as_batch(model, Y, conditions, model.H)
    if len(Y) == 0:
        raise ValueError("no training windows")
    out = model.copy()
    c = encode(out, R)
    rng = np.random.default_rng(seed)
    opt = MomentumSGD(out.params, lr=lr, momentum=momentum, clip_norm=clip_norm)
    bs = max(1, min(int(batch_size), len(Y)))
    trace = []
    out.meta["initial_nll"] = mean_nll(out, Y, R)
    for epoch in range(int(epochs)):
        order = rng.permutation(len(Y))
        for s in range(0, len(order), bs):
            b = order[s : s + bs]
            loss, grads = nll_and_grads(out, Y[b], c[b], encoded=True)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLoss(f"non-finite NLL {loss} in epoch {epoch}, batch starting at {s}")
            opt.step(out.params, grads)
        full = mean_nll(out, Y, R)
        if not np.isfinite(full):
            raise NonFiniteLoss(f"non-finite training NLL after epoch {epoch}")
        trace.append(full)
    out.meta["loss_trace"] = list(trace)
    if epochs > 0:
        out.trained = True
    return out, trace


@dataclass(frozen=True)
class SamplingConfig:
    sigma: float
    M: int = 100
    levels: tuple = DEFAULT_LEVELS

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.M < 2:
            raise ValueError("need at least two samples")
        lv = np.asarray(self.levels, dtype=float)
        if lv.ndim != 1 or np.any(lv <= 0) or np.any(lv >= 1) or np.any(np.diff(lv) <= 0):
            raise ValueError("levels must be strictly increasing in (0, 1)")


def quantiles_from_point(model, pf, conditions, sc, seed=0, require_trained=True):
    """Sample ``N(z_hat, sigma^2 I)`` around the latent image of each point forecast.

    The samples are mapped back through the inverse flow and summarised by
    empirical quantiles with midpoint plotting positions; the samples are
    kept on the result for CRPS scoring.
    """
    if require_trained and not model.trained:
        raise UntrainedModel("the flow has not been trained")
    values = np.asarray(getattr(pf, "values", pf), dtype=float)
    n, H = values.shape
    if H != model.H:
        raise DimMismatch(f"forecast horizon {H} differs from flow dimension {model.H}")
    R = np.atleast_2d(np.asarray(conditions, dtype=float))
    if R.shape != (n, model.raw_dim):
        raise DimMismatch(f"conditions {R.shape} do not match {n} origins x {model.raw_dim}")
    c = encode(model, R)
    z_hat, _, _ = _forward(model, values, c)
    rng = np.random.default_rng(seed)
    z = z_hat[:, None, :] + sc.sigma * rng.standard_normal((n, sc.M, H))
    ys = _inverse(model, z.reshape(n * sc.M, H), np.repeat(c, sc.M, axis=0)).reshape(n, sc.M, H)
    samples = np.sort(np.transpose(ys, (0, 2, 1)), axis=-1)  # (n, H, M)
    q = np.quantile(samples, np.asarray(sc.levels), axis=-1, method="hazen")
    q = np.maximum.accumulate(np.moveaxis(q, 0, -1), axis=-1)
    return QuantileForecast(
        values=q,
        levels=np.asarray(sc.levels, dtype=float),
        origins=getattr(pf, "origins", np.arange(n)),
        origin_times=getattr(pf, "origin_times", None),
        samples=samples,
    )


class CINN(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit(Y, conditions)``, ``transform`` to latent space and back.

    Parameters
    ----------
    n_blocks, hidden, alpha : architecture of the coupling stack.
    cond_dim : int
        Encoded condition size; capped by the raw condition length.
    epochs, batch_size, learning_rate, momentum, clip_norm : training options.
    random_state : int
    """

    def __init__(
        self,
        n_blocks=8,
        hidden=32,
        alpha=2.0,
        cond_dim=16,
        epochs=100,
        batch_size=64,
        learning_rate=1e-3,
        momentum=0.9,
        clip_norm=5.0,
        random_state=0,
    ):
        self.n_blocks = n_blocks
        self.hidden = hidden
        self.alpha = alpha
        self.cond_dim = cond_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.random_state = random_state

    def fit(self, Y, conditions):
        Y = np.asarray(Y, dtype=float)
        R = np.asarray(conditions, dtype=float).reshape(len(Y), -1)
        C = min(int(self.cond_dim), R.shape[1])
        model = init_cinn(Y.shape[1], C, self.n_blocks, self.hidden, self.alpha, self.random_state, raw_dim=R.shape[1])
        model = fit_encoder(model, R)
        self.model_, self.loss_trace_ = train_cinn(
            model,
            Y,
            R,
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.learning_rate,
            momentum=self.momentum,
            clip_norm=self.clip_norm,
            seed=self.random_state,
        )
        self.model_.trained = True
        return self

    def fit_windows(self, windows):
        return self.fit(windows.targets, windows.conditions)

    def _check(self):
        if not hasattr(self, "model_"):
            raise UntrainedModel("call fit first")
        return self.model_

    def transform(self, Y, conditions):
        return forward(self._check(), Y, conditions)[0]

    def inverse_transform(self, Z, conditions):
        return inverse(self._check(), Z, conditions)

    def predict_quantiles(self, pf, conditions, sigma, M=100, levels=DEFAULT_LEVELS, seed=0):
        return quantiles_from_point(self._check(), pf, conditions, SamplingConfig(sigma, M, tuple(levels)), seed)

    @classmethod
    def from_model(cls, model):
        est = cls(n_blocks=model.n_blocks, hidden=model.hidden, alpha=model.alpha, cond_dim=model.C, random_state=model.seed)
        est.model_ = model
        est.loss_trace_ = list(model.meta.get("loss_trace", []))
        return est
