import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..exceptions import SingularSystem


class RidgeRegression(RegressorMixin, BaseEstimator):
    """Closed-form multi-output ridge regression with an unpenalized intercept.

    Parameters
    ----------
    alpha : float
        L2 penalty on the coefficients. ``alpha=0`` is ordinary least
        squares and raises :class:`SingularSystem` on a rank-deficient design.
    """

    def __init__(self, alpha=1.0):
        self.alpha = alpha

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.n_features_in_ = X.shape[1]
        x_mean = X.mean(axis=0)
        y_mean = y.mean(axis=0)
        Xc = X - x_mean
        yc = y - y_mean
        gram = Xc.T @ Xc
        if self.alpha == 0 and np.linalg.matrix_rank(Xc) < X.shape[1]:
            raise SingularSystem("design is rank deficient and alpha is zero")
        gram[np.diag_indices_from(gram)] += self.alpha
        try:
            self.coef_ = np.linalg.solve(gram, Xc.T @ yc)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from exc
        self.intercept_ = y_mean - x_mean @ self.coef_
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_ + self.intercept_

    def state_dict(self):
        return {
            "params": self.get_params(),
            "n_features_in": self.n_features_in_,
            "coef": np.asarray(self.coef_).tolist(),
            "intercept": np.asarray(self.intercept_).tolist(),
        }

    @classmethod
    def from_state(cls, state):
        est = cls(**state["params"])
        est.n_features_in_ = state["n_features_in"]
        est.coef_ = np.asarray(state["coef"], dtype=float)
        est.intercept_ = np.asarray(state["intercept"], dtype=float)
        return est
