"""Histogram gradient-boosted regression trees, squared-error loss.

Each output column gets its own independent ensemble; for speed the
per-output trees of one boosting round are grown in lockstep so a single
histogram pass serves all of them.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


@njit(cache=True)
def _best_splits(Xb, rows_k, rows_i, starts, gw, w, B, lam, min_leaf):
    """Best (feature, bin) split per node from its rows ``starts[p]:starts[p+1]``.

    Feature -1 marks a node without a split of positive gain.
    """
    n_nodes = len(starts) - 1
    F = Xb.shape[1]
    best_f = np.full(n_nodes, -1, dtype=np.int64)
    best_b = np.zeros(n_nodes, dtype=np.int64)
    HG = np.empty((F, B))
    HN = np.empty((F, B))
    for p in range(n_nodes):
        HG[:] = 0.0
        HN[:] = 0.0
        Gt = 0.0
        Nt = 0.0
        for r in range(starts[p], starts[p + 1]):
            k = rows_k[r]
            i = rows_i[r]
            g = gw[k, i]
            wi = w[k, i]
            Gt += g
            Nt += wi
            for f in range(F):
                b = Xb[i, f]
                HG[f, b] += g
                HN[f, b] += wi
        if Nt < 2 * min_leaf:
            continue
        parent = Gt * Gt / (Nt + lam)
        best = 1e-12 * max(1.0, Gt * Gt)
        for f in range(F):
            GL = 0.0
            NL = 0.0
            for b in range(B - 1):
                GL += HG[f, b]
                NL += HN[f, b]
                if NL < min_leaf:
                    continue
                NR = Nt - NL
                if NR < min_leaf:
                    break
                GR = Gt - GL
                gain = GL * GL / (NL + lam) + GR * GR / (NR + lam) - parent
                if gain > best:
                    best = gain
                    best_f[p] = f
                    best_b[p] = b
    return best_f, best_b


def _bin_edges(x, max_bins):
    u = np.unique(x)
    if len(u) <= max_bins:
        return (u[:-1] + u[1:]) / 2
    qs = np.quantile(x, np.linspace(0, 1, max_bins + 1)[1:-1])
    return np.unique(qs)


class GradientBoostedTrees(RegressorMixin, BaseEstimator):
    """Multi-output gradient boosting with one tree sequence per output.

    Parameters
    ----------
    learning_rate : float
        Shrinkage applied to each tree's leaf values.
    max_depth : int
        Maximum depth of every tree.
    n_estimators : int
        Boosting rounds; ``0`` gives the training-mean predictor.
    sub_sample : float
        Fraction of rows drawn (without replacement, per tree) for fitting.
    max_bins : int
        Candidate thresholds per feature; features with fewer distinct
        values are split exactly between neighbouring values.
    reg_lambda : float
        L2 penalty on leaf values.
    min_samples_leaf : int
        Minimum rows in each child of a split.
    random_state : int or None
        Seed for row subsampling.
    """

    def __init__(
        self,
        learning_rate=0.3,
        max_depth=6,
        n_estimators=100,
        sub_sample=1.0,
        max_bins=64,
        reg_lambda=0.0,
        min_samples_leaf=1,
        random_state=None,
    ):
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.n_estimators = n_estimators
        self.sub_sample = sub_sample
        self.max_bins = max_bins
        self.reg_lambda = reg_lambda
        self.min_samples_leaf = min_samples_leaf
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._single_output = y.ndim == 1
        Y = y.reshape(len(y), -1).T.astype(float)  # (K, n)
        K, n = Y.shape
        self.n_features_in_ = X.shape[1]
        if not 2 <= self.max_bins <= 255:
            raise ValueError("max_bins must lie in [2, 255]")
        self.bin_edges_ = [_bin_edges(X[:, f], self.max_bins) for f in range(X.shape[1])]
        Xb = np.column_stack(
            [np.searchsorted(e, X[:, f], side="left") for f, e in enumerate(self.bin_edges_)]
        ).astype(np.uint8)
        self._n_bins = max(len(e) for e in self.bin_edges_) + 1 if self.bin_edges_ else 1
        self.base_score_ = Y.mean(axis=1)
        pred = np.repeat(self.base_score_[:, None], n, axis=1)
        rng = np.random.default_rng(self.random_state)
        self.trees_ = []
        for _ in range(int(self.n_estimators)):
            if self.sub_sample < 1.0:
                m = max(1, int(round(self.sub_sample * n)))
                w = np.zeros((K, n))
                for k in range(K):
                    w[k, rng.choice(n, size=m, replace=False)] = 1.0
            else:
                w = np.ones((K, n))
            tree, leaf_of = self._grow(Xb, pred - Y, w)
            pred += tree["value"][leaf_of]
            self.trees_.append(tree)
        return self

    def _grow(self, Xb, grad, w):
        K, n = grad.shape
        F, B = Xb.shape[1], self._n_bins
        lam, min_leaf = float(self.reg_lambda), int(self.min_samples_leaf)
        feat, thr_bin, left, right = [-1] * K, [-1] * K, [-1] * K, [-1] * K
        gw = grad * w
        node_G = list(gw.sum(axis=1))
        node_N = list(w.sum(axis=1))
        node_of = np.repeat(np.arange(K)[:, None], n, axis=1)
        active = np.arange(K)
        for _ in range(int(self.max_depth)):
            if active.size == 0:
                break
            pos_of = np.full(len(feat), -1)
            splittable = active[np.asarray(node_N)[active] >= 2 * min_leaf]
            if splittable.size == 0:
                break
            pos_of[splittable] = np.arange(splittable.size)
            pos = pos_of[node_of]
            kk, ii = np.nonzero((pos >= 0) & (w > 0))
            rpos = pos[kk, ii]
            order = np.argsort(rpos, kind="stable")
            kk, ii, rpos = kk[order], ii[order], rpos[order]
            starts = np.searchsorted(rpos, np.arange(splittable.size + 1))
            best_f, best_b = _best_splits(Xb, kk, ii, starts, gw, w, B, lam, float(min_leaf))
            children = []
            for j, node in enumerate(splittable):
                f = best_f[j]
                if f < 0:
                    continue
                lid, rid = len(feat), len(feat) + 1
                feat[node], thr_bin[node], left[node], right[node] = int(f), int(best_b[j]), lid, rid
                feat += [-1, -1]
                thr_bin += [-1, -1]
                left += [-1, -1]
                right += [-1, -1]
                node_G += [0.0, 0.0]
                node_N += [0.0, 0.0]
                children += [lid, rid]
            if not children:
                break
            feat_a = np.asarray(feat)
            thr_a = np.asarray(thr_bin)
            left_a, right_a = np.asarray(left), np.asarray(right)
            moving = left_a[node_of] >= 0
            mk, mi = np.nonzero(moving)
            cur = node_of[mk, mi]
            go_left = Xb[mi, feat_a[cur]] <= thr_a[cur]
            node_of[mk, mi] = np.where(go_left, left_a[cur], right_a[cur])
            children = np.asarray(children)
            sums_G = np.bincount(node_of.ravel(), weights=gw.ravel(), minlength=len(feat))
            sums_N = np.bincount(node_of.ravel(), weights=w.ravel(), minlength=len(feat))
            for c in children:
                node_G[c], node_N[c] = sums_G[c], sums_N[c]
            active = children
        G = np.asarray(node_G)
        N = np.asarray(node_N)
        with np.errstate(divide="ignore", invalid="ignore"):
            value = np.where(N + lam > 0, -G / (N + lam), 0.0) * self.learning_rate
        feat_a = np.asarray(feat)
        thr = np.array(
            [self.bin_edges_[f][b] if f >= 0 else np.nan for f, b in zip(feat, thr_bin)], dtype=float
        )
        tree = {
            "feature": feat_a,
            "threshold": thr,
            "left": np.asarray(left),
            "right": np.asarray(right),
            "value": value,
        }
        return tree, node_of

    def _apply(self, tree, X):
        K = len(self.base_score_)
        n = X.shape[0]
        node = np.repeat(np.arange(K)[:, None], n, axis=1)
        cols = np.arange(n)[None, :]
        for _ in range(int(self.max_depth)):
            f = tree["feature"][node]
            internal = f >= 0
            if not internal.any():
                break
            xv = X[cols, np.where(internal, f, 0)]
            nxt = np.where(xv <= tree["threshold"][node], tree["left"][node], tree["right"][node])
            node = np.where(internal, nxt, node)
        return node

    def predict(self, X):
        check_is_fitted(self, "trees_")
        X = check_array(X)
        pred = np.repeat(self.base_score_[:, None], X.shape[0], axis=1)
        for tree in self.trees_:
            pred += tree["value"][self._apply(tree, X)]
        return pred[0] if self._single_output else pred.T

    # serialization ------------------------------------------------------
    def state_dict(self):
        return {
            "params": self.get_params(),
            "single_output": self._single_output,
            "n_features_in": self.n_features_in_,
            "base_score": self.base_score_.tolist(),
            "trees": [{k: v.tolist() for k, v in t.items()} for t in self.trees_],
        }

    @classmethod
    def from_state(cls, state):
        est = cls(**state["params"])
        est._single_output = state["single_output"]
        est.n_features_in_ = state["n_features_in"]
        est.base_score_ = np.asarray(state["base_score"], dtype=float)
        est.trees_ = [
            {k: np.asarray(v, dtype=float if k in ("threshold", "value") else int) for k, v in t.items()}
            for t in state["trees"]
        ]
        return est
