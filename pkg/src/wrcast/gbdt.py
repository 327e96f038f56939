"""Regression trees and gradient boosting.

Exact greedy splits over all midpoints between distinct feature values,
no subsampling, deterministic tie-breaking (lowest feature index, then
lowest threshold), so fixed data and hyperparameters reproduce the model
bit for bit. Custom first/second-order objectives plug in as a callable
returning per-sample gradients and hessians; multi-output objectives run
as parallel ensembles sharing the boosting round loop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import DomainError, TrainingError


@dataclass
class RegressionTree:
    """Flat-array binary tree; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    max_depth: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        node = np.zeros(len(X), dtype=np.int64)
        for _ in range(self.max_depth + 1):
            feat = self.feature[node]
            live = feat >= 0
            if not live.any():
                break
            rows = np.nonzero(live)[0]
            go_left = X[rows, feat[live]] < self.threshold[node[live]]
            node[rows] = np.where(go_left, self.left[node[live]],
                                  self.right[node[live]])
        return self.value[node]

    def n_nodes(self) -> int:
        return len(self.feature)

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(),
                "threshold": self.threshold.tolist(),
                "left": self.left.tolist(),
                "right": self.right.tolist(),
                "value": self.value.tolist(),
                "max_depth": self.max_depth}

    @staticmethod
    def from_dict(d: dict) -> "RegressionTree":
        return RegressionTree(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], float),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], float),
            max_depth=int(d["max_depth"]))


def fit_tree(X, targets, hessians=None, max_depth: int = 3,
             min_leaf: int = 1) -> RegressionTree:
    """Greedy tree on (targets, hessians): leaf = sum(t) / sum(h).

    With unit hessians this is plain variance-reduction splitting with
    mean leaves; with caller-supplied hessians the leaf is a Newton
    step (pass targets = -gradients).
    """
    X = np.atleast_2d(np.asarray(X, float))
    t = np.asarray(targets, float)
    if len(X) == 0 or len(t) == 0:
        raise DomainError("empty training data")
    if len(X) != len(t):
        raise DomainError("rows(X) != len(targets)")
    if min_leaf < 1:
        raise DomainError("min_leaf must be >= 1")
    h = np.ones_like(t) if hessians is None else np.asarray(hessians, float)
    if np.any(h <= 0):
        raise DomainError("hessians must be positive")

    feature, threshold, left, right, value = [], [], [], [], []

    def leaf(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(t[idx].sum() / h[idx].sum()))
        return len(feature) - 1

    def grow(idx, depth):
        tmin, tmax = t[idx].min(), t[idx].max()
        if depth >= max_depth or len(idx) < 2 * min_leaf \
                or tmax - tmin <= 1e-15 * (abs(tmax) + abs(tmin) + 1e-300):
            return leaf(idx)
        best = (0.0, -1, 0.0, 0)
        for f in range(X.shape[1]):
            order = np.argsort(X[idx, f], kind="stable")
            sidx = idx[order]
            gain, thr, n_left = kernels.best_split(
                np.ascontiguousarray(X[sidx, f]),
                np.ascontiguousarray(t[sidx]),
                np.ascontiguousarray(h[sidx]), min_leaf)
            if gain > best[0]:
                best = (gain, f, thr, n_left)
        if best[1] < 0:
            return leaf(idx)
        _, f, thr, _ = best
        node = len(feature)
        feature.append(f)
        threshold.append(thr)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        mask = X[idx, f] < thr
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(len(t)), 0)
    return RegressionTree(feature=np.asarray(feature, dtype=np.int64),
                          threshold=np.asarray(threshold, float),
                          left=np.asarray(left, dtype=np.int64),
                          right=np.asarray(right, dtype=np.int64),
                          value=np.asarray(value, float),
                          max_depth=max_depth)


@dataclass
class GbdtModel:
    """base + sum over rounds of rho * learning_rate * tree(x).

    For multi-output objectives each round holds one tree per output;
    trees[r][k] is the round-r tree for output k.
    """

    base: np.ndarray                  # (K,)
    trees: list                       # [round][output] -> (tree, rho)
    learning_rate: float
    n_features: int
    n_outputs: int = 1
    train_loss: tuple = field(default=(), repr=False)

    def to_json(self) -> str:
        return json.dumps({
            "format": "wrcast-gbdt-1",
            "base": self.base.tolist(),
            "learning_rate": self.learning_rate,
            "n_features": self.n_features,
            "n_outputs": self.n_outputs,
            "trees": [[{"rho": rho, **tree.to_dict()} for tree, rho in rnd]
                      for rnd in self.trees],
        })

    @staticmethod
    def from_json(text: str) -> "GbdtModel":
        d = json.loads(text)
        if d.get("format") != "wrcast-gbdt-1":
            raise DomainError("not a serialized boosted model")
        trees = [[(RegressionTree.from_dict(td), float(td["rho"]))
                  for td in rnd] for rnd in d["trees"]]
        return GbdtModel(base=np.asarray(d["base"], float), trees=trees,
                         learning_rate=float(d["learning_rate"]),
                         n_features=int(d["n_features"]),
                         n_outputs=int(d["n_outputs"]))


def gbdt_predict(model: GbdtModel, x) -> np.ndarray:
    """Evaluate the ensemble; x is a feature vector or a matrix."""
    X = np.asarray(x, float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.n_features:
        raise DomainError(
            f"expected {model.n_features} features, got {X.shape[1]}")
    out = np.tile(model.base, (len(X), 1)).astype(float)
    for rnd in model.trees:
        for k, (tree, rho) in enumerate(rnd):
            out[:, k] += rho * model.learning_rate * tree.predict(X)
    if model.n_outputs == 1:
        out = out[:, 0]
        return float(out[0]) if single else out
    return out[0] if single else out


def gbdt_fit(X, y, objective="squared", n_trees: int = 100,
             learning_rate: float = 0.1, max_depth: int = 3,
             min_leaf: int = 1, n_outputs: int = 1) -> GbdtModel:
    """Boosted ensemble under a squared or custom objective.

    squared: start from the target mean, fit each tree to the current
    residuals, scale it by the exact line-search step. The per-round
    training loss is recorded and is nonincreasing by construction.

    custom: a callable scores -> (gradient, hessian, loss) with
    per-sample, per-output arrays; each round takes a Newton step
    (trees fit -gradient with hessian-weighted leaves, rho = 1).
    """
    X = np.atleast_2d(np.asarray(X, float))
    if n_trees < 1:
        raise DomainError("n_trees must be >= 1")
    if objective == "squared":
        y = np.asarray(y, float)
        if len(y) != len(X):
            raise DomainError("rows(X) != len(y)")
        base = float(y.mean())
        F = np.full(len(y), base)
        rounds = []
        losses = []
        for _ in range(n_trees):
            resid = y - F
            tree = fit_tree(X, resid, None, max_depth, min_leaf)
            pred = tree.predict(X)
            denom = float(np.dot(pred, pred))
            rho = float(np.dot(resid, pred) / denom) if denom > 0 else 1.0
            F = F + learning_rate * rho * pred
            rounds.append([(tree, rho)])
            losses.append(float(np.mean((y - F) ** 2)))
        return GbdtModel(base=np.array([base]), trees=rounds,
                         learning_rate=learning_rate,
                         n_features=X.shape[1], n_outputs=1,
                         train_loss=tuple(losses))

    scores0 = objective
    if not callable(scores0):
        raise DomainError(f"unknown objective {objective!r}")
    K = n_outputs
    base = np.zeros(K)
    S = np.zeros((len(X), K))
    g, h, loss = scores0(S)
    rounds = []
    losses = []
    for r in range(n_trees):
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
            raise TrainingError(f"non-finite gradient at round {r}")
        rnd = []
        for k in range(K):
            tree = fit_tree(X, -g[:, k], h[:, k], max_depth, min_leaf)
            S[:, k] += learning_rate * tree.predict(X)
            rnd.append((tree, 1.0))
        rounds.append(rnd)
        g, h, loss = scores0(S)
        losses.append(float(loss))
    return GbdtModel(base=base, trees=rounds, learning_rate=learning_rate,
                     n_features=X.shape[1], n_outputs=K,
                     train_loss=tuple(losses))
