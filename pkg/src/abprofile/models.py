"""Classifiers for the feature-contribution benchmark.

All three are implemented directly. The linear SVM trains L1-loss dual
coordinate descent with a deterministic cyclic update order; AdaBoost
boosts depth-1 stumps over the binary features; the random forest
reuses the forest module with its own seed stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .forest import fit_forest

MODELS = ("svm", "random_forest", "adaboost")

SVM_C = 1.0
SVM_TOL = 1e-6
SVM_MAX_EPOCHS = 2000
ADABOOST_ROUNDS = 50


def _check_two_classes(y: np.ndarray) -> None:
    if len(np.unique(y)) < 2:
        raise UsageError("training data must contain both classes")


@dataclass
class LinearSVM:
    weights: np.ndarray  # includes the bias as a trailing component

    def scores(self, X: np.ndarray) -> np.ndarray:
        Xa = np.hstack([X, np.ones((len(X), 1))])
        return Xa @ self.weights


def fit_svm(X: np.ndarray, y01: np.ndarray, c: float = SVM_C, tol: float = SVM_TOL) -> LinearSVM:
    """Hinge-loss L2-regularized linear SVM by dual coordinate descent.

    The bias is absorbed as an augmented constant feature. Updates run
    in a fixed cyclic order until the largest projected gradient
    violation falls under ``tol``, so training is fully deterministic.
    """
    _check_two_classes(y01)
    Xa = np.hstack([np.asarray(X, dtype=np.float64), np.ones((len(X), 1))])
    y = np.where(np.asarray(y01) == 1, 1.0, -1.0)
    n = len(Xa)
    q_diag = (Xa * Xa).sum(axis=1)
    alpha = np.zeros(n)
    w = np.zeros(Xa.shape[1])
    for _ in range(SVM_MAX_EPOCHS):
        max_violation = 0.0
        for i in range(n):
            g = y[i] * (Xa[i] @ w) - 1.0
            if alpha[i] == 0.0:
                pg = min(g, 0.0)
            elif alpha[i] == c:
                pg = max(g, 0.0)
            else:
                pg = g
            max_violation = max(max_violation, abs(pg))
            if pg != 0.0:
                old = alpha[i]
                alpha[i] = min(max(old - g / q_diag[i], 0.0), c)
                delta = alpha[i] - old
                if delta != 0.0:
                    w += delta * y[i] * Xa[i]
        if max_violation < tol:
            break
    return LinearSVM(weights=w)


@dataclass
class Stump:
    feature: int
    polarity: int  # +1: predict targeting when the bit is set
    alpha: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        raw = np.where(X[:, self.feature] == 1, 1.0, -1.0)
        return self.polarity * raw


@dataclass
class AdaBoost:
    stumps: list

    def scores(self, X: np.ndarray) -> np.ndarray:
        out = np.zeros(len(X), dtype=np.float64)
        for stump in self.stumps:
            out += stump.alpha * stump.predict(X)
        return out

    def training_error(self, X: np.ndarray, y01: np.ndarray) -> float:
        pred = np.where(self.scores(X) > 0, 1, 0)
        return float((pred != y01).mean())


def fit_adaboost(X: np.ndarray, y01: np.ndarray, rounds: int = ADABOOST_ROUNDS) -> AdaBoost:
    """Exponential-loss boosting of single-feature stumps; stops early on
    a perfect weak learner or when no stump beats chance."""
    _check_two_classes(y01)
    X = np.asarray(X, dtype=np.uint8)
    y = np.where(np.asarray(y01) == 1, 1.0, -1.0)
    n, width = X.shape
    weights = np.full(n, 1.0 / n)
    # a stump must split: constant columns are not candidates (this also
    # keeps masked-to-zero columns from influencing the model)
    varies = X.any(axis=0) & ~X.all(axis=0)
    if not varies.any():
        return AdaBoost(stumps=[])
    stumps: list[Stump] = []
    for _ in range(rounds):
        pos_mass = weights @ (X == 1)
        pos_mass_y = (weights * (y == 1.0)) @ (X == 1)
        total_pos_y = float((weights * (y == 1.0)).sum())
        # error of polarity +1 stump: bit set but y=-1, or bit unset but y=+1
        err_plus = (pos_mass - pos_mass_y) + (total_pos_y - pos_mass_y)
        err_minus = 1.0 - err_plus
        err_plus = np.where(varies, err_plus, np.inf)
        err_minus = np.where(varies, err_minus, np.inf)
        best_plus = int(np.argmin(err_plus))
        best_minus = int(np.argmin(err_minus))
        if err_plus[best_plus] <= err_minus[best_minus]:
            feature, polarity, err = best_plus, 1, float(err_plus[best_plus])
        else:
            feature, polarity, err = best_minus, -1, float(err_minus[best_minus])
        if err >= 0.5:
            break
        clamped = min(max(err, 1e-10), 1.0 - 1e-10)
        alpha = 0.5 * math.log((1.0 - clamped) / clamped)
        stump = Stump(feature=feature, polarity=polarity, alpha=alpha)
        stumps.append(stump)
        if err <= 0.0:
            break  # perfect weak learner
        margin = y * stump.predict(X)
        weights = weights * np.exp(-alpha * margin)
        weights /= weights.sum()
    return AdaBoost(stumps=stumps)


def train_score(
    model: str,
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_test: np.ndarray,
    rng: np.random.Generator | None = None,
    n_trees: int = 100,
) -> np.ndarray:
    """Fit one model and return real-valued scores for the test rows."""
    _check_two_classes(np.asarray(y_train))
    if model == "svm":
        return fit_svm(X_train, y_train).scores(X_test)
    if model == "adaboost":
        return fit_adaboost(X_train, y_train).scores(X_test)
    if model == "random_forest":
        if rng is None:
            raise UsageError("random forest scoring needs an rng")
        return fit_forest(X_train, y_train, rng, n_trees=n_trees).scores(X_test)
    raise UsageError(f"unknown model {model!r}; expected one of {MODELS}")
