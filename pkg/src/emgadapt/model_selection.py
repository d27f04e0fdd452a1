"""Hyperparameter selection by stratified k-fold cross-validation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import lssvm
from .kernels import KernelSpec
from .signals import Dataset


@dataclass(frozen=True)
class Grid:
    """Search grid for (C, gamma) plus folding controls."""

    C_values: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0, 1000.0)
    gamma_values: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0, 1000.0)
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.C_values or not self.gamma_values:
            raise ValueError("grid must contain at least one C and one gamma")
        if any(c <= 0 for c in self.C_values) or any(g <= 0 for g in self.gamma_values):
            raise ValueError("grid values must be positive")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")


def stratified_folds(labels: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    """Deal each class's shuffled members round-robin into `folds` folds.

    The dealing position carries over between classes, so fold sizes differ
    by at most one globally and per class.  A class with fewer members than
    folds simply lands in that many folds.
    """
    labels = np.asarray(labels, dtype=int)
    n = labels.shape[0]
    if folds > n:
        raise ValueError(f"folds ({folds}) exceeds sample count ({n})")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(folds)]
    pos = 0
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        rng.shuffle(members)
        for idx in members:
            buckets[pos % folds].append(int(idx))
            pos += 1
    out = [np.array(sorted(b), dtype=int) for b in buckets]
    if any(len(b) == 0 for b in out):
        raise ValueError("degenerate folds: a fold received no samples")
    return out


FitPredict = Callable[[np.ndarray, np.ndarray, dict], np.ndarray]


def cross_validate(
    labels: np.ndarray,
    candidates: Sequence[dict],
    fit_predict: FitPredict,
    folds: int,
    seed: int,
) -> list[dict]:
    """Mean CV accuracy for every candidate, in candidate order.

    fit_predict(train_idx, val_idx, candidate) must return predicted labels
    for the validation indices.
    """
    labels = np.asarray(labels, dtype=int)
    fold_idx = stratified_folds(labels, folds, seed)
    table = []
    for cand in candidates:
        accs = []
        for f in range(folds):
            val = fold_idx[f]
            train = np.concatenate([fold_idx[j] for j in range(folds) if j != f])
            pred = np.asarray(fit_predict(train, val, cand))
            accs.append(float(np.mean(pred == labels[val])))
        table.append(dict(cand, accuracy=float(np.mean(accs))))
    return table


def best_candidate(table: list[dict]) -> dict:
    """First row with the highest accuracy (candidate order breaks ties)."""
    best = table[0]
    for row in table[1:]:
        if row["accuracy"] > best["accuracy"]:
            best = row
    return best


def select(
    train: Dataset,
    fit_fn: Callable[[Dataset, float, float], Callable[[np.ndarray], np.ndarray]],
    grid: Grid,
) -> tuple[dict, list[dict]]:
    """Pick (C, gamma) by stratified CV accuracy.

    fit_fn(train_subset, C, gamma) returns a predictor mapping a feature
    matrix to labels.  Candidates are visited with C ascending then gamma
    ascending, so ties resolve to the smaller C and then the smaller gamma.
    Returns (best row, full table).
    """
    candidates = [
        {"C": c, "gamma": g} for c in sorted(grid.C_values) for g in sorted(grid.gamma_values)
    ]

    def fit_predict(train_idx, val_idx, cand):
        predictor = fit_fn(train.subset(train_idx), cand["C"], cand["gamma"])
        return predictor(train.features[val_idx])

    table = cross_validate(train.labels, candidates, fit_predict, grid.folds, grid.seed)
    return best_candidate(table), table


def lssvm_fit_fn(kind: str = "gaussian"):
    """fit_fn adapter training a one-vs-all LS-SVM of the given kernel kind."""

    def fit_fn(sub: Dataset, C: float, gamma: float):
        spec = KernelSpec(kind, gamma) if kind == "gaussian" else KernelSpec(kind)
        model = lssvm.fit(sub, spec, C)
        return lambda X: lssvm.predict(model, X)[0]

    return fit_fn
