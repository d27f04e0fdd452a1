"""One-vs-all multiclass least-squares SVM trained in closed form.

For every class g a machine with targets y in {-1, +1}^N solves the
bordered linear system

    [ 0   1^T     ] [ b ]   [ 0 ]
    [ 1   K + I/C ] [ a ] = [ y ]

so the bias constraint sum(a) = 0 is part of the system.  The score of a
query x is sum_i a_i k(x_i, x) + b and the predicted class is the argmax
over the per-class scores.  The inverse of the same bordered matrix M
gives exact leave-one-out residuals without retraining:

    y_i - f_without_i(x_i) = a_i / inv(M)[i+1, i+1]
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kernels import KernelSpec, gram
from .signals import Dataset, NormStats


class NumericalError(RuntimeError):
    """Raised when the dual system cannot be solved reliably."""


@dataclass
class LssvmModel:
    kernel: KernelSpec
    C: float
    num_classes: int
    support_inputs: np.ndarray  # N x d
    alphas: np.ndarray          # N x num_classes
    biases: np.ndarray          # num_classes
    norm_stats: NormStats | None = None

    def __post_init__(self):
        self.support_inputs = np.asarray(self.support_inputs, dtype=float)
        self.alphas = np.asarray(self.alphas, dtype=float)
        self.biases = np.asarray(self.biases, dtype=float)
        n = self.support_inputs.shape[0]
        if self.alphas.shape != (n, self.num_classes):
            raise ValueError("alphas must be N x num_classes")
        if self.biases.shape != (self.num_classes,):
            raise ValueError("biases must have one entry per class")


def ova_targets(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """One-vs-all +/-1 target matrix, one column per class."""
    n = labels.shape[0]
    y = -np.ones((n, num_classes))
    y[np.arange(n), labels] = 1.0
    return y


def _bordered_matrix(kmat: np.ndarray, C: float) -> np.ndarray:
    n = kmat.shape[0]
    m = np.zeros((n + 1, n + 1))
    m[0, 1:] = 1.0
    m[1:, 0] = 1.0
    m[1:, 1:] = kmat + np.eye(n) / C
    return m


def solve_dual_system(
    kmat: np.ndarray, C: float, targets: np.ndarray, default_mask: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Solve the bordered system for every target column.

    Returns (alphas, biases).  Columns flagged in `default_mask` skip the
    solve and get the constant-negative solution alpha = 0, b = -1 exactly
    (used for classes absent from the training set).
    """
    n = kmat.shape[0]
    rhs = np.zeros((n + 1, targets.shape[1]))
    rhs[1:, :] = targets
    try:
        sol = np.linalg.solve(_bordered_matrix(kmat, C), rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"dual system is singular: {exc}") from exc
    if not np.isfinite(sol).all():
        raise NumericalError("dual system solve produced non-finite values")
    biases = sol[0].copy()
    alphas = sol[1:].copy()
    if default_mask is not None:
        biases[default_mask] = -1.0
        alphas[:, default_mask] = 0.0
    return alphas, biases


def fit(train: Dataset, kernel_spec: KernelSpec, C: float) -> LssvmModel:
    if not C > 0:
        raise ValueError("C must be > 0")
    n = len(train)
    if n < 2:
        raise ValueError("need at least 2 training samples")
    kmat = gram(kernel_spec, train.features, train.features)
    targets = ova_targets(train.labels, train.num_classes)
    present = np.zeros(train.num_classes, dtype=bool)
    present[np.unique(train.labels)] = True
    alphas, biases = solve_dual_system(kmat, C, targets, default_mask=~present)
    return LssvmModel(
        kernel=kernel_spec,
        C=C,
        num_classes=train.num_classes,
        support_inputs=train.features.copy(),
        alphas=alphas,
        biases=biases,
    )


def decision_scores(model: LssvmModel, X: np.ndarray) -> np.ndarray:
    """Per-class scores for query rows (applies stored normalization if any)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be an M x d array")
    if model.norm_stats is not None:
        X = model.norm_stats.apply(X)
    if X.shape[1] != model.support_inputs.shape[1]:
        raise ValueError(
            f"query dimension {X.shape[1]} does not match model dimension "
            f"{model.support_inputs.shape[1]}"
        )
    kq = gram(model.kernel, X, model.support_inputs)
    return kq @ model.alphas + model.biases


def predict(model: LssvmModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Predicted labels and the score matrix; ties go to the smaller class id."""
    scores = decision_scores(model, X)
    return np.argmax(scores, axis=1), scores


def bordered_inverse_block(kmat: np.ndarray, C: float) -> tuple[np.ndarray, np.ndarray]:
    """Lower-right N x N block H of inv(M) and its diagonal.

    The leave-one-out residual of sample i is alpha_i / diag(H)_i, and
    alpha = H @ y for any target column y.
    """
    try:
        minv = np.linalg.inv(_bordered_matrix(kmat, C))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"cannot invert dual system: {exc}") from exc
    h = minv[1:, 1:]
    d = np.diag(h).copy()
    if not np.isfinite(h).all() or np.any(np.abs(d) < 1e-300):
        raise NumericalError("dual system inverse is degenerate")
    return h, d


def loo_residuals(train: Dataset, kernel_spec: KernelSpec, C: float) -> np.ndarray:
    """Exact leave-one-out residuals y_i - f_without_i(x_i), one column per class."""
    if not C > 0:
        raise ValueError("C must be > 0")
    if len(train) < 3:
        raise ValueError("need at least 3 samples for leave-one-out residuals")
    kmat = gram(kernel_spec, train.features, train.features)
    h, d = bordered_inverse_block(kmat, C)
    targets = ova_targets(train.labels, train.num_classes)
    alphas = h @ targets
    return alphas / d[:, None]


# ---------------------------------------------------------------------------
# serialization


def model_to_doc(model: LssvmModel) -> dict:
    return {
        "kind": "lssvm",
        "kernel": model.kernel.to_doc(),
        "C": model.C,
        "num_classes": model.num_classes,
        "biases": model.biases.tolist(),
        "alphas": model.alphas.tolist(),
        "support_inputs": model.support_inputs.tolist(),
        "norm_stats": model.norm_stats.to_doc() if model.norm_stats is not None else None,
    }


def model_from_doc(doc: dict) -> LssvmModel:
    stats = doc.get("norm_stats")
    return LssvmModel(
        kernel=KernelSpec.from_doc(doc["kernel"]),
        C=float(doc["C"]),
        num_classes=int(doc["num_classes"]),
        support_inputs=np.array(doc["support_inputs"], dtype=float),
        alphas=np.array(doc["alphas"], dtype=float),
        biases=np.array(doc["biases"], dtype=float),
        norm_stats=NormStats.from_doc(stats) if stats else None,
    )


def save_model(model: LssvmModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_doc(model), sort_keys=True) + "\n")


def load_model(path: str | Path) -> LssvmModel:
    return model_from_doc(json.loads(Path(path).read_text()))
