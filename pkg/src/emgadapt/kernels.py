"""Kernel functions and Gram-matrix construction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KERNEL_KINDS = ("gaussian", "linear")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus parameters.

    kind   -- "gaussian" for exp(-gamma * ||a - b||^2) or "linear" for <a, b>
    gamma  -- bandwidth, required and > 0 for the gaussian kernel
    """

    kind: str
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind: {self.kind!r}")
        if self.kind == "gaussian":
            if self.gamma is None or not self.gamma > 0:
                raise ValueError("gaussian kernel requires gamma > 0")

    def to_doc(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma}

    @classmethod
    def from_doc(cls, doc: dict) -> "KernelSpec":
        return cls(kind=doc["kind"], gamma=doc["gamma"])


def kernel(spec: KernelSpec, a: np.ndarray, b: np.ndarray) -> float:
    """Scalar kernel value for two vectors of equal dimension."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(
            f"kernel expects two equal-length vectors, got shapes {a.shape} and {b.shape}"
        )
    if spec.kind == "linear":
        return float(a @ b)
    d = a - b
    return float(np.exp(-spec.gamma * (d @ d)))


def gram(spec: KernelSpec, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Pairwise kernel matrix with entry (i, j) = kernel(spec, X[i], Z[j])."""
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if X.ndim != 2 or Z.ndim != 2:
        raise ValueError("gram expects 2-d arrays (rows are vectors)")
    if X.shape[1] != Z.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Z.shape[1]}")
    if spec.kind == "linear":
        return X @ Z.T
    # ||x||^2 + ||z||^2 - 2<x,z>, clamped at zero so round-off cannot feed
    # a negative squared distance into exp.
    sq = (X * X).sum(axis=1)[:, None] + (Z * Z).sum(axis=1)[None, :] - 2.0 * (X @ Z.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-spec.gamma * sq)
