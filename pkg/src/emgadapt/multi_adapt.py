"""Multi Adapt: pull the target machine toward a mix of source machines.

Per class g the target hyperplane is regularized toward the non-negative
combination sum_k beta[k, g] * w_source_k_g.  A change of variable turns
this into a plain LS-SVM solve with modified targets

    ytil[i, g] = y[i, g] - sum_k beta[k, g] * s_k_g(x_i)

where s_k_g is source k's score for class g (bias included), and the final
score adds the borrowed part back:

    score_g(x) = sum_i alpha[i, g] k(x_i, x) + b_g + sum_k beta[k, g] * s_k_g(x)

The mixing weights are chosen by minimizing a hinge bound on the exact
leave-one-out error.  Because alpha is affine in beta through the fixed
bordered-system inverse, the LOO prediction of sample i is affine in beta,
and the bound is convex; a projected subgradient descent with step 1/sqrt(t)
keeps beta non-negative with per-class L2 norm at most 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import lssvm
from .kernels import KernelSpec, gram
from .lssvm import LssvmModel
from .signals import Dataset


@dataclass
class BetaWeights:
    """Non-negative source mixing weights, one column per class."""

    values: np.ndarray  # K x G

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("beta must be a K x G matrix")
        if np.any(self.values < 0):
            raise ValueError("beta entries must be non-negative")
        norms = np.linalg.norm(self.values, axis=0)
        if np.any(norms > 1.0 + 1e-9):
            raise ValueError("per-class beta norm must not exceed 1")


@dataclass
class MaModel:
    base: LssvmModel
    beta: BetaWeights
    sources: list[LssvmModel]


def source_scores(sources: list[LssvmModel], X: np.ndarray) -> np.ndarray:
    """Score tensor of shape (M, K, G): every source's per-class scores."""
    if not sources:
        raise ValueError("need at least one source model")
    g = sources[0].num_classes
    d = sources[0].support_inputs.shape[1]
    for s in sources:
        if s.num_classes != g:
            raise ValueError("source models disagree on class count")
        if s.support_inputs.shape[1] != d:
            raise ValueError("source models disagree on feature dimension")
    out = np.stack([lssvm.decision_scores(s, X) for s in sources], axis=1)
    return out


def project_beta(values: np.ndarray) -> np.ndarray:
    """Clip negatives to zero, then rescale columns onto the unit L2 ball."""
    v = np.maximum(np.asarray(values, dtype=float), 0.0)
    norms = np.linalg.norm(v, axis=0)
    over = norms > 1.0
    v[:, over] /= norms[over]
    return v


def loo_hinge_bound(Y: np.ndarray, base_loo: np.ndarray, V: np.ndarray, beta: np.ndarray) -> float:
    """Hinge LOO bound L(beta) = sum_i,g max(0, 1 - y * yhat_loo(beta))."""
    yhat = base_loo + np.einsum("ikg,kg->ig", V, beta)
    return float(np.maximum(0.0, 1.0 - Y * yhat).sum())


def fit_ma(
    train: Dataset,
    sources: list[LssvmModel],
    kernel_spec: KernelSpec,
    C: float,
    *,
    iterations: int = 300,
    eta0: float = 1.0,
    beta: np.ndarray | None = None,
    source_scores_train: np.ndarray | None = None,
) -> MaModel:
    """Train Multi Adapt; pass `beta` to skip optimization and fix the mixing.

    `source_scores_train` may carry a precomputed (N, K, G) score tensor for
    the training rows to avoid recomputation inside sweeps.
    """
    n = len(train)
    if n < 3:
        raise ValueError("need at least 3 training samples")
    if not sources:
        raise ValueError("need at least one source model (use the no-transfer baseline otherwise)")
    g = train.num_classes
    k = len(sources)
    if sources[0].num_classes != g:
        raise ValueError("source class count does not match the training data")

    s_tensor = source_scores_train
    if s_tensor is None:
        s_tensor = source_scores(sources, train.features)
    if s_tensor.shape != (n, k, g):
        raise ValueError("source score tensor has the wrong shape")

    kmat = gram(kernel_spec, train.features, train.features)
    Y = lssvm.ova_targets(train.labels, g)

    if beta is None:
        h, d = lssvm.bordered_inverse_block(kmat, C)
        # LOO prediction is y - alpha/diag with alpha = H @ ytil, affine in beta:
        # yhat_loo(beta) = base + V @ beta per class column
        base_loo = Y - (h @ Y) / d[:, None]
        V = np.einsum("ij,jkg->ikg", h, s_tensor) / d[:, None, None]
        b = np.zeros((k, g))
        best_val = loo_hinge_bound(Y, base_loo, V, b)
        best_beta = b.copy()
        for t in range(1, iterations + 1):
            yhat = base_loo + np.einsum("ikg,kg->ig", V, b)
            active = (1.0 - Y * yhat) > 0.0
            grad = -np.einsum("ig,ikg->kg", Y * active, V)
            b = project_beta(b - (eta0 / np.sqrt(t)) * grad)
            val = loo_hinge_bound(Y, base_loo, V, b)
            if val < best_val:
                best_val = val
                best_beta = b.copy()
        beta = best_beta
    else:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (k, g):
            raise ValueError("beta must be K x G")

    modified = Y - np.einsum("ikg,kg->ig", s_tensor, beta)
    present = np.zeros(g, dtype=bool)
    present[np.unique(train.labels)] = True
    # a class both absent and unborrowed is the plain constant-negative machine
    default_mask = (~present) & np.all(beta == 0.0, axis=0)
    alphas, biases = lssvm.solve_dual_system(kmat, C, modified, default_mask=default_mask)
    base = LssvmModel(
        kernel=kernel_spec,
        C=C,
        num_classes=g,
        support_inputs=train.features.copy(),
        alphas=alphas,
        biases=biases,
    )
    return MaModel(base=base, beta=BetaWeights(beta), sources=list(sources))


def predict_ma(
    model: MaModel, X: np.ndarray, source_scores_x: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted labels and scores; ties go to the smaller class id."""
    if source_scores_x is None:
        source_scores_x = source_scores(model.sources, X)
    scores = lssvm.decision_scores(model.base, X)
    scores = scores + np.einsum("mkg,kg->mg", source_scores_x, model.beta.values)
    return np.argmax(scores, axis=1), scores


# ---------------------------------------------------------------------------
# serialization: base machine and beta inline, sources by file reference


def save_ma(model: MaModel, path: str | Path, source_refs: list[str]) -> None:
    if len(source_refs) != len(model.sources):
        raise ValueError("need one source reference per source model")
    doc = {
        "kind": "multi_adapt",
        "base": lssvm.model_to_doc(model.base),
        "beta": model.beta.values.tolist(),
        "source_refs": list(source_refs),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_ma(
    path: str | Path,
    sources: list[LssvmModel] | None = None,
    base_dir: str | Path | None = None,
) -> MaModel:
    path = Path(path)
    doc = json.loads(path.read_text())
    if sources is None:
        root = Path(base_dir) if base_dir is not None else path.parent
        sources = [lssvm.load_model(root / ref) for ref in doc["source_refs"]]
    if len(sources) != len(doc["source_refs"]):
        raise ValueError("source model count does not match stored references")
    return MaModel(
        base=lssvm.model_from_doc(doc["base"]),
        beta=BetaWeights(np.array(doc["beta"], dtype=float)),
        sources=list(sources),
    )
