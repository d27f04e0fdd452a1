"""Multiclass multi-kernel learning with a (2, p) group-norm penalty.

The decision function is a sum over K + 1 feature blocks: block 0 is a
gaussian kernel over the raw feature vector and block k >= 1 is a linear
kernel over source k's length-G score vector.  Every block holds one
hyperplane per class (the class-sensitive feature map places a sample's
block encoding in the slot of its class), realized here through per-class
dual coefficient columns:

    score(x, y) = sum_k sum_i c[k][i, y] * K_k(x_i, x)

Training minimizes

    lam/2 * ||w||_{2,p}^2 + (1/N) * sum_i xi_i,
    xi_i = max(0, max_{y != y_i} 1 - (score(x_i, y_i) - score(x_i, y)))

with p in (1, 2]: smaller p concentrates weight on few useful blocks, p = 2
is the flat L2 penalty.  The optimizer runs seeded online epochs (worst
violating class, passive-aggressive style updates) followed by batch
subgradient sweeps, both with step 1/(lam * t) and per-block shrink factors
(1 - eta * lam * (||w_k|| / ||w||_{2,p})^(p-2)) clamped at zero.  The best
iterate under the full objective is kept; the zero model (objective exactly
1) is always a candidate, so the returned objective never exceeds 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import lssvm
from .kernels import KernelSpec, gram
from .lssvm import LssvmModel
from .multi_adapt import source_scores
from .signals import Dataset


@dataclass(frozen=True)
class MkalConfig:
    p: float = 1.25
    lam: float = 1e-3
    gamma: float = 1.0        # bandwidth of the raw-feature block
    epochs_online: int = 5
    epochs_batch: int = 20
    seed: int = 0

    def __post_init__(self):
        if not (1.0 < self.p <= 2.0):
            raise ValueError("p must lie in (1, 2]")
        if not self.lam > 0:
            raise ValueError("lam must be > 0")
        if self.epochs_online < 0 or self.epochs_batch < 0:
            raise ValueError("epoch counts must be >= 0")


@dataclass
class MkalModel:
    p: float
    lam: float
    kernel0: KernelSpec
    num_classes: int
    train_inputs: np.ndarray         # N x d
    train_source_scores: np.ndarray  # N x K x G
    dual_coeffs: np.ndarray          # (K+1) x N x G
    block_norms: np.ndarray          # K+1

    @property
    def num_sources(self) -> int:
        return self.train_source_scores.shape[1]


def group_norm(block_norms: np.ndarray, p: float) -> float:
    """(2, p) group norm from per-block L2 norms: (sum ||w_k||^p)^(1/p)."""
    block_norms = np.asarray(block_norms, dtype=float)
    if np.any(block_norms < 0):
        raise ValueError("block norms must be non-negative")
    return float(np.sum(block_norms**p) ** (1.0 / p))


def _block_grams(kernel0: KernelSpec, X: np.ndarray, s_tensor: np.ndarray) -> list[np.ndarray]:
    grams = [gram(kernel0, X, X)]
    for k in range(s_tensor.shape[1]):
        sk = s_tensor[:, k, :]
        grams.append(sk @ sk.T)
    return grams


def _block_sq_norms(grams: list[np.ndarray], duals: np.ndarray) -> np.ndarray:
    """Exact per-block squared RKHS norms sum_y c_y^T K c_y."""
    return np.array(
        [float(np.einsum("iy,ij,jy->", duals[k], grams[k], duals[k])) for k in range(len(grams))]
    )


def _scores_all(grams: list[np.ndarray], duals: np.ndarray) -> np.ndarray:
    out = np.zeros(duals.shape[1:])
    for k, km in enumerate(grams):
        out += km @ duals[k]
    return out


def _hinge_losses(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample worst-class hinge: max(0, 1 - (f_yi - max_{y != yi} f_y))."""
    n = scores.shape[0]
    own = scores[np.arange(n), labels]
    masked = scores.copy()
    masked[np.arange(n), labels] = -np.inf
    worst = masked.max(axis=1)
    return np.maximum(0.0, 1.0 - (own - worst))


def mkal_objective(
    train: Dataset,
    s_tensor: np.ndarray,
    duals: np.ndarray,
    kernel0: KernelSpec,
    p: float,
    lam: float,
) -> float:
    """Full objective recomputed from scratch (independent of the trainer)."""
    grams = _block_grams(kernel0, train.features, s_tensor)
    scores = _scores_all(grams, duals)
    loss = float(np.mean(_hinge_losses(scores, train.labels))) if len(train) else 0.0
    norms = np.sqrt(np.maximum(_block_sq_norms(grams, duals), 0.0))
    return lam / 2.0 * group_norm(norms, p) ** 2 + loss


def _shrink_factors(sq_norms_true: np.ndarray, p: float, eta: float, lam: float) -> np.ndarray:
    norms = np.sqrt(np.maximum(sq_norms_true, 0.0))
    q = group_norm(norms, p)
    if q <= 0.0:
        return np.ones_like(norms)
    g = np.where(norms > 0.0, (np.where(norms > 0.0, norms, 1.0) / q) ** (p - 2.0), 0.0)
    return np.maximum(0.0, 1.0 - eta * lam * g)


def fit_mkal(
    train: Dataset,
    sources: list[LssvmModel],
    cfg: MkalConfig,
    *,
    source_scores_train: np.ndarray | None = None,
    kernel0: KernelSpec | None = None,
) -> MkalModel:
    n = len(train)
    g = train.num_classes
    if n < 1:
        raise ValueError("need at least one training sample")
    if g < 2:
        raise ValueError("need at least 2 classes")
    if not sources:
        raise ValueError("need at least one source model")
    if kernel0 is None:
        kernel0 = KernelSpec("gaussian", cfg.gamma)

    s_tensor = source_scores_train
    if s_tensor is None:
        s_tensor = source_scores(sources, train.features)
    k = len(sources)
    if s_tensor.shape != (n, k, g):
        raise ValueError("source score tensor has the wrong shape")

    grams = _block_grams(kernel0, train.features, s_tensor)
    nb = k + 1
    labels = train.labels

    # Lazily scaled state: true duals = m[k] * c_hat[k]; f_hat caches the
    # unscaled training scores K_k @ c_hat[k]; sq_hat the unscaled sq norms.
    c_hat = np.zeros((nb, n, g))
    f_hat = np.zeros((nb, n, g))
    sq_hat = np.zeros(nb)
    m = np.ones(nb)

    def materialize() -> np.ndarray:
        return m[:, None, None] * c_hat

    def refresh_caches():
        nonlocal f_hat, sq_hat
        for kb in range(nb):
            f_hat[kb] = grams[kb] @ c_hat[kb]
        sq_hat = _block_sq_norms(grams, c_hat)

    def apply_shrink(eta: float):
        nonlocal m
        factors = _shrink_factors(m * m * sq_hat, cfg.p, eta, cfg.lam)
        m = m * factors
        # fold small multipliers back into the stored duals so 1/m stays tame
        small = m < 1e-6
        for kb in np.flatnonzero(small):
            c_hat[kb] *= m[kb]
            f_hat[kb] *= m[kb]
            sq_hat[kb] *= m[kb] * m[kb]
            m[kb] = 1.0

    def objective_now() -> float:
        scores = (m[:, None, None] * f_hat).sum(axis=0)
        loss = float(np.mean(_hinge_losses(scores, labels)))
        norms = np.sqrt(np.maximum(m * m * sq_hat, 0.0))
        return cfg.lam / 2.0 * group_norm(norms, cfg.p) ** 2 + loss

    # the zero model scores objective exactly 1 and is always a candidate
    best_obj = 1.0
    best_duals = np.zeros((nb, n, g))

    rng = np.random.default_rng(cfg.seed)
    t = 0
    for _ in range(cfg.epochs_online):
        for i in rng.permutation(n):
            t += 1
            fi = (m[:, None] * f_hat[:, i, :]).sum(axis=0)
            yi = labels[i]
            masked = fi.copy()
            masked[yi] = -np.inf
            yhat = int(np.argmax(masked))
            violated = 1.0 - (fi[yi] - fi[yhat]) > 0.0
            eta = 1.0 / (cfg.lam * t)
            # the regularizer part of the step applies whether or not the
            # margin is violated, otherwise separated iterates never shrink
            apply_shrink(eta)
            if not violated:
                continue
            for kb in range(nb):
                col = grams[kb][:, i]
                delta = eta / m[kb]
                sq_hat[kb] += (
                    2.0 * delta * (f_hat[kb, i, yi] - f_hat[kb, i, yhat])
                    + 2.0 * delta * delta * col[i]
                )
                c_hat[kb, i, yi] += delta
                c_hat[kb, i, yhat] -= delta
                f_hat[kb, :, yi] += delta * col
                f_hat[kb, :, yhat] -= delta * col
        refresh_caches()
        obj = objective_now()
        if obj < best_obj:
            best_obj, best_duals = obj, materialize()

    for _ in range(cfg.epochs_batch):
        t += 1
        eta = 1.0 / (cfg.lam * t)
        scores = (m[:, None, None] * f_hat).sum(axis=0)
        own = scores[np.arange(n), labels]
        masked = scores.copy()
        masked[np.arange(n), labels] = -np.inf
        yhat = np.argmax(masked, axis=1)
        violated = (1.0 - (own - masked[np.arange(n), yhat])) > 0.0
        apply_shrink(eta)
        if np.any(violated):
            du = np.zeros((n, g))
            rows = np.flatnonzero(violated)
            np.add.at(du, (rows, labels[rows]), 1.0)
            np.add.at(du, (rows, yhat[rows]), -1.0)
            for kb in range(nb):
                delta = eta / (n * m[kb])
                c_hat[kb] += delta * du
                f_hat[kb] += delta * (grams[kb] @ du)
            sq_hat = _block_sq_norms(grams, c_hat)
        obj = objective_now()
        if obj < best_obj:
            best_obj, best_duals = obj, materialize()

    final_norms = np.sqrt(np.maximum(_block_sq_norms(grams, best_duals), 0.0))
    return MkalModel(
        p=cfg.p,
        lam=cfg.lam,
        kernel0=kernel0,
        num_classes=g,
        train_inputs=train.features.copy(),
        train_source_scores=s_tensor.copy(),
        dual_coeffs=best_duals,
        block_norms=final_norms,
    )


def predict_mkal(
    model: MkalModel, X: np.ndarray, source_scores_x: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted labels and scores; `source_scores_x` is the (M, K, G) tensor."""
    X = np.asarray(X, dtype=float)
    source_scores_x = np.asarray(source_scores_x, dtype=float)
    k = model.num_sources
    if source_scores_x.shape != (X.shape[0], k, model.num_classes):
        raise ValueError("source score tensor has the wrong shape")
    scores = gram(model.kernel0, X, model.train_inputs) @ model.dual_coeffs[0]
    for kb in range(k):
        w = model.train_source_scores[:, kb, :].T @ model.dual_coeffs[kb + 1]  # G x G
        scores += source_scores_x[:, kb, :] @ w
    return np.argmax(scores, axis=1), scores


def model_objective(model: MkalModel, train: Dataset) -> float:
    """Objective of a trained model on its own training set."""
    return mkal_objective(
        train, model.train_source_scores, model.dual_coeffs, model.kernel0, model.p, model.lam
    )


# ---------------------------------------------------------------------------
# serialization: duals and raw inputs inline; source scores by shape only,
# recomputed from the source models at load time


def save_mkal(model: MkalModel, path: str | Path) -> None:
    doc = {
        "kind": "mkal",
        "p": model.p,
        "lam": model.lam,
        "num_classes": model.num_classes,
        "blocks": [{"kind": "gaussian_raw", "kernel": model.kernel0.to_doc()}]
        + [{"kind": "linear_source_scores", "source": kb} for kb in range(model.num_sources)],
        "dual_coeffs": [model.dual_coeffs[kb].tolist() for kb in range(len(model.dual_coeffs))],
        "train_inputs": model.train_inputs.tolist(),
        "source_score_shape": list(model.train_source_scores.shape),
        "block_norms": model.block_norms.tolist(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_mkal(path: str | Path, sources: list[LssvmModel]) -> MkalModel:
    doc = json.loads(Path(path).read_text())
    train_inputs = np.array(doc["train_inputs"], dtype=float)
    s_tensor = source_scores(sources, train_inputs)
    if list(s_tensor.shape) != doc["source_score_shape"]:
        raise ValueError(
            f"recomputed source scores {list(s_tensor.shape)} do not match the stored "
            f"shape {doc['source_score_shape']}"
        )
    return MkalModel(
        p=float(doc["p"]),
        lam=float(doc["lam"]),
        kernel0=KernelSpec.from_doc(doc["blocks"][0]["kernel"]),
        num_classes=int(doc["num_classes"]),
        train_inputs=train_inputs,
        train_source_scores=s_tensor,
        dual_coeffs=np.array(doc["dual_coeffs"], dtype=float),
        block_norms=np.array(doc["block_norms"], dtype=float),
    )
