"""Two-layer stacking over target and source machines (H-L2L).

The target training set is split per class into a 63% side and a 37% side.
Layer 1 is an LS-SVM trained on the 63% side.  Every 37%-side sample is
then re-encoded as the concatenation of layer 1's G scores with each
source's G scores -- a (K+1)*G vector, target block first -- z-normalized,
and layer 2 is a gaussian-kernel LS-SVM trained on those score vectors.
Queries follow the same path with the stored normalization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import lssvm
from .kernels import KernelSpec
from .lssvm import LssvmModel
from .multi_adapt import source_scores
from .signals import Dataset, NormStats, fit_normalizer, apply_normalizer


@dataclass
class Hl2lModel:
    layer1: LssvmModel
    layer2: LssvmModel  # trained on normalized stacked score vectors
    num_sources: int
    split_seed: int
    split_ratio: float
    score_norm_stats: NormStats


def stratified_split(
    labels: np.ndarray, ratio: float = 0.63, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Per-class split: round(ratio * n_c) half-up to the first side, at least 1.

    Classes with a single sample go entirely to the first (layer 1) side.
    Returns sorted index arrays (side_a, side_b) that partition the input.
    """
    labels = np.asarray(labels, dtype=int)
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    a_parts, b_parts = [], []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        rng.shuffle(members)
        n_a = int(math.floor(ratio * len(members) + 0.5))
        n_a = min(max(n_a, 1), len(members))
        a_parts.append(members[:n_a])
        b_parts.append(members[n_a:])
    side_a = np.sort(np.concatenate(a_parts))
    side_b = np.sort(np.concatenate(b_parts)) if any(len(p) for p in b_parts) else np.array([], dtype=int)
    return side_a, side_b


def stack_scores(target_scores: np.ndarray, source_scores_x: np.ndarray) -> np.ndarray:
    """Concatenate target scores with each source's scores: (M, (K+1)*G)."""
    m, k, g = source_scores_x.shape
    if target_scores.shape != (m, g):
        raise ValueError("target and source score shapes disagree")
    return np.concatenate([target_scores, source_scores_x.reshape(m, k * g)], axis=1)


def _score_feature_names(num_sources: int, num_classes: int) -> list[str]:
    names = [f"target_s{g}" for g in range(num_classes)]
    for k in range(num_sources):
        names.extend(f"src{k + 1}_s{g}" for g in range(num_classes))
    return names


def stacking_dataset(
    train: Dataset,
    sources: list[LssvmModel],
    kernel1: KernelSpec,
    C1: float,
    seed: int = 0,
    ratio: float = 0.63,
    source_scores_train: np.ndarray | None = None,
) -> tuple[LssvmModel, Dataset]:
    """Layer 1 model plus the raw (unnormalized) stacked layer-2 training set."""
    if not sources:
        raise ValueError("need at least one source model")
    n = len(train)
    if n < len(sources) + 2:
        raise ValueError("not enough training samples for stacking")
    side_a, side_b = stratified_split(train.labels, ratio=ratio, seed=seed)
    if len(side_b) < 2:
        raise ValueError("insufficient data for stacking: the held-out side is too small")
    layer1 = lssvm.fit(train.subset(side_a), kernel1, C1)
    t_scores = lssvm.decision_scores(layer1, train.features[side_b])
    s_tensor = source_scores_train
    if s_tensor is None:
        s_tensor = source_scores(sources, train.features)
    stacked = stack_scores(t_scores, s_tensor[side_b])
    ds = Dataset(
        features=stacked,
        labels=train.labels[side_b],
        num_classes=train.num_classes,
        feature_names=_score_feature_names(len(sources), train.num_classes),
    )
    return layer1, ds


def fit_hl2l(
    train: Dataset,
    sources: list[LssvmModel],
    kernel1: KernelSpec,
    C1: float,
    kernel2: KernelSpec,
    C2: float,
    seed: int = 0,
    ratio: float = 0.63,
    source_scores_train: np.ndarray | None = None,
) -> Hl2lModel:
    layer1, raw_ds = stacking_dataset(
        train, sources, kernel1, C1, seed=seed, ratio=ratio,
        source_scores_train=source_scores_train,
    )
    stats = fit_normalizer(raw_ds)
    layer2 = lssvm.fit(apply_normalizer(raw_ds, stats), kernel2, C2)
    layer2.norm_stats = stats
    return Hl2lModel(
        layer1=layer1,
        layer2=layer2,
        num_sources=len(sources),
        split_seed=seed,
        split_ratio=ratio,
        score_norm_stats=stats,
    )


def predict_hl2l(
    model: Hl2lModel, X: np.ndarray, source_scores_x: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted labels and layer-2 scores for query rows."""
    if source_scores_x.shape[1] != model.num_sources:
        raise ValueError("source score tensor has the wrong number of sources")
    t_scores = lssvm.decision_scores(model.layer1, X)
    stacked = stack_scores(t_scores, source_scores_x)
    return lssvm.predict(model.layer2, stacked)


def save_hl2l(model: Hl2lModel, path: str | Path) -> None:
    doc = {
        "kind": "hl2l",
        "layer1": lssvm.model_to_doc(model.layer1),
        "layer2": lssvm.model_to_doc(model.layer2),
        "num_sources": model.num_sources,
        "split_seed": model.split_seed,
        "split_ratio": model.split_ratio,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_hl2l(path: str | Path) -> Hl2lModel:
    doc = json.loads(Path(path).read_text())
    layer2 = lssvm.model_from_doc(doc["layer2"])
    if layer2.norm_stats is None:
        raise ValueError("stored layer 2 is missing its normalization stats")
    return Hl2lModel(
        layer1=lssvm.model_from_doc(doc["layer1"]),
        layer2=layer2,
        num_sources=int(doc["num_sources"]),
        split_seed=int(doc["split_seed"]),
        split_ratio=float(doc["split_ratio"]),
        score_norm_stats=layer2.norm_stats,
    )
