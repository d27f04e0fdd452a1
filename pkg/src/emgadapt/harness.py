"""Cross-subject transfer experiments with nested training-size growth.

An experiment takes a cohort of subjects with per-subject train/test
datasets.  Depending on the experiment kind, each eligible subject plays
the target exactly once while the others act as sources:

  II -- intact target, the remaining intact subjects are sources
  AA -- amputee target, the remaining amputees are sources
  AI -- amputee target, all intact subjects are sources

Source machines are cross-validated LS-SVMs trained once per subject on
its own (optionally capped) training data.  For every random seed the
target's training pool is permuted once and the size-s training set is the
first s entries, so smaller sets nest inside larger ones and class
proportions stay whatever the permutation produced (no balancing).  Per
cell, (C, gamma) are re-selected by CV on the current training subset and
shared by No Transfer, Multi Adapt and the H-L2L first layer; MKAL picks
(p, lambda) by CV; Prior Features picks C; the H-L2L second layer picks
its own (C, gamma) on the stacked score vectors.

All randomness is derived from (base_seed, target id, seed index, size
index), so results are identical no matter how work is scheduled across
processes.
"""

from __future__ import annotations

import dataclasses
import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import lssvm
from .analysis import ConfusionMatrix, confusion
from .baselines import fit_no_transfer, fit_prior_features, prior_feature_matrix
from .hl2l import fit_hl2l, predict_hl2l, stacking_dataset
from .kernels import KernelSpec
from .lssvm import LssvmModel
from .mkal import MkalConfig, fit_mkal, predict_mkal
from .model_selection import Grid, best_candidate, cross_validate, lssvm_fit_fn, select
from .multi_adapt import fit_ma, predict_ma, source_scores
from .signals import Dataset, apply_normalizer, fit_normalizer

METHODS = ("NoTransfer", "PriorFeatures", "MA", "MKAL", "HL2L")
EXPERIMENTS = ("II", "AA", "AI")


@dataclass(frozen=True)
class MkalSelection:
    """Validation grid and budgets for the multi-kernel method."""

    p_grid: tuple[float, ...] = (1.05, 1.25, 1.5, 2.0)
    lambda_grid: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1)
    folds: int | None = None  # None: reuse the main grid's fold count
    epochs_online: int = 5
    epochs_batch: int = 20


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    methods: tuple[str, ...] = METHODS
    size_schedule: tuple[int, ...] = tuple(range(120, 2161, 120))
    seeds: tuple[int, ...] = (0,)
    grid: Grid = field(default_factory=Grid)
    mkal: MkalSelection = field(default_factory=MkalSelection)
    source_train_cap: int | None = 1000
    base_seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods: {unknown}")
        if not self.methods:
            raise ValueError("need at least one method")
        sizes = list(self.size_schedule)
        if not sizes or any(s < 1 for s in sizes) or sorted(set(sizes)) != sizes:
            raise ValueError("size_schedule must be strictly increasing positive ints")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.source_train_cap is not None and self.source_train_cap < 2:
            raise ValueError("source_train_cap must be >= 2 (or None)")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")


@dataclass
class SubjectData:
    subject_id: str
    condition: str
    train: Dataset
    test: Dataset


@dataclass
class CellResult:
    target_id: str
    seed_index: int
    size: int
    method: str
    accuracy: float
    confusion: ConfusionMatrix
    params: dict


@dataclass
class LearningCurve:
    method: str
    sizes: list[int]
    mean: list[float]
    lo: list[float]
    hi: list[float]
    raw: list[tuple[str, int, int, float]]  # (target, seed_index, size, accuracy)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    subjects: list[tuple[str, str]]
    source_ids: list[str]
    cells: list[CellResult]
    warnings: list[str]


def _key32(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def _rng(base_seed: int, *spawn_key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=spawn_key))


def _seed_int(base_seed: int, *spawn_key: int) -> int:
    return int(np.random.SeedSequence(base_seed, spawn_key=spawn_key).generate_state(1)[0])


def experiment_roles(
    experiment: str, subjects: list[SubjectData]
) -> list[tuple[SubjectData, list[SubjectData]]]:
    """(target, sources) pairs for the experiment kind; errors on bad cohorts."""
    intact = [s for s in subjects if s.condition == "intact"]
    amputee = [s for s in subjects if s.condition == "amputee"]
    if experiment == "II":
        pairs = [(t, [s for s in intact if s is not t]) for t in intact]
    elif experiment == "AA":
        pairs = [(t, [s for s in amputee if s is not t]) for t in amputee]
    elif experiment == "AI":
        pairs = [(t, list(intact)) for t in amputee]
    else:
        raise ValueError(f"experiment must be one of {EXPERIMENTS}")
    if not pairs:
        raise ValueError(f"cohort has no target subjects for experiment {experiment}")
    for t, sources in pairs:
        if not sources:
            raise ValueError(f"target {t.subject_id} has no source subjects in {experiment}")
    return pairs


def train_source_model(subject: SubjectData, cfg: ExperimentConfig) -> LssvmModel:
    """Cross-validated gaussian LS-SVM on the subject's own training data."""
    data = subject.train
    key = _key32(subject.subject_id)
    if cfg.source_train_cap is not None and len(data) > cfg.source_train_cap:
        rng = _rng(cfg.base_seed, 0, key)
        idx = np.sort(rng.choice(len(data), size=cfg.source_train_cap, replace=False))
        data = data.subset(idx)
    grid = dataclasses.replace(cfg.grid, seed=_seed_int(cfg.base_seed, 1, key))
    return fit_no_transfer(data, grid)


def _fit_eval_cell(
    method: str,
    cfg: ExperimentConfig,
    sub: Dataset,
    s_sub: np.ndarray | None,
    test: Dataset,
    s_test: np.ndarray | None,
    source_models: list[LssvmModel],
    shared: dict | None,
    cell_key: tuple[int, ...],
) -> tuple[np.ndarray, dict]:
    """Train one method on the size-s subset and predict the test set."""
    base = cfg.base_seed
    if method == "NoTransfer":
        model = lssvm.fit(sub, KernelSpec("gaussian", shared["gamma"]), shared["C"])
        return lssvm.predict(model, test.features)[0], dict(shared)
    if method == "PriorFeatures":
        grid = dataclasses.replace(cfg.grid, seed=_seed_int(base, *cell_key, 3))
        model = fit_prior_features(sub, source_models, grid, source_scores_train=s_sub)
        return lssvm.predict(model, prior_feature_matrix(s_test))[0], {"C": model.C}
    if method == "MA":
        kernel = KernelSpec("gaussian", shared["gamma"])
        model = fit_ma(sub, source_models, kernel, shared["C"], source_scores_train=s_sub)
        return predict_ma(model, test.features, s_test)[0], dict(shared)
    if method == "MKAL":
        sel = cfg.mkal
        folds = sel.folds if sel.folds is not None else cfg.grid.folds
        fit_seed = _seed_int(base, *cell_key, 4)
        candidates = [
            {"lam": lam, "p": p} for lam in sorted(sel.lambda_grid) for p in sorted(sel.p_grid)
        ]

        def make_cfg(cand):
            return MkalConfig(
                p=cand["p"], lam=cand["lam"], gamma=shared["gamma"],
                epochs_online=sel.epochs_online, epochs_batch=sel.epochs_batch, seed=fit_seed,
            )

        def fit_predict(tr, va, cand):
            mdl = fit_mkal(
                sub.subset(tr), source_models, make_cfg(cand), source_scores_train=s_sub[tr]
            )
            return predict_mkal(mdl, sub.features[va], s_sub[va])[0]

        table = cross_validate(
            sub.labels, candidates, fit_predict, folds, _seed_int(base, *cell_key, 5)
        )
        best = best_candidate(table)
        model = fit_mkal(sub, source_models, make_cfg(best), source_scores_train=s_sub)
        return (
            predict_mkal(model, test.features, s_test)[0],
            {"p": best["p"], "lam": best["lam"], "gamma": shared["gamma"]},
        )
    if method == "HL2L":
        kernel1 = KernelSpec("gaussian", shared["gamma"])
        split_seed = _seed_int(base, *cell_key, 6)
        _, raw_stack = stacking_dataset(
            sub, source_models, kernel1, shared["C"], seed=split_seed,
            source_scores_train=s_sub,
        )
        stack_norm = apply_normalizer(raw_stack, fit_normalizer(raw_stack))
        folds2 = max(2, min(cfg.grid.folds, len(stack_norm)))
        grid2 = dataclasses.replace(
            cfg.grid, folds=folds2, seed=_seed_int(base, *cell_key, 7)
        )
        best2, _ = select(stack_norm, lssvm_fit_fn("gaussian"), grid2)
        model = fit_hl2l(
            sub, source_models, kernel1, shared["C"],
            KernelSpec("gaussian", best2["gamma"]), best2["C"],
            seed=split_seed, source_scores_train=s_sub,
        )
        return (
            predict_hl2l(model, test.features, s_test)[0],
            {"C1": shared["C"], "gamma1": shared["gamma"], "C2": best2["C"], "gamma2": best2["gamma"]},
        )
    raise ValueError(f"unknown method: {method}")


def _run_target(
    cfg: ExperimentConfig, target: SubjectData, source_models: list[LssvmModel]
) -> tuple[list[CellResult], list[str]]:
    pool = target.train
    test = target.test
    n_pool = len(pool)
    tkey = _key32(target.subject_id)
    warnings: list[str] = []
    sizes = [s for s in cfg.size_schedule if s <= n_pool]
    dropped = [s for s in cfg.size_schedule if s > n_pool]
    if dropped:
        warnings.append(
            f"target {target.subject_id}: dropped sizes {dropped} beyond pool of {n_pool}"
        )
    need_sources = any(m != "NoTransfer" for m in cfg.methods)
    s_pool = source_scores(source_models, pool.features) if need_sources else None
    s_test = source_scores(source_models, test.features) if need_sources else None
    need_shared = any(m in ("NoTransfer", "MA", "MKAL", "HL2L") for m in cfg.methods)

    cells: list[CellResult] = []
    for seed_index in range(len(cfg.seeds)):
        perm = _rng(cfg.base_seed, 2, tkey, seed_index).permutation(n_pool)
        for size_index, size in enumerate(sizes):
            idx = perm[:size]
            sub = pool.subset(idx)
            s_sub = s_pool[idx] if s_pool is not None else None
            cell_key = (3, tkey, seed_index, size_index)
            shared = None
            if need_shared:
                grid = dataclasses.replace(
                    cfg.grid, seed=_seed_int(cfg.base_seed, *cell_key, 2)
                )
                best, _ = select(sub, lssvm_fit_fn("gaussian"), grid)
                shared = {"C": best["C"], "gamma": best["gamma"]}
            for method in cfg.methods:
                try:
                    pred, params = _fit_eval_cell(
                        method, cfg, sub, s_sub, test, s_test, source_models, shared, cell_key
                    )
                except ValueError as exc:
                    raise ValueError(
                        f"{method} at size {size} (target {target.subject_id}, "
                        f"seed {seed_index}): {exc}"
                    ) from exc
                cm = confusion(pred, test.labels, pool.num_classes)
                cells.append(
                    CellResult(
                        target_id=target.subject_id,
                        seed_index=seed_index,
                        size=size,
                        method=method,
                        accuracy=float(np.mean(pred == test.labels)),
                        confusion=cm,
                        params=params,
                    )
                )
    return cells, warnings


def _target_job(args):
    return _run_target(*args)


def run_experiment(cfg: ExperimentConfig, subjects: list[SubjectData]) -> ExperimentResult:
    ids = [s.subject_id for s in subjects]
    if len(set(ids)) != len(ids):
        raise ValueError("subject ids must be unique")
    pairs = experiment_roles(cfg.experiment, subjects)
    need_sources = any(m != "NoTransfer" for m in cfg.methods)

    source_models: dict[str, LssvmModel] = {}
    if need_sources:
        needed = []
        for _, sources in pairs:
            for s in sources:
                if s.subject_id not in (x.subject_id for x in needed):
                    needed.append(s)
        if cfg.jobs > 1 and len(needed) > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
                models = list(ex.map(train_source_model, needed, [cfg] * len(needed)))
        else:
            models = [train_source_model(s, cfg) for s in needed]
        source_models = {s.subject_id: m for s, m in zip(needed, models)}

    jobs = [
        (cfg, target, [source_models[s.subject_id] for s in sources] if need_sources else [])
        for target, sources in pairs
    ]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            outcomes = list(ex.map(_target_job, jobs))
    else:
        outcomes = [_target_job(j) for j in jobs]

    cells: list[CellResult] = []
    warnings: list[str] = []
    for c, w in outcomes:
        cells.extend(c)
        warnings.extend(w)
    return ExperimentResult(
        config=cfg,
        subjects=[(s.subject_id, s.condition) for s in subjects],
        source_ids=sorted(source_models.keys()),
        cells=cells,
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# aggregation


def learning_curves(result: ExperimentResult) -> dict[str, LearningCurve]:
    """Mean/min/max accuracy over targets (per-target values averaged over seeds)."""
    curves: dict[str, LearningCurve] = {}
    for method in result.config.methods:
        mine = [c for c in result.cells if c.method == method]
        sizes = sorted({c.size for c in mine})
        mean, lo, hi = [], [], []
        for size in sizes:
            per_target: dict[str, list[float]] = {}
            for c in mine:
                if c.size == size:
                    per_target.setdefault(c.target_id, []).append(c.accuracy)
            vals = [float(np.mean(v)) for v in per_target.values()]
            mean.append(float(np.mean(vals)))
            lo.append(float(np.min(vals)))
            hi.append(float(np.max(vals)))
        raw = [(c.target_id, c.seed_index, c.size, c.accuracy) for c in mine]
        curves[method] = LearningCurve(method=method, sizes=sizes, mean=mean, lo=lo, hi=hi, raw=raw)
    return curves


def pooled_confusions(result: ExperimentResult) -> dict[tuple[str, int], ConfusionMatrix]:
    """Counts accumulated over targets and seeds, keyed by (method, size)."""
    pools: dict[tuple[str, int], np.ndarray] = {}
    for c in result.cells:
        key = (c.method, c.size)
        if key not in pools:
            pools[key] = np.zeros_like(c.confusion.counts)
        pools[key] += c.confusion.counts
    return {k: ConfusionMatrix(v) for k, v in sorted(pools.items())}


# ---------------------------------------------------------------------------
# file outputs


def _fmt(v: float) -> str:
    return repr(float(v))


def write_run_outputs(result: ExperimentResult, outdir: str | Path) -> list[Path]:
    """Write curves, raw accuracies, pooled confusions and a manifest."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    curves = learning_curves(result)
    path = outdir / "curves.csv"
    lines = ["method,size,mean,min,max"]
    for method in sorted(curves):
        cv = curves[method]
        for i, size in enumerate(cv.sizes):
            lines.append(f"{method},{size},{_fmt(cv.mean[i])},{_fmt(cv.lo[i])},{_fmt(cv.hi[i])}")
    path.write_text("\n".join(lines) + "\n")
    written.append(path)

    path = outdir / "accuracies.csv"
    lines = ["method,size,target,seed_index,accuracy"]
    for c in sorted(result.cells, key=lambda c: (c.method, c.size, c.target_id, c.seed_index)):
        lines.append(f"{c.method},{c.size},{c.target_id},{c.seed_index},{_fmt(c.accuracy)}")
    path.write_text("\n".join(lines) + "\n")
    written.append(path)

    for (method, size), cm in pooled_confusions(result).items():
        path = outdir / f"confusion_{method}_{size}.csv"
        g = cm.num_classes
        lines = ["pred\\true," + ",".join(str(c) for c in range(g))]
        for r in range(g):
            lines.append(f"{r}," + ",".join(str(int(v)) for v in cm.counts[r]))
        path.write_text("\n".join(lines) + "\n")
        written.append(path)

    manifest = {
        "config": dataclasses.asdict(result.config),
        "subjects": [{"subject_id": i, "condition": c} for i, c in result.subjects],
        "source_models_trained": result.source_ids,
        "warnings": result.warnings,
    }
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    written.append(path)
    return written


def load_confusion_csv(path: str | Path) -> ConfusionMatrix:
    lines = Path(path).read_text().strip().split("\n")
    rows = [[int(v) for v in line.split(",")[1:]] for line in lines[1:]]
    return ConfusionMatrix(np.array(rows, dtype=np.int64))
