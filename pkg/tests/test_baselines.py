"""No Transfer and Prior Features baselines."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from emgadapt import lssvm
from emgadapt.baselines import fit_no_transfer, fit_prior_features, prior_feature_matrix
from emgadapt.kernels import KernelSpec
from emgadapt.model_selection import Grid
from emgadapt.multi_adapt import source_scores
from emgadapt.signals import Dataset


def _blobs(rng, n_per=20, spread=0.3, centers=((0, 0), (4, 0), (0, 4))):
    feats = np.concatenate(
        [np.asarray(c, dtype=float) + spread * rng.normal(size=(n_per, 2)) for c in centers]
    )
    labels = np.repeat(np.arange(len(centers)), n_per)
    return Dataset(
        features=feats, labels=labels, num_classes=len(centers), feature_names=["x", "y"]
    )


GRID = Grid(C_values=(0.1, 1.0, 10.0, 100.0), gamma_values=(0.1, 1.0), folds=3)


def test_no_transfer_learns_separable_blobs():
    rng = np.random.default_rng(0)
    train = _blobs(rng)
    test = _blobs(rng)
    model = fit_no_transfer(train, GRID)
    pred, _ = lssvm.predict(model, test.features)
    assert np.mean(pred == test.labels) >= 0.95
    assert model.kernel.kind == "gaussian"


def test_prior_feature_matrix_layout():
    scores = np.arange(12.0).reshape(2, 2, 3)  # N=2, K=2, G=3
    flat = prior_feature_matrix(scores)
    assert flat.shape == (2, 6)
    # row 0 = source 1 scores then source 2 scores
    assert_allclose(flat[0], [0, 1, 2, 3, 4, 5])


def test_prior_features_uses_source_scores_only():
    rng = np.random.default_rng(4)
    src_train = _blobs(rng, n_per=30)
    sources = [
        lssvm.fit(src_train, KernelSpec("gaussian", 1.0), 10.0),
        lssvm.fit(_blobs(rng, n_per=30), KernelSpec("gaussian", 1.0), 10.0),
    ]
    target_train = _blobs(rng, n_per=15)
    target_test = _blobs(rng, n_per=15)
    model = fit_prior_features(target_train, sources, GRID)
    assert model.kernel.kind == "linear"
    assert model.norm_stats is not None
    # the machine lives in stacked score space: K * G inputs
    assert model.support_inputs.shape[1] == len(sources) * 3
    pred, _ = lssvm.predict(model, prior_feature_matrix(source_scores(sources, target_test.features)))
    # sources match the target distribution here, so this should be easy
    assert np.mean(pred == target_test.labels) >= 0.9


def test_prior_features_requires_sources():
    rng = np.random.default_rng(1)
    with pytest.raises(ValueError):
        fit_prior_features(_blobs(rng), [], GRID)


def test_prior_features_normalization_is_train_statistics():
    rng = np.random.default_rng(9)
    train = _blobs(rng, n_per=12)
    source = lssvm.fit(_blobs(rng, n_per=20), KernelSpec("gaussian", 1.0), 10.0)
    model = fit_prior_features(train, [source], GRID)
    flat = prior_feature_matrix(source_scores([source], train.features))
    assert_allclose(model.norm_stats.mean, flat.mean(axis=0), atol=1e-12)
    assert_allclose(model.norm_stats.std, flat.std(axis=0), atol=1e-12)
