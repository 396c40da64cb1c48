import numpy as np
import pytest

from src.core.concepts import BINARY, CONTINUOUS
from src.core.config import ProbeConfig
from src.core.exceptions import ProbeError
from src.core.probing import downsample_majority, fit_probe


@pytest.fixture
def features():
    return np.random.default_rng(0).normal(size=(500, 12))


def test_linear_concept_is_recovered(features):
    labels = 2.0 * features[:, 0] - features[:, 3] + 0.5
    fit = fit_probe(features, labels, CONTINUOUS)
    assert fit.metric == "r2"
    assert fit.score > 0.99
    assert fit.regularization is not None
    assert fit.train_size == 400 and fit.test_size == 100


def test_threshold_concept_is_recovered(features):
    features = features[np.abs(features[:, 2]) > 0.2]
    labels = (features[:, 2] > 0).astype(int)
    fit = fit_probe(features, labels, BINARY)
    assert fit.metric == "macro_f1"
    assert fit.score > 0.99


def test_independent_labels_score_near_zero(features):
    labels = np.random.default_rng(1).normal(size=len(features))
    assert fit_probe(features, labels, CONTINUOUS).score <= 0.05


def test_imbalanced_binary_labels_are_downsampled(features):
    labels = (features[:, 5] > 1.0).astype(int)
    fit = fit_probe(features, labels, BINARY, ProbeConfig(seed=4))
    assert fit.train_size % 2 == 0 and fit.train_size < 400
    assert fit.test_size == 100
    assert 0.0 <= fit.score <= 1.0


def test_downsample_majority():
    labels = np.array([0] * 10 + [1] * 3)
    keep = downsample_majority(labels, np.random.default_rng(0))
    assert len(keep) == 6
    assert np.sum(labels[keep]) == 3
    assert np.all(np.diff(keep) > 0)


def test_degenerate_labels(features):
    with pytest.raises(ProbeError):
        fit_probe(features, np.ones(len(features)), CONTINUOUS)
    with pytest.raises(ProbeError):
        fit_probe(features, np.zeros(len(features)), BINARY)
    with pytest.raises(ProbeError):
        fit_probe(features, np.zeros(len(features)), "ordinal")
