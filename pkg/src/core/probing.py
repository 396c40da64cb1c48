"""Linear concept probes: L1 regression for continuous concepts, logistic for binary ones."""

import logging
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
from sklearn.linear_model import LassoCV, LogisticRegression, LogisticRegressionCV
from sklearn.metrics import f1_score, r2_score
from sklearn.model_selection import KFold, StratifiedKFold, train_test_split

from .concepts import BINARY, CONTINUOUS
from .config import ProbeConfig
from .exceptions import ProbeError

logger = logging.getLogger(__name__)


@dataclass
class ProbeFit:
    score: float
    metric: str
    regularization: Optional[float]
    estimator: Any
    train_size: int
    test_size: int


def downsample_majority(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices of a class-balanced subset: every class cut to the minority count"""
    classes, counts = np.unique(labels, return_counts=True)
    keep = counts.min()
    chosen = [rng.choice(np.flatnonzero(labels == c), size=keep, replace=False) for c in classes]
    return np.sort(np.concatenate(chosen))


def _alphas(config: ProbeConfig) -> np.ndarray:
    return np.logspace(np.log10(config.alpha_min), np.log10(config.alpha_max), config.alpha_count)


def fit_probe(features: np.ndarray, labels: np.ndarray, kind: str,
              config: Optional[ProbeConfig] = None) -> ProbeFit:
    """
    Fit and score one linear probe on a held-out split

    Raises:
        ProbeError: Constant continuous labels or a single binary class
    """
    config = config or ProbeConfig()
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if kind == CONTINUOUS:
        return _fit_continuous(x, y, config)
    if kind == BINARY:
        return _fit_binary(x, y.astype(np.int64), config)
    raise ProbeError(f"unknown probe kind {kind!r}")


def _fit_continuous(x: np.ndarray, y: np.ndarray, config: ProbeConfig) -> ProbeFit:
    if np.ptp(y) == 0:
        raise ProbeError("continuous labels are constant")
    x_train, x_test, y_train, y_test = train_test_split(
        x, y, test_size=config.test_fraction, random_state=config.seed)
    folds = KFold(n_splits=config.cv_folds, shuffle=True, random_state=config.seed)
    model = LassoCV(alphas=_alphas(config), cv=folds, max_iter=20000, random_state=config.seed)
    model.fit(x_train, y_train)
    score = float(r2_score(y_test, model.predict(x_test)))
    logger.debug(f"Lasso probe alpha={model.alpha_:.3g} r2={score:.4f}")
    return ProbeFit(score, "r2", float(model.alpha_), model, len(y_train), len(y_test))


def _fit_binary(x: np.ndarray, y: np.ndarray, config: ProbeConfig) -> ProbeFit:
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise ProbeError("binary labels hold a single class")
    stratify = y if counts.min() >= 2 else None
    x_train, x_test, y_train, y_test = train_test_split(
        x, y, test_size=config.test_fraction, random_state=config.seed, stratify=stratify)
    if len(np.unique(y_train)) < 2:
        raise ProbeError("training split holds a single class")

    rng = np.random.default_rng(config.seed)
    keep = downsample_majority(y_train, rng)
    x_train, y_train = x_train[keep], y_train[keep]

    if len(y_train) // len(classes) >= config.cv_folds:
        folds = StratifiedKFold(n_splits=config.cv_folds, shuffle=True, random_state=config.seed)
        model = LogisticRegressionCV(Cs=1.0 / _alphas(config), cv=folds, scoring="f1_macro",
                                     max_iter=5000, random_state=config.seed)
        model.fit(x_train, y_train)
        regularization = float(1.0 / model.C_[0])
    else:
        model = LogisticRegression(max_iter=5000, random_state=config.seed)
        model.fit(x_train, y_train)
        regularization = 1.0
    score = float(f1_score(y_test, model.predict(x_test), average="macro"))
    return ProbeFit(score, "macro_f1", regularization, model, len(y_train), len(y_test))
