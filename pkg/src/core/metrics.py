"""
Pure evaluation metrics over prediction tables.

Nothing here touches a model or an engine; the evaluation service feeds in
probabilities, argmaxes and engine verdicts.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import TABLE_LAYOUT, BucketLayout
from .models import CalibrationBins, SmoothnessStats
from .winrate import QUALITY_BANDS, quality_band

SKILLED = "skilled"
ADVANCED = "advanced"
MASTER = "master"
SKILL_GROUPS = (SKILLED, ADVANCED, MASTER)

# Buckets swept for smoothness: 1100 .. 1900 in the default layout
SMOOTHNESS_BUCKETS = tuple(range(1, 10))


def skill_group(rating: int) -> str:
    if rating < 1600:
        return SKILLED
    if rating < 2000:
        return ADVANCED
    return MASTER


def bucket_group(bucket: int, layout: BucketLayout = TABLE_LAYOUT) -> str:
    """
    Skill group of a bucket, judged by the lowest rating it holds

    In the right-inclusive embedding layout the 1501-1600 and 1901-2000
    buckets each hold one rating of the next group up; both stay with the
    lower group.
    """
    if bucket == 0:
        return SKILLED
    lowest = layout.edges[bucket - 1] + (1 if layout.right_inclusive else 0)
    return skill_group(lowest)


@dataclass
class AccuracyReport:
    """Top-1 accuracy in percent per skill group; absent groups are None"""
    per_group: Dict[str, Optional[float]]
    counts: Dict[str, int]
    macro: Optional[float]


def accuracy_report(correct: Sequence[bool], groups: Sequence[str]) -> AccuracyReport:
    per_group: Dict[str, Optional[float]] = {}
    counts: Dict[str, int] = {}
    for group in SKILL_GROUPS:
        hits = [bool(c) for c, g in zip(correct, groups) if g == group]
        counts[group] = len(hits)
        per_group[group] = 100.0 * sum(hits) / len(hits) if hits else None
    present = [value for value in per_group.values() if value is not None]
    macro = sum(present) / len(present) if present else None
    return AccuracyReport(per_group, counts, macro)


def perplexity(played_probs: Sequence[float]) -> float:
    """exp of the mean negative log-likelihood of the played moves"""
    probs = np.asarray(played_probs, dtype=np.float64)
    if probs.size == 0:
        raise ValueError("perplexity of an empty set")
    return float(np.exp(-np.mean(np.log(probs))))


def cross_entropy_bits(played_probs: Sequence[float]) -> float:
    probs = np.asarray(played_probs, dtype=np.float64)
    if probs.size == 0:
        raise ValueError("cross-entropy of an empty set")
    return float(-np.mean(np.log2(probs)))


def perplexity_by_group(played_probs: Sequence[float], groups: Sequence[str]) -> Dict[str, Optional[float]]:
    result: Dict[str, Optional[float]] = {}
    for group in SKILL_GROUPS:
        selected = [p for p, g in zip(played_probs, groups) if g == group]
        result[group] = perplexity(selected) if selected else None
    return result


def is_monotonic(probs: Sequence[float], epsilon: float = 0.0) -> bool:
    """Strictly increasing by more than epsilon at every step"""
    return all(b - a > epsilon for a, b in zip(probs, probs[1:]))


def is_transitional(argmax_optimal: Sequence[bool]) -> bool:
    """Suboptimal for a non-empty prefix, optimal for the whole non-empty rest"""
    flags = [bool(flag) for flag in argmax_optimal]
    if not flags or flags[0] or not flags[-1]:
        return False
    first = flags.index(True)
    return all(flags[first:])


def smoothness_stats(optimal_probs: Sequence[Sequence[float]],
                     argmax_optimal: Sequence[Sequence[bool]],
                     epsilon: float = 0.0, skipped: int = 0) -> SmoothnessStats:
    """
    Share of monotonic and transitional positions, in percent

    Args:
        optimal_probs: Per position, the optimal move's probability at each sweep point
        argmax_optimal: Per position, whether the argmax is the optimal move at each sweep point
        epsilon: Minimum step for the monotonic test
        skipped: Positions left out upstream (terminal, engine failure)
    """
    total = len(optimal_probs)
    if total == 0:
        return SmoothnessStats(0.0, 0.0, 0, skipped)
    monotonic = sum(is_monotonic(list(p), epsilon) for p in optimal_probs)
    transitional = sum(is_transitional(flags) for flags in argmax_optimal)
    return SmoothnessStats(100.0 * monotonic / total, 100.0 * transitional / total, total, skipped)


def cross_skill_matrix(correct: Sequence[bool], active: Sequence[int], opponent: Sequence[int],
                       n_buckets: int, min_count: int = 1) -> List[List[Optional[float]]]:
    """Accuracy per (active, opponent) cell; cells under min_count are None"""
    hits = np.zeros((n_buckets, n_buckets))
    totals = np.zeros((n_buckets, n_buckets), dtype=np.int64)
    for c, a, o in zip(correct, active, opponent):
        totals[a, o] += 1
        hits[a, o] += bool(c)
    return [[float(hits[a, o] / totals[a, o]) if totals[a, o] >= max(min_count, 1) else None
             for o in range(n_buckets)] for a in range(n_buckets)]


def agreement_matrix(argmaxes: np.ndarray) -> np.ndarray:
    """
    Fraction of identical argmax moves between every pair of skill settings

    Args:
        argmaxes: Array of shape (settings, positions), or (groups, settings, positions)
            to pool the agreement over several fixed buckets

    Returns:
        settings x settings matrix with an exact unit diagonal
    """
    table = np.asarray(argmaxes)
    if table.ndim == 2:
        table = table[None]
    n = table.shape[1]
    matrix = np.ones((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                matrix[i, j] = float(np.mean(table[:, i, :] == table[:, j, :]))
    return matrix


def calibration_bins(win_probs: Sequence[float], outcomes: Sequence[float], n_bins: int = 100) -> CalibrationBins:
    """
    Bin predicted win probabilities uniformly on [0, 1] against realised scores

    Bin k covers [k/n, (k+1)/n); the last bin also takes 1.0. Outcomes are
    scores for the predicted side: 1 win, 0.5 draw, 0 loss.
    """
    preds = np.asarray(win_probs, dtype=np.float64)
    scores = np.asarray(outcomes, dtype=np.float64)
    index = np.minimum((preds * n_bins).astype(np.int64), n_bins - 1)
    counts = np.bincount(index, minlength=n_bins)
    pred_sum = np.bincount(index, weights=preds, minlength=n_bins)
    score_sum = np.bincount(index, weights=scores, minlength=n_bins)
    mean_predicted: List[Optional[float]] = []
    mean_empirical: List[Optional[float]] = []
    for k in range(n_bins):
        if counts[k]:
            mean_predicted.append(float(pred_sum[k] / counts[k]))
            mean_empirical.append(float(score_sum[k] / counts[k]))
        else:
            mean_predicted.append(None)
            mean_empirical.append(None)
    edges = [k / n_bins for k in range(n_bins + 1)]
    return CalibrationBins(edges, [int(c) for c in counts], mean_predicted, mean_empirical)


def outcome_score(outcome: int) -> float:
    """Value label (+1/0/-1) to a game score (1/0.5/0)"""
    return (outcome + 1) / 2.0


def accuracy_by_band(correct: Sequence[bool], losses: Sequence[float]) -> Dict[str, Optional[float]]:
    buckets: Dict[str, List[bool]] = {band: [] for band in QUALITY_BANDS}
    for c, loss in zip(correct, losses):
        buckets[quality_band(loss)].append(bool(c))
    return {band: (sum(v) / len(v) if v else None) for band, v in buckets.items()}


def accuracy_by_loss(correct: Sequence[bool], losses: Sequence[float], max_loss: int = 30) -> List[Optional[float]]:
    """Accuracy per 1-point win-rate-loss bin [k, k+1); losses <= 0 go to bin 0, the last bin is open"""
    hits = [0] * max_loss
    totals = [0] * max_loss
    for c, loss in zip(correct, losses):
        k = min(max(int(math.floor(loss)), 0), max_loss - 1)
        totals[k] += 1
        hits[k] += bool(c)
    return [h / t if t else None for h, t in zip(hits, totals)]


@dataclass
class ModelComparison:
    """How two models rate the played moves"""
    fraction_first_more_confident: Optional[float]
    mean_log_odds_ratio: Optional[float]
    examples: int
    by_band: Dict[str, Dict[str, Optional[float]]] = field(default_factory=dict)


def _log_odds(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 1e-12, 1 - 1e-12)
    return np.log(p) - np.log1p(-p)


def _compare(first: np.ndarray, second: np.ndarray) -> Dict[str, Optional[float]]:
    if first.size == 0:
        return {"fraction_first_more_confident": None, "mean_log_odds_ratio": None}
    return {
        "fraction_first_more_confident": float(np.mean(first > second)),
        "mean_log_odds_ratio": float(np.mean(_log_odds(first) - _log_odds(second))),
    }


def compare_models(first_probs: Sequence[float], second_probs: Sequence[float],
                   losses: Optional[Sequence[float]] = None) -> ModelComparison:
    """
    Compare the probability two models give to the played moves

    Args:
        first_probs: First model's probability of each played move
        second_probs: Second model's probability of each played move
        losses: Optional win-rate loss of each played move, for a per-band split
    """
    first = np.asarray(first_probs, dtype=np.float64)
    second = np.asarray(second_probs, dtype=np.float64)
    overall = _compare(first, second)
    by_band: Dict[str, Dict[str, Optional[float]]] = {}
    if losses is not None:
        bands = np.array([quality_band(loss) for loss in losses], dtype=object)
        for band in QUALITY_BANDS:
            selected = bands == band
            by_band[band] = _compare(first[selected], second[selected])
    return ModelComparison(overall["fraction_first_more_confident"], overall["mean_log_odds_ratio"],
                           int(first.size), by_band)
