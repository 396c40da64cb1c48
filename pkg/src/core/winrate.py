"""Centipawn -> win-rate conversion and move-quality classification."""

import math
from typing import Optional

from .models import EngineEval

WINRATE_SLOPE = 0.00368208
MATE_CP = EngineEval.MATE_CP

BLUNDER_THRESHOLD = 10.0
ERROR_THRESHOLD = 5.0

OPTIMAL = "optimal"
GOOD = "good"
ERROR = "error"
BLUNDER = "blunder"
QUALITY_BANDS = (OPTIMAL, GOOD, ERROR, BLUNDER)


def cp_to_winrate(cp: float) -> float:
    """Win percentage in [0, 100] for the side the score belongs to"""
    return 50.0 + 50.0 * (2.0 / (1.0 + math.exp(-WINRATE_SLOPE * cp)) - 1.0)


def eval_to_winrate(evaluation: EngineEval) -> float:
    return cp_to_winrate(evaluation.cp_equivalent())


def winrate_loss(before: EngineEval, after: EngineEval, played: Optional[str] = None) -> float:
    """
    Mover's win-rate drop, in percentage points, from playing a move

    Args:
        before: Evaluation of the position before the move (mover's view)
        after: Evaluation of the position after the move (opponent's view)
        played: The played move in UCI; the engine's own best move loses nothing

    Returns:
        Win-rate loss; negative when the move beats the engine's estimate
    """
    if played is not None and played == before.best_move:
        return 0.0
    return eval_to_winrate(before) - (100.0 - eval_to_winrate(after))


def centipawn_loss(before: EngineEval, after: EngineEval, played: Optional[str] = None) -> int:
    if played is not None and played == before.best_move:
        return 0
    return max(0, before.cp_equivalent() + after.cp_equivalent())


def is_blunder(loss: float) -> bool:
    return loss >= BLUNDER_THRESHOLD


def quality_band(loss: float) -> str:
    if loss <= 0:
        return OPTIMAL
    if loss < ERROR_THRESHOLD:
        return GOOD
    if loss < BLUNDER_THRESHOLD:
        return ERROR
    return BLUNDER
