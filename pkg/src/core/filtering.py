"""Game and position filters, rating bucketing and example extraction."""

import logging
from typing import List, Optional

from .board import WHITE, Board, Move, apply_move, mirror, mirror_move, starting_board
from .config import TABLE_LAYOUT, BucketLayout, FilterConfig
from .exceptions import IllegalMoveError
from .models import FilterDecision, GameRecord, Tally, TrainingExample

logger = logging.getLogger(__name__)

NOT_RAPID = "not_rapid"
NO_CLOCK = "no_clock"

_SPEED_NAMES = ("bullet", "blitz", "rapid", "classical", "correspondence")

# Estimated duration (base + 40 * increment) bounds for a rapid game, seconds
RAPID_MIN_SECONDS = 480
RAPID_MAX_SECONDS = 1500


def bucket_of(rating: int, layout: BucketLayout = TABLE_LAYOUT) -> int:
    return layout.bucket_of(rating)


def is_rapid(game: GameRecord) -> bool:
    """Event header first; estimated duration when the header names no speed"""
    event = game.event.lower()
    if any(name in event for name in _SPEED_NAMES):
        return "rapid" in event
    if game.time_control is None:
        return False
    base, increment = game.time_control
    return RAPID_MIN_SECONDS <= base + 40 * increment < RAPID_MAX_SECONDS


def filter_game(game: GameRecord, config: FilterConfig) -> FilterDecision:
    if config.require_rapid and not is_rapid(game):
        return FilterDecision(False, NOT_RAPID)
    if not game.has_clock:
        return FilterDecision(False, NO_CLOCK)
    return FilterDecision(True)


def extract_examples(game: GameRecord, config: FilterConfig,
                     layout: BucketLayout = TABLE_LAYOUT,
                     tally: Optional[Tally] = None) -> List[TrainingExample]:
    """
    Replay a game and emit one example per position that passes the ply and clock filters

    Ply is the 0-based half-move index of the position. A position counts
    only while both players' most recent clocks (time-control base before the
    first report) are at or above the threshold. Black-to-move positions are
    mirrored so the active player is always white.

    Args:
        game: An accepted game
        config: Ply and clock thresholds
        layout: Rating bucket layout
        tally: Receives "illegal_move" and "examples" counts

    Returns:
        Examples in game order
    """
    tally = tally if tally is not None else Tally()
    white_bucket = layout.bucket_of(game.white_elo)
    black_bucket = layout.bucket_of(game.black_elo)
    base = game.time_control[0] if game.time_control else None
    clocks = {WHITE: base, not WHITE: base}

    board = starting_board()
    examples = []
    for ply, record in enumerate(game.moves):
        if ply > config.max_ply:
            break
        try:
            move = Move.from_uci(record.uci)
            following = apply_move(board, move)
        except (IllegalMoveError, ValueError) as e:
            logger.debug(f"Dropping rest of game {game.site or '?'} at ply {ply}: {e}")
            tally["illegal_move"] += 1
            break

        if ply >= config.min_ply and all(c is not None and c >= config.min_clock_seconds
                                         for c in clocks.values()):
            examples.append(_example(board, move, ply, game.result, white_bucket, black_bucket))

        mover = board.turn
        board = following
        if record.clock is not None:
            clocks[mover] = record.clock

    tally["examples"] += len(examples)
    return examples


def _example(board: Board, move: Move, ply: int, result: int,
             white_bucket: int, black_bucket: int) -> TrainingExample:
    if board.turn == WHITE:
        return TrainingExample(board.to_fen(), move.uci(), white_bucket, black_bucket, result, ply)
    return TrainingExample(mirror(board).to_fen(), mirror_move(move).uci(),
                           black_bucket, white_bucket, -result, ply)
