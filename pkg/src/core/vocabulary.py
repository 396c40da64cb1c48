"""
Fixed move vocabulary of the policy head.

Plain moves use from * 64 + to (queen promotions included). Under-promotions
from the seventh to the eighth rank (white perspective) take the 72 slots
after 4096.
"""

from .board import BISHOP, KNIGHT, QUEEN, ROOK, Move, square, square_file, square_rank
from .exceptions import MoveIndexError

PLAIN_MOVES = 64 * 64
UNDERPROMOTION_KINDS = (KNIGHT, BISHOP, ROOK)
VOCAB_SIZE = PLAIN_MOVES + len(UNDERPROMOTION_KINDS) * 8 * 3


def move_to_index(move: Move) -> int:
    if move.promotion is None or move.promotion == QUEEN:
        return move.from_square * 64 + move.to_square

    if square_rank(move.from_square) != 6 or square_rank(move.to_square) != 7:
        raise MoveIndexError(f"under-promotion {move.uci()} is not a seventh-to-eighth rank move")
    from_file = square_file(move.from_square)
    delta = square_file(move.to_square) - from_file
    if delta not in (-1, 0, 1):
        raise MoveIndexError(f"under-promotion {move.uci()} changes more than one file")
    piece_index = UNDERPROMOTION_KINDS.index(move.promotion)
    return PLAIN_MOVES + piece_index * 24 + from_file * 3 + (delta + 1)


def index_to_move(index: int) -> Move:
    """Inverse of move_to_index; plain indices decode without a promotion"""
    if not 0 <= index < VOCAB_SIZE:
        raise MoveIndexError(f"move index {index} outside [0, {VOCAB_SIZE})")
    if index < PLAIN_MOVES:
        return Move(index // 64, index % 64)
    offset = index - PLAIN_MOVES
    piece_index, rest = divmod(offset, 24)
    from_file, delta = divmod(rest, 3)
    to_file = from_file + delta - 1
    if not 0 <= to_file < 8:
        raise MoveIndexError(f"move index {index} does not name a square on the board")
    return Move(square(from_file, 6), square(to_file, 7), UNDERPROMOTION_KINDS[piece_index])


def normalize_promotion(move: Move) -> Move:
    """Drop queen promotions to the plain form the vocabulary stores"""
    if move.promotion == QUEEN:
        return Move(move.from_square, move.to_square)
    return move
