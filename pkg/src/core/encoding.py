"""
Board -> network input tensor, and the policy/auxiliary/value labels.

Tensor layout is channel x rank x file (rank 0 is the first rank):
  0-5   white pawn, knight, bishop, rook, queen, king
  6-11  black pawn, knight, bishop, rook, queen, king
  12    side to move (all ones for white)
  13-16 castling rights: white king side, white queen side, black king side, black queen side
  17    en passant target
Auxiliary vector order: legal moves, piece moved, piece captured, from square,
to square, gives check.
"""

from dataclasses import dataclass
from typing import Iterable, List, Tuple

import numpy as np

from .board import WHITE, Board, Move, captured_piece, generate_legal_moves, gives_check, parse_fen, square_file, square_rank
from .exceptions import EncodingError, IllegalMoveError
from .models import TrainingExample
from .vocabulary import VOCAB_SIZE, move_to_index, normalize_promotion

INPUT_CHANNELS = 18
SIDE_TO_MOVE_CHANNEL = 12
CASTLING_CHANNEL = 13
EN_PASSANT_CHANNEL = 17

PIECE_KINDS = 6
AUX_LEGAL = slice(0, VOCAB_SIZE)
AUX_MOVED = slice(VOCAB_SIZE, VOCAB_SIZE + 6)
AUX_CAPTURED = slice(VOCAB_SIZE + 6, VOCAB_SIZE + 12)
AUX_FROM = slice(VOCAB_SIZE + 12, VOCAB_SIZE + 76)
AUX_TO = slice(VOCAB_SIZE + 76, VOCAB_SIZE + 140)
AUX_CHECK = VOCAB_SIZE + 140
AUX_DIM = VOCAB_SIZE + 141


def _require_white(board: Board) -> None:
    if board.turn != WHITE:
        raise EncodingError("position must have white to move; mirror black-to-move positions first")


def encode_position(board: Board) -> np.ndarray:
    _require_white(board)
    tensor = np.zeros((INPUT_CHANNELS, 8, 8), dtype=np.float32)
    for sq, piece in board.pieces():
        channel = piece - 1 if piece > 0 else PIECE_KINDS - piece - 1
        tensor[channel, square_rank(sq), square_file(sq)] = 1.0
    tensor[SIDE_TO_MOVE_CHANNEL] = 1.0
    for offset, allowed in enumerate(board.castling):
        if allowed:
            tensor[CASTLING_CHANNEL + offset] = 1.0
    if board.ep_square is not None:
        tensor[EN_PASSANT_CHANNEL, square_rank(board.ep_square), square_file(board.ep_square)] = 1.0
    return tensor


def legal_move_mask(board: Board) -> np.ndarray:
    """Boolean vector over the vocabulary, True for legal moves"""
    mask = np.zeros(VOCAB_SIZE, dtype=bool)
    for move in generate_legal_moves(board):
        mask[move_to_index(move)] = True
    return mask


@dataclass
class AuxLabels:
    legal_moves: np.ndarray
    piece_moved: np.ndarray
    piece_captured: np.ndarray
    from_square: np.ndarray
    to_square: np.ndarray
    is_check: float

    def vector(self) -> np.ndarray:
        return np.concatenate([
            self.legal_moves, self.piece_moved, self.piece_captured,
            self.from_square, self.to_square, np.array([self.is_check], dtype=np.float32),
        ]).astype(np.float32)


def build_labels(board: Board, played: Move, outcome: int) -> Tuple[int, AuxLabels, float]:
    """
    Policy index, auxiliary labels and value target for a played move

    Raises:
        IllegalMoveError: The move is not legal in the position
    """
    _require_white(board)
    legal = generate_legal_moves(board)
    if played not in legal:
        raise IllegalMoveError(played.uci(), f"not legal in {board.to_fen()}")

    legal_vector = np.zeros(VOCAB_SIZE, dtype=np.float32)
    for move in legal:
        legal_vector[move_to_index(move)] = 1.0
    moved = np.zeros(PIECE_KINDS, dtype=np.float32)
    moved[abs(board.piece_at(played.from_square)) - 1] = 1.0
    captured = np.zeros(PIECE_KINDS, dtype=np.float32)
    victim = captured_piece(board, played)
    if victim:
        captured[abs(victim) - 1] = 1.0
    from_square = np.zeros(64, dtype=np.float32)
    from_square[played.from_square] = 1.0
    to_square = np.zeros(64, dtype=np.float32)
    to_square[played.to_square] = 1.0

    aux = AuxLabels(legal_vector, moved, captured, from_square, to_square,
                    1.0 if gives_check(board, played) else 0.0)
    return move_to_index(normalize_promotion(played)), aux, float(outcome)


@dataclass
class EncodedExample:
    x: np.ndarray
    active: int
    opponent: int
    policy: int
    aux: np.ndarray
    value: float


def encode_example(example: TrainingExample) -> EncodedExample:
    board = parse_fen(example.fen)
    policy, aux, value = build_labels(board, Move.from_uci(example.move), example.outcome)
    return EncodedExample(encode_position(board), example.active_bucket, example.opponent_bucket,
                          policy, aux.vector(), value)


@dataclass
class EncodedBatch:
    """Column-stacked encoded examples"""
    x: np.ndarray
    active: np.ndarray
    opponent: np.ndarray
    policy: np.ndarray
    aux: np.ndarray
    value: np.ndarray

    def __len__(self) -> int:
        return len(self.policy)

    def take(self, indices) -> "EncodedBatch":
        return EncodedBatch(self.x[indices], self.active[indices], self.opponent[indices],
                            self.policy[indices], self.aux[indices], self.value[indices])


def stack_examples(examples: Iterable[EncodedExample]) -> EncodedBatch:
    items: List[EncodedExample] = list(examples)
    if not items:
        raise EncodingError("cannot stack an empty example list")
    return EncodedBatch(
        x=np.stack([e.x for e in items]),
        active=np.array([e.active for e in items], dtype=np.int64),
        opponent=np.array([e.opponent for e in items], dtype=np.int64),
        policy=np.array([e.policy for e in items], dtype=np.int64),
        aux=np.stack([e.aux for e in items]),
        value=np.array([e.value for e in items], dtype=np.float32),
    )
