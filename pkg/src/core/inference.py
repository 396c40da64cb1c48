from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from .board import PAWN, QUEEN, WHITE, Board, Move, mirror, mirror_move
from .encoding import encode_position, legal_move_mask
from .exceptions import ModelError
from .network import SkillAwareNet
from .vocabulary import index_to_move, move_to_index, normalize_promotion


@dataclass
class Prediction:
    """Legal-move distribution in the caller's orientation, best first"""
    moves: List[Tuple[Move, float]]
    win_prob: float

    def top(self, k: int) -> List[Tuple[Move, float]]:
        return self.moves[:k]

    def probability(self, move: Move) -> float:
        move = normalize_promotion(move)
        for candidate, prob in self.moves:
            if normalize_promotion(candidate) == move:
                return prob
        return 0.0


def masked_distribution(logits: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    """Softmax restricted to the legal entries of each row; illegal entries get exactly 0"""
    if not bool(masks.any(dim=-1).all()):
        raise ModelError("no legal moves: terminal position")
    masked = logits.to(torch.float64).masked_fill(~masks, float("-inf"))
    return torch.softmax(masked, dim=-1)


@torch.no_grad()
def predict_batch(model: SkillAwareNet, positions: np.ndarray, masks: np.ndarray,
                  active: Sequence[int], opponent: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Legal-masked move distributions for encoded white-to-move positions

    Returns:
        (probabilities of shape batch x vocab, win probabilities of shape batch)
    """
    dtype = next(model.parameters()).dtype
    output = model(torch.as_tensor(positions, dtype=dtype),
                   torch.as_tensor(np.asarray(active), dtype=torch.long),
                   torch.as_tensor(np.asarray(opponent), dtype=torch.long))
    probs = masked_distribution(output.policy_logits, torch.as_tensor(masks, dtype=torch.bool))
    return probs.numpy(), output.win_prob().to(torch.float64).numpy()


def orient(board: Board) -> Tuple[Board, bool]:
    if board.turn == WHITE:
        return board, False
    return mirror(board), True


def predict(model: SkillAwareNet, board: Board, active: int, opponent: int) -> Prediction:
    """
    Move distribution over the legal moves of a position

    Black-to-move positions are mirrored before encoding and the moves are
    mirrored back, so callers always see moves of the real side to move.
    """
    oriented, flipped = orient(board)
    mask = legal_move_mask(oriented)
    if not mask.any():
        raise ModelError(f"no legal moves in {board.to_fen()}: terminal position")
    probs, win = predict_batch(model, encode_position(oriented)[None], mask[None], [active], [opponent])
    moves = []
    for index in np.flatnonzero(mask):
        move = legal_move_for_index(oriented, int(index))
        moves.append((mirror_move(move) if flipped else move, float(probs[0, index])))
    moves.sort(key=lambda item: (-item[1], item[0].uci()))
    return Prediction(moves, float(win[0]))


def legal_move_for_index(board: Board, index: int) -> Move:
    move = index_to_move(index)
    if move.promotion is None and abs(board.piece_at(move.from_square)) == PAWN and move.to_square >= 56:
        return Move(move.from_square, move.to_square, QUEEN)
    return move


@torch.no_grad()
def sweep_skills(model: SkillAwareNet, board: Board, opponent: Optional[int] = None) -> np.ndarray:
    """
    Probability table with one row per active bucket

    Args:
        model: The network
        board: Position; black-to-move positions are mirrored first
        opponent: Fixed opponent bucket; None pairs each active bucket with itself

    Returns:
        Array of shape n_buckets x vocab, each row a legal-move distribution
        indexed in the (mirrored) white-to-move vocabulary
    """
    oriented, _ = orient(board)
    mask = legal_move_mask(oriented)
    if not mask.any():
        raise ModelError(f"no legal moves in {board.to_fen()}: terminal position")
    n = model.config.n_buckets
    buckets = list(range(n))
    opponents = buckets if opponent is None else [opponent] * n
    x = np.repeat(encode_position(oriented)[None], n, axis=0)
    probs, _ = predict_batch(model, x, np.repeat(mask[None], n, axis=0), buckets, opponents)
    return probs


def oriented_move_index(board: Board, move: Move) -> int:
    """Vocabulary index of a real move after orienting the position to white"""
    return move_to_index(normalize_promotion(mirror_move(move) if board.turn != WHITE else move))
