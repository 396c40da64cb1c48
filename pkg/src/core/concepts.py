import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

from .board import BISHOP, KNIGHT, PAWN, QUEEN, ROOK, WHITE, Board, captured_piece, generate_legal_moves, parse_square
from .exceptions import ConceptError

logger = logging.getLogger(__name__)

BINARY = "binary"
CONTINUOUS = "continuous"

PIECE_VALUES = {PAWN: 1, KNIGHT: 3, BISHOP: 3, ROOK: 5, QUEEN: 9}


@dataclass(frozen=True)
class ConceptSpec:
    """
    A probe target computed per position, from the side to move's point of view

    compute receives the board and an engine (or None); engine concepts
    get an object with evaluate(fen) -> EngineEval.
    """
    name: str
    kind: str
    compute: Callable
    needs_engine: bool = False


_REGISTRY: Dict[str, ConceptSpec] = {}


def register_concept(spec: ConceptSpec) -> ConceptSpec:
    if spec.kind not in (BINARY, CONTINUOUS):
        raise ConceptError(f"concept {spec.name}: kind must be {BINARY!r} or {CONTINUOUS!r}")
    if spec.name in _REGISTRY:
        logger.debug(f"Replacing concept {spec.name}")
    _REGISTRY[spec.name] = spec
    return spec


def get_concept(name: str) -> ConceptSpec:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ConceptError(f"unknown concept {name!r}; known: {', '.join(sorted(_REGISTRY))}")


def list_concepts() -> List[str]:
    return sorted(_REGISTRY)


def compute_concept(spec: ConceptSpec, board: Board, engine=None) -> float:
    if spec.needs_engine and engine is None:
        raise ConceptError(f"concept {spec.name} needs an engine")
    return float(spec.compute(board, engine))


def _sign(board: Board) -> int:
    return 1 if board.turn == WHITE else -1


def _count(board: Board, kind: int, active: bool) -> int:
    wanted = kind * _sign(board) * (1 if active else -1)
    return sum(1 for piece in board.squares if piece == wanted)


def material_balance(board: Board, engine=None) -> float:
    sign = _sign(board)
    return float(sum(PIECE_VALUES.get(abs(piece), 0) * (1 if piece * sign > 0 else -1)
                     for _, piece in board.pieces()))


def active_two_bishops(board: Board, engine=None) -> float:
    return float(_count(board, BISHOP, active=True) >= 2)


def opponent_two_bishops(board: Board, engine=None) -> float:
    return float(_count(board, BISHOP, active=False) >= 2)


def can_capture_opponent_queen(board: Board, engine=None) -> float:
    queen = -QUEEN * _sign(board)
    targets = {sq for sq, piece in board.pieces() if piece == queen}
    return float(any(move.to_square in targets for move in generate_legal_moves(board)))


def capture_possible_on(square_name: str) -> Callable:
    target = parse_square(square_name)

    def compute(board: Board, engine=None) -> float:
        return float(any(move.to_square == target and captured_piece(board, move)
                         for move in generate_legal_moves(board)))
    return compute


def engine_evaluation(board: Board, engine=None) -> float:
    return float(engine.evaluate(board.to_fen()).cp_equivalent())


for _spec in (
    ConceptSpec("engine_evaluation", CONTINUOUS, engine_evaluation, needs_engine=True),
    ConceptSpec("material_balance", CONTINUOUS, material_balance),
    ConceptSpec("active_two_bishops", BINARY, active_two_bishops),
    ConceptSpec("opponent_two_bishops", BINARY, opponent_two_bishops),
    ConceptSpec("can_capture_opponent_queen", BINARY, can_capture_opponent_queen),
    ConceptSpec("capture_possible_on_d3", BINARY, capture_possible_on("d3")),
):
    register_concept(_spec)
