from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

WHITE_WIN = 1
DRAW = 0
BLACK_WIN = -1

RESULT_CODES = {"1-0": WHITE_WIN, "0-1": BLACK_WIN, "1/2-1/2": DRAW}


class MoveRecord(NamedTuple):
    """A recorded move in UCI text and the mover's remaining clock, if reported"""
    uci: str
    clock: Optional[int] = None


@dataclass
class GameRecord:
    """One game read from a PGN stream"""
    white_elo: int
    black_elo: int
    event: str
    time_control: Optional[Tuple[int, int]]
    result: int
    moves: List[MoveRecord] = field(default_factory=list)
    site: str = ""

    @property
    def has_clock(self) -> bool:
        return any(move.clock is not None for move in self.moves)

    @property
    def ply_count(self) -> int:
        return len(self.moves)


class FilterDecision(NamedTuple):
    accepted: bool
    reason: Optional[str] = None


@dataclass(frozen=True)
class TrainingExample:
    """One position (mirrored so the active player is white) with its labels"""
    fen: str
    move: str
    active_bucket: int
    opponent_bucket: int
    outcome: int
    ply: int

    def to_record(self) -> Dict[str, Any]:
        return {
            "fen": self.fen,
            "move": self.move,
            "active_bucket": self.active_bucket,
            "opp_bucket": self.opponent_bucket,
            "outcome": self.outcome,
            "ply": self.ply,
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "TrainingExample":
        outcome = int(record["outcome"])
        if outcome not in (-1, 0, 1):
            raise ValueError(f"outcome must be -1, 0 or 1, got {outcome}")
        return cls(
            fen=str(record["fen"]),
            move=str(record["move"]),
            active_bucket=int(record["active_bucket"]),
            opponent_bucket=int(record["opp_bucket"]),
            outcome=outcome,
            ply=int(record["ply"]),
        )


class Tally(Counter):
    """Mergeable diagnostics counters; merging is plain addition"""

    def merge(self, other: "Tally") -> "Tally":
        self.update(other)
        return self

    def as_dict(self) -> Dict[str, int]:
        return {key: int(self[key]) for key in sorted(self)}


@dataclass(frozen=True)
class EngineEval:
    """
    Engine verdict for a position, scores from the side to move.

    Exactly one of cp / mate is set for a searched position. A terminal
    position carries neither; it is a draw (stalemate) unless mated.
    """
    cp: Optional[int]
    mate: Optional[int]
    best_move: Optional[str]
    depth: int
    terminal: bool = False

    MATE_CP = 10000

    def cp_equivalent(self) -> int:
        if self.mate is not None:
            if self.mate > 0:
                return self.MATE_CP
            return -self.MATE_CP
        return self.cp if self.cp is not None else 0

    def to_record(self, fen: str) -> Dict[str, Any]:
        record: Dict[str, Any] = {"fen": fen, "depth": self.depth}
        if self.mate is not None:
            record["mate"] = self.mate
        elif self.cp is not None:
            record["cp"] = self.cp
        record["best"] = self.best_move
        if self.terminal:
            record["terminal"] = True
        return record

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "EngineEval":
        return cls(
            cp=record.get("cp"),
            mate=record.get("mate"),
            best_move=record.get("best"),
            depth=int(record["depth"]),
            terminal=bool(record.get("terminal", False)),
        )


@dataclass
class SmoothnessStats:
    pct_monotonic: float
    pct_transitional: float
    positions: int
    skipped: int = 0


@dataclass
class CalibrationBins:
    """Uniform bins over predicted win probability; None marks an empty bin"""
    edges: List[float]
    counts: List[int]
    mean_predicted: List[Optional[float]]
    mean_empirical: List[Optional[float]]

    def mean_abs_gap(self) -> float:
        gaps = [abs(p - e) for p, e in zip(self.mean_predicted, self.mean_empirical)
                if p is not None and e is not None]
        return sum(gaps) / len(gaps) if gaps else 0.0


@dataclass
class MoveQualityStats:
    mean_cpl: float
    blunder_rate: float
    positions: int
    skipped: int = 0
    accuracy_by_band: Dict[str, Optional[float]] = field(default_factory=dict)
    accuracy_by_loss: List[Optional[float]] = field(default_factory=list)


@dataclass
class ProbeResult:
    concept: str
    layer: str
    bucket: Optional[int]
    score: float
    metric: str
    regularization: Optional[float] = None
