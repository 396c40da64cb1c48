import logging
from typing import Dict, List, Optional

import numpy as np

from ..core.board import Board, mirror_move, parse_fen
from ..core.config import BucketLayout
from ..core.exceptions import BucketRangeError, ConfigError
from ..core.encoding import legal_move_mask
from ..core.inference import Prediction, legal_move_for_index, orient, predict, sweep_skills
from ..core.network import SkillAwareNet

logger = logging.getLogger(__name__)


class PredictionService:
    """Answer single-position questions with a trained model"""

    def __init__(self, model: SkillAwareNet, layout: BucketLayout):
        if layout.n_buckets != model.config.n_buckets:
            raise ConfigError(f"bucket layout {layout.name} has {layout.n_buckets} buckets, "
                              f"the model was trained with {model.config.n_buckets}")
        self.model = model
        self.layout = layout

    def _check_bucket(self, name: str, bucket: int) -> None:
        if not 0 <= bucket < self.model.config.n_buckets:
            raise BucketRangeError(f"{name} bucket {bucket} outside [0, {self.model.config.n_buckets})")

    def predict(self, fen: str, active: int, opponent: int) -> Prediction:
        self._check_bucket("active", active)
        self._check_bucket("opponent", opponent)
        return predict(self.model, parse_fen(fen), active, opponent)

    def format_prediction(self, prediction: Prediction, top_k: int) -> List[str]:
        lines = [f"{move.uci():<8}{prob:.4f}" for move, prob in prediction.top(top_k)]
        lines.append(f"win_prob {prediction.win_prob:.4f}")
        return lines

    def sweep(self, fen: str, opponent: Optional[int] = None) -> Dict[str, Dict[str, float]]:
        """
        Probability of every legal move at each active bucket

        Returns:
            Bucket label -> move (UCI, real orientation) -> probability
        """
        if opponent is not None:
            self._check_bucket("opponent", opponent)
        board: Board = parse_fen(fen)
        oriented, flipped = orient(board)
        table = sweep_skills(self.model, board, opponent)
        columns = []
        for index in np.flatnonzero(legal_move_mask(oriented)):
            move = legal_move_for_index(oriented, int(index))
            columns.append((int(index), (mirror_move(move) if flipped else move).uci()))
        columns.sort(key=lambda item: item[1])
        return {
            self.layout.label(bucket): {uci: float(table[bucket, index]) for index, uci in columns}
            for bucket in range(table.shape[0])
        }

    def format_sweep(self, sweep: Dict[str, Dict[str, float]]) -> List[str]:
        rows = list(sweep.items())
        if not rows:
            return []
        moves = list(rows[0][1])
        lines = ["bucket".ljust(10) + "".join(uci.rjust(8) for uci in moves)]
        for label, probs in rows:
            lines.append(label.ljust(10) + "".join(f"{probs[uci]:8.3f}" for uci in moves))
        return lines
