"""
Evaluation harness: runs a model over a test set and writes every report.

Reports are a deterministic fold over the test set in shard order. Engine
verdicts come through a cache, so a replayed run reproduces its reports
exactly.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from ..core.board import Board, Move, apply_move, parse_fen
from ..core.config import BucketLayout, EvalConfig
from ..core.encoding import encode_position, legal_move_mask
from ..core.exceptions import EncodingError, EngineError, FenError, IllegalMoveError, MoveIndexError
from ..core.inference import legal_move_for_index, predict_batch
from ..core.metrics import (SMOOTHNESS_BUCKETS, ModelComparison, accuracy_by_band, accuracy_by_loss,
                            accuracy_report, agreement_matrix, bucket_group, calibration_bins,
                            compare_models, cross_entropy_bits, cross_skill_matrix, outcome_score,
                            perplexity, perplexity_by_group, smoothness_stats)
from ..core.models import EngineEval, MoveQualityStats, Tally, TrainingExample
from ..core.network import SkillAwareNet
from ..core.vocabulary import move_to_index, normalize_promotion
from ..core.winrate import centipawn_loss, is_blunder, winrate_loss
from ..infrastructure.report_writer import ReportWriter
from ..infrastructure.shard_store import list_shards, read_shard

logger = logging.getLogger(__name__)


@dataclass
class TestsetPredictions:
    """Per-example model outputs over an evaluation set, in set order"""
    examples: List[TrainingExample]
    boards: List[Board]
    played: np.ndarray
    argmax: np.ndarray
    played_prob: np.ndarray
    win_prob: np.ndarray
    legal_counts: np.ndarray

    @property
    def correct(self) -> np.ndarray:
        return self.argmax == self.played

    @property
    def active(self) -> np.ndarray:
        return np.array([e.active_bucket for e in self.examples], dtype=np.int64)

    @property
    def opponent(self) -> np.ndarray:
        return np.array([e.opponent_bucket for e in self.examples], dtype=np.int64)

    @property
    def outcomes(self) -> np.ndarray:
        return np.array([e.outcome for e in self.examples], dtype=np.int64)


@dataclass
class MoveQualityReport:
    played: MoveQualityStats
    by_bucket: Dict[int, MoveQualityStats]
    losses: List[Optional[float]]


def load_testset(shards: str, max_positions: int = 0, seed: int = 0,
                 tally: Optional[Tally] = None) -> List[TrainingExample]:
    """Examples of every shard under a path; a seeded subset of max_positions when set"""
    examples: List[TrainingExample] = []
    for path in list_shards(shards):
        examples.extend(read_shard(path, tally))
    if max_positions and len(examples) > max_positions:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(examples), size=max_positions, replace=False))
        examples = [examples[i] for i in keep]
    return examples


class EvaluationService:
    """
    Compute accuracy, perplexity, skill matrices, calibration, smoothness and move quality

    Args:
        config: Evaluation settings
        layout: Bucket layout the model was trained with
        report_writer: Destination of the report files
        engine: Object with evaluate(fen, depth) -> EngineEval, usually a CachedEngine;
            engine-graded reports are skipped without one
    """

    def __init__(self, config: EvalConfig, layout: BucketLayout, report_writer: ReportWriter,
                 engine=None, progress: bool = False):
        self.config = config
        self.layout = layout
        self.report_writer = report_writer
        self.engine = engine
        self.progress = progress
        self.tally = Tally()

    def _outputs(self, model: SkillAwareNet, x: np.ndarray, masks: np.ndarray, active: Sequence[int],
                 opponent: Sequence[int], wanted: Optional[np.ndarray] = None):
        """Batched argmax, probability of the wanted index and win probability"""
        argmax, picked, win = [], [], []
        size = self.config.batch_size
        for start in range(0, len(x), size):
            chunk = slice(start, start + size)
            probs, w = predict_batch(model, x[chunk], masks[chunk],
                                     np.asarray(active)[chunk], np.asarray(opponent)[chunk])
            argmax.append(probs.argmax(axis=1))
            if wanted is not None:
                picked.append(probs[np.arange(len(probs)), wanted[chunk]])
            win.append(w)
        empty = np.empty(0)
        return (np.concatenate(argmax) if argmax else empty.astype(np.int64),
                np.concatenate(picked) if picked else empty,
                np.concatenate(win) if win else empty)

    def predict_testset(self, model: SkillAwareNet, examples: Iterable[TrainingExample]) -> TestsetPredictions:
        """Run the model on every usable example; broken records are tallied and dropped"""
        kept, boards, x, masks, played = [], [], [], [], []
        for example in examples:
            try:
                board = parse_fen(example.fen)
                encoded = encode_position(board)
                move = Move.from_uci(example.move)
                mask = legal_move_mask(board)
                index = move_to_index(normalize_promotion(move))
                if not mask[index]:
                    raise IllegalMoveError(example.move, f"not legal in {example.fen}")
            except (FenError, IllegalMoveError, MoveIndexError, EncodingError, ValueError) as e:
                logger.debug(f"Skipping test example: {e}")
                self.tally["bad_examples"] += 1
                continue
            kept.append(example)
            boards.append(board)
            x.append(encoded)
            masks.append(mask)
            played.append(index)
        if not kept:
            raise EncodingError("no usable test examples")
        x_array, mask_array, played_array = np.stack(x), np.stack(masks), np.array(played, dtype=np.int64)
        active = [e.active_bucket for e in kept]
        opponent = [e.opponent_bucket for e in kept]
        argmax, played_prob, win = self._outputs(model, x_array, mask_array, active, opponent, played_array)
        return TestsetPredictions(kept, boards, played_array, argmax, played_prob, win, mask_array.sum(axis=1))

    def groups(self, predictions: TestsetPredictions) -> List[str]:
        return [bucket_group(int(b), self.layout) for b in predictions.active]

    def accuracy(self, predictions: TestsetPredictions) -> Dict:
        report = accuracy_report(predictions.correct.tolist(), self.groups(predictions))
        return {"per_group": report.per_group, "counts": report.counts, "macro": report.macro}

    def perplexity(self, predictions: TestsetPredictions) -> Dict:
        return {
            "per_group": perplexity_by_group(predictions.played_prob.tolist(), self.groups(predictions)),
            "overall": perplexity(predictions.played_prob),
            "cross_entropy_bits": cross_entropy_bits(predictions.played_prob),
        }

    def cross_skill(self, predictions: TestsetPredictions, n_buckets: int) -> List[List[Optional[float]]]:
        return cross_skill_matrix(predictions.correct.tolist(), predictions.active.tolist(),
                                  predictions.opponent.tolist(), n_buckets, self.config.min_cell_count)

    def argmax_grid(self, model: SkillAwareNet, boards: Sequence[Board]) -> np.ndarray:
        """Argmax move index for every (active, opponent) setting: shape n x n x positions"""
        n = model.config.n_buckets
        x = np.stack([encode_position(b) for b in boards])
        masks = np.stack([legal_move_mask(b) for b in boards])
        grid = np.zeros((n, n, len(boards)), dtype=np.int64)
        for a in tqdm(range(n), disable=not self.progress, desc="agreement"):
            for o in range(n):
                grid[a, o] = self._outputs(model, x, masks, [a] * len(boards), [o] * len(boards))[0]
        return grid

    def agreement(self, model: SkillAwareNet, boards: Sequence[Board]) -> Tuple[np.ndarray, np.ndarray]:
        """
        Argmax agreement when varying the active bucket and when varying the opponent bucket

        With agreement_fixed_bucket unset, the other bucket is pooled over every value.
        """
        grid = self.argmax_grid(model, boards)
        fixed = self.config.agreement_fixed_bucket
        if fixed is None:
            by_active = np.transpose(grid, (1, 0, 2))
            by_opponent = grid
        else:
            by_active = grid[:, fixed, :][None]
            by_opponent = grid[fixed, :, :][None]
        return agreement_matrix(by_active), agreement_matrix(by_opponent)

    def calibration(self, predictions: TestsetPredictions):
        scores = [outcome_score(int(o)) for o in predictions.outcomes]
        return calibration_bins(predictions.win_prob, scores)

    def evaluate_positions(self, fens: Iterable[str]) -> Dict[str, Optional[EngineEval]]:
        """Engine verdicts for unique positions; failures map to None and are tallied"""
        unique = sorted(set(fens))

        def run(fen: str) -> Optional[EngineEval]:
            try:
                return self.engine.evaluate(fen, self.config.depth)
            except EngineError as e:
                logger.warning(f"Engine failed on {fen}: {e}")
                return None

        with ThreadPoolExecutor(max_workers=self.config.engine_workers) as executor:
            results = list(tqdm(executor.map(run, unique), total=len(unique),
                                disable=not self.progress, desc="engine"))
        failed = sum(1 for r in results if r is None)
        self.tally["engine_failures"] += failed
        return dict(zip(unique, results))

    def smoothness(self, model: SkillAwareNet, boards: Sequence[Board]):
        """Sweep active = opponent over the smoothness buckets against the engine's best move"""
        verdicts = self.evaluate_positions(b.to_fen() for b in boards)
        kept, optimal, skipped = [], [], 0
        for board in boards:
            verdict = verdicts.get(board.to_fen())
            if verdict is None or verdict.terminal or verdict.best_move is None:
                skipped += 1
                continue
            kept.append(board)
            optimal.append(move_to_index(normalize_promotion(Move.from_uci(verdict.best_move))))
        sweep = [b for b in SMOOTHNESS_BUCKETS if b < model.config.n_buckets]
        if not kept:
            return smoothness_stats([], [], self.config.monotonic_epsilon, skipped)
        x = np.stack([encode_position(b) for b in kept])
        masks = np.stack([legal_move_mask(b) for b in kept])
        wanted = np.array(optimal, dtype=np.int64)
        probs = np.zeros((len(kept), len(sweep)))
        hits = np.zeros((len(kept), len(sweep)), dtype=bool)
        for column, bucket in enumerate(sweep):
            argmax, picked, _ = self._outputs(model, x, masks, [bucket] * len(kept), [bucket] * len(kept), wanted)
            probs[:, column] = picked
            hits[:, column] = argmax == wanted
        return smoothness_stats(probs.tolist(), hits.tolist(), self.config.monotonic_epsilon, skipped)

    def move_quality(self, model: SkillAwareNet, predictions: TestsetPredictions) -> MoveQualityReport:
        """
        Engine-graded quality of the played moves and of the model's own argmax per bucket

        The played-move losses also split prediction accuracy by move-quality band
        and by 1-point win-rate-loss bins.
        """
        boards = predictions.boards
        played_moves = [Move.from_uci(e.move) for e in predictions.examples]
        after_played = [apply_move(b, m).to_fen() for b, m in zip(boards, played_moves)]

        n = model.config.n_buckets
        x = np.stack([encode_position(b) for b in boards])
        masks = np.stack([legal_move_mask(b) for b in boards])
        model_moves: Dict[int, List[Move]] = {}
        for bucket in range(n):
            argmax = self._outputs(model, x, masks, [bucket] * len(boards), [bucket] * len(boards))[0]
            model_moves[bucket] = [legal_move_for_index(b, int(i)) for b, i in zip(boards, argmax)]
        after_model = {bucket: [apply_move(b, m).to_fen() for b, m in zip(boards, moves)]
                       for bucket, moves in model_moves.items()}

        fens = [b.to_fen() for b in boards] + after_played
        for positions in after_model.values():
            fens.extend(positions)
        verdicts = self.evaluate_positions(fens)

        def grade(moves: List[Move], after: List[str]):
            cpls, losses = [], []
            for board, move, fen in zip(boards, moves, after):
                before, result = verdicts.get(board.to_fen()), verdicts.get(fen)
                if before is None or result is None or before.terminal:
                    cpls.append(None)
                    losses.append(None)
                    continue
                cpls.append(centipawn_loss(before, result, move.uci()))
                losses.append(winrate_loss(before, result, move.uci()))
            return cpls, losses

        def stats(cpls, losses, correct=None) -> MoveQualityStats:
            graded = [i for i, loss in enumerate(losses) if loss is not None]
            if not graded:
                return MoveQualityStats(0.0, 0.0, 0, len(losses))
            result = MoveQualityStats(
                mean_cpl=float(np.mean([cpls[i] for i in graded])),
                blunder_rate=float(np.mean([is_blunder(losses[i]) for i in graded])),
                positions=len(graded),
                skipped=len(losses) - len(graded),
            )
            if correct is not None:
                hits = [bool(correct[i]) for i in graded]
                graded_losses = [losses[i] for i in graded]
                result.accuracy_by_band = accuracy_by_band(hits, graded_losses)
                result.accuracy_by_loss = accuracy_by_loss(hits, graded_losses)
            return result

        played_cpls, played_losses = grade(played_moves, after_played)
        played = stats(played_cpls, played_losses, predictions.correct)
        by_bucket = {bucket: stats(*grade(model_moves[bucket], after_model[bucket])) for bucket in range(n)}
        return MoveQualityReport(played, by_bucket, played_losses)

    def compare(self, first: TestsetPredictions, second: TestsetPredictions,
                losses: Optional[Sequence[Optional[float]]] = None) -> ModelComparison:
        """Compare two models' confidence in the played moves, split by band when losses are known"""
        if losses is not None and any(loss is None for loss in losses):
            keep = [i for i, loss in enumerate(losses) if loss is not None]
            return compare_models(first.played_prob[keep], second.played_prob[keep], [losses[i] for i in keep])
        return compare_models(first.played_prob, second.played_prob, losses)

    def run(self, model: SkillAwareNet, examples: Sequence[TrainingExample],
            second_model: Optional[SkillAwareNet] = None) -> Dict[str, str]:
        """Compute every report for a model and write them; returns report name -> path"""
        writer = self.report_writer
        labels = self.layout.labels()
        n = model.config.n_buckets
        predictions = self.predict_testset(model, examples)
        logger.info(f"Evaluating on {len(predictions.examples)} positions")

        paths = {
            "accuracy": writer.write_json("accuracy.json", self.accuracy(predictions)),
            "perplexity": writer.write_json("perplexity.json", self.perplexity(predictions)),
            "cross_skill": writer.write_matrix("cross_skill_accuracy.csv", labels, self.cross_skill(predictions, n)),
        }
        by_active, by_opponent = self.agreement(model, predictions.boards)
        paths["agreement_active"] = writer.write_matrix("agreement_active.csv", labels, by_active.tolist(),
                                                        corner="active\\active")
        paths["agreement_opponent"] = writer.write_matrix("agreement_opponent.csv", labels, by_opponent.tolist(),
                                                          corner="opponent\\opponent")
        bins = self.calibration(predictions)
        paths["calibration"] = writer.write_rows(
            "calibration.csv", ("bin_low", "bin_high", "count", "mean_predicted", "mean_empirical"),
            [(bins.edges[k], bins.edges[k + 1], bins.counts[k], bins.mean_predicted[k], bins.mean_empirical[k])
             for k in range(len(bins.counts))])

        summary = {"positions": len(predictions.examples), "calibration_mean_abs_gap": bins.mean_abs_gap()}
        losses = None
        if self.engine is None:
            logger.warning("No engine configured; skipping smoothness and move quality")
        else:
            smooth = self.smoothness(model, predictions.boards)
            paths["smoothness"] = writer.write_json("smoothness.json", asdict(smooth))
            quality = self.move_quality(model, predictions)
            losses = quality.losses
            paths["move_quality"] = writer.write_json("move_quality.json", {
                "played": asdict(quality.played),
                "by_bucket": {labels[b]: asdict(s) for b, s in quality.by_bucket.items()},
            })
            paths["accuracy_by_loss"] = writer.write_rows(
                "accuracy_by_loss.csv", ("loss_low", "loss_high", "accuracy"),
                [(k, k + 1 if k + 1 < len(quality.played.accuracy_by_loss) else None, value)
                 for k, value in enumerate(quality.played.accuracy_by_loss)])
            summary["engine"] = {"hits": getattr(self.engine, "hits", None),
                                 "misses": getattr(self.engine, "misses", None)}

        if second_model is not None:
            other = self.predict_testset(second_model, predictions.examples)
            paths["comparison"] = writer.write_json("comparison.json", asdict(self.compare(predictions, other, losses)))

        summary["tally"] = self.tally.as_dict()
        paths["summary"] = writer.write_json("summary.json", summary)
        return paths
