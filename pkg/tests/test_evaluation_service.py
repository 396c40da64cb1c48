import csv
import json

import pytest
import torch

from src.application.evaluation_service import EvaluationService, load_testset
from src.core.board import generate_legal_moves, parse_fen
from src.core.config import TABLE_LAYOUT, EvalConfig
from src.core.exceptions import EncodingError, EngineError
from src.core.models import EngineEval, TrainingExample
from src.core.network import SkillAwareNet
from src.infrastructure.engine_cache import CachedEngine, EngineCache
from src.infrastructure.report_writer import ReportWriter
from src.infrastructure.shard_store import write_shard

from conftest import STARTING_FEN, random_examples

BASE_REPORTS = {"accuracy", "perplexity", "cross_skill", "agreement_active", "agreement_opponent",
                "calibration", "summary"}
ENGINE_REPORTS = {"smoothness", "move_quality", "accuracy_by_loss"}
BLACK_PROMOTION_FEN = "4k3/8/8/8/8/8/p7/4K3 b - - 0 1"


class StubEngine:
    """Deterministic in-process engine: best move is the first legal move in UCI order"""

    def __init__(self, fail: bool = False):
        self.fail = fail

    def evaluate(self, fen, depth):
        if self.fail:
            raise EngineError("engine went away")
        board = parse_fen(fen)
        moves = sorted(generate_legal_moves(board), key=lambda m: m.uci())
        if not moves:
            return EngineEval(None, 0 if board.is_check() else None, None, depth, terminal=True)
        return EngineEval(board.piece_count() * 7 % 41 - 20, None, moves[0].uci(), depth)


@pytest.fixture
def model(toy_config):
    torch.manual_seed(4)
    return SkillAwareNet(toy_config).eval()


@pytest.fixture
def examples():
    return random_examples(12, seed=3)


def service(tmp_path, engine=None, name="report", **settings) -> EvaluationService:
    config = EvalConfig(batch_size=5, **settings)
    return EvaluationService(config, TABLE_LAYOUT, ReportWriter(str(tmp_path / name)), engine)


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def test_reports_without_engine(tmp_path, model, examples):
    paths = service(tmp_path).run(model, examples)
    assert set(paths) == BASE_REPORTS

    accuracy = read_json(paths["accuracy"])
    assert 0.0 <= accuracy["macro"] <= 100.0
    assert sum(accuracy["counts"].values()) == 12
    perplexity = read_json(paths["perplexity"])
    assert perplexity["overall"] >= 1.0

    with open(paths["agreement_active"], encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0][0] == "active\\active"
    assert len(rows) == 12
    assert all(float(rows[i + 1][i + 1]) == 1.0 for i in range(11))

    with open(paths["calibration"], encoding="utf-8") as f:
        calibration = list(csv.reader(f))
    assert len(calibration) == 101
    assert sum(int(row[2]) for row in calibration[1:]) == 12

    summary = read_json(paths["summary"])
    assert summary["positions"] == 12
    assert "engine" not in summary


def test_predictions_are_deterministic(tmp_path, model, examples):
    harness = service(tmp_path)
    first = harness.predict_testset(model, examples)
    second = harness.predict_testset(model, examples)
    assert (first.argmax == second.argmax).all()
    assert (first.played_prob == second.played_prob).all()
    assert ((first.played_prob > 0) & (first.played_prob <= 1)).all()
    assert ((first.win_prob >= 0) & (first.win_prob <= 1)).all()


def test_broken_examples_are_tallied(tmp_path, model, examples):
    broken = [TrainingExample(STARTING_FEN, "e2e5", 5, 5, 0, 10),
              TrainingExample("not a fen", "e2e4", 5, 5, 0, 10),
              TrainingExample(BLACK_PROMOTION_FEN, "a2a1n", 5, 5, 0, 10),
              TrainingExample(STARTING_FEN, "e2e1n", 5, 5, 0, 10)]
    harness = service(tmp_path)
    predictions = harness.predict_testset(model, broken + examples)
    assert len(predictions.examples) == 12
    assert harness.tally["bad_examples"] == 4
    with pytest.raises(EncodingError):
        service(tmp_path, name="other").predict_testset(model, broken)


def test_engine_reports(tmp_path, model, examples):
    engine = StubEngine()
    paths = service(tmp_path, engine).run(model, examples)
    assert set(paths) == BASE_REPORTS | ENGINE_REPORTS

    smoothness = read_json(paths["smoothness"])
    assert smoothness["positions"] + smoothness["skipped"] == 12
    assert 0.0 <= smoothness["pct_monotonic"] <= 100.0

    quality = read_json(paths["move_quality"])
    assert list(quality["by_bucket"]) == TABLE_LAYOUT.labels()
    assert quality["played"]["positions"] == 12
    assert 0.0 <= quality["played"]["blunder_rate"] <= 1.0
    assert set(quality["played"]["accuracy_by_band"]) == {"optimal", "good", "error", "blunder"}

    with open(paths["accuracy_by_loss"], encoding="utf-8") as f:
        assert len(list(csv.reader(f))) == 31


def test_engine_failures_are_skipped(tmp_path, model, examples):
    harness = service(tmp_path, StubEngine(fail=True))
    paths = harness.run(model, examples)
    smoothness = read_json(paths["smoothness"])
    assert smoothness["positions"] == 0 and smoothness["skipped"] == 12
    quality = read_json(paths["move_quality"])
    assert quality["played"]["positions"] == 0
    assert harness.tally["engine_failures"] > 0
    assert read_json(paths["summary"])["tally"]["engine_failures"] == harness.tally["engine_failures"]


def test_replayed_run_reproduces_engine_reports(tmp_path, model, examples):
    cache_path = str(tmp_path / "cache.jsonl")
    live = CachedEngine(EngineCache(cache_path), StubEngine(), depth=12)
    first = service(tmp_path, live, name="live").run(model, examples)

    replay = CachedEngine(EngineCache(cache_path), None, depth=12, replay=True)
    second = service(tmp_path, replay, name="replay").run(model, examples)
    assert replay.misses == 0
    for name in ("smoothness", "move_quality", "accuracy", "cross_skill"):
        with open(first[name], "rb") as a, open(second[name], "rb") as b:
            assert a.read() == b.read()


def test_comparison_with_a_second_model(tmp_path, model, examples, toy_config):
    torch.manual_seed(9)
    other = SkillAwareNet(toy_config).eval()
    paths = service(tmp_path).run(model, examples, other)
    comparison = read_json(paths["comparison"])
    assert comparison["examples"] == 12
    assert 0.0 <= comparison["fraction_first_more_confident"] <= 1.0

    same = read_json(service(tmp_path, name="same").run(model, examples, model)["comparison"])
    assert same["fraction_first_more_confident"] == 0.0
    assert same["mean_log_odds_ratio"] == 0.0


def test_fixed_agreement_bucket(tmp_path, model, examples):
    harness = service(tmp_path, agreement_fixed_bucket=5)
    predictions = harness.predict_testset(model, examples)
    by_active, by_opponent = harness.agreement(model, predictions.boards)
    assert by_active.shape == by_opponent.shape == (11, 11)
    assert (by_active.diagonal() == 1.0).all()


def test_load_testset(tmp_path):
    write_shard(str(tmp_path / "shard_00000.jsonl"), random_examples(10, seed=1))
    write_shard(str(tmp_path / "shard_00001.jsonl"), random_examples(10, seed=2))
    assert len(load_testset(str(tmp_path))) == 20
    subset = load_testset(str(tmp_path), max_positions=7, seed=3)
    assert len(subset) == 7
    assert subset == load_testset(str(tmp_path), max_positions=7, seed=3)
