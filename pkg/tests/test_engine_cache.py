from concurrent.futures import ThreadPoolExecutor

import pytest

from src.core.exceptions import EngineCacheMissError, EngineError
from src.core.models import EngineEval
from src.infrastructure.engine_cache import CachedEngine, EngineCache

from conftest import STARTING_FEN


class CountingEngine:
    def __init__(self):
        self.calls = []

    def evaluate(self, fen, depth=None):
        self.calls.append((fen, depth))
        return EngineEval(cp=25, mate=None, best_move="e2e4", depth=depth)


def test_cache_persists_and_reloads(tmp_path):
    path = str(tmp_path / "cache" / "engine_cache.jsonl")
    cache = EngineCache(path)
    cache.put(STARTING_FEN, 12, EngineEval(25, None, "e2e4", 12))
    cache.put(STARTING_FEN, 12, EngineEval(25, None, "e2e4", 12))
    cache.put("8/8/8/8/8/8/8/K6k w - - 0 1", 12, EngineEval(None, None, None, 12, terminal=True))
    with open(path, encoding="utf-8") as f:
        assert len(f.read().splitlines()) == 2

    reloaded = EngineCache(path)
    assert len(reloaded) == 2
    assert reloaded.get(STARTING_FEN, 12) == EngineEval(25, None, "e2e4", 12)
    assert reloaded.get(STARTING_FEN, 8) is None


def test_depth_is_the_cache_key_depth(tmp_path):
    cache = EngineCache()
    cache.put(STARTING_FEN, 12, EngineEval(25, None, "e2e4", 9))
    assert cache.get(STARTING_FEN, 12).depth == 12


def test_bad_lines_are_skipped(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"fen":"x","depth":3,"cp":5,"best":"e2e4"}\nnot json\n{"depth":1}\n', encoding="utf-8")
    cache = EngineCache(str(path))
    assert len(cache) == 1
    assert cache.get("x", 3).cp == 5


def test_cached_engine_consults_the_engine_once(tmp_path):
    engine = CountingEngine()
    front = CachedEngine(EngineCache(str(tmp_path / "c.jsonl")), engine, depth=10)
    first = front.evaluate(STARTING_FEN)
    second = front.evaluate(STARTING_FEN)
    assert first == second
    assert engine.calls == [(STARTING_FEN, 10)]
    assert (front.hits, front.misses) == (1, 1)


def test_replay_serves_only_recorded_evaluations(tmp_path):
    path = str(tmp_path / "c.jsonl")
    CachedEngine(EngineCache(path), CountingEngine(), depth=10).evaluate(STARTING_FEN)

    replay = CachedEngine(EngineCache(path), depth=10, replay=True)
    assert replay.evaluate(STARTING_FEN).best_move == "e2e4"
    with pytest.raises(EngineCacheMissError):
        replay.evaluate("8/8/8/8/8/8/8/K6k w - - 0 1")


def test_replay_needs_a_cache_file(tmp_path):
    with pytest.raises(EngineCacheMissError):
        CachedEngine(EngineCache(str(tmp_path / "missing.jsonl")), replay=True)
    with pytest.raises(EngineError):
        CachedEngine(EngineCache())


def test_counters_are_exact_under_concurrent_use():
    front = CachedEngine(EngineCache(), CountingEngine(), depth=10)
    fens = [STARTING_FEN, "8/8/8/8/8/8/8/K6k w - - 0 1"]
    for fen in fens:
        front.evaluate(fen)
    with ThreadPoolExecutor(max_workers=8) as pool:
        list(pool.map(front.evaluate, fens * 1000))
    assert front.misses == 2
    assert front.hits == 2000
