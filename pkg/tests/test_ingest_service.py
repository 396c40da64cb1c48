import csv
import json
import os

import pytest

from src.application.ingest_service import GAME_TABLE, EXAMPLE_MATRIX, INGEST_MANIFEST, IngestService, shard_name
from src.core.board import WHITE, parse_fen
from src.core.config import TABLE_LAYOUT, BalancerConfig, FilterConfig
from src.core.exceptions import PgnError, ShardError
from src.infrastructure.file_manager import FileManager
from src.infrastructure.report_writer import ReportWriter
from src.infrastructure.shard_store import read_shard

from conftest import SHUFFLE_MOVES, make_pgn

MALFORMED = ('[Event "Rated Rapid game"]\n[Site "bad"]\n[White "a"]\n[Black "b"]\n[Result "1-0"]\n'
             '[WhiteElo "1500"]\n[BlackElo "1500"]\n[TimeControl "600+0"]\n\n1. e4 e5 2. Ke3 1-0\n\n')


def sample_games():
    games = []
    for i, (white, black) in enumerate([(1250, 1850), (1550, 1520), (2100, 950), (1850, 1250), (1650, 1710)]):
        games.append(make_pgn(white_elo=white, black_elo=black, site=f"g{i}",
                              result=("1-0", "0-1", "1/2-1/2")[i % 3]))
    games.append(make_pgn(event="Rated Blitz game", time_control="180+0", site="blitz"))
    games.append(make_pgn(clocks=[None] * 40, site="noclock"))
    games.append(MALFORMED)
    return games


@pytest.fixture
def service():
    return IngestService(FileManager())


def read_bytes(directory):
    return {path.name: path.read_bytes() for path in sorted(directory.glob("*.jsonl"))}


def test_ingest_writes_shards_and_manifest(service, pgn_file, tmp_path):
    path = pgn_file(*sample_games())
    out = str(tmp_path / "shards")
    result = service.ingest(path, out, FilterConfig(), BalancerConfig(chunk_size=3, per_combo_cap=20), TABLE_LAYOUT)

    assert [os.path.basename(p) for p in result.shards] == [shard_name(0), shard_name(1)]
    examples = [e for p in result.shards for e in read_shard(p)]
    assert len(examples) == 5 * 30
    assert all(10 <= e.ply <= 300 for e in examples)
    assert result.tally["games_read"] == 8
    assert result.tally["malformed"] == 1
    assert result.tally["rejected_not_rapid"] == 1
    assert result.tally["rejected_no_clock"] == 1
    assert result.tally["selected"] == 5

    with open(os.path.join(out, INGEST_MANIFEST), encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["pair_counts"] == {"2-8": 2, "5-5": 1, "0-10": 1, "6-7": 1}
    assert manifest["shards"] == {shard_name(0): 90, shard_name(1): 60}
    assert manifest["bucket_layout"] == "table"
    assert manifest["filter"]["min_clock_seconds"] == 30


def test_written_examples_pass_every_filter(service, pgn_file, tmp_path):
    long_moves = SHUFFLE_MOVES * 8
    games = [
        make_pgn(white_elo=1250, black_elo=1850, site="plain"),
        make_pgn(white_elo=1550, black_elo=1520, site="close"),
        make_pgn(long_moves, white_elo=1350, black_elo=1650, site="long",
                 clocks=[600 - ply for ply in range(len(long_moves))]),
        make_pgn(white_elo=1150, black_elo=1950, site="low-clock",
                 clocks=[600 - ply if ply < 24 else 20 for ply in range(40)]),
        make_pgn(white_elo=1050, black_elo=2050, event="Rated Blitz game", time_control="180+0", site="blitz"),
        make_pgn(white_elo=2050, black_elo=1050, clocks=[None] * 40, site="noclock"),
    ]
    result = service.ingest(pgn_file(*games), str(tmp_path / "shards"), FilterConfig(), BalancerConfig(),
                            TABLE_LAYOUT)
    examples = [e for path in result.shards for e in read_shard(path)]
    assert len(examples) == 30 + 30 + 291 + 15

    plies = {}
    for example in examples:
        assert parse_fen(example.fen).turn == WHITE, example
        assert 10 <= example.ply <= 300, example
        pair = frozenset((example.active_bucket, example.opponent_bucket))
        plies.setdefault(pair, []).append(example.ply)
    assert set(plies) == {frozenset((2, 8)), frozenset((5,)), frozenset((3, 7)), frozenset((1, 9))}
    assert max(plies[frozenset((3, 7))]) == 300
    assert sorted(plies[frozenset((1, 9))]) == list(range(10, 25))


def test_reruns_are_byte_identical(service, pgn_file, tmp_path):
    path = pgn_file(*sample_games())
    config = BalancerConfig(chunk_size=2, per_combo_cap=20, seed=11)
    service.ingest(path, str(tmp_path / "a"), FilterConfig(), config, TABLE_LAYOUT)
    service.ingest(path, str(tmp_path / "b"), FilterConfig(), config, TABLE_LAYOUT)
    service.ingest(path, str(tmp_path / "c"), FilterConfig(), config, TABLE_LAYOUT, workers=2)
    a = read_bytes(tmp_path / "a")
    assert len(a) == 3
    assert a == read_bytes(tmp_path / "b") == read_bytes(tmp_path / "c")


def test_shard_examples_are_shuffled_with_the_seed(service, pgn_file, tmp_path):
    path = pgn_file(*sample_games())
    for name, seed in (("a", 1), ("b", 2)):
        service.ingest(path, str(tmp_path / name), FilterConfig(), BalancerConfig(chunk_size=10, per_combo_cap=5, seed=seed),
                       TABLE_LAYOUT)
    first = list(read_shard(str(tmp_path / "a" / shard_name(0))))
    second = list(read_shard(str(tmp_path / "b" / shard_name(0))))
    assert first != second
    assert sorted(first, key=repr) == sorted(second, key=repr)


def test_cap_limits_selected_games(service, pgn_file, tmp_path):
    path = pgn_file(*[make_pgn(site=f"g{i}") for i in range(30)])
    result = service.ingest(path, str(tmp_path / "s"), FilterConfig(),
                            BalancerConfig(chunk_size=100, per_combo_cap=20), TABLE_LAYOUT)
    assert result.tally["selected"] == 20
    assert result.pair_counts == {(5, 5): 20}
    assert result.tally["examples"] == 600


def test_refuses_existing_shards_and_missing_pgn(service, pgn_file, tmp_path):
    path = pgn_file(make_pgn())
    out = str(tmp_path / "s")
    service.ingest(path, out, FilterConfig(), BalancerConfig(), TABLE_LAYOUT)
    with pytest.raises(ShardError):
        service.ingest(path, out, FilterConfig(), BalancerConfig(), TABLE_LAYOUT)
    with pytest.raises(PgnError):
        service.ingest(str(tmp_path / "missing.pgn"), str(tmp_path / "t"), FilterConfig(), BalancerConfig(),
                       TABLE_LAYOUT)


def test_balance_stats(service, pgn_file, tmp_path):
    path = pgn_file(*sample_games())
    out = str(tmp_path / "shards")
    service.ingest(path, out, FilterConfig(), BalancerConfig(), TABLE_LAYOUT)
    reports = ReportWriter(str(tmp_path / "report"))
    written = service.balance_stats(out, TABLE_LAYOUT, reports)

    with open(written["examples"], encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows[0][0] == "active\\opponent"
    assert rows[0][1:] == TABLE_LAYOUT.labels()
    cells = {(r, c): int(v) for r, row in enumerate(rows[1:]) for c, v in enumerate(row[1:])}
    assert sum(cells.values()) == 150
    assert cells[(2, 8)] == 30 and cells[(8, 2)] == 30
    assert cells[(5, 5)] == 30

    with open(written["games"], encoding="utf-8") as f:
        table = list(csv.reader(f))
    assert os.path.basename(written["games"]) == GAME_TABLE
    assert os.path.basename(written["examples"]) == EXAMPLE_MATRIX
    assert table[0][0] == "white\\black"
    assert table[9][3] == "2"
    assert table[3][9] == ""
    assert table[11][1] == "1"
