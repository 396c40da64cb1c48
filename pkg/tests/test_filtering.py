import io

import pytest

from src.core.board import WHITE, Move, apply_move, parse_fen
from src.core.config import EMBEDDING_LAYOUT, TABLE_LAYOUT, FilterConfig
from src.core.filtering import NO_CLOCK, NOT_RAPID, bucket_of, extract_examples, filter_game, is_rapid
from src.core.models import Tally
from src.core.pgn import parse_pgn_stream

from conftest import SHUFFLE_MOVES, make_pgn


def game_of(text: str):
    return next(parse_pgn_stream(io.StringIO(text)))


@pytest.mark.parametrize("rating,bucket", [(950, 0), (1099, 0), (1100, 1), (1543, 5), (1999, 9),
                                           (2000, 10), (2750, 10)])
def test_bucket_of_table_layout(rating, bucket):
    assert bucket_of(rating) == bucket


def test_embedding_layout_has_twelve_buckets():
    assert EMBEDDING_LAYOUT.n_buckets == 12
    assert EMBEDDING_LAYOUT.bucket_of(1000) == 0
    assert EMBEDDING_LAYOUT.bucket_of(1001) == 1
    assert TABLE_LAYOUT.labels()[0] == "<1100"
    assert TABLE_LAYOUT.labels()[-1] == ">=2000"


def test_bucket_of_rejects_non_positive_ratings():
    with pytest.raises(ValueError):
        bucket_of(0)


def test_rapid_detection():
    assert is_rapid(game_of(make_pgn(event="Rated Rapid game")))
    assert not is_rapid(game_of(make_pgn(event="Rated Blitz game", time_control="600+0")))
    assert is_rapid(game_of(make_pgn(event="Casual game", time_control="600+0")))
    assert not is_rapid(game_of(make_pgn(event="Casual game", time_control="180+2")))
    assert not is_rapid(game_of(make_pgn(event="Casual game", time_control="1500+0")))


def test_filter_game_reasons():
    config = FilterConfig()
    assert filter_game(game_of(make_pgn()), config).accepted
    assert filter_game(game_of(make_pgn(event="Rated Bullet game")), config).reason == NOT_RAPID
    assert filter_game(game_of(make_pgn(clocks=[None] * 40)), config).reason == NO_CLOCK


def test_forty_ply_game_yields_thirty_examples():
    tally = Tally()
    examples = extract_examples(game_of(make_pgn()), FilterConfig(), tally=tally)
    assert [e.ply for e in examples] == list(range(10, 40))
    assert tally["examples"] == 30


def test_low_clock_excludes_later_positions():
    clocks = [600 - ply if ply < 24 or ply % 2 else 20 for ply in range(40)]
    examples = extract_examples(game_of(make_pgn(clocks=clocks)), FilterConfig())
    assert [e.ply for e in examples] == list(range(10, 25))


def test_max_ply_bounds_examples():
    examples = extract_examples(game_of(make_pgn()), FilterConfig(min_ply=0, max_ply=15))
    assert [e.ply for e in examples] == list(range(0, 16))


def test_examples_are_mirrored_for_black():
    game = game_of(make_pgn(white_elo=1250, black_elo=1850, result="1-0"))
    examples = {e.ply: e for e in extract_examples(game, FilterConfig())}

    white = examples[12]
    assert (white.active_bucket, white.opponent_bucket, white.outcome) == (2, 8, 1)
    assert white.move == SHUFFLE_MOVES[12]

    black = examples[11]
    assert (black.active_bucket, black.opponent_bucket, black.outcome) == (8, 2, -1)
    assert black.move == "f3g1"

    for example in examples.values():
        board = parse_fen(example.fen)
        assert board.turn == WHITE
        apply_move(board, Move.from_uci(example.move))


def test_mirrored_position_matches_the_game():
    game = game_of(make_pgn())
    example = extract_examples(game, FilterConfig(min_ply=1))[0]
    assert example.ply == 1
    assert parse_fen(example.fen).piece_at(Move.from_uci("g1f3").to_square ^ 56) < 0


def test_illegal_recorded_move_ends_the_game():
    game = game_of(make_pgn())
    game.moves[15] = game.moves[15]._replace(uci="e2e5")
    tally = Tally()
    examples = extract_examples(game, FilterConfig(), tally=tally)
    assert [e.ply for e in examples] == list(range(10, 15))
    assert tally["illegal_move"] == 1
