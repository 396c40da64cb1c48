import pytest

from src.core.board import (BISHOP, KNIGHT, QUEEN, ROOK, WHITE, Move, generate_legal_moves, mirror,
                            parse_fen, parse_square)
from src.core.exceptions import MoveIndexError
from src.core.vocabulary import (PLAIN_MOVES, VOCAB_SIZE, index_to_move, move_to_index,
                                 normalize_promotion)

from conftest import random_positions


def test_vocabulary_size():
    assert VOCAB_SIZE == 4168
    assert PLAIN_MOVES == 4096


def test_plain_moves_index_from_times_64_plus_to():
    assert move_to_index(Move.from_uci("e2e4")) == 12 * 64 + 28
    assert index_to_move(12 * 64 + 28) == Move.from_uci("e2e4")


def test_queen_promotion_shares_the_plain_slot():
    assert move_to_index(Move.from_uci("a7a8q")) == move_to_index(Move.from_uci("a7a8"))
    assert normalize_promotion(Move.from_uci("a7a8q")) == Move.from_uci("a7a8")


def test_underpromotions_are_distinct():
    indices = {move_to_index(Move.from_uci(f"b7{target}{kind}"))
               for target in ("a8", "b8", "c8") for kind in "nbr"}
    assert len(indices) == 9
    assert all(PLAIN_MOVES <= i < VOCAB_SIZE for i in indices)


def test_underpromotion_round_trip():
    for kind in (KNIGHT, BISHOP, ROOK):
        move = Move(parse_square("g7"), parse_square("h8"), kind)
        assert index_to_move(move_to_index(move)) == move


def test_index_outside_vocabulary():
    with pytest.raises(MoveIndexError):
        index_to_move(VOCAB_SIZE)
    with pytest.raises(MoveIndexError):
        index_to_move(-1)


def test_underpromotion_off_the_seventh_rank_is_rejected():
    with pytest.raises(MoveIndexError):
        move_to_index(Move(parse_square("e2"), parse_square("e1"), KNIGHT))


@pytest.mark.parametrize("count", [400, pytest.param(10000, marks=pytest.mark.slow)])
def test_legal_moves_round_trip_through_the_vocabulary(count):
    checked = 0
    for board in random_positions(count, seed=2):
        board = board if board.turn == WHITE else mirror(board)
        moves = [normalize_promotion(m) for m in generate_legal_moves(board)]
        indices = [move_to_index(m) for m in moves]
        assert len(indices) == len(set(indices)), board.to_fen()
        for move, index in zip(moves, indices):
            assert index_to_move(index) == move, board.to_fen()
        checked += len(moves)
    assert checked > count


def test_promotion_position_indices():
    board = parse_fen("8/P6k/8/8/8/8/8/K7 w - - 0 1")
    moves = [m for m in generate_legal_moves(board) if m.from_square == parse_square("a7")]
    assert {m.promotion for m in moves} == {QUEEN, ROOK, BISHOP, KNIGHT}
    assert len({move_to_index(normalize_promotion(m)) for m in moves}) == 4
