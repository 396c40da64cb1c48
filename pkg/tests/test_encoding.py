import numpy as np
import pytest

from src.core.board import WHITE, Move, apply_move, generate_legal_moves, mirror, parse_fen, starting_board
from src.core.encoding import (AUX_CAPTURED, AUX_CHECK, AUX_DIM, AUX_FROM, AUX_LEGAL, AUX_MOVED, AUX_TO,
                               CASTLING_CHANNEL, EN_PASSANT_CHANNEL, SIDE_TO_MOVE_CHANNEL, build_labels,
                               encode_example, encode_position, legal_move_mask, stack_examples)
from src.core.exceptions import EncodingError, IllegalMoveError
from src.core.models import TrainingExample
from src.core.vocabulary import VOCAB_SIZE, move_to_index

from conftest import STARTING_FEN, random_examples, random_positions


def test_aux_dimension():
    assert AUX_DIM == 4309


def test_start_position_planes():
    tensor = encode_position(starting_board())
    assert tensor.shape == (18, 8, 8)
    assert tensor.dtype == np.float32
    assert tensor[0, 1].sum() == 8 and tensor[0].sum() == 8
    assert tensor[6, 6].sum() == 8
    assert tensor[5, 0, 4] == 1 and tensor[11, 7, 4] == 1
    assert tensor[SIDE_TO_MOVE_CHANNEL].all()
    assert tensor[CASTLING_CHANNEL:CASTLING_CHANNEL + 4].all()
    assert not tensor[EN_PASSANT_CHANNEL].any()
    assert tensor[:12].sum() == 32


def test_black_to_move_is_rejected():
    with pytest.raises(EncodingError):
        encode_position(parse_fen("rnbqkbnr/pppppppp/8/8/4P3/8/PPPP1PPP/RNBQKBNR b KQkq e3 0 1"))


def test_mirrored_en_passant_target():
    after_e4 = apply_move(starting_board(), Move.from_uci("e2e4"))
    assert after_e4.to_fen() == "rnbqkbnr/pppppppp/8/8/4P3/8/PPPP1PPP/RNBQKBNR b KQkq e3 0 1"
    tensor = encode_position(mirror(after_e4))
    assert tensor[EN_PASSANT_CHANNEL].sum() == 1
    assert tensor[EN_PASSANT_CHANNEL, 5, 4] == 1
    assert tensor[6, 4, 4] == 1
    assert tensor[0, 1].sum() == 8


def test_labels_for_e2e4():
    policy, aux, value = build_labels(starting_board(), Move.from_uci("e2e4"), 1)
    vector = aux.vector()
    assert policy == move_to_index(Move.from_uci("e2e4"))
    assert vector.shape == (AUX_DIM,)
    assert vector[AUX_LEGAL].sum() == 20
    assert np.flatnonzero(vector[AUX_FROM]).tolist() == [12]
    assert np.flatnonzero(vector[AUX_TO]).tolist() == [28]
    assert np.flatnonzero(vector[AUX_MOVED]).tolist() == [0]
    assert not vector[AUX_CAPTURED].any()
    assert vector[AUX_CHECK] == 0
    assert value == 1.0


def test_labels_for_checking_queen_capture():
    board = parse_fen("3qk3/8/8/8/8/8/8/3QK3 w - - 0 1")
    _, aux, _ = build_labels(board, Move.from_uci("d1d8"), 0)
    vector = aux.vector()
    assert np.flatnonzero(vector[AUX_CAPTURED]).tolist() == [4]
    assert np.flatnonzero(vector[AUX_MOVED]).tolist() == [4]
    assert vector[AUX_CHECK] == 1


def test_en_passant_capture_label():
    board = parse_fen("4k3/8/8/3pP3/8/8/8/4K3 w - d6 0 1")
    _, aux, _ = build_labels(board, Move.from_uci("e5d6"), 0)
    assert np.flatnonzero(aux.vector()[AUX_CAPTURED]).tolist() == [0]


def test_illegal_played_move():
    with pytest.raises(IllegalMoveError):
        build_labels(starting_board(), Move.from_uci("e2e5"), 0)


def test_legal_mask_matches_aux_legal_slice():
    for example in random_examples(20, seed=4):
        board = parse_fen(example.fen)
        mask = legal_move_mask(board)
        _, aux, _ = build_labels(board, Move.from_uci(example.move), example.outcome)
        assert mask.shape == (VOCAB_SIZE,)
        assert np.array_equal(mask, aux.legal_moves.astype(bool))


def test_stack_examples():
    examples = [encode_example(TrainingExample(STARTING_FEN, "g1f3", 2, 7, -1, 10)),
                encode_example(TrainingExample(STARTING_FEN, "e2e4", 3, 3, 0, 11))]
    batch = stack_examples(examples)
    assert len(batch) == 2
    assert batch.x.shape == (2, 18, 8, 8)
    assert batch.aux.shape == (2, AUX_DIM)
    assert batch.active.tolist() == [2, 3]
    assert batch.opponent.tolist() == [7, 3]
    assert batch.value.tolist() == [-1.0, 0.0]
    assert len(batch.take([1])) == 1
    with pytest.raises(EncodingError):
        stack_examples([])


def white_to_move(count: int, seed: int):
    return [board if board.turn == WHITE else mirror(board) for board in random_positions(count, seed=seed)]


@pytest.mark.parametrize("count", [300, pytest.param(10000, marks=pytest.mark.slow)])
def test_piece_planes_and_legal_mask_over_random_positions(count):
    for board in white_to_move(count, seed=21):
        tensor = encode_position(board)
        assert tensor[:12].sum() == board.piece_count(), board.to_fen()
        assert legal_move_mask(board).sum() == len(generate_legal_moves(board)), board.to_fen()


def test_distinct_positions_encode_distinctly():
    seen = {}
    for board in white_to_move(600, seed=22):
        key = (board.squares, board.castling, board.ep_square)
        encoded = encode_position(board).tobytes()
        assert seen.setdefault(encoded, key) == key, board.to_fen()
    assert len(seen) > 300
