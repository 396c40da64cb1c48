import numpy as np
import pytest
import torch

from src.core.board import Move, apply_move, generate_legal_moves, mirror, mirror_move, parse_fen, starting_board
from src.core.exceptions import ModelError
from src.core.inference import (masked_distribution, oriented_move_index, predict, predict_batch,
                                sweep_skills)
from src.core.encoding import encode_position, legal_move_mask
from src.core.network import SkillAwareNet


@pytest.fixture
def model(toy_config):
    torch.manual_seed(1)
    return SkillAwareNet(toy_config).eval()


def test_masked_distribution_zeroes_illegal_moves():
    logits = torch.randn(2, 6)
    masks = torch.tensor([[True, False, True, False, False, False], [False] * 5 + [True]])
    probs = masked_distribution(logits, masks)
    assert torch.allclose(probs.sum(dim=-1), torch.ones(2, dtype=torch.float64))
    assert torch.all(probs[~masks] == 0)
    assert probs[1, 5] == 1.0
    with pytest.raises(ModelError):
        masked_distribution(logits, torch.zeros(2, 6, dtype=torch.bool))


def test_predict_covers_exactly_the_legal_moves(model):
    prediction = predict(model, starting_board(), 5, 5)
    assert {m.uci() for m, _ in prediction.moves} == {m.uci() for m in generate_legal_moves(starting_board())}
    assert abs(sum(p for _, p in prediction.moves) - 1.0) < 1e-9
    assert prediction.moves == sorted(prediction.moves, key=lambda item: (-item[1], item[0].uci()))
    assert 0.0 <= prediction.win_prob <= 1.0
    assert prediction.probability(Move.from_uci("a2a3")) > 0
    assert prediction.probability(Move.from_uci("e2e5")) == 0.0


def test_black_to_move_is_mirrored_back(model):
    board = apply_move(starting_board(), Move.from_uci("e2e4"))
    prediction = predict(model, board, 3, 7)
    legal = set(generate_legal_moves(board))
    assert {m for m, _ in prediction.moves} == legal

    direct = predict(model, mirror(board), 3, 7)
    mirrored = {mirror_move(m): p for m, p in direct.moves}
    for move, prob in prediction.moves:
        assert prob == pytest.approx(mirrored[move], abs=1e-12)
    assert prediction.win_prob == pytest.approx(direct.win_prob)


def test_promotions_are_reported_with_their_piece(model):
    board = parse_fen("8/P6k/8/8/8/8/8/K7 w - - 0 1")
    ucis = {m.uci() for m, _ in predict(model, board, 4, 4).moves}
    assert {"a7a8q", "a7a8r", "a7a8b", "a7a8n"} <= ucis
    assert "a7a8" not in ucis


def test_terminal_position_is_an_error(model):
    with pytest.raises(ModelError):
        predict(model, parse_fen("R5k1/5ppp/8/8/8/8/8/6K1 b - - 0 1"), 1, 1)


def test_sweep_rows_are_distributions(model):
    board = starting_board()
    table = sweep_skills(model, board, opponent=5)
    assert table.shape == (11, 4168)
    assert np.allclose(table.sum(axis=1), 1.0)
    mask = legal_move_mask(board)
    assert np.all(table[:, ~mask] == 0)


def test_sweep_row_matches_single_prediction(model):
    board = starting_board()
    table = sweep_skills(model, board)
    prediction = predict(model, board, 6, 6)
    for move, prob in prediction.moves:
        assert table[6, oriented_move_index(board, move)] == pytest.approx(prob, abs=1e-6)


def test_predict_batch_shapes(model):
    boards = [starting_board(), parse_fen("4k3/8/8/8/8/8/4P3/4K3 w - - 0 1")]
    x = np.stack([encode_position(b) for b in boards])
    masks = np.stack([legal_move_mask(b) for b in boards])
    probs, win = predict_batch(model, x, masks, [0, 10], [10, 0])
    assert probs.shape == (2, 4168)
    assert win.shape == (2,)
    assert np.allclose(probs.sum(axis=1), 1.0)
