import os
import random
import sys
import textwrap
from typing import List, Optional, Sequence

import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.core.board import WHITE, Board, apply_move, generate_legal_moves, starting_board
from src.core.config import ModelConfig
from src.core.encoding import EncodedBatch, encode_example, stack_examples
from src.core.models import TrainingExample

STARTING_FEN = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1"
KIWIPETE_FEN = "r3k2r/p1ppqpb1/bn2pnp1/3PN3/1p2P3/2N2Q1p/PPPBBPPP/R3K2R w KQkq - 0 1"
ENDGAME_FEN = "8/2p5/3p4/KP5r/1R3p1k/8/4P1P1/8 w - - 0 1"
MATE_IN_ONE_FEN = "6k1/5ppp/8/8/8/8/5PPP/3R2K1 w - - 0 1"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running convergence and oracle runs")


@pytest.fixture
def toy_config() -> ModelConfig:
    return ModelConfig.toy()


def random_positions(count: int, seed: int = 0, max_plies: int = 60) -> List[Board]:
    """Positions reached by seeded random playouts from the start"""
    rng = random.Random(seed)
    boards = []
    while len(boards) < count:
        board = starting_board()
        for _ in range(rng.randint(0, max_plies)):
            moves = generate_legal_moves(board)
            if not moves:
                break
            board = apply_move(board, rng.choice(moves))
        boards.append(board)
    return boards


def random_examples(count: int, seed: int = 0, n_buckets: int = 11) -> List[TrainingExample]:
    """White-to-move examples with a random legal move and random buckets"""
    rng = random.Random(seed)
    examples = []
    for board in random_positions(count * 4, seed=seed):
        moves = generate_legal_moves(board)
        if board.turn != WHITE or not moves:
            continue
        examples.append(TrainingExample(board.to_fen(), rng.choice(moves).uci(), rng.randrange(n_buckets),
                                        rng.randrange(n_buckets), rng.choice((-1, 0, 1)), 10))
        if len(examples) == count:
            break
    return examples


def encoded_batch(count: int = 8, seed: int = 0) -> EncodedBatch:
    return stack_examples(encode_example(e) for e in random_examples(count, seed))


@pytest.fixture
def positions() -> List[Board]:
    return random_positions(40, seed=7)


def clock_text(seconds: int) -> str:
    return f"{seconds // 3600}:{seconds % 3600 // 60:02d}:{seconds % 60:02d}"


# 40 legal plies from the start: knights out and back, repeated
SHUFFLE_MOVES = ["g1f3", "g8f6", "f3g1", "f6g8"] * 10


def make_pgn(moves: Sequence[str] = SHUFFLE_MOVES, white_elo: int = 1500, black_elo: int = 1500,
             event: str = "Rated Rapid game", time_control: str = "600+0", result: str = "1-0",
             clocks: Optional[Sequence[Optional[int]]] = None, site: str = "https://example.org/g1",
             extra_headers: Sequence[str] = ()) -> str:
    """One PGN game in UCI-derived SAN via python-chess, with %clk comments"""
    import chess
    import chess.pgn

    board = chess.Board()
    game = chess.pgn.Game()
    game.headers["Event"] = event
    game.headers["Site"] = site
    game.headers["White"] = "w"
    game.headers["Black"] = "b"
    game.headers["Result"] = result
    game.headers["WhiteElo"] = str(white_elo)
    game.headers["BlackElo"] = str(black_elo)
    game.headers["TimeControl"] = time_control
    for header in extra_headers:
        key, value = header.split("=", 1)
        game.headers[key] = value
    node = game
    if clocks is None:
        clocks = [600 - ply for ply in range(len(moves))]
    for uci, clock in zip(moves, clocks):
        move = chess.Move.from_uci(uci)
        board.push(move)
        node = node.add_variation(move)
        if clock is not None:
            node.comment = f"[%clk {clock_text(clock)}]"
    return str(game) + "\n\n"


@pytest.fixture
def pgn_file(tmp_path):
    def write(*games: str, name: str = "games.pgn") -> str:
        path = tmp_path / name
        path.write_text("".join(games), encoding="utf-8")
        return str(path)
    return write


FAKE_ENGINE = textwrap.dedent('''
    import os
    import sys

    import chess

    VALUES = {chess.PAWN: 100, chess.KNIGHT: 300, chess.BISHOP: 300, chess.ROOK: 500, chess.QUEEN: 900}
    mode = sys.argv[1] if len(sys.argv) > 1 else "normal"
    marker = sys.argv[2] if len(sys.argv) > 2 else None
    board = chess.Board()

    def say(text):
        sys.stdout.write(text + "\\n")
        sys.stdout.flush()

    def material(b):
        total = 0
        for piece in b.piece_map().values():
            value = VALUES.get(piece.piece_type, 0)
            total += value if piece.color == b.turn else -value
        return total

    for line in sys.stdin:
        tokens = line.split()
        if not tokens:
            continue
        if tokens[0] == "uci":
            say("id name fake")
            say("uciok")
        elif tokens[0] == "isready":
            say("readyok")
        elif tokens[0] == "position" and tokens[1] == "fen":
            board = chess.Board(" ".join(tokens[2:8]))
        elif tokens[0] == "go":
            depth = int(tokens[tokens.index("depth") + 1])
            if mode == "hang":
                continue
            if mode == "crash_once" and marker and not os.path.exists(marker):
                open(marker, "w").close()
                sys.exit(1)
            moves = sorted(board.legal_moves, key=lambda m: m.uci())
            if not moves:
                say("info depth 0 score mate 0" if board.is_check() else "info depth 0 score cp 0")
                say("bestmove (none)")
                continue
            best = moves[0]
            for move in moves:
                board.push(move)
                mate = board.is_checkmate()
                board.pop()
                if mate:
                    best = move
                    say(f"info depth {depth} score mate 1 pv {best.uci()}")
                    break
            else:
                say(f"info depth {max(depth - 1, 1)} score cp {material(board) + 7}")
                say(f"info depth {depth} score cp {material(board)} pv {best.uci()}")
            say(f"bestmove {best.uci()}")
        elif tokens[0] == "quit":
            break
''')


@pytest.fixture
def fake_engine(tmp_path):
    """Command line of a scripted UCI engine run with the current interpreter"""
    script = tmp_path / "fake_engine.py"
    script.write_text(FAKE_ENGINE, encoding="utf-8")

    def command(mode: str = "normal") -> List[str]:
        return [sys.executable, str(script), mode, str(tmp_path / f"{mode}.marker")]
    return command
