"""
Chess rules: immutable position state, FEN parsing, legal move generation,
move application, mirroring and perft.

Squares are numbered a1=0 .. h8=63 (square = rank * 8 + file). Pieces are
signed integers: positive for white, negative for black, magnitude the kind.
"""

from dataclasses import dataclass, replace
from typing import Iterator, List, NamedTuple, Optional, Tuple

from .exceptions import FenError, IllegalMoveError

WHITE = True
BLACK = False

EMPTY = 0
PAWN = 1
KNIGHT = 2
BISHOP = 3
ROOK = 4
QUEEN = 5
KING = 6

PIECE_SYMBOLS = "pnbrqk"
PROMOTION_KINDS = (QUEEN, ROOK, BISHOP, KNIGHT)

# Castling right slots: white king side, white queen side, black king side, black queen side
WHITE_KINGSIDE, WHITE_QUEENSIDE, BLACK_KINGSIDE, BLACK_QUEENSIDE = range(4)

STARTING_FEN = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1"

FILE_NAMES = "abcdefgh"


def square(file: int, rank: int) -> int:
    return rank * 8 + file


def square_file(sq: int) -> int:
    return sq & 7


def square_rank(sq: int) -> int:
    return sq >> 3


def square_name(sq: int) -> str:
    return f"{FILE_NAMES[sq & 7]}{(sq >> 3) + 1}"


def parse_square(name: str) -> int:
    if len(name) != 2 or name[0] not in FILE_NAMES or name[1] not in "12345678":
        raise ValueError(f"Invalid square name: {name!r}")
    return square(FILE_NAMES.index(name[0]), int(name[1]) - 1)


def mirror_square(sq: int) -> int:
    return sq ^ 56


class Move(NamedTuple):
    """A move from one square to another, with an optional promotion kind"""
    from_square: int
    to_square: int
    promotion: Optional[int] = None

    def uci(self) -> str:
        text = square_name(self.from_square) + square_name(self.to_square)
        if self.promotion:
            text += PIECE_SYMBOLS[self.promotion - 1]
        return text

    @classmethod
    def from_uci(cls, text: str) -> "Move":
        if len(text) not in (4, 5):
            raise ValueError(f"Invalid UCI move: {text!r}")
        promotion = None
        if len(text) == 5:
            if text[4] not in "nbrq":
                raise ValueError(f"Invalid promotion in UCI move: {text!r}")
            promotion = PIECE_SYMBOLS.index(text[4]) + 1
        move = cls(parse_square(text[0:2]), parse_square(text[2:4]), promotion)
        if move.from_square == move.to_square:
            raise ValueError(f"Null move is not supported: {text!r}")
        return move


def mirror_move(move: Move) -> Move:
    return Move(mirror_square(move.from_square), mirror_square(move.to_square), move.promotion)


def _on_board(rank: int, file: int) -> bool:
    return 0 <= rank < 8 and 0 <= file < 8


def _step_table(deltas: Tuple[Tuple[int, int], ...]) -> Tuple[Tuple[int, ...], ...]:
    table = []
    for sq in range(64):
        rank, file = divmod(sq, 8)
        table.append(tuple(square(file + df, rank + dr) for dr, df in deltas
                           if _on_board(rank + dr, file + df)))
    return tuple(table)


def _ray_table(directions: Tuple[Tuple[int, int], ...]) -> Tuple[Tuple[Tuple[int, ...], ...], ...]:
    table = []
    for sq in range(64):
        rank, file = divmod(sq, 8)
        rays = []
        for dr, df in directions:
            ray = []
            r, f = rank + dr, file + df
            while _on_board(r, f):
                ray.append(square(f, r))
                r, f = r + dr, f + df
            if ray:
                rays.append(tuple(ray))
        table.append(tuple(rays))
    return tuple(table)


_KNIGHT_STEPS = _step_table(((1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)))
_KING_STEPS = _step_table(((1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)))
_ORTHOGONAL_RAYS = _ray_table(((1, 0), (-1, 0), (0, 1), (0, -1)))
_DIAGONAL_RAYS = _ray_table(((1, 1), (1, -1), (-1, 1), (-1, -1)))
# Squares attacked by a pawn standing on a square: [0] white pawn, [1] black pawn
_PAWN_ATTACKS = (_step_table(((1, -1), (1, 1))), _step_table(((-1, -1), (-1, 1))))

# Rook home squares and the castling right each one guards
_ROOK_HOMES = {0: WHITE_QUEENSIDE, 7: WHITE_KINGSIDE, 56: BLACK_QUEENSIDE, 63: BLACK_KINGSIDE}


def _is_attacked(squares, sq: int, by_white: bool) -> bool:
    sign = 1 if by_white else -1
    pawn = PAWN * sign
    for s in _PAWN_ATTACKS[1 if by_white else 0][sq]:
        if squares[s] == pawn:
            return True
    knight = KNIGHT * sign
    for s in _KNIGHT_STEPS[sq]:
        if squares[s] == knight:
            return True
    king = KING * sign
    for s in _KING_STEPS[sq]:
        if squares[s] == king:
            return True
    queen = QUEEN * sign
    rook = ROOK * sign
    for ray in _ORTHOGONAL_RAYS[sq]:
        for s in ray:
            piece = squares[s]
            if piece:
                if piece == rook or piece == queen:
                    return True
                break
    bishop = BISHOP * sign
    for ray in _DIAGONAL_RAYS[sq]:
        for s in ray:
            piece = squares[s]
            if piece:
                if piece == bishop or piece == queen:
                    return True
                break
    return False


@dataclass(frozen=True)
class Board:
    """Immutable chess position"""
    squares: Tuple[int, ...]
    turn: bool = WHITE
    castling: Tuple[bool, bool, bool, bool] = (False, False, False, False)
    ep_square: Optional[int] = None
    halfmove_clock: int = 0
    fullmove_number: int = 1

    def piece_at(self, sq: int) -> int:
        return self.squares[sq]

    def pieces(self) -> Iterator[Tuple[int, int]]:
        """Yield (square, piece) for every occupied square"""
        for sq, piece in enumerate(self.squares):
            if piece:
                yield sq, piece

    def piece_count(self) -> int:
        return sum(1 for piece in self.squares if piece)

    def king_square(self, white: bool) -> int:
        return self.squares.index(KING if white else -KING)

    def is_attacked(self, sq: int, by_white: bool) -> bool:
        return _is_attacked(self.squares, sq, by_white)

    def is_check(self) -> bool:
        return _is_attacked(self.squares, self.king_square(self.turn), not self.turn)

    def legal_moves(self) -> List[Move]:
        return generate_legal_moves(self)

    def is_checkmate(self) -> bool:
        return self.is_check() and not generate_legal_moves(self)

    def is_stalemate(self) -> bool:
        return not self.is_check() and not generate_legal_moves(self)

    def to_fen(self) -> str:
        rows = []
        for rank in range(7, -1, -1):
            row = ""
            empty = 0
            for file in range(8):
                piece = self.squares[square(file, rank)]
                if not piece:
                    empty += 1
                    continue
                if empty:
                    row += str(empty)
                    empty = 0
                symbol = PIECE_SYMBOLS[abs(piece) - 1]
                row += symbol.upper() if piece > 0 else symbol
            if empty:
                row += str(empty)
            rows.append(row)
        castling = "".join(flag for flag, on in zip("KQkq", self.castling) if on) or "-"
        ep = square_name(self.ep_square) if self.ep_square is not None else "-"
        side = "w" if self.turn else "b"
        return f"{'/'.join(rows)} {side} {castling} {ep} {self.halfmove_clock} {self.fullmove_number}"

    def __str__(self) -> str:
        return self.to_fen()


def parse_fen(text: str) -> Board:
    """Parse a 4-6 field FEN string into a Board"""
    fields = text.split()
    if not 4 <= len(fields) <= 6:
        raise FenError("fields", f"expected 4-6 fields, got {len(fields)}")

    placement, side, castling_text, ep_text = fields[:4]

    ranks = placement.split("/")
    if len(ranks) != 8:
        raise FenError("placement", f"expected 8 ranks, got {len(ranks)}")
    squares = [EMPTY] * 64
    for row_index, row in enumerate(ranks):
        rank = 7 - row_index
        file = 0
        for char in row:
            if char.isdigit():
                if char in "09":
                    raise FenError("placement", f"invalid empty-square count {char!r}")
                file += int(char)
            elif char.lower() in PIECE_SYMBOLS:
                if file > 7:
                    raise FenError("placement", f"rank {rank + 1} overflows")
                kind = PIECE_SYMBOLS.index(char.lower()) + 1
                if kind == PAWN and rank in (0, 7):
                    raise FenError("placement", f"pawn on back rank at {square_name(square(file, rank))}")
                squares[square(file, rank)] = kind if char.isupper() else -kind
                file += 1
            else:
                raise FenError("placement", f"invalid character {char!r}")
        if file != 8:
            raise FenError("placement", f"rank {rank + 1} has {file} files")

    for white, colour in ((True, "white"), (False, "black")):
        kings = squares.count(KING if white else -KING)
        if kings != 1:
            raise FenError("placement", f"{colour} has {kings} kings")

    if side not in ("w", "b"):
        raise FenError("side_to_move", f"expected 'w' or 'b', got {side!r}")
    turn = side == "w"

    castling = [False] * 4
    if castling_text != "-":
        for char in castling_text:
            if char not in "KQkq":
                raise FenError("castling", f"invalid flag {char!r}")
            slot = "KQkq".index(char)
            if castling[slot]:
                raise FenError("castling", f"duplicate flag {char!r}")
            castling[slot] = True
    requirements = (
        (WHITE_KINGSIDE, 4, KING, 7, ROOK),
        (WHITE_QUEENSIDE, 4, KING, 0, ROOK),
        (BLACK_KINGSIDE, 60, -KING, 63, -ROOK),
        (BLACK_QUEENSIDE, 60, -KING, 56, -ROOK),
    )
    for slot, king_sq, king, rook_sq, rook in requirements:
        if castling[slot] and (squares[king_sq] != king or squares[rook_sq] != rook):
            raise FenError("castling", f"right {'KQkq'[slot]!r} without king and rook on their home squares")

    ep_square = None
    if ep_text != "-":
        try:
            ep_square = parse_square(ep_text)
        except ValueError:
            raise FenError("en_passant", f"invalid square {ep_text!r}")
        expected_rank = 5 if turn else 2
        if square_rank(ep_square) != expected_rank:
            raise FenError("en_passant", f"{ep_text} is not on rank {expected_rank + 1}")
        step = -8 if turn else 8
        pusher = -PAWN if turn else PAWN
        if (squares[ep_square + step] != pusher or squares[ep_square] != EMPTY
                or squares[ep_square - step] != EMPTY):
            raise FenError("en_passant", f"{ep_text} does not follow a double pawn push")

    try:
        halfmove = int(fields[4]) if len(fields) > 4 else 0
    except ValueError:
        raise FenError("halfmove_clock", f"not an integer: {fields[4]!r}")
    try:
        fullmove = int(fields[5]) if len(fields) > 5 else 1
    except ValueError:
        raise FenError("fullmove_number", f"not an integer: {fields[5]!r}")
    if halfmove < 0:
        raise FenError("halfmove_clock", "must be non-negative")
    if fullmove < 1:
        raise FenError("fullmove_number", "must be positive")

    return Board(tuple(squares), turn, tuple(castling), ep_square, halfmove, fullmove)


def starting_board() -> Board:
    return parse_fen(STARTING_FEN)


def _pseudo_legal_moves(board: Board) -> List[Move]:
    squares = board.squares
    white = board.turn
    sign = 1 if white else -1
    forward = 8 if white else -8
    start_rank = 1 if white else 6
    last_rank = 7 if white else 0
    attacks = _PAWN_ATTACKS[0 if white else 1]
    ep = board.ep_square
    moves: List[Move] = []
    append = moves.append

    for frm in range(64):
        piece = squares[frm] * sign
        if piece <= 0:
            continue
        if piece == PAWN:
            targets = []
            to = frm + forward
            if not squares[to]:
                targets.append(to)
                if square_rank(frm) == start_rank and not squares[to + forward]:
                    append(Move(frm, to + forward))
            for to in attacks[frm]:
                if squares[to] * sign < 0 or to == ep:
                    targets.append(to)
            for to in targets:
                if square_rank(to) == last_rank:
                    for kind in PROMOTION_KINDS:
                        append(Move(frm, to, kind))
                else:
                    append(Move(frm, to))
        elif piece == KNIGHT or piece == KING:
            table = _KNIGHT_STEPS if piece == KNIGHT else _KING_STEPS
            for to in table[frm]:
                if squares[to] * sign <= 0:
                    append(Move(frm, to))
        else:
            rays = []
            if piece != BISHOP:
                rays.extend(_ORTHOGONAL_RAYS[frm])
            if piece != ROOK:
                rays.extend(_DIAGONAL_RAYS[frm])
            for ray in rays:
                for to in ray:
                    target = squares[to] * sign
                    if target > 0:
                        break
                    append(Move(frm, to))
                    if target < 0:
                        break

    _castling_moves(board, moves)
    return moves


def _castling_moves(board: Board, moves: List[Move]) -> None:
    squares = board.squares
    white = board.turn
    home = 4 if white else 60
    kingside, queenside = (WHITE_KINGSIDE, WHITE_QUEENSIDE) if white else (BLACK_KINGSIDE, BLACK_QUEENSIDE)
    rights = board.castling
    if not (rights[kingside] or rights[queenside]):
        return
    if squares[home] != (KING if white else -KING):
        return
    enemy = not white
    if _is_attacked(squares, home, enemy):
        return
    if rights[kingside] and not squares[home + 1] and not squares[home + 2]:
        if not _is_attacked(squares, home + 1, enemy) and not _is_attacked(squares, home + 2, enemy):
            moves.append(Move(home, home + 2))
    if rights[queenside] and not squares[home - 1] and not squares[home - 2] and not squares[home - 3]:
        if not _is_attacked(squares, home - 1, enemy) and not _is_attacked(squares, home - 2, enemy):
            moves.append(Move(home, home - 2))


def _place(squares: List[int], move: Move, ep_square: Optional[int]) -> Optional[int]:
    """Relocate pieces for a move in place; return the captured piece, if any"""
    frm, to = move.from_square, move.to_square
    piece = squares[frm]
    captured = squares[to]
    kind = abs(piece)
    squares[frm] = EMPTY
    if kind == PAWN and to == ep_square and not captured:
        victim = to - 8 if piece > 0 else to + 8
        captured = squares[victim]
        squares[victim] = EMPTY
    if kind == KING and abs(to - frm) == 2:
        rook_from, rook_to = (frm + 3, frm + 1) if to > frm else (frm - 4, frm - 1)
        squares[rook_to] = squares[rook_from]
        squares[rook_from] = EMPTY
    if move.promotion:
        piece = move.promotion if piece > 0 else -move.promotion
    squares[to] = piece
    return captured or None


def captured_piece(board: Board, move: Move) -> Optional[int]:
    """The piece a move captures (en passant included), without legality checks"""
    return _place(list(board.squares), move, board.ep_square)


def generate_legal_moves(board: Board) -> List[Move]:
    """All legal moves of the side to move"""
    white = board.turn
    king_sq = board.king_square(white)
    legal = []
    for move in _pseudo_legal_moves(board):
        squares = list(board.squares)
        _place(squares, move, board.ep_square)
        target = move.to_square if move.from_square == king_sq else king_sq
        if not _is_attacked(squares, target, not white):
            legal.append(move)
    return legal


def _play(board: Board, move: Move) -> Board:
    squares = list(board.squares)
    piece = squares[move.from_square]
    captured = _place(squares, move, board.ep_square)

    castling = list(board.castling)
    if abs(piece) == KING:
        if piece > 0:
            castling[WHITE_KINGSIDE] = castling[WHITE_QUEENSIDE] = False
        else:
            castling[BLACK_KINGSIDE] = castling[BLACK_QUEENSIDE] = False
    for sq in (move.from_square, move.to_square):
        slot = _ROOK_HOMES.get(sq)
        if slot is not None:
            castling[slot] = False

    ep_square = None
    if abs(piece) == PAWN and abs(move.to_square - move.from_square) == 16:
        ep_square = (move.from_square + move.to_square) // 2

    halfmove = 0 if abs(piece) == PAWN or captured else board.halfmove_clock + 1
    fullmove = board.fullmove_number + (0 if board.turn else 1)
    return Board(tuple(squares), not board.turn, tuple(castling), ep_square, halfmove, fullmove)


def apply_move(board: Board, move: Move) -> Board:
    """Play a legal move and return the resulting position"""
    piece = board.squares[move.from_square]
    if not piece:
        raise IllegalMoveError(move.uci(), f"no piece on {square_name(move.from_square)}")
    if (piece > 0) != board.turn:
        raise IllegalMoveError(move.uci(), "piece does not belong to the side to move")
    if move not in generate_legal_moves(board):
        raise IllegalMoveError(move.uci(), f"not legal in {board.to_fen()}")
    return _play(board, move)


def gives_check(board: Board, move: Move) -> bool:
    return _play(board, move).is_check()


def mirror(board: Board) -> Board:
    """Flip ranks and swap colours, so the other side becomes white"""
    squares = [EMPTY] * 64
    for sq, piece in enumerate(board.squares):
        squares[mirror_square(sq)] = -piece
    wk, wq, bk, bq = board.castling
    ep_square = mirror_square(board.ep_square) if board.ep_square is not None else None
    return replace(board, squares=tuple(squares), turn=not board.turn,
                   castling=(bk, bq, wk, wq), ep_square=ep_square)


def perft(board: Board, depth: int) -> int:
    """Count the leaf nodes of the legal move tree"""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    if depth == 0:
        return 1
    moves = generate_legal_moves(board)
    if depth == 1:
        return len(moves)
    return sum(perft(_play(board, move), depth - 1) for move in moves)
