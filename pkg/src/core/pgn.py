import io
import logging
from typing import BinaryIO, Iterator, Optional, TextIO, Union

import chess
import chess.pgn

from .models import RESULT_CODES, GameRecord, MoveRecord, Tally

logger = logging.getLogger(__name__)


def parse_time_control(text: Optional[str]):
    """
    Parse a TimeControl header value

    Args:
        text: Header value such as "600+5" or "600"

    Returns:
        (base_seconds, increment_seconds), or None for "-", "?" and unparsable values
    """
    if not text:
        return None
    text = text.strip()
    base, _, increment = text.partition("+")
    try:
        base_seconds = int(base)
        increment_seconds = int(increment) if increment else 0
    except ValueError:
        return None
    if base_seconds < 0 or increment_seconds < 0:
        return None
    return base_seconds, increment_seconds


def _parse_elo(value: Optional[str]) -> Optional[int]:
    try:
        elo = int(value) if value is not None else None
    except ValueError:
        return None
    return elo if elo and elo > 0 else None


class PgnReader:
    """Stream GameRecords out of concatenated PGN text"""

    def __init__(self, tally: Optional[Tally] = None):
        self.tally = tally if tally is not None else Tally()

    def read(self, stream: Union[BinaryIO, TextIO]) -> Iterator[GameRecord]:
        """
        Yield one GameRecord per well-formed game

        Malformed games (bad headers, illegal movetext, empty movetext) are
        skipped and counted under "malformed"; the stream never aborts.
        """
        handle = stream
        if isinstance(stream, (io.RawIOBase, io.BufferedIOBase)):
            handle = io.TextIOWrapper(stream, encoding="utf-8", errors="replace")

        while True:
            try:
                game = chess.pgn.read_game(handle)
            except (ValueError, UnicodeDecodeError) as e:
                logger.warning(f"Unreadable PGN game: {e}")
                self.tally["malformed"] += 1
                continue
            if game is None:
                break
            self.tally["games_read"] += 1
            record = self._to_record(game)
            if record is None:
                self.tally["malformed"] += 1
                continue
            if not record.has_clock:
                self.tally["no_clock_games"] += 1
            yield record

    def _to_record(self, game: chess.pgn.Game) -> Optional[GameRecord]:
        headers = game.headers
        if game.errors:
            logger.debug(f"Skipping game {headers.get('Site', '?')}: {game.errors[0]}")
            return None
        if headers.get("FEN") or headers.get("Variant", "Standard").lower() not in ("standard", "chess"):
            return None

        white_elo = _parse_elo(headers.get("WhiteElo"))
        black_elo = _parse_elo(headers.get("BlackElo"))
        result = RESULT_CODES.get(headers.get("Result", "*"))
        if white_elo is None or black_elo is None or result is None:
            return None

        moves = []
        for node in game.mainline():
            clock = node.clock()
            if clock is not None and clock < 0:
                return None
            moves.append(MoveRecord(node.move.uci(), int(clock) if clock is not None else None))
        if not moves:
            return None

        return GameRecord(
            white_elo=white_elo,
            black_elo=black_elo,
            event=headers.get("Event", ""),
            time_control=parse_time_control(headers.get("TimeControl")),
            result=result,
            moves=moves,
            site=headers.get("Site", ""),
        )


def parse_pgn_stream(stream: Union[BinaryIO, TextIO], tally: Optional[Tally] = None) -> Iterator[GameRecord]:
    return PgnReader(tally).read(stream)
