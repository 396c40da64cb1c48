import logging
import queue
import shlex
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple, Union

from src.core.board import parse_fen
from src.core.exceptions import EngineError, EngineProtocolError, EngineTimeoutError
from src.core.models import EngineEval, Tally

logger = logging.getLogger(__name__)

SENT = ">"
RECEIVED = "<"
HANDSHAKE_TIMEOUT = 30.0


def parse_info_line(line: str) -> Optional[Tuple[int, Optional[int], Optional[int]]]:
    """
    Parse an "info" line carrying a score

    Returns:
        (depth, cp, mate) with exactly one of cp / mate set, or None when the
        line has no exact score (bound scores are ignored)
    """
    tokens = line.split()
    if not tokens or tokens[0] != "info" or "score" not in tokens:
        return None
    if "lowerbound" in tokens or "upperbound" in tokens:
        return None
    try:
        depth = int(tokens[tokens.index("depth") + 1]) if "depth" in tokens else 0
        at = tokens.index("score")
        kind, value = tokens[at + 1], int(tokens[at + 2])
    except (ValueError, IndexError):
        return None
    if kind == "cp":
        return depth, value, None
    if kind == "mate":
        return depth, None, value
    return None


def parse_bestmove(line: str) -> Optional[str]:
    """UCI text of the best move, or None for "(none)" / "0000" """
    tokens = line.split()
    if len(tokens) < 2 or tokens[0] != "bestmove":
        raise EngineProtocolError(f"not a bestmove line: {line!r}")
    return None if tokens[1] in ("(none)", "0000") else tokens[1]


class _EngineExited(EngineError):
    pass


class UciEngine:
    """
    One UCI engine child process; requests are strictly serialized

    Every line sent and received is kept in transcript as (direction, text).
    """

    def __init__(self, command: Union[str, Sequence[str]], depth: int = 12,
                 timeout: float = 120.0, name: str = "engine"):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.depth = depth
        self.timeout = timeout
        self.name = name
        self.transcript: List[Tuple[str, str]] = []
        self.restarts = 0
        self._process: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._awaiting_bestmove = False
        self._lock = threading.Lock()

    def start(self) -> "UciEngine":
        try:
            self._process = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True, bufsize=1,
            )
        except OSError as e:
            raise EngineError(f"Cannot start engine {self.command!r}: {e}")
        self._lines = queue.Queue()
        self._awaiting_bestmove = False
        threading.Thread(target=self._pump, args=(self._process, self._lines), daemon=True).start()
        deadline = time.monotonic() + HANDSHAKE_TIMEOUT
        self._send("uci")
        self._wait_for("uciok", deadline)
        self._sync(deadline)
        return self

    @staticmethod
    def _pump(process: subprocess.Popen, lines: "queue.Queue[Optional[str]]") -> None:
        for line in process.stdout:
            lines.put(line.rstrip("\r\n"))
        lines.put(None)

    def _send(self, line: str) -> None:
        if line.startswith("go") and self._awaiting_bestmove:
            raise EngineProtocolError("go sent before the previous search returned bestmove")
        if self._process is None or self._process.poll() is not None:
            raise _EngineExited(f"{self.name} is not running")
        self.transcript.append((SENT, line))
        try:
            self._process.stdin.write(line + "\n")
            self._process.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise _EngineExited(f"{self.name} closed its input: {e}")

    def _read(self, deadline: float) -> str:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise EngineTimeoutError(f"{self.name} did not answer within {self.timeout}s")
        try:
            line = self._lines.get(timeout=remaining)
        except queue.Empty:
            raise EngineTimeoutError(f"{self.name} did not answer within {self.timeout}s")
        if line is None:
            raise _EngineExited(f"{self.name} exited")
        self.transcript.append((RECEIVED, line))
        return line

    def _wait_for(self, token: str, deadline: float) -> None:
        while self._read(deadline).split()[:1] != [token]:
            pass

    def _sync(self, deadline: float) -> None:
        """Resynchronise: drain everything up to the readyok that answers our isready"""
        self._send("isready")
        while True:
            line = self._read(deadline)
            if line.startswith("bestmove"):
                self._awaiting_bestmove = False
            if line == "readyok":
                return

    def evaluate(self, fen: str, depth: Optional[int] = None) -> EngineEval:
        """
        Search a position to a fixed depth

        A crashed engine is restarted once and the search retried; a protocol
        desync is repaired with isready before retrying.

        Raises:
            EngineTimeoutError: The search did not finish in time (the engine is restarted)
            EngineError: The engine crashed twice
        """
        depth = depth or self.depth
        with self._lock:
            if self._process is None:
                self.start()
            try:
                return self._search(fen, depth)
            except _EngineExited as e:
                logger.warning(f"{self.name} crashed ({e}); restarting once")
                self._restart()
                try:
                    return self._search(fen, depth)
                except _EngineExited as again:
                    raise EngineError(f"{self.name} crashed twice on {fen}: {again}")
            except EngineProtocolError as e:
                logger.warning(f"{self.name} protocol desync ({e}); resyncing")
                self._sync(time.monotonic() + self.timeout)
                return self._search(fen, depth)
            except EngineTimeoutError:
                self._restart()
                raise

    def _restart(self) -> None:
        self.restarts += 1
        self._kill()
        self.start()

    def _search(self, fen: str, depth: int) -> EngineEval:
        deadline = time.monotonic() + self.timeout
        self._send("ucinewgame")
        self._sync(deadline)
        self._send(f"position fen {fen}")
        self._send(f"go depth {depth}")
        self._awaiting_bestmove = True

        at_depth = None
        latest = None
        while True:
            line = self._read(deadline)
            if line.startswith("info"):
                parsed = parse_info_line(line)
                if parsed is not None:
                    latest = parsed
                    if parsed[0] == depth:
                        at_depth = parsed
            elif line.startswith("bestmove"):
                self._awaiting_bestmove = False
                best = parse_bestmove(line)
                break

        if best is None:
            mated = parse_fen(fen).is_check()
            return EngineEval(cp=None, mate=0 if mated else None, best_move=None, depth=depth, terminal=True)
        score = at_depth or latest
        if score is None:
            raise EngineProtocolError(f"{self.name} returned bestmove without a score for {fen}")
        _, cp, mate = score
        return EngineEval(cp=cp, mate=mate, best_move=best, depth=depth)

    def _kill(self) -> None:
        if self._process is None:
            return
        try:
            self._process.kill()
            self._process.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            pass
        self._process = None

    def close(self) -> None:
        with self._lock:
            if self._process is not None and self._process.poll() is None:
                try:
                    self._send("quit")
                    self._process.wait(timeout=5)
                except (EngineError, subprocess.TimeoutExpired):
                    pass
            self._kill()

    def __enter__(self) -> "UciEngine":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()


class EnginePool:
    """Independent engine processes behind a thread pool, one request per process at a time"""

    def __init__(self, command: Union[str, Sequence[str]], size: int = 1,
                 depth: int = 12, timeout: float = 120.0):
        self.engines = [UciEngine(command, depth, timeout, name=f"engine-{i}") for i in range(size)]
        self.depth = depth
        self._idle: "queue.Queue[UciEngine]" = queue.Queue()
        for engine in self.engines:
            self._idle.put(engine)
        self._executor = ThreadPoolExecutor(max_workers=size)

    def evaluate(self, fen: str, depth: Optional[int] = None) -> EngineEval:
        engine = self._idle.get()
        try:
            return engine.evaluate(fen, depth or self.depth)
        finally:
            self._idle.put(engine)

    def evaluate_many(self, fens: Sequence[str], depth: Optional[int] = None,
                      tally: Optional[Tally] = None) -> List[Optional[EngineEval]]:
        """Evaluate in parallel; failed positions come back as None and are tallied"""
        tally = tally if tally is not None else Tally()
        futures = [self._executor.submit(self.evaluate, fen, depth) for fen in fens]
        results: List[Optional[EngineEval]] = []
        for fen, future in zip(fens, futures):
            try:
                results.append(future.result())
            except EngineTimeoutError:
                logger.warning(f"Engine timeout on {fen}")
                tally["engine_timeout"] += 1
                results.append(None)
            except EngineError as e:
                logger.warning(f"Engine failure on {fen}: {e}")
                tally["engine_error"] += 1
                results.append(None)
        return results

    def close(self) -> None:
        self._executor.shutdown(wait=True)
        for engine in self.engines:
            engine.close()

    def __enter__(self) -> "EnginePool":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
