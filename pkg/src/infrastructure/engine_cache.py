import json
import logging
import os
import threading
from typing import Dict, Optional, Tuple

from src.core.exceptions import EngineCacheMissError, EngineError
from src.core.models import EngineEval

logger = logging.getLogger(__name__)


class EngineCache:
    """
    Position -> EngineEval cache keyed by (fen, depth), kept as JSON lines

    New entries are appended as they arrive; later lines win on load.
    """

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self._entries: Dict[Tuple[str, int], EngineEval] = {}
        self._lock = threading.Lock()
        if path and os.path.exists(path):
            self._load(path)

    def _load(self, path: str) -> None:
        with open(path, 'r', encoding='utf-8') as f:
            for number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    self._entries[(record["fen"], int(record["depth"]))] = EngineEval.from_record(record)
                except (ValueError, KeyError, TypeError) as e:
                    logger.warning(f"{path}:{number}: skipping bad cache line ({e})")
        logger.debug(f"Loaded {len(self._entries)} cached evaluations from {path}")

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, fen: str, depth: int) -> Optional[EngineEval]:
        return self._entries.get((fen, depth))

    def put(self, fen: str, depth: int, evaluation: EngineEval) -> None:
        record = evaluation.to_record(fen)
        record["depth"] = depth
        evaluation = EngineEval.from_record(record)
        with self._lock:
            if self._entries.get((fen, depth)) == evaluation:
                return
            self._entries[(fen, depth)] = evaluation
            if self.path:
                directory = os.path.dirname(self.path)
                if directory:
                    os.makedirs(directory, exist_ok=True)
                with open(self.path, 'a', encoding='utf-8') as f:
                    f.write(json.dumps(record, separators=(",", ":"), sort_keys=True) + "\n")


class CachedEngine:
    """
    Engine front that serves cached evaluations first

    In replay mode no engine is consulted and a miss is an error, so reports
    are reproduced from recorded engine output alone.
    """

    def __init__(self, cache: EngineCache, engine=None, depth: int = 12, replay: bool = False):
        if replay and (cache.path is None or not os.path.exists(cache.path)):
            raise EngineCacheMissError(f"Replay mode needs an existing cache file, got {cache.path!r}")
        if not replay and engine is None:
            raise EngineError("No engine configured and replay mode is off")
        self.cache = cache
        self.engine = engine
        self.depth = depth
        self.replay = replay
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def evaluate(self, fen: str, depth: Optional[int] = None) -> EngineEval:
        depth = depth or self.depth
        cached = self.cache.get(fen, depth)
        with self._lock:
            if cached is not None:
                self.hits += 1
                return cached
            self.misses += 1
        if self.replay:
            raise EngineCacheMissError(f"No cached evaluation for {fen} at depth {depth}")
        self.cache.put(fen, depth, self.engine.evaluate(fen, depth))
        return self.cache.get(fen, depth)
