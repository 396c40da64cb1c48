import json
import logging
import os
from typing import Iterable, Iterator, List, Optional

from src.core.exceptions import ShardError
from src.core.models import Tally, TrainingExample

logger = logging.getLogger(__name__)

SHARD_FORMAT = "maia2-shard"
SHARD_VERSION = 1
SHARD_SUFFIX = ".jsonl"
HEADER_LINE = json.dumps({"format": SHARD_FORMAT, "version": SHARD_VERSION}, separators=(",", ":"))


def _encode(example: TrainingExample) -> str:
    return json.dumps(example.to_record(), separators=(",", ":"), ensure_ascii=False)


class ShardWriter:
    """Append-only writer of one line-delimited shard file"""

    def __init__(self, path: str):
        self.path = path
        self.count = 0
        fresh = not os.path.exists(path) or os.path.getsize(path) == 0
        if not fresh:
            with open(path, 'r', encoding='utf-8') as f:
                if f.readline().rstrip("\n") != HEADER_LINE:
                    raise ShardError(f"Refusing to append to a file that is not a shard: {path}")
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        self._file = open(path, 'a', encoding='utf-8', newline='\n')
        if fresh:
            self._file.write(HEADER_LINE + "\n")

    def write(self, example: TrainingExample) -> None:
        self._file.write(_encode(example) + "\n")
        self.count += 1

    def write_all(self, examples: Iterable[TrainingExample]) -> int:
        for example in examples:
            self.write(example)
        return self.count

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()

    def __enter__(self) -> "ShardWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_shard(path: str, examples: Iterable[TrainingExample]) -> int:
    with ShardWriter(path) as writer:
        return writer.write_all(examples)


def read_shard(path: str, tally: Optional[Tally] = None) -> Iterator[TrainingExample]:
    """
    Stream the examples of a shard

    Corrupt lines are skipped and counted under "corrupt_lines". An empty
    file yields nothing.

    Raises:
        ShardError: The file is missing or carries a foreign header
    """
    tally = tally if tally is not None else Tally()
    try:
        handle = open(path, 'r', encoding='utf-8', errors='replace')
    except OSError as e:
        raise ShardError(f"Cannot open shard {path}: {e}")
    with handle:
        first = handle.readline()
        if not first:
            return
        try:
            header = json.loads(first)
        except ValueError:
            header = None
        if not isinstance(header, dict) or header.get("format") != SHARD_FORMAT:
            raise ShardError(f"Not a shard file: {path}")
        if header.get("version") != SHARD_VERSION:
            raise ShardError(f"Unsupported shard version {header.get('version')} in {path}")

        for number, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            try:
                example = TrainingExample.from_record(json.loads(line))
            except (ValueError, KeyError, TypeError) as e:
                logger.debug(f"{path}:{number}: corrupt record ({e})")
                tally["corrupt_lines"] += 1
                continue
            yield example


def list_shards(directory: str) -> List[str]:
    if os.path.isfile(directory):
        return [directory]
    if not os.path.isdir(directory):
        raise ShardError(f"Shard directory not found: {directory}")
    return sorted(
        os.path.join(directory, name) for name in os.listdir(directory) if name.endswith(SHARD_SUFFIX)
    )
