import logging
import os
from collections import Counter, deque
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..core.balancer import SkillBalancer, chunked
from ..core.config import BalancerConfig, BucketLayout, FilterConfig
from ..core.exceptions import PgnError, ShardError
from ..core.filtering import extract_examples, filter_game
from ..core.models import GameRecord, Tally, TrainingExample
from ..core.pgn import PgnReader
from ..infrastructure.file_manager import FileManager
from ..infrastructure.report_writer import ReportWriter
from ..infrastructure.shard_store import SHARD_SUFFIX, list_shards, read_shard, write_shard

logger = logging.getLogger(__name__)

INGEST_MANIFEST = "ingest_manifest.json"
EXAMPLE_MATRIX = "balance_examples.csv"
GAME_TABLE = "balance_games.csv"


def shard_name(index: int) -> str:
    return f"shard_{index:05d}{SHARD_SUFFIX}"


def pair_key(pair: Tuple[int, int]) -> str:
    return f"{pair[0]}-{pair[1]}"


@dataclass
class ChunkResult:
    index: int
    examples: List[TrainingExample]
    tally: Tally
    pair_counts: Counter


def process_chunk(index: int, games: List[GameRecord], filter_config: FilterConfig,
                  balancer_config: BalancerConfig, layout: BucketLayout) -> ChunkResult:
    """
    Balance one chunk of accepted games and extract its examples

    Pure in its inputs, so chunks can run in any worker. Examples are shuffled
    with a generator seeded by (seed, chunk index).
    """
    tally = Tally()
    counts: Counter = Counter()
    selected = SkillBalancer(balancer_config, layout).balance(games, counts)
    tally["selected"] += len(selected)
    examples: List[TrainingExample] = []
    for game in selected:
        examples.extend(extract_examples(game, filter_config, layout, tally))
    rng = np.random.default_rng([balancer_config.seed, index])
    examples = [examples[i] for i in rng.permutation(len(examples))]
    return ChunkResult(index, examples, tally, counts)


@dataclass
class IngestResult:
    shards: List[str]
    tally: Tally
    pair_counts: Counter = field(default_factory=Counter)
    manifest_path: Optional[str] = None


class IngestService:
    """Turn a PGN dump into balanced, filtered training shards"""

    def __init__(self, file_manager: FileManager):
        self.file_manager = file_manager

    def accepted_games(self, games: Iterable[GameRecord], config: FilterConfig, tally: Tally) -> Iterator[GameRecord]:
        for game in games:
            decision = filter_game(game, config)
            if decision.accepted:
                tally["accepted"] += 1
                yield game
            else:
                tally[f"rejected_{decision.reason}"] += 1

    def ingest(self, pgn_path: str, out_dir: str, filter_config: FilterConfig,
               balancer_config: BalancerConfig, layout: BucketLayout,
               workers: int = 1, progress: bool = False) -> IngestResult:
        """
        Stream, filter, balance and shard a PGN file

        Args:
            pgn_path: Plain-text PGN file
            out_dir: Shard directory; must not hold shards yet
            filter_config: Game and position filters
            balancer_config: Chunk size, per-pair cap and seed
            layout: Rating bucket layout
            workers: Chunk workers; shards are still written by this process alone
            progress: Show a progress bar

        Returns:
            IngestResult with shard paths, merged tally and selected games per pair
        """
        if not os.path.isfile(pgn_path):
            raise PgnError(f"PGN file not found: {pgn_path}")
        self.file_manager.create_directory(out_dir)
        if list_shards(out_dir):
            raise ShardError(f"Output directory already holds shards: {out_dir}")

        tally = Tally()
        pair_counts: Counter = Counter()
        shards: List[str] = []
        shard_sizes: Dict[str, int] = {}

        with open(pgn_path, 'rb') as stream:
            games = self.accepted_games(PgnReader(tally).read(stream), filter_config, tally)
            chunks = enumerate(chunked(games, balancer_config.chunk_size))
            bar = tqdm(disable=not progress, desc="ingest", unit="chunk")
            for result in self._run_chunks(chunks, filter_config, balancer_config, layout, workers):
                tally.merge(result.tally)
                pair_counts.update(result.pair_counts)
                path = os.path.join(out_dir, shard_name(result.index))
                shard_sizes[os.path.basename(path)] = write_shard(path, result.examples)
                shards.append(path)
                bar.update(1)
                logger.debug(f"Chunk {result.index}: {result.tally['selected']} games, "
                             f"{len(result.examples)} examples")
            bar.close()

        manifest = {
            "tally": tally.as_dict(),
            "pair_counts": {pair_key(pair): pair_counts[pair] for pair in sorted(pair_counts)},
            "filter": asdict(filter_config),
            "balancer": asdict(balancer_config),
            "bucket_layout": layout.name,
            "shards": shard_sizes,
        }
        manifest_path = os.path.join(out_dir, INGEST_MANIFEST)
        self.file_manager.write_json(manifest_path, manifest)
        logger.info(f"Ingested {tally['games_read']} games: {tally['accepted']} accepted, "
                    f"{tally['selected']} selected, {tally['examples']} examples in {len(shards)} shards")
        return IngestResult(shards, tally, pair_counts, manifest_path)

    def _run_chunks(self, chunks, filter_config, balancer_config, layout, workers: int) -> Iterator[ChunkResult]:
        """Chunk results in chunk order, computed in-process or in a bounded process pool"""
        if workers <= 1:
            for index, games in chunks:
                yield process_chunk(index, games, filter_config, balancer_config, layout)
            return
        executor: Executor = ProcessPoolExecutor(max_workers=workers)
        pending = deque()
        try:
            for index, games in chunks:
                pending.append(executor.submit(process_chunk, index, games, filter_config, balancer_config, layout))
                if len(pending) >= 2 * workers:
                    yield pending.popleft().result()
            while pending:
                yield pending.popleft().result()
        finally:
            executor.shutdown(wait=True, cancel_futures=True)

    def balance_stats(self, shards: str, layout: BucketLayout, report_writer: ReportWriter,
                      tally: Optional[Tally] = None) -> Dict[str, str]:
        """
        Example counts per (active, opponent) cell and, when the ingest manifest
        is present, the lower-triangular white x black game table
        """
        tally = tally if tally is not None else Tally()
        n = layout.n_buckets
        labels = layout.labels()
        matrix = np.zeros((n, n), dtype=np.int64)
        for path in list_shards(shards):
            for example in read_shard(path, tally):
                matrix[example.active_bucket, example.opponent_bucket] += 1
        written = {"examples": report_writer.write_matrix(EXAMPLE_MATRIX, labels, matrix.tolist())}

        manifest_path = os.path.join(shards if os.path.isdir(shards) else os.path.dirname(shards), INGEST_MANIFEST)
        if not os.path.isfile(manifest_path):
            logger.warning(f"No {INGEST_MANIFEST} next to the shards; skipping the game table")
            return written
        pair_counts = self.file_manager.read_json(manifest_path).get("pair_counts", {})
        table: List[List[Optional[int]]] = [[None] * n for _ in range(n)]
        for row in range(n):
            for column in range(row + 1):
                table[row][column] = int(pair_counts.get(pair_key((column, row)), 0))
        written["games"] = report_writer.write_matrix(GAME_TABLE, labels, table, corner="white\\black")
        return written
