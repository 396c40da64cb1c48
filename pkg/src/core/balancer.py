import itertools
import logging
from collections import Counter
from typing import Iterable, Iterator, List, Optional, Tuple

from .config import TABLE_LAYOUT, BalancerConfig, BucketLayout
from .models import GameRecord

logger = logging.getLogger(__name__)

SkillPair = Tuple[int, int]


def skill_pair(game: GameRecord, layout: BucketLayout = TABLE_LAYOUT) -> SkillPair:
    """Unordered (low, high) bucket pair of the two players"""
    white = layout.bucket_of(game.white_elo)
    black = layout.bucket_of(game.black_elo)
    return (white, black) if white <= black else (black, white)


class SkillBalancer:
    """Cap the number of games per skill combination within a chunk"""

    def __init__(self, config: BalancerConfig, layout: BucketLayout = TABLE_LAYOUT):
        self.config = config
        self.layout = layout
        n = layout.n_buckets
        self.key_count = n * (n + 1) // 2
        self.last_scanned = 0

    def balance(self, games: Iterable[GameRecord],
                counts: Optional[Counter] = None) -> List[GameRecord]:
        """
        Select games in input order while their pair is below the cap

        At most chunk_size games are consumed. Scanning stops as soon as
        every pair holds per_combo_cap games.

        Args:
            games: Accepted games of one chunk
            counts: Optional counter that receives selected games per pair

        Returns:
            The selected games, in input order
        """
        cap = self.config.per_combo_cap
        counts = counts if counts is not None else Counter()
        full = sum(1 for value in counts.values() if value >= cap)
        selected = []
        self.last_scanned = 0
        for game in itertools.islice(games, self.config.chunk_size):
            self.last_scanned += 1
            key = skill_pair(game, self.layout)
            if counts[key] >= cap:
                continue
            counts[key] += 1
            selected.append(game)
            if counts[key] == cap:
                full += 1
                if full == self.key_count:
                    logger.debug(f"All {self.key_count} skill pairs full after {self.last_scanned} games")
                    break
        return selected


def balance_chunk(games: Iterable[GameRecord], config: BalancerConfig,
                  layout: BucketLayout = TABLE_LAYOUT) -> List[GameRecord]:
    return SkillBalancer(config, layout).balance(games)


def chunked(items: Iterable, size: int) -> Iterator[list]:
    iterator = iter(items)
    while True:
        chunk = list(itertools.islice(iterator, size))
        if not chunk:
            return
        yield chunk
