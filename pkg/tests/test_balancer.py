from collections import Counter

from src.core.balancer import SkillBalancer, balance_chunk, chunked, skill_pair
from src.core.config import BalancerConfig
from src.core.models import WHITE_WIN, GameRecord, MoveRecord


def rating(bucket: int) -> int:
    return 1050 + 100 * bucket


def game(white_bucket: int, black_bucket: int, tag: int = 0) -> GameRecord:
    return GameRecord(rating(white_bucket), rating(black_bucket), "Rated Rapid game", (600, 0),
                      WHITE_WIN, [MoveRecord("e2e4", 600)], site=str(tag))


def test_skill_pair_is_unordered():
    assert skill_pair(game(3, 7)) == skill_pair(game(7, 3)) == (3, 7)


def test_cap_limits_a_single_pair():
    games = [game(1, 1, i) for i in range(100)]
    selected = balance_chunk(games, BalancerConfig(chunk_size=1000, per_combo_cap=20))
    assert len(selected) == 20
    assert [g.site for g in selected] == [str(i) for i in range(20)]


def test_distinct_pairs_are_all_kept():
    games = [game(w, b) for w in range(11) for b in range(11) if w <= b][:20]
    assert len(balance_chunk(games, BalancerConfig(per_combo_cap=1))) == 20


def test_scan_stops_when_every_pair_is_full():
    cap = 2
    full = [game(low, high) for low in range(11) for high in range(low, 11) for _ in range(cap)]
    extra = [game(0, 0) for _ in range(500)]
    balancer = SkillBalancer(BalancerConfig(chunk_size=5000, per_combo_cap=cap))
    selected = balancer.balance(full + extra)
    assert balancer.key_count == 66
    assert len(selected) == 66 * cap
    assert balancer.last_scanned == len(full)


def test_chunk_size_bounds_the_scan():
    games = [game(i % 11, (i * 7) % 11, i) for i in range(300)]
    balancer = SkillBalancer(BalancerConfig(chunk_size=50, per_combo_cap=20))
    selected = balancer.balance(iter(games))
    assert balancer.last_scanned == 50
    assert len(selected) == 50


def test_counts_never_exceed_cap():
    games = [game(i % 4, (i // 4) % 3, i) for i in range(400)]
    counts = Counter()
    SkillBalancer(BalancerConfig(chunk_size=400, per_combo_cap=7)).balance(games, counts)
    assert counts and max(counts.values()) <= 7


def test_chunked_splits_in_order():
    assert list(chunked(range(7), 3)) == [[0, 1, 2], [3, 4, 5], [6]]
    assert list(chunked([], 3)) == []
