import bisect
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .exceptions import ConfigError


@dataclass
class FilterConfig:
    """Game and position filters applied during ingestion"""
    min_ply: int = 10
    max_ply: int = 300
    min_clock_seconds: int = 30
    require_rapid: bool = True

    def validate(self) -> None:
        if not 0 <= self.min_ply < self.max_ply:
            raise ConfigError(f"filter: need 0 <= min_ply < max_ply, got {self.min_ply}, {self.max_ply}")
        if self.min_clock_seconds < 0:
            raise ConfigError("filter: min_clock_seconds must be non-negative")


@dataclass
class BalancerConfig:
    """Chunked skill-combination balancing"""
    chunk_size: int = 20000
    per_combo_cap: int = 20
    seed: int = 0

    def validate(self) -> None:
        if self.chunk_size < 1:
            raise ConfigError("balancer: chunk_size must be positive")
        if not 1 <= self.per_combo_cap <= self.chunk_size:
            raise ConfigError(f"balancer: need 1 <= per_combo_cap <= chunk_size, got {self.per_combo_cap}")


@dataclass(frozen=True)
class BucketLayout:
    """Rating edges that split ratings into categorical skill buckets"""
    name: str
    edges: Tuple[int, ...]
    right_inclusive: bool = False

    @property
    def n_buckets(self) -> int:
        return len(self.edges) + 1

    def bucket_of(self, rating: int) -> int:
        if rating <= 0:
            raise ValueError(f"rating must be positive, got {rating}")
        if self.right_inclusive:
            return bisect.bisect_left(self.edges, rating)
        return bisect.bisect_right(self.edges, rating)

    def label(self, bucket: int) -> str:
        if bucket == 0:
            return f"<{self.edges[0]}" if not self.right_inclusive else f"<={self.edges[0]}"
        if bucket == len(self.edges):
            return f">={self.edges[-1]}" if not self.right_inclusive else f">{self.edges[-1]}"
        low, high = self.edges[bucket - 1], self.edges[bucket]
        if self.right_inclusive:
            return f"{low + 1}-{high}"
        return f"{low}-{high - 1}"

    def labels(self) -> List[str]:
        return [self.label(b) for b in range(self.n_buckets)]


TABLE_LAYOUT = BucketLayout("table", tuple(range(1100, 2001, 100)))
EMBEDDING_LAYOUT = BucketLayout("embedding", tuple(range(1000, 2001, 100)), right_inclusive=True)
BUCKET_LAYOUTS = {layout.name: layout for layout in (TABLE_LAYOUT, EMBEDDING_LAYOUT)}


def get_bucket_layout(name: str) -> BucketLayout:
    try:
        return BUCKET_LAYOUTS[name]
    except KeyError:
        raise ConfigError(f"unknown bucket layout {name!r}, expected one of {sorted(BUCKET_LAYOUTS)}")


@dataclass
class ModelConfig:
    """
    Network hyperparameters.

    input_channels = C_input, mid_channels = C_mid, patch_channels = C_patch,
    conv_blocks = K_Conv, attention_blocks = K_Att, skill_dim = d_s,
    attention_dim = d_att, head_dim = d_h, heads = h.
    """
    input_channels: int = 18
    mid_channels: int = 256
    patch_channels: int = 8
    conv_blocks: int = 12
    attention_blocks: int = 2
    skill_dim: int = 128
    attention_dim: int = 1024
    head_dim: int = 64
    heads: int = 16
    n_buckets: int = 11
    vocab_size: int = 4168
    aux_dim: int = 4309
    skill_attention_enabled: bool = True
    aux_head_enabled: bool = True
    policy_weight: float = 1.0
    aux_weight: float = 1.0
    value_weight: float = 1.0

    @classmethod
    def toy(cls, **overrides) -> "ModelConfig":
        values = dict(mid_channels=16, conv_blocks=2, attention_blocks=1, skill_dim=16,
                      attention_dim=32, head_dim=8, heads=4)
        values.update(overrides)
        return cls(**values)

    @property
    def ffn_dim(self) -> int:
        return 4 * self.attention_dim

    @property
    def hidden_width(self) -> int:
        """Width of the flattened representation feeding the heads"""
        if self.skill_attention_enabled:
            return self.patch_channels * self.attention_dim
        return self.patch_channels * 64 + 2 * self.skill_dim

    def validate(self) -> None:
        for name in ("input_channels", "mid_channels", "patch_channels", "conv_blocks", "skill_dim",
                     "attention_dim", "head_dim", "heads", "n_buckets", "vocab_size", "aux_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model: {name} must be positive")
        if self.attention_blocks < 0:
            raise ConfigError("model: attention_blocks must be non-negative")
        for name in ("policy_weight", "aux_weight", "value_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"model: {name} must be non-negative")


MODEL_PRESETS = {"full": ModelConfig, "toy": ModelConfig.toy}


@dataclass
class OptimizerConfig:
    """Adaptive-moment optimizer with decoupled weight decay"""
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 8192
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_steps: int = 1000
    seed: int = 0
    schedule: str = "constant"
    warmup_steps: int = 0
    shuffle_buffer: int = 4096
    checkpoint_every: int = 0
    log_every: int = 10

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("optimizer: learning_rate must be positive")
        if self.weight_decay < 0:
            raise ConfigError("optimizer: weight_decay must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("optimizer: batch_size must be at least 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("optimizer: betas must lie in [0, 1)")
        if self.schedule not in ("constant", "warmup"):
            raise ConfigError(f"optimizer: unknown schedule {self.schedule!r}")
        if self.schedule == "warmup" and self.warmup_steps < 1:
            raise ConfigError("optimizer: warmup schedule needs warmup_steps >= 1")
        if self.shuffle_buffer < 1:
            raise ConfigError("optimizer: shuffle_buffer must be at least 1")


@dataclass
class EvalConfig:
    """Evaluation harness and engine settings"""
    engine_path: str = ""
    depth: int = 12
    engine_timeout: float = 120.0
    engine_workers: int = 1
    cache_path: str = ""
    replay: bool = False
    monotonic_epsilon: float = 0.0
    min_cell_count: int = 1
    agreement_fixed_bucket: Optional[int] = None
    max_positions: int = 0
    batch_size: int = 256

    def validate(self) -> None:
        if self.depth < 1:
            raise ConfigError("eval: depth must be at least 1")
        if self.engine_workers < 1:
            raise ConfigError("eval: engine_workers must be at least 1")
        if self.monotonic_epsilon < 0:
            raise ConfigError("eval: monotonic_epsilon must be non-negative")


@dataclass
class ProbeConfig:
    """Linear concept probing settings"""
    positions: int = 5000
    concepts: List[str] = field(default_factory=lambda: [
        "material_balance", "active_two_bishops", "opponent_two_bishops",
        "can_capture_opponent_queen", "capture_possible_on_d3",
    ])
    cv_folds: int = 5
    test_fraction: float = 0.2
    alpha_min: float = 1e-4
    alpha_max: float = 10.0
    alpha_count: int = 20
    seed: int = 3

    def validate(self) -> None:
        if self.cv_folds < 2:
            raise ConfigError("probe: cv_folds must be at least 2")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("probe: test_fraction must lie in (0, 1)")
        if not 0 < self.alpha_min < self.alpha_max or self.alpha_count < 1:
            raise ConfigError("probe: invalid alpha grid")


@dataclass
class RunSettings:
    """Run-wide knobs: seed, parallelism, determinism"""
    seed: int = 0
    workers: int = 0
    reference_mode: bool = False
    bucket_layout: str = "table"
    log_level: str = "INFO"

    def validate(self) -> None:
        if self.workers < 0:
            raise ConfigError("run: workers must be non-negative (0 = available parallelism)")
        get_bucket_layout(self.bucket_layout)
