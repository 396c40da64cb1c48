import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Union, get_args, get_origin, get_type_hints

from ..core.config import (MODEL_PRESETS, BalancerConfig, BucketLayout, EvalConfig, FilterConfig, ModelConfig,
                           OptimizerConfig, ProbeConfig, RunSettings, get_bucket_layout)
from ..core.exceptions import ConfigError
from ..infrastructure.config_store import ConfigStore

logger = logging.getLogger(__name__)

SECTIONS = {
    "filter": FilterConfig,
    "balancer": BalancerConfig,
    "model": ModelConfig,
    "optimizer": OptimizerConfig,
    "eval": EvalConfig,
    "probe": ProbeConfig,
    "run": RunSettings,
}

# Per-module seeds are run.seed + offset
SEED_OFFSETS = {"ingest": 0, "train": 1, "eval": 2, "probe": 3}

# Filled in from other settings, never read from the file
DERIVED_FIELDS = {
    "balancer": {"seed"},
    "optimizer": {"seed"},
    "probe": {"seed"},
    "model": {"n_buckets"},
}


@dataclass
class RunConfig:
    filter: FilterConfig = field(default_factory=FilterConfig)
    balancer: BalancerConfig = field(default_factory=BalancerConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    run: RunSettings = field(default_factory=RunSettings)
    model_preset: str = "full"

    @property
    def layout(self) -> BucketLayout:
        return get_bucket_layout(self.run.bucket_layout)

    def seed_for(self, module: str) -> int:
        return self.run.seed + SEED_OFFSETS[module]

    def finalize(self) -> "RunConfig":
        """Fan out the run seed and size the skill table to the bucket layout"""
        self.balancer.seed = self.seed_for("ingest")
        self.optimizer.seed = self.seed_for("train")
        self.probe.seed = self.seed_for("probe")
        self.model.n_buckets = self.layout.n_buckets
        return self

    def validate(self) -> None:
        self.run.validate()
        for name in ("filter", "balancer", "model", "optimizer", "eval", "probe"):
            getattr(self, name).validate()
        if self.eval.agreement_fixed_bucket is not None and not 0 <= self.eval.agreement_fixed_bucket < self.model.n_buckets:
            raise ConfigError("eval: agreement_fixed_bucket outside the bucket range")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def coerce(text: str, annotation) -> Any:
    """Convert config text to a dataclass field's type"""
    origin = get_origin(annotation)
    if origin is Union:
        inner = [arg for arg in get_args(annotation) if arg is not type(None)]
        if text.strip().lower() in ("", "none"):
            return None
        return coerce(text, inner[0])
    if origin in (list, List):
        item = get_args(annotation)[0] if get_args(annotation) else str
        return [coerce(part.strip(), item) for part in text.split(",") if part.strip()]
    if annotation is bool:
        return _parse_bool(text)
    if annotation is int:
        return int(text)
    if annotation is float:
        return float(text)
    return text.strip()


def render(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(str(item) for item in value)
    return str(value)


class SettingsService:
    """Build, override and write back the run configuration"""

    def __init__(self, config_store: ConfigStore):
        self.config_store = config_store

    def load(self, overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> RunConfig:
        """
        Read every section of the store into a validated RunConfig

        Args:
            overrides: section -> field -> value, applied after the file (CLI flags)

        Raises:
            ConfigError: Unknown section or key, or a value that does not parse or validate
        """
        unknown = [name for name in self.config_store.sections() if name not in SECTIONS]
        if unknown:
            raise ConfigError(f"Unknown config section(s): {', '.join(unknown)}")

        model_values = self.config_store.get_section("model")
        preset = model_values.pop("preset", "full").strip()
        if preset not in MODEL_PRESETS:
            raise ConfigError(f"model: unknown preset {preset!r}, expected one of {sorted(MODEL_PRESETS)}")

        built: Dict[str, Any] = {}
        for name, cls in SECTIONS.items():
            base = MODEL_PRESETS[preset]() if name == "model" else cls()
            values = model_values if name == "model" else self.config_store.get_section(name)
            built[name] = self._apply(name, base, values, from_text=True)

        config = RunConfig(model_preset=preset, **built)
        for name, values in (overrides or {}).items():
            if name not in SECTIONS:
                raise ConfigError(f"Unknown override section: {name}")
            setattr(config, name, self._apply(name, getattr(config, name), values, from_text=False))

        config.finalize()
        config.validate()
        return config

    def _apply(self, section: str, base, values: Dict[str, Any], from_text: bool):
        hints = get_type_hints(type(base))
        known = {f.name for f in fields(base)} - DERIVED_FIELDS.get(section, set())
        changes = {}
        for key, raw in values.items():
            if raw is None and not from_text:
                continue
            if key not in known:
                raise ConfigError(f"{section}: unknown key {key!r}")
            try:
                changes[key] = coerce(raw, hints[key]) if from_text else raw
            except (ValueError, TypeError) as e:
                raise ConfigError(f"{section}.{key}: {e}")
        return replace(base, **changes)

    def dump(self, config: RunConfig, path: str) -> str:
        """Write the fully defaulted configuration as a readable INI file"""
        store = ConfigStore()
        for name in SECTIONS:
            section = getattr(config, name)
            skip = DERIVED_FIELDS.get(name, set())
            values = {f.name: render(getattr(section, f.name)) for f in fields(section) if f.name not in skip}
            if name == "model":
                values = {"preset": config.model_preset, **values}
            store.set_section(name, values)
        return store.save(path)
