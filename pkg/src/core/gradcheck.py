"""Finite-difference verification of the network's analytic gradients."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import torch

from .config import ModelConfig
from .encoding import AUX_DIM, INPUT_CHANNELS, EncodedBatch
from .network import SkillAwareNet, batch_tensors, compute_loss

logger = logging.getLogger(__name__)

# Relative errors are taken against max(|analytic|, |numeric|, RELATIVE_FLOOR)
RELATIVE_FLOOR = 1e-5


@dataclass
class CoordinateCheck:
    path: str
    index: int
    analytic: float
    numeric: float
    relative_error: float


@dataclass
class GradCheckReport:
    tolerance: float
    epsilon: float
    checks: List[CoordinateCheck] = field(default_factory=list)

    @property
    def max_error(self) -> float:
        return max((c.relative_error for c in self.checks), default=0.0)

    @property
    def worst(self) -> Optional[CoordinateCheck]:
        return max(self.checks, key=lambda c: c.relative_error, default=None)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and self.max_error < self.tolerance

    def failures(self) -> List[CoordinateCheck]:
        return [c for c in self.checks if not c.relative_error < self.tolerance]


def random_batch(config: ModelConfig, size: int, rng: np.random.Generator) -> EncodedBatch:
    """Synthetic inputs and labels shaped like encoded examples"""
    return EncodedBatch(
        x=(rng.random((size, INPUT_CHANNELS, 8, 8)) < 0.2).astype(np.float64),
        active=rng.integers(0, config.n_buckets, size),
        opponent=rng.integers(0, config.n_buckets, size),
        policy=rng.integers(0, config.vocab_size, size),
        aux=(rng.random((size, AUX_DIM)) < 0.1).astype(np.float64),
        value=rng.integers(-1, 2, size).astype(np.float64),
    )


def gradient_check(model_config: ModelConfig, n_coords: int = 40, epsilon: float = 1e-4,
                   tolerance: float = 1e-3, seed: int = 0, batch_size: int = 4,
                   model: Optional[SkillAwareNet] = None,
                   corrupt_path: Optional[str] = None) -> GradCheckReport:
    """
    Compare analytic gradients to central differences in float64

    Every parameter tensor gets at least one coordinate; the remaining
    coordinates up to n_coords are drawn across all parameters.

    Args:
        model_config: Network configuration, toy sized
        n_coords: Total coordinates to check
        epsilon: Finite-difference step
        tolerance: Pass iff every relative error is below it
        seed: Seeds the initialisation, the batch and the coordinate draw
        batch_size: Synthetic batch size
        model: Check this network instead of a fresh one (a float64 copy is used)
        corrupt_path: Parameter whose backward pass is deliberately distorted

    Returns:
        The per-coordinate report
    """
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    net = SkillAwareNet(model_config) if model is None else _clone(model)
    net = net.double()
    tensors = batch_tensors(random_batch(model_config, batch_size, rng), dtype=torch.float64)
    params = dict(net.named_parameters())

    handle = None
    if corrupt_path is not None:
        handle = params[corrupt_path].register_hook(lambda grad: grad * 1.5 + 1e-2)

    def loss_value() -> torch.Tensor:
        output = net(tensors["x"], tensors["active"], tensors["opponent"])
        return compute_loss(output, tensors["policy"], tensors["aux"], tensors["value"], model_config).total

    net.zero_grad(set_to_none=True)
    loss_value().backward()
    grads = {path: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
             for path, p in params.items()}
    if handle is not None:
        handle.remove()

    paths = list(params)
    chosen = [(path, int(rng.integers(params[path].numel()))) for path in paths]
    sizes = np.array([params[path].numel() for path in paths], dtype=np.float64)
    while len(chosen) < n_coords:
        path = paths[int(rng.choice(len(paths), p=sizes / sizes.sum()))]
        chosen.append((path, int(rng.integers(params[path].numel()))))

    report = GradCheckReport(tolerance=tolerance, epsilon=epsilon)
    with torch.no_grad():
        for path, index in chosen:
            flat = params[path].view(-1)
            original = flat[index].item()
            flat[index] = original + epsilon
            plus = loss_value().item()
            flat[index] = original - epsilon
            minus = loss_value().item()
            flat[index] = original
            numeric = (plus - minus) / (2 * epsilon)
            analytic = grads[path].view(-1)[index].item()
            error = abs(analytic - numeric) / max(abs(analytic), abs(numeric), RELATIVE_FLOOR)
            report.checks.append(CoordinateCheck(path, index, analytic, numeric, error))

    worst = report.worst
    if worst is not None:
        logger.info(f"Gradient check: {len(report.checks)} coordinates, max relative error "
                    f"{report.max_error:.2e} at {worst.path}[{worst.index}]")
    return report


def _clone(model: SkillAwareNet) -> SkillAwareNet:
    copy = SkillAwareNet(model.config)
    copy.load_state_dict(model.state_dict())
    return copy
