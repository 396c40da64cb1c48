"""
Skill-conditioned move prediction network.

Residual convolutional backbone -> channel-wise patches -> skill-aware
attention blocks -> policy, auxiliary and value heads. The skill embeddings
of both players shift every head's queries in every block.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelConfig
from .exceptions import BucketRangeError, ModelError, NonFiniteError


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm1 = nn.GroupNorm(channels, channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = nn.GroupNorm(channels, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.gelu(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return F.gelu(x + out)


class Backbone(nn.Module):
    """Stem, residual tower and a 1x1 exit convolution down to the patch channels"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.stem = nn.Conv2d(config.input_channels, config.mid_channels, 3, padding=1)
        self.stem_norm = nn.GroupNorm(config.mid_channels, config.mid_channels)
        self.blocks = nn.ModuleList([ResidualBlock(config.mid_channels) for _ in range(config.conv_blocks)])
        self.exit = nn.Conv2d(config.mid_channels, config.patch_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.gelu(self.stem_norm(self.stem(x)))
        for block in self.blocks:
            out = block(out)
        return self.exit(out)


class SkillAttentionHead(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.scale = 1.0 / math.sqrt(config.head_dim)
        self.wq = nn.Linear(config.attention_dim, config.head_dim, bias=False)
        self.wk = nn.Linear(config.attention_dim, config.head_dim, bias=False)
        self.wv = nn.Linear(config.attention_dim, config.head_dim, bias=False)
        self.wstar = nn.Linear(2 * config.skill_dim, config.head_dim, bias=False)

    def forward(self, tokens: torch.Tensor, skill: torch.Tensor):
        query = self.wq(tokens) + self.wstar(skill).unsqueeze(1)
        scores = query @ self.wk(tokens).transpose(1, 2) * self.scale
        weights = torch.softmax(scores, dim=-1)
        return weights @ self.wv(tokens), weights


class SkillAttentionBlock(nn.Module):
    """Multi-head skill-aware attention followed by a feed-forward layer, post-norm"""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.head = nn.ModuleList([SkillAttentionHead(config) for _ in range(config.heads)])
        self.wo = nn.Linear(config.heads * config.head_dim, config.attention_dim)
        self.norm1 = nn.LayerNorm(config.attention_dim)
        self.ffn = nn.Sequential(
            nn.Linear(config.attention_dim, config.ffn_dim),
            nn.GELU(),
            nn.Linear(config.ffn_dim, config.attention_dim),
        )
        self.norm2 = nn.LayerNorm(config.attention_dim)

    def forward(self, tokens: torch.Tensor, skill: torch.Tensor):
        outputs, weights = zip(*(head(tokens, skill) for head in self.head))
        attended = F.gelu(self.wo(torch.cat(outputs, dim=-1)))
        tokens = self.norm1(tokens + attended)
        tokens = self.norm2(tokens + self.ffn(tokens))
        return tokens, list(weights)


@dataclass
class ForwardOutput:
    policy_logits: torch.Tensor
    aux_logits: Optional[torch.Tensor]
    value: torch.Tensor
    p_encoded: torch.Tensor
    p: Optional[torch.Tensor]
    attention_weights: List[torch.Tensor]

    def win_prob(self) -> torch.Tensor:
        return (self.value.clamp(-1.0, 1.0) + 1.0) / 2.0


class SkillAwareNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.skill_embedding = nn.Embedding(config.n_buckets, config.skill_dim)
        self.backbone = Backbone(config)
        if config.skill_attention_enabled:
            self.patch = nn.Linear(64, config.attention_dim)
            self.attn = nn.ModuleList([SkillAttentionBlock(config) for _ in range(config.attention_blocks)])
        width = config.hidden_width
        self.policy_head = nn.Linear(width, config.vocab_size)
        self.aux_head = nn.Linear(width, config.aux_dim) if config.aux_head_enabled else None
        self.value_head = nn.Linear(width, 1)

    def _check_inputs(self, x: torch.Tensor, active: torch.Tensor, opponent: torch.Tensor) -> None:
        expected = (self.config.input_channels, 8, 8)
        if x.dim() != 4 or tuple(x.shape[1:]) != expected:
            raise ModelError(f"expected input of shape (batch, {expected}), got {tuple(x.shape)}")
        if len(active) != len(x) or len(opponent) != len(x):
            raise ModelError("skill bucket batch does not match the position batch")
        for name, buckets in (("active", active), ("opponent", opponent)):
            if len(buckets) and (int(buckets.min()) < 0 or int(buckets.max()) >= self.config.n_buckets):
                raise BucketRangeError(f"{name} bucket outside [0, {self.config.n_buckets})")
        if not torch.isfinite(x).all():
            raise NonFiniteError("non-finite value in position tensor", "input")

    def forward(self, x: torch.Tensor, active: torch.Tensor, opponent: torch.Tensor) -> ForwardOutput:
        self._check_inputs(x, active, opponent)
        batch = x.shape[0]
        skill = torch.cat([self.skill_embedding(active), self.skill_embedding(opponent)], dim=-1)
        p_encoded = self.backbone(x)

        p = None
        weights: List[torch.Tensor] = []
        if self.config.skill_attention_enabled:
            tokens = self.patch(p_encoded.reshape(batch, self.config.patch_channels, 64))
            for block in self.attn:
                tokens, block_weights = block(tokens, skill)
                weights.extend(block_weights)
            p = tokens
            hidden = tokens.reshape(batch, -1)
        else:
            hidden = torch.cat([p_encoded.reshape(batch, -1), skill], dim=-1)

        return ForwardOutput(
            policy_logits=self.policy_head(hidden),
            aux_logits=self.aux_head(hidden) if self.aux_head is not None else None,
            value=self.value_head(hidden).squeeze(-1),
            p_encoded=p_encoded,
            p=p,
            attention_weights=weights,
        )

    def zero_skill_projections(self) -> None:
        """Zero every W* so the network ignores the skill embeddings in attention"""
        if not self.config.skill_attention_enabled:
            return
        with torch.no_grad():
            for block in self.attn:
                for head in block.head:
                    head.wstar.weight.zero_()


@dataclass
class LossTerms:
    total: torch.Tensor
    policy: torch.Tensor
    aux: torch.Tensor
    value: torch.Tensor

    def as_floats(self) -> Dict[str, float]:
        return {name: float(getattr(self, name).detach()) for name in ("total", "policy", "aux", "value")}


def compute_loss(output: ForwardOutput, policy: torch.Tensor, aux: torch.Tensor,
                 value: torch.Tensor, config: ModelConfig) -> LossTerms:
    """Weighted sum of policy cross-entropy, mean bit-wise BCE and value squared error"""
    policy_term = F.cross_entropy(output.policy_logits, policy)
    if output.aux_logits is not None:
        aux_term = F.binary_cross_entropy_with_logits(output.aux_logits, aux.to(output.aux_logits.dtype))
    else:
        aux_term = torch.zeros((), dtype=output.value.dtype, device=output.value.device)
    value_term = F.mse_loss(output.value, value.to(output.value.dtype))
    total = (config.policy_weight * policy_term + config.aux_weight * aux_term
             + config.value_weight * value_term)
    return LossTerms(total, policy_term, aux_term, value_term)


def check_finite_gradients(model: nn.Module) -> None:
    for path, param in model.named_parameters():
        if param.grad is not None and not torch.isfinite(param.grad).all():
            raise NonFiniteError("non-finite gradient", path)


def compute_gradients(model: SkillAwareNet, batch) -> Dict[str, torch.Tensor]:
    """
    Gradients of the mean loss over a batch with respect to every parameter

    Args:
        model: The network
        batch: An EncodedBatch

    Returns:
        Parameter path -> gradient tensor (zeros for parameters the loss does not reach)
    """
    model.zero_grad(set_to_none=True)
    tensors = batch_tensors(batch, dtype=next(model.parameters()).dtype)
    output = model(tensors["x"], tensors["active"], tensors["opponent"])
    compute_loss(output, tensors["policy"], tensors["aux"], tensors["value"], model.config).total.backward()
    check_finite_gradients(model)
    return {
        path: param.grad.detach().clone() if param.grad is not None else torch.zeros_like(param)
        for path, param in model.named_parameters()
    }


def batch_tensors(batch, dtype: torch.dtype = torch.float32) -> Dict[str, torch.Tensor]:
    return {
        "x": torch.as_tensor(batch.x, dtype=dtype),
        "active": torch.as_tensor(batch.active, dtype=torch.long),
        "opponent": torch.as_tensor(batch.opponent, dtype=torch.long),
        "policy": torch.as_tensor(batch.policy, dtype=torch.long),
        "aux": torch.as_tensor(batch.aux, dtype=dtype),
        "value": torch.as_tensor(batch.value, dtype=dtype),
    }


def count_parameters(model: nn.Module) -> int:
    return sum(param.numel() for param in model.parameters())


def expected_parameter_count(config: ModelConfig) -> int:
    """Parameter count of a SkillAwareNet built from config, without building it"""
    c_in, c_mid, c_patch = config.input_channels, config.mid_channels, config.patch_channels
    total = config.n_buckets * config.skill_dim
    total += c_in * c_mid * 9 + c_mid + 2 * c_mid
    total += config.conv_blocks * 2 * (c_mid * c_mid * 9 + c_mid + 2 * c_mid)
    total += c_mid * c_patch + c_patch
    if config.skill_attention_enabled:
        d, h, dh = config.attention_dim, config.heads, config.head_dim
        total += 64 * d + d
        per_head = 3 * d * dh + 2 * config.skill_dim * dh
        block = h * per_head + h * dh * d + d + 2 * d
        block += d * config.ffn_dim + config.ffn_dim + config.ffn_dim * d + d + 2 * d
        total += config.attention_blocks * block
    width = config.hidden_width
    total += width * config.vocab_size + config.vocab_size
    if config.aux_head_enabled:
        total += width * config.aux_dim + config.aux_dim
    total += width + 1
    return total
