"""
Mini-batch training over shards.

Examples are encoded once up front. Each epoch visits the shards in a seeded
order and shuffles examples within a fixed-size window, so the stream is a
pure function of (seed, epoch) and a (epoch, offset) cursor is enough to
resume it.
"""

import logging
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from tqdm import tqdm

from ..core.config import ModelConfig, OptimizerConfig
from ..core.encoding import AUX_LEGAL, EncodedBatch, encode_example, stack_examples
from ..core.exceptions import (EncodingError, FenError, IllegalMoveError, NonFiniteError,
                               TrainingError)
from ..core.models import Tally, TrainingExample
from ..core.network import SkillAwareNet, batch_tensors, check_finite_gradients, compute_loss
from ..infrastructure.checkpoint_store import (CheckpointStore, DataCursor, TrainingState,
                                               load_parameters, model_parameters)
from ..infrastructure.file_manager import FileManager
from ..infrastructure.report_writer import ReportWriter
from ..infrastructure.shard_store import list_shards, read_shard

logger = logging.getLogger(__name__)

ABLATIONS = ("noatt", "noaux")
STEP_LOG = "step_log.csv"
STEP_LOG_HEADER = ("step", "total", "policy", "aux", "value", "lr")
FINAL_CHECKPOINT = "checkpoint"
LAST_GOOD_CHECKPOINT = "last_good"


def apply_ablation(config: ModelConfig, ablation: Optional[str]) -> ModelConfig:
    if ablation is None:
        return config
    if ablation == "noatt":
        return replace(config, skill_attention_enabled=False)
    if ablation == "noaux":
        return replace(config, aux_head_enabled=False)
    raise TrainingError(f"unknown ablation {ablation!r}, expected one of {ABLATIONS}")


def enable_reference_mode() -> None:
    """Single-threaded, deterministic kernels only"""
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)


def learning_rate_at(config: OptimizerConfig, step: int) -> float:
    """Learning rate for the update that produces step + 1"""
    if config.schedule == "warmup" and step < config.warmup_steps:
        return config.learning_rate * (step + 1) / config.warmup_steps
    return config.learning_rate


def build_optimizer(model: torch.nn.Module, config: OptimizerConfig) -> torch.optim.Optimizer:
    # Decay is applied separately by optimizer_step
    return torch.optim.AdamW(model.parameters(), lr=config.learning_rate,
                             betas=(config.beta1, config.beta2), eps=config.eps, weight_decay=0.0)


def optimizer_step(model: torch.nn.Module, optimizer: torch.optim.Optimizer, weight_decay: float) -> None:
    """Shrink every parameter by (1 - weight_decay), then apply the adaptive-moment update"""
    if weight_decay:
        with torch.no_grad():
            for param in model.parameters():
                param.mul_(1.0 - weight_decay)
    optimizer.step()


def optimizer_moments(model: torch.nn.Module, optimizer: torch.optim.Optimizer):
    moments, steps = {}, {}
    for path, param in model.named_parameters():
        state = optimizer.state.get(param)
        if not state:
            continue
        moments[path] = (state["exp_avg"].detach().cpu().numpy().copy(),
                         state["exp_avg_sq"].detach().cpu().numpy().copy())
        steps[path] = int(float(state["step"]))
    return moments, steps


def restore_moments(model: torch.nn.Module, optimizer: torch.optim.Optimizer,
                    moments: Dict, steps: Dict[str, int]) -> None:
    for path, param in model.named_parameters():
        if path not in moments:
            continue
        first, second = moments[path]
        optimizer.state[param] = {
            "step": torch.tensor(float(steps[path])),
            "exp_avg": torch.from_numpy(np.array(first, dtype=np.float32)).reshape(param.shape),
            "exp_avg_sq": torch.from_numpy(np.array(second, dtype=np.float32)).reshape(param.shape),
        }


class ExampleStream:
    """
    Seeded, resumable order over a fixed example set grouped by shard

    Args:
        shard_sizes: Number of examples contributed by each shard, in shard order
        seed: Run seed
        window: Shuffle buffer size
    """

    def __init__(self, shard_sizes: Sequence[int], seed: int, window: int):
        self.shard_sizes = list(shard_sizes)
        self.total = sum(self.shard_sizes)
        if self.total == 0:
            raise TrainingError("no training examples")
        self.seed = seed
        self.window = window
        self.cursor = DataCursor()
        self._order_epoch = -1
        self._order = np.empty(0, dtype=np.int64)
        starts = np.cumsum([0] + self.shard_sizes[:-1])
        self._ranges = [np.arange(s, s + n) for s, n in zip(starts, self.shard_sizes)]

    def epoch_order(self, epoch: int) -> np.ndarray:
        rng = np.random.default_rng([self.seed, epoch])
        order = np.concatenate([self._ranges[i] for i in rng.permutation(len(self._ranges))])
        for start in range(0, len(order), self.window):
            order[start:start + self.window] = rng.permutation(order[start:start + self.window])
        return order

    def _order_for(self, epoch: int) -> np.ndarray:
        if epoch != self._order_epoch:
            self._order = self.epoch_order(epoch)
            self._order_epoch = epoch
        return self._order

    def next_indices(self, batch_size: int) -> np.ndarray:
        """Next batch, running over into the following epoch when needed"""
        chosen: List[np.ndarray] = []
        needed = batch_size
        while needed:
            order = self._order_for(self.cursor.epoch)
            part = order[self.cursor.offset:self.cursor.offset + needed]
            chosen.append(part)
            needed -= len(part)
            self.cursor = DataCursor(self.cursor.epoch, self.cursor.offset + len(part))
            if self.cursor.offset >= self.total:
                self.cursor = DataCursor(self.cursor.epoch + 1, 0)
        return np.concatenate(chosen)


@dataclass
class TrainingResult:
    model: SkillAwareNet
    step: int
    history: List[Dict[str, float]] = field(default_factory=list)
    checkpoint_dir: Optional[str] = None
    examples: int = 0


def training_accuracy(model: SkillAwareNet, dataset: EncodedBatch, batch_size: int = 256) -> float:
    """Top-1 accuracy of the legal-masked policy on encoded examples"""
    model.eval()
    hits = 0
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            batch = dataset.take(np.arange(start, min(start + batch_size, len(dataset))))
            tensors = batch_tensors(batch, dtype=next(model.parameters()).dtype)
            logits = model(tensors["x"], tensors["active"], tensors["opponent"]).policy_logits
            legal = torch.as_tensor(batch.aux[:, AUX_LEGAL] > 0)
            predicted = logits.masked_fill(~legal, float("-inf")).argmax(dim=-1)
            hits += int((predicted == tensors["policy"]).sum())
    return hits / len(dataset)


class TrainingService:
    """Run, checkpoint and resume training"""

    def __init__(self, file_manager: FileManager, checkpoint_store: CheckpointStore):
        self.file_manager = file_manager
        self.checkpoint_store = checkpoint_store

    def load_examples(self, shards: str, tally: Optional[Tally] = None):
        """Read every shard under a path; returns (examples, per-shard counts)"""
        tally = tally if tally is not None else Tally()
        examples: List[TrainingExample] = []
        sizes: List[int] = []
        for path in list_shards(shards):
            before = len(examples)
            examples.extend(read_shard(path, tally))
            sizes.append(len(examples) - before)
        return examples, sizes

    def encode(self, examples: Sequence[TrainingExample], sizes: Sequence[int],
               tally: Optional[Tally] = None):
        """Encode examples once; unusable records are dropped from their shard's count"""
        tally = tally if tally is not None else Tally()
        encoded = []
        kept_sizes = []
        position = 0
        for size in sizes:
            kept = 0
            for example in examples[position:position + size]:
                try:
                    encoded.append(encode_example(example))
                    kept += 1
                except (IllegalMoveError, EncodingError, FenError, ValueError) as e:
                    logger.debug(f"Dropping example {example.fen} {example.move}: {e}")
                    tally["bad_examples"] += 1
            kept_sizes.append(kept)
            position += size
        if not encoded:
            raise TrainingError("no usable training examples")
        dataset = stack_examples(encoded)
        # 0/1 planes and labels are stored compactly and widened per batch
        dataset.x = dataset.x.astype(np.uint8)
        dataset.aux = dataset.aux.astype(np.uint8)
        return dataset, kept_sizes

    def train(self, dataset: EncodedBatch, shard_sizes: Sequence[int], model_config: ModelConfig,
              optimizer_config: OptimizerConfig, out_dir: Optional[str] = None,
              resume: Optional[str] = None, progress: bool = False) -> TrainingResult:
        """
        Train until optimizer_config.max_steps updates have been applied

        Args:
            dataset: Encoded examples, grouped by shard in shard order
            shard_sizes: Examples per shard
            model_config: Network configuration (ablations already applied)
            optimizer_config: Optimizer and loop settings
            out_dir: Receives checkpoints and the step log; None keeps everything in memory
            resume: Checkpoint directory to continue from
            progress: Show a progress bar

        Raises:
            NonFiniteError: A loss or gradient went NaN; the last good state is saved first
        """
        seed = optimizer_config.seed
        stream = ExampleStream(shard_sizes, seed, optimizer_config.shuffle_buffer)
        torch.manual_seed(seed)
        model = SkillAwareNet(model_config)
        optimizer = build_optimizer(model, optimizer_config)
        step = 0

        if resume:
            state = self.checkpoint_store.load(resume)
            if state.model_config != model_config:
                raise TrainingError(f"checkpoint {resume} was trained with a different model config")
            load_parameters(model, state.params, resume)
            restore_moments(model, optimizer, state.moments, state.moment_steps)
            step = state.step
            stream.cursor = state.cursor
            logger.info(f"Resumed from {resume} at step {step}, epoch {state.cursor.epoch}, "
                        f"offset {state.cursor.offset}")

        model.train()
        history: List[Dict[str, float]] = []
        bar = tqdm(total=optimizer_config.max_steps, initial=step, disable=not progress, desc="train")
        while step < optimizer_config.max_steps:
            cursor = stream.cursor
            batch = dataset.take(stream.next_indices(optimizer_config.batch_size))
            tensors = batch_tensors(batch)
            lr = learning_rate_at(optimizer_config, step)
            for group in optimizer.param_groups:
                group["lr"] = lr

            optimizer.zero_grad(set_to_none=True)
            output = model(tensors["x"], tensors["active"], tensors["opponent"])
            terms = compute_loss(output, tensors["policy"], tensors["aux"], tensors["value"], model_config)
            try:
                if not torch.isfinite(terms.total):
                    raise NonFiniteError(f"non-finite loss at step {step + 1}", "loss")
                terms.total.backward()
                check_finite_gradients(model)
            except NonFiniteError:
                self._save_last_good(out_dir, model, optimizer, step, seed, cursor)
                raise

            optimizer_step(model, optimizer, optimizer_config.weight_decay)
            step += 1
            record = {"step": step, **terms.as_floats(), "lr": lr}
            history.append(record)
            bar.update(1)
            if optimizer_config.log_every and step % optimizer_config.log_every == 0:
                logger.info(f"step {step}: loss {record['total']:.4f} (policy {record['policy']:.4f}, "
                            f"aux {record['aux']:.4f}, value {record['value']:.4f})")
            if out_dir and optimizer_config.checkpoint_every and step % optimizer_config.checkpoint_every == 0:
                self.save(os.path.join(out_dir, LAST_GOOD_CHECKPOINT), model, optimizer, step, seed, stream.cursor)
        bar.close()

        checkpoint_dir = None
        if out_dir:
            checkpoint_dir = self.save(os.path.join(out_dir, FINAL_CHECKPOINT), model, optimizer,
                                       step, seed, stream.cursor)
            self.write_step_log(out_dir, history, append=bool(resume))
        model.eval()
        return TrainingResult(model, step, history, checkpoint_dir, len(dataset))

    def save(self, directory: str, model: SkillAwareNet, optimizer: torch.optim.Optimizer,
             step: int, seed: int, cursor: DataCursor) -> str:
        moments, steps = optimizer_moments(model, optimizer)
        state = TrainingState(model.config, step, seed, cursor, model_parameters(model), moments, steps)
        return self.checkpoint_store.save(directory, state)

    def _save_last_good(self, out_dir, model, optimizer, step, seed, cursor) -> None:
        if not out_dir:
            return
        # Parameters are untouched by the failed step
        path = self.save(os.path.join(out_dir, LAST_GOOD_CHECKPOINT), model, optimizer, step, seed, cursor)
        logger.error(f"Training aborted at step {step + 1}; last good state saved to {path}")

    def write_step_log(self, out_dir: str, history: List[Dict[str, float]], append: bool = False) -> str:
        path = os.path.join(out_dir, STEP_LOG)
        rows = [[record[column] for column in STEP_LOG_HEADER] for record in history]
        if append and os.path.exists(path):
            with open(path, 'r', encoding='utf-8') as f:
                previous = f.read()
            # Drop rows the resumed run repeats
            first = history[0]["step"] if history else None
            kept = [line for line in previous.splitlines()[1:]
                    if line and (first is None or int(line.split(",")[0]) < first)]
            writer = ReportWriter(out_dir, self.file_manager)
            old_rows = [line.split(",") for line in kept]
            return writer.write_rows(STEP_LOG, STEP_LOG_HEADER, old_rows + rows)
        return ReportWriter(out_dir, self.file_manager).write_rows(STEP_LOG, STEP_LOG_HEADER, rows)
