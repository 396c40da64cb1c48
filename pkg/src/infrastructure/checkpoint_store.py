"""
Checkpoint directories: manifest.json plus one float32 blob per tensor.

  manifest.json              config, step, seed, data cursor, tensor table
  params/<path>.f32          parameter values, little-endian float32
  optimizer/<path>.m.f32     first moment
  optimizer/<path>.v.f32     second moment
"""

import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import torch

from src.core.config import ModelConfig
from src.core.exceptions import CheckpointError, FileOperationError
from src.core.network import SkillAwareNet
from src.infrastructure.file_manager import FileManager

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "skillmove-checkpoint"
FORMAT_VERSION = 1
MANIFEST = "manifest.json"


@dataclass
class DataCursor:
    """Position in the shuffled example stream: epoch and offset within it"""
    epoch: int = 0
    offset: int = 0


@dataclass
class TrainingState:
    model_config: ModelConfig
    step: int
    seed: int
    cursor: DataCursor
    params: Dict[str, np.ndarray]
    moments: Dict[str, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    moment_steps: Dict[str, int] = field(default_factory=dict)
    extra: Dict[str, Any] = field(default_factory=dict)


class CheckpointStore:
    """Save and load training state in a version-checked directory layout"""

    def __init__(self, file_manager: FileManager):
        self.file_manager = file_manager

    def save(self, directory: str, state: TrainingState) -> str:
        """Write the checkpoint beside the target, then move it into place"""
        parent = os.path.dirname(os.path.abspath(directory))
        self.file_manager.create_directory(parent)
        staging = tempfile.mkdtemp(prefix=".ckpt_", dir=parent)
        tensors: List[Dict[str, Any]] = []
        try:
            for path, values in state.params.items():
                entry: Dict[str, Any] = {"path": path, "shape": list(values.shape),
                                         "file": f"params/{path}.f32"}
                self.file_manager.write_blob(os.path.join(staging, entry["file"]), values)
                if path in state.moments:
                    first, second = state.moments[path]
                    entry["moments"] = [f"optimizer/{path}.m.f32", f"optimizer/{path}.v.f32"]
                    entry["moment_step"] = state.moment_steps.get(path, state.step)
                    self.file_manager.write_blob(os.path.join(staging, entry["moments"][0]), first)
                    self.file_manager.write_blob(os.path.join(staging, entry["moments"][1]), second)
                tensors.append(entry)
            manifest = {
                "format": CHECKPOINT_FORMAT,
                "format_version": FORMAT_VERSION,
                "config": asdict(state.model_config),
                "step": state.step,
                "seed": state.seed,
                "cursor": asdict(state.cursor),
                "tensors": tensors,
                "extra": state.extra,
            }
            self.file_manager.write_json(os.path.join(staging, MANIFEST), manifest)
            self.file_manager.replace_directory(staging, directory)
        except FileOperationError as e:
            self.file_manager.remove_directory(staging)
            raise CheckpointError(f"Failed to save checkpoint ({e})", directory)
        logger.info(f"Saved checkpoint at step {state.step} to {directory}")
        return directory

    def load(self, directory: str) -> TrainingState:
        manifest_path = os.path.join(directory, MANIFEST)
        if not os.path.isfile(manifest_path):
            raise CheckpointError("Missing checkpoint manifest", manifest_path)
        try:
            manifest = self.file_manager.read_json(manifest_path)
        except FileOperationError as e:
            raise CheckpointError(f"Unreadable manifest ({e})", manifest_path)
        if manifest.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError("Not a checkpoint manifest", manifest_path)
        if manifest.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"Checkpoint format version {manifest.get('format_version')} != {FORMAT_VERSION}", manifest_path)
        try:
            config = ModelConfig(**manifest["config"])
            step, seed = int(manifest["step"]), int(manifest["seed"])
            cursor = DataCursor(**manifest["cursor"])
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"Invalid manifest field ({e})", manifest_path)

        params: Dict[str, np.ndarray] = {}
        moments: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}
        moment_steps: Dict[str, int] = {}
        for entry in manifest.get("tensors", []):
            shape = tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64))
            params[entry["path"]] = self._blob(directory, entry["file"], count).reshape(shape)
            if "moments" in entry:
                first, second = (self._blob(directory, name, count).reshape(shape) for name in entry["moments"])
                moments[entry["path"]] = (first, second)
                moment_steps[entry["path"]] = int(entry["moment_step"])
        return TrainingState(config, step, seed, cursor, params, moments, moment_steps, manifest.get("extra", {}))

    def _blob(self, directory: str, name: str, count: int) -> np.ndarray:
        path = os.path.join(directory, name)
        if not os.path.isfile(path):
            raise CheckpointError("Missing parameter blob", path)
        try:
            return self.file_manager.read_blob(path, count)
        except FileOperationError as e:
            raise CheckpointError(f"Bad parameter blob ({e})", path)

    def load_model(self, directory: str) -> SkillAwareNet:
        state = self.load(directory)
        model = SkillAwareNet(state.model_config)
        load_parameters(model, state.params, directory)
        model.eval()
        return model


def model_parameters(model: torch.nn.Module) -> Dict[str, np.ndarray]:
    return {path: param.detach().cpu().numpy().astype(np.float32).copy()
            for path, param in model.named_parameters()}


def load_parameters(model: torch.nn.Module, params: Dict[str, np.ndarray], source: Optional[str] = None) -> None:
    """Copy stored values into a model; every parameter must be present with its shape"""
    named = dict(model.named_parameters())
    for path, param in named.items():
        where = os.path.join(source, "params", f"{path}.f32") if source else path
        if path not in params:
            raise CheckpointError("Missing parameter blob", where)
        values = params[path]
        if tuple(values.shape) != tuple(param.shape):
            raise CheckpointError(f"Shape mismatch {tuple(values.shape)} != {tuple(param.shape)}", where)
        with torch.no_grad():
            param.copy_(torch.from_numpy(np.array(values, dtype=np.float32)))
    unknown = sorted(set(params) - set(named))
    if unknown:
        raise CheckpointError("Checkpoint holds unknown parameters", unknown[0])
