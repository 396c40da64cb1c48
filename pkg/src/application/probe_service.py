import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from tqdm import tqdm

from ..core.board import Board
from ..core.concepts import compute_concept, get_concept
from ..core.config import BucketLayout, ProbeConfig
from ..core.encoding import encode_position
from ..core.exceptions import ConceptError, EngineError, ProbeError
from ..core.models import ProbeResult, Tally
from ..core.network import SkillAwareNet
from ..core.probing import fit_probe
from ..infrastructure.report_writer import ReportWriter

logger = logging.getLogger(__name__)

PRE = "pre"
POST = "post"
PROBE_REPORT = "probes.csv"
LAYER_NOTE = "post layer = P after final normalization"


@dataclass
class ActivationSet:
    """Pre-attention features (shared by every bucket) and post-attention features per bucket"""
    pre: np.ndarray
    post: Dict[int, np.ndarray] = field(default_factory=dict)


@torch.no_grad()
def extract_activations(model: SkillAwareNet, boards: Sequence[Board], buckets: Optional[Sequence[int]] = None,
                        batch_size: int = 256) -> ActivationSet:
    """
    Flattened P_encoded and P for each position, with active = opponent = bucket

    Raises:
        ProbeError: Pre-attention features differ between buckets
    """
    buckets = list(range(model.config.n_buckets)) if buckets is None else list(buckets)
    dtype = next(model.parameters()).dtype
    x = torch.as_tensor(np.stack([encode_position(b) for b in boards]), dtype=dtype)
    pre: Optional[np.ndarray] = None
    post: Dict[int, np.ndarray] = {}
    for bucket in buckets:
        pre_parts, post_parts = [], []
        for start in range(0, len(x), batch_size):
            chunk = x[start:start + batch_size]
            skill = torch.full((len(chunk),), bucket, dtype=torch.long)
            output = model(chunk, skill, skill)
            pre_parts.append(output.p_encoded.reshape(len(chunk), -1).numpy())
            if output.p is not None:
                post_parts.append(output.p.reshape(len(chunk), -1).numpy())
        features = np.concatenate(pre_parts)
        if pre is None:
            pre = features
        elif not np.array_equal(pre, features):
            raise ProbeError(f"pre-attention features changed with skill bucket {bucket}")
        if post_parts:
            post[bucket] = np.concatenate(post_parts)
    return ActivationSet(pre, post)


class ProbeService:
    """Label positions with concepts and fit linear probes on both layers"""

    def __init__(self, config: ProbeConfig, layout: BucketLayout, report_writer: ReportWriter,
                 engine=None, progress: bool = False):
        self.config = config
        self.layout = layout
        self.report_writer = report_writer
        self.engine = engine
        self.progress = progress
        self.tally = Tally()
        self.skipped: Dict[str, str] = {}

    def labels(self, concept: str, boards: Sequence[Board]) -> Optional[np.ndarray]:
        spec = get_concept(concept)
        try:
            return np.array([compute_concept(spec, board, self.engine) for board in boards], dtype=np.float64)
        except (ConceptError, EngineError) as e:
            logger.warning(f"Skipping concept {concept}: {e}")
            self.skipped[concept] = str(e)
            return None

    def _fit(self, concept: str, kind: str, features: np.ndarray, labels: np.ndarray):
        try:
            return fit_probe(features, labels, kind, self.config)
        except ProbeError as e:
            self.skipped[concept] = str(e)
            self.tally["degenerate_probes"] += 1
            logger.warning(f"Skipping probe for {concept}: {e}")
            return None

    def run(self, model: SkillAwareNet, boards: Sequence[Board],
            concepts: Optional[Sequence[str]] = None) -> List[ProbeResult]:
        """
        Fit every concept probe on the pre layer once and on the post layer per bucket

        Returns:
            One ProbeResult per (concept, layer, bucket); pre-layer rows share one fit
        """
        concepts = list(concepts) if concepts is not None else list(self.config.concepts)
        for name in concepts:
            get_concept(name)
        activations = extract_activations(model, boards)
        results: List[ProbeResult] = []
        for name in tqdm(concepts, disable=not self.progress, desc="probes"):
            labels = self.labels(name, boards)
            if labels is None:
                continue
            kind = get_concept(name).kind
            fit = self._fit(name, kind, activations.pre, labels)
            if fit is None:
                continue
            for bucket in range(model.config.n_buckets):
                results.append(ProbeResult(name, PRE, bucket, fit.score, fit.metric, fit.regularization))
            for bucket in sorted(activations.post):
                post_fit = self._fit(name, kind, activations.post[bucket], labels)
                if post_fit is not None:
                    results.append(ProbeResult(name, POST, bucket, post_fit.score, post_fit.metric,
                                               post_fit.regularization))
            logger.info(f"Probed {name}: pre {fit.metric} {fit.score:.4f}")
        return results

    def write_report(self, results: Sequence[ProbeResult], name: str = PROBE_REPORT) -> str:
        rows = [(r.concept, r.layer, r.bucket, self.layout.label(r.bucket), r.score, r.metric, r.regularization)
                for r in results]
        comments = [LAYER_NOTE] + [f"skipped {concept}: {reason}" for concept, reason in sorted(self.skipped.items())]
        return self.report_writer.write_rows(
            name, ("concept", "layer", "bucket", "bucket_label", "score", "metric", "regularization"), rows, comments)
