"""Training loop over the prefetching pipe, validation, and full-cloud prediction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from synthseg.batchpipe import BatchPipe, PipeConfig
from synthseg.io import atomic_write, read_ply
from synthseg.manifest import DatasetManifest
from synthseg.metrics import DOMINANT_CLASSES, ConfusionMatrix, accumulate, miou
from synthseg.model.features import DEFAULT_RADIUS, extract_features, features_from_arrays
from synthseg.model.mlp import (AdamState, MlpClassifier, ModelError, adam_step, loss_and_grad,
                                predict_labels)
from synthseg.pcdcore import PointCloud
from synthseg.sampler import DEFAULT_SAMPLE_SIZE, check_modality
from synthseg.taxonomy import Taxonomy, histogram

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    modality: str = "RGB-D"
    max_epochs: int = 50
    steps_per_epoch: Optional[int] = None  # default: one batch per training frame
    minibatch_size: int = 1024
    hidden: int = 64
    seed: int = 0
    radius: float = DEFAULT_RADIUS
    sample_size: int = DEFAULT_SAMPLE_SIZE
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    lr_decay: float = 0.7
    decay_interval: int = 10
    class_weighting: bool = True
    max_class_weight: float = 10.0
    patience_window: int = 5
    min_improvement: float = 1e-3
    scored_classes: Optional[tuple[str, ...]] = None
    pipe: PipeConfig = PipeConfig()
    batch_timeout: float = 120.0

    def __post_init__(self):
        object.__setattr__(self, "modality", check_modality(self.modality))
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ValueError("steps_per_epoch must be >= 1")
        if self.minibatch_size < 1 or self.hidden < 1:
            raise ValueError("minibatch_size and hidden must be >= 1")
        if self.patience_window < 1:
            raise ValueError("patience_window must be >= 1")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    loss: float
    val_miou: float


@dataclass
class TrainResult:
    model: MlpClassifier
    log: list
    stopped_early: bool = False

    def log_csv(self) -> str:
        return format_log(self.log)


def format_log(entries: Sequence[EpochLog]) -> str:
    rows = ["epoch,loss,val_miou"]
    rows += [f"{e.epoch},{e.loss!r},{e.val_miou!r}" for e in entries]
    return "\n".join(rows) + "\n"


def _load(manifest: DatasetManifest, entry) -> PointCloud:
    return read_ply(manifest.resolve(entry.ply))


def manifest_taxonomy(manifest: DatasetManifest) -> Taxonomy:
    from synthseg.taxonomy import get_taxonomy
    names = {e.taxonomy for e in manifest}
    if len(names) != 1:
        raise ModelError(f"manifest mixes taxonomies: {sorted(names)}")
    return get_taxonomy(names.pop())


def class_weights(counts: np.ndarray, max_weight: float = 10.0) -> np.ndarray:
    """Inverse-frequency weights over labeled classes, capped at ``max_weight``.

    Scaled so that a class holding 1/K of the labeled points (K = classes
    present) gets weight 1. Class 0 and absent classes get weight 1.
    """
    counts = np.asarray(counts, dtype=np.float64).copy()
    counts[0] = 0
    present = counts > 0
    w = np.ones_like(counts)
    if present.any():
        total = counts.sum()
        w[present] = total / (present.sum() * counts[present])
        w = np.minimum(w, max_weight)
    return w


def scored_ids(taxonomy: Taxonomy, names: Optional[Sequence[str]]) -> tuple[int, ...]:
    if names is None:
        if taxonomy.name == "carla12":
            names = DOMINANT_CLASSES
        else:
            return tuple(range(1, len(taxonomy)))
    return tuple(taxonomy.id_of(n) for n in names)


class Validator:
    """Caches validation features so each epoch only re-runs the classifier."""

    def __init__(self, manifest: Optional[DatasetManifest], modality: str, radius: float,
                 scored: tuple[int, ...]):
        self.scored = scored
        self.items = []
        for entry in manifest or ():
            cloud = _load(manifest, entry)
            if len(cloud) == 0:
                continue
            self.items.append((extract_features(cloud, radius, modality), cloud.labels))

    def confusion(self, model: MlpClassifier) -> ConfusionMatrix:
        cm = ConfusionMatrix(model.taxonomy)
        for feats, labels in self.items:
            cm = accumulate(cm, predict_labels(model, feats), labels)
        return cm

    def score(self, model: MlpClassifier) -> float:
        if not self.items:
            return math.nan
        return miou(self.confusion(model), self.scored).miou


def saturated(history: Sequence[float], window: int, min_improvement: float) -> bool:
    """True when the best of the last ``window`` scores beats the earlier best by < min_improvement."""
    if len(history) <= window or any(math.isnan(h) for h in history):
        return False
    return max(history[-window:]) - max(history[:-window]) < min_improvement


def train(train_manifest: DatasetManifest, val_manifest: Optional[DatasetManifest],
          config: TrainConfig = TrainConfig(), log_path=None) -> TrainResult:
    """Train a classifier on batches streamed from ``train_manifest``."""
    taxonomy = manifest_taxonomy(train_manifest)
    model = MlpClassifier.create(taxonomy, config.hidden, seed=config.seed,
                                 modality=config.modality, radius=config.radius)
    entries: list[EpochLog] = []
    if config.max_epochs == 0:
        if log_path is not None:
            atomic_write(log_path, format_log(entries).encode())
        return TrainResult(model, entries)

    weights = None
    if config.class_weighting:
        hist = histogram((_load(train_manifest, e) for e in train_manifest), taxonomy)
        weights = class_weights(hist.counts, config.max_class_weight)
    validator = Validator(val_manifest, config.modality, config.radius,
                          scored_ids(taxonomy, config.scored_classes))
    adam = AdamState(config.learning_rate, config.beta1, config.beta2, lr_decay=config.lr_decay,
                     decay_interval=config.decay_interval)
    steps = config.steps_per_epoch or len(train_manifest)
    pipe_cfg = replace(config.pipe, sample_size=config.sample_size, modality=config.modality,
                       rng_seed=config.seed, producers=1)
    history: list[float] = []
    stopped = False
    with BatchPipe(train_manifest, pipe_cfg) as pipe:
        for epoch in range(1, config.max_epochs + 1):
            losses = []
            for step in range(steps):
                batch = pipe.get_batch(timeout=config.batch_timeout)
                feats = features_from_arrays(batch.positions, batch.colors, config.radius,
                                             config.modality)
                if epoch == 1 and step == 0:
                    model.fit_standardization(feats)
                rng = np.random.default_rng([config.seed, epoch, step])
                order = rng.permutation(len(feats))
                for lo in range(0, len(order), config.minibatch_size):
                    idx = order[lo:lo + config.minibatch_size]
                    try:
                        loss, grads = loss_and_grad(model, feats[idx], batch.labels[idx], weights)
                    except ModelError:
                        continue  # minibatch without labeled points
                    model.params = adam_step(model.params, grads, adam)
                    losses.append(loss)
            adam.end_epoch(epoch)
            score = validator.score(model)
            history.append(score)
            entries.append(EpochLog(epoch, float(np.mean(losses)) if losses else math.nan, score))
            log.info("epoch %d loss %.4f val_miou %.4f lr %.6f", epoch, entries[-1].loss, score,
                     adam.learning_rate)
            if log_path is not None:
                atomic_write(log_path, format_log(entries).encode())
            if saturated(history, config.patience_window, config.min_improvement):
                stopped = True
                break
    return TrainResult(model, entries, stopped)


def predict_cloud(model: MlpClassifier, cloud: PointCloud, modality: Optional[str] = None) -> PointCloud:
    """Label every point with the classifier's argmax; geometry and colors are kept."""
    if len(cloud) == 0:
        return cloud.with_(labels=np.zeros(0, dtype=np.uint16), taxonomy=model.taxonomy)
    feats = extract_features(cloud, model.radius, modality or model.modality)
    return cloud.with_(labels=predict_labels(model, feats), taxonomy=model.taxonomy)


def evaluate(model: MlpClassifier, manifest: DatasetManifest,
             scored_classes: Optional[Sequence[str]] = None):
    """IoU report of ``model`` over every frame of ``manifest``."""
    validator = Validator(manifest, model.modality, model.radius,
                          scored_ids(model.taxonomy, scored_classes))
    return miou(validator.confusion(model), validator.scored)


def write_log(entries: Sequence[EpochLog], path) -> None:
    atomic_write(Path(path), format_log(entries).encode())
