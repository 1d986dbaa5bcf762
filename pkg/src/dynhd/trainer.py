"""Training: single-pass bundling, similarity-weighted adaptive epochs, and
the regenerate-retrain loop.

A training run is (rounds + 1) segments of ``epochs_per_round`` adaptive
epochs; after each segment except the last, the configured detector selects
dimensions to regenerate, the encoder redraws them, the class entries at
those dimensions are reset to zero (their old values describe the discarded
bases), and cached encodings are refreshed in place via reencode_dims.

Updates are mispredict-only and similarity-weighted: for a sample of class y
encoded as H with scores delta and top-1 prediction p != y,

    C_y += eta * (1 - delta_y) * H
    C_p -= eta * (1 - delta_p) * H

so near-duplicates of already-learned patterns (delta close to 1) contribute
almost nothing.  Samples are visited in dataset order unless the seeded
shuffle flag is set.  Validation top-1 accuracy is measured after each
segment, before any regeneration; early stopping fires when it fails to
improve by more than 1e-4 for ``patience`` consecutive segments
(patience=0 disables).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analysis import (domain_variance, misleading_scores,
                       select_domain_variant, select_insignificant,
                       select_misleading)
from .data import remap_labels
from .encoder import encode_batch, init_encoder, reencode_dims, regenerate_dims
from .inference import model_scores, row_norms, vec_norm
from .model import ClassModel, Dataset, EncoderState, RegenPlan, TRAIN_STRATEGIES
from .rng import check_seed

EARLY_STOP_MIN_DELTA = 1e-4


@dataclass
class TrainConfig:
    dim: int
    eta: float = 0.05
    epochs_per_round: int = 1
    rounds: int = 0
    regen_rate: float = 0.0
    strategy: str = "none"
    patience: int = 0  # 0 disables early stopping
    seed: int = 0
    shuffle: bool = False

    def validate(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        if self.eta <= 0.0:
            raise ValueError("eta must be positive")
        if self.epochs_per_round < 1:
            raise ValueError("epochs_per_round must be at least 1")
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        if not 0.0 <= self.regen_rate <= 1.0:
            raise ValueError("regen_rate must lie in [0, 1]")
        if self.strategy not in TRAIN_STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; "
                             f"expected one of {TRAIN_STRATEGIES}")
        if self.patience < 0:
            raise ValueError("patience must be non-negative")
        check_seed(self.seed)


@dataclass
class EpochRecord:
    segment: int
    epoch: int
    train_accuracy: float
    wall_ms: float


@dataclass
class RoundRecord:
    round: int
    val_accuracy: float
    # None: no regeneration step ran; []: the selector found nothing.
    regen_indices: Optional[list[int]]
    wall_ms: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    rounds: list[RoundRecord] = field(default_factory=list)
    stopped_early: bool = False

    def records(self) -> list[dict]:
        """Report as JSON-ready dicts, epoch rows then round rows then a
        summary, in run order within each kind."""
        out = []
        for rec in self.epochs:
            out.append({"type": "epoch", "segment": rec.segment,
                        "epoch": rec.epoch,
                        "train_accuracy": rec.train_accuracy,
                        "wall_ms": rec.wall_ms})
        for rec in self.rounds:
            out.append({"type": "round", "round": rec.round,
                        "val_accuracy": rec.val_accuracy,
                        "regen_indices": rec.regen_indices,
                        "wall_ms": rec.wall_ms})
        out.append({"type": "summary", "total_epochs": len(self.epochs),
                    "stopped_early": self.stopped_early})
        return out

    def to_json_lines(self) -> list[str]:
        return [json.dumps(rec) for rec in self.records()]


def initial_pass(e: EncoderState, train: Dataset) -> ClassModel:
    """Plain accumulation: each class hypervector is the sum of its samples'
    encodings; classes with no samples stay zero."""
    if len(train) == 0:
        raise ValueError("training dataset must be non-empty")
    encodings = encode_batch(e, train.features)
    classes = _accumulate(encodings, train.labels, train.n_classes)
    return ClassModel(classes, list(train.label_names))


def adaptive_epoch(m: ClassModel, e: EncoderState, train: Dataset,
                   eta: float) -> tuple[ClassModel, float]:
    """One adaptive pass over the dataset, in dataset order.

    Updates ``m`` in place and returns it with the epoch accuracy (the
    fraction predicted correctly before each update).
    """
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    if m.dim != e.dim:
        raise ValueError("model and encoder dimensionality differ")
    if list(train.label_names) != list(m.labels):
        raise ValueError("dataset label set does not match the model")
    encodings = encode_batch(e, train.features)
    accuracy = _adaptive_pass(m.classes, row_norms(m.classes), encodings,
                              row_norms(encodings), train.labels,
                              np.arange(len(train)), eta)
    return m, accuracy


def train(cfg: TrainConfig, train_ds: Dataset,
          valid_ds: Dataset) -> tuple[EncoderState, ClassModel, TrainReport]:
    """Run the full regenerate-retrain schedule.

    Returns the final encoder, model, and a report carrying per-epoch train
    accuracy, per-segment validation accuracy, and every regenerated index
    set.  Identical config and datasets reproduce the run bit-for-bit.
    """
    cfg.validate()
    if len(train_ds) == 0 or len(valid_ds) == 0:
        raise ValueError("train and validation datasets must be non-empty")
    if valid_ds.n != train_ds.n:
        raise ValueError("train and validation feature counts differ")
    if set(valid_ds.label_names) != set(train_ds.label_names):
        raise ValueError("train and validation label sets differ")
    valid_ds = remap_labels(valid_ds, train_ds.label_names)
    n_domains = 0
    if cfg.strategy == "domain_variant":
        if train_ds.domains is None:
            raise ValueError("strategy=domain_variant needs domain ids "
                             "on the training dataset")
        n_domains = np.unique(train_ds.domains).size
        if n_domains < 2:
            raise ValueError("strategy=domain_variant needs at least "
                             "2 domains in the training data")

    enc = init_encoder(cfg.seed, train_ds.n, cfg.dim)
    train_encs = encode_batch(enc, train_ds.features)
    valid_encs = encode_batch(enc, valid_ds.features)
    train_norms = row_norms(train_encs)
    valid_norms = row_norms(valid_encs)
    labels = train_ds.labels
    model = ClassModel(_accumulate(train_encs, labels, train_ds.n_classes),
                       list(train_ds.label_names))
    class_norms = row_norms(model.classes)

    # Shuffle draws come from a separate stream so they never perturb the
    # encoder's draw counter.
    shuffle_rng = (np.random.Generator(np.random.Philox(key=cfg.seed + (1 << 64)))
                   if cfg.shuffle else None)

    report = TrainReport()
    best_val = -np.inf
    stale = 0
    n_train = len(train_ds)
    for segment in range(cfg.rounds + 1):
        for epoch in range(cfg.epochs_per_round):
            t0 = time.perf_counter()
            order = (shuffle_rng.permutation(n_train) if shuffle_rng is not None
                     else np.arange(n_train))
            acc = _adaptive_pass(model.classes, class_norms, train_encs,
                                 train_norms, labels, order, cfg.eta)
            report.epochs.append(EpochRecord(
                segment, epoch, acc, (time.perf_counter() - t0) * 1e3))

        t0 = time.perf_counter()
        val_acc = _top1_accuracy(model.classes, class_norms, valid_encs,
                                 valid_norms, valid_ds.labels)
        if val_acc > best_val + EARLY_STOP_MIN_DELTA:
            best_val = val_acc
            stale = 0
        else:
            stale += 1
        stopping = cfg.patience > 0 and stale >= cfg.patience

        regen_indices = None
        if not stopping and segment < cfg.rounds and cfg.strategy != "none":
            plan = _make_plan(cfg, model, enc, train_ds, train_encs)
            enc = regenerate_dims(enc, plan)
            regen_indices = plan.indices.tolist()
            if plan.indices.size:
                model.classes[:, plan.indices] = 0.0
                class_norms = row_norms(model.classes)
                for i in range(n_train):
                    train_encs[i] = reencode_dims(enc, train_ds.features[i],
                                                  train_encs[i], plan)
                for i in range(len(valid_ds)):
                    valid_encs[i] = reencode_dims(enc, valid_ds.features[i],
                                                  valid_encs[i], plan)
                train_norms = row_norms(train_encs)
                valid_norms = row_norms(valid_encs)
        report.rounds.append(RoundRecord(
            segment, val_acc, regen_indices,
            (time.perf_counter() - t0) * 1e3))
        if stopping:
            report.stopped_early = True
            break
    return enc, model, report


def _accumulate(encodings: np.ndarray, labels: np.ndarray,
                n_classes: int) -> np.ndarray:
    classes = np.zeros((n_classes, encodings.shape[1]))
    for label in range(n_classes):
        rows = encodings[labels == label]
        if rows.shape[0]:
            classes[label] = rows.sum(axis=0)
    return classes


def _adaptive_pass(classes: np.ndarray, class_norms: np.ndarray,
                   encodings: np.ndarray, sample_norms: np.ndarray,
                   labels: np.ndarray, order: np.ndarray,
                   eta: float) -> float:
    """Sequential similarity-weighted updates; mutates classes and
    class_norms.  Returns the pre-update prediction accuracy."""
    correct = 0
    for i in order:
        h = encodings[i]
        scores = model_scores(classes, class_norms, h, sample_norms[i])
        pred = int(np.argmax(scores))  # first max: lower index wins ties
        y = int(labels[i])
        if pred == y:
            correct += 1
            continue
        classes[y] += eta * (1.0 - scores[y]) * h
        classes[pred] -= eta * (1.0 - scores[pred]) * h
        class_norms[y] = vec_norm(classes[y])
        class_norms[pred] = vec_norm(classes[pred])
    return correct / order.shape[0]


def _top1_accuracy(classes: np.ndarray, class_norms: np.ndarray,
                   encodings: np.ndarray, sample_norms: np.ndarray,
                   labels: np.ndarray) -> float:
    hits = 0
    for i in range(encodings.shape[0]):
        scores = model_scores(classes, class_norms, encodings[i],
                              sample_norms[i])
        if int(np.argmax(scores)) == int(labels[i]):
            hits += 1
    return hits / encodings.shape[0]


def domain_models(e: EncoderState, train: Dataset,
                  encodings: Optional[np.ndarray] = None) -> list[ClassModel]:
    """One accumulated class model per domain present in the data, in
    ascending domain-id order.  Pass cached encodings to skip re-encoding."""
    if train.domains is None:
        raise ValueError("dataset has no domain ids")
    if encodings is None:
        encodings = encode_batch(e, train.features)
    models = []
    for domain in np.unique(train.domains):
        mask = train.domains == domain
        models.append(ClassModel(
            _accumulate(encodings[mask], train.labels[mask], train.n_classes),
            list(train.label_names)))
    return models


def _make_plan(cfg: TrainConfig, model: ClassModel, enc: EncoderState,
               train_ds: Dataset, train_encs: np.ndarray) -> RegenPlan:
    if cfg.strategy == "insignificant":
        return select_insignificant(model, cfg.regen_rate)
    if cfg.strategy == "misleading":
        scores = misleading_scores(model, enc, train_ds, encodings=train_encs)
        return select_misleading(scores, cfg.regen_rate)
    models = domain_models(enc, train_ds, encodings=train_encs)
    return select_domain_variant(domain_variance(models), cfg.regen_rate)
