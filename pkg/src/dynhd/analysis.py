"""Detectors for undesired encoder dimensions.

Three strategies, each yielding a per-dimension score vector oriented so that
higher means stronger evidence for regeneration:

- insignificant: low variance of a dimension across class hypervectors
  (scores are negated variances);
- misleading: accumulated per-dimension distance evidence from mispredicted
  samples whose true class ranked second;
- domain_variant: summed per-class variance of a dimension across
  domain-specific models.

Selectors turn scores into RegenPlans of floor(rate * D) indices, ties
toward the lower index.  The evidence-driven detectors (misleading,
domain_variant) only select dimensions with strictly positive scores and may
return smaller or empty plans; low variance is itself evidence, so the
insignificance selector always fills the plan.

Variances are population variances (divide by the row count): class and
domain counts are small and fixed, and the choice only rescales scores.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .encoder import encode_batch
from .inference import model_scores, ranked_classes, row_norms, vec_norm
from .model import ClassModel, Dataset, EncoderState, RegenPlan


def _unit_rows(classes: np.ndarray) -> np.ndarray:
    """Rows scaled to unit norm; zero rows stay zero."""
    out = classes.copy()
    for i in range(out.shape[0]):
        norm = vec_norm(out[i])
        if norm > 0.0:
            out[i] /= norm
    return out


def _plan_size(rate: float, dim: int) -> int:
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    return int(np.floor(rate * dim))


def variance_over_classes(m: ClassModel) -> np.ndarray:
    """Per-dimension population variance of the raw class values."""
    if m.n_classes < 2:
        raise ValueError("variance needs at least 2 classes")
    mu = m.classes.mean(axis=0)
    return np.mean((m.classes - mu) ** 2, axis=0)


def select_insignificant(m: ClassModel, rate: float) -> RegenPlan:
    """Plan the floor(rate*D) dimensions with the lowest class variance."""
    variances = variance_over_classes(m)
    count = _plan_size(rate, m.dim)
    order = np.lexsort((np.arange(m.dim), variances))
    picked = np.sort(order[:count])
    return RegenPlan(picked, -variances, "insignificant", rate)


def misleading_scores(m: ClassModel, e: EncoderState, train: Dataset,
                      encodings: Optional[np.ndarray] = None) -> np.ndarray:
    """Accumulate per-dimension misprediction evidence over the dataset.

    For each sample mispredicted at top-1 whose true class ranks second:
    with unit-normalized class rows, add |h - c_true| - |h - c_pred| per
    dimension.  Samples ranked correctly, or whose true class is outside
    the top-2, contribute nothing.
    """
    if list(train.label_names) != list(m.labels):
        raise ValueError("dataset label set does not match the model")
    if encodings is None:
        encodings = encode_batch(e, train.features)
    scores = np.zeros(m.dim)
    if m.n_classes < 2:
        return scores
    unit = _unit_rows(m.classes)
    class_norms = row_norms(m.classes)
    for i in range(len(train)):
        h = encodings[i]
        sims = model_scores(m.classes, class_norms, h, vec_norm(h))
        top2 = ranked_classes(sims)[:2]
        y = int(train.labels[i])
        pred = int(top2[0])
        if pred == y or int(top2[1]) != y:
            continue
        scores += np.abs(h - unit[y]) - np.abs(h - unit[pred])
    return scores


def select_misleading(scores: np.ndarray, rate: float) -> RegenPlan:
    """Plan up to floor(rate*D) positive-score dimensions, highest first."""
    return _select_top_positive(scores, rate, "misleading")


def domain_variance(models: Sequence[ClassModel]) -> np.ndarray:
    """Summed per-class, per-dimension variance across domain models.

    For each class, stack the unit-normalized class rows of every domain
    model and take the per-dimension population variance; the result is the
    sum over classes.
    """
    if len(models) < 2:
        raise ValueError("domain variance needs at least 2 domain models")
    first = models[0]
    for other in models[1:]:
        if other.dim != first.dim or list(other.labels) != list(first.labels):
            raise ValueError("domain models must share labels and dimension")
    total = np.zeros(first.dim)
    units = [_unit_rows(mod.classes) for mod in models]
    for label_idx in range(first.n_classes):
        rows = np.stack([u[label_idx] for u in units])
        mu = rows.mean(axis=0)
        total += np.mean((rows - mu) ** 2, axis=0)
    return total


def select_domain_variant(scores: np.ndarray, rate: float) -> RegenPlan:
    """Plan up to floor(rate*D) positive-score dimensions, highest first."""
    return _select_top_positive(scores, rate, "domain_variant")


def _select_top_positive(scores: np.ndarray, rate: float,
                         strategy: str) -> RegenPlan:
    scores = np.asarray(scores, dtype=np.float64)
    count = _plan_size(rate, scores.shape[0])
    order = np.lexsort((np.arange(scores.shape[0]), -scores))
    eligible = order[scores[order] > 0.0]
    picked = np.sort(eligible[:count])
    return RegenPlan(picked, scores, strategy, rate)
