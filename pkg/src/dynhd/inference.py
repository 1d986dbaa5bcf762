"""Similarity scoring, top-k prediction, accuracy metrics, and the
hardware-noise perturbation harness.

Conventions shared across the package:

- cosine similarity with a zero vector is 0 (keeps scoring total while
  classes are still empty during training);
- rank ties break toward the lower class index;
- norms are always sqrt(dot(v, v)) per row, so cached and fresh norms agree
  bit-for-bit.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .encoder import encode_batch
from .model import ClassModel, Dataset, EncoderState, Hypervector


def vec_norm(v: np.ndarray) -> float:
    return float(np.sqrt(np.dot(v, v)))


def row_norms(m: np.ndarray) -> np.ndarray:
    return np.array([vec_norm(row) for row in m])


def model_scores(classes: np.ndarray, class_norms: np.ndarray,
                 h: np.ndarray, h_norm: float) -> np.ndarray:
    """Cosine scores of h against every class row; zero norms score 0."""
    dots = classes @ h
    denom = class_norms * h_norm
    return np.divide(dots, denom, out=np.zeros_like(dots),
                     where=denom > 0.0)


def ranked_classes(scores: np.ndarray) -> np.ndarray:
    """Class indices by descending score, ties toward the lower index."""
    return np.lexsort((np.arange(scores.shape[0]), -scores))


class TopKResult(NamedTuple):
    labels: np.ndarray  # (k,) class indices, descending similarity
    scores: np.ndarray  # (k,) matching similarity scores
    k: int


def cosine_similarity(a: Hypervector, b: Hypervector) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na, nb = vec_norm(a), vec_norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b)) / (na * nb)


def score_all(m: ClassModel, h: Hypervector) -> np.ndarray:
    """Per-class cosine similarities, in model label order."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (m.dim,):
        raise ValueError(f"hypervector must have shape ({m.dim},), "
                         f"got {h.shape}")
    return model_scores(m.classes, row_norms(m.classes), h, vec_norm(h))


def predict_topk(m: ClassModel, h: Hypervector, k: int) -> TopKResult:
    """The k most similar classes, descending; k=1 is argmax prediction."""
    if not 1 <= k <= m.n_classes:
        raise ValueError(f"k must be in [1, {m.n_classes}], got {k}")
    scores = score_all(m, h)
    order = ranked_classes(scores)[:k]
    return TopKResult(order, scores[order], k)


def topk_accuracy(m: ClassModel, e: EncoderState, test: Dataset,
                  k: int) -> float:
    """Fraction of samples whose true label is among the top-k classes."""
    if len(test) == 0:
        raise ValueError("test dataset must be non-empty")
    if list(test.label_names) != list(m.labels):
        raise ValueError("dataset label set does not match the model")
    encodings = encode_batch(e, test.features)
    hits = 0
    for i in range(len(test)):
        result = predict_topk(m, encodings[i], k)
        if int(test.labels[i]) in result.labels:
            hits += 1
    return hits / len(test)


def perturb_model(m: ClassModel, q: float, magnitude: float,
                  seed: int) -> ClassModel:
    """Add seeded Gaussian noise to a random fraction q of model entries.

    Exactly floor(q * L * D) entries (chosen without replacement) receive
    noise with standard deviation magnitude * RMS(all model entries).  The
    input model is left untouched.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    if magnitude < 0.0:
        raise ValueError("magnitude must be non-negative")
    out = m.copy()
    total = m.classes.size
    count = int(np.floor(q * total))
    if count == 0:
        return out
    rng = np.random.Generator(np.random.Philox(key=seed))
    picked = rng.permutation(total)[:count]
    rms = float(np.sqrt(np.mean(m.classes ** 2)))
    noise = rng.standard_normal(count) * (magnitude * rms)
    out.classes.ravel()[picked] += noise
    return out
