"""Nonlinear random-feature encoding and dimension regeneration.

A sample ``f`` is encoded per dimension as

    h_i = cos(dot(B_i, f) + c_i) * sin(dot(B_i, f))

with ``B_i`` a standard-normal base row and ``c_i`` a phase offset uniform on
[0, 2*pi).  Since cos and sin are each in [-1, 1], every h_i lies in [-1, 1].

Regeneration redraws the base rows and phases of selected dimensions from the
encoder's continuing uniform stream (see :mod:`dynhd.rng`), leaving all other
rows bit-identical.

Projections deliberately use einsum rather than BLAS matmul: einsum reduces
each output element with the same loop regardless of how many rows are
projected, so re-encoding a subset of dimensions reproduces the corresponding
entries of a full encode bit-for-bit.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .model import EncoderState, FeatureVector, Hypervector, RegenPlan
from .rng import UniformStream, check_seed


def _project(rows: np.ndarray, f: np.ndarray) -> np.ndarray:
    # One dot product per base row; shape-independent reduction order.
    return np.einsum("dn,n->d", rows, f)


def _check_features(f, n: int) -> np.ndarray:
    arr = np.asarray(f, dtype=np.float64)
    if arr.shape != (n,):
        raise ValueError(f"feature vector must have shape ({n},), "
                         f"got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("feature vector contains non-finite entries")
    return arr


def init_encoder(seed: int, n: int, dim: int) -> EncoderState:
    """Draw a fresh encoder: ``dim`` standard-normal base rows of length
    ``n`` (row-major draw order), then ``dim`` phases uniform on [0, 2*pi).
    """
    check_seed(seed)
    if n < 1 or dim < 1:
        raise ValueError("n and dim must be at least 1")
    stream = UniformStream(seed)
    bases = stream.normals(dim * n).reshape(dim, n)
    phases = stream.phases(dim)
    return EncoderState(bases, phases, seed, stream.position)


def encode(e: EncoderState, f: FeatureVector) -> Hypervector:
    """Encode one sample: h_i = cos(B_i.f + c_i) * sin(B_i.f)."""
    arr = _check_features(f, e.n_features)
    x = _project(e.bases, arr)
    return np.cos(x + e.phases) * np.sin(x)


def encode_batch(e: EncoderState,
                 samples: Sequence[FeatureVector]) -> np.ndarray:
    """Encode a sequence of samples; row i equals encode(e, samples[i]).

    Returns an (N, D) array; empty input yields shape (0, D).
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        return np.empty((0, e.dim))
    if arr.ndim != 2 or arr.shape[1] != e.n_features:
        raise ValueError(f"batch must have shape (N, {e.n_features}), "
                         f"got {arr.shape}")
    out = np.empty((arr.shape[0], e.dim))
    for i in range(arr.shape[0]):
        try:
            out[i] = encode(e, arr[i])
        except ValueError as exc:
            raise ValueError(f"sample {i}: {exc}") from exc
    return out


def regenerate_dims(e: EncoderState, plan: RegenPlan) -> EncoderState:
    """Redraw the base rows and phases of the planned dimensions.

    Draws continue from ``e.draw_counter``; per selected index (ascending),
    the row's ``n`` normals are drawn first, then its phase.  Unselected
    rows and phases are bit-identical to the input, which is not modified.
    """
    idx = plan.indices
    if idx.size and (idx.min() < 0 or idx.max() >= e.dim):
        raise ValueError("plan indices out of range for this encoder")
    if idx.size == 0:
        return e.copy()
    bases = e.bases.copy()
    phases = e.phases.copy()
    stream = UniformStream(e.seed, e.draw_counter)
    for i in idx:
        bases[i] = stream.normals(e.n_features)
        phases[i] = stream.phases(1)[0]
    return EncoderState(bases, phases, e.seed, stream.position)


def reencode_dims(e: EncoderState, f: FeatureVector, h: Hypervector,
                  plan: RegenPlan) -> Hypervector:
    """Recompute only the planned entries of ``h``; equals encode(e, f)
    exactly when ``h`` came from an encoder that matches ``e`` elsewhere."""
    arr = _check_features(f, e.n_features)
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (e.dim,):
        raise ValueError(f"hypervector must have shape ({e.dim},), "
                         f"got {h.shape}")
    idx = plan.indices
    if idx.size and (idx.min() < 0 or idx.max() >= e.dim):
        raise ValueError("plan indices out of range for this encoder")
    out = h.copy()
    if idx.size:
        x = _project(e.bases[idx], arr)
        out[idx] = np.cos(x + e.phases[idx]) * np.sin(x)
    return out
