"""Perceptual distance between two images through the model representation.

The distance is the root-mean-square difference of the final 128-channel
responses.  Because the last layer is a per-channel scaling B, the squared
distance separates per channel:

    d(B)^2 = sum_c B_c^2 * E_c / N

where E_c is the summed squared difference of the pre-scaling responses.
Caching E makes fitting B cheap (one pair of forward passes per image
pair, reused for every candidate B) and gives the scale fit an exact
gradient: dd/dB_c = B_c * E_c / (N * d).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .model import CompiledModel, ModelState
from .tensor import ImageTensor

__all__ = ["ChannelErrors", "perceptual_distance", "channel_errors",
           "distance_from_errors"]


@dataclass(frozen=True)
class ChannelErrors:
    """Per-channel summed squared response differences of one image pair,
    taken before the final scaling layer, plus the element count N used
    for averaging."""

    e: np.ndarray
    n: int

    def __post_init__(self):
        arr = np.asarray(self.e, dtype=np.float64)
        if arr.ndim != 1:
            raise InputError(f"channel errors must be 1-D, got shape {arr.shape}")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise InputError("channel errors must be finite and >= 0")
        if self.n <= 0:
            raise InputError("element count must be positive")
        arr.flags.writeable = False
        object.__setattr__(self, "e", arr)


def _as_compiled(m: ModelState | CompiledModel) -> CompiledModel:
    return m if isinstance(m, CompiledModel) else CompiledModel(m)


def _check_pair(ref: ImageTensor, dist: ImageTensor):
    if ref.data.shape != dist.data.shape:
        raise InputError(
            f"image pair shapes differ: {ref.data.shape} vs {dist.data.shape}")
    if ref.channels != 3:
        raise InputError(f"metric inputs must have 3 channels, got {ref.channels}")


def channel_errors(m: ModelState | CompiledModel, ref: ImageTensor,
                   dist: ImageTensor) -> ChannelErrors:
    """Forward both images and accumulate squared differences per channel."""
    _check_pair(ref, dist)
    compiled = _as_compiled(m)
    _, taps_ref = compiled.forward(ref)
    _, taps_dist = compiled.forward(dist)
    # taps[6] is the output of the V1 normalization, before the B scaling.
    diff = taps_ref[6].data - taps_dist[6].data
    e = np.sum(diff * diff, axis=(0, 1))
    return ChannelErrors(e=e, n=int(diff.size))


def distance_from_errors(b: np.ndarray, errors: ChannelErrors) -> float:
    """Reconstruct the distance for a candidate scaling vector B."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape != errors.e.shape:
        raise InputError(
            f"scale vector shape {b.shape} does not match errors {errors.e.shape}")
    return float(np.sqrt(np.sum(b * b * errors.e) / errors.n))


def perceptual_distance(m: ModelState | CompiledModel, ref: ImageTensor,
                        dist: ImageTensor) -> float:
    """Root-mean-square distance in the final model representation.

    Zero iff the final responses coincide, symmetric in its arguments,
    and monotone in each |B_c|; the triangle inequality is not claimed.
    """
    _check_pair(ref, dist)
    compiled = _as_compiled(m)
    final_ref, _ = compiled.forward(ref)
    final_dist, _ = compiled.forward(dist)
    diff = final_ref.data - final_dist.data
    return float(np.sqrt(np.sum(diff * diff) / diff.size))
