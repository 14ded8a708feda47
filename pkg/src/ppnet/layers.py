"""The three layer mechanisms the model composes: divisive normalization,
parametric convolution, and the 3x3 opponent-color transform.

Divisive normalization divides each signed response by a pooled estimate
of neighboring squared responses:

    y = B * x / (beta + G * x^2) ** 0.5

with fixed exponents alpha = 2 (inside the pool) and eps = 0.5 (on the
denominator).  Three pool shapes are supported: a per-channel scalar, a
spatial Gaussian per channel, and the space/frequency/orientation coupling
of the final stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import fftconvolve

from .errors import ConfigurationError, InputError, ParameterError
from .kernels import (ChannelMix, DnNeighborhoodParams, DoGParams, GaborParams,
                      GaussianParams, dn_coupling_matrix, dn_spatial_profiles,
                      dog_kernel, gabor_kernel, gaussian_kernel)
from .tensor import ImageTensor, KernelTensor, conv2d, max_pool_2x2

__all__ = [
    "DN_ALPHA", "DN_EPS",
    "PointwiseNeighborhood", "GaussianNeighborhood", "FeatureNeighborhood",
    "DnParams", "ColorMatrix",
    "divisive_norm", "color_matrix", "param_conv",
]

DN_ALPHA = 2
DN_EPS = 0.5


@dataclass(frozen=True)
class PointwiseNeighborhood:
    """Scalar pool weight per channel: no spatial or cross-channel support."""

    h: np.ndarray

    def __post_init__(self):
        arr = np.atleast_1d(np.asarray(self.h, dtype=np.float64))
        arr.flags.writeable = False
        object.__setattr__(self, "h", arr)


@dataclass(frozen=True)
class GaussianNeighborhood:
    """One unit-energy spatial Gaussian per channel, scaled by an amplitude."""

    amplitude: np.ndarray
    gamma: np.ndarray
    size: int
    # Derived profiles per grid spacing; idempotent, so thread-safe.
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        amp = np.atleast_1d(np.asarray(self.amplitude, dtype=np.float64))
        gam = np.atleast_1d(np.asarray(self.gamma, dtype=np.float64))
        if amp.shape != gam.shape:
            raise ConfigurationError("amplitude and gamma must have matching shapes")
        if not np.all(gam > 0):
            raise ParameterError("gaussian neighborhood gamma must be > 0")
        if self.size < 1 or self.size % 2 == 0:
            raise ConfigurationError(f"neighborhood size must be odd, got {self.size}")
        amp.flags.writeable = False
        gam.flags.writeable = False
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "gamma", gam)

    def profiles(self, spacing: float, channels: int):
        key = (spacing, channels)
        if key not in self._cache:
            gammas = np.broadcast_to(self.gamma, (channels,))
            stack = np.stack(
                [gaussian_kernel(GaussianParams(g, g), self.size, spacing)
                 .data[:, :, 0, 0] for g in gammas], axis=2)
            self._cache[key] = (stack, _profile_groups(stack))
        return self._cache[key]


@dataclass(frozen=True)
class FeatureNeighborhood:
    """Space/frequency/orientation coupling across feature channels."""

    params: DnNeighborhoodParams
    size: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.size < 1 or self.size % 2 == 0:
            raise ConfigurationError(f"neighborhood size must be odd, got {self.size}")

    def internals(self, spacing: float):
        """(coupling matrix, spatial profiles, profile groups) for one
        grid spacing."""
        if spacing not in self._cache:
            profiles = dn_spatial_profiles(self.params, self.size, spacing)
            self._cache[spacing] = (dn_coupling_matrix(self.params), profiles,
                                    _profile_groups(profiles))
        return self._cache[spacing]


@dataclass(frozen=True)
class DnParams:
    """Divisive-normalization parameters: output scale B, bias beta > 0, and
    one of the three neighborhood shapes.  Exponents are fixed constants."""

    b: np.ndarray
    beta: np.ndarray
    neighborhood: PointwiseNeighborhood | GaussianNeighborhood | FeatureNeighborhood

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        beta = np.atleast_1d(np.asarray(self.beta, dtype=np.float64))
        if not np.all(beta > 0):
            raise ParameterError("DN bias beta must be > 0")
        b.flags.writeable = False
        beta.flags.writeable = False
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "beta", beta)


@dataclass(frozen=True)
class ColorMatrix:
    """3x3 matrix mapping (R, G, B) to opponent (A, T, D) per pixel."""

    m: np.ndarray

    def __post_init__(self):
        arr = np.array(self.m, dtype=np.float64, copy=True)
        if arr.shape != (3, 3):
            raise ConfigurationError(f"color matrix must be 3x3, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("color matrix contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "m", arr)


def _per_channel(values: np.ndarray, channels: int, what: str) -> np.ndarray:
    """Broadcast a scalar or per-channel vector to (1, 1, channels)."""
    if values.shape == (1,):
        return np.broadcast_to(values, (channels,)).reshape(1, 1, channels)
    if values.shape != (channels,):
        raise ConfigurationError(
            f"{what} has {values.shape[0]} entries for {channels} channels")
    return values.reshape(1, 1, channels)


_POOL_DIRECT_BYTES = 6.4e7


def _profile_groups(profiles: np.ndarray) -> list[list[int]]:
    """Channels sharing an identical 2-D profile, batched together."""
    groups: dict[bytes, list[int]] = {}
    for c in range(profiles.shape[2]):
        groups.setdefault(profiles[:, :, c].tobytes(), []).append(c)
    return list(groups.values())


def _spatial_pool_same(squared: np.ndarray, profiles: np.ndarray,
                       groups: list[list[int]] | None = None) -> np.ndarray:
    """Correlate each channel of ``squared`` with its own 2-D profile,
    symmetric padding, same spatial size.  profiles is (s, s, channels)."""
    s = profiles.shape[0]
    pad = (s - 1) // 2
    padded = np.pad(squared, ((pad, pad), (pad, pad), (0, 0)), mode="symmetric")
    out = np.empty_like(squared)
    h, w = squared.shape[:2]
    if groups is None:
        groups = _profile_groups(profiles)
    for chans in groups:
        prof = profiles[:, :, chans[0]]
        if h * w * len(chans) * s * s * 8 <= _POOL_DIRECT_BYTES:
            # Small maps: direct inner product (FFT overhead dwarfs them).
            windows = sliding_window_view(padded[:, :, chans], (s, s),
                                          axis=(0, 1))
            out[:, :, chans] = np.tensordot(windows, prof, axes=([3, 4], [0, 1]))
        else:
            flipped = prof[::-1, ::-1, np.newaxis]
            out[:, :, chans] = fftconvolve(padded[:, :, chans], flipped,
                                           mode="valid", axes=(0, 1))
    return out


def divisive_norm(x: ImageTensor, p: DnParams) -> ImageTensor:
    """Divide each response by the pooled magnitude of its neighborhood.

    The numerator keeps the signed input; squaring inside the pool makes
    the denominator sign-safe and strictly positive for beta > 0, so the
    output is finite for every finite input.
    """
    c = x.channels
    beta = _per_channel(p.beta, c, "beta")
    b = _per_channel(p.b, c, "B")
    squared = x.data * x.data

    nb = p.neighborhood
    if isinstance(nb, PointwiseNeighborhood):
        h = _per_channel(nb.h, c, "pointwise neighborhood H")
        pool = h * squared
    elif isinstance(nb, GaussianNeighborhood):
        amp = _per_channel(nb.amplitude, c, "gaussian neighborhood amplitude")
        profiles, groups = nb.profiles(x.pixel_spacing, c)
        pool = amp * _spatial_pool_same(squared, profiles, groups)
    elif isinstance(nb, FeatureNeighborhood):
        params = nb.params
        if params.channels != c:
            raise ConfigurationError(
                f"neighborhood describes {params.channels} channels, "
                f"input has {c}")
        # The full kernel factorizes as spatial(c') x coupling(c, c'):
        # mix channels first, then one spatial pass per center channel.
        coupling, profiles, groups = nb.internals(x.pixel_spacing)
        mixed = squared @ coupling            # (h, w, c')
        pool = _spatial_pool_same(mixed, profiles, groups)
    else:
        raise ConfigurationError(f"unknown neighborhood type {type(nb).__name__}")

    y = b * x.data / (beta + pool) ** DN_EPS
    return ImageTensor(y, x.sampling_frequency)


def color_matrix(x: ImageTensor, m: ColorMatrix) -> ImageTensor:
    """Apply the opponent-color matrix at every pixel."""
    if x.channels != 3:
        raise ConfigurationError(
            f"color matrix needs exactly 3 channels, got {x.channels}")
    y = np.einsum("hwj,ij->hwi", x.data, m.m)
    return ImageTensor(y, x.sampling_frequency)


def param_conv(x: ImageTensor,
               shapes: list[DoGParams] | list[GaborParams],
               mix: ChannelMix,
               size: int,
               pool: bool = False,
               method: str = "auto") -> ImageTensor:
    """Convolve with kernels synthesized from generative parameters.

    ``shapes[z]`` generates the spatial profile of output channel z, which
    is scaled across input channels by column z of the mix; the kernel
    support can change without touching the parameter set.  Symmetric
    padding; optionally followed by 2x2 max pooling.
    """
    if mix.out_channels != len(shapes):
        raise ConfigurationError(
            f"mix has {mix.out_channels} output columns for {len(shapes)} shapes")
    spacing = x.pixel_spacing
    slices = []
    for z, shape in enumerate(shapes):
        column = ChannelMix(mix.a[:, z:z + 1])
        if isinstance(shape, DoGParams):
            k = dog_kernel(shape, column, size, spacing)
        elif isinstance(shape, GaborParams):
            k = gabor_kernel(shape, column, size, spacing)
        else:
            raise ConfigurationError(
                f"unsupported generative shape {type(shape).__name__}")
        slices.append(k.data)
    kernel = KernelTensor(np.concatenate(slices, axis=3), spacing)
    out = conv2d(x, kernel, padding="symmetric", method=method)
    if pool:
        out = max_pool_2x2(out)
    return out
