"""Generative convolution kernels.

Every filter in the model is synthesized on demand from a handful of
generative parameters, so the trainable parameter count is independent of
the kernel support.  Four families are provided:

* isotropic/anisotropic Gaussians,
* difference-of-Gaussians (center-surround),
* Gabor patches (oriented Gaussian envelope times a sinusoidal carrier),
* the space/frequency/orientation coupling kernel used by the final
  divisive-normalization stage.

Lengths are degrees of visual angle, frequencies cycles per degree (cpd),
orientations radians.  Gaussian widths are parameterized by the inverse
width gamma = 1/sigma for numerical stability.  Linear-layer kernels are
centered on the middle tap and normalized to unit energy (sum of squared
taps equals 1) per spatial slice, before channel-mixing amplitudes are
applied; the coupling kernel is a pure amplitude profile and is not
normalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ParameterError
from .tensor import KernelTensor

__all__ = [
    "GaussianParams", "DoGParams", "GaborParams", "ChannelMix",
    "ChannelMeta", "DnNeighborhoodParams",
    "gaussian_kernel", "dog_kernel", "gabor_kernel", "dn_neighborhood_kernel",
    "circular_distance",
]

# K values this close to 1 make the two Gaussians cancel; rejected.
_K_DEGENERACY = 1e-6


@dataclass(frozen=True)
class GaussianParams:
    """Anisotropic Gaussian with inverse widths in 1/degrees."""

    gamma_x: float
    gamma_y: float

    def __post_init__(self):
        if not (self.gamma_x > 0 and self.gamma_y > 0):
            raise ParameterError(
                f"gaussian inverse widths must be > 0, got "
                f"gamma_x={self.gamma_x}, gamma_y={self.gamma_y}")


@dataclass(frozen=True)
class DoGParams:
    """Center-surround pair: center inverse width and surround/center ratio."""

    gamma: float
    k: float

    def __post_init__(self):
        if not (self.gamma > 0):
            raise ParameterError(f"DoG gamma must be > 0, got {self.gamma}")
        if not (self.k > 1.0 + _K_DEGENERACY):
            raise ParameterError(
                f"DoG width ratio K must exceed 1 (by more than {_K_DEGENERACY}), "
                f"got {self.k}")


@dataclass(frozen=True)
class GaborParams:
    """Oriented Gaussian envelope times an oriented sinusoidal carrier.

    The envelope axes are rotated by theta_env; the carrier grating has
    frequency f (cpd), orientation theta_f and a phase offset inside the
    cosine (0 for even symmetry, pi/2 for odd symmetry).
    """

    gamma_x: float
    gamma_y: float
    theta_env: float
    f: float
    theta_f: float
    phase: float = 0.0

    def __post_init__(self):
        if not (self.gamma_x > 0 and self.gamma_y > 0):
            raise ParameterError(
                f"gabor envelope inverse widths must be > 0, got "
                f"gamma_x={self.gamma_x}, gamma_y={self.gamma_y}")
        if not (self.f > 0):
            raise ParameterError(f"gabor carrier frequency must be > 0, got {self.f}")


@dataclass(frozen=True)
class ChannelMix:
    """Nonnegative (in_channels, out_channels) amplitude matrix.

    Nonnegativity is an initialization-time constraint only; fitted states
    may carry signed entries, so only shape and finiteness are enforced.
    """

    a: np.ndarray

    def __post_init__(self):
        arr = np.array(self.a, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ConfigurationError(
                f"channel mix must be 2-D (in, out), got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("channel mix contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "a", arr)

    @property
    def in_channels(self) -> int:
        return self.a.shape[0]

    @property
    def out_channels(self) -> int:
        return self.a.shape[1]


@dataclass(frozen=True)
class ChannelMeta:
    """What a feature channel is tuned to: frequency (cpd), orientation
    (radians) and chromatic class ('A', 'T' or 'D')."""

    frequency: float
    orientation: float
    chromatic_class: str

    def __post_init__(self):
        if self.chromatic_class not in ("A", "T", "D"):
            raise ConfigurationError(
                f"chromatic class must be 'A', 'T' or 'D', got "
                f"{self.chromatic_class!r}")


@dataclass(frozen=True)
class DnNeighborhoodParams:
    """Per-channel coupling profile for the V1 divisive normalization.

    ``h`` is the per-channel amplitude, ``gamma_s`` the inverse spatial
    width (1/degrees), ``gamma_f`` the inverse frequency width (1/cpd,
    resolved per channel from its frequency band) and ``sigma_o`` the
    orientation width (radians).  ``channel_meta`` must describe every
    channel; channels of different chromatic class are uncoupled.
    """

    h: np.ndarray
    gamma_s: np.ndarray
    gamma_f: np.ndarray
    sigma_o: np.ndarray
    channel_meta: tuple[ChannelMeta, ...] = field(default=())

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=np.float64))
        gs = np.atleast_1d(np.asarray(self.gamma_s, dtype=np.float64))
        gf = np.atleast_1d(np.asarray(self.gamma_f, dtype=np.float64))
        so = np.atleast_1d(np.asarray(self.sigma_o, dtype=np.float64))
        n = len(self.channel_meta)
        if n == 0:
            raise ConfigurationError("channel_meta must describe every channel")
        for name, arr in (("h", h), ("gamma_s", gs), ("gamma_f", gf), ("sigma_o", so)):
            if arr.shape != (n,):
                raise ConfigurationError(
                    f"{name} must have one entry per channel ({n}), got shape {arr.shape}")
        if not (np.all(gs > 0) and np.all(gf > 0) and np.all(so > 0)):
            raise ParameterError("gamma_s, gamma_f and sigma_o must all be > 0")
        for name, arr in (("h", h), ("gamma_s", gs), ("gamma_f", gf), ("sigma_o", so)):
            arr.flags.writeable = False
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "gamma_s", gs)
        object.__setattr__(self, "gamma_f", gf)
        object.__setattr__(self, "sigma_o", so)
        object.__setattr__(self, "channel_meta", tuple(self.channel_meta))

    @property
    def channels(self) -> int:
        return len(self.channel_meta)


def centered_grid(size: int, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Centered tap coordinates in degrees; axis 0 is x (rows), axis 1 is y."""
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"kernel size must be odd and >= 1, got {size}")
    if not (spacing > 0):
        raise ParameterError(f"grid spacing must be > 0, got {spacing}")
    coords = (np.arange(size) - size // 2) * spacing
    return np.meshgrid(coords, coords, indexing="ij")


def _unit_energy(taps: np.ndarray) -> np.ndarray:
    norm = np.sqrt(np.sum(taps * taps))
    if norm == 0.0 or not np.isfinite(norm):
        raise ParameterError("degenerate kernel: zero or non-finite energy")
    return taps / norm


def circular_distance(theta: float | np.ndarray, theta0: float | np.ndarray):
    """Axial orientation distance, circular modulo pi.

    Gabor orientation is an axis, not a direction, so orientations close
    to 0 and close to pi are near neighbors.
    """
    d = np.abs(np.asarray(theta) - np.asarray(theta0)) % np.pi
    return np.minimum(d, np.pi - d)


def gaussian_kernel(p: GaussianParams, size: int, spacing: float) -> KernelTensor:
    """Unit-energy Gaussian tap grid as a 1-in/1-out kernel."""
    x, y = centered_grid(size, spacing)
    taps = np.exp(-0.5 * ((x * p.gamma_x) ** 2 + (y * p.gamma_y) ** 2))
    taps = _unit_energy(taps)
    return KernelTensor(taps[:, :, np.newaxis, np.newaxis], spacing)


def _dog_slice(p: DoGParams, size: int, spacing: float) -> np.ndarray:
    x, y = centered_grid(size, spacing)
    sigma = 1.0 / p.gamma
    r2 = x * x + y * y
    raw = (1.0 / sigma ** 2) * (
        np.exp(-r2 / (2.0 * sigma ** 2))
        - (1.0 / p.k ** 2) * np.exp(-r2 / (2.0 * (p.k * sigma) ** 2)))
    # The continuous center and surround integrate identically, so the
    # operator has no DC response; truncation to a finite support breaks
    # that exact cancellation (badly, for wide surrounds), so the residual
    # mean is removed before normalization.
    raw -= raw.mean()
    return _unit_energy(raw)


def dog_kernel(p: DoGParams, mix: ChannelMix, size: int, spacing: float) -> KernelTensor:
    """Difference-of-Gaussians kernel, one shared shape scaled across channels.

    The spatial slice is the zero-DC, unit-energy center-surround profile;
    entry (i, z) of the mix scales the slice feeding output z from input i.
    """
    taps = _dog_slice(p, size, spacing)
    data = taps[:, :, np.newaxis, np.newaxis] * mix.a[np.newaxis, np.newaxis, :, :]
    return KernelTensor(data, spacing)


def _gabor_slice(p: GaborParams, size: int, spacing: float) -> np.ndarray:
    nyquist = 0.5 / spacing
    if p.f > nyquist:
        raise ParameterError(
            f"gabor carrier frequency {p.f} cpd exceeds the Nyquist limit "
            f"{nyquist} cpd of a grid sampled every {spacing} degrees")
    x, y = centered_grid(size, spacing)
    # Envelope axes rotate; the carrier grating uses unrotated coordinates.
    xr = x * np.cos(p.theta_env) + y * np.sin(p.theta_env)
    yr = -x * np.sin(p.theta_env) + y * np.cos(p.theta_env)
    envelope = np.exp(-0.5 * ((xr * p.gamma_x) ** 2 + (yr * p.gamma_y) ** 2))
    carrier = np.cos(
        2.0 * np.pi * p.f * (x * np.cos(p.theta_f) + y * np.sin(p.theta_f)) + p.phase)
    return _unit_energy(envelope * carrier)


def gabor_kernel(p: GaborParams, mix: ChannelMix, size: int, spacing: float) -> KernelTensor:
    """Unit-energy Gabor patch scaled across channels by the mix amplitudes."""
    taps = _gabor_slice(p, size, spacing)
    data = taps[:, :, np.newaxis, np.newaxis] * mix.a[np.newaxis, np.newaxis, :, :]
    return KernelTensor(data, spacing)


def dn_coupling_matrix(p: DnNeighborhoodParams) -> np.ndarray:
    """Channel-to-channel amplitude (c, c_center) of the coupling kernel.

    Row c, column c' is the weight with which channel c enters the
    normalization pool of center channel c': the per-channel amplitude
    times Gaussian falloffs in frequency and (circular) orientation
    distance.  Channels of different chromatic class do not interact.
    """
    meta = p.channel_meta
    freqs = np.array([m.frequency for m in meta])
    thetas = np.array([m.orientation for m in meta])
    classes = np.array([m.chromatic_class for m in meta])

    df = freqs[:, np.newaxis] - freqs[np.newaxis, :]
    dtheta = circular_distance(thetas[:, np.newaxis], thetas[np.newaxis, :])
    same_class = classes[:, np.newaxis] == classes[np.newaxis, :]

    # Widths are taken from the center channel (axis 1).
    gf = p.gamma_f[np.newaxis, :]
    so = p.sigma_o[np.newaxis, :]
    coupling = p.h[np.newaxis, :] * np.exp(
        -0.5 * ((df * gf) ** 2 + (dtheta / so) ** 2))
    return np.where(same_class, coupling, 0.0)


def dn_spatial_profiles(p: DnNeighborhoodParams, size: int, spacing: float) -> np.ndarray:
    """(size, size, channels) spatial falloff, peak 1, per center channel."""
    x, y = centered_grid(size, spacing)
    r2 = (x * x + y * y)[:, :, np.newaxis]
    return np.exp(-0.5 * r2 * (p.gamma_s[np.newaxis, np.newaxis, :] ** 2))


def dn_neighborhood_kernel(p: DnNeighborhoodParams, size: int, spacing: float) -> KernelTensor:
    """Full (size, size, c, c) space/frequency/orientation coupling kernel.

    Tap (x, y, c, c') is ``h_c' * exp(-0.5 * ((x^2+y^2) gamma_s'^2
    + (f_c - f_c')^2 gamma_f'^2 + d_circ(theta_c, theta_c')^2 / sigma_o'^2))``
    with zero coupling across chromatic classes.  This is an amplitude
    profile for the normalization pool, deliberately not energy-normalized:
    a channel at zero distance from itself couples with weight h.
    """
    spatial = dn_spatial_profiles(p, size, spacing)          # (s, s, c')
    coupling = dn_coupling_matrix(p)                          # (c, c')
    data = spatial[:, :, np.newaxis, :] * coupling[np.newaxis, np.newaxis, :, :]
    return KernelTensor(data, spacing)
