"""Calibrated image tensors plus the two spatial primitives of the model:
multichannel 2-D convolution (cross-correlation convention) and 2x2 max
pooling.

Images are (height, width, channels) float64 arrays with a sampling
frequency in cycles per degree (cpd); pixel spacing is
``1 / sampling_frequency`` degrees.  Kernels are (k_height, k_width,
in_channels, out_channels) arrays with odd spatial extents and an explicit
grid spacing in degrees per tap.

All types are immutable after construction and all operations are pure
functions, so everything here is safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import fftconvolve

from .errors import ConfigurationError, InputError

__all__ = ["ImageTensor", "KernelTensor", "conv2d", "max_pool_2x2"]

# Grid spacings are compared to this absolute tolerance (degrees).
_SPACING_TOL = 1e-9

# Above this sliding-window footprint (bytes) the 'auto' method switches
# from the direct inner product to the FFT path.
_DIRECT_WINDOW_BYTES = 1.5e8


def _as_readonly_f64(data, name: str) -> np.ndarray:
    arr = np.array(data, dtype=np.float64, copy=True, order="C")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ImageTensor:
    """A (height, width, channels) raster calibrated in cycles per degree."""

    data: np.ndarray
    sampling_frequency: float

    def __post_init__(self):
        arr = _as_readonly_f64(self.data, "image data")
        if arr.ndim != 3:
            raise InputError(f"image data must be 3-D (h, w, c), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise InputError(f"image dimensions must all be >= 1, got {arr.shape}")
        if not (self.sampling_frequency > 0):
            raise InputError("sampling_frequency must be > 0 cpd")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "sampling_frequency", float(self.sampling_frequency))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def pixel_spacing(self) -> float:
        """Pixel pitch in degrees."""
        return 1.0 / self.sampling_frequency

    def extent_degrees(self) -> tuple[float, float]:
        """(height, width) of the raster in degrees of visual angle."""
        return (self.height / self.sampling_frequency,
                self.width / self.sampling_frequency)


@dataclass(frozen=True)
class KernelTensor:
    """A (k_height, k_width, in_channels, out_channels) convolution kernel.

    Spatial extents must be odd so a unique center tap exists.
    """

    data: np.ndarray
    grid_spacing: float

    def __post_init__(self):
        arr = _as_readonly_f64(self.data, "kernel data")
        if arr.ndim != 4:
            raise ConfigurationError(
                f"kernel data must be 4-D (kh, kw, cin, cout), got shape {arr.shape}")
        kh, kw = arr.shape[:2]
        if kh % 2 == 0 or kw % 2 == 0:
            raise ConfigurationError(
                f"kernel spatial extents must be odd, got {kh}x{kw}")
        if not (self.grid_spacing > 0):
            raise ConfigurationError("grid_spacing must be > 0 degrees per tap")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "grid_spacing", float(self.grid_spacing))

    @property
    def k_height(self) -> int:
        return self.data.shape[0]

    @property
    def k_width(self) -> int:
        return self.data.shape[1]

    @property
    def in_channels(self) -> int:
        return self.data.shape[2]

    @property
    def out_channels(self) -> int:
        return self.data.shape[3]


def _pad_symmetric(data: np.ndarray, kh: int, kw: int) -> np.ndarray:
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    return np.pad(data, ((ph, ph), (pw, pw), (0, 0)), mode="symmetric")


def _conv_direct(padded: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kh, kw = kernel.shape[:2]
    # windows[h, w, i, a, b] is the padded patch feeding output pixel (h, w).
    windows = sliding_window_view(padded, (kh, kw), axis=(0, 1))
    return np.einsum("hwiab,abic->hwc", windows, kernel, optimize=True)


def _conv_fft(padded: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # Cross-correlation == convolution with a spatially flipped kernel.
    flipped = kernel[::-1, ::-1, :, :]
    out = fftconvolve(padded[:, :, :, np.newaxis], flipped, mode="valid", axes=(0, 1))
    return out.sum(axis=2)


def conv2d(image: ImageTensor, kernel: KernelTensor,
           padding: str = "symmetric", method: str = "auto") -> ImageTensor:
    """Cross-correlate a multichannel image with a multichannel kernel.

    Output channel z is ``sum_i kernel[..., i, z] (x) image[..., i]`` where
    ``(x)`` slides the kernel without flipping it (cross-correlation; the
    convention is fixed and only matters for odd-symmetric kernels).

    ``padding='symmetric'`` mirror-pads so spatial size is preserved;
    ``padding='none'`` returns the valid region only.  ``method`` selects
    the direct sliding-window inner product (the reference), an FFT path,
    or ``'auto'`` which picks by working-set size.  The two paths agree to
    ~1e-13 relative and are cross-checked in the tests.
    """
    if kernel.in_channels != image.channels:
        raise ConfigurationError(
            f"kernel expects {kernel.in_channels} input channels, "
            f"image has {image.channels}")
    if abs(kernel.grid_spacing - image.pixel_spacing) > _SPACING_TOL:
        raise ConfigurationError(
            f"kernel grid spacing {kernel.grid_spacing!r} deg does not match "
            f"image pixel spacing {image.pixel_spacing!r} deg")
    if padding not in ("symmetric", "none"):
        raise ConfigurationError(f"unknown padding mode {padding!r}")
    if method not in ("auto", "direct", "fft"):
        raise ConfigurationError(f"unknown conv method {method!r}")

    kh, kw = kernel.k_height, kernel.k_width
    if padding == "symmetric":
        work = _pad_symmetric(image.data, kh, kw)
    else:
        if image.height < kh or image.width < kw:
            raise ConfigurationError(
                f"image {image.height}x{image.width} smaller than kernel "
                f"{kh}x{kw} with padding='none'")
        work = image.data

    if method == "auto":
        out_hw = (work.shape[0] - kh + 1) * (work.shape[1] - kw + 1)
        window_bytes = out_hw * kh * kw * image.channels * 8
        method = "direct" if window_bytes <= _DIRECT_WINDOW_BYTES else "fft"

    if method == "direct":
        out = _conv_direct(work, kernel.data)
    else:
        out = _conv_fft(work, kernel.data)
    return ImageTensor(out, image.sampling_frequency)


def max_pool_2x2(image: ImageTensor) -> ImageTensor:
    """Reduce each 2x2 block to its maximum; halve the sampling frequency.

    Odd spatial sizes are first mirror-padded by one trailing row/column so
    no border content is dropped; output size is ceil(size / 2).
    """
    data = image.data
    pad_h = data.shape[0] % 2
    pad_w = data.shape[1] % 2
    if pad_h or pad_w:
        data = np.pad(data, ((0, pad_h), (0, pad_w), (0, 0)), mode="symmetric")
    h2, w2 = data.shape[0] // 2, data.shape[1] // 2
    blocks = data.reshape(h2, 2, w2, 2, data.shape[2])
    pooled = blocks.max(axis=(1, 3))
    return ImageTensor(pooled, image.sampling_frequency / 2.0)
