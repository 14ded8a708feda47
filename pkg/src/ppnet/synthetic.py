"""Deterministic synthetic stimuli for demos and self-contained testing.

These are generic patterns (smooth colored noise, gratings, distorted
copies), not any particular published stimulus; any user-supplied image
works wherever these are used.
"""

from __future__ import annotations

import os

import numpy as np

from .dataset import IqaRecord, save_manifest, write_ppm
from .tensor import ImageTensor

__all__ = ["make_test_image", "make_grating", "distort",
           "write_synthetic_database"]


def make_test_image(height: int = 64, width: int = 64, seed: int = 0,
                    sampling_frequency: float = 64.0) -> ImageTensor:
    """Smooth colored-noise image in [0, 1]: low-pass filtered white noise
    with mild channel correlation, plus a luminance gradient."""
    rng = np.random.default_rng([seed, 2718])
    fy = np.fft.fftfreq(height)[:, np.newaxis]
    fx = np.fft.fftfreq(width)[np.newaxis, :]
    radius = np.sqrt(fy * fy + fx * fx)
    spectrum_gain = 1.0 / (0.05 + radius)
    channels = []
    for _ in range(3):
        noise = rng.standard_normal((height, width))
        smooth = np.real(np.fft.ifft2(np.fft.fft2(noise) * spectrum_gain))
        channels.append(smooth)
    base = np.stack(channels, axis=2)
    # Correlate channels a bit so the opponent transform has work to do.
    mixing = np.array([[1.0, 0.4, 0.2], [0.4, 1.0, 0.3], [0.2, 0.3, 1.0]])
    base = base @ mixing
    base -= base.min()
    base /= base.max()
    ramp = np.linspace(0.15, 0.85, width)[np.newaxis, :, np.newaxis]
    img = 0.55 * base + 0.45 * ramp
    return ImageTensor(np.clip(img, 0.0, 1.0), sampling_frequency)


def make_grating(height: int, width: int, frequency: float,
                 orientation: float = 0.0, contrast: float = 0.5,
                 mean: float = 0.5,
                 sampling_frequency: float = 64.0) -> ImageTensor:
    """Achromatic sinusoidal grating; frequency in cpd on the given grid."""
    yy = np.arange(height)[:, np.newaxis] / sampling_frequency
    xx = np.arange(width)[np.newaxis, :] / sampling_frequency
    phase = 2.0 * np.pi * frequency * (yy * np.cos(orientation)
                                       + xx * np.sin(orientation))
    wave = mean + 0.5 * contrast * np.sin(phase)
    img = np.repeat(wave[:, :, np.newaxis], 3, axis=2)
    return ImageTensor(np.clip(img, 0.0, 1.0), sampling_frequency)


def distort(img: ImageTensor, amount: float, seed: int = 0,
            kind: str = "noise") -> ImageTensor:
    """Return a degraded copy: additive noise, blur, or contrast loss."""
    rng = np.random.default_rng([seed, 31415])
    data = img.data
    if kind == "noise":
        out = data + amount * rng.standard_normal(data.shape)
    elif kind == "blur":
        k = max(1, int(round(amount)))
        padded = np.pad(data, ((k, k), (k, k), (0, 0)), mode="symmetric")
        out = np.zeros_like(data)
        count = 0
        for dy in range(-k, k + 1):
            for dx in range(-k, k + 1):
                out += padded[k + dy:k + dy + data.shape[0],
                              k + dx:k + dx + data.shape[1], :]
                count += 1
        out /= count
    elif kind == "contrast":
        out = 0.5 + (1.0 - amount) * (data - 0.5)
    else:
        raise ValueError(f"unknown distortion kind {kind!r}")
    return ImageTensor(np.clip(out, 0.0, 1.0), img.sampling_frequency)


def write_synthetic_database(root, n_refs: int = 3, levels: int = 4,
                             size: int = 32, seed: int = 7,
                             mos_std: float = 0.25) -> str:
    """Write a miniature image-quality database and return its manifest
    path.  MOS decreases with distortion strength, mimicking the usual
    anti-correlation between distance and opinion."""
    root = os.fspath(root)
    os.makedirs(root, exist_ok=True)
    records = []
    kinds = ("noise", "blur", "contrast")
    for r in range(n_refs):
        ref = make_test_image(size, size, seed=seed + r)
        ref_name = f"ref{r}.ppm"
        write_ppm((ref.data * 255).round().astype(np.uint8),
                  os.path.join(root, ref_name))
        for level in range(1, levels + 1):
            kind = kinds[(r + level) % len(kinds)]
            amount = {"noise": 0.04 * level, "blur": level,
                      "contrast": 0.2 * level}[kind]
            dist = distort(ref, amount, seed=seed + 13 * r + level, kind=kind)
            dist_name = f"dist{r}_{level}.ppm"
            write_ppm((dist.data * 255).round().astype(np.uint8),
                      os.path.join(root, dist_name))
            mos = 9.0 - 2.0 * level + 0.1 * r
            records.append(IqaRecord(ref_path=ref_name, dist_path=dist_name,
                                     mos=mos, mos_std=mos_std))
    manifest_path = os.path.join(root, "manifest.csv")
    save_manifest(records, manifest_path, name_comment="synthetic database")
    return manifest_path
