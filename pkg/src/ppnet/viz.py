"""Figure emission: kernel montages, summed Fourier magnitudes, and
per-layer response grids.

Everything is written as dependency-free binary PGM plus a sidecar
``<name>.meta.csv`` carrying per-panel min/max (and channel tuning for the
filter-bank stages).  Signed data maps zero to mid-gray so center-surround
and odd-phase polarity stays visible.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .dataset import write_pgm
from .errors import UsageError
from .model import CompiledModel, ModelState, channel_layout
from .tensor import ImageTensor

__all__ = ["RenderSpec", "render_kernels", "render_responses"]

_CONV_LAYERS = (2, 4, 6)
_MAX_PANELS_PER_SHEET = 64
_TILE_GAP = 2


@dataclass(frozen=True)
class RenderSpec:
    """What to render and where.

    target: 'kernels', 'fourier_sum' or 'layer_taps'; layer indices are
    1-based.  normalization 'per-panel' stretches each tile independently,
    'global' shares one scale across the sheet.  weighted applies the
    |B| of the final scaling to Fourier sums.
    """

    target: str
    layer: int
    out_path: str
    normalization: str = "per-panel"
    weighted: bool = False

    def __post_init__(self):
        if self.target not in ("kernels", "fourier_sum", "layer_taps"):
            raise UsageError(f"unknown render target {self.target!r}")
        if not 1 <= self.layer <= 8:
            raise UsageError(f"layer index must be in 1..8, got {self.layer}")
        if self.normalization not in ("per-panel", "global"):
            raise UsageError(f"unknown normalization {self.normalization!r}")


def _to_gray(tile: np.ndarray, lo: float, hi: float, signed: bool) -> np.ndarray:
    if signed:
        a = max(abs(lo), abs(hi), 1e-300)
        scaled = 0.5 + tile / (2.0 * a)
    else:
        span = max(hi - lo, 1e-300)
        scaled = (tile - lo) / span
    return np.clip(np.round(scaled * 255.0), 0, 255).astype(np.uint8)


def _montage(tiles: list[np.ndarray], rows: int, cols: int,
             per_panel: bool, signed: bool) -> tuple[np.ndarray, list[tuple[float, float]]]:
    th, tw = tiles[0].shape
    sheet = np.full((rows * th + (rows - 1) * _TILE_GAP,
                     cols * tw + (cols - 1) * _TILE_GAP), 128, dtype=np.uint8)
    glo = min(float(t.min()) for t in tiles)
    ghi = max(float(t.max()) for t in tiles)
    ranges = []
    for idx, tile in enumerate(tiles):
        r, c = divmod(idx, cols)
        lo, hi = float(tile.min()), float(tile.max())
        ranges.append((lo, hi))
        use_lo, use_hi = (lo, hi) if per_panel else (glo, ghi)
        y0 = r * (th + _TILE_GAP)
        x0 = c * (tw + _TILE_GAP)
        sheet[y0:y0 + th, x0:x0 + tw] = _to_gray(tile, use_lo, use_hi, signed)
    return sheet, ranges


def _write_meta(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _meta_path(out_path: str) -> str:
    base, _ = os.path.splitext(out_path)
    return base + ".meta.csv"


def _layer_kernel(compiled: CompiledModel, layer: int) -> np.ndarray:
    if layer == 2:
        return compiled.state.params["layer2"]["matrix"].T[np.newaxis, np.newaxis, :, :]
    if layer == 4:
        return compiled.dog_bank.data
    if layer == 6:
        return compiled.gabor_bank.data
    raise UsageError(f"layer {layer} is not convolutional; choose one of "
                     f"{_CONV_LAYERS}")


def render_kernels(m: ModelState, spec: RenderSpec) -> str:
    """Emit a kernel montage (one tile per in/out channel pair) or the
    per-class sum of filter DFT magnitudes.  Returns the written path."""
    if spec.layer not in _CONV_LAYERS:
        raise UsageError(f"layer {spec.layer} is not convolutional; choose "
                         f"one of {_CONV_LAYERS}")
    compiled = CompiledModel(m)
    kernel = _layer_kernel(compiled, spec.layer)
    kh, kw, cin, cout = kernel.shape

    if spec.target == "fourier_sum":
        return _render_fourier_sum(compiled, kernel, spec)

    tiles = [kernel[:, :, i, z] for i in range(cin) for z in range(cout)]
    sheet, ranges = _montage(tiles, cin, cout,
                             per_panel=(spec.normalization == "per-panel"),
                             signed=True)
    write_pgm(sheet, spec.out_path)
    rows = []
    infos = channel_layout(m) if spec.layer == 6 else None
    for idx, (lo, hi) in enumerate(ranges):
        i, z = divmod(idx, cout)
        row = [idx, i, z, repr(lo), repr(hi)]
        if infos is not None:
            c = infos[z]
            row += [c.chromatic_class, repr(c.frequency), repr(c.theta_f),
                    repr(c.phase)]
        rows.append(row)
    header = ["tile", "in_channel", "out_channel", "min", "max"]
    if infos is not None:
        header += ["class", "frequency_cpd", "orientation_rad", "phase_rad"]
    _write_meta(_meta_path(spec.out_path), header, rows)
    return spec.out_path


def _render_fourier_sum(compiled: CompiledModel, kernel: np.ndarray,
                        spec: RenderSpec) -> str:
    infos = channel_layout(compiled.state) if spec.layer == 6 else None
    cout = kernel.shape[3]
    weights = np.abs(compiled.state.params["layer8"]["b"]) \
        if (spec.weighted and cout == 128) else np.ones(cout)
    if infos is None:
        groups = {"all": list(range(cout))}
    else:
        groups = {}
        for c in infos:
            groups.setdefault(c.chromatic_class, []).append(c.index)
    pad = max(128, kernel.shape[0])
    tiles = []
    names = []
    for name, members in groups.items():
        total = np.zeros((pad, pad))
        for z in members:
            slab = kernel[:, :, :, z].sum(axis=2)
            total += weights[z] * np.abs(np.fft.fftshift(np.fft.fft2(slab, s=(pad, pad))))
        tiles.append(total)
        names.append(name)
    sheet, ranges = _montage(tiles, 1, len(tiles),
                             per_panel=(spec.normalization == "per-panel"),
                             signed=False)
    write_pgm(sheet, spec.out_path)
    _write_meta(_meta_path(spec.out_path),
                ["panel", "class", "min", "max", "weighted"],
                [[i, names[i], repr(lo), repr(hi), spec.weighted]
                 for i, (lo, hi) in enumerate(ranges)])
    return spec.out_path


def render_responses(m: ModelState, img: ImageTensor, spec: RenderSpec) -> list[str]:
    """Emit per-channel panels of one layer tap, at most 64 panels per
    sheet; returns the written paths (one per sheet)."""
    compiled = CompiledModel(m)
    _, taps = compiled.forward(img)
    tap = taps[spec.layer - 1]
    channels = tap.channels
    per_panel = spec.normalization == "per-panel"
    paths = []
    base, ext = os.path.splitext(spec.out_path)
    ext = ext or ".pgm"
    n_sheets = (channels + _MAX_PANELS_PER_SHEET - 1) // _MAX_PANELS_PER_SHEET
    for sheet_idx in range(n_sheets):
        lo_c = sheet_idx * _MAX_PANELS_PER_SHEET
        hi_c = min(channels, lo_c + _MAX_PANELS_PER_SHEET)
        tiles = [tap.data[:, :, c] for c in range(lo_c, hi_c)]
        cols = int(np.ceil(np.sqrt(len(tiles))))
        rows_n = int(np.ceil(len(tiles) / cols))
        while len(tiles) < rows_n * cols:
            tiles.append(np.zeros_like(tiles[0]))
        sheet, ranges = _montage(tiles, rows_n, cols, per_panel, signed=True)
        path = spec.out_path if n_sheets == 1 else f"{base}_sheet{sheet_idx}{ext}"
        write_pgm(sheet, path)
        _write_meta(_meta_path(path),
                    ["panel", "channel", "min", "max"],
                    [[i, lo_c + i, repr(lo), repr(hi)]
                     for i, (lo, hi) in enumerate(ranges[:hi_c - lo_c])])
        paths.append(path)
    return paths
