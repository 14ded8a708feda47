"""Image-quality database ingestion.

The canonical input is a UTF-8 CSV manifest with header
``ref,dist,mos,mos_std`` (lines starting with ``#`` are comments);
relative paths resolve against the manifest's directory.  Converters turn
the native TID2008/TID2013 and KADID layouts into this format.

Supported image formats are binary PPM/PGM (P6/P5, 8-bit) and 24-bit
uncompressed BMP; decoding is deterministic and grayscale inputs are
replicated to 3 channels with a warning.
"""

from __future__ import annotations

import csv
import os
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, InputError
from .tensor import ImageTensor

__all__ = [
    "IqaRecord", "Manifest", "load_manifest", "save_manifest",
    "load_image_as_tensor", "read_image", "write_ppm", "write_pgm",
    "convert_tid", "convert_kadid",
]

MANIFEST_COLUMNS = ("ref", "dist", "mos", "mos_std")


@dataclass(frozen=True)
class IqaRecord:
    """One database row: a reference/distorted pair with its mean opinion
    score and the score's standard deviation."""

    ref_path: str
    dist_path: str
    mos: float
    mos_std: float

    def __post_init__(self):
        if not self.ref_path or not self.dist_path:
            raise InputError("record paths must be non-empty")
        if not np.isfinite(self.mos):
            raise InputError(f"MOS must be finite, got {self.mos}")
        if not (np.isfinite(self.mos_std) and self.mos_std >= 0):
            raise InputError(f"MOS std must be finite and >= 0, got {self.mos_std}")


@dataclass(frozen=True)
class Manifest:
    name: str
    records: tuple[IqaRecord, ...]

    def __post_init__(self):
        if not self.records:
            raise InputError("manifest must contain at least one record")
        seen = set()
        for r in self.records:
            key = (r.ref_path, r.dist_path)
            if key in seen:
                raise InputError(f"duplicate (ref, dist) pair: {key}")
            seen.add(key)
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)


def load_manifest(path) -> Manifest:
    """Parse a manifest CSV; errors carry the 1-based file row number."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DataError(f"manifest not found: {path}")
    base = os.path.dirname(os.path.abspath(path))
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = None
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (row[0].lstrip().startswith("#")):
                continue
            cells = [c.strip() for c in row]
            if header is None:
                header = tuple(cells)
                if header != MANIFEST_COLUMNS:
                    missing = [c for c in MANIFEST_COLUMNS if c not in header]
                    if missing:
                        raise DataError(
                            f"{path}:{lineno}: header is missing column(s) "
                            f"{', '.join(missing)} (expected "
                            f"{','.join(MANIFEST_COLUMNS)})")
                    raise DataError(
                        f"{path}:{lineno}: header must be exactly "
                        f"{','.join(MANIFEST_COLUMNS)}, got {','.join(header)}")
                continue
            if len(cells) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(cells)}")
            ref, dist, mos_s, std_s = cells
            try:
                mos = float(mos_s)
                std = float(std_s)
            except ValueError as e:
                raise DataError(f"{path}:{lineno}: non-numeric MOS field: {e}") from e
            try:
                records.append(IqaRecord(
                    ref_path=os.path.normpath(os.path.join(base, ref)),
                    dist_path=os.path.normpath(os.path.join(base, dist)),
                    mos=mos, mos_std=std))
            except InputError as e:
                raise DataError(f"{path}:{lineno}: {e}") from e
    if header is None:
        raise DataError(f"{path}: empty manifest (no header)")
    try:
        return Manifest(name=os.path.basename(path), records=tuple(records))
    except InputError as e:
        raise DataError(f"{path}: {e}") from e


def save_manifest(records, path, name_comment: str = "") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if name_comment:
            fh.write(f"# {name_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for r in records:
            writer.writerow([r.ref_path, r.dist_path, repr(r.mos), repr(r.mos_std)])


# ---------------------------------------------------------------------------
# Image decoding

def _read_pnm_header(data: bytes, path: str):
    # Header tokens may be separated by whitespace and '#' comments.
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos] in b" \t\r\n":
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in b" \t\r\n":
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated PNM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as e:
        raise DataError(f"{path}: bad PNM header token: {e}") from e
    return width, height, maxval, pos


def _read_pnm(data: bytes, path: str) -> np.ndarray:
    magic = data[:2]
    channels = 3 if magic == b"P6" else 1
    width, height, maxval, pos = _read_pnm_header(data, path)
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit PNM supported (maxval 255), got {maxval}")
    need = width * height * channels
    raw = data[pos:pos + need]
    if len(raw) < need:
        raise DataError(f"{path}: truncated PNM payload "
                        f"({len(raw)} of {need} bytes)")
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, channels)
    return arr[:, :, 0] if channels == 1 else arr


def _read_bmp(data: bytes, path: str) -> np.ndarray:
    if len(data) < 54:
        raise DataError(f"{path}: truncated BMP header")
    pixel_offset = struct.unpack_from("<I", data, 10)[0]
    header_size = struct.unpack_from("<I", data, 14)[0]
    if header_size < 40:
        raise DataError(f"{path}: unsupported BMP header size {header_size}")
    width, height = struct.unpack_from("<ii", data, 18)
    planes, bpp = struct.unpack_from("<HH", data, 26)
    compression = struct.unpack_from("<I", data, 30)[0]
    if bpp != 24 or compression != 0:
        raise DataError(
            f"{path}: only 24-bit uncompressed BMP supported "
            f"(got {bpp} bpp, compression {compression})")
    bottom_up = height > 0
    height = abs(height)
    row_bytes = (width * 3 + 3) & ~3
    need = row_bytes * height
    raw = data[pixel_offset:pixel_offset + need]
    if len(raw) < need:
        raise DataError(f"{path}: truncated BMP payload "
                        f"({len(raw)} of {need} bytes)")
    rows = np.frombuffer(raw, dtype=np.uint8).reshape(height, row_bytes)
    bgr = rows[:, :width * 3].reshape(height, width, 3)
    rgb = bgr[:, :, ::-1]
    if bottom_up:
        rgb = rgb[::-1, :, :]
    return np.ascontiguousarray(rgb)


def read_image(path) -> np.ndarray:
    """Decode a PPM/PGM/BMP file to a uint8 array (h, w, 3) or (h, w)."""
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as e:
        raise DataError(f"cannot read image {path}: {e}") from e
    if data[:2] in (b"P6", b"P5"):
        return _read_pnm(data, path)
    if data[:2] == b"BM":
        return _read_bmp(data, path)
    raise DataError(f"{path}: unsupported image format "
                    f"(expected binary PPM/PGM or 24-bit BMP)")


def load_image_as_tensor(path, sampling_frequency: float = 64.0) -> ImageTensor:
    """Decode and scale 8-bit codes to [0, 1]; attach the cpd calibration."""
    arr = read_image(path)
    if arr.ndim == 2:
        warnings.warn(f"{path}: grayscale image replicated to 3 channels",
                      stacklevel=2)
        arr = np.repeat(arr[:, :, np.newaxis], 3, axis=2)
    return ImageTensor(arr.astype(np.float64) / 255.0, sampling_frequency)


def write_ppm(arr: np.ndarray, path) -> None:
    """Write a (h, w, 3) uint8 array as binary PPM (P6)."""
    arr = np.asarray(arr)
    if arr.dtype != np.uint8 or arr.ndim != 3 or arr.shape[2] != 3:
        raise InputError(f"PPM writer needs (h, w, 3) uint8, got "
                         f"{arr.dtype} {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def write_pgm(arr: np.ndarray, path) -> None:
    """Write a (h, w) uint8 array as binary PGM (P5)."""
    arr = np.asarray(arr)
    if arr.dtype != np.uint8 or arr.ndim != 2:
        raise InputError(f"PGM writer needs (h, w) uint8, got {arr.dtype} {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


# ---------------------------------------------------------------------------
# Native database layouts -> canonical manifest

def _find_reference(ref_dir: str, stem: str) -> str:
    for name in os.listdir(ref_dir):
        base, _ = os.path.splitext(name)
        if base.lower() == stem.lower():
            return os.path.join(ref_dir, name)
    raise DataError(f"no reference image named {stem}.* under {ref_dir}")


def convert_tid(tid_root, out_path, name: str = "tid") -> int:
    """Convert a TID2008/TID2013 tree to the canonical manifest.

    Expects ``mos_with_names.txt`` (lines: ``<mos> <distorted-name>``) and
    ``mos_std.txt`` (one std per line, same order) in the root, distorted
    images under ``distorted_images/`` named ``iRR_DD_L.*`` and references
    under ``reference_images/`` named ``iRR.*``.  Returns the record count.
    """
    tid_root = os.fspath(tid_root)
    mos_file = os.path.join(tid_root, "mos_with_names.txt")
    std_file = os.path.join(tid_root, "mos_std.txt")
    for f in (mos_file, std_file):
        if not os.path.exists(f):
            raise DataError(f"expected file not found: {f}")
    with open(mos_file, "r", encoding="utf-8") as fh:
        mos_lines = [ln.split() for ln in fh if ln.strip()]
    with open(std_file, "r", encoding="utf-8") as fh:
        std_lines = [ln.strip() for ln in fh if ln.strip()]
    if len(mos_lines) != len(std_lines):
        raise DataError(
            f"{mos_file} has {len(mos_lines)} entries but {std_file} has "
            f"{len(std_lines)}")
    dist_dir = os.path.join(tid_root, "distorted_images")
    ref_dir = os.path.join(tid_root, "reference_images")
    records = []
    for lineno, (parts, std_s) in enumerate(zip(mos_lines, std_lines), start=1):
        if len(parts) != 2:
            raise DataError(f"{mos_file}:{lineno}: expected '<mos> <name>'")
        mos_s, dist_name = parts
        stem = os.path.splitext(dist_name)[0]
        ref_stem = stem.split("_")[0]
        try:
            records.append(IqaRecord(
                ref_path=_find_reference(ref_dir, ref_stem),
                dist_path=os.path.join(dist_dir, dist_name),
                mos=float(mos_s), mos_std=float(std_s)))
        except ValueError as e:
            raise DataError(f"{mos_file}:{lineno}: {e}") from e
    save_manifest(records, out_path, name_comment=f"{name} converted from {tid_root}")
    return len(records)


def convert_kadid(kadid_root, out_path) -> int:
    """Convert a KADID-10k tree (``dmos.csv`` + ``images/``) to the
    canonical manifest.  The ``var`` column is a variance and is converted
    to a standard deviation; a ``std`` column is taken as-is."""
    kadid_root = os.fspath(kadid_root)
    csv_path = os.path.join(kadid_root, "dmos.csv")
    if not os.path.exists(csv_path):
        raise DataError(f"expected file not found: {csv_path}")
    img_dir = os.path.join(kadid_root, "images")
    records = []
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = [c.strip().lower() for c in next(reader, [])]
        try:
            i_dist = header.index("dist_img")
            i_ref = header.index("ref_img")
            i_mos = header.index("dmos")
        except ValueError as e:
            raise DataError(f"{csv_path}: missing column: {e}") from e
        if "std" in header:
            i_spread, is_variance = header.index("std"), False
        elif "var" in header:
            i_spread, is_variance = header.index("var"), True
        else:
            raise DataError(f"{csv_path}: missing column: 'std' or 'var'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                spread = float(row[i_spread])
                std = float(np.sqrt(spread)) if is_variance else spread
                records.append(IqaRecord(
                    ref_path=os.path.join(img_dir, row[i_ref].strip()),
                    dist_path=os.path.join(img_dir, row[i_dist].strip()),
                    mos=float(row[i_mos]), mos_std=std))
            except (ValueError, IndexError, InputError) as e:
                raise DataError(f"{csv_path}:{lineno}: {e}") from e
    save_manifest(records, out_path, name_comment=f"kadid converted from {kadid_root}")
    return len(records)
