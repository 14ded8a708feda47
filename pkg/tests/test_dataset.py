import os
import struct

import numpy as np
import pytest

from ppnet import (DataError, load_image_as_tensor, load_manifest, read_image,
                   write_pgm, write_ppm)
from ppnet.dataset import convert_kadid, convert_tid


def write_bmp_24(arr: np.ndarray, path) -> None:
    """Minimal bottom-up 24-bit BMP writer (test oracle for the reader)."""
    h, w = arr.shape[:2]
    row_bytes = (w * 3 + 3) & ~3
    payload = bytearray()
    for y in range(h - 1, -1, -1):
        row = arr[y, :, ::-1].tobytes()  # BGR
        payload += row + b"\x00" * (row_bytes - len(row))
    file_size = 54 + len(payload)
    header = struct.pack("<2sIHHI", b"BM", file_size, 0, 0, 54)
    info = struct.pack("<IiiHHIIiiII", 40, w, h, 1, 24, 0, len(payload),
                       2835, 2835, 0, 0)
    with open(path, "wb") as fh:
        fh.write(header + info + payload)


class TestManifest:
    def test_well_formed(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("# comment line\nref,dist,mos,mos_std\n"
                     "a.ppm,b.ppm,5.5,0.3\n"
                     "a.ppm,c.ppm,4.0,0.2\n")
        m = load_manifest(p)
        assert len(m) == 2
        assert m.records[0].mos == 5.5
        assert m.records[0].ref_path == str(tmp_path / "a.ppm")

    def test_missing_column_named(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("ref,dist,mos\na,b,5\n")
        with pytest.raises(DataError, match="mos_std"):
            load_manifest(p)

    def test_non_numeric_mos_reports_row(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("ref,dist,mos,mos_std\na,b,high,0.3\n")
        with pytest.raises(DataError, match=":2"):
            load_manifest(p)

    def test_duplicate_pair_rejected(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("ref,dist,mos,mos_std\na,b,5,0.3\na,b,4,0.1\n")
        with pytest.raises(DataError, match="duplicate"):
            load_manifest(p)

    def test_empty_rejected(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("")
        with pytest.raises(DataError, match="empty"):
            load_manifest(p)

    def test_order_preserved(self, tmp_path):
        rows = [f"r.ppm,d{i}.ppm,{9 - i},0.1" for i in range(5)]
        p = tmp_path / "m.csv"
        p.write_text("ref,dist,mos,mos_std\n" + "\n".join(rows) + "\n")
        m = load_manifest(p)
        assert [r.mos for r in m.records] == [9.0, 8.0, 7.0, 6.0, 5.0]


class TestImageIO:
    def test_ppm_roundtrip_byte_identical(self, tmp_path, rng):
        arr = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
        p = tmp_path / "img.ppm"
        write_ppm(arr, p)
        decoded = read_image(p)
        np.testing.assert_array_equal(decoded, arr)
        # Re-encoding reproduces the file byte for byte.
        p2 = tmp_path / "img2.ppm"
        write_ppm(decoded, p2)
        assert p.read_bytes() == p2.read_bytes()

    def test_scaling_to_unit_range(self, tmp_path):
        arr = np.zeros((2, 2, 3), dtype=np.uint8)
        arr[0, 0] = (255, 0, 0)
        p = tmp_path / "red.ppm"
        write_ppm(arr, p)
        t = load_image_as_tensor(p)
        np.testing.assert_allclose(t.data[0, 0], [1.0, 0.0, 0.0])
        assert t.sampling_frequency == 64.0

    def test_grayscale_replicated_with_warning(self, tmp_path, rng):
        arr = rng.integers(0, 256, size=(4, 6), dtype=np.uint8)
        p = tmp_path / "gray.pgm"
        write_pgm(arr, p)
        with pytest.warns(UserWarning, match="replicated"):
            t = load_image_as_tensor(p)
        assert t.channels == 3
        np.testing.assert_array_equal(t.data[:, :, 0], t.data[:, :, 1])

    def test_bmp_decodes_like_ppm(self, tmp_path, rng):
        arr = rng.integers(0, 256, size=(6, 5, 3), dtype=np.uint8)
        ppm = tmp_path / "img.ppm"
        bmp = tmp_path / "img.bmp"
        write_ppm(arr, ppm)
        write_bmp_24(arr, bmp)
        np.testing.assert_array_equal(read_image(ppm), read_image(bmp))

    def test_truncated_ppm_rejected(self, tmp_path):
        p = tmp_path / "trunc.ppm"
        p.write_bytes(b"P6\n4 4\n255\n\x00\x00\x00")
        with pytest.raises(DataError, match="truncated"):
            read_image(p)

    def test_unsupported_format_rejected(self, tmp_path):
        p = tmp_path / "img.png"
        p.write_bytes(b"\x89PNG\r\n\x1a\n" + b"\x00" * 32)
        with pytest.raises(DataError, match="unsupported"):
            read_image(p)

    def test_unsupported_bmp_depth_rejected(self, tmp_path):
        header = struct.pack("<2sIHHI", b"BM", 54, 0, 0, 54)
        info = struct.pack("<IiiHHIIiiII", 40, 2, 2, 1, 8, 0, 0, 0, 0, 0, 0)
        p = tmp_path / "pal.bmp"
        p.write_bytes(header + info)
        with pytest.raises(DataError, match="24-bit"):
            read_image(p)


class TestConverters:
    def _make_tid_tree(self, root, rng):
        (root / "distorted_images").mkdir(parents=True)
        (root / "reference_images").mkdir()
        rows_mos, rows_std = [], []
        for r in (1, 2):
            ref = rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8)
            write_bmp_24(ref, root / "reference_images" / f"I{r:02d}.BMP")
            for d in (1, 2):
                name = f"i{r:02d}_{d:02d}_1.bmp"
                write_bmp_24(ref, root / "distorted_images" / name)
                rows_mos.append(f"{5.0 - d} {name}")
                rows_std.append(f"{0.1 * d}")
        (root / "mos_with_names.txt").write_text("\n".join(rows_mos) + "\n")
        (root / "mos_std.txt").write_text("\n".join(rows_std) + "\n")

    def test_convert_tid(self, tmp_path, rng):
        self._make_tid_tree(tmp_path, rng)
        out = tmp_path / "tid.csv"
        n = convert_tid(tmp_path, out)
        assert n == 4
        m = load_manifest(out)
        assert len(m) == 4
        # Reference resolution is case-insensitive on the stem.
        assert m.records[0].ref_path.endswith("I01.BMP")
        assert m.records[0].mos == 4.0
        assert m.records[0].mos_std == pytest.approx(0.1)

    def test_convert_kadid(self, tmp_path, rng):
        (tmp_path / "images").mkdir()
        (tmp_path / "dmos.csv").write_text(
            "dist_img,ref_img,dmos,var\n"
            "I01_01_01.png,I01.png,4.5,0.64\n"
            "I01_02_01.png,I01.png,3.0,0.25\n")
        out = tmp_path / "kadid.csv"
        n = convert_kadid(tmp_path, out)
        assert n == 2
        m = load_manifest(out)
        # Variance column converts to a standard deviation.
        assert m.records[0].mos_std == pytest.approx(0.8)
        assert m.records[1].mos_std == pytest.approx(0.5)

    def test_convert_tid_missing_files(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            convert_tid(tmp_path, tmp_path / "out.csv")
