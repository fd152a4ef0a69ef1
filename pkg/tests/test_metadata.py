import numpy as np
import pytest

from trichoscan.image import GrayImage
from trichoscan.metadata import (ExifError, CaptureMeta, parse_exif, build_exif_blob,
                                 scan_jpeg_app1, load_pgm, save_pgm, load_capture_meta)


def test_parse_little_endian_exposure():
    blob = build_exif_blob(1, 50, 200, 640, 480, "little")
    meta = parse_exif(blob)
    assert meta.exposure_time == pytest.approx(0.02)
    assert meta.iso == 200
    assert (meta.width, meta.height) == (640, 480)
    assert meta.byte_order == "little"


def test_byte_order_symmetry():
    le = parse_exif(build_exif_blob(1, 30, 400, 1203, 1203, "little"))
    be = parse_exif(build_exif_blob(1, 30, 400, 1203, 1203, "big"))
    assert le.exposure_time == be.exposure_time
    assert le.iso == be.iso
    assert (le.width, le.height) == (be.width, be.height)


def test_exif_prefix_accepted():
    blob = build_exif_blob(1, 60, 100, 10, 10)
    meta = parse_exif(b"Exif\x00\x00" + blob)
    assert meta.iso == 100


def test_truncated_blob_errors_not_crashes():
    blob = build_exif_blob(1, 50, 200, 640, 480)
    for cut in (4, 9, 20, len(blob) - 3):
        with pytest.raises(ExifError):
            parse_exif(blob[:cut])


def test_bad_magic_and_missing_tag():
    with pytest.raises(ExifError, match="byte-order"):
        parse_exif(b"XX" + bytes(20))
    # a valid header whose IFD carries none of the required tags
    import struct
    blob = b"II" + struct.pack("<H", 42) + struct.pack("<I", 8) + struct.pack("<H", 0) + struct.pack("<I", 0)
    with pytest.raises(ExifError, match="missing required tag"):
        parse_exif(blob)


def test_mutation_fuzz_small():
    # the acceptance suite runs the full 1e5-iteration fuzz; keep a quick one here
    blob = bytearray(build_exif_blob(1, 50, 200, 640, 480))
    rng = np.random.default_rng(0)
    for _ in range(3000):
        mutated = bytearray(blob)
        for _ in range(int(rng.integers(1, 4))):
            mutated[int(rng.integers(len(mutated)))] = int(rng.integers(256))
        try:
            meta = parse_exif(bytes(mutated))
            assert isinstance(meta, CaptureMeta)
        except ExifError:
            pass


def _minimal_jpeg(payload: bytes) -> bytes:
    import struct
    app1 = b"Exif\x00\x00" + payload
    return (b"\xff\xd8"
            + b"\xff\xe0" + struct.pack(">H", 4) + b"JF"          # APP0 stub
            + b"\xff\xe1" + struct.pack(">H", len(app1) + 2) + app1
            + b"\xff\xd9")


def test_jpeg_app1_roundtrip():
    inner = build_exif_blob(1, 25, 800, 100, 80)
    assert scan_jpeg_app1(_minimal_jpeg(inner)) == inner


def test_jpeg_without_exif_segment():
    import struct
    jpg = b"\xff\xd8" + b"\xff\xe0" + struct.pack(">H", 4) + b"JF" + b"\xff\xd9"
    with pytest.raises(ExifError, match="no Exif APP1"):
        scan_jpeg_app1(jpg)


def test_jpeg_segment_length_past_eof():
    import struct
    jpg = b"\xff\xd8" + b"\xff\xe1" + struct.pack(">H", 60000) + b"Exif\x00\x00"
    with pytest.raises(ExifError, match="exceeds file"):
        scan_jpeg_app1(jpg)


def test_pgm_roundtrip_exact(tmp_path):
    img = GrayImage(np.array([[0.0, 128.0], [200.0, 255.0]]))
    path = tmp_path / "t.pgm"
    save_pgm(img, path)
    back = load_pgm(path)
    assert np.array_equal(back.pixels, img.pixels)


def test_pgm_comments_tolerated(tmp_path):
    raster = bytes([10, 20, 30, 40, 50, 60])
    data = b"P5\n# a comment\n3 # widths\n2\n255\n" + raster
    path = tmp_path / "c.pgm"
    path.write_bytes(data)
    img = load_pgm(path)
    assert img.width == 3 and img.height == 2
    assert img.pixels[1, 2] == 60


def test_pgm_maxval_unsupported(tmp_path):
    path = tmp_path / "big.pgm"
    path.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
    with pytest.raises(ExifError, match="maxval"):
        load_pgm(path)


def test_sidecar_precedence(tmp_path):
    img = GrayImage.constant(4, 4, 100)
    save_pgm(img, tmp_path / "s.pgm")
    (tmp_path / "s.meta.json").write_text(
        '{"exposure_time_s": 0.1, "iso": 100, "width": 4, "height": 4}')
    meta = load_capture_meta(tmp_path / "s.pgm")
    assert meta.iso == 100
    (tmp_path / "s.exif").write_bytes(build_exif_blob(1, 20, 400, 4, 4))
    meta = load_capture_meta(tmp_path / "s.pgm")
    assert meta.iso == 400  # blob wins over the JSON sidecar
