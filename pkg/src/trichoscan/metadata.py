"""Capture metadata: EXIF/TIFF blob parsing, JPEG APP1 scanning, PGM image I/O.

File conventions: a scene is ``name.pgm`` plus either ``name.exif`` (raw TIFF
blob) or ``name.meta.json`` (keys exposure_time_s, iso, width, height). The
blob wins when both exist.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .image import GrayImage

TAG_EXPOSURE_TIME = 0x829A
TAG_ISO = 0x8827
TAG_PIXEL_X = 0xA002
TAG_PIXEL_Y = 0xA003
TAG_EXIF_IFD = 0x8769

# TIFF field type -> byte size (only the types we ever touch)
_TYPE_SIZES = {1: 1, 2: 1, 3: 2, 4: 4, 5: 8, 7: 1, 9: 4, 10: 8}

_MAX_IFDS = 16
_MAX_ENTRIES = 512


class ExifError(ValueError):
    """Malformed or truncated metadata."""


@dataclass(frozen=True)
class CaptureMeta:
    exposure_time: float   # seconds
    iso: int
    width: int
    height: int
    byte_order: str        # "little" or "big"

    def __post_init__(self):
        if not (self.exposure_time > 0):
            raise ExifError("exposure_time must be positive")
        if not (self.iso > 0):
            raise ExifError("iso must be positive")


class _Reader:
    """Bounds-checked little/big-endian reads over a bytes blob."""

    def __init__(self, blob: bytes, little: bool):
        self.blob = blob
        self.prefix = "<" if little else ">"

    def _read(self, fmt: str, offset: int, size: int):
        if offset < 0 or offset + size > len(self.blob):
            raise ExifError(f"offset out of bounds: {offset}+{size} > {len(self.blob)}")
        return struct.unpack_from(self.prefix + fmt, self.blob, offset)[0]

    def u16(self, offset: int) -> int:
        return self._read("H", offset, 2)

    def u32(self, offset: int) -> int:
        return self._read("I", offset, 4)


def parse_exif(blob: bytes) -> CaptureMeta:
    """Parse ExposureTime, ISO and pixel dimensions from a TIFF/Exif blob.

    Accepts a bare TIFF header ("II"/"MM" + magic 42) or an Exif APP1 payload
    ("Exif\\0\\0" prefix). Walks IFD0 and the Exif sub-IFD only; every offset is
    bounds-checked so arbitrary bytes produce ExifError, never an over-read.
    """
    if not isinstance(blob, (bytes, bytearray)):
        raise ExifError("blob must be bytes")
    blob = bytes(blob)
    if blob.startswith(b"Exif\x00\x00"):
        blob = blob[6:]
    if len(blob) < 8:
        raise ExifError("blob too short for TIFF header")
    if blob[:2] == b"II":
        little = True
    elif blob[:2] == b"MM":
        little = False
    else:
        raise ExifError("bad byte-order mark (expected II or MM)")
    rd = _Reader(blob, little)
    if rd.u16(2) != 42:
        raise ExifError("bad TIFF magic (expected 42)")

    wanted = {}
    ifd_offset = rd.u32(4)
    seen = set()
    exif_ifd = None
    for _ in range(_MAX_IFDS):
        if ifd_offset == 0:
            break
        if ifd_offset in seen:
            raise ExifError("IFD offset cycle")
        seen.add(ifd_offset)
        n = rd.u16(ifd_offset)
        if n > _MAX_ENTRIES:
            raise ExifError(f"implausible IFD entry count {n}")
        for i in range(n):
            base = ifd_offset + 2 + 12 * i
            tag = rd.u16(base)
            if tag == TAG_EXIF_IFD:
                exif_ifd = rd.u32(base + 8)
            elif tag in (TAG_EXPOSURE_TIME, TAG_ISO, TAG_PIXEL_X, TAG_PIXEL_Y):
                wanted[tag] = _read_value(rd, base)
        ifd_offset = rd.u32(ifd_offset + 2 + 12 * n)
    if exif_ifd is not None and exif_ifd not in seen:
        n = rd.u16(exif_ifd)
        if n > _MAX_ENTRIES:
            raise ExifError(f"implausible Exif IFD entry count {n}")
        for i in range(n):
            base = exif_ifd + 2 + 12 * i
            tag = rd.u16(base)
            if tag in (TAG_EXPOSURE_TIME, TAG_ISO, TAG_PIXEL_X, TAG_PIXEL_Y):
                wanted.setdefault(tag, _read_value(rd, base))

    for tag, name in ((TAG_EXPOSURE_TIME, "ExposureTime"), (TAG_ISO, "ISOSpeedRatings"),
                      (TAG_PIXEL_X, "PixelXDimension"), (TAG_PIXEL_Y, "PixelYDimension")):
        if tag not in wanted:
            raise ExifError(f"missing required tag {name} (0x{tag:04X})")
    return CaptureMeta(
        exposure_time=float(wanted[TAG_EXPOSURE_TIME]),
        iso=int(wanted[TAG_ISO]),
        width=int(wanted[TAG_PIXEL_X]),
        height=int(wanted[TAG_PIXEL_Y]),
        byte_order="little" if little else "big",
    )


def _read_value(rd: _Reader, entry_base: int):
    """Read one IFD entry's first value, honoring inline-vs-offset storage."""
    ftype = rd.u16(entry_base + 2)
    count = rd.u32(entry_base + 4)
    if ftype not in _TYPE_SIZES:
        raise ExifError(f"unsupported TIFF field type {ftype}")
    if count == 0 or count > 1 << 20:
        raise ExifError(f"implausible value count {count}")
    size = _TYPE_SIZES[ftype] * count
    value_at = entry_base + 8 if size <= 4 else rd.u32(entry_base + 8)
    if ftype == 3:
        return rd.u16(value_at)
    if ftype == 4:
        return rd.u32(value_at)
    if ftype == 5:
        num = rd.u32(value_at)
        den = rd.u32(value_at + 4)
        if den == 0:
            raise ExifError("rational with zero denominator")
        return num / den
    raise ExifError(f"unexpected field type {ftype} for a capture tag")


def build_exif_blob(exposure_num: int, exposure_den: int, iso: int,
                    width: int, height: int, byte_order: str = "little") -> bytes:
    """Serialize the synthetic generator's fixed EXIF template.

    IFD0 holds only the Exif sub-IFD pointer; the sub-IFD carries ExposureTime
    (rational), ISO (short) and the pixel dimensions (long).
    """
    little = byte_order == "little"
    p = "<" if little else ">"
    bom = b"II" if little else b"MM"
    # layout: header(8) IFD0(2+12+4) ExifIFD(2+4*12+4) rational(8)
    ifd0 = 8
    exif_ifd = ifd0 + 2 + 12 + 4
    rational_at = exif_ifd + 2 + 4 * 12 + 4
    out = bytearray()
    out += bom + struct.pack(p + "H", 42) + struct.pack(p + "I", ifd0)
    out += struct.pack(p + "H", 1)
    out += struct.pack(p + "HHII", TAG_EXIF_IFD, 4, 1, exif_ifd)
    out += struct.pack(p + "I", 0)
    out += struct.pack(p + "H", 4)
    out += struct.pack(p + "HHII", TAG_EXPOSURE_TIME, 5, 1, rational_at)
    # inline SHORT values are left-justified in the 4-byte field for both byte orders
    out += struct.pack(p + "HHIHH", TAG_ISO, 3, 1, iso, 0)
    out += struct.pack(p + "HHII", TAG_PIXEL_X, 4, 1, width)
    out += struct.pack(p + "HHII", TAG_PIXEL_Y, 4, 1, height)
    out += struct.pack(p + "I", 0)
    out += struct.pack(p + "II", exposure_num, exposure_den)
    return bytes(out)


def scan_jpeg_app1(file: bytes) -> bytes:
    """Return the first APP1 Exif payload of a JPEG, with "Exif\\0\\0" stripped.

    Walks marker segments by their declared lengths without decoding image data.
    """
    if len(file) < 4 or file[:2] != b"\xff\xd8":
        raise ExifError("not a JPEG (missing SOI marker)")
    pos = 2
    while pos + 4 <= len(file):
        if file[pos] != 0xFF:
            raise ExifError(f"bad marker alignment at offset {pos}")
        marker = file[pos + 1]
        if marker == 0xD9:  # EOI
            break
        if 0xD0 <= marker <= 0xD7 or marker == 0x01:  # standalone markers
            pos += 2
            continue
        seglen = struct.unpack_from(">H", file, pos + 2)[0]
        if seglen < 2 or pos + 2 + seglen > len(file):
            raise ExifError(f"segment length {seglen} at offset {pos} exceeds file")
        if marker == 0xE1:
            payload = file[pos + 4: pos + 2 + seglen]
            if payload.startswith(b"Exif\x00\x00"):
                return payload[6:]
        if marker == 0xDA:  # start of scan: entropy data follows, stop walking
            break
        pos += 2 + seglen
    raise ExifError("no Exif APP1 segment found")


def load_pgm(path) -> GrayImage:
    """Load a binary (P5) PGM with maxval <= 255. Header comments tolerated."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise ExifError(f"{path}: not a binary PGM (P5)")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise ExifError(f"{path}: truncated PGM header")
        c = data[pos:pos + 1]
        if c == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise ExifError(f"{path}: unterminated PGM comment")
            pos = nl + 1
        elif c.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace():
                end += 1
            fields.append(data[pos:end])
            pos = end
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as e:
        raise ExifError(f"{path}: bad PGM header field") from e
    if maxval > 255 or maxval <= 0:
        raise ExifError(f"{path}: unsupported PGM maxval {maxval}")
    pos += 1  # single whitespace after maxval
    need = width * height
    raster = data[pos:pos + need]
    if len(raster) != need:
        raise ExifError(f"{path}: raster has {len(raster)} bytes, expected {need}")
    px = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return GrayImage(px.astype(np.float64))


def save_pgm(img: GrayImage, path) -> None:
    u8 = img.to_u8()
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + u8.tobytes())


def load_capture_meta(pgm_path) -> CaptureMeta:
    """Resolve the metadata sidecar for an image path (.exif wins over .meta.json)."""
    base = Path(pgm_path)
    exif_path = base.with_suffix(".exif")
    json_path = base.with_suffix(".meta.json")
    if exif_path.exists():
        return parse_exif(exif_path.read_bytes())
    if json_path.exists():
        doc = json.loads(json_path.read_text())
        try:
            return CaptureMeta(
                exposure_time=float(doc["exposure_time_s"]),
                iso=int(doc["iso"]),
                width=int(doc["width"]),
                height=int(doc["height"]),
                byte_order="little",
            )
        except KeyError as e:
            raise ExifError(f"{json_path}: missing key {e}") from e
    raise ExifError(f"no metadata sidecar for {pgm_path} (.exif or .meta.json)")
