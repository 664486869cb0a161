"""On-disk formats: the cipher package and 8-bit PGM images.

Cipher package layout (little-endian, 33-byte header followed by the
``M`` diffused bytes)::

    magic       4s   b"CSQD"
    version     u8   1
    height      u16
    width       u16
    block_size  u16
    m           u32
    transform   u8   0 = DCT, 1 = WHT
    randomizer  u8   0 = permutation, 1 = Bernoulli sign
    offset      f64
    scale       f64
    payload     M bytes
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError
from .srm import RandomizerKind, SensingConfig, TransformKind

__all__ = [
    "MAGIC",
    "VERSION",
    "HEADER",
    "PIXEL_SHIFT",
    "CipherPackage",
    "read_package",
    "write_package",
    "read_pgm",
    "write_pgm",
    "parse_pgm",
    "format_pgm",
]

MAGIC = b"CSQD"
VERSION = 1
HEADER = struct.Struct("<4sBHHHIBBdd")

# Pixels are level-shifted by this constant before sensing and shifted back
# after reconstruction; keeps block-DC coefficients inside the quantizer range.
PIXEL_SHIFT = 128.0


@dataclass(frozen=True)
class CipherPackage:
    height: int
    width: int
    block_size: int
    m: int
    transform: TransformKind
    randomizer: RandomizerKind
    offset: float
    scale: float
    payload: bytes

    def __post_init__(self):
        object.__setattr__(self, "payload", bytes(self.payload))
        try:
            object.__setattr__(self, "transform", TransformKind(self.transform))
            object.__setattr__(self, "randomizer", RandomizerKind(self.randomizer))
        except ValueError as exc:
            raise FormatError(str(exc)) from None
        for name, limit in (("height", 0xFFFF), ("width", 0xFFFF), ("block_size", 0xFFFF),
                            ("m", 0xFFFFFFFF)):
            value = getattr(self, name)
            if not 1 <= value <= limit:
                raise FormatError(f"{name}={value} outside [1, {limit}]")
        n = self.height * self.width
        if self.m > n:
            raise FormatError(f"M={self.m} exceeds N={n}")
        if n % self.block_size:
            raise FormatError(f"block size {self.block_size} does not divide N={n}")
        if self.scale == 0 or not math.isfinite(self.scale) or not math.isfinite(self.offset):
            raise FormatError("normalization offset/scale must be finite with scale != 0")
        if len(self.payload) != self.m:
            raise FormatError(f"payload has {len(self.payload)} bytes, header says M={self.m}")

    @property
    def config(self) -> SensingConfig:
        try:
            return SensingConfig(self.height, self.width, self.block_size, self.m,
                                 self.transform, self.randomizer)
        except ValueError as exc:
            raise FormatError(f"inconsistent header: {exc}") from None

    @property
    def q_star(self) -> np.ndarray:
        return np.frombuffer(self.payload, dtype=np.uint8)

    def to_bytes(self) -> bytes:
        head = HEADER.pack(MAGIC, VERSION, self.height, self.width, self.block_size, self.m,
                           int(self.transform), int(self.randomizer), self.offset, self.scale)
        return head + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "CipherPackage":
        if len(data) < HEADER.size:
            raise FormatError(f"package truncated: {len(data)} bytes, header needs {HEADER.size}")
        magic, version, h, w, b, m, t, r, offset, scale = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"unsupported package version {version}")
        payload = data[HEADER.size:]
        if len(payload) != m:
            raise FormatError(f"payload is {len(payload)} bytes, header says M={m}")
        pkg = cls(h, w, b, m, t, r, offset, scale, payload)
        pkg.config  # validates transform/block compatibility
        return pkg


def write_package(path, pkg: CipherPackage):
    Path(path).write_bytes(pkg.to_bytes())


def read_package(path) -> CipherPackage:
    return CipherPackage.from_bytes(Path(path).read_bytes())


_PGM_TOKEN = re.compile(rb"(?:\s+|#[^\n]*\n?)*([^\s#]+)")


def parse_pgm(data: bytes) -> np.ndarray:
    """Decode a binary (P5) or ASCII (P2) 8-bit PGM into an ``H x W`` uint8 array."""
    pos = 0
    fields = []
    for _ in range(4):
        mo = _PGM_TOKEN.match(data, pos)
        if mo is None:
            raise FormatError("truncated PGM header")
        fields.append(mo.group(1))
        pos = mo.end()
    magic = fields[0]
    if magic not in (b"P5", b"P2"):
        raise FormatError(f"not a PGM file (magic {magic[:2]!r})")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise FormatError("non-numeric PGM header field") from None
    if width < 1 or height < 1:
        raise FormatError("PGM dimensions must be positive")
    if not 1 <= maxval <= 255:
        raise FormatError(f"only 8-bit PGM is supported (maxval={maxval})")
    count = width * height
    if magic == b"P5":
        # exactly one whitespace byte separates the header from the raster
        pos += 1
        raster = data[pos:pos + count]
        if len(raster) != count:
            raise FormatError(f"PGM raster truncated: {len(raster)} of {count} bytes")
        pixels = np.frombuffer(raster, dtype=np.uint8)
    else:
        try:
            values = [int(tok) for tok in re.sub(rb"#[^\n]*", b" ", data[pos:]).split()]
        except ValueError:
            raise FormatError("non-numeric PGM raster") from None
        if len(values) < count:
            raise FormatError(f"PGM raster truncated: {len(values)} of {count} values")
        pixels = np.array(values[:count])
    if pixels.max(initial=0) > maxval:
        raise FormatError("PGM sample exceeds maxval")
    return pixels.astype(np.uint8).reshape(height, width)


def format_pgm(image) -> bytes:
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM images must be two-dimensional")
    if img.dtype != np.uint8:
        img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    h, w = img.shape
    return b"P5\n%d %d\n255\n" % (w, h) + img.tobytes()


def read_pgm(path) -> np.ndarray:
    return parse_pgm(Path(path).read_bytes())


def write_pgm(path, image):
    Path(path).write_bytes(format_pgm(image))
