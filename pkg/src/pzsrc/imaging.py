"""Image containers, complex-signature fusion, scale/translation normalization.

File formats
------------
``PZI1``  real image: magic, side (u32 LE), float64 LE pixels row-major.
``PZC1``  complex image: magic, side (u32 LE), float32 LE (re, im) pairs row-major.
PGM       binary P5, 8- or 16-bit, for real images.
MSTAR     Phoenix-header chips (big-endian float32 magnitude block followed
          by the phase block), read-only.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from pzsrc.errors import ConfigError, DataError
from pzsrc.moments import build_disk_geometry, regular_moment

REAL_MAGIC = b"PZI1"
COMPLEX_MAGIC = b"PZC1"


def _square(pixels, dtype) -> np.ndarray:
    a = np.array(pixels, dtype=dtype)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DataError(f"image must be a square 2-D grid, got shape {a.shape}")
    if a.shape[0] < 2:
        raise DataError("image side must be at least 2")
    if not np.all(np.isfinite(a)):
        raise DataError("image contains non-finite values")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RealImage:
    pixels: np.ndarray

    def __post_init__(self):
        a = _square(self.pixels, float)
        if np.any(a < 0):
            raise DataError("intensity image has negative pixels")
        object.__setattr__(self, "pixels", a)

    @property
    def side(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class ComplexImage:
    pixels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pixels", _square(self.pixels, complex))

    @property
    def side(self) -> int:
        return self.pixels.shape[0]

    def magnitude(self) -> RealImage:
        return RealImage(np.abs(self.pixels))


@dataclass(frozen=True, eq=False)
class ImageVector:
    values: np.ndarray
    norm: float
    unit: bool = False


def fuse_complex(image: ComplexImage) -> RealImage:
    """Average of max-normalized magnitude and phase mapped to [0, 1].

    Phase ``atan2(im, re)`` lies in (-pi, pi], so a real positive pixel has a
    phase term of 0.5 and a phase of pi maps to 1.
    """
    mag = np.abs(image.pixels)
    peak = mag.max()
    if peak == 0:
        raise DataError("cannot fuse an all-zero complex image")
    phase = (np.angle(image.pixels) + np.pi) / (2 * np.pi)
    return RealImage(0.5 * (mag / peak + phase))


def centroid(image: RealImage) -> tuple[float, float]:
    mass = regular_moment(image, 0, 0)
    if mass <= 0:
        raise DataError("image has zero mass")
    return regular_moment(image, 1, 0) / mass, regular_moment(image, 0, 1) / mass


def normalize_scale_translation(image: RealImage, xi: float) -> RealImage:
    """Resample so the centroid sits at the grid centre and the mass becomes ~xi.

    Output pixel at disk coordinates (x, y) takes the bilinear value of the
    source at ``(x/v + m_x, y/v + m_y)`` with ``v = sqrt(xi / mu_00)``; lookups
    outside the source grid read as zero.
    """
    if not xi > 0:
        raise ConfigError("xi must be positive")
    mass = regular_moment(image, 0, 0)
    if mass <= 0:
        raise DataError("cannot normalize a zero-mass image")
    mx, my = centroid(image)
    upsilon = np.sqrt(xi / mass)
    geometry = build_disk_geometry(image.side)
    u, v = geometry.xy_to_pixel(geometry.x / upsilon + mx, geometry.y / upsilon + my)
    sampled = ndimage.map_coordinates(image.pixels, [u, v], order=1, mode="constant", cval=0.0)
    out = np.maximum(sampled, 0.0).reshape(image.side, image.side, order="F")
    return RealImage(out)


def vectorize(image: RealImage, unit: bool = False) -> ImageVector:
    """Column-major (column outer, row inner) vector of the pixels."""
    values = image.pixels.ravel(order="F").astype(float)
    norm = float(np.linalg.norm(values))
    if unit:
        if norm == 0:
            raise DataError("cannot unit-normalize a zero image")
        values = values / norm
    return ImageVector(values, norm, unit)


def unvectorize(vector, side: int) -> np.ndarray:
    values = np.asarray(getattr(vector, "values", vector), dtype=float)
    return values.reshape(side, side, order="F")


def rotate(pixels: np.ndarray, angle_deg: float) -> np.ndarray:
    """Counter-clockwise rotation about the grid centre, bilinear, zero fill.

    Multiples of 90 degrees are exact grid permutations.
    """
    pixels = np.asarray(pixels)
    quarter = angle_deg / 90.0
    if quarter == round(quarter):
        return np.rot90(pixels, int(round(quarter)) % 4).copy()
    side = pixels.shape[0]
    c = (side - 1) / 2.0
    t = np.deg2rad(angle_deg)
    u, v = np.meshgrid(np.arange(side, dtype=float), np.arange(side, dtype=float), indexing="ij")
    # output (x, y) = R(t) (xs, ys); invert with R(-t), y axis points up
    x, y = v - c, c - u
    xs = np.cos(t) * x + np.sin(t) * y
    ys = -np.sin(t) * x + np.cos(t) * y
    coords = [c - ys, xs + c]
    if np.iscomplexobj(pixels):
        re = ndimage.map_coordinates(pixels.real, coords, order=1, mode="constant")
        im = ndimage.map_coordinates(pixels.imag, coords, order=1, mode="constant")
        return re + 1j * im
    return ndimage.map_coordinates(pixels, coords, order=1, mode="constant")


# -- file formats ---------------------------------------------------------

def write_real(path, image: RealImage) -> None:
    body = np.ascontiguousarray(image.pixels, dtype="<f8").tobytes()
    Path(path).write_bytes(REAL_MAGIC + struct.pack("<I", image.side) + body)


def read_real(path) -> RealImage:
    data = _read(path)
    if data[:4] != REAL_MAGIC:
        raise DataError(f"{path}: not a PZI1 image")
    (side,) = struct.unpack_from("<I", data, 4)
    if len(data) != 8 + 8 * side * side:
        raise DataError(f"{path}: truncated PZI1 payload")
    return RealImage(np.frombuffer(data, dtype="<f8", offset=8).reshape(side, side))


def write_complex(path, image: ComplexImage) -> None:
    pairs = np.empty((image.side, image.side, 2), dtype="<f4")
    pairs[..., 0] = image.pixels.real
    pairs[..., 1] = image.pixels.imag
    Path(path).write_bytes(COMPLEX_MAGIC + struct.pack("<I", image.side) + pairs.tobytes())


def read_complex(path) -> ComplexImage:
    data = _read(path)
    if data[:4] != COMPLEX_MAGIC:
        raise DataError(f"{path}: not a PZC1 image")
    (side,) = struct.unpack_from("<I", data, 4)
    if len(data) != 8 + 8 * side * side:
        raise DataError(f"{path}: truncated PZC1 payload")
    pairs = np.frombuffer(data, dtype="<f4", offset=8).reshape(side, side, 2).astype(float)
    return ComplexImage(pairs[..., 0] + 1j * pairs[..., 1])


def write_pgm(path, image: RealImage, maxval: int = 255, scale: bool = True) -> None:
    """Write a binary PGM; with ``scale`` the image maximum maps to ``maxval``."""
    if not 0 < maxval < 65536:
        raise ValueError("maxval must be in 1..65535")
    px = image.pixels
    if scale and px.max() > 0:
        px = px * (maxval / px.max())
    ints = np.clip(np.rint(px), 0, maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{image.side} {image.side}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + ints.astype(dtype).tobytes())


_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n)*(\S+)")


def read_pgm(path) -> RealImage:
    data = _read(path)
    pos = 0
    tokens = []
    for _ in range(4):
        match = _PGM_TOKEN.match(data, pos)
        if match is None:
            raise DataError(f"{path}: malformed PGM header")
        tokens.append(match.group(1))
        pos = match.end()
    if tokens[0] != b"P5":
        raise DataError(f"{path}: only binary (P5) PGM is supported")
    width, height, maxval = (int(t) for t in tokens[1:])
    pos += 1  # single whitespace byte before the raster
    dtype = ">u2" if maxval > 255 else "u1"
    count = width * height
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    return RealImage(raster.reshape(height, width).astype(float))


def read_mstar(path, side: int | None = None) -> ComplexImage:
    """Read an MSTAR chip, centre-cropped to ``side`` pixels (default: the
    largest square that fits)."""
    data = _read(path)
    head = data[:4096].decode("latin-1", errors="replace")
    fields = {}
    for key in ("PhoenixHeaderLength", "native_header_length", "NumberOfRows", "NumberOfColumns"):
        match = re.search(key + r"\s*=\s*(\d+)", head)
        if match is None:
            raise DataError(f"{path}: MSTAR header lacks {key}")
        fields[key] = int(match.group(1))
    rows, cols = fields["NumberOfRows"], fields["NumberOfColumns"]
    offset = fields["PhoenixHeaderLength"] + fields["native_header_length"]
    if len(data) < offset + 8 * rows * cols:
        raise DataError(f"{path}: truncated MSTAR payload")
    block = np.frombuffer(data, dtype=">f4", count=2 * rows * cols, offset=offset).astype(float)
    mag = block[: rows * cols].reshape(rows, cols)
    phase = block[rows * cols:].reshape(rows, cols)
    pixels = mag * np.exp(1j * phase)
    if side is None:
        side = min(rows, cols)
    if side != rows or side != cols:
        if side > min(rows, cols):
            raise DataError(f"{path}: chip {rows}x{cols} smaller than requested side {side}")
        r0, c0 = (rows - side) // 2, (cols - side) // 2
        pixels = pixels[r0:r0 + side, c0:c0 + side]
    return ComplexImage(pixels)


def load_complex_image(path, side: int | None = None) -> ComplexImage:
    """Dispatch on content: PZC1 raw files or MSTAR Phoenix chips."""
    data = _read(path)
    if data[:4] == COMPLEX_MAGIC:
        image = read_complex(path)
        if side is not None and image.side != side:
            raise DataError(f"{path}: side {image.side} does not match expected {side}")
        return image
    if data[:4] == REAL_MAGIC:
        return ComplexImage(read_real(path).pixels)
    if b"PhoenixHeader" in data[:256]:
        return read_mstar(path, side)
    raise DataError(f"{path}: unrecognized image format")


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
