"""Pseudo-Zernike polynomials, the sampled basis matrix and image moments.

Pixels are mapped onto the unit disk with the circumscribed convention: the
whole square image sits inside the disk, pixel centre ``(u, v)`` (row, col)
lands at ``x = (2v - side + 1) / (side*sqrt(2))``,
``y = (side - 1 - 2u) / (side*sqrt(2))``.  All per-pixel arrays are stored in
column-major (column outer, row inner) order to match image vectorization.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from pzsrc.errors import ConfigError, DataError

MAX_DEGREE = 25
BASIS_MAGIC = b"PZB1"


@dataclass(frozen=True)
class PZIndex:
    n: int
    m: int

    def __post_init__(self):
        if self.n < 0 or abs(self.m) > self.n:
            raise ValueError(f"invalid pseudo-Zernike index (n={self.n}, m={self.m})")


def pz_index_list(n_max: int) -> list[PZIndex]:
    """Indices up to degree ``n_max``: n ascending, m from -n to +n."""
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    return [PZIndex(n, m) for n in range(n_max + 1) for m in range(-n, n + 1)]


def _check_nm(n: int, m: int) -> None:
    if n < 0 or abs(m) > n:
        raise ValueError(f"|m| must not exceed n (got n={n}, m={m})")


@lru_cache(maxsize=None)
def radial_coefficients(n: int, m: int) -> tuple[int, ...]:
    """Exact integer coefficients of the radial polynomial.

    Entry ``k`` multiplies ``r**(n - k)`` for ``k = 0 .. n-|m|``.  Each entry is
    a multinomial coefficient, so integer arithmetic is exact at any degree.
    """
    _check_nm(n, m)
    m = abs(m)
    f = math.factorial
    return tuple(
        (-1) ** k * f(2 * n + 1 - k) // (f(k) * f(n + m + 1 - k) * f(n - m - k))
        for k in range(n - m + 1)
    )


def _jacobi_a0(k: int, a: int, x: np.ndarray) -> np.ndarray:
    # three-term recurrence for P_k^{(a, 0)}(x)
    p_prev = np.ones_like(x)
    if k == 0:
        return p_prev
    p = (a + 1) + (a + 2) * (x - 1) / 2
    for j in range(2, k + 1):
        s = 2 * j + a
        c = 2 * j * (j + a) * (s - 2)
        p_prev, p = p, ((s - 1) * (s * (s - 2) * x + a * a) * p
                        - 2 * (j + a - 1) * (j - 1) * s * p_prev) / c
    return p


def _radial(n: int, m: int, r: np.ndarray) -> np.ndarray:
    # rho_n^m(r) = (-1)^(n-m) r^m P_{n-m}^{(2m+1, 0)}(1 - 2r); stable where the
    # power-series form loses all digits (n >~ 18) to cancellation.
    m = abs(m)
    sign = -1.0 if (n - m) % 2 else 1.0
    return sign * r**m * _jacobi_a0(n - m, 2 * m + 1, 1.0 - 2.0 * r)


def radial_poly(n: int, m: int, r):
    """Radial polynomial rho_n^m(r); depends on m only through |m|."""
    _check_nm(n, m)
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or np.any(r_arr > 1) or not np.all(np.isfinite(r_arr)):
        raise ValueError("r must lie in [0, 1]")
    out = _radial(n, m, r_arr)
    return float(out) if out.ndim == 0 else out


def pz_poly(n: int, m: int, r, theta):
    """Pseudo-Zernike polynomial rho_n^m(r) * exp(j m theta)."""
    rho = radial_poly(n, m, r)
    out = rho * np.exp(1j * m * np.asarray(theta, dtype=float))
    return complex(out) if np.ndim(out) == 0 else out


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DiskGeometry:
    """Per-pixel Cartesian and polar coordinates, column-major pixel order."""

    side: int
    x: np.ndarray
    y: np.ndarray
    r: np.ndarray
    theta: np.ndarray

    @property
    def n_pixels(self) -> int:
        return self.side * self.side

    @property
    def pixel_area(self) -> float:
        return 2.0 / self.side**2

    @property
    def coords(self) -> np.ndarray:
        """``(N, 2)`` array of ``(r, theta)`` pairs."""
        return np.stack([self.r, self.theta], axis=1)

    def pixel_to_xy(self, u, v):
        s = self.side
        return (2 * np.asarray(v) - s + 1) / (s * math.sqrt(2)), (s - 1 - 2 * np.asarray(u)) / (s * math.sqrt(2))

    def xy_to_pixel(self, x, y):
        """Inverse of :meth:`pixel_to_xy` (fractional row, col)."""
        s = self.side
        v = (np.asarray(x) * s * math.sqrt(2) + s - 1) / 2
        u = (s - 1 - np.asarray(y) * s * math.sqrt(2)) / 2
        return u, v


@lru_cache(maxsize=32)
def build_disk_geometry(side: int) -> DiskGeometry:
    if side < 2:
        raise ValueError("side must be at least 2")
    u, v = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    u = u.ravel(order="F")
    v = v.ravel(order="F")
    scale = side * math.sqrt(2)
    x = (2 * v - side + 1) / scale
    y = (side - 1 - 2 * u) / scale
    r = np.hypot(x, y)
    theta = np.arctan2(y, x)
    # atan2 returns -pi on the negative x axis only for y == -0.0; keep (-pi, pi]
    theta[theta == -np.pi] = np.pi
    return DiskGeometry(side, _frozen(x), _frozen(y), _frozen(r), _frozen(theta))


@dataclass(frozen=True)
class PZBasis:
    """P x N matrix whose row i holds gamma_n * z_n^m sampled at every pixel."""

    n_max: int
    side: int
    indices: tuple[PZIndex, ...]
    values: np.ndarray
    geometry: DiskGeometry = field(repr=False)

    @property
    def P(self) -> int:
        return len(self.indices)

    @property
    def N(self) -> int:
        return self.side * self.side

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _check_degree(n_max: int) -> None:
    if n_max < 0:
        raise ConfigError("n_max must be non-negative")
    if n_max > MAX_DEGREE:
        raise ConfigError(f"n_max={n_max} exceeds the supported degree cap of {MAX_DEGREE}")


def _sample_polynomials(n_max: int, geometry: DiskGeometry) -> np.ndarray:
    indices = pz_index_list(n_max)
    out = np.empty((len(indices), geometry.n_pixels), dtype=complex)
    phases = {}
    row = 0
    for n in range(n_max + 1):
        radial = [_radial(n, m, geometry.r) for m in range(n + 1)]
        for m in range(-n, n + 1):
            if m not in phases:
                phases[m] = np.exp(1j * m * geometry.theta)
            out[row] = radial[abs(m)] * phases[m]
            row += 1
    return out


def build_basis(n_max: int, geometry: DiskGeometry) -> PZBasis:
    _check_degree(n_max)
    raw = _sample_polynomials(n_max, geometry)
    n_of_row = np.array([idx.n for idx in pz_index_list(n_max)])
    gamma = (n_of_row + 1) / (np.pi * geometry.n_pixels)
    values = raw * gamma[:, None]
    return PZBasis(n_max, geometry.side, tuple(pz_index_list(n_max)), _frozen(values), geometry)


def gram_matrix(n_max: int, geometry: DiskGeometry) -> np.ndarray:
    """Discrete Gram matrix of the unweighted polynomials.

    Inner products are scaled by the pixel area and divided by the continuous
    norm pi/(n+1), so an ideal quadrature returns the identity.
    """
    raw = _sample_polynomials(n_max, geometry)
    norms = np.array([np.pi / (idx.n + 1) for idx in pz_index_list(n_max)])
    gram = (raw.conj() @ raw.T) * geometry.pixel_area
    scale = np.sqrt(norms)
    return gram / np.outer(scale, scale)


def regular_moment(image, p: int, q: int) -> float:
    """Discrete geometric moment sum_j x_j^p y_j^q s_j over the disk coordinates."""
    if p < 0 or q < 0:
        raise ValueError("moment orders must be non-negative")
    geometry = build_disk_geometry(image.side)
    s = np.asarray(image.pixels, dtype=float).ravel(order="F")
    return float(np.sum(geometry.x**p * geometry.y**q * s))


@dataclass(frozen=True)
class MomentVector:
    values: np.ndarray
    indices: tuple[PZIndex, ...]

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.values)


def project_moments(basis: PZBasis, image_vector) -> MomentVector:
    """Complex moments a_n^m = sum_j gamma_n conj(z_n^m(r_j, theta_j)) s_j."""
    s = np.asarray(getattr(image_vector, "values", image_vector), dtype=float)
    if s.ndim != 1 or s.shape[0] != basis.N:
        raise DataError(f"image vector length {s.shape} does not match N={basis.N}")
    return MomentVector(basis.values.conj() @ s, basis.indices)


def project_many(basis: PZBasis, vectors: np.ndarray) -> np.ndarray:
    """Moment magnitudes for the columns of an ``N x J`` matrix."""
    vectors = np.asarray(vectors, dtype=float)
    if vectors.shape[0] != basis.N:
        raise DataError(f"image vectors have {vectors.shape[0]} rows, expected N={basis.N}")
    return np.abs(basis.values.conj() @ vectors)


def save_basis(path, basis: PZBasis) -> None:
    header = BASIS_MAGIC + struct.pack("<4I", basis.n_max, basis.side, basis.P, basis.N)
    body = np.ascontiguousarray(basis.values, dtype="<c16").tobytes(order="C")
    Path(path).write_bytes(header + body)


def load_basis(path) -> PZBasis:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if data[:4] != BASIS_MAGIC:
        raise DataError(f"{path}: not a PZB1 basis file")
    n_max, side, P, N = struct.unpack_from("<4I", data, 4)
    if P != (n_max + 1) ** 2 or N != side * side:
        raise DataError(f"{path}: inconsistent header (n_max={n_max}, side={side}, P={P}, N={N})")
    expected = 20 + 16 * P * N
    if len(data) != expected:
        raise DataError(f"{path}: truncated basis payload ({len(data)} of {expected} bytes)")
    values = np.frombuffer(data, dtype="<c16", offset=20).reshape(P, N).astype(complex)
    geometry = build_disk_geometry(side)
    return PZBasis(n_max, side, tuple(pz_index_list(n_max)), _frozen(values), geometry)
