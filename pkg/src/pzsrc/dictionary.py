"""Per-class moment sub-dictionaries, auxiliary atoms and the assembled dictionary.

Dictionary file (``PZD1``)::

    magic "PZD1" | K u32 | K x (id: u32 length + UTF-8, J_k u32, L_k u32)
    | P u32 | Q u32 | P*Q float64 LE, column-major | scheme tag u8 | params

Scheme tags: 0 none, 1 fix, 2 mov (W u32), 3 corr (upsilon f64),
4 circular mov (W u32).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from pzsrc.errors import ConfigError, DataError
from pzsrc.moments import PZBasis, project_many

DICT_MAGIC = b"PZD1"
SCHEMES = ("none", "fix", "mov", "corr")


def _unit_columns(a: np.ndarray, what: str = "column") -> np.ndarray:
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise DataError(f"degenerate {what}: zero or non-finite moment vector")
    return a / norms


@dataclass(frozen=True, eq=False)
class ClassSubdict:
    class_id: str
    atoms: np.ndarray
    angles: np.ndarray | None = None

    @property
    def J(self) -> int:
        return self.atoms.shape[1]

    @property
    def P(self) -> int:
        return self.atoms.shape[0]


def build_subdict(basis: PZBasis, measurements, class_id, angles=None) -> ClassSubdict:
    """Unit-norm moment magnitudes of each training measurement, one per column.

    ``measurements`` is a sequence of image vectors or an ``N x J`` array.
    """
    if isinstance(measurements, np.ndarray):
        g = measurements
    else:
        g = np.column_stack([np.asarray(getattr(m, "values", m), dtype=float) for m in measurements]) \
            if len(measurements) else np.empty((basis.N, 0))
    if g.ndim != 2 or g.shape[1] < 1:
        raise DataError(f"class {class_id!r}: no training measurements")
    atoms = _unit_columns(project_many(basis, g), f"measurement in class {class_id!r}")
    if angles is not None:
        angles = np.asarray(angles, dtype=float)
        if angles.shape != (atoms.shape[1],):
            raise DataError(f"class {class_id!r}: {angles.size} angles for {atoms.shape[1]} atoms")
    return ClassSubdict(str(class_id), atoms, angles)


def aux_fix(subdict: ClassSubdict) -> np.ndarray:
    """Single auxiliary atom: normalized sum of all class atoms (P x 1)."""
    return _unit_columns(subdict.atoms.sum(axis=1, keepdims=True), "auxiliary atom")


def aux_mov(subdict: ClassSubdict, window: int, circular: bool = False,
            require_angles: bool = False) -> np.ndarray:
    """Moving-window sums over atoms in aspect-angle order (P x J).

    The window spans ``[-floor(W/2), +floor(W/2)]`` around each atom.  Outside
    the class the atoms count as zero vectors unless ``circular`` is set, in
    which case the window wraps around the angle sequence.
    """
    if window < 1:
        raise ConfigError("moving-average window must be at least 1")
    if subdict.angles is None and require_angles:
        raise DataError(f"class {subdict.class_id!r}: aspect angles required for the moving average")
    J = subdict.J
    order = np.arange(J) if subdict.angles is None else np.argsort(subdict.angles, kind="stable")
    sorted_atoms = subdict.atoms[:, order]
    half = window // 2
    if circular:
        offsets = np.arange(-half, half + 1)
        idx = (np.arange(J)[:, None] + offsets[None, :]) % J
        weights = np.zeros((J, J))
        weights[idx, np.broadcast_to(np.arange(J)[:, None], idx.shape)] = 1.0
    else:
        pos = np.arange(J)
        weights = (np.abs(pos[:, None] - pos[None, :]) <= half).astype(float)
    summed = sorted_atoms @ weights
    out = np.empty_like(summed)
    out[:, order] = summed
    return _unit_columns(out, "auxiliary atom")


def aux_corr(subdict: ClassSubdict, upsilon: float) -> np.ndarray:
    """Per-atom sums over the atoms whose inner product with it exceeds ``upsilon``."""
    if not 0 < upsilon < 1:
        raise ConfigError("correlation threshold must lie in (0, 1)")
    corr = subdict.atoms.T @ subdict.atoms
    mask = corr > upsilon
    np.fill_diagonal(mask, True)
    return _unit_columns(subdict.atoms @ mask.astype(float), "auxiliary atom")


@dataclass(frozen=True)
class AuxScheme:
    kind: str = "none"
    window: int | None = None
    upsilon: float | None = None
    circular: bool = False

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ConfigError(f"unknown auxiliary scheme {self.kind!r}")
        if self.kind == "mov" and (self.window is None or self.window < 1):
            raise ConfigError("moving-average scheme needs a window >= 1")
        if self.kind == "corr" and (self.upsilon is None or not 0 < self.upsilon < 1):
            raise ConfigError("correlation scheme needs upsilon in (0, 1)")

    def auxiliary(self, subdict: ClassSubdict) -> np.ndarray:
        if self.kind == "fix":
            return aux_fix(subdict)
        if self.kind == "mov":
            return aux_mov(subdict, self.window, circular=self.circular)
        if self.kind == "corr":
            return aux_corr(subdict, self.upsilon)
        return np.empty((subdict.P, 0))

    def describe(self) -> str:
        if self.kind == "mov":
            return f"mov(W={self.window}{', circular' if self.circular else ''})"
        if self.kind == "corr":
            return f"corr(upsilon={self.upsilon})"
        return self.kind


@dataclass(frozen=True)
class ClassBlock:
    class_id: str
    start: int
    J: int
    L: int

    @property
    def primary(self) -> range:
        return range(self.start, self.start + self.J)

    @property
    def auxiliary(self) -> range:
        return range(self.start + self.J, self.start + self.J + self.L)

    @property
    def columns(self) -> slice:
        return slice(self.start, self.start + self.J + self.L)


@dataclass(frozen=True, eq=False)
class Dictionary:
    blocks: tuple[ClassBlock, ...]
    matrix: np.ndarray
    scheme: AuxScheme = AuxScheme()

    @property
    def P(self) -> int:
        return self.matrix.shape[0]

    @property
    def Q(self) -> int:
        return self.matrix.shape[1]

    @property
    def class_ids(self) -> list[str]:
        return [b.class_id for b in self.blocks]

    @cached_property
    def spectral_norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2)) if self.matrix.size else 0.0

    def block(self, class_id) -> ClassBlock:
        for b in self.blocks:
            if b.class_id == str(class_id):
                return b
        raise KeyError(class_id)


def assemble(subdicts: Sequence[ClassSubdict], scheme: AuxScheme = AuxScheme()) -> Dictionary:
    if not subdicts:
        raise DataError("no class sub-dictionaries to assemble")
    P = subdicts[0].P
    if any(s.P != P for s in subdicts):
        raise ConfigError("sub-dictionaries disagree on the number of moments P")
    ids = [s.class_id for s in subdicts]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate class identifiers")
    blocks, columns, start = [], [], 0
    for sub in subdicts:
        aux = scheme.auxiliary(sub)
        blocks.append(ClassBlock(sub.class_id, start, sub.J, aux.shape[1]))
        columns += [sub.atoms, aux]
        start += sub.J + aux.shape[1]
    matrix = np.hstack(columns)
    matrix.setflags(write=False)
    return Dictionary(tuple(blocks), matrix, scheme)


def save_dictionary(path, dictionary: Dictionary) -> None:
    out = bytearray(DICT_MAGIC)
    out += struct.pack("<I", len(dictionary.blocks))
    for b in dictionary.blocks:
        name = b.class_id.encode("utf-8")
        out += struct.pack("<I", len(name)) + name + struct.pack("<II", b.J, b.L)
    out += struct.pack("<II", dictionary.P, dictionary.Q)
    out += np.asarray(dictionary.matrix, dtype="<f8").tobytes(order="F")
    s = dictionary.scheme
    if s.kind == "mov":
        out += struct.pack("<BI", 4 if s.circular else 2, s.window)
    elif s.kind == "corr":
        out += struct.pack("<Bd", 3, s.upsilon)
    else:
        out += struct.pack("<B", 1 if s.kind == "fix" else 0)
    Path(path).write_bytes(bytes(out))


def load_dictionary(path) -> Dictionary:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if data[:4] != DICT_MAGIC:
        raise DataError(f"{path}: not a PZD1 dictionary file")
    try:
        pos = 4
        (K,) = struct.unpack_from("<I", data, pos)
        pos += 4
        blocks, start = [], 0
        for _ in range(K):
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            class_id = data[pos:pos + n].decode("utf-8")
            pos += n
            J, L = struct.unpack_from("<II", data, pos)
            pos += 8
            blocks.append(ClassBlock(class_id, start, J, L))
            start += J + L
        P, Q = struct.unpack_from("<II", data, pos)
        pos += 8
        if Q != start:
            raise DataError(f"{path}: class blocks cover {start} columns but Q={Q}")
        matrix = np.frombuffer(data, dtype="<f8", count=P * Q, offset=pos).reshape(P, Q, order="F").astype(float)
        pos += 8 * P * Q
        (tag,) = struct.unpack_from("<B", data, pos)
        pos += 1
        if tag in (2, 4):
            (w,) = struct.unpack_from("<I", data, pos)
            scheme = AuxScheme("mov", window=w, circular=tag == 4)
        elif tag == 3:
            (u,) = struct.unpack_from("<d", data, pos)
            scheme = AuxScheme("corr", upsilon=u)
        elif tag in (0, 1):
            scheme = AuxScheme("fix" if tag == 1 else "none")
        else:
            raise DataError(f"{path}: unknown auxiliary scheme tag {tag}")
    except (struct.error, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: malformed dictionary file ({exc})") from exc
    matrix.setflags(write=False)
    return Dictionary(tuple(blocks), matrix, scheme)
