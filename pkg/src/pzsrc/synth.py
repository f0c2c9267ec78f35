"""Synthetic complex radar-like target chips swept over aspect angle.

A target is a flat shape (rectangle, ellipse or L) rendered with a one-pixel
anti-aliased edge.  Its amplitude varies with aspect angle through a smooth,
seeded, band-limited factor ``1 + sigma_a * eta(angle)``.  Optionally the rim
brightens near the cardinal aspects (0, 90, 180, 270 degrees) where a face is
broadside.  Complex Gaussian clutter is added per pixel.

Every random draw comes from a generator keyed on ``(seed, angle)``, so images
do not depend on rendering order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from pzsrc.errors import ConfigError, DataError
from pzsrc.imaging import ComplexImage, write_complex

SHAPES = ("rectangle", "ellipse", "lshape")
_HARMONICS = 6


@dataclass(frozen=True)
class TargetSpec:
    shape: str = "rectangle"
    width: float = 0.5
    height: float = 0.25
    base_reflectivity: complex = 1.0 + 0.0j
    aspect_irregularity: float = 0.0
    clutter_sigma: float = 0.0
    seed: int = 0
    glint: float = 0.0
    glint_width: float = 4.0  # degrees
    phase_gradient: float = 0.0  # radians across the target half-width

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigError(f"unknown shape {self.shape!r}; expected one of {SHAPES}")
        if not (0 < self.width < 1 and 0 < self.height < 1):
            raise ConfigError("target dimensions must be fractions of the side in (0, 1)")
        if self.aspect_irregularity < 0 or self.clutter_sigma < 0 or self.glint < 0:
            raise ConfigError("irregularity, clutter and glint strengths must be non-negative")
        if self.glint_width <= 0:
            raise ConfigError("glint width must be positive")
        object.__setattr__(self, "base_reflectivity", complex(self.base_reflectivity))

    def to_json(self) -> dict:
        d = asdict(self)
        d["base_reflectivity"] = [self.base_reflectivity.real, self.base_reflectivity.imag]
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TargetSpec":
        d = dict(d)
        if "base_reflectivity" in d:
            b = d["base_reflectivity"]
            d["base_reflectivity"] = complex(b[0], b[1]) if isinstance(b, (list, tuple)) else complex(b)
        return cls(**d)


def _angle_key(angle: float) -> int:
    return int(round(angle * 1_000_000)) % (2**63)


def _signed_distance(spec: TargetSpec, xp: np.ndarray, yp: np.ndarray) -> np.ndarray:
    # approximate signed distance to the outline, in fractions of the side
    hw, hh = spec.width / 2, spec.height / 2
    if spec.shape == "rectangle":
        return np.maximum(np.abs(xp) - hw, np.abs(yp) - hh)
    if spec.shape == "ellipse":
        rho = np.hypot(xp / hw, yp / hh)
        return (rho - 1.0) * min(hw, hh)
    # L: a bottom bar and a left bar, each one third of the extent thick
    tx, ty = spec.width / 3, spec.height / 3
    bottom = np.maximum(np.abs(xp) - hw, np.abs(yp + hh - ty / 2) - ty / 2)
    left = np.maximum(np.abs(xp + hw - tx / 2) - tx / 2, np.abs(yp) - hh)
    return np.minimum(bottom, left)


def _harmonic_coefficients(seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 0x5EED])
    h = np.arange(1, _HARMONICS + 1)
    c = (rng.standard_normal(_HARMONICS) + 1j * rng.standard_normal(_HARMONICS)) / h
    return c / np.sqrt(np.sum(np.abs(c) ** 2) / 2)  # unit RMS over a full turn


def irregularity(spec: TargetSpec, angle: float) -> float:
    """Smooth amplitude perturbation at ``angle``: seeded, band-limited, unit RMS."""
    c = _harmonic_coefficients(spec.seed)
    return float(np.real(c @ np.exp(1j * np.arange(1, _HARMONICS + 1) * np.deg2rad(angle))))


def glint_strength(angle: float, width: float) -> float:
    delta = (angle + 45.0) % 90.0 - 45.0
    return float(np.exp(-((delta / width) ** 2)))


def render_target(spec: TargetSpec, angle: float, side: int) -> ComplexImage:
    """Complex chip of the target rotated counter-clockwise by ``angle`` degrees."""
    if side < 32:
        raise ConfigError("side must be at least 32 pixels")
    c = (side - 1) / 2.0
    u, v = np.meshgrid(np.arange(side, dtype=float), np.arange(side, dtype=float), indexing="ij")
    X, Y = (v - c) / side, (c - u) / side
    quarter = angle / 90.0
    if quarter == round(quarter):
        cs, sn = [(1, 0), (0, 1), (-1, 0), (0, -1)][int(round(quarter)) % 4]
    else:
        t = np.deg2rad(angle)
        cs, sn = np.cos(t), np.sin(t)
    xp = cs * X + sn * Y
    yp = -sn * X + cs * Y

    dist = _signed_distance(spec, xp, yp) * side  # pixels
    coverage = np.clip(0.5 - dist, 0.0, 1.0)

    amplitude = np.ones_like(coverage)
    if spec.aspect_irregularity > 0:
        amplitude *= max(1.0 + spec.aspect_irregularity * irregularity(spec, angle), 0.0)
    if spec.glint > 0:
        rim = np.exp(-((dist + 1.0) / 1.5) ** 2)
        amplitude = amplitude + spec.glint * glint_strength(angle, spec.glint_width) * rim

    phase = np.angle(spec.base_reflectivity)
    if spec.phase_gradient:
        phase = phase + spec.phase_gradient * xp / (spec.width / 2)
    pixels = abs(spec.base_reflectivity) * amplitude * coverage * np.exp(1j * phase)
    if spec.clutter_sigma > 0:
        rng = np.random.default_rng([spec.seed, _angle_key(angle)])
        noise = rng.standard_normal((side, side, 2)) * (spec.clutter_sigma / np.sqrt(2))
        pixels = pixels + noise[..., 0] + 1j * noise[..., 1]
    return ComplexImage(pixels)


@dataclass(frozen=True)
class Item:
    class_id: str
    angle: float | None
    path: str


@dataclass
class DatasetManifest:
    side: int
    classes: list[tuple[str, TargetSpec | None]]
    train_angles: dict[str, list[float]] = field(default_factory=dict)
    test_angles: dict[str, list[float]] = field(default_factory=dict)
    train: list[Item] = field(default_factory=list)
    test: list[Item] = field(default_factory=list)
    root: Path = Path(".")

    @property
    def class_ids(self) -> list[str]:
        return [cid for cid, _ in self.classes]

    def spec(self, class_id: str) -> TargetSpec | None:
        return dict(self.classes)[class_id]

    def resolve(self, item: Item) -> Path:
        p = Path(item.path)
        return p if p.is_absolute() else self.root / p

    def split(self, name: str) -> list[Item]:
        if name not in ("train", "test"):
            raise ConfigError(f"unknown split {name!r}")
        return self.train if name == "train" else self.test

    def validate(self) -> None:
        for cid in self.class_ids:
            overlap = set(self.train_angles.get(cid, [])) & set(self.test_angles.get(cid, []))
            if overlap:
                raise ConfigError(f"class {cid!r}: train and test angles overlap at {sorted(overlap)[:3]}")

    def to_json(self) -> dict:
        return {
            "side": self.side,
            "classes": [{"id": cid, "spec": spec.to_json() if spec else None} for cid, spec in self.classes],
            "train": [{"class": i.class_id, "angle": i.angle, "path": i.path} for i in self.train],
            "test": [{"class": i.class_id, "angle": i.angle, "path": i.path} for i in self.test],
        }


def _items(entries) -> list[Item]:
    return [Item(str(e["class"]), None if e.get("angle") is None else float(e["angle"]), str(e["path"]))
            for e in entries]


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest {path} is not valid JSON: {exc}") from exc
    try:
        classes = [(str(c["id"]), TargetSpec.from_json(c["spec"]) if c.get("spec") else None)
                   for c in data["classes"]]
        train, test = _items(data.get("train", [])), _items(data.get("test", []))
        side = int(data["side"])
    except (KeyError, TypeError) as exc:
        raise DataError(f"manifest {path} is missing field {exc}") from exc
    manifest = DatasetManifest(side, classes, train=train, test=test, root=path.parent)
    for cid in manifest.class_ids:
        manifest.train_angles[cid] = [i.angle for i in train if i.class_id == cid and i.angle is not None]
        manifest.test_angles[cid] = [i.angle for i in test if i.class_id == cid and i.angle is not None]
    known = set(manifest.class_ids)
    for item in train + test:
        if item.class_id not in known:
            raise DataError(f"manifest {path}: item references unknown class {item.class_id!r}")
    return manifest


def image_name(class_id: str, split: str, angle: float) -> str:
    return f"images/{class_id}_{split}_{angle:08.3f}.pzc"


def generate_dataset(manifest: DatasetManifest, out_dir) -> Path:
    """Render every (class, split, angle) chip and write ``manifest.json``.

    Returns the manifest path.  Existing item lists on ``manifest`` are replaced
    by the rendered ones.
    """
    manifest.validate()
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        manifest.train, manifest.test = [], []
        for cid, spec in manifest.classes:
            if spec is None:
                raise ConfigError(f"class {cid!r} has no target spec to render")
            for split, angles in (("train", manifest.train_angles), ("test", manifest.test_angles)):
                for angle in angles.get(cid, []):
                    rel = image_name(cid, split, angle)
                    write_complex(out / rel, render_target(spec, angle, manifest.side))
                    manifest.split(split).append(Item(cid, float(angle), rel))
        manifest.root = out
        target = out / "manifest.json"
        target.write_text(json.dumps(manifest.to_json(), indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write dataset to {out}: {exc.strerror or exc}") from exc
    return target


def sweep_angles(count: int, offset: float = 0.0) -> list[float]:
    """``count`` evenly spaced aspect angles over a full turn starting at ``offset``."""
    step = 360.0 / count if count else 0.0
    return [round(offset + i * step, 6) for i in range(count)]


def default_targets(aspect_irregularity: float = 0.1, clutter_sigma: float = 0.05, seed: int = 0,
                    informative_phase: bool = False) -> list[tuple[str, TargetSpec]]:
    """Three distinct targets used by the bundled experiments."""
    shapes = [("rect", "rectangle", 0.50, 0.25, 0.0),
              ("ellipse", "ellipse", 0.46, 0.30, 1.5),
              ("lshape", "lshape", 0.42, 0.42, -1.5)]
    out = []
    for k, (cid, shape, w, h, gradient) in enumerate(shapes):
        out.append((cid, TargetSpec(shape, w, h, 1.0 + 0.0j, aspect_irregularity, clutter_sigma,
                                    seed=seed * 1000 + k,
                                    phase_gradient=gradient if informative_phase else 0.0)))
    return out


def make_manifest(targets: Sequence[tuple[str, TargetSpec]], side: int = 96, n_train: int = 120,
                  n_test: int = 60) -> DatasetManifest:
    """Train sweep from 0 degrees; test sweep offset by half a training step."""
    train = sweep_angles(n_train)
    half_step = 180.0 / n_train if n_train else 0.0
    test = [a for a in sweep_angles(n_test, half_step)]
    m = DatasetManifest(side, list(targets),
                        {cid: list(train) for cid, _ in targets},
                        {cid: list(test) for cid, _ in targets})
    m.validate()
    return m
