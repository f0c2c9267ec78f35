"""End-to-end feature extraction, dictionary building and evaluation.

Preprocessing order for every measurement: fuse magnitude and phase (or take
the magnitude when fusion is off), normalize scale and translation, vectorize
to unit norm, project onto the moment basis, take magnitudes, unit-normalize.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from pzsrc.classify import ClassDecision, EvalReport, classify, evaluate
from pzsrc.dictionary import AuxScheme, ClassSubdict, Dictionary, assemble
from pzsrc.errors import ConfigError, DataError
from pzsrc.imaging import (ComplexImage, RealImage, fuse_complex, load_complex_image,
                           normalize_scale_translation, vectorize)
from pzsrc.moments import MAX_DEGREE, PZBasis, build_basis, build_disk_geometry, regular_moment
from pzsrc.sparse import IhtConfig, iht_encode_batch
from pzsrc.synth import DatasetManifest, Item

log = logging.getLogger(__name__)

PIPELINE_ORDER = "fuse>normalize>vectorize>project>abs>unit"
WINDOW_RULE = "symmetric-floor"
XI_REFERENCE_FRACTION = 0.25


@dataclass
class RunConfig:
    command: str = ""
    n_max: int = 10
    side: int = 96
    fusion: bool = True
    xi: float | None = None
    aux: str = "none"
    window: int | None = None
    upsilon: float | None = None
    circular: bool = False
    gamma: int = 5
    max_iters: int = 300
    residual_tol: float = 1e-6
    step: str = "spectral"
    seed: int = 0
    workers: int = 1
    figures: bool = True
    manifest: str | None = None
    dictionary: str | None = None
    out: str | None = None
    split: str = "test"
    sweep_param: str | None = None
    sweep_values: list[float] = field(default_factory=list)
    class_id: str | None = None
    references: list[int] = field(default_factory=list)
    synth_spec: str | None = None
    n_train: int = 120
    n_test: int = 60
    aspect_irregularity: float = 0.1
    clutter_sigma: float = 0.05
    informative_phase: bool = False
    pipeline_order: str = PIPELINE_ORDER
    window_rule: str = WINDOW_RULE

    def validate(self) -> "RunConfig":
        if not 0 <= self.n_max <= MAX_DEGREE:
            raise ConfigError(f"n_max={self.n_max} exceeds the supported degree cap of {MAX_DEGREE}"
                              if self.n_max > MAX_DEGREE else "n_max must be non-negative")
        if self.side < 2:
            raise ConfigError("side must be at least 2")
        if self.xi is not None and not self.xi > 0:
            raise ConfigError("xi must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.split not in ("train", "test"):
            raise ConfigError(f"unknown split {self.split!r}")
        if self.n_train < 1 or self.n_test < 0:
            raise ConfigError("synthetic sweeps need n_train >= 1 and n_test >= 0")
        self.aux_scheme()
        self.iht_config()
        return self

    def aux_scheme(self) -> AuxScheme:
        return AuxScheme(self.aux, self.window if self.aux == "mov" else None,
                         self.upsilon if self.aux == "corr" else None, self.circular and self.aux == "mov")

    def iht_config(self) -> IhtConfig:
        return IhtConfig(self.gamma, self.max_iters, self.residual_tol, self.step)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


class FeaturePipeline:
    """Turns complex chips into unit image vectors and unit moment-magnitude features."""

    def __init__(self, basis: PZBasis, fusion: bool = True, xi: float | None = None):
        self.basis = basis
        self.fusion = fusion
        self.xi = xi

    def real_image(self, image: ComplexImage) -> RealImage:
        return fuse_complex(image) if self.fusion else image.magnitude()

    def calibrate(self, reference: ComplexImage) -> float:
        """Set xi to a fixed fraction of the reference image's total intensity."""
        self.xi = XI_REFERENCE_FRACTION * regular_moment(self.real_image(reference), 0, 0)
        if not self.xi > 0:
            raise DataError("reference image has zero mass; cannot derive xi")
        return self.xi

    def image_vector(self, image: ComplexImage) -> np.ndarray:
        if self.xi is None:
            raise ConfigError("xi is not set; call calibrate() or pass it explicitly")
        if image.side != self.basis.side:
            raise DataError(f"image side {image.side} does not match basis side {self.basis.side}")
        normalized = normalize_scale_translation(self.real_image(image), self.xi)
        return vectorize(normalized, unit=True).values

    def features(self, vectors: np.ndarray) -> np.ndarray:
        mags = np.abs(self.basis.values.conj() @ vectors)
        norms = np.linalg.norm(mags, axis=0)
        if np.any(norms == 0):
            raise DataError("degenerate measurement: all moments vanish")
        return mags / norms


@dataclass
class SplitData:
    items: list[Item]
    vectors: np.ndarray  # N x J unit image vectors
    features: np.ndarray  # P x J unit moment magnitudes

    def columns(self, class_id: str) -> np.ndarray:
        return np.array([i for i, it in enumerate(self.items) if it.class_id == class_id], dtype=int)


def _map(fn, seq, workers: int) -> list:
    if workers <= 1:
        return [fn(x) for x in seq]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seq))


def load_images(manifest: DatasetManifest, items: Sequence[Item], workers: int = 1) -> list[ComplexImage]:
    def load(item):
        path = manifest.resolve(item)
        if not path.exists():
            raise DataError(f"missing image file: {path}")
        return load_complex_image(path, manifest.side)
    return _map(load, items, workers)


def load_split(manifest: DatasetManifest, split: str, pipeline: FeaturePipeline,
               workers: int = 1, images: list[ComplexImage] | None = None) -> SplitData:
    items = manifest.split(split)
    if images is None:
        images = load_images(manifest, items, workers)
    if not items:
        return SplitData([], np.empty((pipeline.basis.N, 0)), np.empty((pipeline.basis.P, 0)))
    vectors = np.column_stack(_map(pipeline.image_vector, images, workers))
    return SplitData(list(items), vectors, pipeline.features(vectors))


def make_subdicts(train: SplitData, class_ids: Sequence[str]) -> list[ClassSubdict]:
    """One sub-dictionary per class, columns sorted by aspect angle when known."""
    subdicts = []
    for cid in class_ids:
        cols = train.columns(cid)
        if cols.size == 0:
            raise DataError(f"class {cid!r} has no training measurements")
        angles = [train.items[i].angle for i in cols]
        if all(a is not None for a in angles):
            order = np.argsort(np.asarray(angles, dtype=float), kind="stable")
            cols = cols[order]
            angle_arr = np.asarray(angles, dtype=float)[order]
        else:
            angle_arr = None
        subdicts.append(ClassSubdict(cid, train.features[:, cols], angle_arr))
    return subdicts


def check_scheme(scheme: AuxScheme, subdicts: Sequence[ClassSubdict]) -> None:
    if scheme.kind == "mov" and any(s.angles is None for s in subdicts):
        raise DataError("moving-average auxiliary atoms need aspect angles for every training item")


def encode_all(dictionary: Dictionary, Y: np.ndarray, cfg: IhtConfig, workers: int = 1,
               chunk: int = 64) -> list[ClassDecision]:
    """Encode and classify each column of ``Y``; output order follows the columns.

    Columns are encoded in fixed-size chunks so the result does not depend on
    the number of workers.
    """
    if Y.shape[0] != dictionary.P:
        raise ConfigError(f"feature length P={Y.shape[0]} does not match dictionary P={dictionary.P}")
    dictionary.spectral_norm  # computed once, before worker threads share the dictionary
    starts = range(0, Y.shape[1], chunk)

    def block(start):
        ys = Y[:, start:start + chunk]
        codes = iht_encode_batch(dictionary, ys, cfg)
        return [classify(dictionary, c, ys[:, j]) for j, c in enumerate(codes)]
    return [d for part in _map(block, starts, workers) for d in part]


def evaluate_split(dictionary: Dictionary, test: SplitData, cfg: IhtConfig,
                   workers: int = 1) -> tuple[EvalReport, list[ClassDecision]]:
    if not test.items:
        raise DataError("test split is empty")
    decisions = encode_all(dictionary, test.features, cfg, workers)
    report = evaluate(zip((it.class_id for it in test.items), decisions), dictionary.class_ids)
    return report, decisions


@dataclass
class Experiment:
    """Features for one manifest, ready to be evaluated under several schemes."""

    manifest: DatasetManifest
    pipeline: FeaturePipeline
    train: SplitData
    test: SplitData
    subdicts: list[ClassSubdict]

    def dictionary(self, scheme: AuxScheme = AuxScheme()) -> Dictionary:
        check_scheme(scheme, self.subdicts)
        return assemble(self.subdicts, scheme)

    def evaluate(self, scheme: AuxScheme = AuxScheme(), cfg: IhtConfig = IhtConfig(),
                 workers: int = 1) -> EvalReport:
        return evaluate_split(self.dictionary(scheme), self.test, cfg, workers)[0]


def prepare(manifest: DatasetManifest, n_max: int = 10, fusion: bool = True, xi: float | None = None,
            workers: int = 1, basis: PZBasis | None = None, with_test: bool = True) -> Experiment:
    """Load and featurize a manifest.  ``xi`` defaults to a fraction of the
    first training image's intensity."""
    if basis is None:
        basis = build_basis(n_max, build_disk_geometry(manifest.side))
    if basis.side != manifest.side:
        raise ConfigError(f"basis side {basis.side} does not match manifest side {manifest.side}")
    if not manifest.train:
        raise DataError("manifest has no training items")
    pipeline = FeaturePipeline(basis, fusion, xi)
    train_images = load_images(manifest, manifest.train, workers)
    if xi is None:
        pipeline.calibrate(train_images[0])
    train = load_split(manifest, "train", pipeline, workers, train_images)
    if with_test:
        test = load_split(manifest, "test", pipeline, workers)
    else:
        test = SplitData([], np.empty((basis.N, 0)), np.empty((basis.P, 0)))
    return Experiment(manifest, pipeline, train, test, make_subdicts(train, manifest.class_ids))


def tune_upsilon(experiment: Experiment, grid: Sequence[float], cfg: IhtConfig = IhtConfig(),
                 workers: int = 1) -> tuple[float, dict[float, float]]:
    """Choose the correlation threshold on training data alone.

    Odd-position training atoms (in angle order) are held out and classified
    against a dictionary built from the even-position ones.  The threshold with
    the best accuracy wins; ties go to the larger threshold.
    """
    fit, held_cols, held_truth = [], [], []
    for sub in experiment.subdicts:
        even = np.arange(0, sub.J, 2)
        odd = np.arange(1, sub.J, 2)
        fit.append(ClassSubdict(sub.class_id, sub.atoms[:, even],
                                None if sub.angles is None else sub.angles[even]))
        held_cols.append(sub.atoms[:, odd])
        held_truth += [sub.class_id] * odd.size
    Y = np.hstack(held_cols)
    scores = {}
    for u in grid:
        d = assemble(fit, AuxScheme("corr", upsilon=float(u)))
        decisions = encode_all(d, Y, cfg, workers)
        scores[float(u)] = evaluate(zip(held_truth, decisions), d.class_ids).omega
    best = max(scores, key=lambda u: (scores[u], u))
    return best, scores
