"""Residual-based class decisions, confusion matrices and correlation tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from pzsrc.dictionary import Dictionary
from pzsrc.errors import DataError
from pzsrc.sparse import SparseCode


@dataclass(frozen=True, eq=False)
class ClassDecision:
    predicted: str
    residuals: np.ndarray
    code: SparseCode


@dataclass(frozen=True, eq=False)
class EvalReport:
    class_ids: tuple[str, ...]
    confusion: np.ndarray  # rows = truth, columns = prediction
    omega_k: np.ndarray
    omega: float

    @property
    def totals(self) -> np.ndarray:
        return self.confusion.sum(axis=1)


def class_residuals(dictionary: Dictionary, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (dictionary.Q,) or y.shape != (dictionary.P,):
        raise DataError(f"code {x.shape} / signal {y.shape} do not fit a {dictionary.P}x{dictionary.Q} dictionary")
    out = np.empty(len(dictionary.blocks))
    for k, block in enumerate(dictionary.blocks):
        cols = block.columns
        r = y - dictionary.matrix[:, cols] @ x[cols]
        out[k] = r @ r
    return out


def classify(dictionary: Dictionary, code: SparseCode, y) -> ClassDecision:
    """Pick the class whose primary+auxiliary atoms best reconstruct ``y``.

    Ties resolve to the earliest class in dictionary order.
    """
    residuals = class_residuals(dictionary, code.coefficients, y)
    return ClassDecision(dictionary.blocks[int(np.argmin(residuals))].class_id, residuals, code)


def evaluate(decisions: Iterable[tuple[str, ClassDecision | str]], class_ids: Sequence[str]) -> EvalReport:
    """Confusion matrix and per-class / mean accuracy in percent.

    Per-class accuracy divides by that class's own test count; classes without
    test items get NaN and are left out of the mean.
    """
    class_ids = tuple(str(c) for c in class_ids)
    position = {c: i for i, c in enumerate(class_ids)}
    K = len(class_ids)
    confusion = np.zeros((K, K), dtype=int)
    seen = 0
    for truth, decision in decisions:
        predicted = getattr(decision, "predicted", decision)
        if str(truth) not in position:
            raise DataError(f"unknown truth label {truth!r}")
        if str(predicted) not in position:
            raise DataError(f"unknown predicted label {predicted!r}")
        confusion[position[str(truth)], position[str(predicted)]] += 1
        seen += 1
    if seen == 0:
        raise DataError("no decisions to evaluate")
    return report_from_confusion(confusion, class_ids)


def report_from_confusion(confusion, class_ids: Sequence[str]) -> EvalReport:
    confusion = np.asarray(confusion, dtype=int)
    totals = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        omega_k = np.where(totals > 0, 100.0 * np.diag(confusion) / totals, np.nan)
    omega = float(np.nanmean(omega_k))
    return EvalReport(tuple(class_ids), confusion, omega_k, omega)


def atom_correlations(atoms, reference_columns: Sequence[int]) -> np.ndarray:
    """Inner products of each reference column against every column, in column order.

    Columns are normalized first, so unit-norm atoms give cosine similarity.
    """
    a = np.asarray(getattr(atoms, "atoms", atoms), dtype=float)
    J = a.shape[1]
    refs = [int(i) for i in reference_columns]
    if any(i < 0 or i >= J for i in refs):
        raise DataError(f"reference columns {refs} out of range for {J} columns")
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0):
        raise DataError("zero column in correlation input")
    a = a / norms
    return a[:, refs].T @ a


def neighbor_correlation(atoms) -> float:
    """Mean inner product between consecutive normalized columns."""
    a = np.asarray(getattr(atoms, "atoms", atoms), dtype=float)
    a = a / np.linalg.norm(a, axis=0)
    return float(np.mean(np.sum(a[:, :-1] * a[:, 1:], axis=0)))


def _fmt(value: float) -> str:
    return "nan" if np.isnan(value) else f"{value:.6f}"


def write_report_csv(path, report: EvalReport) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["truth", *report.class_ids, "total", "omega_k"])
        for k, cid in enumerate(report.class_ids):
            w.writerow([cid, *report.confusion[k].tolist(), int(report.totals[k]), _fmt(report.omega_k[k])])
        w.writerow(["overall", *([""] * len(report.class_ids)), int(report.totals.sum()), _fmt(report.omega)])


def write_decisions_csv(path, rows: Sequence[tuple[str, str, ClassDecision]], class_ids: Sequence[str]) -> None:
    """Rows of (item, truth, decision)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["item", "truth", "predicted", *(f"residual_{c}" for c in class_ids), "iterations"])
        for item, truth, decision in rows:
            w.writerow([item, truth, decision.predicted, *(_fmt(r) for r in decision.residuals),
                        decision.code.iterations])


def write_correlations_csv(path, tables: dict[str, np.ndarray], references: Sequence[int]) -> None:
    """``tables`` maps a space label (e.g. ``pz``, ``pixel``) to a refs x J array."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["space", "reference", "column", "correlation"])
        for space, table in tables.items():
            for ref, row in zip(references, table):
                for col, value in enumerate(row):
                    w.writerow([space, ref, col, _fmt(value)])
