"""Iterative hard thresholding and an exhaustive l0 oracle for small problems."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pzsrc.errors import ConfigError, DataError, NumericalError

STEP_POLICIES = ("unit", "spectral")
MAX_SUBSETS = 10**6


@dataclass(frozen=True)
class IhtConfig:
    gamma: int = 5
    max_iters: int = 300
    residual_tol: float = 1e-6
    step_policy: str = "spectral"

    def __post_init__(self):
        if self.gamma < 1:
            raise ConfigError("sparsity gamma must be at least 1")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if not self.residual_tol >= 0:
            raise ConfigError("residual_tol must be non-negative")
        if self.step_policy not in STEP_POLICIES:
            raise ConfigError(f"unknown step policy {self.step_policy!r}")


@dataclass(frozen=True, eq=False)
class SparseCode:
    coefficients: np.ndarray
    support: tuple[int, ...]
    iterations: int
    residual_history: np.ndarray
    residual: float  # final ||y - Phi x||^2, absolute


def hard_threshold(q, gamma: int) -> np.ndarray:
    """Keep the ``gamma`` largest-magnitude entries; ties go to the lower index."""
    q = np.asarray(q, dtype=float)
    if gamma <= 0:
        return np.zeros_like(q)
    if gamma >= q.size:
        return q.copy()
    keep = np.argsort(-np.abs(q), kind="stable")[:gamma]
    out = np.zeros_like(q)
    out[keep] = q[keep]
    return out


def _matrix(dictionary) -> np.ndarray:
    return np.asarray(getattr(dictionary, "matrix", dictionary), dtype=float)


def _spectral_norm(dictionary) -> float:
    cached = getattr(dictionary, "spectral_norm", None)
    if cached is not None:
        return cached
    return float(np.linalg.norm(_matrix(dictionary), 2))


def _code(x: np.ndarray, history, iterations: int, residual: float) -> SparseCode:
    support = tuple(int(i) for i in np.flatnonzero(x))
    return SparseCode(x, support, iterations, np.asarray(history, dtype=float), float(residual))


def _check_inputs(phi: np.ndarray, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != phi.shape[0]:
        raise DataError(f"signal of shape {y.shape} does not match dictionary with P={phi.shape[0]}")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(phi)):
        raise NumericalError("non-finite values in the encoding problem")
    return y


def iht_encode(dictionary, y, cfg: IhtConfig = IhtConfig()) -> SparseCode:
    """Encode ``y`` with iterative hard thresholding, starting from zero.

    Each iteration takes ``x <- H(x + mu * Phi^T (y - Phi x))``.  Under the
    ``spectral`` policy ``mu = 1/||Phi||_2^2``, which makes the residual
    non-increasing; ``unit`` uses ``mu = 1`` and can diverge for over-complete
    dictionaries.  Iteration stops after ``max_iters`` or once the relative
    residual ``||y - Phi x||^2 / ||y||^2`` drops to ``residual_tol``.
    """
    phi = _matrix(dictionary)
    y = _check_inputs(phi, y)
    x = np.zeros(phi.shape[1])
    energy = float(y @ y)
    if energy == 0:
        return _code(x, [0.0], 1, 0.0)
    if cfg.step_policy == "spectral":
        norm = _spectral_norm(dictionary)
        mu = 1.0 / norm**2
    else:
        mu = 1.0
    history = []
    r = y.copy()
    t = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, cfg.max_iters + 1):
            x = hard_threshold(x + mu * (phi.T @ r), cfg.gamma)
            r = y - phi @ x
            res = float(r @ r)
            if not math.isfinite(res):
                raise NumericalError(f"IHT diverged at iteration {t} (step policy {cfg.step_policy!r})")
            history.append(res / energy)
            if history[-1] <= cfg.residual_tol:
                break
    return _code(x, history, t, res)


def iht_encode_batch(dictionary, Y, cfg: IhtConfig = IhtConfig()) -> list[SparseCode]:
    """Encode every column of ``Y`` at once; same recursion and stopping rule as
    :func:`iht_encode`, with columns frozen as they converge."""
    phi = _matrix(dictionary)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] != phi.shape[0]:
        raise DataError(f"signals of shape {Y.shape} do not match dictionary with P={phi.shape[0]}")
    if not np.all(np.isfinite(Y)) or not np.all(np.isfinite(phi)):
        raise NumericalError("non-finite values in the encoding problem")
    Q, T = phi.shape[1], Y.shape[1]
    energy = np.einsum("ij,ij->j", Y, Y)
    mu = 1.0 / _spectral_norm(dictionary) ** 2 if cfg.step_policy == "spectral" else 1.0
    X = np.zeros((Q, T))
    R = Y.copy()
    res = energy.copy()
    iterations = np.ones(T, dtype=int)
    history: list[list[float]] = [[0.0] if e == 0 else [] for e in energy]
    active = np.flatnonzero(energy > 0)
    keep_rows = np.arange(cfg.gamma)
    t = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while active.size and t < cfg.max_iters:
            t += 1
            q = X[:, active] + mu * (phi.T @ R[:, active])
            if cfg.gamma < Q:
                top = np.argsort(-np.abs(q), axis=0, kind="stable")[keep_rows]
                kept = np.zeros_like(q)
                np.put_along_axis(kept, top, np.take_along_axis(q, top, axis=0), axis=0)
                q = kept
            X[:, active] = q
            R[:, active] = Y[:, active] - phi @ q
            r = np.einsum("ij,ij->j", R[:, active], R[:, active])
            if not np.all(np.isfinite(r)):
                raise NumericalError(f"IHT diverged at iteration {t} (step policy {cfg.step_policy!r})")
            res[active] = r
            iterations[active] = t
            rel = r / energy[active]
            for j, value in zip(active, rel):
                history[j].append(float(value))
            active = active[rel > cfg.residual_tol]
    return [_code(X[:, j].copy(), history[j], int(iterations[j]), res[j]) for j in range(T)]


def exhaustive_l0(dictionary, y, gamma: int) -> SparseCode:
    """Global minimizer of ||y - Phi x||^2 over all supports with at most gamma atoms.

    Supports are scanned by increasing size, so among equally good supports the
    smallest (then lexicographically first) one is returned.
    """
    phi = _matrix(dictionary)
    y = _check_inputs(phi, y)
    Q = phi.shape[1]
    gamma = min(gamma, Q)
    if math.comb(Q, gamma) > MAX_SUBSETS:
        raise ConfigError(f"C({Q}, {gamma}) supports exceed the enumeration guard of {MAX_SUBSETS}")
    best_x = np.zeros(Q)
    best_res = float(y @ y)
    slack = 1e-12 * max(best_res, 1e-300)
    for size in range(1, gamma + 1):
        for support in itertools.combinations(range(Q), size):
            cols = phi[:, support]
            coef, *_ = np.linalg.lstsq(cols, y, rcond=None)
            r = y - cols @ coef
            res = float(r @ r)
            if res < best_res - slack:
                best_res = res
                best_x = np.zeros(Q)
                best_x[list(support)] = coef
    energy = float(y @ y)
    return _code(best_x, [best_res / energy if energy else 0.0], 1, best_res)


def mutual_coherence(matrix) -> float:
    """Largest absolute inner product between distinct unit-normalized columns."""
    a = np.asarray(matrix, dtype=float)
    a = a / np.linalg.norm(a, axis=0)
    gram = np.abs(a.T @ a)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max()) if gram.size else 0.0


def write_residual_csv(path, code: SparseCode) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "relative_residual"])
        for i, value in enumerate(code.residual_history, start=1):
            writer.writerow([i, f"{value:.6f}"])
