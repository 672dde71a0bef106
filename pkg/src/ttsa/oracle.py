"""Brute-force reference solvers used to check the iteration and the problems."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import ProjectionRegion, project

DEFAULT_TOL = 1e-10
DEFAULT_CAP = 100_000


@dataclass
class FixedPointResult:
    point: np.ndarray
    residual: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)


def _iterate(update, x, tol, cap, record):
    history = []
    best_x, best_r = x, np.inf
    for it in range(cap + 1):
        x_new = update(x)
        r = float(np.linalg.norm(x_new - x))
        if record:
            history.append(r)
        if r < best_r:
            best_x, best_r = x, r
        if r <= tol:
            return FixedPointResult(x, r, it, True, history)
        if not np.isfinite(r) or it == cap:
            break
        x = x_new
    return FixedPointResult(best_x, best_r, it, False, history)


def picard_fixed_point(f_map, y, x_init, tol: float = DEFAULT_TOL, cap: int = DEFAULT_CAP,
                       record: bool = False) -> FixedPointResult:
    """Solve ``x = f_map(x, y)`` by repeated substitution.

    ``residual`` is ``|f_map(point, y) - point|``; ``iterations`` counts the
    substitutions applied. When ``cap`` is reached the best point seen is
    returned with ``converged=False``. ``record`` keeps the residual sequence.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    y = np.asarray(y, dtype=float)
    x0 = np.array(x_init, dtype=float)
    return _iterate(lambda x: np.asarray(f_map(x, y), dtype=float), x0, tol, cap, record)


def projected_picard(f_map, region: ProjectionRegion, y, x_init, tol: float = DEFAULT_TOL,
                     cap: int = DEFAULT_CAP, record: bool = False) -> FixedPointResult:
    """Solve ``x = P(f_map(x, y))`` for the projection ``P`` onto ``region``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    y = np.asarray(y, dtype=float)
    x0 = project(region, np.array(x_init, dtype=float))
    return _iterate(lambda x: project(region, f_map(x, y)), x0, tol, cap, record)


def finite_diff_grad(scalar_fn, point, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``scalar_fn`` at ``point``."""
    if h <= 0:
        raise ValueError("h must be positive")
    p = np.array(point, dtype=float)
    g = np.empty_like(p)
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = h
        g[i] = (scalar_fn(p + e) - scalar_fn(p - e)) / (2 * h)
    return g
