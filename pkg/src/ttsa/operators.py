"""Drift fields, projection regions and monotone-operator transforms.

Also holds the Monte Carlo probes used to audit declared operator constants
(Lipschitz / contraction factors, co-coercivity moduli) on a bounded region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Vector = np.ndarray
VecMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class OperatorConstants:
    """Declared constants of a drift pair.

    ``mu`` is the contraction factor of the fast map, ``L`` the joint Lipschitz
    constant, ``rho`` the strong concavity / monotonicity modulus and
    ``cocoercivity`` the co-coercivity modulus of the slow operator.
    """

    mu: float
    L: float
    rho: float = math.nan
    cocoercivity: float = math.nan

    @property
    def L0(self) -> float:
        """Lipschitz constant of the fast fixed point map ``y -> x*(y)``."""
        return self.L / (1.0 - self.mu)


@dataclass(frozen=True)
class ProjectionRegion:
    """Closed convex set with a closed-form Euclidean projection.

    Use the constructors :meth:`ball`, :meth:`box`, :meth:`block_balls` and
    :meth:`all_space` rather than building instances directly.
    """

    kind: str
    center: np.ndarray | None = None
    radius: float = math.inf
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    block_size: int = 0
    dim: int | None = None

    @classmethod
    def ball(cls, center, radius: float) -> "ProjectionRegion":
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if radius <= 0:
            raise ValueError("radius must be positive")
        return cls("ball", center=center, radius=float(radius), dim=center.size)

    @classmethod
    def box(cls, lo, hi) -> "ProjectionRegion":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box bounds must have equal shape and lo <= hi")
        return cls("box", lo=lo, hi=hi, dim=lo.size)

    @classmethod
    def block_balls(cls, block_size: int, radius: float, dim: int | None = None) -> "ProjectionRegion":
        if block_size < 1 or radius <= 0:
            raise ValueError("block_size must be >= 1 and radius positive")
        if dim is not None and dim % block_size:
            raise ValueError("dim must be a multiple of block_size")
        return cls("block_balls", radius=float(radius), block_size=int(block_size), dim=dim)

    @classmethod
    def all_space(cls) -> "ProjectionRegion":
        return cls("all_space")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "ball":
            d.update(center=self.center.tolist(), radius=self.radius)
        elif self.kind == "box":
            d.update(lo=self.lo.tolist(), hi=self.hi.tolist())
        elif self.kind == "block_balls":
            d.update(block_size=self.block_size, radius=self.radius, dim=self.dim)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProjectionRegion":
        kind = d["kind"]
        if kind == "ball":
            return cls.ball(d["center"], d["radius"])
        if kind == "box":
            return cls.box(d["lo"], d["hi"])
        if kind == "block_balls":
            return cls.block_balls(d["block_size"], d["radius"], d.get("dim"))
        if kind == "all_space":
            return cls.all_space()
        raise ValueError(f"unknown region kind {kind!r}")


def _check_dim(region: ProjectionRegion, p: np.ndarray):
    if region.kind == "block_balls":
        if p.size % region.block_size or (region.dim is not None and p.size != region.dim):
            raise ValueError(f"dimension {p.size} incompatible with block size {region.block_size}")
    elif region.dim is not None and p.size != region.dim:
        raise ValueError(f"dimension mismatch: region has {region.dim}, point has {p.size}")


def project(region: ProjectionRegion, p) -> np.ndarray:
    """Euclidean projection of ``p`` onto ``region``."""
    p = np.asarray(p, dtype=float)
    kind = region.kind
    if kind == "all_space":
        return p.copy()
    _check_dim(region, p)
    if kind == "ball":
        v = p - region.center
        n = math.sqrt(v @ v)
        if n <= region.radius:
            return p.copy()
        return region.center + v * (region.radius / n)
    if kind == "box":
        return np.clip(p, region.lo, region.hi)
    if kind == "block_balls":
        blocks = p.reshape(-1, region.block_size)
        norms = np.sqrt(np.einsum("ij,ij->i", blocks, blocks))
        scale = np.where(norms > region.radius, region.radius / np.maximum(norms, 1e-300), 1.0)
        return (blocks * scale[:, None]).reshape(p.shape)
    raise ValueError(f"unknown region kind {kind!r}")


def contains(region: ProjectionRegion, p, tol: float = 1e-9) -> bool:
    p = np.asarray(p, dtype=float)
    kind = region.kind
    if kind == "all_space":
        return True
    if kind == "ball":
        return bool(np.linalg.norm(p - region.center) <= region.radius + tol)
    if kind == "box":
        return bool(np.all(p >= region.lo - tol) and np.all(p <= region.hi + tol))
    blocks = p.reshape(-1, region.block_size)
    return bool(np.all(np.linalg.norm(blocks, axis=1) <= region.radius + tol))


@dataclass
class DriftPair:
    """Fast and slow drift fields ``f(x, y) - x`` and ``g(x, y) - y``.

    Drifts must be pure functions of their arguments; the engine shares them
    across runs.
    """

    fast_drift: Callable[[np.ndarray, np.ndarray], np.ndarray]
    slow_drift: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dims: tuple[int, int]
    constants: OperatorConstants
    region: ProjectionRegion = field(default_factory=ProjectionRegion.all_space)


class TransformedMap:
    """``q(x) = x - step * h(x)`` with a known Lipschitz factor."""

    def __init__(self, h: VecMap, step: float, factor: float):
        self.h = h
        self.step = step
        self.factor = factor

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x - self.step * np.asarray(self.h(x), dtype=float)


def contractive_from_strongly_monotone(h: VecMap, c: float, ell: float) -> TransformedMap:
    """Turn a ``c``-strongly monotone, ``ell``-Lipschitz operator into a contraction.

    Returns ``q(x) = x - (c / ell**2) h(x)``, contractive with factor
    ``sqrt(1 - c**2 / ell**2)``.
    """
    if c <= 0:
        raise ValueError("strong monotonicity modulus must be positive")
    if c > ell:
        raise ValueError(f"modulus c={c} exceeds Lipschitz constant ell={ell}")
    return TransformedMap(h, c / ell ** 2, math.sqrt(1.0 - (c / ell) ** 2))


def nonexpansive_from_cocoercive(h: VecMap, c: float) -> TransformedMap:
    """Return ``q(x) = x - 2 c h(x)``, non-expansive when ``h`` is ``c``-co-coercive."""
    if c <= 0:
        raise ValueError("co-coercivity modulus must be positive")
    return TransformedMap(h, 2.0 * c, 1.0)


def ball_sampler(dim: int, radius: float = 10.0, center=None) -> Callable[[np.random.Generator], np.ndarray]:
    """Uniform sampler on the Euclidean ball, as a function of a Generator."""
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)

    def sample(rng: np.random.Generator) -> np.ndarray:
        v = rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        return c + v * radius * rng.random() ** (1.0 / dim)

    return sample


def _distinct_pair(sampler, rng):
    while True:
        u1, u2 = sampler(rng), sampler(rng)
        if np.any(u1 != u2):
            return u1, u2


def probe_lipschitz(fn: VecMap, sampler, n_pairs: int, rng=None) -> float:
    """Largest observed ratio ``|fn(u1) - fn(u2)| / |u1 - u2|`` over sampled pairs."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(rng)
    best = 0.0
    for _ in range(n_pairs):
        u1, u2 = _distinct_pair(sampler, rng)
        r = np.linalg.norm(np.asarray(fn(u1)) - np.asarray(fn(u2))) / np.linalg.norm(u1 - u2)
        best = max(best, float(r))
    return best


def probe_cocoercivity(fn: VecMap, sampler, n_pairs: int, rng=None) -> float:
    """Smallest observed ``<fn(u1)-fn(u2), u1-u2> / |fn(u1)-fn(u2)|**2``.

    Pairs with identical images are skipped. Returns ``nan`` when every pair
    is degenerate.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(rng)
    best = math.inf
    for _ in range(n_pairs):
        u1, u2 = _distinct_pair(sampler, rng)
        dv = np.asarray(fn(u1), dtype=float) - np.asarray(fn(u2), dtype=float)
        den = float(dv @ dv)
        if den == 0.0:
            continue
        best = min(best, float(dv @ (u1 - u2)) / den)
    return math.nan if best == math.inf else best
