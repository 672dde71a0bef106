"""Coupled two-time-scale iteration with martingale noise.

One step of the plain iteration is

    x' = x + alpha_k (fast_drift(x, y) + M)
    y' = y + beta_k  (slow_drift(x, y) + M')

and the projected variant replaces ``x'`` by its projection onto the drift
pair's region. The averaged slow-channel noise ``U' = (1 - beta_k) U + beta_k M'``
is carried along so that the denoised iterate ``z = y - U`` can be inspected.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .operators import DriftPair, ProjectionRegion, project
from .schedules import StepSchedule, step_at

DIVERGENCE_THRESHOLD = 1e10

NOISE_KINDS = ("none", "gaussian_iid", "linear_perturbation")


class NonFiniteDrift(FloatingPointError):
    """A drift evaluation returned inf or nan."""

    def __init__(self, k, x, y):
        super().__init__(f"non-finite drift at k={k}")
        self.k = k
        self.x = np.array(x)
        self.y = np.array(y)


@dataclass(frozen=True)
class NoiseModel:
    """Generator for the fast (``M``) and slow (``M'``) noise channels.

    ``gaussian_iid`` draws ``sigma * N(0, I)`` per channel.
    ``linear_perturbation`` models fresh i.i.d. ``N(0, sigma**2)`` entries added
    to every matrix and vector of an affine drift ``b - A_x x - A_y y``. By
    default it draws the induced noise directly, which per coordinate is
    ``N(0, sigma**2 (1 + |x|**2 + |y|**2))``; set ``sample_entries`` to draw
    the individual perturbation matrices instead (same law, slower).
    """

    kind: str = "gaussian_iid"
    sigma: float = 1.0
    fast: bool = True
    slow: bool = True
    sample_entries: bool = False

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.sigma > 0 and (self.fast or self.slow)

    def draw(self, rng: np.random.Generator, x: np.ndarray, y: np.ndarray):
        """Draw ``(M, M')`` at state ``(x, y)``; fast channel first."""
        d1, d2 = x.size, y.size
        if not self.active:
            return np.zeros(d1), np.zeros(d2)
        if self.kind == "gaussian_iid":
            m = self.sigma * rng.standard_normal(d1) if self.fast else np.zeros(d1)
            mp = self.sigma * rng.standard_normal(d2) if self.slow else np.zeros(d2)
            return m, mp
        if self.sample_entries:
            m = self._entries(rng, d1, x, y) if self.fast else np.zeros(d1)
            mp = self._entries(rng, d2, x, y) if self.slow else np.zeros(d2)
            return m, mp
        scale = self.sigma * math.sqrt(1.0 + float(x @ x) + float(y @ y))
        m = scale * rng.standard_normal(d1) if self.fast else np.zeros(d1)
        mp = scale * rng.standard_normal(d2) if self.slow else np.zeros(d2)
        return m, mp

    def _entries(self, rng, dim, x, y):
        xi = rng.standard_normal(dim)
        ax = rng.standard_normal((dim, x.size))
        ay = rng.standard_normal((dim, y.size))
        return self.sigma * (xi - ax @ x - ay @ y)


@dataclass
class IterationState:
    k: int
    x: np.ndarray
    y: np.ndarray
    U: np.ndarray
    rng: np.random.Generator

    @classmethod
    def initial(cls, x0, y0, seed=None) -> "IterationState":
        x0 = np.array(x0, dtype=float)
        y0 = np.array(y0, dtype=float)
        return cls(0, x0, y0, np.zeros_like(y0), np.random.default_rng(seed))


def _advance(k, x, y, U, drift, sched, noise, rng, region):
    a_k, b_k = step_at(sched, k)
    fd = drift.fast_drift(x, y)
    sd = drift.slow_drift(x, y)
    # a finite sum implies finite entries; only fall back to the full check otherwise
    if not math.isfinite(float(fd.sum()) + float(sd.sum())):
        if not (np.all(np.isfinite(fd)) and np.all(np.isfinite(sd))):
            raise NonFiniteDrift(k, x, y)
    m, mp = noise.draw(rng, x, y)
    x_new = x + a_k * (fd + m)
    if region is not None:
        x_new = project(region, x_new)
    y_new = y + b_k * (sd + mp)
    U_new = (1.0 - b_k) * U + b_k * mp
    return x_new, y_new, U_new, m, mp


def step_plain(state: IterationState, drift: DriftPair, sched: StepSchedule,
               noise: NoiseModel) -> IterationState:
    """Advance one step of the unprojected iteration."""
    _check_dims(state, drift)
    x, y, U, _, _ = _advance(state.k, state.x, state.y, state.U, drift, sched, noise,
                             state.rng, None)
    return IterationState(state.k + 1, x, y, U, state.rng)


def step_projected(state: IterationState, drift: DriftPair, sched: StepSchedule,
                   noise: NoiseModel, region: ProjectionRegion | None = None) -> IterationState:
    """Advance one step, projecting the fast iterate onto ``region``."""
    _check_dims(state, drift)
    region = drift.region if region is None else region
    x, y, U, _, _ = _advance(state.k, state.x, state.y, state.U, drift, sched, noise,
                             state.rng, region)
    return IterationState(state.k + 1, x, y, U, state.rng)


def _check_dims(state, drift):
    if (state.x.size, state.y.size) != tuple(drift.dims):
        raise ValueError(f"state dims {(state.x.size, state.y.size)} != drift dims {drift.dims}")


@dataclass
class Trajectory:
    """Strided record of ``(k, x, y, U)``.

    ``status`` is ``"ok"``, ``"diverged"`` (norm guard tripped) or ``"failed"``
    (non-finite drift); in the latter two cases the record stops at the last
    finite state, which is always stored as the final sample.
    """

    stride: int
    ks: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    Us: np.ndarray
    status: str = "ok"
    message: str = ""
    noise_log: dict | None = field(default=None, repr=False)
    noise_digest: str | None = None

    @property
    def samples(self):
        return list(zip(self.ks.tolist(), self.xs, self.ys, self.Us))

    @property
    def terminal(self):
        return int(self.ks[-1]), self.xs[-1], self.ys[-1], self.Us[-1]

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def sample_indices(horizon: int, stride: int) -> np.ndarray:
    ks = list(range(0, horizon + 1, stride))
    if ks[-1] != horizon:
        ks.append(horizon)
    return np.array(ks, dtype=np.int64)


def run(drift: DriftPair, sched: StepSchedule, noise: NoiseModel, horizon: int,
        stride: int, seed, variant: str = "plain", *, x0, y0,
        region: ProjectionRegion | None = None, log_noise: bool = False,
        digest_noise: bool = False) -> Trajectory:
    """Iterate from ``(x0, y0)`` for ``horizon`` steps, recording every ``stride``.

    The result is a deterministic function of all arguments including
    ``seed`` (anything accepted by :func:`numpy.random.default_rng`).
    With ``digest_noise`` the SHA-256 of the raw standard-normal stream
    consumed by the run is stored in ``noise_digest``; it depends only on the
    seed and the number of draws, not on the state the noise is scaled by.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if variant == "projected":
        region = drift.region if region is None else region
    elif variant == "plain":
        region = None
    else:
        raise ValueError(f"unknown variant {variant!r}")

    rng = np.random.default_rng(seed)
    hasher = None
    if digest_noise:
        hasher = hashlib.sha256()
        rng = _DigestingGenerator(rng, hasher)
    x = np.array(x0, dtype=float)
    y = np.array(y0, dtype=float)
    if (x.size, y.size) != tuple(drift.dims):
        raise ValueError(f"initial point dims {(x.size, y.size)} != drift dims {drift.dims}")
    U = np.zeros_like(y)

    ks, xs, ys, Us = [0], [x], [y], [U]
    log = {"M": [], "Mp": []} if log_noise else None
    status, message = "ok", ""
    k = 0
    while k < horizon:
        try:
            x_n, y_n, U_n, m, mp = _advance(k, x, y, U, drift, sched, noise, rng, region)
        except NonFiniteDrift as exc:
            status, message = "failed", str(exc)
            break
        if log is not None:
            log["M"].append(m)
            log["Mp"].append(mp)
        k += 1
        x, y, U = x_n, y_n, U_n
        nrm = math.sqrt(float(x @ x)) + math.sqrt(float(y @ y))
        if not nrm <= DIVERGENCE_THRESHOLD:
            status, message = "diverged", f"|x|+|y| exceeded {DIVERGENCE_THRESHOLD:g} at k={k}"
            ks.append(k)
            xs.append(x)
            ys.append(y)
            Us.append(U)
            break
        if k % stride == 0 or k == horizon:
            ks.append(k)
            xs.append(x)
            ys.append(y)
            Us.append(U)
    if status == "failed" and ks[-1] != k:
        ks.append(k)
        xs.append(x)
        ys.append(y)
        Us.append(U)
    if log is not None:
        log = {key: np.array(v).reshape(len(v), -1) for key, v in log.items()}
    return Trajectory(stride, np.array(ks, dtype=np.int64), np.array(xs), np.array(ys),
                      np.array(Us), status, message, log,
                      hasher.hexdigest() if hasher is not None else None)


class _DigestingGenerator:
    """Wraps a Generator and hashes every standard-normal block it hands out."""

    def __init__(self, rng, hasher):
        self._rng = rng
        self._hasher = hasher

    def standard_normal(self, size=None):
        out = self._rng.standard_normal(size)
        self._hasher.update(np.ascontiguousarray(out).tobytes())
        return out


def shadow_z(sample) -> np.ndarray:
    """Denoised slow iterate ``z = y - U`` of a recorded ``(k, x, y, U)`` sample."""
    _, _, y, U = sample
    return np.asarray(y) - np.asarray(U)
