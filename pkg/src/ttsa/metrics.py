"""Residual evaluation, cross-run aggregation and empirical rate fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import Trajectory
from .problems import Problem
from .schedules import StepSchedule

FAST_KINDS = ("fast",)
SLOW_KINDS = ("slow", "grad_Phi", "linear_slow", "feasibility", "grad_J")
ALL_KINDS = FAST_KINDS + SLOW_KINDS + ("shadow",)
# kinds that need the fast fixed point along the trajectory
_ORACLE_KINDS = {"fast", "slow", "grad_Phi"}


@dataclass
class ResidualSeries:
    kind: str
    ks: np.ndarray
    values: np.ndarray


@dataclass
class AggregateSeries:
    kind: str
    ks: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_runs: int
    n_diverged: int

    def at(self, k: int) -> float:
        i = int(np.searchsorted(self.ks, k))
        if i >= self.ks.size or self.ks[i] != k:
            raise KeyError(f"k={k} not on the sample grid")
        return float(self.mean[i])

    def rows(self):
        for k, m, s in zip(self.ks.tolist(), self.mean.tolist(), self.std.tolist()):
            yield k, m, s, self.n_runs, self.n_diverged


def residuals(traj: Trajectory, problem: Problem, kinds, projected: bool = False) -> list[ResidualSeries]:
    """Evaluate the requested squared residuals at every recorded sample.

    Projected runs are measured against the projected fixed point ``x_hat``.
    Samples where the fixed-point oracle fails to converge are ``nan``.
    """
    kinds = list(kinds)
    for kind in kinds:
        if kind not in problem.residual_kinds:
            raise ValueError(f"residual kind {kind!r} not available for {problem.kind}")
    if _ORACLE_KINDS.intersection(kinds):
        xts = problem.targets(traj.ys, projected)
    else:
        xts = np.zeros_like(traj.xs)
    out = []
    for kind in kinds:
        vals = np.empty(traj.ks.size)
        for i in range(traj.ks.size):
            xt = xts[i]
            if kind in _ORACLE_KINDS and not np.all(np.isfinite(xt)):
                vals[i] = np.nan
                continue
            vals[i] = problem.residual(kind, traj.xs[i], traj.ys[i], traj.Us[i], xt)
        out.append(ResidualSeries(kind, traj.ks.copy(), vals))
    return out


def aggregate(series, diverged=None) -> AggregateSeries:
    """Pointwise mean and population std over the runs that did not diverge.

    Parameters
    ----------
    series : sequence of ResidualSeries
        One series per run, all of the same kind.
    diverged : sequence of bool, optional
        Runs flagged here are left out of the statistics and counted.
    """
    series = list(series)
    if not series:
        raise ValueError("no series to aggregate")
    diverged = [False] * len(series) if diverged is None else list(diverged)
    if len(diverged) != len(series):
        raise ValueError("diverged flags must match the number of series")
    kept = [s for s, d in zip(series, diverged) if not d]
    n_div = len(series) - len(kept)
    kind = series[0].kind
    ref = kept[0].ks if kept else max(series, key=lambda s: s.ks.size).ks
    for s in kept:
        if s.kind != kind:
            raise ValueError("cannot aggregate residuals of different kinds")
        if s.ks.shape != ref.shape or np.any(s.ks != ref):
            raise ValueError("runs do not share the same sample grid")
    if not kept:
        nan = np.full(ref.size, np.nan)
        return AggregateSeries(kind, ref.copy(), nan, nan.copy(), len(series), n_div)
    vals = np.vstack([s.values for s in kept])
    with np.errstate(invalid="ignore"):
        counts = np.sum(np.isfinite(vals), axis=0)
        safe = np.where(np.isfinite(vals), vals, 0.0)
        mean = safe.sum(axis=0) / np.maximum(counts, 1)
        var = (np.where(np.isfinite(vals), (vals - mean) ** 2, 0.0)).sum(axis=0) / np.maximum(counts, 1)
    mean = np.where(counts > 0, mean, np.nan)
    std = np.where(counts > 0, np.sqrt(var), np.nan)
    return AggregateSeries(kind, ref.copy(), mean, std, len(series), n_div)


def fit_rate(agg: AggregateSeries, k_lo: int, k_hi: int) -> tuple[float, float]:
    """Least-squares line through ``(log(k+1), log(mean))`` on ``[k_lo, k_hi]``."""
    if not k_lo < k_hi:
        raise ValueError("need k_lo < k_hi")
    sel = (agg.ks >= k_lo) & (agg.ks <= k_hi)
    if sel.sum() < 10:
        raise ValueError(f"only {int(sel.sum())} samples in [{k_lo}, {k_hi}], need >= 10")
    m = agg.mean[sel]
    if not np.all(m > 0):
        raise ValueError("rate fit needs strictly positive means in the window")
    slope, intercept = np.polyfit(np.log(agg.ks[sel] + 1.0), np.log(m), 1)
    return float(slope), float(intercept)


def overlay_exponent(sched: StepSchedule, kind: str) -> float:
    if kind in FAST_KINDS:
        return sched.exp_fast
    if kind in SLOW_KINDS:
        return 1.0 - sched.exp_slow
    if kind == "shadow":
        return sched.exp_slow
    raise ValueError(f"no bound exponent for kind {kind!r}")


def bound_overlay(sched: StepSchedule, kind: str, C: float):
    """Bound curve ``k -> C / (k + 1)**p`` with the exponent predicted for ``kind``."""
    if not C > 0:
        raise ValueError("C must be positive")
    p = overlay_exponent(sched, kind)

    def curve(k):
        return C / (np.asarray(k, dtype=float) + 1.0) ** p

    curve.exponent = p
    curve.C = C
    return curve


def calibrated_overlay(sched: StepSchedule, agg: AggregateSeries, k_cal: int = 1000):
    """Overlay whose coefficient makes it meet the aggregate mean at ``k_cal``."""
    p = overlay_exponent(sched, agg.kind)
    C = agg.at(k_cal) * (k_cal + 1.0) ** p
    return bound_overlay(sched, agg.kind, C)


def min_so_far(values) -> np.ndarray:
    """Running minimum of a sequence."""
    return np.minimum.accumulate(np.asarray(values, dtype=float))
