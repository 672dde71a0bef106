"""Seeded multi-run execution, CSV/SVG artifacts and run manifests.

Seeding
-------
The problem instance is built from ``SeedSequence(master_seed, spawn_key=(0,))``
and run ``i`` uses ``SeedSequence(master_seed, spawn_key=(1, i))``. Both are
pure functions of ``(master_seed, i)``, so a run's noise stream does not depend
on the schedule, the worker count or the order in which runs finish.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import __version__
from ..engine import run as run_trajectory, sample_indices
from ..metrics import ResidualSeries, aggregate, calibrated_overlay, fit_rate, overlay_exponent, residuals
from ..problems import Problem, build_problem, problem_from_dict
from ..schedules import StepSchedule, validate_gradient_variant, validate_main
from .config import ConfigError, ExperimentConfig, parse_config
from .plotting import plot_csvs, write_csv

MANIFEST_NAME = "manifest.json"
COMPARE_MANIFEST_NAME = "compare_manifest.json"


def instance_seed(master_seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(0,))


def run_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(1, index))


@dataclass
class RunManifest:
    """Everything needed to regenerate a result directory."""

    tool_version: str
    config_text: str
    instance: dict
    validation: list
    seeds: list
    runs: list
    fits: list
    artifacts: dict = field(default_factory=dict)
    kind: str = "execute"

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=1, sort_keys=True, allow_nan=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    def write(self, path) -> None:
        Path(path).write_text(self.to_json())


def schedule_slug(sched: StepSchedule) -> str:
    return (f"alpha{sched.alpha_coeff:g}_beta{sched.beta_coeff:g}"
            f"_a{sched.exp_fast:g}_b{sched.exp_slow:g}")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _single_run(task):
    """Worker entry point: one trajectory and its residual arrays."""
    problem, sched, noise, horizon, stride, master_seed, index, variant, kinds, digest = task
    traj = run_trajectory(problem.drift, sched, noise, horizon, stride,
                          run_seed(master_seed, index), variant,
                          x0=problem.x0, y0=problem.y0, digest_noise=digest)
    out = {"status": traj.status, "message": traj.message, "noise_digest": traj.noise_digest,
           "final_k": int(traj.ks[-1]), "values": None}
    if traj.ok:
        series = residuals(traj, problem, kinds, projected=(variant == "projected"))
        out["values"] = {s.kind: s.values for s in series}
    return out


def run_many(problem: Problem, sched: StepSchedule, config: ExperimentConfig,
             variant: str | None = None, kinds=None, workers: int = 1,
             digest: bool = False) -> list[dict]:
    """Run ``config.n_runs`` seeded trajectories; results are in run-index order."""
    variant = variant or config.variant
    kinds = list(kinds or config.kinds)
    tasks = [(problem, sched, config.noise, config.horizon, config.stride, config.master_seed,
              i, variant, kinds, digest) for i in range(config.n_runs)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            return list(pool.map(_single_run, tasks))
    return [_single_run(t) for t in tasks]


def aggregate_runs(results: list[dict], kinds, ks: np.ndarray) -> dict:
    """Per-kind aggregates; runs that diverged or failed are excluded and counted."""
    bad = [r["values"] is None for r in results]
    nan = np.full(ks.size, np.nan)
    out = {}
    for kind in kinds:
        series = [ResidualSeries(kind, ks, nan if b else r["values"][kind])
                  for r, b in zip(results, bad)]
        out[kind] = aggregate(series, bad)
    return out


def _grid(config: ExperimentConfig) -> np.ndarray:
    return sample_indices(config.horizon, config.stride)


def _validation(problem: Problem, sched: StepSchedule) -> dict:
    c = problem.constants
    return {"schedule": schedule_slug(sched),
            "main": validate_main(sched, c.mu, c.L).as_dict(),
            "gradient_variant": validate_gradient_variant(sched).as_dict()}


def _fits(sched, aggs, config) -> list:
    fits = []
    for kind, agg in aggs.items():
        entry = {"schedule": schedule_slug(sched), "kind": kind,
                 "final_mean": float(agg.mean[-1]), "bound_exponent": overlay_exponent(sched, kind)}
        try:
            entry["overlay_C"] = calibrated_overlay(sched, agg, config.k_cal).C
        except (KeyError, ValueError):
            entry["overlay_C"] = None
        k_lo = min(config.k_cal, config.horizon // 100)
        try:
            slope, _ = fit_rate(agg, max(k_lo, 1), config.horizon)
            entry["fitted_slope"] = slope
        except ValueError:
            entry["fitted_slope"] = None
        fits.append(entry)
    return fits


def load_instance(config: ExperimentConfig) -> Problem:
    return build_problem(config.problem, instance_seed(config.master_seed), config.problem_params)


def execute(config: ExperimentConfig, output_dir=None, workers: int | None = None,
            instance: Problem | None = None) -> RunManifest:
    """Run every schedule of ``config`` and write CSVs, SVGs and the manifest.

    Parameters
    ----------
    output_dir : path, optional
        Overrides ``config.output_dir``.
    workers : int, optional
        Overrides ``config.workers``; results do not depend on it.
    instance : Problem, optional
        Use this instance instead of building one from the master seed
        (used when re-running from a manifest).
    """
    out = Path(output_dir if output_dir is not None else config.output_dir)
    workers = config.workers if workers is None else workers
    # construction errors abort here, before any run starts
    problem = instance if instance is not None else load_instance(config)
    out.mkdir(parents=True, exist_ok=True)
    ks = _grid(config)
    sweep = len(config.schedules) > 1

    validation, runs, fits, csvs = [], [], [], {kind: [] for kind in config.kinds}
    for sched in config.schedules:
        validation.append(_validation(problem, sched))
        results = run_many(problem, sched, config, workers=workers)
        aggs = aggregate_runs(results, config.kinds, ks)
        slug = schedule_slug(sched)
        for kind, agg in aggs.items():
            path = out / (f"{kind}__{slug}.csv" if sweep else f"{kind}.csv")
            write_csv(path, agg)
            csvs[kind].append((slug, path))
        runs.append({"schedule": slug,
                     "n_diverged": sum(r["values"] is None for r in results),
                     "statuses": [r["status"] for r in results]})
        fits.extend(_fits(sched, aggs, config))

    svgs = []
    for kind, curves in csvs.items():
        overlays = {}
        if not sweep:
            overlays[curves[0][0]] = (overlay_exponent(config.schedules[0], kind), config.k_cal)
        svg = plot_csvs(curves, out / f"{kind}.svg", title=f"{config.problem}: {kind}",
                        ylabel=f"{kind} residual", overlays=overlays)
        svgs.append(svg)

    artifacts = {p.name: _sha256(p) for _, ps in csvs.items() for _, p in ps}
    artifacts.update({p.name: _sha256(p) for p in svgs})
    manifest = RunManifest(
        tool_version=__version__, config_text=config.to_text(), instance=problem.to_dict(),
        validation=validation,
        seeds=[{"run": i, "entropy": config.master_seed, "spawn_key": [1, i]}
               for i in range(config.n_runs)],
        runs=runs, fits=fits, artifacts=dict(sorted(artifacts.items())))
    manifest.write(out / MANIFEST_NAME)
    return manifest


def execute_manifest(path, output_dir=None, workers: int | None = None) -> RunManifest:
    """Re-run a stored manifest; CSVs come out byte-identical to the originals."""
    manifest = RunManifest.from_json(Path(path).read_text())
    config = parse_config(manifest.config_text)
    problem = problem_from_dict(manifest.instance)
    if manifest.kind == "compare":
        return compare_projection(config, output_dir, workers, instance=problem)
    return execute(config, output_dir, workers, instance=problem)


def compare_projection(config: ExperimentConfig, output_dir=None, workers: int | None = None,
                       instance: Problem | None = None) -> RunManifest:
    """Run the projected and plain variants on identical seeds (Lagrangian only).

    Writes ``feasibility__projected.csv``, ``feasibility__plain.csv``, an
    overlaid ``feasibility_compare.svg`` and a manifest recording per-run
    noise-stream digests for both variants and the final-residual comparison.
    """
    if config.problem != "lagrangian":
        raise ConfigError("problem", "compare-projection needs problem = lagrangian")
    out = Path(output_dir if output_dir is not None else config.output_dir)
    workers = config.workers if workers is None else workers
    problem = instance if instance is not None else load_instance(config)
    out.mkdir(parents=True, exist_ok=True)
    ks = _grid(config)
    sched = config.schedules[0]

    kind = "feasibility"
    curves, finals, digests, runs = [], {}, {}, []
    for variant in ("projected", "plain"):
        results = run_many(problem, sched, config, variant=variant, kinds=[kind],
                           workers=workers, digest=True)
        agg = aggregate_runs(results, [kind], ks)[kind]
        path = out / f"{kind}__{variant}.csv"
        write_csv(path, agg)
        curves.append((variant, path))
        finals[variant] = {"initial_mean": float(agg.mean[0]), "final_mean": float(agg.mean[-1])}
        digests[variant] = [r["noise_digest"] for r in results]
        runs.append({"schedule": schedule_slug(sched), "variant": variant,
                     "n_diverged": sum(r["values"] is None for r in results),
                     "statuses": [r["status"] for r in results]})
    svg = plot_csvs(curves, out / f"{kind}_compare.svg",
                    title="projected vs plain fast iterate", ylabel="|A x - b0|^2")

    same_noise = [a == b for a, b in zip(digests["projected"], digests["plain"])]
    comparison = {
        "plain_final_le_projected": finals["plain"]["final_mean"] <= finals["projected"]["final_mean"],
        "identical_noise_streams": all(same_noise),
        **{f"{v}_{key}": val for v, d in finals.items() for key, val in d.items()},
    }
    fits = [{"comparison": comparison,
             "noise_digests": [{"run": i, "projected": p, "plain": q}
                               for i, (p, q) in enumerate(zip(digests["projected"], digests["plain"]))]}]
    artifacts = {p.name: _sha256(p) for _, p in curves}
    artifacts[svg.name] = _sha256(svg)
    manifest = RunManifest(
        tool_version=__version__, config_text=config.to_text(), instance=problem.to_dict(),
        validation=[_validation(problem, sched)],
        seeds=[{"run": i, "entropy": config.master_seed, "spawn_key": [1, i]}
               for i in range(config.n_runs)],
        runs=runs, fits=fits, artifacts=dict(sorted(artifacts.items())), kind="compare")
    manifest.write(out / COMPARE_MANIFEST_NAME)
    return manifest
