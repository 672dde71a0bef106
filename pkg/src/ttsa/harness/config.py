"""Flat key-value experiment configuration.

One ``key = value`` pair per line; ``#`` starts a comment. Keys live in four
namespaces (``problem``, ``schedule``, ``noise``, ``run``) plus the bare
``problem`` key naming the problem family. List values are comma separated.
See the README for the full key table.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..engine import NOISE_KINDS, NoiseModel
from ..metrics import ALL_KINDS
from ..problems import FAMILIES, PROBLEM_KINDS
from ..schedules import StepSchedule


class ConfigError(ValueError):
    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


# problem parameter -> (type, default) per family
PROBLEM_PARAMS = {
    "linear": {"d": (int, 20), "delta_rank": (int, 5)},
    "minimax": {"d": (int, 5), "x_region_radius": (float, 1e3), "smooth_radius": (float, 2.0)},
    "lagrangian": {"d1": (int, 20), "d2": (int, 5), "n_blocks": (int, 4), "radius": (float, 2.0),
                   "ell_scale": (float, 2.0), "slow_noise": (bool, False)},
    "gradient_variant": {"d": (int, 10), "mu": (float, 0.5)},
}
# applies to every family
COMMON_PROBLEM_PARAMS = {"x0": (list, None), "y0": (list, None)}

SCHEDULE_DEFAULTS = {"alpha": 0.5, "beta": 0.1, "a": 0.55, "b": 0.85, "K1": 100.0}
SCHEDULE_OVERRIDES = {
    "lagrangian": {"beta": 2.0},
    "gradient_variant": {"a": 0.4, "b": 0.6},
}
DEFAULT_NOISE_KIND = {"linear": "linear_perturbation"}

RUN_DEFAULTS = {
    "horizon": (int, 100_000),
    "stride": (int, 100),
    "n_runs": (int, 200),
    "master_seed": (int, 0),
    "workers": (int, 1),
    "variant": (str, None),
    "residuals": (list, None),
    "output_dir": (str, "out"),
    "k_cal": (int, 1000),
}
NOISE_DEFAULTS = {"kind": (str, None), "sigma": (float, 1.0), "sample_entries": (bool, False)}


@dataclass
class ExperimentConfig:
    problem: str
    problem_params: dict
    schedules: list[StepSchedule]
    noise: NoiseModel
    horizon: int
    stride: int
    n_runs: int
    master_seed: int
    kinds: list[str]
    variant: str
    output_dir: str
    workers: int = 1
    k_cal: int = 1000
    source: dict = field(default_factory=dict, repr=False)

    def to_text(self) -> str:
        """Canonical config text; parses back to an equal config."""
        return "\n".join(f"{k} = {v}" for k, v in sorted(self.source.items())) + "\n"


def _parse_scalar(key, raw, typ):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(key, f"expected {typ.__name__}, got {raw!r}") from None


def _split_list(raw):
    return [t.strip() for t in raw.split(",") if t.strip()]


def _read_pairs(text: str) -> dict[str, str]:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            raise ConfigError(key, "duplicate key")
        pairs[key] = value
    return pairs


def _schedule(key, alpha, beta, a, b, K1):
    try:
        return StepSchedule(alpha, beta, a, b, K1)
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and resolve a configuration, applying defaults.

    Raises
    ------
    ConfigError
        On unknown or duplicate keys, missing ``problem``, type mismatches or
        constraint violations; the message names the offending key.
    """
    pairs = _read_pairs(text)
    if "problem" not in pairs:
        raise ConfigError("problem", "missing required key")
    kind = pairs.pop("problem")
    if kind not in PROBLEM_KINDS:
        raise ConfigError("problem", f"unknown problem {kind!r}; expected one of {PROBLEM_KINDS}")
    source = {"problem": kind}

    pspec = {**PROBLEM_PARAMS[kind], **COMMON_PROBLEM_PARAMS}
    params = {name: default for name, (_, default) in pspec.items()}
    sched_vals = {**SCHEDULE_DEFAULTS, **SCHEDULE_OVERRIDES.get(kind, {})}
    sweep = None
    noise_vals = {name: default for name, (_, default) in NOISE_DEFAULTS.items()}
    run_vals = {name: default for name, (_, default) in RUN_DEFAULTS.items()}

    for key, raw in pairs.items():
        ns, _, name = key.partition(".")
        if ns == "problem" and name in pspec:
            typ = pspec[name][0]
            if typ is list:
                params[name] = [_parse_scalar(key, t, float) for t in _split_list(raw)]
            else:
                params[name] = _parse_scalar(key, raw, typ)
        elif ns == "schedule" and name in SCHEDULE_DEFAULTS:
            sched_vals[name] = _parse_scalar(key, raw, float)
        elif ns == "schedule" and name == "sweep":
            sweep = []
            for item in _split_list(raw):
                parts = [_parse_scalar(key, t, float) for t in item.split(":")]
                if len(parts) not in (2, 4):
                    raise ConfigError(key, f"sweep entries are a:b or alpha:beta:a:b, got {item!r}")
                sweep.append(parts)
            if not sweep:
                raise ConfigError(key, "empty sweep")
        elif ns == "noise" and name in NOISE_DEFAULTS:
            noise_vals[name] = _parse_scalar(key, raw, NOISE_DEFAULTS[name][0])
        elif ns == "run" and name in RUN_DEFAULTS:
            typ = RUN_DEFAULTS[name][0]
            run_vals[name] = _split_list(raw) if typ is list else _parse_scalar(key, raw, typ)
        else:
            raise ConfigError(key, "unknown key")
        source[key] = raw

    base = (sched_vals["alpha"], sched_vals["beta"], sched_vals["a"], sched_vals["b"], sched_vals["K1"])
    if sweep is None:
        schedules = [_schedule("schedule", *base)]
    else:
        schedules = []
        for parts in sweep:
            alpha, beta = (parts[0], parts[1]) if len(parts) == 4 else base[:2]
            a, b = parts[-2:]
            schedules.append(_schedule("schedule.sweep", alpha, beta, a, b, base[4]))

    nkind = noise_vals["kind"] or DEFAULT_NOISE_KIND.get(kind, "gaussian_iid")
    if nkind not in NOISE_KINDS:
        raise ConfigError("noise.kind", f"unknown noise kind {nkind!r}")
    if noise_vals["sigma"] < 0:
        raise ConfigError("noise.sigma", "must be non-negative")
    slow_channel = not (kind == "lagrangian" and not params["slow_noise"])
    noise = NoiseModel(nkind, noise_vals["sigma"], True, slow_channel, noise_vals["sample_entries"])

    for key in ("horizon", "stride", "n_runs", "workers", "k_cal"):
        if run_vals[key] < 1:
            raise ConfigError(f"run.{key}", "must be >= 1")
    if run_vals["stride"] > run_vals["horizon"]:
        raise ConfigError("run.stride", "must not exceed run.horizon")
    if not 0 <= run_vals["master_seed"] < 2 ** 64:
        raise ConfigError("run.master_seed", "must be a 64-bit unsigned integer")

    family = FAMILIES[kind]
    variant = run_vals["variant"] or family.default_variant
    if variant not in ("plain", "projected"):
        raise ConfigError("run.variant", f"expected plain or projected, got {variant!r}")
    kinds = run_vals["residuals"] or list(family.default_kinds)
    for k in kinds:
        if k not in ALL_KINDS or k not in family.residual_kinds:
            raise ConfigError("run.residuals", f"residual kind {k!r} not available for {kind}")
    for name in ("d", "d1", "d2", "n_blocks", "delta_rank"):
        if name in params and params[name] < 1:
            raise ConfigError(f"problem.{name}", "must be >= 1")
    if kind == "linear" and params["delta_rank"] > params["d"]:
        raise ConfigError("problem.delta_rank", "must not exceed problem.d")
    if kind == "lagrangian":
        if params["d1"] % params["n_blocks"]:
            raise ConfigError("problem.n_blocks", "must divide problem.d1")
        if params["d2"] > params["d1"]:
            raise ConfigError("problem.d2", "must not exceed problem.d1")
    if kind == "gradient_variant" and not 0 < params["mu"] < 1:
        raise ConfigError("problem.mu", "must lie in (0, 1)")

    return ExperimentConfig(
        problem=kind, problem_params=params, schedules=schedules, noise=noise,
        horizon=run_vals["horizon"], stride=run_vals["stride"], n_runs=run_vals["n_runs"],
        master_seed=run_vals["master_seed"], kinds=kinds, variant=variant,
        output_dir=run_vals["output_dir"], workers=run_vals["workers"],
        k_cal=run_vals["k_cal"], source=source)
