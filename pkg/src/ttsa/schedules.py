"""Power-law step sizes for the coupled iteration and their validity checks.

The fast and slow step sizes are

    alpha_k = alpha / (k + K1)**a,    beta_k = beta / (k + K1)**b

and every admissibility condition on them is evaluated as a predicate that
reports, never raises.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class StepSchedule:
    """Parameters ``(alpha, beta, a, b, K1)`` of the two step-size sequences."""

    alpha_coeff: float = 0.5
    beta_coeff: float = 0.1
    exp_fast: float = 0.55
    exp_slow: float = 0.85
    offset: float = 100.0

    def __post_init__(self):
        if not (self.alpha_coeff > 0 and self.beta_coeff > 0):
            raise ValueError("step coefficients must be positive")
        for name in ("exp_fast", "exp_slow"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not self.offset > 0:
            raise ValueError(f"offset must be positive, got {self.offset}")

    def alpha_at(self, k: int) -> float:
        return self.alpha_coeff / (k + self.offset) ** self.exp_fast

    def beta_at(self, k: int) -> float:
        return self.beta_coeff / (k + self.offset) ** self.exp_slow

    def label(self) -> str:
        return (f"alpha={self.alpha_coeff:g} beta={self.beta_coeff:g} "
                f"a={self.exp_fast:g} b={self.exp_slow:g}")


def step_at(sched: StepSchedule, k: int) -> tuple[float, float]:
    """Return ``(alpha_k, beta_k)`` for iteration index ``k >= 0``."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return sched.alpha_at(k), sched.beta_at(k)


@dataclass(frozen=True)
class Check:
    name: str
    satisfied: bool
    value: float
    threshold: float


@dataclass
class ValidationReport:
    checks: list[Check] = field(default_factory=list)
    gamma1: float | None = None
    gamma2: float | None = None
    # first k from which the finite-time bounds apply when K1 < gamma2
    first_valid_index: int | None = None

    @property
    def overall(self) -> bool:
        return all(c.satisfied for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.satisfied]

    def as_dict(self) -> dict:
        return {
            "overall": self.overall,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "first_valid_index": self.first_valid_index,
            "checks": [
                {"name": c.name, "satisfied": c.satisfied,
                 "value": c.value, "threshold": c.threshold}
                for c in self.checks
            ],
        }

    def format(self) -> str:
        lines = []
        for c in self.checks:
            mark = "ok  " if c.satisfied else "FAIL"
            lines.append(f"  [{mark}] {c.name:<32s} value={c.value:.6g} "
                         f"threshold={c.threshold:.6g}")
        if self.gamma1 is not None:
            lines.append(f"  gamma1={self.gamma1:.6g} gamma2={self.gamma2:.6g} "
                         f"first_valid_index={self.first_valid_index}")
        lines.append(f"  overall: {'valid' if self.overall else 'INVALID'}")
        return "\n".join(lines)


# exponent combinations this close to zero are decimal boundary cases such as
# a=0.4, b=0.6 where 3a - 2b rounds to 2e-16
_EXP_TOL = 1e-12


def _snap(e: float) -> float:
    return 0.0 if abs(e) <= _EXP_TOL else e


def _le(name, value, threshold):
    return Check(name, bool(value <= threshold), float(value), float(threshold))


def _lt(name, value, threshold):
    return Check(name, bool(value < threshold), float(value), float(threshold))


def sup_ratio(sched: StepSchedule) -> float:
    """Closed-form ``sup_k beta_k**2 / alpha_k**3``.

    The ratio equals ``(beta**2/alpha**3) (k+K1)**(3a-2b)``; it is maximised at
    k = 0 when ``2b >= 3a`` and is unbounded otherwise.
    """
    a, b = sched.exp_fast, sched.exp_slow
    e = _snap(3 * a - 2 * b)
    if e > 0:
        return math.inf
    return (sched.beta_coeff ** 2 / sched.alpha_coeff ** 3) * sched.offset ** e


def gamma1(mu: float, L: float) -> float:
    return (1 - mu) / (2 * L ** 2)


def gamma2(sched: StepSchedule, mu: float) -> float:
    a, b = sched.exp_fast, sched.exp_slow
    t1 = (2 * a / (mu * sched.alpha_coeff)) ** (1 / (1 - a))
    t2 = (2 * b / sched.beta_coeff) ** (1 / (1 - b))
    return max(t1, t2)


def validate_main(sched: StepSchedule, mu: float, L: float) -> ValidationReport:
    """Check the step sizes against the conditions of the main finite-time bound.

    Parameters
    ----------
    sched : StepSchedule
    mu : float
        Contraction factor of the fast map, in (0, 1).
    L : float
        Joint Lipschitz constant of the fast and slow maps.
    """
    a, b = sched.exp_fast, sched.exp_slow
    g1 = gamma1(mu, L)
    g2 = gamma2(sched, mu)
    checks = [
        Check("a > 0.5", a > 0.5, a, 0.5),
        _lt("a < b", a, b),
        _lt("b < 1", b, 1.0),
        _le("alpha <= 0.5", sched.alpha_coeff, 0.5),
        _le("beta <= 0.5", sched.beta_coeff, 0.5),
        Check("K1 >= 1", sched.offset >= 1, sched.offset, 1.0),
        _le("sup beta_k^2/alpha_k^3 <= 1", sup_ratio(sched), 1.0),
        _le("beta/alpha <= gamma1", sched.beta_coeff / sched.alpha_coeff, g1),
        Check("K1 >= gamma2", sched.offset >= g2, sched.offset, g2),
    ]
    first = 0 if sched.offset >= g2 else _first_index(g2 - sched.offset)
    return ValidationReport(checks=checks, gamma1=g1, gamma2=g2, first_valid_index=first)


def _first_index(gap: float) -> int | None:
    if not math.isfinite(gap):
        return None
    # huge gamma2 values overflow int conversion only when inf; keep exact ints otherwise
    return int(math.ceil(gap))


def validate_gradient_variant(sched: StepSchedule) -> ValidationReport:
    """Check the step sizes against the gradient-variant conditions.

    Square-summability of ``alpha_k`` is not required here, so ``a`` may lie
    below 0.5; instead ``alpha_k beta_k <= alpha beta / (k + K1)`` must hold,
    which for the power family reduces to ``a + b >= 1``.
    """
    a, b = sched.exp_fast, sched.exp_slow
    e = _snap(1 - a - b)
    prod = sched.offset ** e if e <= 0 else math.inf
    checks = [
        _lt("a < b", a, b),
        _lt("b < 1", b, 1.0),
        Check("b > 0.5", b > 0.5, b, 0.5),
        _le("sup beta_k^2/alpha_k^3 <= 1", sup_ratio(sched), 1.0),
        _le("alpha_k beta_k <= alpha beta/(k+K1)", prod, 1.0),
    ]
    return ValidationReport(checks=checks)


def theoretical_exponents(sched: StepSchedule) -> tuple[float, float]:
    """Predicted decay exponents ``(a, 1 - b)`` of the fast and slow residuals."""
    return sched.exp_fast, 1.0 - sched.exp_slow
