"""Application instances of the coupled iteration.

Each problem bundles its drift fields, declared operator constants, the
region used by the projected variant, a default initial point and analytic
oracles for the fast fixed point ``x*(y)`` (unconstrained) and ``x_hat(y)``
(projected).
"""

from __future__ import annotations

import math

import numpy as np

from . import oracle
from .engine import NoiseModel
from .operators import DriftPair, OperatorConstants, ProjectionRegion, project

PROBLEM_KINDS = ("minimax", "linear", "lagrangian", "gradient_variant")


def _arr(v):
    return np.asarray(v, dtype=float)


class Problem:
    """Common surface of the application instances."""

    kind = ""
    default_variant = "plain"
    default_kinds: tuple[str, ...] = ("fast", "slow")
    residual_kinds: tuple[str, ...] = ("fast", "slow", "shadow")

    x0: np.ndarray
    y0: np.ndarray
    constants: OperatorConstants
    region: ProjectionRegion

    @property
    def dims(self) -> tuple[int, int]:
        return self.x0.size, self.y0.size

    @property
    def drift(self) -> DriftPair:
        return DriftPair(self.fast_drift, self.slow_drift, self.dims, self.constants, self.region)

    def default_noise(self, sigma: float = 1.0) -> NoiseModel:
        return NoiseModel("gaussian_iid", sigma)

    def fast_drift(self, x, y):
        raise NotImplementedError

    def slow_drift(self, x, y):
        raise NotImplementedError

    def fast_map(self, x, y):
        """Contractive map whose fixed point in ``x`` is the fast target."""
        raise NotImplementedError

    def x_star(self, y, x_init=None) -> np.ndarray:
        raise NotImplementedError

    def x_hat(self, y, x_init=None) -> np.ndarray:
        """Projected fixed point; ``nan`` entries signal oracle non-convergence."""
        if self.region.kind == "all_space":
            return self.x_star(y, x_init)
        x_init = self.x_star(y) if x_init is None else x_init
        res = oracle.projected_picard(self.fast_map, self.region, y, x_init)
        return res.point if res.converged else np.full(self.dims[0], np.nan)

    def target(self, y, projected: bool, x_init=None) -> np.ndarray:
        return self.x_hat(y, x_init) if projected else self.x_star(y, x_init)

    def targets(self, ys, projected: bool) -> np.ndarray:
        """Fast targets along a sequence of slow iterates, warm-starting each solve."""
        out = np.empty((len(ys), self.dims[0]))
        warm = None
        for i, y in enumerate(ys):
            out[i] = self.target(y, projected, warm)
            if np.all(np.isfinite(out[i])):
                warm = out[i]
        return out

    def residual(self, kind: str, x, y, U, xt) -> float:
        """Squared residual ``kind`` at iterate ``(x, y, U)`` with fast target ``xt``."""
        if kind == "fast":
            d = x - xt
        elif kind == "slow":
            d = self.slow_drift(xt, y)
        elif kind == "shadow":
            d = U
        else:
            raise ValueError(f"residual kind {kind!r} not available for {self.kind}")
        return float(d @ d)

    def to_dict(self) -> dict:
        raise NotImplementedError


# -- minimax -----------------------------------------------------------------

class MinimaxProblem(Problem):
    """Saddle problem ``H(x, y) = x'Ay - |x|^2/2 + (y'Qy)^2``.

    The fast drift is the ascent direction ``grad_x H = Ay - x`` and the slow
    drift the descent direction ``-grad_y H``. ``smooth_radius`` is the radius
    of the ball in ``y`` on which the declared smoothness constant holds (the
    quartic term is not globally smooth).
    """

    kind = "minimax"
    default_variant = "projected"
    default_kinds = ("fast", "grad_Phi", "shadow")
    residual_kinds = ("fast", "slow", "grad_Phi", "shadow")

    def __init__(self, A, Q, x_region_radius=1e3, x0=None, y0=None, smooth_radius=2.0):
        self.A = _arr(A)
        self.Q = _arr(Q)
        d = self.A.shape[0]
        self.x_region_radius = float(x_region_radius)
        self.smooth_radius = float(smooth_radius)
        self.region = ProjectionRegion.ball(np.zeros(d), self.x_region_radius)
        self.x0 = np.zeros(d) if x0 is None else _arr(x0)
        self.y0 = np.zeros(self.A.shape[1]) if y0 is None else _arr(y0)
        lam_q = max(float(np.linalg.eigvalsh(self.Q).max()), 0.0)
        norm_a = float(np.linalg.norm(self.A, 2))
        L = max(1.0, 12 * lam_q ** 2 * self.smooth_radius ** 2) + norm_a
        rho = 1.0
        mu = math.sqrt(1 - rho ** 2 / L ** 2)
        L0 = L / (1 - mu)
        self.constants = OperatorConstants(mu=mu, L=L, rho=rho, cocoercivity=1 / (2 * L * L0))

    def H(self, x, y):
        q = y @ self.Q @ y
        return x @ self.A @ y - 0.5 * x @ x + q * q

    def fast_drift(self, x, y):
        return self.A @ y - x

    def slow_drift(self, x, y):
        qy = self.Q @ y
        return -(self.A.T @ x + (4 * (y @ qy)) * qy)

    def fast_map(self, x, y):
        # x + grad_x H(x, y): contraction factor 0 in x
        return self.A @ y

    def x_star(self, y, x_init=None):
        return self.A @ y

    def x_hat(self, y, x_init=None):
        u = self.A @ y
        if np.linalg.norm(u) <= self.x_region_radius:
            return u
        res = oracle.projected_picard(self.fast_map, self.region, y,
                                      u if x_init is None else x_init)
        return res.point if res.converged else np.full(u.size, np.nan)

    def grad_Phi(self, y, projected: bool = True, x_init=None):
        """Gradient of ``Phi(y) = max_x H(x, y)`` via the maximiser."""
        xt = self.target(y, projected, x_init)
        qy = self.Q @ y
        return self.A.T @ xt + (4 * (y @ qy)) * qy

    def Phi(self, y):
        """Unconstrained ``max_x H(x, y)`` in closed form."""
        ay = self.A @ y
        q = y @ self.Q @ y
        return 0.5 * ay @ ay + q * q

    def residual(self, kind, x, y, U, xt):
        if kind == "grad_Phi":
            qy = self.Q @ y
            g = self.A.T @ xt + (4 * (y @ qy)) * qy
            return float(g @ g)
        return super().residual(kind, x, y, U, xt)

    def to_dict(self):
        return {"kind": self.kind, "A": self.A.tolist(), "Q": self.Q.tolist(),
                "x_region_radius": self.x_region_radius, "smooth_radius": self.smooth_radius,
                "x0": self.x0.tolist(), "y0": self.y0.tolist()}


def build_minimax(seed, d: int = 5, x_region_radius: float = 1e3, *, A=None, Q=None,
                  smooth_radius: float = 2.0) -> MinimaxProblem:
    """Random minimax instance: Gaussian ``A``, ``Q = V V' / d`` with Gaussian ``V``.

    ``A`` or ``Q`` may be forced. The initial point is drawn from the same
    stream after the matrices.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    A_rand = rng.standard_normal((d, d))
    V = rng.standard_normal((d, d))
    A = A_rand if A is None else _arr(A)
    Q = V @ V.T / d if Q is None else _arr(Q)
    Q = 0.5 * (Q + Q.T)
    x0 = rng.standard_normal(d)
    y0 = rng.standard_normal(d)
    return MinimaxProblem(A, Q, x_region_radius, x0, y0, smooth_radius)


# -- linear ------------------------------------------------------------------

class LinearProblem(Problem):
    """Coupled linear system ``A11 x + A12 y = b1``, ``A21 x + A22 y = b2``."""

    kind = "linear"
    default_kinds = ("fast", "slow", "linear_slow", "shadow")
    residual_kinds = ("fast", "slow", "linear_slow", "shadow")

    def __init__(self, A11, A12, A21, A22, b1, b2, x_prime, y_prime, x0=None, y0=None):
        self.A11, self.A12, self.A21, self.A22 = map(_arr, (A11, A12, A21, A22))
        self.b1, self.b2 = _arr(b1), _arr(b2)
        self.x_prime, self.y_prime = _arr(x_prime), _arr(y_prime)
        self.region = ProjectionRegion.all_space()
        self.x0 = np.zeros(self.b1.size) if x0 is None else _arr(x0)
        self.y0 = np.zeros(self.b2.size) if y0 is None else _arr(y0)
        self.Delta = self.A22 - self.A21 @ np.linalg.solve(self.A11, self.A12)

        ev = np.linalg.eigvalsh(0.5 * (self.A11 + self.A11.T))
        lmin, lmax = float(ev[0]), float(ev[-1])
        self._fast_gain = lmin / lmax ** 2
        mu = math.sqrt(1 - lmin ** 2 / lmax ** 2)
        lam_delta = float(np.linalg.eigvalsh(0.5 * (self.Delta + self.Delta.T))[-1])
        slow_gain = 2 / lam_delta
        d2 = self.b2.size
        Lx = mu + slow_gain * np.linalg.norm(self.A21, 2)
        Ly = (self._fast_gain * np.linalg.norm(self.A12, 2)
              + np.linalg.norm(np.eye(d2) - slow_gain * self.A22, 2))
        self.constants = OperatorConstants(mu=mu, L=float(max(Lx, Ly)), rho=lmin,
                                           cocoercivity=1 / lam_delta)

    def default_noise(self, sigma: float = 1.0) -> NoiseModel:
        return NoiseModel("linear_perturbation", sigma)

    def fast_drift(self, x, y):
        return self.b1 - self.A11 @ x - self.A12 @ y

    def slow_drift(self, x, y):
        return self.b2 - self.A21 @ x - self.A22 @ y

    def fast_map(self, x, y):
        return x - self._fast_gain * (self.A11 @ x + self.A12 @ y - self.b1)

    def x_star(self, y, x_init=None):
        return np.linalg.solve(self.A11, self.b1 - self.A12 @ y)

    def residual(self, kind, x, y, U, xt):
        if kind == "linear_slow":
            r = self.A21 @ x + self.A22 @ y - self.b2
            return float(r @ r)
        return super().residual(kind, x, y, U, xt)

    def to_dict(self):
        return {"kind": self.kind, **{k: getattr(self, k).tolist() for k in (
            "A11", "A12", "A21", "A22", "b1", "b2", "x_prime", "y_prime", "x0", "y0")}}


def build_linear(seed, d: int = 20, delta_rank: int = 5) -> LinearProblem:
    """Random linear instance with a rank-deficient PSD Schur complement.

    ``A11 = R D R'`` with random orthogonal ``R`` and ``D`` uniform on [1, 2];
    ``Delta = W W'`` of rank ``delta_rank`` normalised to unit top eigenvalue;
    ``A12 = A21 = I`` and ``A22 = A11^{-1} + Delta``. The right-hand sides are
    planted from a random solution ``(x', y')``.
    """
    if not 1 <= delta_rank <= d:
        raise ValueError("delta_rank must lie in [1, d]")
    rng = np.random.default_rng(seed)
    R, _ = np.linalg.qr(rng.standard_normal((d, d)))
    D = rng.uniform(1.0, 2.0, size=d)
    A11 = (R * D) @ R.T
    A11 = 0.5 * (A11 + A11.T)
    W = rng.standard_normal((d, delta_rank))
    Delta = W @ W.T
    Delta = 0.5 * (Delta + Delta.T)
    Delta /= np.linalg.eigvalsh(Delta)[-1]
    I = np.eye(d)
    A11_inv = np.linalg.inv(A11)
    A22 = 0.5 * (A11_inv + A11_inv.T) + Delta
    x_p = rng.standard_normal(d)
    y_p = rng.standard_normal(d)
    b1 = A11 @ x_p + y_p
    b2 = x_p + A22 @ y_p
    x0 = rng.standard_normal(d)
    y0 = rng.standard_normal(d)
    return LinearProblem(A11, I, I.copy(), A22, b1, b2, x_p, y_p, x0, y0)


def linear_slow_residual(inst: LinearProblem, y) -> np.ndarray:
    """Slow-equation residual ``A21 x*(y) + A22 y - b2`` at the fast fixed point."""
    y = _arr(y)
    return inst.A21 @ inst.x_star(y) + inst.A22 @ y - inst.b2


# -- lagrangian --------------------------------------------------------------

class LagrangianProblem(Problem):
    """Maximise a strongly concave ``H0`` over block balls subject to ``Ax = b0``.

    ``H0(x) = -|x - ell|^2 - sum(exp(x))``; the multiplier update carries no
    injected noise unless ``slow_noise`` is set.
    """

    kind = "lagrangian"
    default_variant = "projected"
    default_kinds = ("fast", "slow", "feasibility")
    residual_kinds = ("fast", "slow", "feasibility", "shadow")

    def __init__(self, ell, A, b0, x_bar, block_size=5, radius=2.0, x0=None, y0=None,
                 slow_noise=False):
        self.ell, self.A, self.b0, self.x_bar = map(_arr, (ell, A, b0, x_bar))
        self.block_size = int(block_size)
        self.radius = float(radius)
        self.slow_noise = bool(slow_noise)
        d1, d2 = self.ell.size, self.b0.size
        self.region = ProjectionRegion.block_balls(self.block_size, self.radius, d1)
        self.x0 = np.zeros(d1) if x0 is None else _arr(x0)
        self.y0 = np.zeros(d2) if y0 is None else _arr(y0)
        rho = 2.0
        L = 2.0 + math.exp(self.radius)
        self._step = 1.0 / L
        self.constants = OperatorConstants(
            mu=math.sqrt(1 - rho ** 2 / L ** 2), L=L, rho=rho,
            cocoercivity=rho / float(np.linalg.norm(self.A, 2)) ** 2)

    def default_noise(self, sigma: float = 1.0) -> NoiseModel:
        return NoiseModel("gaussian_iid", sigma, slow=self.slow_noise)

    def H0(self, x):
        d = x - self.ell
        return -(d @ d) - np.exp(x).sum()

    def grad_H0(self, x):
        with np.errstate(over="ignore"):
            return -2.0 * (x - self.ell) - np.exp(x)

    def fast_drift(self, x, y):
        return self.grad_H0(x) - self.A.T @ y

    def slow_drift(self, x, y):
        return self.A @ x - self.b0

    def fast_map(self, x, y):
        # gradient step of length 1/L; contractive on the feasible region
        return x + self._step * self.fast_drift(x, y)

    def x_star(self, y, x_init=None):
        # separable: -2(x_i - ell_i) - exp(x_i) = (A'y)_i, solved by Newton
        c = self.A.T @ y
        t = 2 * self.ell - c
        x = np.minimum(0.5 * t, np.log1p(np.abs(t)))
        for _ in range(200):
            e = np.exp(x)
            phi = t - 2 * x - e
            step = phi / (2 + e)
            x = x + step
            if np.max(np.abs(step)) <= 1e-15 * (1 + np.max(np.abs(x))):
                break
        return x

    def residual(self, kind, x, y, U, xt):
        if kind == "feasibility":
            r = self.A @ x - self.b0
            return float(r @ r)
        return super().residual(kind, x, y, U, xt)

    def to_dict(self):
        return {"kind": self.kind, "ell": self.ell.tolist(), "A": self.A.tolist(),
                "b0": self.b0.tolist(), "x_bar": self.x_bar.tolist(),
                "block_size": self.block_size, "radius": self.radius,
                "x0": self.x0.tolist(), "y0": self.y0.tolist(), "slow_noise": self.slow_noise}


class ConstructionError(RuntimeError):
    pass


def build_lagrangian(seed, d1: int = 20, d2: int = 5, n_blocks: int = 4, radius: float = 2.0,
                     *, ell_scale: float = 2.0, slow_noise: bool = False,
                     max_redraws: int = 100) -> LagrangianProblem:
    """Random Lagrangian instance with a stored Slater witness.

    ``A`` is Gaussian ``d2 x d1`` scaled to unit spectral norm and redrawn until
    its smallest singular value is at least 0.1. The witness has every block
    norm at most ``radius / 2`` and fixes ``b0 = A x_bar``. The start ``x0``
    is a Gaussian draw projected onto the region.
    """
    if d1 % n_blocks:
        raise ValueError("d1 must be divisible by n_blocks")
    if d2 > d1:
        raise ValueError("d2 must not exceed d1")
    rng = np.random.default_rng(seed)
    for _ in range(max_redraws):
        A = rng.standard_normal((d2, d1))
        s = np.linalg.svd(A, compute_uv=False)
        A /= s[0]
        if s[-1] / s[0] >= 0.1:
            break
    else:
        raise ConstructionError(f"no well-conditioned constraint matrix in {max_redraws} draws")
    block = d1 // n_blocks
    dirs = rng.standard_normal((n_blocks, block))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = 0.5 * radius * rng.random(n_blocks) ** (1.0 / block)
    x_bar = (dirs * radii[:, None]).ravel()
    b0 = A @ x_bar
    ell = ell_scale * rng.standard_normal(d1)
    # start feasible so every projected iterate, including x0, lies in the region
    x0 = project(ProjectionRegion.block_balls(block, radius, d1), rng.standard_normal(d1))
    y0 = rng.standard_normal(d2)
    return LagrangianProblem(ell, A, b0, x_bar, block, radius, x0, y0, slow_noise)


# -- gradient variant --------------------------------------------------------

class GradientVariantProblem(Problem):
    """Slow iterate performs noisy gradient descent on ``J(y) = sum(1 - cos y)``.

    The fast map is ``f(x, y) = mu x + (1 - mu) y`` so ``x*(y) = y``, and the
    slow map is ``g(x, y) = y - sin(x)``.
    """

    kind = "gradient_variant"
    default_kinds = ("fast", "grad_J")
    residual_kinds = ("fast", "slow", "grad_J", "shadow")
    J_min = 0.0

    def __init__(self, mu, x0, y0):
        if not 0 < mu < 1:
            raise ValueError("mu must lie in (0, 1)")
        self.mu = float(mu)
        self.x0, self.y0 = _arr(x0), _arr(y0)
        self.region = ProjectionRegion.all_space()
        self.constants = OperatorConstants(mu=self.mu, L=max(1 + self.mu, 2 - self.mu))

    def J(self, y):
        return float(np.sum(1.0 - np.cos(y)))

    def grad_J(self, y):
        return np.sin(y)

    def fast_drift(self, x, y):
        return (1.0 - self.mu) * (y - x)

    def slow_drift(self, x, y):
        return -np.sin(x)

    def fast_map(self, x, y):
        return self.mu * x + (1.0 - self.mu) * y

    def x_star(self, y, x_init=None):
        return np.array(y, dtype=float)

    def residual(self, kind, x, y, U, xt):
        if kind == "grad_J":
            g = np.sin(y)
            return float(g @ g)
        return super().residual(kind, x, y, U, xt)

    def to_dict(self):
        return {"kind": self.kind, "mu": self.mu, "x0": self.x0.tolist(), "y0": self.y0.tolist()}


def build_gradient_variant(seed, d: int = 10, mu: float = 0.5) -> GradientVariantProblem:
    if not 0 < mu < 1:
        raise ValueError("mu must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal(d)
    y0 = rng.standard_normal(d)
    return GradientVariantProblem(mu, x0, y0)


def problem_from_dict(d: dict) -> Problem:
    """Rebuild a problem from :meth:`Problem.to_dict` output."""
    d = dict(d)
    kind = d.pop("kind")
    if kind == "minimax":
        return MinimaxProblem(**d)
    if kind == "linear":
        return LinearProblem(**d)
    if kind == "lagrangian":
        return LagrangianProblem(**d)
    if kind == "gradient_variant":
        return GradientVariantProblem(**d)
    raise ValueError(f"unknown problem kind {kind!r}")


FAMILIES = {
    "minimax": MinimaxProblem,
    "linear": LinearProblem,
    "lagrangian": LagrangianProblem,
    "gradient_variant": GradientVariantProblem,
}
_BUILDERS = {
    "minimax": build_minimax,
    "linear": build_linear,
    "lagrangian": build_lagrangian,
    "gradient_variant": build_gradient_variant,
}


def _initial(values, dim, name):
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 1:
        return np.full(dim, v[0])
    if v.size != dim:
        raise ValueError(f"{name} has {v.size} entries, expected 1 or {dim}")
    return v


def build_problem(kind: str, seed, params: dict | None = None) -> Problem:
    """Build a problem family by name; ``x0``/``y0`` in ``params`` override the drawn start."""
    params = dict(params or {})
    x0 = params.pop("x0", None)
    y0 = params.pop("y0", None)
    try:
        builder = _BUILDERS[kind]
    except KeyError:
        raise ValueError(f"unknown problem kind {kind!r}") from None
    prob = builder(seed, **params)
    if x0 is not None:
        prob.x0 = _initial(x0, prob.dims[0], "x0")
    if y0 is not None:
        prob.y0 = _initial(y0, prob.dims[1], "y0")
    return prob
