import numpy as np
import pytest
from scipy.optimize import minimize

from ttsa.operators import ball_sampler, contains, probe_lipschitz, project
from ttsa.oracle import finite_diff_grad
from ttsa.problems import (
    ConstructionError, FAMILIES, LagrangianProblem, PROBLEM_KINDS, build_gradient_variant,
    build_lagrangian, build_linear, build_minimax, build_problem, linear_slow_residual,
    problem_from_dict,
)

# -- minimax --------------------------------------------------------------------


def test_minimax_identity_quadratic():
    inst = build_minimax(0, d=2, A=np.eye(2), Q=np.zeros((2, 2)))
    y = np.array([0.3, -1.2])
    np.testing.assert_array_equal(inst.x_star(y), y)
    np.testing.assert_allclose(inst.grad_Phi(y), y)
    np.testing.assert_array_equal(inst.grad_Phi(np.zeros(2)), np.zeros(2))


def _phi_by_inner_max(inst, y):
    res = minimize(lambda x: -inst.H(x, y), np.zeros(inst.dims[0]),
                   jac=lambda x: -(inst.A @ y - x), method="BFGS", options={"gtol": 1e-12})
    return -res.fun


def test_minimax_quartic_gradient_against_inner_max():
    inst = build_minimax(0, d=2, A=np.eye(2), Q=np.eye(2))
    y = np.array([1.0, 0.0])
    np.testing.assert_allclose(inst.grad_Phi(y), [5.0, 0.0], atol=1e-12)
    fd = finite_diff_grad(lambda v: _phi_by_inner_max(inst, v), y, 1e-5)
    np.testing.assert_allclose(fd, [5.0, 0.0], atol=1e-5)


def test_minimax_phi_closed_form_matches_inner_max():
    inst = build_minimax(3)
    y = np.random.default_rng(0).standard_normal(5)
    assert inst.Phi(y) == pytest.approx(_phi_by_inner_max(inst, y), rel=1e-9)


def test_minimax_danskin_identity():
    inst = build_minimax(1)
    rng = np.random.default_rng(2)
    for _ in range(100):
        y = rng.standard_normal(5)
        np.testing.assert_allclose(inst.slow_drift(inst.x_star(y), y), -inst.grad_Phi(y), atol=1e-8)


def test_minimax_oracle_examples():
    inst = build_minimax(2)
    np.testing.assert_array_equal(inst.x_star(np.zeros(5)), np.zeros(5))
    np.testing.assert_array_equal(inst.grad_Phi(np.zeros(5)), np.zeros(5))
    y = np.random.default_rng(3).standard_normal(5)
    assert np.array_equal(inst.x_hat(y), inst.A @ y)


def test_minimax_projected_oracle_outside_region():
    inst = build_minimax(2, x_region_radius=0.5)
    y = np.full(5, 3.0)
    assert np.linalg.norm(inst.A @ y) > 0.5
    xh = inst.x_hat(y)
    assert np.linalg.norm(xh - project(inst.region, xh + inst.fast_drift(xh, y))) <= 1e-10
    assert np.linalg.norm(xh) == pytest.approx(0.5)


def test_minimax_Q_psd():
    for seed in range(5):
        assert np.linalg.eigvalsh(build_minimax(seed).Q).min() >= -1e-10


def test_minimax_gradient_map_nonexpansive_on_smooth_ball():
    inst = build_minimax(4)
    c = inst.constants
    step = 1.0 / (c.L * c.L0)
    fn = lambda y: y - step * inst.grad_Phi(y)  # noqa: E731
    assert probe_lipschitz(fn, ball_sampler(5, inst.smooth_radius), 2000, rng=0) <= 1 + 1e-6


# -- linear ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def lin():
    return build_linear(7)


def test_linear_structure(lin):
    np.testing.assert_allclose(lin.A11, lin.A11.T)
    assert np.linalg.eigvalsh(lin.A11).min() > 0
    np.testing.assert_array_equal(lin.A12, np.eye(20))
    np.testing.assert_array_equal(lin.A21, np.eye(20))
    Delta = lin.A22 - lin.A21 @ np.linalg.solve(lin.A11, lin.A12)
    np.testing.assert_allclose(Delta, lin.Delta, atol=1e-12)
    ev = np.linalg.eigvalsh(0.5 * (lin.Delta + lin.Delta.T))
    assert (-ev).max() <= 1e-10
    assert ev.max() == pytest.approx(1.0)
    assert np.sum(ev > 1e-8) == 5


def test_linear_planted_solution(lin):
    np.testing.assert_allclose(lin.A11 @ lin.x_prime + lin.A12 @ lin.y_prime, lin.b1, atol=1e-8)
    np.testing.assert_allclose(lin.A21 @ lin.x_prime + lin.A22 @ lin.y_prime, lin.b2, atol=1e-8)
    np.testing.assert_allclose(lin.fast_drift(lin.x_prime, lin.y_prime), 0, atol=1e-8)
    np.testing.assert_allclose(lin.slow_drift(lin.x_prime, lin.y_prime), 0, atol=1e-8)


def test_linear_x_star_closed_form(lin):
    y = np.random.default_rng(0).standard_normal(20)
    np.testing.assert_allclose(lin.x_star(y), np.linalg.inv(lin.A11) @ (lin.b1 - lin.A12 @ y), atol=1e-10)


def test_linear_slow_residual_examples(lin):
    np.testing.assert_allclose(linear_slow_residual(lin, lin.y_prime), 0, atol=1e-8)
    w, V = np.linalg.eigh(lin.Delta)
    n = V[:, np.argmin(np.abs(w))]
    assert abs(w).min() < 1e-10
    np.testing.assert_allclose(linear_slow_residual(lin, lin.y_prime + 3 * n), 0, atol=1e-8)
    rng = np.random.default_rng(1)
    A11_inv = np.linalg.inv(lin.A11)
    for _ in range(20):
        y = rng.standard_normal(20)
        direct = lin.A21 @ (A11_inv @ (lin.b1 - lin.A12 @ y)) + lin.A22 @ y - lin.b2
        reduced = lin.Delta @ y - (lin.b2 - lin.A21 @ A11_inv @ lin.b1)
        np.testing.assert_allclose(linear_slow_residual(lin, y), direct, atol=1e-10)
        np.testing.assert_allclose(linear_slow_residual(lin, y), reduced, atol=1e-10)


def test_linear_rejects_bad_rank():
    with pytest.raises(ValueError):
        build_linear(0, d=4, delta_rank=5)


def test_linear_default_noise_is_perturbation(lin):
    assert lin.default_noise().kind == "linear_perturbation"


# -- lagrangian -----------------------------------------------------------------


@pytest.fixture(scope="module")
def lag():
    return build_lagrangian(3)


def test_lagrangian_structure(lag):
    s = np.linalg.svd(lag.A, compute_uv=False)
    assert s[0] == pytest.approx(1.0)
    assert s[-1] >= 0.1
    blocks = np.linalg.norm(lag.x_bar.reshape(4, 5), axis=1)
    assert np.all(blocks <= 1.0 + 1e-12)
    np.testing.assert_allclose(lag.slow_drift(lag.x_bar, np.zeros(5)), 0, atol=1e-14)
    assert lag.region.kind == "block_balls" and lag.region.block_size == 5
    assert contains(lag.region, lag.x0, 1e-12)


def test_lagrangian_gradient_at_ell(lag):
    np.testing.assert_allclose(lag.grad_H0(lag.ell), -np.exp(lag.ell))
    x = np.random.default_rng(0).standard_normal(20)
    np.testing.assert_allclose(finite_diff_grad(lag.H0, x), lag.grad_H0(x), rtol=1e-6)


def test_lagrangian_is_strongly_concave(lag):
    rng = np.random.default_rng(1)
    for _ in range(100):
        x1, x2 = rng.standard_normal((2, 20))
        assert (lag.grad_H0(x1) - lag.grad_H0(x2)) @ (x1 - x2) <= -2.0 * (x1 - x2) @ (x1 - x2) + 1e-12


def test_lagrangian_projected_fixed_point(lag):
    rng = np.random.default_rng(2)
    for _ in range(10):
        lam = rng.standard_normal(5) * 3
        xh = lag.x_hat(lam)
        assert contains(lag.region, xh, 1e-12)
        np.testing.assert_allclose(project(lag.region, xh + lag.fast_drift(xh, lam)), xh, atol=1e-9)
        np.testing.assert_allclose(lag.fast_map(xh, lam) - xh, lag.fast_drift(xh, lam) / lag.constants.L,
                                   atol=1e-15)


def test_lagrangian_multiplier_map_monotone(lag):
    rng = np.random.default_rng(3)
    for _ in range(1000):
        l1, l2 = rng.standard_normal((2, 5)) * 3
        x1, x2 = lag.x_hat(l1), lag.x_hat(l2)
        assert (-lag.A @ x1 + lag.A @ x2) @ (l1 - l2) >= -1e-9


def test_lagrangian_unconstrained_target_newton(lag):
    lam = np.random.default_rng(4).standard_normal(5)
    xs = lag.x_star(lam)
    np.testing.assert_allclose(lag.fast_drift(xs, lam), 0, atol=1e-12)


def test_lagrangian_slow_noise_flag():
    assert not build_lagrangian(0).default_noise().slow
    assert build_lagrangian(0, slow_noise=True).default_noise().slow


def test_lagrangian_construction_errors():
    with pytest.raises(ValueError):
        build_lagrangian(0, d1=20, n_blocks=3)
    with pytest.raises(ValueError):
        build_lagrangian(0, d1=10, d2=12, n_blocks=2)
    with pytest.raises(ConstructionError):
        build_lagrangian(0, d1=20, d2=20, max_redraws=1)


def test_lagrangian_sign_convention():
    inst = build_lagrangian(0)
    x = np.random.default_rng(0).standard_normal(20)
    d = x - inst.ell
    assert inst.H0(x) == pytest.approx(-(d @ d) - np.exp(x).sum())
    assert isinstance(inst, LagrangianProblem)


# -- gradient variant -----------------------------------------------------------


def test_gradient_variant_examples():
    inst = build_gradient_variant(0)
    assert inst.J(np.zeros(10)) == 0.0 == inst.J_min
    np.testing.assert_array_equal(inst.grad_J(np.zeros(10)), 0)
    y = np.zeros(10)
    y[0] = np.pi
    np.testing.assert_allclose(inst.grad_J(y), 0, atol=1e-15)
    assert inst.J(y) == pytest.approx(2.0)


def test_gradient_variant_structure():
    inst = build_gradient_variant(1, mu=0.3)
    rng = np.random.default_rng(0)
    ys = rng.uniform(-20, 20, (10 ** 4, 10))
    assert min(inst.J(y) for y in ys) >= 0.0
    y = ys[0]
    np.testing.assert_array_equal(inst.x_star(y), y)
    # g(x*(y), y) - y = -grad J(y)
    np.testing.assert_allclose(inst.slow_drift(inst.x_star(y), y), -inst.grad_J(y))
    np.testing.assert_allclose(inst.fast_map(y, y), y)
    with pytest.raises(ValueError):
        build_gradient_variant(0, mu=1.0)


# -- shared ---------------------------------------------------------------------


@pytest.mark.parametrize("kind", PROBLEM_KINDS)
def test_fixed_point_map_lipschitz(kind):
    inst = build_problem(kind, 5)
    c = inst.constants
    rng = np.random.default_rng(6)
    d2 = inst.dims[1]
    for _ in range(1000):
        y1, y2 = rng.standard_normal((2, d2)) * 2
        gap = np.linalg.norm(inst.x_star(y1) - inst.x_star(y2))
        assert gap <= c.L0 * np.linalg.norm(y1 - y2) * (1 + 1e-6)


@pytest.mark.parametrize("kind", PROBLEM_KINDS)
def test_fast_map_fixed_point_is_target(kind):
    inst = build_problem(kind, 8)
    y = np.random.default_rng(0).standard_normal(inst.dims[1])
    xs = inst.x_star(y)
    np.testing.assert_allclose(inst.fast_map(xs, y), xs, atol=1e-9)
    np.testing.assert_allclose(inst.fast_drift(xs, y), 0, atol=1e-9)


@pytest.mark.parametrize("kind", PROBLEM_KINDS)
def test_serialization_round_trip(kind):
    inst = build_problem(kind, 9)
    back = problem_from_dict(inst.to_dict())
    assert back.to_dict() == inst.to_dict()
    assert back.constants == inst.constants
    x, y = inst.x0, inst.y0
    np.testing.assert_array_equal(back.fast_drift(x, y), inst.fast_drift(x, y))
    np.testing.assert_array_equal(back.slow_drift(x, y), inst.slow_drift(x, y))


def test_build_problem_overrides_and_determinism():
    a = build_problem("minimax", 3, {"d": 4, "y0": [1.0]})
    b = build_problem("minimax", 3, {"d": 4})
    np.testing.assert_array_equal(a.A, b.A)
    np.testing.assert_array_equal(a.y0, np.ones(4))
    np.testing.assert_array_equal(a.x0, b.x0)
    with pytest.raises(ValueError):
        build_problem("minimax", 3, {"d": 4, "x0": [1.0, 2.0]})
    with pytest.raises(ValueError):
        build_problem("quadratic", 0)
    assert set(FAMILIES) == set(PROBLEM_KINDS)
