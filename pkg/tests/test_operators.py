import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from ttsa.operators import (
    OperatorConstants, ProjectionRegion, ball_sampler, contains, contractive_from_strongly_monotone,
    nonexpansive_from_cocoercive, probe_cocoercivity, probe_lipschitz, project,
)


def test_L0_definition():
    c = OperatorConstants(mu=0.75, L=3.0)
    assert c.L0 == 3.0 / (1 - 0.75)


# -- monotone-to-contractive transforms ---------------------------------------

def test_identity_strongly_monotone_gives_zero_map():
    q = contractive_from_strongly_monotone(lambda x: x, 1.0, 1.0)
    assert q.factor == 0.0
    x = np.array([1.5, -2.0, 3.0])
    np.testing.assert_array_equal(q(x), np.zeros(3))


def test_diagonal_strongly_monotone_contraction():
    D = np.diag([1.0, 4.0])
    q = contractive_from_strongly_monotone(lambda x: D @ x, 1.0, 4.0)
    np.testing.assert_allclose(q(np.array([1.0, 1.0])), [15 / 16, 12 / 16])
    ratio = probe_lipschitz(q, ball_sampler(2), 10 ** 4, rng=0)
    # operator norm of diag(15/16, 12/16), computed independently
    opnorm = np.linalg.norm(np.eye(2) - D / 16, 2)
    assert opnorm == pytest.approx(0.9375)
    assert ratio <= opnorm + 1e-12
    assert ratio > 0.93
    assert ratio <= q.factor + 1e-9
    assert q.factor == pytest.approx(math.sqrt(1 - 1 / 16))


def test_constant_map_is_rejected():
    with pytest.raises(ValueError):
        contractive_from_strongly_monotone(lambda x: np.ones_like(x), 0.0, 1.0)


def test_modulus_above_lipschitz_is_rejected():
    with pytest.raises(ValueError):
        contractive_from_strongly_monotone(lambda x: x, 2.0, 1.0)


def test_reflection_is_nonexpansive():
    q = nonexpansive_from_cocoercive(lambda x: x, 1.0)
    rng = np.random.default_rng(1)
    for _ in range(100):
        x1, x2 = rng.standard_normal((2, 4))
        np.testing.assert_allclose(q(x1), -x1)
        assert np.linalg.norm(q(x1) - q(x2)) == pytest.approx(np.linalg.norm(x1 - x2), rel=1e-14)


def test_zero_operator_gives_identity():
    q = nonexpansive_from_cocoercive(lambda x: np.zeros_like(x), 0.3)
    x = np.array([1.0, -2.0])
    np.testing.assert_array_equal(q(x), x)


def _random_psd(rng, d, rank):
    W = rng.standard_normal((d, rank))
    return W @ W.T


def test_psd_cocoercive_transform_nonexpansive():
    rng = np.random.default_rng(2)
    Delta = _random_psd(rng, 6, 3)
    lam_max = np.linalg.eigvalsh(Delta).max()
    q = nonexpansive_from_cocoercive(lambda x: Delta @ x, 1.0 / lam_max)
    assert probe_lipschitz(q, ball_sampler(6), 10 ** 4, rng=3) <= 1 + 1e-12
    # eigenvalues of I - 2 Delta / lam_max lie in [-1, 1]
    ev = np.linalg.eigvalsh(np.eye(6) - 2 * Delta / lam_max)
    assert ev.min() >= -1 - 1e-12 and ev.max() <= 1 + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2 ** 31))
def test_strongly_monotone_quadratic_bound(d, seed):
    rng = np.random.default_rng(seed)
    R, _ = np.linalg.qr(rng.standard_normal((d, d)))
    ev = rng.uniform(0.5, 3.0, d)
    H = R @ np.diag(ev) @ R.T
    c, ell = ev.min(), ev.max()
    q = contractive_from_strongly_monotone(lambda x: H @ x, c, ell)
    assert probe_lipschitz(q, ball_sampler(d), 500, rng=seed) <= math.sqrt(1 - c ** 2 / ell ** 2) + 1e-9


# -- projections ----------------------------------------------------------------

def test_ball_projection_scales_outside_point():
    r = ProjectionRegion.ball(np.zeros(5), 2.0)
    np.testing.assert_allclose(project(r, [3, 0, 0, 0, 0]), [2, 0, 0, 0, 0])
    np.testing.assert_array_equal(project(r, [1, 0, 0, 0, 0]), [1, 0, 0, 0, 0])


def test_box_clamps():
    r = ProjectionRegion.box([-2.0], [2.0])
    assert project(r, [2.8])[0] == 2.0
    assert project(r, [-5.0])[0] == -2.0


def test_block_projection_matches_generic_solver():
    r = ProjectionRegion.block_balls(5, 2.0, 20)
    rng = np.random.default_rng(4)
    p = rng.standard_normal(20)
    for j in range(4):
        blk = p[5 * j:5 * j + 5]
        p[5 * j:5 * j + 5] = blk / np.linalg.norm(blk) * (4.0 if j == 2 else 1.0)
    out = project(r, p)
    expected = p.copy()
    expected[10:15] /= 2
    np.testing.assert_allclose(out, expected, atol=1e-14)

    cons = [{"type": "ineq", "fun": (lambda z, j=j: 4.0 - z[5 * j:5 * j + 5] @ z[5 * j:5 * j + 5])}
            for j in range(4)]
    res = minimize(lambda z: 0.5 * (z - p) @ (z - p), np.zeros(20), jac=lambda z: z - p,
                   constraints=cons, method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    assert res.success
    np.testing.assert_allclose(out, res.x, atol=1e-6)


def test_projection_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        project(ProjectionRegion.ball(np.zeros(3), 1.0), np.ones(4))
    with pytest.raises(ValueError):
        project(ProjectionRegion.block_balls(5, 1.0, 20), np.ones(15))


REGIONS = [
    ProjectionRegion.ball(np.full(4, 0.5), 1.5),
    ProjectionRegion.box([-1, -2, 0, 0], [1, 2, 0.5, 3]),
    ProjectionRegion.block_balls(2, 1.0, 4),
    ProjectionRegion.all_space(),
]


@pytest.mark.parametrize("region", REGIONS, ids=lambda r: r.kind)
def test_projection_idempotent_and_feasible(region):
    rng = np.random.default_rng(5)
    P = rng.standard_normal((10 ** 4, 4)) * 5
    for p in P:
        once = project(region, p)
        assert contains(region, once, 1e-12)
        np.testing.assert_allclose(project(region, once), once, atol=1e-12)


def test_ball_projection_is_nearest_point():
    rng = np.random.default_rng(6)
    r = ProjectionRegion.ball(np.zeros(3), 2.0)
    inside = ball_sampler(3, 2.0)
    for _ in range(20):
        p = rng.standard_normal(3) * 4
        d0 = np.linalg.norm(p - project(r, p))
        qs = np.array([inside(rng) for _ in range(1000)])
        assert np.all(np.linalg.norm(p - qs, axis=1) >= d0 - 1e-12)


@pytest.mark.parametrize("region", REGIONS, ids=lambda r: r.kind)
def test_region_round_trip(region):
    back = ProjectionRegion.from_dict(region.to_dict())
    p = np.array([3.0, -3.0, 0.2, 5.0])
    np.testing.assert_array_equal(project(back, p), project(region, p))


# -- probes ---------------------------------------------------------------------

def test_probe_identity_and_scaling():
    s = ball_sampler(3)
    assert probe_lipschitz(lambda x: x, s, 200, rng=0) == pytest.approx(1.0, abs=1e-15)
    assert probe_lipschitz(lambda x: 0.5 * x, s, 200, rng=0) == pytest.approx(0.5, abs=1e-12)


def test_probe_linear_map_approaches_spectral_norm():
    A = np.random.default_rng(7).standard_normal((5, 5))
    top = np.linalg.svd(A, compute_uv=False)[0]
    s = ball_sampler(5)
    small = probe_lipschitz(lambda x: A @ x, s, 100, rng=1)
    large = probe_lipschitz(lambda x: A @ x, s, 20000, rng=1)
    assert small <= large <= top + 1e-12
    assert large > 0.9 * top


def test_probe_rejects_zero_pairs():
    with pytest.raises(ValueError):
        probe_lipschitz(lambda x: x, ball_sampler(2), 0)
    with pytest.raises(ValueError):
        probe_cocoercivity(lambda x: x, ball_sampler(2), 0)


def test_probe_resamples_degenerate_pairs():
    seq = iter([np.zeros(2), np.zeros(2), np.zeros(2), np.ones(2)])
    assert probe_lipschitz(lambda x: 2 * x, lambda rng: next(seq), 1) == pytest.approx(2.0)


def test_cocoercivity_probe():
    s = ball_sampler(4)
    assert probe_cocoercivity(lambda x: x, s, 100, rng=0) == pytest.approx(1.0)
    assert math.isnan(probe_cocoercivity(lambda x: np.zeros_like(x), s, 100, rng=0))


def test_identity_minus_nonexpansive_is_half_cocoercive():
    rng = np.random.default_rng(8)
    R, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    D = np.diag([1.0, -1.0, 0.3, -0.7])
    Qm = R @ D @ R.T  # symmetric with spectrum in [-1, 1]
    fn = lambda y: y - Qm @ y  # noqa: E731
    assert probe_cocoercivity(fn, ball_sampler(4), 5000, rng=9) >= 0.5 - 1e-9
