import numpy as np
import pytest
from scipy.optimize import brentq

from slope_tradeoff import lower_bound as lb, tradeoff as to
from slope_tradeoff.dists import ProblemShape
from slope_tradeoff.state_evolution import h_alpha

from test_state_evolution import gh_soft_threshold_risk

COARSE = lb.GridConfig.coarse()


@pytest.fixture(scope="module")
def shape():
    return ProblemShape(delta=0.3, epsilon=0.2, sigma2=1.0)


def test_two_point_prior_masses():
    pr = lb.two_point_prior(0.5, 1.0, 0.5, np.inf)
    assert pr is not None
    assert 0 <= pr.p1 <= 1 and abs(pr.p1 + pr.p2 - 1) < 1e-12
    u = pr.p1 * h_alpha(0.5, 1.0) + pr.p2 * 1.0
    assert abs(u - 0.5) < 1e-12
    # infeasible: u above both h values
    assert lb.two_point_prior(0.99, 3.0, 0.1, 0.2) is None


def test_f_alpha_vanishing_signal():
    shape = ProblemShape(delta=0.3, epsilon=1e-12, sigma2=1.0)
    alpha = 0.5
    z = alpha + 0.01 * np.arange(1200)
    pen = lb.DiscretizedPenalty(alpha=alpha, grid=z, values=z.copy())
    prior = lb.TwoPointPrior(t1=1.0, t2=1.0, p1=1.0, p2=0.0)
    assert lb.f_alpha(alpha, pen, prior, shape) < 1e-10


def test_f_alpha_constant_penalty_matches_gauss_hermite(shape):
    # single-point prior, constant effective penalty == separable soft threshold
    alpha, t1 = 1.2, 1.5
    dz = 0.002
    z = alpha + dz * np.arange(int(12 / dz))
    pen = lb.DiscretizedPenalty(alpha=alpha, grid=z, values=np.full(z.size, alpha))
    prior = lb.TwoPointPrior(t1=t1, t2=t1, p1=1.0, p2=0.0)
    got = lb.f_alpha(alpha, pen, prior, shape)
    eps = shape.epsilon
    oracle = (1 - eps) * gh_soft_threshold_risk([0.0], [1.0], 1.0, alpha) + eps * gh_soft_threshold_risk(
        [t1], [1.0], 1.0, alpha
    )
    assert abs(got - oracle) / oracle < 1e-3


def test_d3_f_values(shape):
    udt = to.u_star_dt(shape)
    tstar = to.t_star(udt, shape)
    t1 = brentq(lambda t: h_alpha(t, tstar) - udt, 0, 30, xtol=1e-13)
    assert abs(t1 - 1.34864) < 1e-3
    pen = lb.analytic_penalty_H(t1, 1.0, t1, 0.0, shape)
    assert pen.is_nondecreasing(tstar)
    prior = lb.TwoPointPrior(t1=t1, t2=t1, p1=1.0, p2=0.0)
    e_quad = lb.f_alpha_quad(tstar, lambda z: pen(z, tstar), prior, shape)
    assert abs(e_quad - 0.27727) < 2e-3
    # the discretized functional agrees on a fine grid
    dz = 0.002
    z = tstar + dz * np.arange(int(14 / dz))
    disc = lb.DiscretizedPenalty(alpha=tstar, grid=z, values=pen(z, tstar))
    assert abs(lb.f_alpha(tstar, disc, prior, shape) - e_quad) < 2e-3


def test_min_f_over_penalty_properties(shape):
    alpha, t1 = 1.2, 1.4
    prior = lb.TwoPointPrior(t1=t1, t2=t1, p1=1.0, p2=0.0)
    cfg = lb.GridConfig(dz=0.01)
    value, pen = lb.min_f_over_penalty(alpha, prior, shape, cfg)
    # constraint echo
    assert pen.values[0] >= alpha - 1e-12
    assert np.all(np.diff(pen.values) >= -1e-12)
    # minimum beats the constant (Lasso) penalty on the same grid
    lasso = lb.DiscretizedPenalty(alpha=alpha, grid=pen.grid, values=np.full(pen.grid.size, alpha))
    assert value <= lb.f_alpha(alpha, lasso, prior, shape) + 1e-12
    # Euler-Lagrange agreement where strictly increasing
    analytic = lb.analytic_penalty_H(t1, 1.0, t1, 0.0, shape)
    inner = slice(5, pen.grid.size // 2)
    grow = np.diff(pen.values) > 1e-6
    idx = np.flatnonzero(grow[inner]) + inner.start
    if idx.size:
        dev = np.abs(pen.values[idx] - analytic.neg_dlog_h(pen.grid[idx]))
        assert dev.max() < 5 * cfg.dz


def test_relaxation_ordering(shape, rng):
    alpha = 1.1
    prior = lb.two_point_prior(0.6, alpha, 0.5, np.inf)
    cfg = lb.GridConfig(dz=0.02)
    value, pen = lb.min_f_over_penalty(alpha, prior, shape, cfg)
    for _ in range(20):
        bumps = np.abs(rng.normal(0, 0.4, pen.grid.size))
        vals = alpha + np.cumsum(np.abs(rng.normal(0, 0.02, pen.grid.size))) + bumps[0] * 0
        hand = lb.DiscretizedPenalty(alpha=alpha, grid=pen.grid, values=vals)
        assert value <= lb.f_alpha(alpha, hand, prior, shape) + 1e-10


def test_t_star_lower_dominates_lasso_threshold(shape):
    for u in (0.2, 0.4, 0.55):
        t_lasso = to.t_star(u, shape)
        t_slope = lb.t_star_lower(u, shape, COARSE)
        assert t_slope >= t_lasso - 5e-3


def test_t_star_lower_at_d3_point(shape):
    udt = to.u_star_dt(shape)
    t = lb.t_star_lower(udt, shape, lb.GridConfig(dz=0.02))
    assert t >= 1.2567 - 5e-3


def test_q_lower_d3_and_limits(shape):
    udt = to.u_star_dt(shape)
    ql = lb.q_lower(udt, shape, lb.GridConfig(dz=0.02))
    assert ql <= 0.5954 + 5e-3
    assert lb.q_lower(0.0, shape, COARSE) == 0.0
    # t_star_lower grows as u decreases
    ts = [lb.t_star_lower(u, shape, COARSE) for u in (0.3, 0.15, 0.05)]
    assert np.all(np.diff(ts) > 0)


def test_q_lower_one_supercritical(shape):
    q1 = lb.q_lower(1.0, shape, COARSE)
    assert abs(q1 - (1 - shape.epsilon)) < 5e-3


def test_q_lower_one_subcritical():
    shape = ProblemShape(delta=0.9, epsilon=0.2, sigma2=1.0)
    q1 = lb.q_lower(1.0, shape, COARSE)
    qu = to.q_upper(1.0, shape)
    assert abs(q1 - qu) < 5e-3


def test_grid_refinement_stability(shape):
    cfg_a = lb.GridConfig(dz=0.05, z_pad=8.0, t_points=20)
    cfg_b = lb.GridConfig(dz=0.025, z_pad=16.0, t_points=20)
    for u in (0.15, 0.35, 0.5, 0.7, 0.9):
        ta = lb.t_star_lower(u, shape, cfg_a)
        tb = lb.t_star_lower(u, shape, cfg_b)
        assert abs(ta - tb) < 2e-3


def test_analytic_penalty_noise_limit():
    shape = ProblemShape(delta=0.3, epsilon=1e-9, sigma2=1.0)
    pen = lb.analytic_penalty_H(1.0, 1.0, 1.0, 0.0, shape)
    zs = np.array([2.0, 4.0, 6.0])
    assert np.abs(pen.neg_dlog_h(zs) - zs).max() < 1e-6


def test_analytic_penalty_derivative_self_check(shape):
    pen = lb.analytic_penalty_H(1.34864, 1.0, 1.34864, 0.0, shape)
    zs = np.linspace(1.3, 6.0, 11)
    fd_coarse = (pen.neg_dlog_h(zs + 1e-4) - pen.neg_dlog_h(zs - 1e-4)) / 2e-4
    fd_fine = (pen.neg_dlog_h(zs + 1e-5) - pen.neg_dlog_h(zs - 1e-5)) / 2e-5
    assert np.abs(fd_coarse - fd_fine).max() < 1e-6 * (1 + np.abs(fd_fine).max())


def test_u_dagger(shape):
    ud = lb.u_dagger(shape)
    assert abs(ud - 0.5283) < 2e-3
    assert ud < to.u_star_dt(shape)
    # membership condition holds at the returned point
    a = to.t_star(ud, shape)
    t1 = brentq(lambda t: h_alpha(t, a) - ud, 0, 30, xtol=1e-12)
    pen = lb.analytic_penalty_H(t1, 1.0, t1, 0.0, shape)
    assert pen.is_nondecreasing(a)
    prior = lb.TwoPointPrior(t1=t1, t2=t1, p1=1.0, p2=0.0)
    assert lb.f_alpha_quad(a, lambda z: pen(z, a), prior, shape) <= shape.delta + 1e-6
