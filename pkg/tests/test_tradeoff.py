import numpy as np
import pytest
from numpy.testing import assert_allclose

from slope_tradeoff import tradeoff as to
from slope_tradeoff.dists import ProblemShape
from slope_tradeoff.errors import DomainError
from slope_tradeoff.normal import Phi, phi
from slope_tradeoff.tradeoff import TradeoffPoint

SUPERCRITICAL_PAIRS = [
    (0.3, 0.2), (0.3, 0.5), (0.5, 0.4), (0.25, 0.1), (0.4, 0.7),
    (0.6, 0.5), (0.1, 0.1), (0.7, 0.9), (0.15, 0.3), (0.8, 0.75),
]


def test_epsilon_star_constants():
    assert abs(to.epsilon_star(0.3) - 0.087) < 1e-3
    assert abs(to.epsilon_star(0.5) - 0.1928) < 1e-3
    assert to.epsilon_star(1.0) == 1.0
    assert to.epsilon_star(2.0) == 1.0
    # delta -> 1-: the parametric map at small s gives (delta, eps*) -> (1, 1)
    s_small = 1e-3
    d_small = float(to._delta_of_s(s_small))
    assert d_small > 0.998
    assert abs(to.epsilon_star(d_small) - to._eps_star_of_s(s_small)) < 1e-9


def test_u_star_dt_constants():
    assert abs(to.u_star_dt(ProblemShape(0.3, 0.2)) - 0.5676) < 1e-3
    assert abs(to.u_star_dt(ProblemShape(0.4, 0.7)) - 0.4401) < 1e-3
    assert abs(to.u_star_dt(ProblemShape(0.3, 0.5)) - 0.3669) < 1e-3
    # subcritical: power limit is one
    assert to.u_star_dt(ProblemShape(0.9, 0.2)) == 1.0
    assert to.u_star_dt(ProblemShape(1.5, 0.5)) == 1.0


def test_t_star_value_and_residual():
    shape = ProblemShape(0.3, 0.2)
    udt = to.u_star_dt(shape)
    t = to.t_star(udt, shape)
    assert abs(t - 1.19241) < 1e-3
    for u in (0.1, 0.3, 0.5, udt):
        x = to.t_star(u, shape)
        assert abs(to._t_star_gap(x, u, shape.delta, shape.epsilon)) < 1e-8


def test_t_star_diverges_as_u_to_zero():
    shape = ProblemShape(0.3, 0.2)
    ts = [to.t_star(u, shape) for u in (0.2, 0.1, 0.05, 0.01)]
    assert np.all(np.diff(ts) > 0)
    assert ts[-1] > 2.5


def test_q_upper_endpoints():
    for d, e in SUPERCRITICAL_PAIRS:
        shape = ProblemShape(d, e)
        assert abs(to.q_upper(1.0, shape) - (1.0 - e)) < 1e-12
    assert to.q_upper(0.0, ProblemShape(0.3, 0.2)) == 0.0


def test_q_upper_value_at_power_limit():
    shape = ProblemShape(0.3, 0.2)
    udt = to.u_star_dt(shape)
    assert abs(to.q_upper(udt, shape) - 0.62160) < 1e-3


def test_q_upper_continuity_at_power_limit():
    for d, e in SUPERCRITICAL_PAIRS:
        shape = ProblemShape(d, e)
        udt = to.u_star_dt(shape)
        left = to.q_lasso(udt, shape)
        es = to.epsilon_star(d)
        right = to._q_mobius(udt, e, es)
        assert abs(left - right) < 1e-6


def test_q_upper_monotone_on_mobius_branch():
    for d, e in [(0.3, 0.2), (0.3, 0.5), (0.5, 0.4)]:
        shape = ProblemShape(d, e)
        udt = to.u_star_dt(shape)
        us = np.linspace(udt, 1.0, 40)
        qs = [to.q_upper(float(u), shape) for u in us]
        assert np.all(np.diff(qs) >= -1e-12)
        assert np.all((np.array(qs) >= 0) & (np.array(qs) <= 1 - e + 1e-12))


def test_epsilon_star_unique_root_property():
    # at eps = eps*(delta) the threshold equation grazes delta: min residual ~ 0
    for d in (0.3, 0.5, 0.7):
        es = to.epsilon_star(d)
        xs = np.linspace(0.05, 6, 20001)
        g = 2 * (1 - es) * ((1 + xs**2) * Phi(-xs) - xs * phi(xs)) + es * (1 + xs**2) - d
        assert abs(g.min()) < 1e-6


def test_mobius_construction_boundary_and_fig8():
    shape = ProblemShape(0.3, 0.2)
    udt = to.u_star_dt(shape)
    c = to.mobius_construction(udt, shape)
    assert abs(c.r - 1.0) < 1e-6
    c = to.mobius_construction(0.8176, shape)
    assert abs(c.r - 0.3500) < 1e-3
    assert abs(c.w - 0.4819) < 1e-3
    es = to.epsilon_star(shape.delta)
    for u in np.linspace(udt, 1.0, 25):
        cc = to.mobius_construction(float(u), shape)
        assert cc.w > es
    with pytest.raises(DomainError):
        to.mobius_construction(0.3, shape)


def test_classify_region():
    shape = ProblemShape(0.3, 0.2)

    def q_lower(u):
        return 0.9 * to.q_upper(u, shape)

    assert to.classify_region(TradeoffPoint(0.9, 0.9), shape, q_lower) == "slope_only"
    assert to.classify_region(TradeoffPoint(0.3, 0.9), shape, q_lower) == "lasso_and_slope"
    u = 0.5
    qu = to.q_upper(u, shape)
    assert to.classify_region(TradeoffPoint(u, 0.5 * q_lower(u)), shape, q_lower) == "unachievable"
    assert (
        to.classify_region(TradeoffPoint(u, 0.5 * (q_lower(u) + qu)), shape, q_lower)
        == "between_bounds"
    )
