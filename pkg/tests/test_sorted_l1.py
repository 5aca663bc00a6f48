import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from slope_tradeoff.errors import DimensionMismatchError, DomainError
from slope_tradeoff.sorted_l1 import (
    effective_penalty,
    prox,
    soft_threshold,
    sorted_l1_norm,
    unique_nonzero_magnitudes,
)

from conftest import random_penalty


def test_norm_examples():
    assert sorted_l1_norm([0, 0, 0], [3, 2, 1]) == 0.0
    assert sorted_l1_norm([1, -2], [3, 1]) == 7.0
    # direct sum 12*20 + 10*13 + 5*10 + 5*6 + 5*4
    assert sorted_l1_norm([20, 13, 10, 6, 4], [12, 10, 5, 5, 5]) == 470.0


def test_prox_golden_examples():
    assert_array_equal(prox([20, 13, 10, 6, 4], [12, 10, 5, 5, 5]), [8, 4, 4, 1, 0])
    assert_array_equal(prox([6, 5, 3, 2, 1], [5, 2, 2, 2, 2]), [2, 2, 1, 0, 0])
    assert_array_equal(prox([3, 5, -6], [5, 2, 2]), [1, 2, -2])


def test_soft_threshold_examples():
    assert_array_equal(soft_threshold([2, -0.5], 1.0), [1, 0])
    assert_array_equal(soft_threshold([0, 0], 5.0), [0, 0])
    assert_array_equal(soft_threshold([3, 5, -6], 2.0), [1, 3, -4])
    with pytest.raises(DomainError):
        soft_threshold([1.0], -0.1)


def test_unique_nonzero_magnitudes():
    assert unique_nonzero_magnitudes([2, -1, 1, 0]) == 2
    assert unique_nonzero_magnitudes([0, 0, 0]) == 0
    assert unique_nonzero_magnitudes([8, 4, 4, 1, 0]) == 3


def test_effective_penalty_examples():
    # constant penalty reduces to the Lasso level on surviving entries
    v = np.array([5.0, -3.0, 0.5])
    ah = effective_penalty(v, [2.0, 2.0, 2.0])
    assert ah[0] == 2.0 and ah[1] == 2.0 and ah[2] == 0.5
    assert_array_equal(effective_penalty([6, 5, 3, 2, 1], [5, 2, 2, 2, 2]), [4, 3, 2, 2, 1])


def test_effective_penalty_reproduces_prox(rng):
    for _ in range(200):
        p = int(rng.integers(1, 9))
        v = rng.normal(0, 3, p)
        theta = random_penalty(rng, p)
        ah = effective_penalty(v, theta)
        direct = np.sign(v) * np.maximum(np.abs(v) - ah, 0.0)
        assert_allclose(direct, prox(v, theta), atol=1e-12)


def test_effective_penalty_monotone(rng):
    for _ in range(100):
        p = int(rng.integers(2, 12))
        v = np.sort(np.abs(rng.normal(0, 3, p)))[::-1]
        ah = effective_penalty(v, random_penalty(rng, p))
        assert np.all(np.diff(ah) <= 1e-12)


def test_prox_nonexpansive(rng):
    for _ in range(300):
        p = int(rng.integers(1, 30))
        theta = random_penalty(rng, p)
        v, w = rng.normal(0, 2, p), rng.normal(0, 2, p)
        lhs = np.linalg.norm(prox(v, theta) - prox(w, theta))
        assert lhs <= np.linalg.norm(v - w) + 1e-10


def test_prox_sign_and_magnitude(rng):
    for _ in range(200):
        p = int(rng.integers(1, 20))
        v = rng.normal(0, 2, p)
        out = prox(v, random_penalty(rng, p))
        assert np.all(np.abs(out) <= np.abs(v) + 1e-12)
        nz = out != 0
        assert np.all(np.sign(out[nz]) == np.sign(v[nz]))
        # magnitude order is preserved
        order = np.argsort(-np.abs(v), kind="stable")
        assert np.all(np.diff(np.abs(out[order])) <= 1e-12)


def test_constant_penalty_is_soft_threshold(rng):
    for _ in range(100):
        p = int(rng.integers(1, 25))
        c = float(rng.uniform(0.01, 2))
        v = rng.normal(0, 2, p)
        assert_array_equal(prox(v, np.full(p, c)), soft_threshold(v, c))


def test_prox_objective_against_cvxpy(rng):
    cp = pytest.importorskip("cvxpy")
    for _ in range(12):
        p = int(rng.integers(2, 7))
        v = rng.normal(0, 2, p)
        theta = random_penalty(rng, p)
        b = cp.Variable(p)
        # sorted-l1 via telescoped sums of the k largest magnitudes
        pen = 0
        for k in range(p):
            step = theta[k] - (theta[k + 1] if k + 1 < p else 0.0)
            if step > 0:
                pen += step * cp.sum_largest(cp.abs(b), k + 1)
        prob = cp.Problem(cp.Minimize(0.5 * cp.sum_squares(v - b) + pen))
        prob.solve()
        ours = prox(v, theta)
        obj_ours = 0.5 * np.sum((v - ours) ** 2) + sorted_l1_norm(ours, theta)
        assert obj_ours <= prob.value + 1e-6


def test_dimension_and_domain_errors():
    with pytest.raises(DimensionMismatchError):
        prox([1, 2], [1, 1, 1])
    with pytest.raises(DomainError):
        prox([1, 2], [1, 2])  # increasing penalty
    with pytest.raises(DomainError):
        prox([1, 2], [1, -1])
    with pytest.raises(DimensionMismatchError):
        sorted_l1_norm([1], [1, 1])
