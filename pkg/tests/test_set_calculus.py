"""Set-calculus tests against brute-force vertex-enumeration oracles."""

import itertools

import numpy as np
import pytest
from scipy.optimize import minimize

from subdiff_lab.set_calculus import (ConvexBody, DimensionMismatch,
                                      body_vertices, convex_hull, deviation,
                                      dist_point_to_body, hausdorff,
                                      hausdorff_support, minkowski_sum,
                                      support)


# -- oracles --------------------------------------------------------------

def _oracle_dist_to_hull(p, V):
    """Distance from p to conv(rows of V) via SLSQP over the simplex."""
    V = np.atleast_2d(V)
    k = V.shape[0]
    if k == 1:
        return float(np.linalg.norm(p - V[0]))

    def f(lam):
        return float(np.sum((V.T @ lam - p) ** 2))

    cons = [{"type": "eq", "fun": lambda lam: np.sum(lam) - 1.0}]
    best = np.inf
    for i in range(k):
        lam0 = np.zeros(k)
        lam0[i] = 1.0
        res = minimize(f, lam0, method="SLSQP", constraints=cons,
                       bounds=[(0.0, 1.0)] * k,
                       options={"maxiter": 200, "ftol": 1e-14})
        best = min(best, res.fun)
    return float(np.sqrt(max(best, 0.0)))


def _enumerate_points(body):
    """All candidate extreme points of a body, by brute enumeration."""
    if body.kind == "zonotope":
        k = body.generators.shape[0]
        pts = [body.center + signs @ body.generators
               for signs in itertools.product([-1.0, 1.0], repeat=k)]
        return np.array(pts)
    return body_vertices(body)


def _oracle_deviation(A, B):
    VB = _enumerate_points(B)
    return max(_oracle_dist_to_hull(p, VB) for p in _enumerate_points(A))


def _random_body(rng, d, kind):
    if kind == "vpoly":
        n = rng.integers(2, 7)
        return ConvexBody.vpolytope(rng.normal(size=(n, d)))
    k = rng.integers(1, 5)
    return ConvexBody.zonotope(rng.normal(size=d), rng.normal(size=(k, d)))


# -- support function -----------------------------------------------------

def test_support_matches_vertex_max():
    rng = np.random.default_rng(11)
    for _ in range(40):
        d = int(rng.integers(2, 4))
        body = _random_body(rng, d, rng.choice(["vpoly", "zono"]))
        u = rng.normal(size=d)
        pts = _enumerate_points(body)
        assert support(body, u) == pytest.approx(np.max(pts @ u), abs=1e-10)


def test_support_interval_and_point():
    assert support(ConvexBody.interval(-1.0, 3.0), [2.0]) == pytest.approx(6.0)
    assert support(ConvexBody.interval(-1.0, 3.0), [-1.0]) == pytest.approx(1.0)
    assert support(ConvexBody.point([1.0, -2.0]), [3.0, 1.0]) == pytest.approx(1.0)


# -- point-to-body distance -----------------------------------------------

def test_dist_point_to_body_against_slsqp_oracle():
    rng = np.random.default_rng(7)
    for _ in range(30):
        d = int(rng.integers(2, 4))
        body = _random_body(rng, d, rng.choice(["vpoly", "zono"]))
        p = rng.normal(size=d) * 2.0
        want = _oracle_dist_to_hull(p, _enumerate_points(body))
        assert dist_point_to_body(p, body) == pytest.approx(want, abs=1e-6)


def test_dist_inside_is_zero():
    Z = ConvexBody.zonotope([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])
    assert dist_point_to_body([0.3, -0.4], Z) == pytest.approx(0.0, abs=1e-10)


# -- deviation / Hausdorff ------------------------------------------------

def test_deviation_against_bruteforce():
    rng = np.random.default_rng(23)
    for _ in range(25):
        d = int(rng.integers(2, 4))
        A = _random_body(rng, d, rng.choice(["vpoly", "zono"]))
        B = _random_body(rng, d, rng.choice(["vpoly", "zono"]))
        assert deviation(A, B) == pytest.approx(_oracle_deviation(A, B),
                                                abs=1e-6)


def test_hausdorff_symmetry_and_identity():
    rng = np.random.default_rng(5)
    for _ in range(20):
        d = int(rng.integers(2, 4))
        A = _random_body(rng, d, rng.choice(["vpoly", "zono"]))
        B = _random_body(rng, d, rng.choice(["vpoly", "zono"]))
        assert hausdorff(A, B) == pytest.approx(hausdorff(B, A), abs=1e-9)
        assert hausdorff(A, A) == pytest.approx(0.0, abs=1e-9)


def test_hausdorff_intervals_closed_form():
    A = ConvexBody.interval(-1.0, 1.0)
    B = ConvexBody.interval(0.0, 3.0)
    # max(|lo difference|, |hi difference|)
    assert hausdorff(A, B) == pytest.approx(2.0, abs=1e-12)


def test_hausdorff_support_route_agrees():
    rng = np.random.default_rng(41)
    for _ in range(15):
        d = int(rng.integers(2, 4))
        A = _random_body(rng, d, "zono")
        B = _random_body(rng, d, "zono")
        hv = hausdorff(A, B)
        hs = hausdorff_support(A, B, seed=3)
        # the support route lower-bounds the true value and should be close
        assert hs <= hv + 1e-9
        assert hs == pytest.approx(hv, rel=0.05, abs=1e-6)


# -- Minkowski sum --------------------------------------------------------

def test_minkowski_sum_of_zonotopes_exact():
    rng = np.random.default_rng(2)
    A = ConvexBody.zonotope(rng.normal(size=2), rng.normal(size=(2, 2)))
    B = ConvexBody.zonotope(rng.normal(size=2), rng.normal(size=(3, 2)))
    S = minkowski_sum(A, B)
    u = rng.normal(size=2)
    assert support(S, u) == pytest.approx(support(A, u) + support(B, u),
                                          abs=1e-10)


def test_minkowski_contraction():
    # H(A+C, B+C) <= H(A, B) for zonotope summands
    rng = np.random.default_rng(19)
    for _ in range(20):
        A = _random_body(rng, 2, "zono")
        B = _random_body(rng, 2, "zono")
        C = _random_body(rng, 2, "zono")
        h0 = hausdorff(A, B)
        h1 = hausdorff(minkowski_sum(A, C), minkowski_sum(B, C))
        assert h1 <= h0 + 1e-9


def test_hull_contraction():
    # H(conv(A u X), conv(B u X)) <= H(conv A, conv B)
    rng = np.random.default_rng(31)
    for _ in range(20):
        PA = rng.normal(size=(4, 2))
        PB = rng.normal(size=(4, 2))
        X = rng.normal(size=(3, 2))
        h0 = hausdorff(convex_hull(PA), convex_hull(PB))
        h1 = hausdorff(convex_hull(np.vstack([PA, X])),
                       convex_hull(np.vstack([PB, X])))
        assert h1 <= h0 + 1e-9


# -- construction / validation --------------------------------------------

def test_dimension_mismatch_raises():
    with pytest.raises(DimensionMismatch):
        hausdorff(ConvexBody.point([0.0, 0.0]), ConvexBody.point([0.0]))


def test_degenerate_interval_is_interval():
    body = ConvexBody.interval(2.0, 2.0)
    assert body.kind == "interval"
    assert dist_point_to_body([5.0], body) == pytest.approx(3.0)


def test_bad_interval_raises():
    with pytest.raises(ValueError):
        ConvexBody.interval(1.0, 0.0)
