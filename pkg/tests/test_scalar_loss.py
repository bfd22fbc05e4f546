"""Tests for the smooth-plus-kinks scalar loss representation."""

import numpy as np
import pytest

from subdiff_lab.scalar_loss import (KinkSpec, ScalarConvexLoss, abs_loss,
                                     decompose_check, hinge_loss, loss_eval,
                                     pinball_loss, selection_g, square_loss,
                                     subdiff_interval, zeta)


def test_abs_loss_values():
    h = abs_loss()
    for z in [-2.5, -1.0, 0.0, 0.3, 4.0]:
        assert loss_eval(h, z) == pytest.approx(abs(z), abs=1e-12)


def test_hinge_and_pinball_values():
    hi = hinge_loss()
    pb = pinball_loss(0.3)
    for z in np.linspace(-2, 2, 21):
        assert loss_eval(hi, z) == pytest.approx(max(z, 0.0), abs=1e-12)
        want = 0.3 * z if z >= 0 else (0.3 - 1.0) * z
        assert loss_eval(pb, z) == pytest.approx(want, abs=1e-12)


def test_subdiff_interval_at_and_off_kinks():
    h = abs_loss()
    at0 = subdiff_interval(h, 0.0)
    assert (at0.lo, at0.hi) == (-1.0, 1.0)
    left = subdiff_interval(h, -0.5)
    assert (left.lo, left.hi) == (-1.0, -1.0)
    right = subdiff_interval(h, 0.5)
    assert (right.lo, right.hi) == (1.0, 1.0)


def test_selection_is_right_continuous_upper_endpoint():
    # the canonical selection picks the right derivative at every kink
    for h in [abs_loss(), hinge_loss(), pinball_loss(0.7)]:
        for k in h.kinks:
            assert selection_g(h, k.location) == pytest.approx(
                subdiff_interval(h, k.location).hi, abs=1e-12)


def test_selection_matches_derivative_off_kinks():
    rng = np.random.default_rng(3)
    h = pinball_loss(0.45)
    for z in rng.normal(size=30):
        if abs(z) < 1e-8:
            continue
        eps = 1e-7
        fd = (loss_eval(h, z + eps) - loss_eval(h, z - eps)) / (2 * eps)
        assert selection_g(h, z) == pytest.approx(fd, abs=1e-6)


def test_zeta_values():
    assert zeta(abs_loss()) == pytest.approx(3.0)
    assert zeta(hinge_loss()) == pytest.approx(2.0)
    assert zeta(square_loss()) == pytest.approx(1.0)


def test_scaled_loss():
    h = abs_loss().scaled(2.5)
    assert loss_eval(h, -2.0) == pytest.approx(5.0)
    assert zeta(h) == pytest.approx(1.0 + 5.0)
    with pytest.raises(ValueError):
        abs_loss().scaled(-1.0)


def test_decompose_check_clean_split():
    grid = np.linspace(-3, 3, 61)
    rep = decompose_check(abs_loss(), grid, reference=abs)
    assert rep.ok
    assert rep.max_residual < 1e-10


def test_decompose_check_flags_bad_reference():
    grid = np.linspace(-3, 3, 61)
    rep = decompose_check(abs_loss(), grid, reference=lambda z: abs(z) + 0.1)
    assert not rep.ok


def test_kink_validation():
    with pytest.raises(ValueError):
        KinkSpec(0.0, -1.0)
    with pytest.raises(ValueError):
        ScalarConvexLoss(kinks=(KinkSpec(0.0, 1.0), KinkSpec(0.0, 1.0)),
                         smooth_value=lambda z: 0.0,
                         smooth_deriv=lambda z: 0.0)


def test_convexity_of_builtin_losses_on_grid():
    # midpoint convexity sampled on a grid
    zs = np.linspace(-3, 3, 41)
    for h in [abs_loss(), hinge_loss(), pinball_loss(0.2), square_loss()]:
        vals = np.array([loss_eval(h, z) for z in zs])
        mid = 0.5 * (vals[:-2] + vals[2:])
        assert np.all(vals[1:-1] <= mid + 1e-12)
