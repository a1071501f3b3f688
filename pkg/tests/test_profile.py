"""Implicit profile solve, derivative recurrence, decay certificate, rescaling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shocklab.core import make_grid
from shocklab.profile import (
    ORIGIN_JET,
    BurgersProfile,
    RescaledProfile,
    make_profile_frame,
    profile_decay_certificate,
    profile_deriv,
    profile_eval,
    profile_jet,
    rescaled_eval,
    w1_closed_form,
)

P2 = BurgersProfile()


# ---------------------------------------------------------------------------
# implicit solve


def test_eval_known_points():
    assert profile_eval(P2, 0.0) == 0.0
    assert profile_eval(P2, -2.0) == pytest.approx(1.0, abs=1e-14)
    assert profile_eval(P2, 2.0) == pytest.approx(-1.0, abs=1e-14)


def test_eval_residual_random_large_range():
    rng = np.random.default_rng(20260816)
    xs = rng.uniform(-1e6, 1e6, size=10_000)
    W = profile_eval(P2, xs)
    resid = np.abs(xs + W + W**5)
    assert np.max(resid / np.maximum(1.0, np.abs(xs))) <= 1e-12
    # absolute form where float64 can represent it at all
    small = np.abs(xs) < 100.0
    if np.any(small):
        assert np.max(resid[small]) <= 1e-12


def test_eval_odd_symmetry():
    xs = np.geomspace(1e-8, 1e6, 300)
    np.testing.assert_allclose(profile_eval(P2, -xs), -profile_eval(P2, xs), atol=1e-12)


def test_eval_strictly_decreasing():
    xs = np.linspace(-50, 50, 2001)
    W = profile_eval(P2, xs)
    assert np.all(np.diff(W) < 0)


def test_eval_rejects_nonfinite():
    with pytest.raises(ValueError, match="finite"):
        profile_eval(P2, np.array([0.0, np.nan]))


def test_index_1_matches_closed_form():
    p1 = BurgersProfile(index_i=1)
    xs = np.linspace(-30, 30, 501)
    np.testing.assert_allclose(profile_eval(p1, xs), w1_closed_form(xs), atol=2e-13)


def test_bad_profile_args():
    with pytest.raises(ValueError, match="index_i"):
        BurgersProfile(index_i=0)
    with pytest.raises(ValueError, match="root_tol"):
        BurgersProfile(root_tol=0.0)


# ---------------------------------------------------------------------------
# derivatives


def test_origin_jet():
    for n, want in enumerate(ORIGIN_JET[:6]):
        assert profile_deriv(P2, 0.0, n) == pytest.approx(want, abs=1e-10), n


def test_slope_at_minus_two():
    assert profile_deriv(P2, -2.0, 1) == pytest.approx(-1.0 / 6.0, abs=1e-14)


def test_taylor_near_zero():
    xs = np.array([1e-3, 5e-3, 2e-2])
    W = profile_eval(P2, xs)
    model = -xs + xs**5 - 5 * xs**9
    np.testing.assert_allclose(W, model, rtol=1e-12)


def test_deriv_matches_finite_differences():
    """Recurrence vs high-order central differences of the implicit solve
    alone: 1e-6 relative for n <= 5 on |x| <= 10."""
    from shocklab.core import _fornberg

    rng = np.random.default_rng(5)
    xs = np.concatenate([rng.uniform(-10, 10, 40), [0.0, -2.0, 2.0, 0.3]])
    # extended precision keeps the n=5 difference quotient above its
    # float64 roundoff floor; h tuned against the profile's analyticity radius
    h = np.longdouble("0.015")
    offsets = h * np.arange(-6, 7, dtype=np.longdouble)
    samples = profile_eval(P2, xs[:, None].astype(np.longdouble) + offsets[None, :])
    for n in range(1, 6):
        w = _fornberg(offsets, np.longdouble(0.0), n)
        fd = (samples @ w).astype(float)
        got = profile_deriv(P2, xs, n)
        scale = np.maximum(1.0, np.abs(got))
        assert np.max(np.abs(fd - got) / scale) < 1e-6, n


def test_selfsimilar_equation_residual():
    """-W/4 + (W + 5x/4) W' = 0 pointwise."""
    xs = np.concatenate([np.linspace(-100, 100, 1001), np.geomspace(1e-6, 1e5, 200)])
    J = profile_jet(P2, xs, 1)
    resid = -J[0] / 4.0 + (J[0] + 1.25 * xs) * J[1]
    assert np.max(np.abs(resid)) <= 1e-8


def test_deriv_order_validation():
    with pytest.raises(ValueError, match="0..8"):
        profile_deriv(P2, 0.0, 9)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(min_value=-1e4, max_value=1e4))
def test_implicit_relation_property(x):
    W = profile_eval(P2, x)
    assert abs(x + W + W**5) <= 1e-12 * max(1.0, abs(x))


# ---------------------------------------------------------------------------
# decay certificate


def test_certificate_passes_wide_range():
    xs = np.concatenate([
        np.linspace(-1e6, 1e6, 2001),
        np.geomspace(1e-4, 1e6, 800),
        -np.geomspace(1e-4, 1e6, 800),
        [0.0],
    ])
    cert = profile_decay_certificate(P2, xs, ell=0.1)
    assert cert.ok, cert.failures
    assert cert.margin_value >= 0
    assert cert.margin_slope >= 0
    assert cert.margin_flat >= 0
    assert len(cert.empirical_constants) == 4
    assert all(c > 0 for c in cert.empirical_constants)


def test_certificate_example_values():
    # |W'(-2)| = 1/6 <= (1+16)^(-1/5)
    cert = profile_decay_certificate(P2, np.array([-2.0]))
    assert cert.margin_slope == pytest.approx((1 + 16.0) ** -0.2 - 1.0 / 6.0, abs=1e-12)
    assert cert.margin_value == pytest.approx(1.5 * 17.0**0.05 - 1.0, abs=1e-12)


def test_certificate_rejects_other_index():
    with pytest.raises(ValueError, match="index-2"):
        profile_decay_certificate(BurgersProfile(index_i=1), np.array([1.0]))


# ---------------------------------------------------------------------------
# rescaling


def test_rescaled_identity_at_nu_120():
    r = RescaledProfile(nu=120.0)
    xs = np.linspace(-5, 5, 41)
    for n in range(6):
        np.testing.assert_allclose(rescaled_eval(r, xs, n), profile_deriv(P2, xs, n), rtol=1e-13)


def test_rescaled_fifth_derivative_sets_nu():
    for nu in (60.0, 120.0, 240.0):
        r = RescaledProfile(nu=nu)
        assert rescaled_eval(r, 0.0, 5) == pytest.approx(nu, rel=1e-12)
        assert rescaled_eval(r, 0.0, 1) == pytest.approx(-1.0, abs=1e-12)


def test_rescaled_solves_selfsimilar_equation():
    xs = np.linspace(-20, 20, 401)
    for nu in (60.0, 120.0, 240.0):
        r = RescaledProfile(nu=nu)
        W = rescaled_eval(r, xs, 0)
        dW = rescaled_eval(r, xs, 1)
        resid = -W / 4.0 + (W + 1.25 * xs) * dW
        assert np.max(np.abs(resid)) <= 1e-8, nu


def test_rescaled_chain_rule_against_fd():
    r = RescaledProfile(nu=240.0)
    xs = np.linspace(-3, 3, 25)
    h = 1e-3
    fd = (rescaled_eval(r, xs + h, 0) - rescaled_eval(r, xs - h, 0)) / (2 * h)
    np.testing.assert_allclose(rescaled_eval(r, xs, 1), fd, atol=1e-5)


def test_rescaled_rejects_bad_nu():
    with pytest.raises(ValueError, match="nu"):
        RescaledProfile(nu=0.0)
    with pytest.raises(ValueError, match="0..5"):
        rescaled_eval(RescaledProfile(nu=120.0), 0.0, 6)


# ---------------------------------------------------------------------------
# frame


def test_profile_frame_tables():
    g = make_grid(513, 0.041, 10.0)
    fr = make_profile_frame(g)
    assert fr.has_base
    np.testing.assert_allclose(fr.base_W, profile_eval(P2, g.nodes), atol=1e-14)
    np.testing.assert_array_equal(fr.base_jet, ORIGIN_JET)
    # background slope is the analytic implicit derivative
    np.testing.assert_allclose(fr.base_dW, -1.0 / (1.0 + 5.0 * fr.base_W**4), rtol=1e-14)
