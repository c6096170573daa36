import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from schrodinger_hardy.errors import InvalidIntegrand, NormOverflow
from schrodinger_hardy.grid import Ball, Field, Grid
from schrodinger_hardy.orlicz import (a1_ratio, exp_weight, growth_type_check,
                                      integrand_exp, integrand_log,
                                      integrand_xi, lambda2, luxemburg,
                                      muckenhoupt_ratio, power_weight,
                                      remark_lower_types, sigma,
                                      sigma_ball_measure, sigma_doubling_ratio,
                                      solve_gauge, subadditivity_check,
                                      tail_weight_check, unit_weight, xi,
                                      xi_growth, xi_inverse,
                                      xi_over_t_nonincreasing)

pos = st.floats(1e-6, 1e6)


@given(pos)
def test_xi_inverse_roundtrip(t):
    assert xi_inverse(float(xi(t))) == pytest.approx(t, rel=1e-12)


@given(pos, pos)
def test_xi_increasing_and_subadditive(a, b):
    lo, hi = sorted((a, b))
    assert xi(lo) <= xi(hi)
    assert xi(a + b) <= xi(a) + xi(b) * (1 + 1e-15)


def test_xi_values():
    assert xi(0.0) == 0.0
    assert xi(1.0) == pytest.approx(1 / np.log(np.e + 1))
    assert xi_inverse(0.0) == 0.0
    assert np.allclose(xi_inverse(np.array([0.5, 2.0])),
                       [xi_inverse(0.5), xi_inverse(2.0)])
    with pytest.raises(ValueError):
        xi_inverse(-1.0)
    assert xi_over_t_nonincreasing(np.geomspace(1e-8, 1e8, 400))


def test_xi_growth_types():
    rep = growth_type_check(xi_growth(0.9), 0.9)
    assert rep.upper_C <= 1 + 1e-12      # log(e+st) >= log(e+t) for s >= 1
    assert np.isfinite(rep.lower_C) and rep.lower_C >= 1
    assert remark_lower_types(3, 0.5) == [0.5, 0.9, 6.5 / 7.0]
    assert subadditivity_check(xi_growth(), [[1, 2, 3], [1e-3, 1e3]]) <= 1
    g = xi_growth()
    assert g.inverse(float(g(7.0))) == pytest.approx(7.0)


def test_sigma_ball_measure_at_origin_matches_radial_integral():
    for d, r in ((1, 1.3), (2, 0.7), (3, 2.0)):
        area = float(2 * mp.pi ** (d / 2) / mp.gamma(d / 2))
        ref = area * mp.quad(lambda s: s ** (d - 1) / mp.log(mp.e + s), [0, r])
        assert sigma_ball_measure(d, np.zeros(d), r) == pytest.approx(float(ref), rel=1e-10)


def test_sigma_ball_measure_off_center_matches_fine_quadrature():
    x0, r = np.array([1.0, 0.5]), 0.8
    n = 2001
    ax = np.linspace(-r, r, n)
    X, Y = np.meshgrid(ax + x0[0], ax + x0[1], indexing="ij")
    inside = (X - x0[0]) ** 2 + (Y - x0[1]) ** 2 < r * r
    s = 1 / np.log(np.e + np.hypot(X, Y))
    ref = s[inside].sum() * (ax[1] - ax[0]) ** 2
    assert sigma_ball_measure(2, x0, r) == pytest.approx(ref, rel=2e-3)


def test_tail_and_doubling_are_finite():
    for d in (1, 2, 3):
        t = tail_weight_check(d, np.full(d, 0.5), 0.3, 0.5)
        assert 0 < t < 5
        assert 1 < sigma_doubling_ratio(d, np.zeros(d), 1.0) <= 2 ** d
    with pytest.raises(ValueError):
        tail_weight_check(2, np.zeros(2), 0.3, 0.0)


def test_weights_and_muckenhoupt():
    g = Grid(2, 2.0, 41)
    B = Ball((0.5, 0.0), 1.0)
    assert muckenhoupt_ratio(unit_weight(), 2.0, B, g) == pytest.approx(1.0)
    # Jensen: the A_q ratio is at least one
    for w in (sigma(), exp_weight(2), power_weight(0.5)):
        assert muckenhoupt_ratio(w, 2.0, B, g) >= 1 - 1e-12
        assert a1_ratio(w, B, g) >= 1 - 1e-12
    assert a1_ratio(power_weight(1.0), Ball((0.0, 0.0), 0.5), g) == np.inf
    with pytest.raises(ValueError):
        muckenhoupt_ratio(sigma(), 1.0, B, g)


def _indicator(g, center, radius, c):
    mask = Ball(center, radius).mask(g)
    return Field(g, c * mask.astype(float)), mask


@given(st.floats(0.1, 100.0), st.floats(0.3, 1.5))
def test_luxemburg_indicator_closed_form(c, radius):
    g = Grid(2, 2.0, 33)
    f, mask = _indicator(g, (0.2, -0.1), radius, c)
    wE = sigma().measure(g, mask)
    res = luxemburg(f, integrand_xi, sigma())
    assert res.lambda_star == pytest.approx(c / xi_inverse(1.0 / wE), rel=1e-10)


@given(st.floats(1e-3, 1e3))
def test_luxemburg_homogeneous(alpha):
    g = Grid(2, 2.0, 17)
    f = g.sample(lambda x: np.exp(-np.sum(x ** 2, axis=-1)) + 0.1)
    for phi, w in ((integrand_xi, sigma()), (integrand_log, None)):
        base = luxemburg(f, phi, w).lambda_star
        assert luxemburg(f * alpha, phi, w).lambda_star == pytest.approx(alpha * base,
                                                                          rel=1e-10)


def test_luxemburg_exp_and_edge_cases():
    g = Grid(1, 2.0, 21)
    f = g.constant(1.0)
    res = luxemburg(f, integrand_exp, exp_weight(1))
    # functional at the solution is one
    w = exp_weight(1).on(g) * g.weights
    assert np.sum(w * np.expm1(1.0 / res.lambda_star)) == pytest.approx(1.0, rel=1e-9)
    assert luxemburg(g.zeros(), integrand_xi).lambda_star == 0.0
    assert luxemburg(f, "log").lambda_star == luxemburg(f, integrand_log).lambda_star


def test_solver_errors():
    with pytest.raises(NormOverflow):
        solve_gauge(lambda lam: 2.0, 1.0, cap=1e3)
    with pytest.raises(InvalidIntegrand):
        solve_gauge(lambda lam: 2.0 if lam < 1.5 else (3.0 if lam < 3 else 0.5), 1.0)


def test_lambda2_single_ball():
    # σ(B) Ξ(s/λ) = 1  =>  λ = s / Ξ⁻¹(1/σ(B))
    assert lambda2([0.8], [3.0]) == pytest.approx(3.0 / xi_inverse(1 / 0.8), rel=1e-10)
    assert lambda2([0.8], [0.0]) == 0.0
