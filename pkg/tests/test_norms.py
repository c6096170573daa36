import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from schrodinger_hardy.families import AtomSpec, XiAtomMultiple
from schrodinger_hardy.grid import Ball, Field, Grid
from schrodinger_hardy.norms import (atom_orlicz_bound, bmol_parts,
                                     bmol_plus_diagnostic, check_HXi_atom,
                                     mean_abs, mean_oscillations, norm_BMO,
                                     norm_BMOL, norm_Exp, norm_H1L, norm_HXi_sigma,
                                     norm_HXiL_sigma, norm_Hlog, norm_L1, norm_Llog,
                                     sample_centers, validate_HXi_atom)
from schrodinger_hardy.potential import critical_radius_profile, make_potential
from schrodinger_hardy.semigroup import default_dictionary, make_propagator


@pytest.fixture(scope="module")
def small2():
    g = Grid(2, 2.0, 21)
    V = make_potential(g, "bump")
    return g, critical_radius_profile(V), make_propagator(V), default_dictionary(g)


def _gauss(g, c=(0.2, -0.1), s=0.4):
    return g.sample(lambda x: np.exp(-np.sum((x - np.array(c)) ** 2, axis=-1) / s ** 2))


def test_mean_oscillation_of_linear_function_1d():
    g = Grid(1, 2.0, 41)
    f = g.sample(lambda x: x[..., 0])
    # offsets -5..5: avg |o h| = h * 2 * (1+...+5) / 11
    osc = mean_oscillations(f, 0.55, np.array([[20]]))
    assert osc[0] == pytest.approx(g.h * 30 / 11, rel=1e-12)
    assert mean_abs(f, 0.55, np.array([[20]]))[0] == pytest.approx(g.h * 30 / 11)


def test_sample_centers_include_middle():
    g = Grid(2, 2.0, 21)
    c = sample_centers(g, 4)
    assert [10, 10] in c.tolist()
    assert np.all((c - 10) % 4 == 0)


@given(st.floats(-5, 5), st.floats(0.1, 10))
@settings(max_examples=15)
def test_bmo_invariances(shift, scale):
    g = Grid(2, 2.0, 21)
    f = _gauss(g)
    base = norm_BMO(f)
    assert norm_BMO(g.constant(shift)) == pytest.approx(0.0, abs=1e-12)
    assert norm_BMO(f + shift) == pytest.approx(base, rel=1e-9)
    assert norm_BMO(f * scale) == pytest.approx(scale * base, rel=1e-9)


def test_bmol_of_constant_is_its_modulus(small2):
    g, prof, _, _ = small2
    parts = bmol_parts(g.constant(-1.7), prof)
    assert parts.bmo == pytest.approx(0.0, abs=1e-12)
    assert parts.large_ball == pytest.approx(1.7)
    assert norm_BMOL(g.constant(2.0), prof) == pytest.approx(2.0)
    assert bmol_plus_diagnostic(g.constant(2.0)) == pytest.approx(2.0)
    f = _gauss(g)
    assert norm_BMOL(f, prof) >= norm_BMO(f)


def _brentq_gauge(g, u, phi, w):
    # independent root of  Σ w phi(u/λ) = 1
    F = lambda lam: np.sum(w * phi(u / lam)) - 1.0
    return optimize.brentq(F, 1e-2, 1e6, xtol=1e-14, rtol=1e-13)


def test_llog_and_exp_match_root_finding():
    g = Grid(2, 2.0, 21)
    f = _gauss(g) * 3.0
    r = np.sqrt(np.sum(g.coords ** 2, axis=-1))
    ref = _brentq_gauge(g, f.values, lambda u: u / (np.log(np.e + u) + np.log(np.e + r)),
                        g.weights)
    assert norm_Llog(f) == pytest.approx(ref, rel=1e-10)
    ref = _brentq_gauge(g, f.values, np.expm1, g.weights * (1 + r) ** -4.0)
    assert norm_Exp(f) == pytest.approx(ref, rel=1e-10)
    assert norm_Llog(-f) == norm_Llog(f)


def test_l1_of_constant():
    g = Grid(3, 1.0, 11)
    assert norm_L1(g.constant(-2.0)) == pytest.approx(2.0 * 8.0)


def test_maximal_norms_positive_homogeneous(small2):
    g, _, P, D = small2
    f = _gauss(g) - _gauss(g, (-0.5, 0.4), 0.3)
    for norm in (lambda u: norm_H1L(u, P), lambda u: norm_Hlog(u, D),
                 lambda u: norm_HXi_sigma(u, D), lambda u: norm_HXiL_sigma(u, P)):
        a = norm(f)
        assert a > 0
        assert norm(f * 3.0) == pytest.approx(3.0 * a, rel=1e-9)
        assert norm(g.zeros()) == 0.0


def test_hxi_atom_validation(small2):
    g, _, P, _ = small2
    b = XiAtomMultiple(AtomSpec((0.1, 0.2), 0.6, True, (0.6, 0.8)), 1.0)
    a = b.atom(g)
    chk = check_HXi_atom(a, b.ball)
    assert chk.ok and chk.size <= chk.size_bound
    assert not validate_HXi_atom(a * 1.01, b.ball)
    assert not validate_HXi_atom(a + 1e-3 * _gauss(g, (0.1, 0.2), 0.1), b.ball)
    assert not validate_HXi_atom(a, Ball((0.1, 0.2), 0.3))
    ratio = atom_orlicz_bound(a, b.ball, P)
    assert 0 < ratio < 10
