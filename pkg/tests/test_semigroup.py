import numpy as np
import pytest
from hypothesis import given, strategies as st

from schrodinger_hardy.errors import GridError
from schrodinger_hardy.grid import Field, Grid, integrate
from schrodinger_hardy.potential import make_potential
from schrodinger_hardy.semigroup import (Propagator, assemble_operator,
                                         default_dictionary, default_heat_times,
                                         free_lattice_kernel, gauss_apply,
                                         gauss_kernel, gaussian_domination_check,
                                         grand_maximal, hardy_littlewood,
                                         heat_apply, kernel_regularity,
                                         local_times, make_propagator,
                                         maximal_local, maximal_ML,
                                         sample_regularity_quadruples)


def sine_kernel_1d(m, h, t, c):
    """Closed-form Dirichlet kernel density of e^{-t(-Δ_h + c)} in 1D."""
    j = np.arange(1, m + 1)
    k = np.arange(1, m + 1)
    lam = 4.0 / h ** 2 * np.sin(k * np.pi / (2 * (m + 1))) ** 2 + c
    vecs = np.sqrt(2.0 / (m + 1)) * np.sin(np.outer(j, k) * np.pi / (m + 1))
    return (vecs * np.exp(-t * lam)) @ vecs.T / h


@pytest.mark.parametrize("method", ["spectral", "chebyshev"])
def test_kernel_matches_sine_basis_oracle(method):
    g = Grid(1, 2.0, 41)
    P = make_propagator(make_potential(g, "const", c=0.7), method)
    for t in (0.01, 0.3, 2.0):
        assert np.allclose(P.kernel(t), sine_kernel_1d(41, g.h, t, 0.7),
                           atol=1e-9, rtol=0)


def test_tensor_structure_in_2d():
    # the 2D kernel with constant V is the product of two 1D kernels
    g = Grid(2, 1.0, 9)
    P = make_propagator(make_potential(g, "const", c=2.0))
    K1 = sine_kernel_1d(9, g.h, 0.2, 1.0)
    assert np.allclose(P.kernel(0.2), np.kron(K1, K1), atol=1e-10)


def test_operator_is_symmetric_positive():
    g = Grid(2, 1.0, 8)
    op = assemble_operator(make_potential(g, "bump"))
    A = op.matrix.toarray()
    assert np.allclose(A, A.T)
    ev = np.linalg.eigvalsh(A)
    assert ev.min() > 0
    assert ev.max() <= op.norm_bound * (1 + 1e-12)


def test_chebyshev_agrees_with_spectral():
    g = Grid(2, 2.0, 21)
    V = make_potential(g, "twolevel")
    Ps, Pc = make_propagator(V, "spectral"), make_propagator(V, "chebyshev")
    F = np.random.default_rng(0).normal(size=(g.size, 3))
    ts = default_heat_times(g)
    assert np.abs(Ps.apply_array(ts, F) - Pc.apply_array(ts, F)).max() < 1e-9


@pytest.mark.parametrize("method", ["spectral", "chebyshev"])
def test_semigroup_law(method):
    g = Grid(2, 2.0, 15)
    P = make_propagator(make_potential(g, "bump"), method)
    f = Field(g, np.random.default_rng(1).normal(size=g.shape))
    two = P.apply(0.3, P.apply(0.2, f))
    assert np.abs(two.values - P.apply(0.5, f).values).max() < 1e-9


def test_time_zero_and_negative_time():
    g = Grid(1, 1.0, 11)
    P = make_propagator(make_potential(g, "const"))
    f = g.sample(lambda x: x[..., 0])
    assert np.array_equal(heat_apply(P, 0.0, f).values, f.values)
    with pytest.raises(GridError):
        P.apply_array([-1.0], f.flat)
    with pytest.raises(ValueError):
        Propagator(assemble_operator(make_potential(g, "const")), method="krylov")


def test_potential_shift_factor():
    # V -> V + c multiplies the kernel by e^{-ct}
    g = Grid(2, 2.0, 13)
    P1 = make_propagator(make_potential(g, "bump"))
    P2 = make_propagator(make_potential(g, "bump", base=3.0))
    t = 0.4
    assert np.allclose(P2.kernel(t), np.exp(-2.0 * t) * P1.kernel(t), atol=1e-12)


def test_interior_kernel_matches_free_lattice():
    g = Grid(2, 2.0, 41)
    P = make_propagator(make_potential(g, "const", c=1e-6), "chebyshev")
    c = (g.m - 1) // 2
    col = np.ravel_multi_index((c, c), g.shape)
    t = 0.02
    K = P.kernel_columns(t, [col])[:, 0].reshape(g.shape)
    idx = np.stack(np.indices(g.shape), axis=-1)
    lat = free_lattice_kernel(g, t, idx, np.array([c, c]))
    near = np.max(np.abs(idx - c), axis=-1) <= 5
    assert np.allclose(K[near], lat[near], rtol=1e-5)


@given(st.floats(-3, 3))
def test_maximal_ML_homogeneous(alpha):
    g = Grid(1, 2.0, 17)
    P = make_propagator(make_potential(g, "bump"))
    f = g.sample(lambda x: np.sin(3 * x[..., 0]))
    assert np.allclose(maximal_ML(P, f * alpha).values,
                       abs(alpha) * maximal_ML(P, f).values, atol=1e-14)


def test_maximal_ML_is_sub_markov():
    g = Grid(2, 2.0, 15)
    P = make_propagator(make_potential(g, "power"))
    f = Field(g, np.random.default_rng(2).uniform(-1, 1, size=g.shape))
    assert maximal_ML(P, f).max_abs() <= f.max_abs() * (1 + 1e-12)


def test_gauss_apply_reproduces_mass_in_interior():
    g = Grid(2, 3.0, 61)
    f = g.sample(lambda x: np.exp(-4 * np.sum(x ** 2, axis=-1)))
    for t in (0.01, 0.1):
        assert integrate(gauss_apply(t, f)) == pytest.approx(integrate(f), rel=1e-6)
    assert gauss_kernel(0.25, np.zeros(3), np.zeros(3)) == pytest.approx(np.pi ** -1.5)


def test_local_times_are_truncated():
    g = Grid(3, 2.0, 22)
    ts = local_times(g, 3)
    assert ts.max() < 2 ** -3
    f = g.sample(lambda x: np.exp(-np.sum(x ** 2, axis=-1)))
    assert maximal_local(f, 3).max_abs() <= f.max_abs() * (1 + 1e-12)


def test_hardy_littlewood_of_constant_and_dominance():
    g = Grid(2, 2.0, 21)
    assert np.allclose(hardy_littlewood(g.constant(2.0)).values, 2.0)
    f = Field(g, np.random.default_rng(3).normal(size=g.shape))
    assert np.all(hardy_littlewood(f).values >= np.abs(f.values) - 1e-15)


def test_dictionary_respects_envelope():
    for d in (1, 2, 3):
        D = default_dictionary(Grid(d, 2.0, 17))
        assert D.envelope_violation() <= 0
        assert len(D.scales) == 12


def test_grand_maximal_scaling_and_positivity():
    g = Grid(2, 2.0, 25)
    D = default_dictionary(g)
    f = g.sample(lambda x: np.exp(-np.sum(x ** 2, axis=-1)))
    M = grand_maximal(f, D)
    assert np.all(M.values >= 0)
    assert np.allclose(grand_maximal(f * -3.0, D).values, 3.0 * M.values)


def test_domination_against_lattice_kernel():
    g = Grid(2, 2.0, 15)
    P = make_propagator(make_potential(g, "bump"))
    rep = gaussian_domination_check(P)
    assert rep.min_entry >= -1e-12
    assert rep.holds(against="lattice")
    # at large times the continuous Gaussian also dominates
    late = [r for r in rep.per_time if r[0] >= 0.5]
    assert all(r[2] <= 1 for r in late)


def test_kernel_regularity_report():
    g = Grid(2, 2.0, 15)
    P = make_propagator(make_potential(g, "bump"))
    rng = np.random.default_rng(4)
    sample = sample_regularity_quadruples(P, 60, rng)
    assert len(sample) == 60
    rep = kernel_regularity(P, sample)
    assert 0 < rep.delta_hat <= 1
    assert np.isfinite(rep.C_hat)
    assert all(len(r) == 7 for r in rep.rows())
