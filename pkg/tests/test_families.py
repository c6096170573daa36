import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from schrodinger_hardy.decomposition import ball_measure, check_atom
from schrodinger_hardy.families import (AtomSpec, AtomSum, BumpSum, LogBumpSum,
                                        SIZE_MARGIN, atom_sum_family, pair_family,
                                        random_atom_spec, smooth_pair_family,
                                        xi_atom_family)
from schrodinger_hardy.grid import Grid
from schrodinger_hardy.norms import check_HXi_atom
from schrodinger_hardy.potential import critical_radius_profile, make_potential


@given(st.integers(0, 2 ** 31), st.sampled_from([17, 25, 33]))
@settings(max_examples=20)
def test_atom_specs_render_exactly_on_any_grid(seed, m):
    g = Grid(2, 2.0, m)
    spec = random_atom_spec(np.random.default_rng(seed), 2)
    a = spec.render(g).values
    w = g.weights
    size = np.sqrt(np.sum(w * a ** 2))
    bound = ball_measure(g, spec.center, spec.radius) ** -0.5
    assert size == pytest.approx(bound * SIZE_MARGIN, rel=1e-12)
    if spec.cancellative:
        assert abs(np.sum(w * a)) <= 1e-12 * np.sum(w * np.abs(a))
    d = np.sqrt(np.sum((g.coords - np.array(spec.center)) ** 2, axis=-1))
    assert np.all(a[d >= spec.radius] == 0)


def test_families_are_seed_deterministic():
    assert atom_sum_family(7, 5, 3) == atom_sum_family(7, 5, 3)
    assert atom_sum_family(7, 5, 3) != atom_sum_family(8, 5, 3)
    assert pair_family(1, 4, 2) == pair_family(1, 4, 2)
    assert smooth_pair_family(1, 4, 2) == smooth_pair_family(1, 4, 2)
    assert xi_atom_family(1, 4, 2) == xi_atom_family(1, 4, 2)


def test_atom_sum_validates_against_profile():
    g = Grid(2, 2.0, 33)
    prof = critical_radius_profile(make_potential(g, "bump"))
    for member in atom_sum_family(0, 6, 2):
        f = member.render(g, prof)
        ref = sum(c * s.render(g).values for c, s in zip(member.coefficients, member.atoms))
        assert np.allclose(f.values, ref)
        for s in member.atoms:
            assert check_atom(s.atom(g), prof).ok


def test_member_is_the_same_function_on_two_grids():
    spec = AtomSpec((0.0, 0.0), 0.6, False)
    coarse, fine = Grid(2, 2.0, 21), Grid(2, 2.0, 41)
    a, b = spec.render(coarse).values, spec.render(fine).values
    # grid 21 points are every second point of grid 41
    assert np.allclose(a, b[::2, ::2], rtol=0.05)


def test_log_bump_and_bump_sums():
    g = Grid(1, 2.0, 41)
    lb = LogBumpSum(0.5, (2.0,), (1.0,), ((0.0,),))
    v = lb.render(g).values
    assert v[20] == pytest.approx(0.5 + 2.0 * np.log(1 / 0.05))
    assert v[0] == pytest.approx(0.5)
    bs = BumpSum((1.0,), ((0.0,),), (0.5,), offset=1.0)
    v = bs.render(g).values
    assert v[0] == 1.0 and v[20] > 1.0


def test_xi_atoms_valid():
    g = Grid(2, 2.0, 33)
    for b in xi_atom_family(0, 5, 2):
        chk = check_HXi_atom(b.atom(g), b.ball)
        assert chk.ok
        assert 0.1 <= b.multiple <= 10
