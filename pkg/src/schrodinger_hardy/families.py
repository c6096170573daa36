"""Random test families specified in continuous parameters.

Every family member is a small parameter record that renders onto any grid,
so the same member can be evaluated at two resolutions.  Atoms are made
exact at render time: mean removal and size scaling use the grid's own
quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .decomposition import Atom, ball_measure, check_atom
from .errors import GridError
from .grid import Ball, Field, Grid, bump_profile, local_window
from .norms import sigma_of_ball, weighted_lq
from .orlicz import sigma, xi_inverse
from .potential import CriticalRadiusProfile

_BUMP = bump_profile(normalized=False)
SIZE_MARGIN = 1 - 1e-9


def _bump_values(grid: Grid, center, radius: float) -> np.ndarray:
    dist = np.sqrt(np.sum((grid.coords - np.asarray(center)) ** 2, axis=-1))
    return _BUMP(dist / radius)


@dataclass(frozen=True)
class AtomSpec:
    """A bump (``cancellative=False``) or odd-bump atom on ``B(center, radius)``."""

    center: tuple
    radius: float
    cancellative: bool
    direction: tuple = ()

    def shape(self, grid: Grid) -> np.ndarray:
        """Unnormalized profile; cancellative shapes have zero discrete mean."""
        b = _bump_values(grid, self.center, self.radius)
        if not self.cancellative:
            return b
        u = np.asarray(self.direction, dtype=float)
        odd = b * ((grid.coords - np.asarray(self.center)) @ u) / self.radius
        w = grid.weights
        return odd - (np.sum(w * odd) / np.sum(w * b)) * b

    def render(self, grid: Grid, q: float = 2.0) -> Field:
        """The shape scaled just inside the size bound ``|B|^{1/q-1}``."""
        a = self.shape(grid)
        size = np.sum(grid.weights * np.abs(a) ** q) ** (1.0 / q)
        if size == 0:
            raise GridError("atom support holds no grid point")
        vol = ball_measure(grid, self.center, self.radius)
        return Field(grid, a * (vol ** (1.0 / q - 1.0) / size) * SIZE_MARGIN)

    def atom(self, grid: Grid, q: float = 2.0) -> Atom:
        sl = local_window(grid, self.center, self.radius)
        return Atom(grid, self.center, self.radius, q, self.cancellative, sl,
                    _local=self.render(grid, q).values[sl].copy())


def _unit_vector(rng, d: int) -> tuple:
    v = rng.normal(size=d)
    return tuple(float(c) for c in v / np.linalg.norm(v))


def random_atom_spec(rng, d: int, span: float = 1.0,
                     radii: tuple = (0.4, 0.8), p_cancel: float = 0.6) -> AtomSpec:
    center = tuple(float(c) for c in rng.uniform(-span, span, size=d))
    radius = float(rng.uniform(*radii))
    cancel = bool(rng.uniform() < p_cancel)
    return AtomSpec(center, radius, cancel, _unit_vector(rng, d) if cancel else ())


@dataclass(frozen=True)
class AtomSum:
    """``f = Σ c_i a_i`` over validated atoms."""

    coefficients: tuple
    atoms: tuple

    def render(self, grid: Grid, profile: Optional[CriticalRadiusProfile] = None,
               q: float = 2.0) -> Field:
        """Sum on ``grid``; every atom is validated when ``profile`` is given."""
        out = np.zeros(grid.shape)
        for c, spec in zip(self.coefficients, self.atoms):
            if profile is not None:
                chk = check_atom(spec.atom(grid, q), profile, q)
                if not chk.ok:
                    raise GridError(f"family atom at {spec.center} fails validation")
            out += c * spec.render(grid, q).values
        return Field(grid, out)


def random_atom_sum(rng, d: int, max_terms: int = 4, **kw) -> AtomSum:
    k = int(rng.integers(1, max_terms + 1))
    coef = rng.uniform(0.2, 1.0, size=k) * rng.choice([-1.0, 1.0], size=k)
    return AtomSum(tuple(float(c) for c in coef),
                   tuple(random_atom_spec(rng, d, **kw) for _ in range(k)))


@dataclass(frozen=True)
class LogBumpSum:
    """``g = c0 + Σ a_i log₊(s_i / max(|x - y_i|, floor))``."""

    constant: float
    amplitudes: tuple
    scales: tuple
    centers: tuple
    floor: float = 0.05

    def render(self, grid: Grid) -> Field:
        out = np.full(grid.shape, self.constant)
        for a, s, y in zip(self.amplitudes, self.scales, self.centers):
            dist = np.sqrt(np.sum((grid.coords - np.asarray(y)) ** 2, axis=-1))
            out += a * np.maximum(np.log(s / np.maximum(dist, self.floor)), 0.0)
        return Field(grid, out)


def random_log_bump_sum(rng, d: int, max_terms: int = 3,
                        span: float = 1.0) -> LogBumpSum:
    k = int(rng.integers(1, max_terms + 1))
    return LogBumpSum(float(rng.uniform(-1, 1)),
                      tuple(float(a) for a in rng.uniform(-1, 1, size=k)),
                      tuple(float(s) for s in rng.uniform(0.5, 1.5, size=k)),
                      tuple(tuple(float(c) for c in rng.uniform(-span, span, size=d))
                            for _ in range(k)))


@dataclass(frozen=True)
class BumpSum:
    """Smooth compactly supported ``Σ c_i b((x - y_i)/r_i)`` plus ``offset``."""

    coefficients: tuple
    centers: tuple
    radii: tuple
    offset: float = 0.0

    def render(self, grid: Grid) -> Field:
        out = np.full(grid.shape, self.offset)
        for c, y, r in zip(self.coefficients, self.centers, self.radii):
            out += c * _bump_values(grid, y, r)
        return Field(grid, out)


def random_bump_sum(rng, d: int, max_terms: int = 3, span: float = 0.5,
                    radii: tuple = (0.6, 1.2)) -> BumpSum:
    k = int(rng.integers(1, max_terms + 1))
    return BumpSum(tuple(float(c) for c in rng.uniform(0.3, 1.0, size=k)),
                   tuple(tuple(float(c) for c in rng.uniform(-span, span, size=d))
                         for _ in range(k)),
                   tuple(float(r) for r in rng.uniform(*radii, size=k)))


@dataclass(frozen=True)
class XiAtomMultiple:
    """``multiple`` times a cancellative atom for the weighted Orlicz space:
    ``‖a‖_{L^q_σ} <= σ(B)^{1/q} Ξ⁻¹(1/σ(B))``."""

    spec: AtomSpec
    multiple: float

    @property
    def ball(self) -> Ball:
        return Ball(self.spec.center, self.spec.radius)

    def atom(self, grid: Grid, q: float = 2.0) -> Field:
        a = self.spec.shape(grid)
        size = weighted_lq(Field(grid, a), q, sigma())
        sB = sigma_of_ball(grid, self.ball)
        bound = sB ** (1.0 / q) * xi_inverse(1.0 / sB)
        return Field(grid, a * (bound / size) * SIZE_MARGIN)

    def render(self, grid: Grid, q: float = 2.0) -> Field:
        return self.atom(grid, q) * self.multiple


def random_xi_atom(rng, d: int, span: float = 1.0,
                   radii: tuple = (0.4, 0.8)) -> XiAtomMultiple:
    center = tuple(float(c) for c in rng.uniform(-span, span, size=d))
    spec = AtomSpec(center, float(rng.uniform(*radii)), True, _unit_vector(rng, d))
    return XiAtomMultiple(spec, float(np.exp(rng.uniform(np.log(0.1), np.log(10.0)))))


def atom_sum_family(seed: int, size: int, d: int, **kw) -> list[AtomSum]:
    rng = np.random.default_rng(seed)
    return [random_atom_sum(rng, d, **kw) for _ in range(size)]


def pair_family(seed: int, size: int, d: int) -> list[tuple[AtomSum, LogBumpSum]]:
    rng = np.random.default_rng(seed)
    return [(random_atom_sum(rng, d), random_log_bump_sum(rng, d))
            for _ in range(size)]


def smooth_pair_family(seed: int, size: int, d: int) -> list[tuple[BumpSum, BumpSum]]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(size):
        f = random_bump_sum(rng, d)
        g = random_bump_sum(rng, d)
        out.append((f, BumpSum(g.coefficients, g.centers, g.radii,
                               float(rng.uniform(0.5, 1.5)))))
    return out


def xi_atom_family(seed: int, size: int, d: int) -> list[XiAtomMultiple]:
    rng = np.random.default_rng(seed)
    return [random_xi_atom(rng, d) for _ in range(size)]
