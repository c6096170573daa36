"""Potentials, reverse Hölder checks and the critical radius function.

The critical radius at ``x`` is the largest ``r`` with
``r^(2-d) ∫_{B(x,r)} V <= 1``.  Ball integrals of the sampled potential use
the piecewise-constant (voxel) interpolant, with the voxel/ball intersection
volume of each voxel cut by the sphere taken from the tangent-plane cut.  This
makes ``r -> ∫_{B(x,r)} V`` continuous instead of jumping whenever a grid
point enters the ball.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations, product
from math import factorial
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import optimize, signal

from .errors import (DegenerateBall, GridError, RhoExceedsDomain,
                     ShenEstimateFailed)
from .grid import Ball, Field, Grid, ball_average, ball_sampler, dyadic_radii

_MAX_SHEN_POINTS = 300


@dataclass(frozen=True, eq=False)
class Potential:
    field: Field
    name: str = "V"

    def __post_init__(self):
        v = self.field.values
        if np.any(v < 0):
            raise GridError(f"potential {self.name!r} has negative values")
        if not np.any(v > 0):
            raise GridError(f"potential {self.name!r} vanishes identically")

    @property
    def grid(self) -> Grid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values


# Potential zoo ----------------------------------------------------------------

def constant_potential(grid: Grid, c: float = 1.0) -> Potential:
    return Potential(grid.constant(c), f"const({c:g})")


def power_potential(grid: Grid, a: float = 2.0, c: float = 1.0) -> Potential:
    """``c |x|^a``, a member of every reverse Hölder class for ``a > 0``."""
    if not a > 0:
        raise GridError("power potential needs a > 0")
    return Potential(Field(grid, c * grid.radius ** a), f"power({a:g},{c:g})")


def bump_potential(grid: Grid, base: float = 1.0, height: float = 3.0,
                   width: float = 0.5) -> Potential:
    """``base + height * exp(-|x|^2 / width^2)``."""
    v = base + height * np.exp(-(grid.radius / width) ** 2)
    return Potential(Field(grid, v), f"bump({base:g},{height:g},{width:g})")


def two_level_potential(grid: Grid, low: float = 1.0, high: float = 3.0,
                        width: float = 0.25) -> Potential:
    """Smooth step from ``low`` to ``high`` across the plane ``x1 = 0``."""
    x1 = grid.coords[..., 0]
    v = low + (high - low) * 0.5 * (1.0 + np.tanh(x1 / width))
    return Potential(Field(grid, v), f"twolevel({low:g},{high:g},{width:g})")


POTENTIALS = {
    "const": constant_potential,
    "power": power_potential,
    "bump": bump_potential,
    "twolevel": two_level_potential,
}


def make_potential(grid: Grid, name: str, **params) -> Potential:
    try:
        factory = POTENTIALS[name]
    except KeyError:
        raise GridError(f"unknown potential {name!r}; "
                        f"choose from {sorted(POTENTIALS)}") from None
    return factory(grid, **params)


# Reverse Hölder ---------------------------------------------------------------

@dataclass
class ReverseHolderReport:
    q: float
    samples: list = field(default_factory=list)   # (center, r, ratio)
    sup_ratio: float = 1.0

    def rows(self):
        for c, r, ratio in self.samples:
            yield [*c, r, ratio]


def reverse_holder_ratio(V: Potential, q: float, B: Ball) -> float:
    if not q > 1:
        raise GridError("reverse Hölder exponent must exceed 1")
    mean = ball_average(V.field, B)
    if mean <= 0:
        raise DegenerateBall("degenerate ball")
    mean_q = ball_average(Field(V.grid, V.values ** q), B)
    return float(mean_q ** (1.0 / q) / mean)


def check_reverse_holder(V: Potential, q: float,
                         balls: Optional[Iterable[Ball]] = None,
                         stride: int = 4) -> ReverseHolderReport:
    g = V.grid
    if balls is None:
        balls = ball_sampler(g, stride, dyadic_radii(2 * g.h, g.R / 2))
    report = ReverseHolderReport(q)
    for B in balls:
        try:
            ratio = reverse_holder_ratio(V, q, B)
        except DegenerateBall:
            continue
        report.samples.append((B.center, B.radius, ratio))
    if report.samples:
        report.sup_ratio = max(s[2] for s in report.samples)
    return report


# Ball integrals ---------------------------------------------------------------

def _uniform_sum_cdf(s: np.ndarray, widths: np.ndarray) -> np.ndarray:
    """``P(U_1 + ... + U_d <= s)`` for centered uniforms of the given widths."""
    n, d = widths.shape
    total = 0.5 * widths.sum(axis=1)
    acc = np.zeros(n)
    for eps in product((0, 1), repeat=d):
        e = np.asarray(eps, dtype=float)
        shift = s + total - widths @ e
        acc += (-1) ** int(e.sum()) * np.maximum(shift, 0.0) ** d
    return np.clip(acc / (factorial(d) * np.prod(widths, axis=1)), 0.0, 1.0)


def _plane_fractions(offsets: np.ndarray, r: float, h: float) -> np.ndarray:
    """Tangent-plane cut fractions of cubes of side ``h`` at ``offsets``."""
    d = offsets.shape[1]
    dist = np.sqrt(np.sum(offsets ** 2, axis=1))
    normal = np.zeros_like(offsets)
    normal[:, 0] = 1.0
    pos = dist > 0
    normal[pos] = offsets[pos] / dist[pos, None]
    widths = np.maximum(h * np.abs(normal), 1e-4 * h)
    return _uniform_sum_cdf(r - dist, widths)


def voxel_fractions(offsets: np.ndarray, r: float, h: float,
                    refine: int = 3) -> np.ndarray:
    """Fraction of each voxel ``offset + [-h/2, h/2]^d`` inside ``B(0, r)``.

    Voxels cut by the sphere are split into ``refine^d`` sub-cubes; on each
    sub-cube the sphere is replaced by its tangent plane, for which the cut
    volume is exact: the distribution function of a sum of uniforms whose
    widths are the cube's extents along the normal.  The plane bias is
    ``O((h / (refine r))^2)``.
    """
    offsets = np.asarray(offsets, dtype=float)
    d = offsets.shape[1]
    dist = np.sqrt(np.sum(offsets ** 2, axis=1))
    half_reach = 0.5 * h * np.sqrt(d)
    frac = (dist + half_reach <= r).astype(float)
    cut = np.nonzero((dist - half_reach < r) & (dist + half_reach > r))[0]
    if cut.size:
        hs = h / refine
        sub = hs * (np.arange(refine) - 0.5 * (refine - 1))
        subs = np.stack(np.meshgrid(*([sub] * d), indexing="ij"),
                        axis=-1).reshape(-1, d)
        pts = (offsets[cut][:, None, :] + subs[None]).reshape(-1, d)
        frac[cut] = _plane_fractions(pts, r, hs).reshape(cut.size, -1).mean(axis=1)
    return frac


BOUNDARY_MODES = ("extend", "clip")


def _check_boundary(boundary: str) -> None:
    if boundary not in BOUNDARY_MODES:
        raise GridError(f"boundary must be one of {BOUNDARY_MODES}, got {boundary!r}")


def default_r_cap(grid: Grid, boundary: str = "extend") -> float:
    return grid.R if boundary == "extend" else 2.0 * grid.R


def ball_integral(V: Potential, x: Sequence[float], r: float,
                  boundary: str = "extend") -> float:
    """``∫_{B(x,r)} V`` for the voxel interpolant of ``V``.

    With ``boundary="extend"`` the voxels continue past the box carrying the
    nearest boundary value; with ``"clip"`` the potential vanishes outside
    and boundary voxels carry trapezoid weights.
    """
    _check_boundary(boundary)
    g = V.grid
    x = np.asarray(x, dtype=float)
    reach = r + g.h
    lo = np.floor((x - reach + g.R) / g.h).astype(int)
    hi = np.ceil((x + reach + g.R) / g.h).astype(int) + 1
    if boundary == "clip":
        lo, hi = np.clip(lo, 0, g.m), np.clip(hi, 0, g.m)
    axes = [np.arange(a, b) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    idx = np.stack([c.reshape(-1) for c in mesh], axis=1)
    pts = -g.R + g.h * idx
    if boundary == "clip":
        wv = (V.values * g.weights)[tuple(idx.T)]
    else:
        wv = V.values[tuple(np.clip(idx, 0, g.m - 1).T)] * g.cell_volume
    frac = voxel_fractions(pts - x, r, g.h)
    return float(np.dot(wv, frac))


def _scaled_mass(V: Potential, x, r: float, boundary: str = "extend") -> float:
    return r ** (2 - V.grid.d) * ball_integral(V, x, r, boundary)


def critical_radius(V: Potential, x: Sequence[float], rtol: float = 1e-6,
                    r_cap: Optional[float] = None,
                    boundary: str = "extend",
                    hint: Optional[float] = None) -> float:
    """Critical radius at a single point by dyadic scan plus bisection.

    ``hint`` is a radius believed to sit near the last crossing (from a
    scan elsewhere); a verified bracket of width 2% around it skips the scan.
    """
    g = V.grid
    r_cap = default_r_cap(g, boundary) if r_cap is None else r_cap
    if hint is not None:
        lo, hi = hint * 0.99, hint * 1.01
        if (_scaled_mass(V, x, lo, boundary) <= 1.0
                < _scaled_mass(V, x, hi, boundary)):
            return _bisect_crossing(V, x, lo, hi, rtol, boundary)
    r0 = g.h
    while _scaled_mass(V, x, r0, boundary) > 1.0:
        r0 /= 2.0
        if r0 < g.h / 8:
            raise GridError("critical radius below grid resolution")
    radii = [r0]
    while radii[-1] < r_cap:
        radii.append(radii[-1] * 2.0)
    vals = [_scaled_mass(V, x, r, boundary) for r in radii]
    bracket = None
    for j in range(len(radii) - 1):
        if vals[j] <= 1.0 < vals[j + 1]:
            bracket = (radii[j], radii[j + 1])
    if bracket is None:
        raise RhoExceedsDomain("rho exceeds domain")
    return _bisect_crossing(V, x, *bracket, rtol, boundary)


def _bisect_crossing(V, x, lo, hi, rtol, boundary):
    """Crossing of 1 inside a bracket with ``F(lo) <= 1 < F(hi)``."""
    return optimize.brentq(lambda r: _scaled_mass(V, x, r, boundary) - 1.0,
                           lo, hi, xtol=rtol * lo * 0.5, rtol=4 * np.finfo(float).eps)


def _frac_kernel(g: Grid, r: float, cap: Optional[int] = None) -> np.ndarray:
    cap = g.m - 1 if cap is None else cap
    half = min(int(np.ceil(r / g.h + 0.5 * np.sqrt(g.d))), cap)
    ax = g.h * np.arange(-half, half + 1)
    mesh = np.meshgrid(*([ax] * g.d), indexing="ij")
    offs = np.stack([c.reshape(-1) for c in mesh], axis=1)
    return voxel_fractions(offs, r, g.h).reshape((2 * half + 1,) * g.d)


def scaled_mass_map(V: Potential, radii: Sequence[float],
                    boundary: str = "extend") -> np.ndarray:
    """``r^(2-d) ∫_{B(x,r)} V`` for every grid point and every radius."""
    _check_boundary(boundary)
    g = V.grid
    if boundary == "clip":
        wv, pad = V.values * g.weights, 0
    else:
        pad = min(int(np.ceil(max(radii) / g.h + 0.5 * np.sqrt(g.d))) + 1, 4 * g.m)
        wv = np.pad(V.values, pad, mode="edge") * g.cell_volume
    crop = tuple(slice(pad, pad + g.m) for _ in range(g.d))
    out = np.empty((len(radii),) + g.shape)
    for j, r in enumerate(radii):
        kern = _frac_kernel(g, r, cap=g.m - 1 + pad)
        conv = signal.fftconvolve(wv, kern, mode="same")[crop]
        out[j] = r ** (2 - g.d) * conv
    return out


def layer_index(rho_value) -> np.ndarray | int:
    """The ``n`` with ``2^(-(n+1)/2) < rho <= 2^(-n/2)``."""
    rho = np.asarray(rho_value, dtype=float)
    if np.any(rho <= 0):
        raise GridError("rho must be positive")
    n = np.floor(-2.0 * np.log2(rho)).astype(int)
    # repair floating-point misassignment at the endpoints
    n = np.where(rho > 2.0 ** (-n / 2.0), n - 1, n)
    n = np.where(rho <= 2.0 ** (-(n + 1) / 2.0), n + 1, n)
    return int(n) if n.ndim == 0 else n


def l_constant(C0: float, k0: int) -> float:
    return 8.0 * 9.0 ** k0 * C0


def _lattice_ceil(c: float, step: float = 0.1) -> float:
    j = max(1, int(np.ceil(round((c - 1.0) / step, 9))))
    return round(1.0 + step * j, 10)


def shen_constants(points: np.ndarray, rhos: np.ndarray, k_cap: int = 10,
                   c_cap: float = 1000.0) -> tuple[float, int]:
    """Lattice-minimal ``(C0, k0)`` satisfying Shen's two-sided estimate.

    Among lattice pairs that hold for every sampled ordered pair, the one
    minimizing ``8 * 9^k0 * C0`` is returned (smaller ``k0`` on ties).
    """
    points = np.asarray(points, dtype=float)
    rhos = np.asarray(rhos, dtype=float)
    n = len(rhos)
    if n * (n - 1) // 2 < 100:
        raise GridError(f"need at least 100 sampled pairs, got {n * (n - 1) // 2}")
    i, j = np.array(list(combinations(range(n), 2))).T
    i, j = np.concatenate([i, j]), np.concatenate([j, i])
    dist = np.sqrt(np.sum((points[i] - points[j]) ** 2, axis=1))
    rx, ry = rhos[i], rhos[j]
    growth = 1.0 + dist / rx
    best = None
    for k0 in range(1, k_cap + 1):
        need_lower = np.max(rx * growth ** (-k0) / ry)
        need_upper = np.max(ry / (rx * growth ** (k0 / (k0 + 1.0))))
        C0 = _lattice_ceil(max(need_lower, need_upper, 1.0))
        if C0 > c_cap:
            continue
        cand = (l_constant(C0, k0), k0, C0)
        if best is None or cand < best:
            best = cand
    if best is None:
        raise ShenEstimateFailed("Shen estimate failed")
    return best[2], best[1]


@dataclass(eq=False)
class CriticalRadiusProfile:
    rho: Field
    layer: np.ndarray
    clipped: np.ndarray
    C0_hat: float
    k0_hat: int
    cL: float

    @property
    def grid(self) -> Grid:
        return self.rho.grid

    def rho_at(self, x: Sequence[float]) -> float:
        return float(self.rho.values[self.grid.index_of(x)])

    @property
    def layers(self) -> list[int]:
        return sorted(int(n) for n in np.unique(self.layer))

    def rows(self):
        g = self.grid
        pts = g.coords.reshape(-1, g.d)
        for p, r, n in zip(pts, self.rho.flat, self.layer.reshape(-1)):
            yield [*p, r, int(n)]


def rho_map(V: Potential, steps_per_octave: int = 8,
            polish_band: float = 0.003,
            boundary: str = "extend") -> tuple[np.ndarray, np.ndarray]:
    """Critical radius at every grid point, and the clipped-ball flags.

    A geometric radius scan (all points at once, by FFT convolution) locates
    the last upward crossing of 1; the crossing radius is interpolated in
    log-log coordinates.  Points whose value lands within ``polish_band`` of
    a layer threshold are recomputed with :func:`critical_radius`.
    """
    g = V.grid
    r_cap = default_r_cap(g, boundary)
    n_r = int(np.ceil(steps_per_octave * np.log2(r_cap / (0.5 * g.h)))) + 1
    radii = 0.5 * g.h * 2.0 ** (np.arange(n_r) / steps_per_octave)
    F = scaled_mass_map(V, radii, boundary)
    below = F[:-1] <= 1.0
    above = F[1:] > 1.0
    crossing = below & above
    if not np.all(crossing.any(axis=0)):
        if np.any(F[0] > 1.0):
            raise GridError("critical radius below grid resolution")
        raise RhoExceedsDomain("rho exceeds domain")
    last = (crossing.shape[0] - 1) - np.argmax(crossing[::-1], axis=0)
    f_lo = np.take_along_axis(F, last[None], axis=0)[0]
    f_hi = np.take_along_axis(F, last[None] + 1, axis=0)[0]
    lr = np.log(radii)
    l_lo, l_hi = lr[last], lr[last + 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(f_lo > 0,
                        -np.log(np.maximum(f_lo, 1e-300))
                        / (np.log(f_hi) - np.log(np.maximum(f_lo, 1e-300))),
                        (1.0 - f_lo) / (f_hi - f_lo))
    frac = np.clip(np.nan_to_num(frac, nan=1.0), 0.0, 1.0)
    rho = np.exp(l_lo + frac * (l_hi - l_lo))

    level = -2.0 * np.log2(rho)
    near = np.abs(level - np.rint(level)) < polish_band * 2.0 / np.log(2.0)
    for idx in zip(*np.nonzero(near)):
        rho[idx] = critical_radius(V, g.point(idx), boundary=boundary,
                                   hint=float(rho[idx]))

    dist_to_edge = g.R - np.max(np.abs(g.coords), axis=-1)
    clipped = dist_to_edge < rho
    return rho, clipped


def shen_sample_points(grid: Grid, spacing: float, half_width: float):
    """Fixed physical points ``spacing * Z^d ∩ [-half_width, half_width]^d``."""
    k = int(np.floor(half_width / spacing + 1e-9))
    ax = spacing * np.arange(-k, k + 1)
    mesh = np.meshgrid(*([ax] * grid.d), indexing="ij")
    return np.stack([c.reshape(-1) for c in mesh], axis=1)


def critical_radius_profile(V: Potential, shen_stride: int = 4,
                            shen_points: Optional[np.ndarray] = None,
                            boundary: str = "extend") -> CriticalRadiusProfile:
    """ρ map, layer map and Shen constants for ``V``.

    The Shen constants come from all pairs of ``shen_points`` (exact point
    evaluations) or, by default, from the unflagged points of a stride
    sublattice of the grid, read from the map.  ``clipped`` flags points
    whose critical ball leaves the box; in ``"clip"`` mode those radii are
    biased upward and a warning is issued.
    """
    g = V.grid
    rho, clipped = rho_map(V, boundary=boundary)
    n_clipped = int(clipped.sum())
    if n_clipped and boundary == "clip":
        warnings.warn(f"{n_clipped} grid points use balls clipped by the box",
                      stacklevel=2)
    if shen_points is not None:
        pts = np.asarray(shen_points, dtype=float)
        # the map value at the nearest grid point seeds a verified bracket
        vals = np.array([critical_radius(V, p, boundary=boundary,
                                         hint=float(rho[g.index_of(p)]))
                         for p in pts])
    else:
        c0 = (g.m - 1) // 2
        sel = np.zeros(g.shape, dtype=bool)
        keep = [(np.arange(g.m) - c0) % shen_stride == 0] * g.d
        sel[np.ix_(*keep)] = True
        sel &= ~clipped
        if sel.sum() < 15:
            sel = np.zeros(g.shape, dtype=bool)
            sel[np.ix_(*keep)] = True
        pts = g.coords[sel]
        vals = rho[sel]
        if len(vals) > _MAX_SHEN_POINTS:
            take = np.linspace(0, len(vals) - 1, _MAX_SHEN_POINTS).astype(int)
            pts, vals = pts[take], vals[take]
    C0, k0 = shen_constants(pts, vals)
    return CriticalRadiusProfile(Field(g, rho), layer_index(rho), clipped,
                                 C0, k0, l_constant(C0, k0))
