"""Space norms: H¹_L, h¹_n, BMO, BMO_L, L^log, Exp, H^log, H^Ξ_σ, H^Ξ_{L,σ}
and the atom-level Orlicz estimates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import GridError
from .grid import Ball, Field, Grid, ball_offsets, dyadic_radii, integrate
from .orlicz import (Weight, exp_weight, integrand_exp, integrand_log,
                     integrand_xi, luxemburg, sigma, xi, xi_inverse)
from .potential import CriticalRadiusProfile
from .semigroup import (Propagator, TestDictionary, grand_maximal,
                        maximal_local, maximal_ML)

_GATHER_BUDGET = 4_000_000


# Integral norms of maximal functions -----------------------------------------

def norm_H1L(f: Field, P: Propagator, t_set=None) -> float:
    """``‖M_L f‖_{L¹}``."""
    return integrate(maximal_ML(P, f, t_set))


def norm_h1n(f: Field, n: int, t_set=None) -> float:
    """``‖M_n f‖_{L¹}``."""
    return integrate(maximal_local(f, n, t_set))


def norm_L1(f: Field) -> float:
    return integrate(abs(f))


# Ball sampling ----------------------------------------------------------------

def sample_centers(grid: Grid, stride: int = 4) -> np.ndarray:
    """Index triples on the stride sublattice anchored at the middle index."""
    c0 = (grid.m - 1) // 2
    ax = np.array([i for i in range(grid.m) if (i - c0) % stride == 0])
    mesh = np.meshgrid(*([ax] * grid.d), indexing="ij")
    return np.stack([c.reshape(-1) for c in mesh], axis=1)


def _ball_gather(values: np.ndarray, centers: np.ndarray, radius_pts: float):
    """Yield ``(rows, valid)`` blocks: ball samples around each center.

    ``rows`` has shape ``(C, K)``; ``valid`` marks offsets inside the box.
    """
    offs = ball_offsets(values.ndim, radius_pts)
    if offs.shape[0] == 0:
        offs = np.zeros((1, values.ndim), dtype=int)
    m = values.shape[0]
    per = max(1, _GATHER_BUDGET // offs.shape[0])
    for start in range(0, len(centers), per):
        c = centers[start:start + per]
        idx = c[:, None, :] + offs[None, :, :]
        valid = np.all((idx >= 0) & (idx < m), axis=-1)
        idx = np.clip(idx, 0, m - 1)
        rows = values[tuple(idx[..., k] for k in range(values.ndim))]
        yield start, rows, valid


def _masked_mean(rows, valid):
    cnt = valid.sum(axis=1)
    return np.where(valid, rows, 0.0).sum(axis=1) / cnt


def mean_oscillations(f: Field, radius: float, centers: np.ndarray) -> np.ndarray:
    """``avg_B |f - f_B|`` for every ball ``B(center, radius)``."""
    out = np.empty(len(centers))
    for start, rows, valid in _ball_gather(f.values, centers, radius / f.grid.h):
        mean = _masked_mean(rows, valid)
        dev = np.abs(rows - mean[:, None])
        out[start:start + len(rows)] = _masked_mean(dev, valid)
    return out


def mean_abs(f: Field, radius: float, centers: np.ndarray) -> np.ndarray:
    out = np.empty(len(centers))
    for start, rows, valid in _ball_gather(np.abs(f.values), centers,
                                           radius / f.grid.h):
        out[start:start + len(rows)] = _masked_mean(rows, valid)
    return out


def default_bmo_radii(grid: Grid) -> np.ndarray:
    return dyadic_radii(2 * grid.h, grid.R)


def norm_BMO(f: Field, stride: int = 4,
             radii: Optional[Sequence[float]] = None) -> float:
    """Sup of mean oscillation over sampled balls."""
    g = f.grid
    radii = default_bmo_radii(g) if radii is None else radii
    centers = sample_centers(g, stride)
    return float(max(mean_oscillations(f, r, centers).max() for r in radii))


@dataclass
class BMOLParts:
    bmo: float
    large_ball: float

    @property
    def total(self) -> float:
        return self.bmo + self.large_ball


def bmol_parts(f: Field, profile: CriticalRadiusProfile, stride: int = 4,
               radii: Optional[Sequence[float]] = None) -> BMOLParts:
    """BMO part and ``sup_{r >= ρ(x)} avg_{B(x,r)} |f|`` over sampled balls.

    For each center the sampled large radii are ``ρ(center)`` itself together
    with every sampled dyadic radius at least ``ρ(center)``.
    """
    g = f.grid
    radii = default_bmo_radii(g) if radii is None else np.asarray(radii)
    centers = sample_centers(g, stride)
    bmo = float(max(mean_oscillations(f, r, centers).max() for r in radii))
    rho_c = profile.rho.values[tuple(centers.T)]
    large = 0.0
    for r in radii:
        sel = rho_c <= r
        if sel.any():
            large = max(large, float(mean_abs(f, r, centers[sel]).max()))
    # ρ(center) itself.  Lattice offsets have integer |o|^2, so balls of
    # radius rp (grid units) share their offset set with ceil(rp^2).
    keys = np.ceil((rho_c / g.h) ** 2 - 1e-9).astype(int)
    for key in np.unique(keys):
        sel = keys == key
        large = max(large, float(mean_abs(f, np.sqrt(key - 0.5) * g.h,
                                          centers[sel]).max()))
    return BMOLParts(bmo, large)


def norm_BMOL(f: Field, profile: CriticalRadiusProfile, stride: int = 4,
              radii: Optional[Sequence[float]] = None) -> float:
    return bmol_parts(f, profile, stride, radii).total


def bmol_plus_diagnostic(f: Field, stride: int = 4) -> float:
    """``‖f‖_BMO + avg_{B(0,1)} |f|`` (diagnostic only)."""
    B = Ball(tuple([0.0] * f.grid.d), 1.0)
    mask = B.mask(f.grid)
    return norm_BMO(f, stride) + float(np.abs(f.values[mask]).mean())


# Orlicz norms -----------------------------------------------------------------

def norm_Llog(f: Field) -> float:
    return luxemburg(abs(f), integrand_log).lambda_star


def norm_Exp(f: Field) -> float:
    return luxemburg(abs(f), integrand_exp, exp_weight(f.grid.d)).lambda_star


def hlog_of_maximal(Mf: Field) -> float:
    return luxemburg(Mf, integrand_log).lambda_star


def hxi_sigma_of_maximal(Mf: Field) -> float:
    return luxemburg(Mf, integrand_xi, sigma()).lambda_star


def norm_Hlog(f: Field, D: TestDictionary) -> float:
    """Luxemburg norm of ``𝔐f`` with integrand ``u/(log(e+u)+log(e+|x|))``."""
    return hlog_of_maximal(grand_maximal(f, D))


def norm_HXi_sigma(f: Field, D: TestDictionary) -> float:
    """Luxemburg norm of ``𝔐f`` with ``Ξ`` and weight ``σ``."""
    return hxi_sigma_of_maximal(grand_maximal(f, D))


def norm_HXiL_sigma(f: Field, P: Propagator, t_set=None) -> float:
    """Luxemburg norm of ``M_L f`` with ``Ξ`` and weight ``σ``."""
    return hxi_sigma_of_maximal(maximal_ML(P, f, t_set))


# Weighted atoms ---------------------------------------------------------------

def weighted_lq(a: Field, q: float, w: Weight) -> float:
    """``(∫ |a|^q w)^{1/q}``."""
    return float(np.sum(a.grid.weights * w.on(a.grid) * np.abs(a.values) ** q)
                 ** (1.0 / q))


def sigma_of_ball(grid: Grid, B: Ball) -> float:
    """Discrete ``σ(B)``, the same quadrature used for ``‖·‖_{L^q_σ}``."""
    return sigma().measure(grid, B.mask(grid))


@dataclass
class HXiAtomCheck:
    support_ok: bool
    size: float
    size_bound: float
    mean: float
    l1: float

    @property
    def ok(self) -> bool:
        return (self.support_ok and self.size <= self.size_bound * (1 + 1e-12)
                and abs(self.mean) <= 1e-8 * self.l1)


def check_HXi_atom(a: Field, B: Ball, q: float = 2.0) -> HXiAtomCheck:
    g = a.grid
    mask = B.mask(g)
    support_ok = bool(np.all(a.values[~mask] == 0))
    sB = sigma_of_ball(g, B)
    if sB <= 0:
        raise GridError("ball holds no grid point")
    bound = sB ** (1.0 / q) * xi_inverse(1.0 / sB)
    return HXiAtomCheck(support_ok, weighted_lq(a, q, sigma()), bound,
                        integrate(a), integrate(abs(a)))


def validate_HXi_atom(a: Field, B: Ball, q: float = 2.0) -> bool:
    """Support in ``B``, ``‖a‖_{L^q_σ} <= σ(B)^{1/q} Ξ⁻¹(1/σ(B))``, mean zero."""
    return check_HXi_atom(a, B, q).ok


def atom_orlicz_bound(b: Field, B: Ball, P: Propagator, q: float = 2.0,
                      ML: Optional[Field] = None) -> float:
    """``∫Ξ(M_L b)σ / [σ(B) Ξ(σ(B)^{-1/q} ‖b‖_{L^q_σ})]``."""
    g = b.grid
    ML = maximal_ML(P, b) if ML is None else ML
    lhs = float(np.sum(g.weights * xi(ML.values) * sigma().on(g)))
    sB = sigma_of_ball(g, B)
    rhs = sB * float(xi(sB ** (-1.0 / q) * weighted_lq(b, q, sigma())))
    return lhs / rhs
