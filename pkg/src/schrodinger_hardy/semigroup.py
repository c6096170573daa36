"""Discrete Schrödinger operator, its heat semigroup and maximal operators.

``L_h = -Δ_h + V`` uses the (2d+1)-point Laplacian on all grid points with
zero values beyond the box (homogeneous Dirichlet).  Kernels are densities:
``T_t f(x) = h^d sum_y T_t(x, y) f(y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import fft as sfft
from scipy import ndimage, optimize
from scipy.special import ive

from .errors import GridError
from .grid import (Field, Grid, RadialProfile, ball_offsets, dyadic_radii,
                   shift_array)
from .potential import Potential

DENSE_MAX = 2500


@dataclass(eq=False)
class DiscreteOperator:
    grid: Grid
    potential: np.ndarray
    matrix: sp.csr_matrix

    @property
    def norm_bound(self) -> float:
        """Gershgorin bound on the largest eigenvalue."""
        return 4.0 * self.grid.d / self.grid.h ** 2 + float(self.potential.max())

    def quadratic_form(self, f: Field) -> float:
        v = f.flat
        return float(v @ (self.matrix @ v))


def _laplacian_1d(m: int, h: float) -> sp.csr_matrix:
    e = np.ones(m)
    return sp.diags([-e[:-1], 2 * e, -e[:-1]], [-1, 0, 1], format="csr") / h ** 2


def assemble_operator(V: Potential) -> DiscreteOperator:
    g = V.grid
    D = _laplacian_1d(g.m, g.h)
    I = sp.identity(g.m, format="csr")
    lap = sp.csr_matrix((g.size, g.size))
    for axis in range(g.d):
        term = None
        for j in range(g.d):
            factor = D if j == axis else I
            term = factor if term is None else sp.kron(term, factor, format="csr")
        lap = lap + term
    L = (lap + sp.diags(V.values.reshape(-1))).tocsr()
    return DiscreteOperator(g, V.values.copy(), L)


def default_heat_times(grid: Grid) -> np.ndarray:
    """Dyadic times from ``h^2/4`` until ``(2R)^2`` is reached."""
    t_min = grid.h ** 2 / 4.0
    t_max = (2.0 * grid.R) ** 2
    n = int(np.ceil(np.log2(t_max / t_min) - 1e-12))
    return t_min * 2.0 ** np.arange(n + 1)


class Propagator:
    """``e^{-t L_h}`` by dense eigendecomposition or a Chebyshev expansion.

    The Chebyshev route expands ``exp(-t x)`` on ``[0, ||L_h||]`` and shares one
    three-term recurrence across every requested time, truncating once the
    coefficient tail is below ``tol`` (an operator-norm error bound).
    """

    def __init__(self, op: DiscreteOperator, method: str = "auto",
                 tol: float = 1e-11):
        self.op = op
        self.grid = op.grid
        self.tol = tol
        if method == "auto":
            method = "spectral" if self.grid.size <= DENSE_MAX else "chebyshev"
        if method not in ("spectral", "chebyshev"):
            raise ValueError(f"unknown propagator method {method!r}")
        self.method = method
        self.evals = self.evecs = None
        if method == "spectral":
            self.evals, self.evecs = np.linalg.eigh(op.matrix.toarray())
            self.evals = np.maximum(self.evals, 0.0)

    # core ---------------------------------------------------------------
    def apply_array(self, ts: Sequence[float], F: np.ndarray) -> np.ndarray:
        """``e^{-t L} F`` for each ``t``; ``F`` is ``(N,)`` or ``(N, k)``."""
        ts = np.asarray(ts, dtype=float).reshape(-1)
        if np.any(ts < 0):
            raise GridError("heat time must be nonnegative")
        F = np.asarray(F, dtype=float)
        vec = F.ndim == 1
        F2 = F[:, None] if vec else F
        if self.method == "spectral":
            coef = self.evecs.T @ F2
            out = np.stack([self.evecs @ (np.exp(-t * self.evals)[:, None] * coef)
                            for t in ts])
        else:
            out = self._chebyshev(ts, F2)
        zero = ts == 0
        if zero.any():
            out[zero] = F2
        return out[:, :, 0] if vec else out

    def _chebyshev(self, ts: np.ndarray, F: np.ndarray) -> np.ndarray:
        rho = self.op.norm_bound
        a = ts * rho / 2.0
        k_max = int(np.ceil(np.sqrt(2.0 * max(a.max(), 1.0) * 60.0))) + 40
        ks = np.arange(k_max + 1)
        coef = ive(ks[:, None], a[None, :]) * np.where(ks % 2 == 0, 1.0, -1.0)[:, None]
        coef[1:] *= 2.0
        tail = np.cumsum(np.abs(coef[::-1]), axis=0)[::-1]
        live = tail > self.tol
        n_terms = int(np.max(np.nonzero(live.any(axis=1))[0])) + 1 if live.any() else 1
        scale = 2.0 / rho
        L = self.op.matrix
        out = np.zeros((len(ts),) + F.shape)
        t0 = F.copy()
        out += coef[0][:, None, None] * t0
        if n_terms > 1:
            t1 = scale * (L @ t0) - t0
            out += coef[1][:, None, None] * t1
            for k in range(2, n_terms):
                t2 = 2.0 * (scale * (L @ t1) - t1) - t0
                for j in np.nonzero(live[k])[0]:
                    out[j] += coef[k, j] * t2
                t0, t1 = t1, t2
        return out

    # conveniences -------------------------------------------------------
    def apply(self, t: float, f: Field) -> Field:
        return Field(self.grid, self.apply_array([t], f.flat)[0])

    def kernel(self, t: float) -> np.ndarray:
        """Dense kernel density ``T_t(x, y)`` (``N x N``)."""
        if self.method == "spectral":
            K = (self.evecs * np.exp(-t * self.evals)) @ self.evecs.T
        else:
            K = self.apply_array([t], np.eye(self.grid.size))[0]
        return K / self.grid.cell_volume

    def kernel_columns(self, t: float, idx: Sequence[int]) -> np.ndarray:
        E = np.zeros((self.grid.size, len(idx)))
        E[np.asarray(idx), np.arange(len(idx))] = 1.0
        return self.apply_array([t], E)[0] / self.grid.cell_volume


def make_propagator(V: Potential, method: str = "auto") -> Propagator:
    return Propagator(assemble_operator(V), method=method)


def heat_apply(P: Propagator, t: float, f: Field) -> Field:
    if t < 0:
        raise GridError("heat time must be nonnegative")
    if t == 0:
        return Field(f.grid, f.values.copy())
    return P.apply(t, f)


# Gaussian (free) heat kernel --------------------------------------------------

def gauss_kernel(t: float, x, y) -> np.ndarray:
    """``(4πt)^{-d/2} exp(-|x-y|^2 / 4t)``."""
    if not t > 0:
        raise GridError("Gaussian time must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = x.shape[-1]
    r2 = np.sum((x - y) ** 2, axis=-1)
    return (4 * np.pi * t) ** (-d / 2) * np.exp(-r2 / (4 * t))


def _gauss_taps(grid: Grid, t: float) -> np.ndarray:
    half = int(min(grid.m - 1, np.ceil(np.sqrt(4 * t * 40.0) / grid.h)))
    s = grid.h * np.arange(-half, half + 1)
    return grid.h * (4 * np.pi * t) ** -0.5 * np.exp(-s ** 2 / (4 * t))


def gauss_apply_array(grid: Grid, t: float, values: np.ndarray) -> np.ndarray:
    """Separable quadrature of ``∫ p_t(x, y) f(y) dy`` with zero extension.

    Extra leading axes of ``values`` are treated as a batch.
    """
    if not t > 0:
        raise GridError("Gaussian time must be positive")
    taps = _gauss_taps(grid, t)
    out = values
    lead = values.ndim - grid.d
    for axis in range(grid.d):
        out = ndimage.convolve1d(out, taps, axis=lead + axis, mode="constant")
    return out


def gauss_apply(t: float, f: Field) -> Field:
    return Field(f.grid, gauss_apply_array(f.grid, t, f.values))


def free_lattice_kernel(grid: Grid, t: float, x_idx, y_idx) -> np.ndarray:
    """Kernel density of ``e^{tΔ_h}`` on the infinite lattice ``hZ^d``."""
    tau = t / grid.h ** 2
    k = np.abs(np.asarray(x_idx) - np.asarray(y_idx))
    vals = ive(k, 2.0 * tau) / grid.h
    return np.prod(vals, axis=-1)


# Maximal operators ------------------------------------------------------------

def _check_times(t_set) -> np.ndarray:
    ts = np.asarray(t_set, dtype=float).reshape(-1)
    if ts.size == 0:
        raise GridError("empty t_set")
    return ts


def maximal_ML_many(P: Propagator, fields: Sequence[Field],
                    t_set: Optional[Sequence[float]] = None,
                    chunk: int = 16) -> list[Field]:
    g = P.grid
    ts = _check_times(default_heat_times(g) if t_set is None else t_set)
    out = []
    for start in range(0, len(fields), chunk):
        block = fields[start:start + chunk]
        F = np.stack([f.flat for f in block], axis=1)
        vals = np.abs(P.apply_array(ts, F)).max(axis=0)
        out.extend(Field(g, vals[:, j]) for j in range(len(block)))
    return out


def maximal_ML(P: Propagator, f: Field,
               t_set: Optional[Sequence[float]] = None) -> Field:
    """``sup_t |T_t f|`` over the dyadic time set."""
    return maximal_ML_many(P, [f], t_set)[0]


def local_times(grid: Grid, n: int) -> np.ndarray:
    ts = default_heat_times(grid)
    return ts[ts < 2.0 ** (-n)]


def maximal_local_array(grid: Grid, values: np.ndarray, n: int,
                        t_set: Optional[Sequence[float]] = None) -> np.ndarray:
    ts = local_times(grid, n) if t_set is None else np.asarray(t_set, dtype=float)
    ts = _check_times(ts[ts < 2.0 ** (-n)])
    best = np.zeros_like(values)
    for t in ts:
        np.maximum(best, np.abs(gauss_apply_array(grid, t, values)), out=best)
    return best


def maximal_local(f: Field, n: int,
                  t_set: Optional[Sequence[float]] = None) -> Field:
    """``sup_{t < 2^-n} |P_√t * f|`` over the truncated dyadic time set."""
    return Field(f.grid, maximal_local_array(f.grid, f.values, n, t_set))


def _ball_kernel(d: int, radius_pts: float) -> np.ndarray:
    half = int(np.ceil(radius_pts))
    ax = np.arange(-half, half + 1, dtype=float)
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    return (sum(c ** 2 for c in mesh) < radius_pts ** 2).astype(float)


def _fft_conv_same(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    from scipy.signal import fftconvolve
    return fftconvolve(values, kernel, mode="same")


def hardy_littlewood(f: Field, radii: Optional[Sequence[float]] = None) -> Field:
    """Sup over dyadic radii in ``[h, 2R]`` of grid-point ball means of ``|f|``."""
    g = f.grid
    radii = dyadic_radii(g.h, 2 * g.R) if radii is None else radii
    absf = np.abs(f.values)
    ones = np.ones(g.shape)
    best = absf.copy()
    for r in radii:
        kern = _ball_kernel(g.d, r / g.h)
        if kern.size == 1:
            continue
        s = _fft_conv_same(absf, kern)
        cnt = np.rint(_fft_conv_same(ones, kern))
        np.maximum(best, s / cnt, out=best)
    return Field(g, best)


# Grand maximal function -------------------------------------------------------

def _gaussian_profile(s):
    return (lambda r: np.exp(-r ** 2 / (2 * s * s)),
            lambda r: -r / (s * s) * np.exp(-r ** 2 / (2 * s * s)),
            8.7 * s)


def _bump_profile(a):
    def val(r):
        u = np.asarray(r, dtype=float) / a
        out = np.zeros_like(u)
        ins = u < 1
        out[ins] = np.exp(-1.0 / (1.0 - u[ins] ** 2))
        return out

    def der(r):
        u = np.asarray(r, dtype=float) / a
        out = np.zeros_like(u)
        ins = u < 1
        ui = u[ins]
        out[ins] = np.exp(-1.0 / (1.0 - ui ** 2)) * (-2 * ui / (1 - ui ** 2) ** 2) / a
        return out

    return val, der, a


def _envelope_scale(d: int, val, der, support: float) -> float:
    def ratio(r):
        r = np.asarray(r, dtype=float)
        num = (1.0 + r ** 2) ** (-(d + 1))
        den = np.abs(val(r)) + np.abs(der(r))
        return np.where(den > 0, num / np.maximum(den, 1e-300), np.inf)

    rs = np.linspace(0.0, support, 20001)
    vals = ratio(rs)
    i = int(np.argmin(vals))
    lo, hi = rs[max(i - 1, 0)], rs[min(i + 1, len(rs) - 1)]
    res = optimize.minimize_scalar(lambda r: float(ratio(r)), bounds=(lo, hi),
                                   method="bounded",
                                   options={"xatol": 1e-12})
    c = min(float(vals[i]), float(res.fun))
    return c * (1.0 - 1e-9)


@dataclass(eq=False)
class TestDictionary:
    """Finite surrogate for the normalized test class of the grand maximal
    function: rescaled Gaussians and bumps, scales and admissible offsets."""

    __test__ = False

    grid: Grid
    members: list
    scales: np.ndarray
    max_offsets: int = 9

    def envelope_violation(self) -> float:
        """Largest ``|φ| + |∇φ| - (1+|x|^2)^{-(d+1)}`` over grid samples."""
        g = self.grid
        r = g.radius
        env = (1.0 + r ** 2) ** (-(g.d + 1))
        worst = -np.inf
        for prof in self.members:
            total = np.abs(prof(r)) + np.abs(prof.derivative(r))
            worst = max(worst, float(np.max(total - env)))
        return worst

    def offsets(self, t: float) -> np.ndarray:
        radius_pts = t / self.grid.h
        stride = max(1, int(np.ceil(2 * radius_pts / self.max_offsets)))
        return ball_offsets(self.grid.d, radius_pts, stride)


@dataclass(frozen=True, eq=False)
class _Member(RadialProfile):
    deriv: object = None

    def derivative(self, r):
        return self.scale * self.deriv(np.asarray(r, dtype=float))


def default_dictionary(grid: Grid, n_scales: int = 12) -> TestDictionary:
    members = []
    for s in (0.2, 0.35, 0.5, 0.7):
        val, der, supp = _gaussian_profile(s)
        c = _envelope_scale(grid.d, val, der, supp)
        members.append(_Member(f"gauss{s:g}", val, supp, False, c, deriv=der))
    for a in (0.5, 0.75, 1.0, 1.5):
        val, der, supp = _bump_profile(a)
        c = _envelope_scale(grid.d, val, der, supp)
        members.append(_Member(f"bump{a:g}", val, supp, False, c, deriv=der))
    scales = np.geomspace(grid.h, 2 * grid.R, n_scales)
    return TestDictionary(grid, members, scales)


def _grand_scale_values(D: TestDictionary, t: float,
                        stack: np.ndarray) -> np.ndarray:
    """``max_φ |f * φ_t|`` for a batch ``stack`` of shape ``(k,) + shape``."""
    g = D.grid
    half = int(min(g.m - 1, np.floor(max(p.support for p in D.members) * t / g.h)))
    pad = [sfft.next_fast_len(g.m + 2 * half, real=True)] * g.d
    axes = tuple(range(1, g.d + 1))
    Fh = sfft.rfftn(stack, s=pad, axes=axes)
    ax = g.h * np.arange(-half, half + 1)
    mesh = np.meshgrid(*([ax] * g.d), indexing="ij")
    r = np.sqrt(sum(c ** 2 for c in mesh))
    best = np.zeros(stack.shape)
    sl = (slice(None),) + tuple(slice(half, half + g.m) for _ in range(g.d))
    for prof in D.members:
        kern = t ** (-g.d) * prof(r / t) * g.cell_volume
        Kh = sfft.rfftn(kern, s=pad)
        conv = sfft.irfftn(Fh * Kh[None], s=pad, axes=axes)[sl]
        np.maximum(best, np.abs(conv), out=best)
    return best


def grand_maximal_many(fields: Sequence[Field], D: TestDictionary) -> list[Field]:
    if not D.members:
        raise GridError("empty test dictionary")
    g = D.grid
    stack = np.stack([f.values for f in fields])
    total = np.zeros(stack.shape)
    for t in D.scales:
        vals = _grand_scale_values(D, t, stack)
        for o in D.offsets(t):
            shifted = np.stack([shift_array(v, o) for v in vals])
            np.maximum(total, shifted, out=total)
    return [Field(g, v) for v in total]


def grand_maximal(f: Field, D: TestDictionary) -> Field:
    """``sup_φ sup_{|y-x|<t} |f * φ_t(y)|`` over the finite dictionary."""
    return grand_maximal_many([f], D)[0]


# Kernel diagnostics -----------------------------------------------------------

@dataclass
class KernelRegularityReport:
    delta_hat: float
    C_hat: float
    table: list = field(default_factory=list)  # (t, x, y, z, lhs, rhs, ratio)
    unstable: bool = False

    def rows(self):
        for t, x, y, z, lhs, rhs, ratio in self.table:
            yield [t, x, y, z, lhs, rhs, ratio]


def sample_regularity_quadruples(P: Propagator, n: int, rng,
                                 t_set: Optional[Sequence[float]] = None):
    """Random ``(t, x, y, z)`` with ``|y-z| < |x-y|/2`` and ``|x-y| <= 2√t``."""
    g = P.grid
    ts = default_heat_times(g)[2:-3] if t_set is None else np.asarray(t_set)
    pts = g.coords.reshape(-1, g.d)
    out = []
    tries = 0
    while len(out) < n and tries < 100 * n:
        tries += 1
        t = float(rng.choice(ts))
        x, y, z = rng.integers(0, g.size, 3)
        dxy = np.linalg.norm(pts[x] - pts[y])
        dyz = np.linalg.norm(pts[y] - pts[z])
        if 0 < dyz < dxy / 2 and dxy <= 2 * np.sqrt(t):
            out.append((t, int(x), int(y), int(z)))
    return out


def kernel_regularity(P: Propagator, sample, deltas=None) -> KernelRegularityReport:
    """Largest Hölder exponent on a lattice whose ratio table stays bounded.

    A lattice value counts as bounded when the worst ratio among the
    smallest-third values of ``|y-z|/√t`` does not exceed twice the worst
    ratio over the remaining samples.
    """
    g = P.grid
    deltas = np.round(np.arange(0.1, 1.01, 0.1), 10) if deltas is None else deltas
    pts = g.coords.reshape(-1, g.d)
    by_t: dict = {}
    for t, x, y, z in sample:
        by_t.setdefault(t, []).append((x, y, z))
    rec = []
    for t, triples in by_t.items():
        cols = sorted({c for _, y, z in triples for c in (y, z)})
        K = P.kernel_columns(t, cols)
        pos = {c: i for i, c in enumerate(cols)}
        for x, y, z in triples:
            lhs = abs(K[x, pos[y]] - K[x, pos[z]])
            dxy = np.linalg.norm(pts[x] - pts[y])
            dyz = np.linalg.norm(pts[y] - pts[z])
            rec.append((t, x, y, z, lhs, dxy, dyz))
    if not rec:
        return KernelRegularityReport(float("nan"), float("nan"), unstable=True)
    arr = np.array([(r[0], r[4], r[5], r[6]) for r in rec])
    t, lhs, dxy, dyz = arr.T
    scale = dyz / np.sqrt(t)
    small = scale <= np.quantile(scale, 1 / 3)
    best_delta, best_C, best_rhs = None, None, None
    for delta in deltas:
        rhs = scale ** delta * t ** (-g.d / 2) * np.exp(-dxy ** 2 / t)
        ratio = lhs / rhs
        if small.all() or (~small).sum() == 0:
            ok = True
        else:
            ok = ratio[small].max() <= 2.0 * ratio[~small].max()
        if ok:
            best_delta, best_C, best_rhs = float(delta), float(ratio.max()), rhs
    unstable = best_delta is None
    if unstable:
        best_delta = float(deltas[0])
        best_rhs = scale ** best_delta * t ** (-g.d / 2) * np.exp(-dxy ** 2 / t)
        best_C = float((lhs / best_rhs).max())
    table = [(r[0], r[1], r[2], r[3], r[4], rh, r[4] / rh)
             for r, rh in zip(rec, best_rhs)]
    return KernelRegularityReport(best_delta, best_C, table, unstable)


@dataclass
class DominationReport:
    min_entry: float
    max_ratio_continuous: float
    max_ratio_lattice: float
    per_time: list = field(default_factory=list)  # (t, min, ratio_cont, ratio_lat)

    def holds(self, slack: float = 1e-6, neg_slack: float = 1e-10,
              against: str = "continuous") -> bool:
        ratio = (self.max_ratio_continuous if against == "continuous"
                 else self.max_ratio_lattice)
        return self.min_entry >= -neg_slack and ratio <= 1.0 + slack


def gaussian_domination_check(P: Propagator,
                              t_set: Optional[Sequence[float]] = None,
                              columns: Optional[Sequence[int]] = None,
                              floor: float = 1e-10) -> DominationReport:
    """Entrywise comparison of ``T_t(x, y)`` with ``p_t(x, y)``.

    Ratios are taken over entries above ``floor`` times the largest entry at
    that time; smaller entries sit at roundoff level.  Also reports the
    comparison with the free lattice heat kernel, the exact discrete
    counterpart of ``p_t`` for the discretized operator.
    """
    g = P.grid
    ts = default_heat_times(g) if t_set is None else np.asarray(t_set, dtype=float)
    cols = np.arange(g.size) if columns is None else np.asarray(columns)
    pts = g.coords.reshape(-1, g.d)
    idx = np.stack(np.unravel_index(np.arange(g.size), g.shape), axis=1)
    report = DominationReport(np.inf, 0.0, 0.0)
    for t in ts:
        K = P.kernel_columns(t, cols)
        p = gauss_kernel(t, pts[:, None, :], pts[None, cols, :])
        lat = free_lattice_kernel(g, t, idx[:, None, :], idx[None, cols, :])
        mn = float(K.min())
        live = K > floor * K.max()
        with np.errstate(divide="ignore", invalid="ignore"):
            rc_max = float(np.max(K[live] / p[live]))
            rl_max = float(np.max(K[live] / lat[live]))
        report.per_time.append((float(t), mn, rc_max, rl_max))
        report.min_entry = min(report.min_entry, mn)
        report.max_ratio_continuous = max(report.max_ratio_continuous, rc_max)
        report.max_ratio_lattice = max(report.max_ratio_lattice, rl_max)
    return report
