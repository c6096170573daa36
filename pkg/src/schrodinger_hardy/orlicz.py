"""Growth functions, weights and the Luxemburg gauge solver."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as _integrate
from scipy import optimize
from scipy.special import gamma, logsumexp, roots_legendre

from .errors import DegenerateBall, InvalidIntegrand, NormOverflow
from .grid import Ball, Field, Grid

LAMBDA_CAP = 1e12


# Growth functions -------------------------------------------------------------

def xi(t):
    """``Ξ(t) = t / log(e + t)``."""
    t = np.asarray(t, dtype=float)
    return t / np.log(np.e + t)


def _xi_inverse_scalar(s: float, tol: float) -> float:
    if s < 0:
        raise ValueError("xi_inverse needs s >= 0")
    if s == 0:
        return 0.0
    # Ξ(t) <= t, and t <= s log(e+t) gives a crude upper bracket.
    hi = s * (2.0 + np.log(np.e + 2.0 * s)) + 1.0
    while xi(hi) < s:
        hi *= 2.0
    return optimize.brentq(lambda t: float(xi(t)) - s, s, hi,
                           xtol=1e-300, rtol=tol, maxiter=500)


def xi_inverse(s, tol: float = 1e-14):
    """Inverse of Ξ by bracketed bisection (Brent)."""
    if np.ndim(s) == 0:
        return _xi_inverse_scalar(float(s), tol)
    return np.vectorize(lambda v: _xi_inverse_scalar(float(v), tol))(s)


@dataclass(frozen=True)
class GrowthFunction:
    name: str
    phi: Callable[[np.ndarray], np.ndarray]
    lower_type: float
    _inverse: Optional[Callable[[float], float]] = None

    def __call__(self, t):
        return self.phi(np.asarray(t, dtype=float))

    def inverse(self, s: float) -> float:
        if self._inverse is not None:
            return self._inverse(s)
        if s <= 0:
            return 0.0
        hi = 1.0
        while self(hi) < s:
            hi *= 2.0
        return optimize.brentq(lambda t: float(self(t)) - s, 0.0, hi,
                               xtol=1e-300, rtol=1e-14, maxiter=500)


def xi_growth(p: float = 0.9) -> GrowthFunction:
    return GrowthFunction("xi", xi, p, xi_inverse)


@dataclass
class GrowthTypeReport:
    p: float
    lower_C: float
    upper_C: float

    def holds(self, C: float) -> bool:
        return self.lower_C <= C and self.upper_C <= C


def growth_type_check(phi: GrowthFunction, p: float,
                      s_values: Optional[Sequence[float]] = None,
                      t_values: Optional[Sequence[float]] = None
                      ) -> GrowthTypeReport:
    """Empirical constants of ``Φ(st) <= C s^p Φ(t)`` (``0<s<=1``) and
    ``Φ(st) <= C s Φ(t)`` (``s >= 1``)."""
    s_lo = np.geomspace(1e-6, 1.0, 61) if s_values is None else np.asarray(s_values)
    t = np.geomspace(1e-6, 1e6, 121) if t_values is None else np.asarray(t_values)
    s_lo = s_lo[(s_lo > 0) & (s_lo <= 1)]
    s_hi = 1.0 / s_lo
    S, T = np.meshgrid(s_lo, t, indexing="ij")
    lower = phi(S * T) / (S ** p * phi(T))
    S2, T2 = np.meshgrid(s_hi, t, indexing="ij")
    upper = phi(S2 * T2) / (S2 * phi(T2))
    return GrowthTypeReport(p, float(lower.max()), float(upper.max()))


def remark_lower_types(d: int, delta: float) -> list[float]:
    """The lower types at which Ξ is checked: 0.5, 0.9 and (2d+δ)/(2(d+δ))."""
    return [0.5, 0.9, (2 * d + delta) / (2 * (d + delta))]


def subadditivity_check(phi: GrowthFunction, sequences) -> float:
    """Worst ``Φ(sum t_j) / sum Φ(t_j)`` over nonnegative sequences."""
    worst = 0.0
    for seq in sequences:
        seq = np.asarray(seq, dtype=float)
        den = float(np.sum(phi(seq)))
        if den > 0:
            worst = max(worst, float(phi(seq.sum())) / den)
    return worst


def xi_over_t_nonincreasing(t_values) -> bool:
    t = np.sort(np.asarray(t_values, dtype=float))
    r = xi(t) / t
    return bool(np.all(np.diff(r) <= 1e-15 * r[:-1]))


# Weights ----------------------------------------------------------------------

@dataclass(frozen=True)
class Weight:
    name: str
    func: Callable[[np.ndarray], np.ndarray]   # takes |x|-free coords (..., d)

    def __call__(self, coords):
        return self.func(np.asarray(coords, dtype=float))

    def on(self, grid: Grid) -> np.ndarray:
        return self.func(grid.coords)

    def measure(self, grid: Grid, mask: Optional[np.ndarray] = None) -> float:
        """Trapezoid quadrature of ``w`` over the box, or over ``mask``."""
        vals = grid.weights * self.on(grid)
        return float(vals.sum() if mask is None else vals[mask].sum())


def sigma() -> Weight:
    """``σ(x) = 1 / log(e + |x|)``."""
    return Weight("sigma",
                  lambda x: 1.0 / np.log(np.e + np.sqrt(np.sum(x ** 2, axis=-1))))


def exp_weight(d: int) -> Weight:
    return Weight("exp",
                  lambda x: (1.0 + np.sqrt(np.sum(x ** 2, axis=-1))) ** (-2.0 * d))


def unit_weight() -> Weight:
    return Weight("one", lambda x: np.ones(x.shape[:-1]))


def power_weight(a: float) -> Weight:
    return Weight(f"abs^{a:g}",
                  lambda x: np.sqrt(np.sum(x ** 2, axis=-1)) ** a)


def _ball_weight_values(w: Weight, grid: Grid, B: Ball) -> np.ndarray:
    mask = B.mask(grid)
    if not mask.any():
        raise DegenerateBall("degenerate ball")
    return w.on(grid)[mask]


def muckenhoupt_ratio(w: Weight, q: float, B: Ball, grid: Grid) -> float:
    """``avg_B w * (avg_B w^{-1/(q-1)})^{q-1}`` over grid points of ``B``."""
    if not q > 1:
        raise ValueError("muckenhoupt_ratio needs q > 1")
    vals = _ball_weight_values(w, grid, B)
    if np.any(vals <= 0):
        return float("inf")
    return float(vals.mean() * np.mean(vals ** (-1.0 / (q - 1))) ** (q - 1))


def a1_ratio(w: Weight, B: Ball, grid: Grid) -> float:
    """``avg_B w / min_B w``; infinite when the minimum vanishes."""
    vals = _ball_weight_values(w, grid, B)
    mn = float(vals.min())
    if mn <= 0:
        return float("inf")
    return float(vals.mean()) / mn


# Continuous σ integrals (radial quadrature about the ball center) -----------

def _sphere_area(d: int) -> float:
    return 2 * np.pi ** (d / 2) / gamma(d / 2)


_GL_NODES, _GL_WEIGHTS = roots_legendre(192)


def _angular_sigma(d: int, x0_norm: float, s):
    """Mean of σ over the sphere ``|x - x0| = s`` (vectorized in ``s``)."""
    s = np.asarray(s, dtype=float)
    if d == 1:
        return 0.5 * (1 / np.log(np.e + np.abs(x0_norm + s))
                      + 1 / np.log(np.e + np.abs(x0_norm - s)))
    th = 0.5 * np.pi * (_GL_NODES + 1.0)
    jac = np.sin(th) ** (d - 2) * _GL_WEIGHTS
    ss = s[..., None]
    r2 = x0_norm ** 2 + ss ** 2 + 2 * x0_norm * ss * np.cos(th)
    vals = 1.0 / np.log(np.e + np.sqrt(np.maximum(r2, 0.0)))
    return (vals * jac).sum(axis=-1) / jac.sum()


def sigma_ball_measure(d: int, x0, r: float) -> float:
    """``σ(B(x0, r))`` in ``R^d`` (no box)."""
    xn = float(np.linalg.norm(np.atleast_1d(x0)))
    val, _ = _integrate.quad(lambda s: float(_angular_sigma(d, xn, s)) * s ** (d - 1),
                             0.0, r, limit=200, points=[xn] if 0 < xn < r else None)
    return _sphere_area(d) * val


def tail_weight_check(d: int, x0, r: float, delta: float) -> float:
    """``∫_{|x-x0|>2r} (r/|x-x0|)^{d+δ/2} σ(x) dx / σ(B(x0, 2r))`` in ``R^d``."""
    if not (r > 0 and delta > 0):
        raise ValueError("tail_weight_check needs r > 0 and delta > 0")
    xn = float(np.linalg.norm(np.atleast_1d(x0)))

    # shells s = 2r e^u: the shell integrand is r^d (r/s)^{δ/2} times mean σ
    def integrand(u):
        s = 2 * r * np.exp(u)
        return float(_angular_sigma(d, xn, s)) * r ** d * (r / s) ** (delta / 2)

    u_max = min(2.0 * 40.0 / delta, 650.0)
    tail, _ = _integrate.quad(integrand, 0.0, u_max, limit=400)
    tail *= _sphere_area(d)
    return tail / sigma_ball_measure(d, x0, 2 * r)


def sigma_doubling_ratio(d: int, x0, r: float) -> float:
    return sigma_ball_measure(d, x0, 2 * r) / sigma_ball_measure(d, x0, r)


# Luxemburg gauge --------------------------------------------------------------

@dataclass
class LuxemburgResult:
    lambda_star: float
    residual: float
    iterations: int


def solve_gauge(functional: Callable[[float], float], scale: float,
                rtol: float = 1e-12, cap: float = LAMBDA_CAP,
                spot_checks: int = 6) -> LuxemburgResult:
    """``inf{λ > 0 : functional(λ) <= 1}`` for a nonincreasing functional.

    Brackets geometrically from ``scale`` and bisects in ``log λ``.
    """
    lo = hi = float(scale)
    f_hi = functional(hi)
    its = 0
    if f_hi > 1:
        while f_hi > 1:
            lo, hi = hi, hi * 4.0
            if hi > cap:
                raise NormOverflow("norm overflow")
            f_hi = functional(hi)
            its += 1
        f_lo = functional(lo)
    else:
        f_lo = f_hi
        while f_lo <= 1:
            hi, lo = lo, lo / 4.0
            if lo < 1e-300:
                return LuxemburgResult(0.0, f_lo - 1.0, its)
            f_lo = functional(lo)
            its += 1
    probes = np.geomspace(lo, hi, spot_checks)
    vals = [functional(p) for p in probes]
    if any(b > a * (1 + 1e-10) + 1e-300 for a, b in zip(vals, vals[1:])):
        raise InvalidIntegrand("invalid integrand: functional not nonincreasing")
    a, b = np.log(lo), np.log(hi)
    while b - a > rtol:
        mid = 0.5 * (a + b)
        if functional(np.exp(mid)) > 1:
            a = mid
        else:
            b = mid
        its += 1
    lam = float(np.exp(b))
    return LuxemburgResult(lam, functional(lam) - 1.0, its)


# Integrand families: values of φ(u, x) with u = g(x)/λ, ``r = |x|``.

def integrand_xi(u, r):
    return xi(u)


def integrand_log(u, r):
    return u / (np.log(np.e + u) + np.log(np.e + r))


def integrand_exp(u, r):
    return np.expm1(u)


_INTEGRANDS = {"xi": integrand_xi, "log": integrand_log, "exp": integrand_exp}


def _functional_factory(g: Field, phi, w: Optional[Weight]):
    grid = g.grid
    dens = grid.weights * (1.0 if w is None else w.on(grid))
    vals = np.abs(g.values)
    keep = (vals > 0) & (dens > 0)
    dv, gv, rv = dens[keep], vals[keep], grid.radius[keep]
    if phi is integrand_exp:
        logd = np.log(dv)

        def functional(lam):
            u = gv / lam
            if u.max() > 500.0:
                # log-space: e^u - 1 ~ e^u at the dominating points
                return float(np.exp(min(logsumexp(u + logd), 700.0)))
            return float(np.sum(dv * np.expm1(u)))
    else:
        def functional(lam):
            return float(np.sum(dv * phi(gv / lam, rv)))
    return functional, (float(gv.max()) if gv.size else 0.0)


def luxemburg(g: Field, phi, w: Optional[Weight] = None,
              rtol: float = 1e-12, cap: float = LAMBDA_CAP) -> LuxemburgResult:
    """``inf{λ > 0 : ∫ φ(|g(x)|/λ, |x|) w(x) dx <= 1}`` by trapezoid quadrature.

    ``phi`` is a callable ``(u, |x|) -> values`` or one of ``"xi"``,
    ``"log"``, ``"exp"``.
    """
    if isinstance(phi, str):
        phi = _INTEGRANDS[phi]
    functional, gmax = _functional_factory(g, phi, w)
    if gmax == 0:
        return LuxemburgResult(0.0, -1.0, 0)
    return solve_gauge(functional, gmax, rtol=rtol, cap=cap)


def lambda2(sigma_B: Sequence[float], sizes: Sequence[float]) -> float:
    """``inf{λ : sum σ(B_j) Ξ(s_j / λ) <= 1}`` with ``s_j = σ(B_j)^{-1/2}‖b_j‖``."""
    sB = np.asarray(sigma_B, dtype=float)
    s = np.asarray(sizes, dtype=float)
    if not np.any(s > 0):
        return 0.0
    res = solve_gauge(lambda lam: float(np.sum(sB * xi(s / lam))), float(s.max()))
    return res.lambda_star
