"""Uniform grids, sampled fields, quadrature, balls and radial convolution.

Every function in the package is sampled on a :class:`Grid`: the box
``[-R, R]^d`` with ``m`` points per axis.  A :class:`Field` pairs a grid with
an array of shape ``(m,) * d`` (row-major).  Functions are extended by zero
outside the box.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _integrate
from scipy import signal
from scipy.special import gamma

from .errors import BallOffGrid, GridError


@dataclass(frozen=True)
class Grid:
    d: int
    R: float
    m: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise GridError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.m < 2:
            raise GridError(f"need at least 2 points per axis, got {self.m}")
        if not self.R > 0:
            raise GridError(f"half width must be positive, got {self.R}")

    @property
    def h(self) -> float:
        return 2.0 * self.R / (self.m - 1)

    @property
    def shape(self) -> tuple:
        return (self.m,) * self.d

    @property
    def size(self) -> int:
        return self.m ** self.d

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.R + self.h * np.arange(self.m)

    @cached_property
    def coords(self) -> np.ndarray:
        """Array of shape ``shape + (d,)`` holding the point coordinates."""
        mesh = np.meshgrid(*([self.axis] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def radius(self) -> np.ndarray:
        """``|x|`` at every grid point."""
        return np.sqrt(np.sum(self.coords ** 2, axis=-1))

    @cached_property
    def weights(self) -> np.ndarray:
        """Tensor-product trapezoid weights."""
        w1 = np.full(self.m, self.h)
        w1[0] = w1[-1] = 0.5 * self.h
        w = w1
        for _ in range(self.d - 1):
            w = np.multiply.outer(w, w1)
        return w

    def sample(self, func: Callable[[np.ndarray], np.ndarray]) -> "Field":
        """Sample ``func`` (taking ``(..., d)`` coordinates) on the grid."""
        return Field(self, np.asarray(func(self.coords), dtype=float))

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape))

    def constant(self, c: float) -> "Field":
        return Field(self, np.full(self.shape, float(c)))

    def index_of(self, x: Sequence[float]) -> tuple:
        """Index of the grid point nearest to ``x`` (clipped to the box)."""
        x = np.asarray(x, dtype=float).reshape(self.d)
        idx = np.rint((x + self.R) / self.h).astype(int)
        return tuple(np.clip(idx, 0, self.m - 1))

    def point(self, index: Sequence[int]) -> np.ndarray:
        return -self.R + self.h * np.asarray(index, dtype=float)

    def refined(self, m: int) -> "Grid":
        return Grid(self.d, self.R, m)


def make_grid(d: int, R: float, m: int) -> Grid:
    return Grid(int(d), float(R), int(m))


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            if vals.size != self.grid.size:
                raise GridError(
                    f"field has {vals.size} values, grid needs {self.grid.size}")
            vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise GridError("field values must be finite")
        object.__setattr__(self, "values", vals)

    def _wrap(self, values) -> "Field":
        return Field(self.grid, values)

    def __add__(self, other):
        return self._wrap(self.values + _vals(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.values - _vals(other))

    def __rsub__(self, other):
        return self._wrap(_vals(other) - self.values)

    def __mul__(self, other):
        return self._wrap(self.values * _vals(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._wrap(self.values / _vals(other))

    def __neg__(self):
        return self._wrap(-self.values)

    def __abs__(self):
        return self._wrap(np.abs(self.values))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def map(self, func) -> "Field":
        return self._wrap(func(self.values))


def _vals(other):
    return other.values if isinstance(other, Field) else other


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GridError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center",
                           tuple(float(c) for c in np.atleast_1d(self.center)))

    def mask(self, grid: Grid) -> np.ndarray:
        """Grid points strictly inside the (open) ball."""
        c = np.asarray(self.center)
        dist2 = np.sum((grid.coords - c) ** 2, axis=-1)
        return dist2 < self.radius ** 2

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)

    @property
    def volume_continuous(self) -> float:
        d = len(self.center)
        return ball_volume(d, self.radius)


def ball_volume(d: int, r: float) -> float:
    return float(np.pi ** (d / 2) / gamma(d / 2 + 1) * r ** d)


def integrate(f: Field) -> float:
    """Tensor-product trapezoid rule over the box."""
    return float(np.sum(f.grid.weights * f.values))


def ball_average(f: Field, B: Ball) -> float:
    mask = B.mask(f.grid)
    if not mask.any():
        raise BallOffGrid("ball off grid")
    return float(f.values[mask].mean())


# Radial profiles and convolution ---------------------------------------------

def _bump(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


@dataclass(frozen=True)
class RadialProfile:
    """A radial kernel ``k(x) = c * profile(|x|)``.

    ``support`` is the radius outside which the profile vanishes (or is
    negligible); with ``normalized`` the sampled kernel is rescaled to unit
    discrete mass on every grid it is used on.
    """

    name: str
    profile: Callable[[np.ndarray], np.ndarray]
    support: float = 1.0
    normalized: bool = True
    scale: float = 1.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __call__(self, r):
        return self.scale * self.profile(np.asarray(r, dtype=float))

    def continuous_mass(self, d: int) -> float:
        """``∫ k`` over ``R^d`` by adaptive radial quadrature."""
        surface = d * np.pi ** (d / 2) / gamma(d / 2 + 1)
        val, _ = _integrate.quad(lambda r: self(r) * r ** (d - 1), 0.0,
                                 self.support, limit=200)
        return surface * val

    def sampled(self, grid: Grid, t: float) -> np.ndarray:
        """The kernel ``t^{-d} k(x / t)`` on grid offsets within the support.

        Returns an array of odd side length centered on the zero offset.
        """
        key = (grid.d, grid.h, grid.m, float(t))
        if key in self._cache:
            return self._cache[key]
        half = int(np.floor(self.support * t / grid.h + 1e-12))
        half = min(half, grid.m - 1)
        ax = grid.h * np.arange(-half, half + 1)
        mesh = np.meshgrid(*([ax] * grid.d), indexing="ij")
        r = np.sqrt(sum(c ** 2 for c in mesh))
        k = t ** (-grid.d) * self(r / t)
        if self.normalized:
            mass = k.sum() * grid.cell_volume
            if mass <= 0:
                raise GridError(
                    f"kernel {self.name!r} unresolved at scale {t} on h={grid.h}")
            k = k / mass
        self._cache[key] = k
        return k


def bump_profile(normalized: bool = True) -> RadialProfile:
    """The standard bump ``exp(-1/(1-|x|^2))`` on the unit ball."""
    return RadialProfile("bump", _bump, support=1.0, normalized=normalized)


def convolve_array(values: np.ndarray, kernel: np.ndarray,
                   cell_volume: float) -> np.ndarray:
    """Zero-extended discrete convolution ``h^d sum_y k(x-y) f(y)``."""
    if kernel.size == 1:
        return values * (kernel.reshape(-1)[0] * cell_volume)
    return signal.convolve(values, kernel, mode="same") * cell_volume


def convolve(f: Field, k: RadialProfile, t: float) -> Field:
    if not t > 0:
        raise GridError(f"convolution scale must be positive, got {t}")
    kern = k.sampled(f.grid, t)
    return Field(f.grid, convolve_array(f.values, kern, f.grid.cell_volume))


# Array helpers shared by the maximal operators -------------------------------

def shift_array(arr: np.ndarray, offset: Sequence[int], fill=0.0) -> np.ndarray:
    """``out[i] = arr[i + offset]`` where defined, ``fill`` elsewhere."""
    out = np.full_like(arr, fill)
    src, dst = [], []
    for o, n in zip(offset, arr.shape):
        if o >= 0:
            src.append(slice(o, n))
            dst.append(slice(0, n - o))
        else:
            src.append(slice(0, n + o))
            dst.append(slice(-o, n))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def ball_offsets(d: int, radius_pts: float, stride: int = 1) -> np.ndarray:
    """Integer offsets ``o`` with ``|o| < radius_pts`` on a strided lattice."""
    half = int(np.ceil(radius_pts))
    ax = np.arange(-half, half + 1)
    ax = ax[ax % stride == 0]
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    offs = np.stack([c.reshape(-1) for c in mesh], axis=1)
    keep = np.sum(offs.astype(float) ** 2, axis=1) < radius_pts ** 2
    return offs[keep]


def ball_sampler(grid: Grid, stride: int, radii: Sequence[float]):
    """Balls centered on a stride sublattice anchored at the middle index."""
    c0 = (grid.m - 1) // 2
    idx = [i for i in range(grid.m) if (i - c0) % stride == 0]
    centers = np.array(np.meshgrid(*([grid.axis[idx]] * grid.d),
                                   indexing="ij")).reshape(grid.d, -1).T
    for c in centers:
        for r in radii:
            yield Ball(tuple(c), float(r))


def dyadic_radii(lo: float, hi: float) -> np.ndarray:
    """``lo * 2^j`` for all ``j >= 0`` with value ``<= hi``."""
    if hi < lo:
        return np.array([lo])
    n = int(np.floor(np.log2(hi / lo) + 1e-12))
    return lo * 2.0 ** np.arange(n + 1)


def finite_difference_gradient_norm(values: np.ndarray, h: float) -> np.ndarray:
    """Euclidean norm of the central-difference gradient (one-sided at edges)."""
    grads = np.gradient(values, h) if values.ndim > 1 else [np.gradient(values, h)]
    return np.sqrt(sum(g ** 2 for g in grads))


def local_window(grid: Grid, center: Sequence[float], radius: float):
    """Slices of the index box covering ``B(center, radius)``."""
    c = np.asarray(center, dtype=float)
    lo = np.floor((c - radius + grid.R) / grid.h).astype(int)
    hi = np.ceil((c + radius + grid.R) / grid.h).astype(int) + 1
    lo = np.clip(lo, 0, grid.m)
    hi = np.clip(hi, 0, grid.m)
    return tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))

