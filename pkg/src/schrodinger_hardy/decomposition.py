"""Covers, partitions of unity, the operator 𝔥, atoms and product splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product as _product
from typing import Optional, Sequence

import numpy as np

from .errors import CoverageHole, DegenerateInput, SupportViolation
from .grid import (Ball, Field, Grid, RadialProfile, bump_profile,
                   convolve, convolve_array, finite_difference_gradient_norm,
                   integrate, local_window)
from .norms import (bmol_parts, norm_H1L, norm_L1, norm_Llog, norm_h1n)
from .potential import CriticalRadiusProfile
from scipy import ndimage

from .semigroup import (Propagator, _gauss_taps, local_times, maximal_local_array,
                        maximal_ML_many)


def layer_radius(n: int) -> float:
    """``2^{-n/2}``."""
    return 2.0 ** (-n / 2.0)


# Cover ------------------------------------------------------------------------

@dataclass(frozen=True)
class CoverEntry:
    n: int
    k: int
    index: tuple
    center: tuple

    @property
    def radius(self) -> float:
        return layer_radius(self.n)


@dataclass(eq=False)
class Cover:
    grid: Grid
    entries: list
    layer: np.ndarray

    @property
    def layers(self) -> list[int]:
        return sorted({e.n for e in self.entries})

    def centers(self) -> np.ndarray:
        return np.array([e.center for e in self.entries]).reshape(-1, self.grid.d)

    def radii(self) -> np.ndarray:
        return np.array([e.radius for e in self.entries])

    def coverage(self) -> float:
        """Fraction of grid points inside a ball of their own layer."""
        g = self.grid
        hit = np.zeros(g.shape, dtype=bool)
        for e in self.entries:
            sl = local_window(g, e.center, e.radius)
            d2 = np.sum((g.coords[sl] - np.asarray(e.center)) ** 2, axis=-1)
            hit[sl] |= (d2 < e.radius ** 2) & (self.layer[sl] == e.n)
        return float(hit.mean())

    def overlap_counts(self, inflation: float) -> np.ndarray:
        """Per entry, the number of entries whose inflated balls meet its own."""
        c = self.centers()
        r = self.radii()
        d = np.sqrt(np.sum((c[:, None, :] - c[None, :, :]) ** 2, axis=-1))
        return np.sum(d < inflation * (r[:, None] + r[None, :]), axis=1)

    def overlap_exponent(self, inflations: Sequence[float] = (2, 4, 8)) -> float:
        """Smallest ``C`` with ``max overlap <= R^C`` for every listed ``R``."""
        return float(max(np.log(self.overlap_counts(R).max()) / np.log(R)
                         for R in inflations))

    def rows(self):
        for e in self.entries:
            yield [e.n, e.k, *e.center, e.radius]


def build_cover(profile: CriticalRadiusProfile) -> Cover:
    """Greedy maximal ``2^{-n/2}``-separated subset of each layer (row-major)."""
    g = profile.grid
    layer = np.asarray(profile.layer).reshape(g.shape)
    entries = []
    for n in profile.layers:
        r = layer_radius(n)
        blocked = np.zeros(g.shape, dtype=bool)
        member = layer == n
        k = 0
        for flat in np.flatnonzero(member.reshape(-1)):
            idx = np.unravel_index(flat, g.shape)
            if blocked[idx]:
                continue
            c = g.point(idx)
            sl = local_window(g, c, r)
            d2 = np.sum((g.coords[sl] - c) ** 2, axis=-1)
            blocked[sl] |= d2 < r ** 2
            entries.append(CoverEntry(int(n), k, tuple(int(i) for i in idx),
                                      tuple(float(v) for v in c)))
            k += 1
    return Cover(g, entries, layer)


# Partition of unity -----------------------------------------------------------

def _smooth_step(tau):
    """C^∞ step: 0 for tau <= 0, 1 for tau >= 1 (max slope 2)."""
    tau = np.asarray(tau, dtype=float)
    a = np.where(tau > 0, np.exp(-1.0 / np.maximum(tau, 1e-300)), 0.0)
    b = np.where(tau < 1, np.exp(-1.0 / np.maximum(1.0 - tau, 1e-300)), 0.0)
    return a / (a + b)


def eta_profile(dist, r):
    """1 on ``|x| <= r``, 0 on ``|x| >= 2r``, smooth in between."""
    return _smooth_step(2.0 - np.asarray(dist) / r)


@dataclass(eq=False)
class Piece:
    entry: CoverEntry
    window: tuple
    psi: np.ndarray       # values of ψ on the window

    def embed(self, grid: Grid, local: np.ndarray) -> Field:
        out = np.zeros(grid.shape)
        out[self.window] = local
        return Field(grid, out)


@dataclass(eq=False)
class PartitionOfUnity:
    cover: Cover
    pieces: list
    total: np.ndarray                       # sum of η
    grad_max: np.ndarray = field(default=None)

    @property
    def grid(self) -> Grid:
        return self.cover.grid

    def psi_sum(self) -> np.ndarray:
        s = np.zeros(self.grid.shape)
        for p in self.pieces:
            s[p.window] += p.psi
        return s

    def normalized_gradients(self) -> np.ndarray:
        """``‖∇ψ_{n,k}‖∞ · 2^{-n/2}`` per piece."""
        return np.array([gm * p.entry.radius
                         for gm, p in zip(self.grad_max, self.pieces)])

    def gradient_spread(self) -> float:
        v = self.normalized_gradients()
        return float(v.max() / v.min())


def build_partition(cover: Cover) -> PartitionOfUnity:
    """``ψ = η / Σ η`` with ``η`` equal to 1 on the layer ball and supported in
    its double."""
    g = cover.grid
    total = np.zeros(g.shape)
    raw = []
    for e in cover.entries:
        sl = local_window(g, e.center, 2 * e.radius)
        dist = np.sqrt(np.sum((g.coords[sl] - np.asarray(e.center)) ** 2, axis=-1))
        eta = eta_profile(dist, e.radius)
        total[sl] += eta
        raw.append((e, sl, eta))
    holes = total <= 0
    if holes.any():
        i = np.unravel_index(int(np.flatnonzero(holes)[0]), g.shape)
        raise CoverageHole(f"coverage hole at grid index {tuple(int(v) for v in i)}")
    pieces, grads = [], []
    for e, sl, eta in raw:
        psi = eta / total[sl]
        pieces.append(Piece(e, sl, psi))
        grads.append(float(finite_difference_gradient_norm(psi, g.h).max())
                     if psi.size > 1 else 0.0)
    return PartitionOfUnity(cover, pieces, total, np.array(grads))


def _mollify_window(grid: Grid, piece: Piece, local: np.ndarray,
                    phi: RadialProfile):
    """``φ_{2^{-n/2}} * local`` on the window enlarged by one radius."""
    r = piece.entry.radius
    big = local_window(grid, piece.entry.center, 3 * r)
    arr = np.zeros(tuple(s.stop - s.start for s in big))
    inner = tuple(slice(a.start - b.start, a.stop - b.start)
                  for a, b in zip(piece.window, big))
    arr[inner] = local
    kern = phi.sampled(grid, r)
    return big, inner, convolve_array(arr, kern, grid.cell_volume)


def local_pieces(f: Field, partition: PartitionOfUnity):
    """``(n, k, ψ_{n,k} f)`` for every piece, as full-grid fields."""
    for p in partition.pieces:
        yield p.entry.n, p.entry.k, p.embed(f.grid, p.psi * f.values[p.window])


@dataclass
class LocalPiecesReport:
    norms: np.ndarray
    total: float
    h1l: float

    @property
    def ratio(self) -> float:
        return self.total / self.h1l


def local_pieces_report(f: Field, partition: PartitionOfUnity, P: Propagator,
                        h1l: Optional[float] = None,
                        batch: int = 32) -> LocalPiecesReport:
    """``Σ ‖ψ_{n,k} f‖_{h¹_n}`` against ``‖f‖_{H¹_L}``.

    The truncated Gaussian taps vanish beyond a fixed reach, so each local
    maximal function is computed exactly on its window grown by that reach.
    Vanishing pieces contribute zero.
    """
    g = f.grid
    norms = np.zeros(len(partition.pieces))
    by_layer: dict = {}
    for i, p in enumerate(partition.pieces):
        local = p.psi * f.values[p.window]
        if np.any(local):
            by_layer.setdefault(p.entry.n, []).append((i, p, local))
    for n, plist in by_layer.items():
        ts = local_times(g, n)
        reach = max(len(_gauss_taps(g, t)) // 2 for t in ts) if len(ts) else 0
        # group by enlarged window shape so pieces stack
        groups: dict = {}
        for i, p, local in plist:
            big = tuple(slice(max(0, s.start - reach), min(g.m, s.stop + reach))
                        for s in p.window)
            shape = tuple(s.stop - s.start for s in big)
            groups.setdefault(shape, []).append((i, p, local, big))
        for shape, items in groups.items():
            for start in range(0, len(items), batch):
                chunk = items[start:start + batch]
                stack = np.zeros((len(chunk),) + shape)
                wts = []
                for j, (i, p, local, big) in enumerate(chunk):
                    inner = tuple(slice(a.start - b.start, a.stop - b.start)
                                  for a, b in zip(p.window, big))
                    stack[j][inner] = local
                    wts.append(g.weights[big])
                M = _windowed_maximal(g, stack, [c[3] for c in chunk], ts)
                for j, (i, *_rest) in enumerate(chunk):
                    norms[i] = float(np.sum(wts[j] * M[j]))
    h1l = norm_H1L(f, P) if h1l is None else h1l
    return LocalPiecesReport(norms, float(norms.sum()), h1l)


def _windowed_maximal(g: Grid, stack: np.ndarray, windows, ts) -> np.ndarray:
    """Local maximal function of windowed pieces, zero extension beyond the
    window.  Windows clipped by the box edge see the same zero extension as
    the full grid; interior cuts lie beyond the tap reach."""
    best = np.zeros_like(stack)
    for t in ts:
        taps = _gauss_taps(g, t)
        out = stack
        for axis in range(g.d):
            out = ndimage.convolve1d(out, taps, axis=1 + axis, mode="constant")
        np.maximum(best, np.abs(out), out=best)
    return best


def _smooth_and_frak(f: Field, partition: PartitionOfUnity,
                     phi: Optional[RadialProfile]):
    phi = bump_profile() if phi is None else phi
    g = f.grid
    sm = np.zeros(g.shape)
    hf = np.zeros(g.shape)
    for p in partition.pieces:
        local = p.psi * f.values[p.window]
        big, inner, conv = _mollify_window(g, p, local, phi)
        sm[big] += conv
        term = -conv
        term[inner] += local
        hf[big] += term
    return Field(g, sm), Field(g, hf)


def smooth_sum(f: Field, partition: PartitionOfUnity,
               phi: Optional[RadialProfile] = None) -> Field:
    """``Σ φ_{2^{-n/2}} * (ψ_{n,k} f)``."""
    return _smooth_and_frak(f, partition, phi)[0]


def frak_H(f: Field, partition: PartitionOfUnity,
           phi: Optional[RadialProfile] = None) -> Field:
    """``𝔥(f) = Σ (ψ_{n,k} f - φ_{2^{-n/2}} * (ψ_{n,k} f))``."""
    return _smooth_and_frak(f, partition, phi)[1]


def smooth_and_frak(f: Field, partition: PartitionOfUnity,
                    phi: Optional[RadialProfile] = None):
    """Both ``Σ φ * (ψ f)`` and ``𝔥(f)`` from one pass over the pieces."""
    return _smooth_and_frak(f, partition, phi)


def smooth_product(f: Field, g: Field, partition: PartitionOfUnity,
                   phi: Optional[RadialProfile] = None) -> Field:
    """``Σ (φ_{2^{-n/2}} * (ψ_{n,k} f)) g``."""
    return smooth_sum(f, partition, phi) * g


def mollified_pieces(f: Field, partition: PartitionOfUnity,
                     phi: Optional[RadialProfile] = None):
    """Full-grid fields ``φ_{2^{-n/2}} * (ψ_{n,k} f)`` with their pieces."""
    phi = bump_profile() if phi is None else phi
    g = f.grid
    for p in partition.pieces:
        local = p.psi * f.values[p.window]
        big, _, conv = _mollify_window(g, p, local, phi)
        out = np.zeros(g.shape)
        out[big] = conv
        yield p, p.embed(g, local), Field(g, out)


# Atoms ------------------------------------------------------------------------

@dataclass(eq=False)
class Atom:
    """An atom stored on an index window of the grid.

    ``local`` is either an explicit array on ``window`` or, for Haar-type
    atoms, built from child index boxes carrying constants.
    """

    grid: Grid
    center: tuple
    radius: float
    q: float
    cancellative: bool
    window: tuple
    _local: Optional[np.ndarray] = None
    _children: Optional[tuple] = None  # (boxes (c, d, 2) absolute, values (c,))

    @property
    def local(self) -> np.ndarray:
        if self._local is None:
            shape = tuple(s.stop - s.start for s in self.window)
            arr = np.zeros(shape)
            boxes, vals = self._children
            off = np.array([s.start for s in self.window])
            for b, v in zip(boxes, vals):
                arr[tuple(slice(lo - o, hi - o) for (lo, hi), o in zip(b, off))] = v
            return arr
        return self._local

    def field(self) -> Field:
        out = np.zeros(self.grid.shape)
        out[self.window] = self.local
        return Field(self.grid, out)

    @property
    def ball(self) -> Ball:
        return Ball(self.center, self.radius)


def ball_measure(grid: Grid, center, radius: float) -> float:
    """Discrete ``|B|``: trapezoid weight of grid points in the open ball."""
    sl = local_window(grid, center, radius)
    d2 = np.sum((grid.coords[sl] - np.asarray(center)) ** 2, axis=-1)
    return float(grid.weights[sl][d2 < radius ** 2].sum())


@dataclass
class AtomCheck:
    support_ok: bool
    size: float
    size_bound: float
    radius_ok: bool
    needs_cancellation: bool
    mean: float
    l1: float

    @property
    def ok(self) -> bool:
        cancel_ok = (not self.needs_cancellation) or abs(self.mean) <= 1e-8 * self.l1
        return (self.support_ok and self.radius_ok
                and self.size <= self.size_bound * (1 + 1e-9) and cancel_ok)


def check_atom(a: Atom, profile: CriticalRadiusProfile,
               q: Optional[float] = None) -> AtomCheck:
    g = a.grid
    q = a.q if q is None else q
    local = a.local
    coords = g.coords[a.window]
    d2 = np.sum((coords - np.asarray(a.center)) ** 2, axis=-1)
    support_ok = bool(np.all(local[d2 >= a.radius ** 2] == 0))
    w = g.weights[a.window]
    size = float(np.sum(w * np.abs(local) ** q) ** (1.0 / q))
    vol = ball_measure(g, a.center, a.radius)
    bound = vol ** (1.0 / q - 1.0)
    rho = profile.rho_at(a.center)
    radius_ok = a.radius <= profile.cL * rho
    needs = a.radius <= rho / profile.cL
    return AtomCheck(support_ok, size, bound, radius_ok, needs,
                     float(np.sum(w * local)), float(np.sum(w * np.abs(local))))


def validate_atom(a: Atom, q: Optional[float], profile: CriticalRadiusProfile) -> bool:
    """Support, size and (below the critical scale) cancellation conditions."""
    return check_atom(a, profile, q).ok


def atom_from_field(f: Field, B: Ball, q: float = 2.0,
                    cancellative: bool = False) -> Atom:
    sl = local_window(f.grid, B.center, B.radius)
    return Atom(f.grid, B.center, B.radius, q, cancellative, sl,
                _local=f.values[sl].copy())


@dataclass
class MollifiedAtomReport:
    support_ok: bool
    constant: float

    @property
    def ok(self) -> bool:
        return self.support_ok and np.isfinite(self.constant)


def mollified_atom_check(a: Atom, n: int, center,
                         phi: Optional[RadialProfile] = None) -> MollifiedAtomReport:
    """Support of ``φ_{2^{-n/2}} * a`` in ``B(center, 5·2^{-n/2})`` and the
    multiple of the L² atom bound it needs."""
    phi = bump_profile() if phi is None else phi
    g = a.grid
    r = layer_radius(n)
    conv = convolve(a.field(), phi, r)
    d2 = np.sum((g.coords - np.asarray(center)) ** 2, axis=-1)
    B5 = d2 < (5 * r) ** 2
    # FFT convolution leaves rounding noise outside the true support
    tol = 1e-12 * float(np.abs(conv.values).max())
    support_ok = bool(np.all(np.abs(conv.values[~B5]) <= tol))
    l2 = float(np.sqrt(np.sum(g.weights * conv.values ** 2)))
    vol = ball_measure(g, center, 5 * r)
    return MollifiedAtomReport(support_ok, l2 / vol ** (-0.5))


@dataclass(eq=False)
class AtomicDecomposition:
    target: Field
    terms: list           # (lambda, Atom, n, k)

    @property
    def coefficient_sum(self) -> float:
        return float(sum(abs(lam) for lam, *_ in self.terms))

    def reconstruct(self) -> Field:
        g = self.target.grid
        out = np.zeros(g.shape)
        for lam, a, *_ in self.terms:
            out[a.window] += lam * a.local
        return Field(g, out)

    def residual(self) -> float:
        """``‖f - Σ λ_j a_j‖₁ / ‖f‖₁``."""
        l1 = norm_L1(self.target)
        diff = norm_L1(self.target - self.reconstruct())
        return diff / l1 if l1 > 0 else diff

    def all_valid(self, profile: CriticalRadiusProfile) -> bool:
        return all(validate_atom(a, None, profile) for _, a, *_ in self.terms)

    def invalid(self, profile: CriticalRadiusProfile) -> list:
        return [i for i, (_, a, *_) in enumerate(self.terms)
                if not validate_atom(a, None, profile)]

    def manifest_rows(self):
        for lam, a, n, k in self.terms:
            yield [n, k, *a.center, lam, a.q, a.cancellative, a.radius]

    def lambda2(self) -> float:
        """``Λ₂`` of the coefficient-weighted pieces ``b_j = λ_j a_j``."""
        from .norms import sigma_of_ball, weighted_lq
        from .orlicz import lambda2, sigma
        sB, sizes = [], []
        for lam, a, *_ in self.terms:
            s = sigma_of_ball(a.grid, a.ball)
            sB.append(s)
            sizes.append(abs(lam) * weighted_lq(a.field(), 2.0, sigma()) / np.sqrt(s))
        return lambda2(sB, sizes)


def manifest_header(d: int) -> list[str]:
    return ["n", "k"] + [f"c{c}" for c in "xyz"[:d]] + ["lambda", "q", "cancellative", "r"]


def _box_sums(sat: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Sums over index boxes ``[lo, hi)`` from a zero-padded summed-area table."""
    d = boxes.shape[1]
    out = np.zeros(len(boxes))
    for corner in _product((0, 1), repeat=d):
        idx = tuple(boxes[:, ax, c] for ax, c in enumerate(corner))
        sign = (-1) ** (d - sum(corner))
        out += sign * sat[idx]
    return out


def _sat(arr: np.ndarray) -> np.ndarray:
    s = np.pad(arr, [(1, 0)] * arr.ndim)
    for ax in range(arr.ndim):
        s = np.cumsum(s, axis=ax)
    return s


def haar_levels(grid: Grid, values: np.ndarray, box: np.ndarray):
    """Haar-type expansion of a weighted-mean-zero array on an index box.

    Each box with more than one point contributes the function equal to
    ``child mean - box mean`` on each of its dyadic children; their sum over
    all boxes reproduces ``values`` minus its weighted mean.  Yields one
    tuple per level: ``(nodes, kids, nonempty, diff, kid_weight)`` with
    shapes ``(K, d, 2)``, ``(K, 2^d, d, 2)``, ``(K, 2^d)``, ``(K, 2^d)``,
    ``(K, 2^d)``.
    """
    d = grid.d
    w = grid.weights
    sat_w = _sat(w)
    sat_f = _sat(w * values)
    bits = np.array(list(_product((0, 1), repeat=d)))        # (2^d, d)
    nodes = box[None].astype(int)
    while len(nodes):
        lengths = nodes[:, :, 1] - nodes[:, :, 0]
        nodes = nodes[np.any(lengths > 1, axis=1)]
        if not len(nodes):
            break
        lengths = nodes[:, :, 1] - nodes[:, :, 0]
        mid = np.where(lengths > 1, nodes[:, :, 0] + lengths // 2, nodes[:, :, 1])
        lo = np.where(bits[None] == 0, nodes[:, None, :, 0], mid[:, None, :])
        hi = np.where(bits[None] == 0, mid[:, None, :], nodes[:, None, :, 1])
        kids = np.stack([lo, hi], axis=-1)                   # (K, 2^d, d, 2)
        nonempty = np.all(hi > lo, axis=-1)
        flat = kids.reshape(-1, d, 2)
        ok = nonempty.reshape(-1)
        sw = np.zeros(len(flat))
        sf = np.zeros(len(flat))
        sw[ok] = _box_sums(sat_w, flat[ok])
        sf[ok] = _box_sums(sat_f, flat[ok])
        sw = sw.reshape(nonempty.shape)
        sf = sf.reshape(nonempty.shape)
        parent = sf.sum(axis=1) / sw.sum(axis=1)
        child = np.where(nonempty, sf / np.where(nonempty, sw, 1.0), 0.0)
        diff = np.where(nonempty, child - parent[:, None], 0.0)
        yield nodes, kids, nonempty, diff, sw
        nodes = kids[nonempty]


def _box_balls(grid: Grid, nodes: np.ndarray):
    """Circumscribed balls (centers, radii) of index boxes ``(K, d, 2)``."""
    lo = -grid.R + grid.h * nodes[:, :, 0]
    hi = -grid.R + grid.h * (nodes[:, :, 1] - 1)
    centers = 0.5 * (lo + hi)
    radii = 0.5 * np.linalg.norm(hi - lo, axis=1) * (1 + 1e-9)
    return centers, radii


def _bump_atom(grid: Grid, center, radius: float, q: float) -> Atom:
    sl = local_window(grid, center, radius)
    dist = np.sqrt(np.sum((grid.coords[sl] - np.asarray(center)) ** 2, axis=-1))
    prof = bump_profile(normalized=False)
    b = prof(dist / radius)
    w = grid.weights[sl]
    size = np.sum(w * b ** q) ** (1.0 / q)
    vol = ball_measure(grid, center, radius)
    b = b * (vol ** (1.0 / q - 1.0) / size) * (1 - 1e-12)
    return Atom(grid, tuple(float(c) for c in center), radius, q, False, sl, _local=b)


def atomize_h1n(f: Field, n: int, x, q: float = 2.0, k: int = 0,
                profile: Optional[CriticalRadiusProfile] = None
                ) -> AtomicDecomposition:
    """Atoms inside ``B(x, 2^{2-n/2})`` summing to ``f``, with
    ``supp f ⊂ B(x, 2^{1-n/2})``.

    One bump atom on ``B(x, 2^{1-n/2})`` carries the mean; the remainder is
    expanded into Haar-type cancellative atoms on the dyadic index boxes of
    the support window.
    """
    g = f.grid
    x = np.asarray(x, dtype=float)
    r1 = 2 * layer_radius(n)
    d2 = np.sum((g.coords - x) ** 2, axis=-1)
    outside = d2 >= r1 ** 2
    if np.any(f.values[outside] != 0):
        raise SupportViolation(
            f"support violation: f is nonzero outside B(x, {r1:g})")
    B1 = Ball(tuple(x), r1)
    whole = atom_from_field(f, B1, q)
    if profile is not None:
        chk = check_atom(whole, profile, q)
        if chk.ok and chk.size <= chk.size_bound and abs(chk.mean) <= 1e-8 * chk.l1:
            whole.cancellative = True
            return AtomicDecomposition(f, [(1.0, whole, n, k)])
    terms = []
    a0 = _bump_atom(g, x, r1, q)
    lam0 = integrate(f) / float(np.sum(g.weights[a0.window] * a0.local))
    rem = f.values.copy()
    rem[a0.window] -= lam0 * a0.local
    # terms below this share of ‖f‖₁ are rounding noise; dropping them moves
    # the reconstruction by far less than its tolerance
    noise = 1e-13 * float(np.sum(g.weights * np.abs(f.values)))
    if abs(lam0) * float(np.sum(g.weights[a0.window] * np.abs(a0.local))) > noise:
        terms.append((lam0, a0, n, k))
    sl = local_window(g, x, r1)
    box = np.array([[s.start, s.stop] for s in sl])
    for nodes, kids, nonempty, diff, kid_w in haar_levels(g, rem, box):
        # scale by the largest entry so tiny pieces do not underflow
        top = np.max(np.abs(diff), axis=1)
        unit = np.abs(diff) / np.where(top > 0, top, 1.0)[:, None]
        sizes = top * np.sum(kid_w * unit ** q, axis=1) ** (1.0 / q)
        centers, radii = _box_balls(g, nodes)
        vols = _ball_measures(g, nodes, centers, radii)
        lams = sizes / vols ** (1.0 / q - 1.0)
        l1 = np.sum(kid_w * np.abs(diff), axis=1)
        for i in np.nonzero(l1 > noise)[0]:
            sel = nonempty[i]
            node = nodes[i]
            window = tuple(slice(int(lo), int(hi)) for lo, hi in node)
            atom = Atom(g, tuple(centers[i].tolist()), float(radii[i]), q, True,
                        window, _children=(kids[i][sel], diff[i][sel] / lams[i]))
            terms.append((float(lams[i]), atom, n, k))
    # weighted mean of the remainder is zero up to rounding; it is not an atom
    return AtomicDecomposition(f, terms)


_MEASURE_CACHE: dict = {}


def _ball_measures(grid: Grid, nodes, centers, radii) -> np.ndarray:
    """Discrete ball measures; balls clear of the box edge are cached by shape."""
    out = np.empty(len(nodes))
    reach = np.ceil(radii / grid.h).astype(int) + 1
    mid_idx = np.rint((centers + grid.R) / grid.h)
    clear = np.all((mid_idx - reach[:, None] > 0)
                   & (mid_idx + reach[:, None] < grid.m - 1), axis=1)
    lengths = nodes[:, :, 1] - nodes[:, :, 0]
    for i in range(len(nodes)):
        if clear[i]:
            key = (grid.d, grid.h, tuple(lengths[i]))
            v = _MEASURE_CACHE.get(key)
            if v is None:
                v = _MEASURE_CACHE[key] = ball_measure(grid, centers[i], radii[i])
            out[i] = v
        else:
            out[i] = ball_measure(grid, centers[i], radii[i])
    return out


def atomize_H1L(f: Field, partition: PartitionOfUnity,
                profile: CriticalRadiusProfile, q: float = 2.0
                ) -> AtomicDecomposition:
    """Concatenate the local decompositions of every ``ψ_{n,k} f``."""
    terms = []
    for p in partition.pieces:
        local = p.psi * f.values[p.window]
        if not np.any(local):
            continue
        piece = p.embed(f.grid, local)
        dec = atomize_h1n(piece, p.entry.n, p.entry.center, q, p.entry.k, profile)
        terms.extend(dec.terms)
    return AtomicDecomposition(f, terms)


# Products -----------------------------------------------------------------------

def product_pairing(f: Field, g: Field, test: Field) -> float:
    """``⟨f × g, test⟩ = ∫ f g test``."""
    return integrate(f * g * test)


@dataclass
class BilinearResult:
    s_part: Field
    r_part: Field
    s_l1: float
    s_h1l: float
    r_llog: float
    f_h1l: float
    g_bmol: float

    @property
    def ratio(self) -> float:
        return (self.s_l1 + self.r_llog) / (self.f_h1l * self.g_bmol)


def bilinear_decompose(f: Field, g: Field, partition: PartitionOfUnity,
                       profile: CriticalRadiusProfile, P: Propagator,
                       phi: Optional[RadialProfile] = None,
                       f_h1l: Optional[float] = None,
                       g_bmol: Optional[float] = None,
                       s_h1l: Optional[float] = None) -> BilinearResult:
    """``f g = Σ (φ * ψ f) g + 𝔥(f) g`` with the norms of both parts."""
    f_h1l = norm_H1L(f, P) if f_h1l is None else f_h1l
    g_bmol = bmol_parts(g, profile).total if g_bmol is None else g_bmol
    if f_h1l < 1e-12 or g_bmol < 1e-12:
        raise DegenerateInput("degenerate input")
    sm, hf = _smooth_and_frak(f, partition, phi)
    s_part = sm * g
    r_part = hf * g
    s_h1l = norm_H1L(s_part, P) if s_h1l is None else s_h1l
    return BilinearResult(s_part, r_part, norm_L1(s_part), s_h1l,
                          norm_Llog(r_part), f_h1l, g_bmol)


def split_parts(f: Field, g: Field, partition: PartitionOfUnity,
                phi: Optional[RadialProfile] = None):
    """``(s_part, r_part)`` without any norm."""
    sm, hf = _smooth_and_frak(f, partition, phi)
    return sm * g, hf * g


def mollified_product(f: Field, g: Field, eps: float,
                      phi: Optional[RadialProfile] = None) -> Field:
    """``(f g) * φ̃_ε``."""
    phi = bump_profile() if phi is None else phi
    if eps < 2 * f.grid.h * (1 - 1e-12):
        raise ValueError(f"eps={eps:g} below the resolvable scale 2h")
    return convolve(f * g, phi, eps)


def default_eps_sequence(grid: Grid) -> np.ndarray:
    """Dyadic from ``R/4`` down to the last value ``>= 2h``."""
    out = []
    e = grid.R / 4.0
    while e >= 2 * grid.h * (1 - 1e-12):
        out.append(e)
        e /= 2.0
    return np.array(out)


@dataclass
class ConvergenceTable:
    eps: np.ndarray
    l1_error: np.ndarray
    max_error: np.ndarray
    lipschitz: float

    def rows(self):
        for e, a, b in zip(self.eps, self.l1_error, self.max_error):
            yield [e, a, b]

    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.l1_error) < 0))


def convergence_study(f: Field, g: Field, eps_seq=None,
                      phi: Optional[RadialProfile] = None) -> ConvergenceTable:
    """L¹ and max errors of ``(fg)*φ̃_ε`` against ``fg`` at points farther
    than ``ε`` from the box boundary."""
    grid = f.grid
    eps_seq = default_eps_sequence(grid) if eps_seq is None else np.asarray(eps_seq)
    fg = f * g
    edge = grid.R - np.max(np.abs(grid.coords), axis=-1)
    l1, mx = [], []
    for e in eps_seq:
        err = np.abs(mollified_product(f, g, e, phi).values - fg.values)
        inner = edge > e
        l1.append(float(np.sum(grid.weights[inner] * err[inner])))
        mx.append(float(err[inner].max()))
    lip = float(finite_difference_gradient_norm(fg.values, grid.h).max())
    return ConvergenceTable(eps_seq, np.array(l1), np.array(mx), lip)


# Lemma ratios -----------------------------------------------------------------

def frak_H_boundedness(fields: Sequence[Field], partition: PartitionOfUnity,
                       P: Propagator, D, phi: Optional[RadialProfile] = None,
                       h1l: Optional[Sequence[float]] = None) -> np.ndarray:
    """``‖𝔐(𝔥 f)‖₁ / ‖f‖_{H¹_L}`` per input."""
    from .semigroup import grand_maximal_many
    hs = [frak_H(f, partition, phi) for f in fields]
    M = grand_maximal_many(hs, D)
    if h1l is None:
        h1l = [integrate(m) for m in maximal_ML_many(P, list(fields))]
    return np.array([integrate(m) / n for m, n in zip(M, h1l)])


def piece_product_ratios(f: Field, g: Field, partition: PartitionOfUnity,
                         P: Propagator, g_bmol: float,
                         phi: Optional[RadialProfile] = None,
                         min_share: float = 1e-3) -> np.ndarray:
    """``‖(φ * ψf) g‖_{H¹_L} / (‖ψf‖_{h¹_n} ‖g‖_{BMO_L})`` per piece.

    Pieces carrying less than ``min_share`` of ``‖f‖₁`` are skipped.
    """
    l1 = norm_L1(f)
    prods, h1n = [], []
    for p, piece, moll in mollified_pieces(f, partition, phi):
        if norm_L1(piece) < min_share * l1:
            continue
        prods.append(moll * g)
        h1n.append(norm_h1n(piece, p.entry.n))
    if not prods:
        return np.array([])
    top = [integrate(m) for m in maximal_ML_many(P, prods)]
    return np.array(top) / (np.array(h1n) * g_bmol)
