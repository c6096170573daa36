"""Inequality sweeps: empirical ratios over random families on two grids."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .decomposition import (atomize_H1L, bilinear_decompose, build_cover,
                            build_partition, convergence_study,
                            frak_H_boundedness, local_pieces_report,
                            piece_product_ratios)
from .errors import UnknownLemma
from .families import (atom_sum_family, pair_family, smooth_pair_family,
                       xi_atom_family)
from .grid import Grid, integrate
from .norms import (atom_orlicz_bound, bmol_parts, hlog_of_maximal,
                    hxi_sigma_of_maximal, norm_L1, norm_Llog)
from .potential import critical_radius_profile, make_potential
from .semigroup import (default_dictionary, grand_maximal_many, make_propagator,
                        maximal_ML_many)

LEMMAS = ("L3.1", "L4.3", "L4.5", "L4.6", "E4.3", "P3.1", "T3", "T2", "TA")

FAMILY_OF = {
    "L3.1": "xi_atoms", "L4.3": "atom_sums", "L4.5": "atom_sums",
    "P3.1": "atom_sums", "TA": "atom_sums", "L4.6": "pairs", "E4.3": "pairs",
    "T2": "pairs", "T3": "smooth_pairs",
}


@dataclass
class Setting:
    """Grid, potential and the derived objects shared by every case."""

    grid: Grid
    potential: str
    params: dict = field(default_factory=dict)
    propagator_method: str = "auto"

    @cached_property
    def V(self):
        return make_potential(self.grid, self.potential, **self.params)

    @cached_property
    def profile(self):
        return critical_radius_profile(self.V)

    @cached_property
    def partition(self):
        return build_partition(build_cover(self.profile))

    @cached_property
    def P(self):
        return make_propagator(self.V, self.propagator_method)

    @cached_property
    def D(self):
        return default_dictionary(self.grid)


def family(kind: str, seed: int, size: int, d: int):
    makers = {"xi_atoms": xi_atom_family, "atom_sums": atom_sum_family,
              "pairs": pair_family, "smooth_pairs": smooth_pair_family}
    return makers[kind](seed, size, d)


def _h1l(S: Setting, fields) -> list[float]:
    return [integrate(m) for m in maximal_ML_many(S.P, list(fields))]


def case_ratios(lemma: str, S: Setting, members, q: float = 2.0
                ) -> tuple[np.ndarray, list[dict]]:
    """One ratio per family member plus a dict of diagnostics per member."""
    g = S.grid
    if lemma == "L3.1":
        out, info = [], []
        for b in members:
            out.append(atom_orlicz_bound(b.render(g, q), b.ball, S.P, q))
            info.append({"multiple": b.multiple})
        return np.array(out), info
    if lemma in ("L4.3", "L4.5", "P3.1", "TA"):
        fs = [f.render(g, S.profile, q) for f in members]
        h1 = _h1l(S, fs)
        if lemma == "L4.3":
            return (np.array([local_pieces_report(f, S.partition, S.P, h1l=a).ratio
                              for f, a in zip(fs, h1)]),
                    [{"h1l": a} for a in h1])
        if lemma == "L4.5":
            return (frak_H_boundedness(fs, S.partition, S.P, S.D, h1l=h1),
                    [{"h1l": a} for a in h1])
        if lemma == "P3.1":
            out, info = [], []
            MLs = maximal_ML_many(S.P, fs)
            for Mf, ML in zip(grand_maximal_many(fs, S.D), MLs):
                hl = hlog_of_maximal(Mf)
                hxl = hxi_sigma_of_maximal(ML)
                out.append(hxl / hl)
                info.append({"hxil_sigma": hxl, "hlog": hl,
                             "hxi_sigma": hxi_sigma_of_maximal(Mf)})
            return np.array(out), info
        out, info = [], []
        for f, a in zip(fs, h1):
            dec = atomize_H1L(f, S.partition, S.profile, q)
            out.append(dec.coefficient_sum / a)
            info.append({"atoms": len(dec.terms),
                         "residual": dec.residual(),
                         "invalid": len(dec.invalid(S.profile))})
        return np.array(out), info
    if lemma in ("L4.6", "E4.3", "T2"):
        fs = [f.render(g, S.profile, q) for f, _ in members]
        gs = [b.render(g) for _, b in members]
        bm = [bmol_parts(b, S.profile).total for b in gs]
        if lemma == "E4.3":
            return (np.array([norm_Llog(f * b) / (norm_L1(f) * c)
                              for f, b, c in zip(fs, gs, bm)]),
                    [{"g_bmol": c} for c in bm])
        if lemma == "L4.6":
            out = []
            for f, b, c in zip(fs, gs, bm):
                r = piece_product_ratios(f, b, S.partition, S.P, c)
                out.append(float(r.max()) if r.size else 0.0)
            return np.array(out), [{"g_bmol": c} for c in bm]
        h1 = _h1l(S, fs)
        out, info = [], []
        for f, b, a, c in zip(fs, gs, h1, bm):
            res = bilinear_decompose(f, b, S.partition, S.profile, S.P,
                                     f_h1l=a, g_bmol=c)
            fg = f * b
            err = (res.s_part + res.r_part - fg).max_abs() / max(fg.max_abs(), 1e-300)
            out.append(res.ratio)
            info.append({"f_h1l": a, "g_bmol": c, "s_l1": res.s_l1,
                         "r_llog": res.r_llog, "split_error": err})
        return np.array(out), info
    if lemma == "T3":
        out, info = [], []
        for f, b in members:
            tab = convergence_study(f.render(g), b.render(g))
            final = tab.l1_error[-1] / (tab.lipschitz * tab.eps[-1])
            out.append(final)
            info.append({"decreasing": tab.strictly_decreasing(),
                         "lipschitz": tab.lipschitz, "eps_min": tab.eps[-1],
                         "table": tab})
        return np.array(out), info
    raise UnknownLemma(f"unknown lemma id {lemma!r}; choose from {list(LEMMAS)}")


def stability_factor(a: float, b: float) -> float:
    """``max(a, b) / min(a, b)`` for two fitted constants."""
    lo, hi = min(a, b), max(a, b)
    return float(hi / lo) if lo > 0 else float("inf")


@dataclass
class SweepResult:
    lemma: str
    ratios: np.ndarray
    info: list
    refined_ratios: Optional[np.ndarray] = None
    refined_info: Optional[list] = None

    @property
    def fitted_C(self) -> float:
        return float(np.max(self.ratios))

    @property
    def refined_C(self) -> float:
        return float("nan") if self.refined_ratios is None else float(np.max(self.refined_ratios))

    @property
    def stability(self) -> float:
        if self.refined_ratios is None:
            return float("nan")
        return stability_factor(self.fitted_C, self.refined_C)

    def rows(self):
        """``case_id,lemma,ratio`` rows with the two summary rows last."""
        for i, r in enumerate(self.ratios):
            yield [f"case{i:03d}", self.lemma, r]
        yield ["max", self.lemma, self.fitted_C]
        yield ["stability", self.lemma, self.stability]


def refined_m(m: int) -> int:
    return int(round(1.5 * m))


def run_sweep(lemma: str, d: int = 3, R: float = 2.0, m: int = 22,
              refine: Optional[int] = None, potential: str = "bump",
              params: Optional[dict] = None, size: int = 10, seed: int = 0,
              q: float = 2.0) -> SweepResult:
    """Ratios for ``lemma`` on grid ``m`` and, when ``refine`` is set (``> 0``),
    on the same family rendered at ``refine`` points per axis."""
    if lemma not in LEMMAS:
        raise UnknownLemma(f"unknown lemma id {lemma!r}; choose from {list(LEMMAS)}")
    members = family(FAMILY_OF[lemma], seed, size, d)
    S = Setting(Grid(d, R, m), potential, dict(params or {}))
    ratios, info = case_ratios(lemma, S, members, q)
    res = SweepResult(lemma, ratios, info)
    if refine:
        S2 = Setting(Grid(d, R, refine), potential, dict(params or {}))
        res.refined_ratios, res.refined_info = case_ratios(lemma, S2, members, q)
    return res
