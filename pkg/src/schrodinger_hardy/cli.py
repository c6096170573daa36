"""Batch experiment driver.

Configuration is a flat ``key=value`` file (``--config``) with ``--key value``
overrides on the command line.  Every command writes UTF-8 CSV files with a
header row into the output directory (``output`` key, else ``SH_OUTPUT_DIR``,
else ``./sh_output``).  Errors print one JSON line on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .decomposition import (atomize_H1L, bilinear_decompose, convergence_study,
                            manifest_header)
from .errors import AnalysisError, ConfigError, UnknownLemma
from .families import atom_sum_family, pair_family, smooth_pair_family
from .fieldio import coord_names, read_field, write_csv, write_field
from .grid import Grid, integrate
from .norms import (bmol_parts, norm_BMO, norm_H1L, norm_L1)
from .orlicz import (exp_weight, integrand_exp, integrand_log, integrand_xi,
                     luxemburg, sigma)
from .potential import POTENTIALS, check_reverse_holder
from .semigroup import grand_maximal, maximal_ML
from .sweeps import FAMILY_OF, LEMMAS, Setting, SweepResult, case_ratios, family

COMMANDS = ("rho-map", "norms", "decompose", "sweep", "atoms-validate",
            "product-convergence")

# key -> (type, default)
KEYS = {
    "d": (int, 3),
    "R": (float, 2.0),
    "m": (int, 22),
    "refine": (int, 0),
    "potential": (str, "bump"),
    "q": (float, 2.0),
    "seed": (int, 0),
    "size": (int, 10),
    "lemma": (str, ""),
    "inputs": (str, ""),
    "f": (str, ""),
    "g": (str, ""),
    "case": (int, 0),
    "stride": (int, 4),
    "lambda_cap": (float, 1e12),
    "rtol": (float, 1e-12),
    "rh_q": (float, 0.0),
    "propagator": (str, "auto"),
    "output": (str, ""),
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)
    potential_params: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    @property
    def grid(self) -> Grid:
        return Grid(self.d, self.R, self.m)

    @property
    def output_dir(self) -> Path:
        out = self.output or os.environ.get("SH_OUTPUT_DIR") or "sh_output"
        p = Path(out)
        p.mkdir(parents=True, exist_ok=True)
        return p

    def setting(self, m: Optional[int] = None) -> Setting:
        g = self.grid if m is None else Grid(self.d, self.R, m)
        return Setting(g, self.potential, dict(self.potential_params),
                       self.propagator)


def _coerce(key: str, raw: str):
    if key.startswith("potential."):
        return float(raw)
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    typ = KEYS[key][0]
    try:
        return typ(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for key {key!r}") from None


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def parse_overrides(tokens: Sequence[str]) -> dict:
    out = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            try:
                val = next(it)
            except StopIteration:
                raise ConfigError(f"missing value for --{key}") from None
        out[key] = val
    return out


def build_config(raw: dict) -> ExperimentConfig:
    values = {k: default for k, (_, default) in KEYS.items()}
    params = {}
    for k, v in raw.items():
        val = _coerce(k, v)
        if k.startswith("potential."):
            params[k.split(".", 1)[1]] = val
        else:
            values[k] = val
    if values["potential"] not in POTENTIALS:
        raise ConfigError(f"unknown potential {values['potential']!r}")
    cfg = ExperimentConfig(values, params)
    cfg.grid  # validates d, R, m
    return cfg


# Commands ---------------------------------------------------------------------

def cmd_rho_map(cfg: ExperimentConfig) -> list[Path]:
    S = cfg.setting()
    prof = S.profile
    out = cfg.output_dir
    g = S.grid
    paths = [out / "rho_map.csv", out / "shen.csv"]
    write_csv(paths[0], coord_names(g.d) + ["rho", "n"], prof.rows())
    write_csv(paths[1], ["C0", "k0", "cL", "layers", "clipped_points"],
              [[prof.C0_hat, prof.k0_hat, prof.cL,
                " ".join(str(n) for n in prof.layers), int(prof.clipped.sum())]])
    if cfg.rh_q > 1:
        rep = check_reverse_holder(S.V, cfg.rh_q, stride=cfg.stride)
        paths.append(out / "reverse_holder.csv")
        write_csv(paths[-1], coord_names(g.d, "c") + ["r", "ratio"], rep.rows())
    return paths


def _inputs(cfg: ExperimentConfig, S: Setting):
    if cfg.inputs:
        for path in cfg.inputs.split(","):
            f = read_field(path.strip(), expect_dim=cfg.d)
            if f.grid != S.grid:
                raise ConfigError(f"{path}: grid {f.grid} differs from config")
            yield Path(path).stem, f
    else:
        for i, member in enumerate(atom_sum_family(cfg.seed, cfg.size, cfg.d)):
            yield f"case{i:03d}", member.render(S.grid, S.profile, cfg.q)


def cmd_norms(cfg: ExperimentConfig) -> list[Path]:
    S = cfg.setting()
    g = S.grid
    rows = []
    for name, f in _inputs(cfg, S):
        Mf = grand_maximal(f, S.D)
        ML = maximal_ML(S.P, f)
        rows.append(["L1", name, norm_L1(f), 0.0, 0])
        rows.append(["H1L", name, integrate(ML), 0.0, 0])
        rows.append(["BMO", name, norm_BMO(f, cfg.stride), 0.0, 0])
        rows.append(["BMOL", name, bmol_parts(f, S.profile, cfg.stride).total, 0.0, 0])
        for space, arg, phi, w in (("Llog", abs(f), integrand_log, None),
                                   ("Exp", abs(f), integrand_exp, exp_weight(g.d)),
                                   ("Hlog", Mf, integrand_log, None),
                                   ("HXi_sigma", Mf, integrand_xi, sigma()),
                                   ("HXiL_sigma", ML, integrand_xi, sigma())):
            res = luxemburg(arg, phi, w, rtol=cfg.rtol, cap=cfg.lambda_cap)
            rows.append([space, name, res.lambda_star, res.residual, res.iterations])
    path = cfg.output_dir / "norms.csv"
    write_csv(path, ["space", "input_id", "value", "residual", "iters"], rows)
    return [path]


def _pair(cfg: ExperimentConfig, S: Setting):
    if cfg.f and cfg.g:
        f = read_field(cfg.f, expect_dim=cfg.d)
        g = read_field(cfg.g, expect_dim=cfg.d)
        for p, x in ((cfg.f, f), (cfg.g, g)):
            if x.grid != S.grid:
                raise ConfigError(f"{p}: grid {x.grid} differs from config")
        return f, g
    if cfg.f or cfg.g:
        raise ConfigError("give both f and g, or neither")
    fam = pair_family(cfg.seed, cfg.case + 1, cfg.d)
    fs, gs = fam[cfg.case]
    return fs.render(S.grid, S.profile, cfg.q), gs.render(S.grid)


def cmd_decompose(cfg: ExperimentConfig) -> list[Path]:
    S = cfg.setting()
    f, g = _pair(cfg, S)
    res = bilinear_decompose(f, g, S.partition, S.profile, S.P)
    dec = atomize_H1L(f, S.partition, S.profile, cfg.q)
    out = cfg.output_dir
    paths = [out / "manifest.csv", out / "s_part.shf", out / "r_part.shf",
             out / "decompose.csv"]
    write_csv(paths[0], manifest_header(S.grid.d), dec.manifest_rows())
    write_field(paths[1], res.s_part)
    write_field(paths[2], res.r_part)
    fg = f * g
    split = (res.s_part + res.r_part - fg).max_abs() / max(fg.max_abs(), 1e-300)
    write_csv(paths[3], ["quantity", "value"], [
        ["f_h1l", res.f_h1l], ["g_bmol", res.g_bmol], ["s_l1", res.s_l1],
        ["s_h1l", res.s_h1l], ["r_llog", res.r_llog], ["bound_ratio", res.ratio],
        ["split_error", split], ["atoms", len(dec.terms)],
        ["coefficient_sum", dec.coefficient_sum],
        ["atom_ratio", dec.coefficient_sum / res.f_h1l],
        ["residual", dec.residual()], ["invalid_atoms", len(dec.invalid(S.profile))],
    ])
    return paths


def _detail_rows(m, info):
    for i, row in enumerate(info):
        for k, v in row.items():
            if k != "table":
                yield [f"case{i:03d}", m, k, v]


def cmd_sweep(cfg: ExperimentConfig) -> list[Path]:
    lemma = cfg.lemma
    if lemma not in LEMMAS:
        raise UnknownLemma(f"unknown lemma id {lemma!r}; choose from {list(LEMMAS)}")
    members = family(FAMILY_OF[lemma], cfg.seed, cfg.size, cfg.d)
    ratios, info = case_ratios(lemma, cfg.setting(), members, cfg.q)
    res = SweepResult(lemma, ratios, info)
    if cfg.refine:
        res.refined_ratios, res.refined_info = case_ratios(
            lemma, cfg.setting(cfg.refine), members, cfg.q)
    out = cfg.output_dir
    paths = [out / f"sweep_{lemma}.csv", out / f"sweep_{lemma}_details.csv"]
    write_csv(paths[0], ["case_id", "lemma", "ratio"], res.rows())
    details = list(_detail_rows(cfg.m, info))
    if cfg.refine:
        details += list(_detail_rows(cfg.refine, res.refined_info))
        details += [[f"case{i:03d}", cfg.refine, "ratio", r]
                    for i, r in enumerate(res.refined_ratios)]
    write_csv(paths[1], ["case_id", "m", "quantity", "value"], details)
    return paths


def cmd_atoms_validate(cfg: ExperimentConfig) -> list[Path]:
    S = cfg.setting()
    rows = []
    for name, f in _inputs(cfg, S):
        dec = atomize_H1L(f, S.partition, S.profile, cfg.q)
        h1l = norm_H1L(f, S.P)
        rows.append([name, len(dec.terms), len(dec.invalid(S.profile)),
                     dec.residual(), dec.coefficient_sum, h1l,
                     dec.coefficient_sum / h1l])
    path = cfg.output_dir / "atoms_validate.csv"
    write_csv(path, ["input_id", "atoms", "invalid", "residual",
                     "coefficient_sum", "h1l", "ratio"], rows)
    return [path]


def cmd_product_convergence(cfg: ExperimentConfig) -> list[Path]:
    g = cfg.grid
    rows, summary = [], []
    for i, (fs, gs) in enumerate(smooth_pair_family(cfg.seed, cfg.size, cfg.d)):
        tab = convergence_study(fs.render(g), gs.render(g))
        cid = f"case{i:03d}"
        rows.extend([cid, *r] for r in tab.rows())
        summary.append([cid, tab.lipschitz, tab.eps[-1], tab.l1_error[-1],
                        tab.strictly_decreasing(),
                        tab.l1_error[-1] < tab.lipschitz * tab.eps[-1]])
    out = cfg.output_dir
    paths = [out / "convergence.csv", out / "convergence_summary.csv"]
    write_csv(paths[0], ["case_id", "eps", "l1_error", "max_error"], rows)
    write_csv(paths[1], ["case_id", "lipschitz", "eps_min", "l1_error_min",
                         "strictly_decreasing", "below_lipschitz_bound"], summary)
    return paths


HANDLERS = {
    "rho-map": cmd_rho_map,
    "norms": cmd_norms,
    "decompose": cmd_decompose,
    "sweep": cmd_sweep,
    "atoms-validate": cmd_atoms_validate,
    "product-convergence": cmd_product_convergence,
}


def _error_line(code: str, message: str) -> None:
    print(json.dumps({"error": code, "message": message}), file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="schrodinger-hardy",
        description="Discretized Hardy/BMO experiments for Schrödinger operators.",
        epilog="Any config key may be overridden with --key value; "
               "known keys: " + ", ".join(KEYS) + ", potential.<param>.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="flat key=value config file")
    args, rest = parser.parse_known_args(argv)
    try:
        raw = {}
        if args.config:
            try:
                raw.update(parse_config_text(Path(args.config).read_text(encoding="utf-8")))
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        raw.update(parse_overrides(rest))
        cfg = build_config(raw)
        paths = HANDLERS[args.command](cfg)
    except AnalysisError as exc:
        _error_line(exc.code, str(exc))
        return 2 if isinstance(exc, ConfigError) else 1
    except (OSError, ValueError, ArithmeticError) as exc:
        _error_line(type(exc).__name__, str(exc))
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
