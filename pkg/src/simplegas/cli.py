"""Command-line entry point: ``simplegas <subcommand> [options]``.

Options can also come from a flat ``key = value`` file given with
``--config``; flags override file values. Exit codes: 0 success, 1 solver
failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import io
from .errors import SimpleGasError, NonConvergence

log = logging.getLogger("simplegas")

SUBCOMMANDS = ("solve-simple", "solve-complete", "solve-coupled", "residual", "momentum",
               "compare-bogolyubov", "scattering-length", "scan-energy")


RADIAL_COMMANDS = ("solve-simple", "momentum", "compare-bogolyubov", "scan-energy")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str = ""
    potential: str = "exp:16"
    r_max: float = 64.0
    n_radial: int = 2048
    rho: float | None = None
    e: float | None = None
    rho_a3: float | None = None
    d: int = 3
    n: int = 16
    L: float = 64.0
    kmin: float | None = None
    kmax: float | None = None
    points: int = 60
    kappa_min: float = 0.2
    kappa_max: float = 5.0
    kappa_points: int = 30
    rho_ladder: str = "1e-4,1e-6,1e-8"
    e_values: str | None = None
    tol: float | None = None
    mode0: str = "zero-mean"
    win: str = "zero"
    state: str | None = None
    out: str | None = None
    seed: int = 0

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


POSITIVE = ("r_max", "n_radial", "rho", "e", "rho_a3", "d", "n", "L", "kmin", "kmax", "points",
            "kappa_min", "kappa_max", "kappa_points", "tol")


def _field_types():
    hints = {"float": float, "int": int, "str": str}
    out = {}
    for f in fields(RunConfig):
        base = str(f.type).split("|")[0].strip()
        out[f.name] = hints.get(base, str)
    return out


def _coerce(key, value):
    typ = _field_types()[key]
    try:
        if typ is int:
            fv = float(value)
            if fv != int(fv):
                raise ValueError
            return int(fv)
        return typ(value)
    except (TypeError, ValueError):
        raise UsageError(f"invalid value for '{key}': {value!r}")


def read_config_file(path) -> dict:
    known = {f.name for f in fields(RunConfig)}
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known or key == "subcommand":
            raise UsageError(f"unknown config key '{key}'")
        out[key] = _coerce(key, value)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="flat 'key = value' file; flags override it")
    common.add_argument("--potential", help="exp:LAMBDA | gauss:LAMBDA:SIGMA | table:PATH")
    common.add_argument("--r-max", "--rmax", dest="r_max", type=float, help="radial grid extent")
    common.add_argument("--n-radial", type=int, help="radial grid points")
    dens = common.add_mutually_exclusive_group()
    dens.add_argument("--rho", type=float, help="density")
    dens.add_argument("--e", type=float, help="energy per particle")
    dens.add_argument("--rho-a3", type=float, help="dimensionless density rho*a^3")
    common.add_argument("--d", "--dim", dest="d", type=int, help="torus dimension")
    common.add_argument("--n", type=int, help="torus sites per side (radial nodes for continuum commands)")
    common.add_argument("--L", type=float, help="torus side length")
    common.add_argument("--kmin", type=float)
    common.add_argument("--kmax", type=float)
    common.add_argument("--points", type=int)
    common.add_argument("--kappa-min", type=float)
    common.add_argument("--kappa-max", type=float)
    common.add_argument("--kappa-points", type=int)
    common.add_argument("--rho-ladder", help="comma-separated rho*a^3 values")
    common.add_argument("--e-values", help="comma-separated energies")
    common.add_argument("--tol", type=float)
    common.add_argument("--mode0", choices=["zero-mean", "free"])
    common.add_argument("--win", help="zero | ext:cos:AMP[:M1,M2,..] | proj:M1,M2,..:EPS")
    common.add_argument("--state", help="coupled-state manifest (JSON)")
    common.add_argument("--out", help="output file (CSV, or base path for state dumps)")
    common.add_argument("--seed", type=int)
    verb = common.add_mutually_exclusive_group()
    verb.add_argument("--quiet", action="store_true")
    verb.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="simplegas", description="Simplified-approach Bose gas solvers")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "solve-simple": "solve the Simple Equation at fixed rho or e",
        "solve-complete": "solve the translation-invariant complete equation on a torus",
        "solve-coupled": "least-squares solve of the non-uniform coupled equations",
        "residual": "residual norms of a stored coupled state",
        "momentum": "momentum distribution curve",
        "compare-bogolyubov": "scaling-limit deviation table over a density ladder",
        "scattering-length": "scattering length of the potential",
        "scan-energy": "energy and low-density ratios over a density or energy ladder",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name], argument_default=argparse.SUPPRESS)
    return parser


def parse_config(argv=None) -> tuple[RunConfig, dict]:
    """Returns (config, flags) where flags holds --quiet/--verbose."""
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    flags = {"quiet": ns.pop("quiet", False), "verbose": ns.pop("verbose", False)}
    values = {}
    if "config" in ns:
        values.update(read_config_file(ns.pop("config")))
    values.update({k: v for k, v in ns.items()})
    if values.get("subcommand") in RADIAL_COMMANDS and "n" in ns and "n_radial" not in ns:
        values["n_radial"] = values.pop("n")
    dens = [k for k in ("rho", "e", "rho_a3") if values.get(k) is not None]
    if len(dens) > 1:
        raise UsageError(f"options {', '.join(dens)} are mutually exclusive")
    cfg = RunConfig(**values)
    for key in POSITIVE:
        val = getattr(cfg, key)
        if val is not None and not (isinstance(val, (int, float)) and val > 0 and math.isfinite(val)):
            raise UsageError(f"'{key}' must be positive (got {val})")
    return cfg, flags


# --- helpers -----------------------------------------------------------------

def _floats(text, key):
    try:
        vals = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"invalid list for '{key}': {text!r}")
    if not vals or any(not x > 0 for x in vals):
        raise UsageError(f"'{key}' must be a list of positive numbers")
    return vals


def _potential(cfg):
    from .potentials import parse_potential

    try:
        return parse_potential(cfg.potential)
    except (ValueError, OSError) as exc:
        raise UsageError(f"invalid potential '{cfg.potential}': {exc}")


def _grid(cfg):
    from .radial_field import RadialGrid

    return RadialGrid(cfg.r_max, cfg.n_radial)


def _torus(cfg):
    from .torus_field import Torus

    try:
        return Torus(cfg.d, cfg.n, cfg.L)
    except ValueError as exc:
        raise UsageError(str(exc))


def _density(cfg, v, required=True):
    if cfg.rho is not None:
        return cfg.rho
    if cfg.rho_a3 is not None:
        return cfg.rho_a3 / v.scattering_length() ** 3
    if required:
        raise UsageError("a density is required (--rho or --rho-a3)")
    return None


def _out(cfg, default):
    path = Path(cfg.out or default)
    if path.parent and not path.parent.exists():
        raise UsageError(f"output directory {path.parent} does not exist")
    return path


def _header(cfg, chash):
    return [f"config_hash={chash}", "config=" + json.dumps(cfg.as_dict(), sort_keys=True)]


def _summary(path: Path | None, cfg, chash, payload, quiet):
    doc = {"config": cfg.as_dict(), "config_hash": chash, **payload}
    if path is not None:
        io.write_json(path, doc)
    if not quiet:
        print(json.dumps(doc, indent=2, sort_keys=True, default=io._default))
    return doc


def parse_win(text: str, torus):
    from .torus_field import ExternalPotential, SymmetrizedProjector, ZeroWin

    parts = text.split(":")
    try:
        if parts[0] == "zero":
            return ZeroWin()
        if parts[0] == "ext" and parts[1] == "cos":
            amp = float(parts[2])
            m = [int(x) for x in parts[3].split(",")] if len(parts) > 3 else [1] + [0] * (torus.d - 1)
            if len(m) != torus.d:
                raise ValueError("mode has wrong dimension")
            k = 2.0 * np.pi * np.asarray(m) / torus.L
            return ExternalPotential(amp * np.cos(torus.coords @ k))
        if parts[0] == "proj":
            m = tuple(int(x) for x in parts[1].split(","))
            if len(m) != torus.d:
                raise ValueError("mode has wrong dimension")
            return SymmetrizedProjector(m, float(parts[2]))
    except (IndexError, ValueError) as exc:
        raise UsageError(f"invalid --win '{text}': {exc}")
    raise UsageError(f"invalid --win '{text}'")


# --- subcommands ---------------------------------------------------------------

def cmd_solve_simple(cfg, chash, quiet):
    from .simple_equation import SimpleOptions, solve_at_e, solve_at_rho

    v = _potential(cfg)
    grid = _grid(cfg)
    opts = SimpleOptions() if cfg.tol is None else SimpleOptions(tol=cfg.tol)
    if cfg.e is not None:
        sol = solve_at_e(cfg.e, v, grid, opts)
    else:
        sol = solve_at_rho(_density(cfg, v), v, grid, opts)
    path = _out(cfg, "solve-simple.csv")
    u = sol.u
    io.write_csv(path, ["r", "u", "k", "u_hat"], [grid.r, u.values, grid.k, sol.u_hat.values],
                 _header(cfg, chash))
    a = v.scattering_length()
    payload = sol.summary()
    payload.update({"a": a, "rho_a3": sol.rho * a**3, "e_over_2pi_rho_a": sol.e / (2 * np.pi * sol.rho * a),
                    "fixed_point_defect": sol.fixed_point_defect(), "csv": str(path)})
    _summary(path.with_suffix(".json"), cfg, chash, payload, quiet)
    return 0


def cmd_solve_complete(cfg, chash, quiet):
    from .complete_equation import CompleteOptions, solve_complete
    from .torus_field import TorusField, field_to_csv

    v = _potential(cfg)
    t = _torus(cfg)
    rho = _density(cfg, v)
    opts = CompleteOptions(mode0=cfg.mode0) if cfg.tol is None else CompleteOptions(tol=cfg.tol, mode0=cfg.mode0)
    sol = solve_complete(rho, v, t, opts)
    path = _out(cfg, "solve-complete.csv")
    field_to_csv(path, TorusField(t, sol.u), _header(cfg, chash))
    _summary(path.with_suffix(".json"), cfg, chash, {**sol.summary(), "csv": str(path)}, quiet)
    return 0


def _write_state(base: Path, st, cfg, chash, extra):
    from .torus_field import PairField, TorusField, field_to_csv, save_pair

    t = st.torus
    field_to_csv(f"{base}.g1.csv", TorusField(t, np.real(st.g1)), _header(cfg, chash))
    save_pair(f"{base}.u2", PairField(t, st.u2, "u2"), {"config_hash": chash})
    manifest = {"d": t.d, "n": t.n, "L": t.L, "rho": st.rho, "win": cfg.win,
                "potential": cfg.potential, "g1": f"{base.name}.g1.csv", "u2": f"{base.name}.u2",
                "config_hash": chash, **extra}
    io.write_json(f"{base}.json", manifest)


def load_state(manifest_path):
    """Read a coupled-state dump; raises UsageError on any inconsistency."""
    from .nonuniform_simplified import CoupledState
    from .torus_field import Torus, load_pair

    p = Path(manifest_path)
    try:
        meta = json.loads(p.read_text())
        t = Torus(int(meta["d"]), int(meta["n"]), float(meta["L"]))
        names, data = io.read_csv(p.parent / meta["g1"])
        g1 = data[:, names.index("value")]
        u2 = load_pair(p.parent / meta["u2"])
        if g1.shape != (t.Ns,) or u2.torus != t:
            raise ValueError("field sizes do not match the torus")
        if not (np.all(np.isfinite(g1)) and np.all(g1 > 0)):
            raise ValueError("g1 must be finite and positive")
        rho = float(meta["rho"])
    except (OSError, KeyError, ValueError, TypeError, IndexError) as exc:
        raise UsageError(f"corrupted state dump {manifest_path}: {exc}")
    return meta, t, CoupledState(t, g1, u2.values, None, rho)


def cmd_solve_coupled(cfg, chash, quiet):
    from .complete_equation import solve_complete
    from .nonuniform_simplified import CoupledOptions, solve_coupled, state_from_complete

    v = _potential(cfg)
    t = _torus(cfg)
    rho = _density(cfg, v)
    win = parse_win(cfg.win, t)
    init = state_from_complete(solve_complete(rho, v, t))
    opts = CoupledOptions() if cfg.tol is None else CoupledOptions(tol=cfg.tol)
    code = 0
    try:
        res = solve_coupled(v, rho, t, win, opts, init=init)
    except NonConvergence as exc:
        if not hasattr(exc, "result"):
            raise
        res = exc.result
        log.error("%s", exc)
        code = 1
    base = Path(cfg.out or "state")
    if base.suffix == ".json":
        base = base.with_suffix("")
    if base.parent and not base.parent.exists():
        raise UsageError(f"output directory {base.parent} does not exist")
    payload = {"energy": res.energy, "iterations": res.iterations, "res_g1": res.res_g1,
               "res_g2": res.res_g2, "res_g2_raw": res.res_g2_raw, "converged": res.converged}
    _write_state(base, res.state, cfg, chash, payload)
    _summary(None, cfg, chash, {**payload, "manifest": f"{base}.json"}, quiet)
    return code


def cmd_residual(cfg, chash, quiet):
    from .nonuniform_simplified import CoupledState, build_terms, energy, projected_residuals

    if not cfg.state:
        raise UsageError("--state is required")
    meta, t, st = load_state(cfg.state)
    v = _potential(cfg)
    rho = _density(cfg, v, required=False) or st.rho
    win = parse_win(cfg.win if cfg.win != "zero" else meta.get("win", "zero"), t)
    st = CoupledState(t, st.g1, st.u2, win, rho)
    terms = build_terms(st, v)
    r1, r2, raw = projected_residuals(st, terms)
    payload = {"res_g1": float(np.max(np.abs(r1))), "res_g2": float(np.max(np.abs(r2))),
               "res_g2_raw": float(np.max(np.abs(raw))), "energy": float(np.real(energy(st, terms))),
               "invariants": st.check()}
    _summary(Path(cfg.out) if cfg.out else None, cfg, chash, payload, quiet)
    return 0


def cmd_momentum(cfg, chash, quiet):
    from .momentum_distribution import (ResolventWorkspace, condensate_fraction, momentum_bogolyubov,
                                        momentum_simpleq, scaling_function)
    from .simple_equation import solve_at_e, solve_at_rho

    v = _potential(cfg)
    grid = _grid(cfg)
    sol = solve_at_e(cfg.e, v, grid) if cfg.e is not None else solve_at_rho(_density(cfg, v), v, grid)
    kh = 2.0 * np.sqrt(sol.e)
    kmin = cfg.kmin if cfg.kmin is not None else 0.05 * kh
    kmax = cfg.kmax if cfg.kmax is not None else 100.0 * kh
    if not kmax > kmin:
        raise UsageError("kmax must exceed kmin")
    k = np.geomspace(kmin, kmax, cfg.points)
    ws = ResolventWorkspace(sol)
    ms = momentum_simpleq(sol, k, ws)
    a = v.scattering_length()
    mb = momentum_bogolyubov(k, sol.rho, a)
    path = _out(cfg, "momentum.csv")
    io.write_csv(path, ["k", "kappa", "M_simpleq", "M_bog", "scaling_fn"],
                 [k, k / kh, ms.M, mb.M, scaling_function(k / kh)], _header(cfg, chash))
    _summary(path.with_suffix(".json"), cfg, chash,
             {"e": sol.e, "rho": sol.rho, "a": a, "D": ws.D,
              "uncondensed_fraction": condensate_fraction(sol, ws), "csv": str(path)}, quiet)
    return 0


def cmd_compare_bogolyubov(cfg, chash, quiet):
    from .momentum_distribution import ResolventWorkspace, scaling_comparison
    from .simple_equation import solve_at_rho

    v = _potential(cfg)
    grid = _grid(cfg)
    a = v.scattering_length()
    ladder = _floats(cfg.rho_ladder, "rho_ladder")
    kappa = np.geomspace(cfg.kappa_min, cfg.kappa_max, cfg.kappa_points)
    cols = {name: [] for name in ("rho", "rho_a3", "kappa", "rhoM_simpleq", "rhoM_bog", "scaling_fn",
                                  "dev_simpleq", "dev_bog")}
    rows = []
    for ra3 in ladder:
        sol = solve_at_rho(ra3 / a**3, v, grid)
        tab = scaling_comparison(sol, kappa, ResolventWorkspace(sol))
        for key in ("kappa", "rhoM_simpleq", "rhoM_bog", "scaling_fn", "dev_simpleq", "dev_bog"):
            cols[key].extend(tab[key])
        cols["rho"].extend([sol.rho] * kappa.size)
        cols["rho_a3"].extend([ra3] * kappa.size)
        rows.append({"rho_a3": ra3, "e": sol.e, "max_dev_simpleq": float(np.max(np.abs(tab["dev_simpleq"]))),
                     "max_dev_bog": float(np.max(np.abs(tab["dev_bog"])))})
    path = _out(cfg, "compare-bogolyubov.csv")
    names = list(cols)
    io.write_csv(path, names, [cols[n] for n in names], _header(cfg, chash))
    _summary(path.with_suffix(".json"), cfg, chash, {"ladder": rows, "csv": str(path)}, quiet)
    return 0


def cmd_scattering_length(cfg, chash, quiet):
    v = _potential(cfg)
    a = v.scattering_length()
    _summary(Path(cfg.out) if cfg.out else None, cfg, chash, {"a": a}, quiet)
    return 0


def cmd_scan_energy(cfg, chash, quiet):
    from .simple_equation import solve_at_e, solve_at_rho

    v = _potential(cfg)
    grid = _grid(cfg)
    a = v.scattering_length()
    if cfg.e_values:
        sols = [solve_at_e(e, v, grid) for e in _floats(cfg.e_values, "e_values")]
    else:
        sols = [solve_at_rho(x / a**3, v, grid) for x in _floats(cfg.rho_ladder, "rho_ladder")]
    rho = np.array([s.rho for s in sols])
    e = np.array([s.e for s in sols])
    ra3 = rho * a**3
    ratio = e / (2 * np.pi * rho * a)
    lhy = (ratio - 1.0) / np.sqrt(ra3)
    path = _out(cfg, "scan-energy.csv")
    io.write_csv(path, ["rho", "e", "rho_a3", "e_over_2pi_rho_a", "lhy_coefficient"],
                 [rho, e, ra3, ratio, lhy], _header(cfg, chash))
    _summary(path.with_suffix(".json"), cfg, chash,
             {"a": a, "lhy_reference": 128 / (15 * np.sqrt(np.pi)), "csv": str(path)}, quiet)
    return 0


COMMANDS = {
    "solve-simple": cmd_solve_simple,
    "solve-complete": cmd_solve_complete,
    "solve-coupled": cmd_solve_coupled,
    "residual": cmd_residual,
    "momentum": cmd_momentum,
    "compare-bogolyubov": cmd_compare_bogolyubov,
    "scattering-length": cmd_scattering_length,
    "scan-energy": cmd_scan_energy,
}


def run(cfg: RunConfig, quiet: bool = False) -> int:
    chash = io.config_hash(cfg.as_dict())
    try:
        return COMMANDS[cfg.subcommand](cfg, chash, quiet)
    except UsageError as exc:
        print(f"simplegas: error: {exc}", file=sys.stderr)
        return 2
    except SimpleGasError as exc:
        if isinstance(exc, ValueError):
            print(f"simplegas: error: {exc}", file=sys.stderr)
            return 2
        print(f"simplegas: solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        hist = getattr(exc, "history", None)
        if hist:
            print(f"simplegas: last residuals: {hist[-5:]}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    try:
        cfg, flags = parse_config(argv)
    except UsageError as exc:
        print(f"simplegas: error: {exc}", file=sys.stderr)
        return 2
    level = logging.DEBUG if flags["verbose"] else logging.ERROR if flags["quiet"] else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if os.environ.get("SIMPLEGAS_THREADS"):
        log.debug("SIMPLEGAS_THREADS=%s", os.environ["SIMPLEGAS_THREADS"])
    return run(cfg, quiet=flags["quiet"])


if __name__ == "__main__":
    sys.exit(main())
