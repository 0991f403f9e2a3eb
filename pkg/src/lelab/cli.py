"""Configuration-driven command line front end.

Four subcommands: ``solve`` (one exponent, JSON report), ``sweep``
(continuation over a p-list, CSV), ``verify`` (identity table with exit
codes), and ``oracle`` (radial shooting table for the unit disk).

Exit codes: 0 success, 1 configuration error, 2 solver failure,
3 verification failure.
"""

from __future__ import annotations

import json
import os
import platform
import sys
from dataclasses import dataclass, field

import click
import numpy as np

from . import __version__, diagnostics, fem
from .errors import ConfigError, LelabError, NoBracket
from .geometry import Domain
from .numerics import eliminate_dirichlet, principal_eigenpair
from .radial import radial_shoot
from .solver import (assemble_K, continuation_sweep, solve_single)

CSV_COLUMNS = [
    "status", "p", "h", "M", "x_max_x", "x_max_y", "clearance", "beta",
    "p_int_u_p1", "int_u_p", "energy_gap_rel", "pohozaev_rel", "eigen_rel",
    "flux_rel", "green_rel", "bubble_dist", "m1", "beta_pred",
    "newton_iters",
]

DEFAULT_TOLERANCES = {
    "pohozaev_rel": 0.05,
    "eigen_rel": 0.05,
    "green_rel": 0.05,
    "flux_rel": 0.10,
    "energy_gap_rel": 0.01,
}


def fmt(x) -> str:
    """12 significant digits; empty string for missing values."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return ""
    return format(x, ".12g")


def _num(x):
    """Float rounded to printed precision for the JSON report, or None."""
    if x is None:
        return None
    x = float(x)
    if np.isnan(x):
        return None
    return float(format(x, ".12g"))


def worker_count() -> int:
    cap = os.environ.get("LELAB_THREADS")
    avail = os.cpu_count() or 1
    if cap is None:
        return avail
    try:
        n = int(cap)
    except ValueError:
        raise ConfigError(f"LELAB_THREADS is not an integer: {cap!r}")
    if n < 1:
        raise ConfigError("LELAB_THREADS must be >= 1")
    return min(n, avail)


def _strict(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


@dataclass
class RunConfig:
    """Parsed, validated run configuration."""

    domain: Domain
    h: float
    peak_refinement: bool = True
    p_values: list[float] = field(default_factory=list)
    continuation: bool = True
    max_newton: int = 40
    diag_green: bool = True
    diag_bubble: bool = True
    csv_path: str | None = None
    json_path: str | None = None
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    seed: int = 0
    raw: dict = field(default_factory=dict)


def load_config(path: str) -> RunConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"malformed JSON at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _strict(raw, {"domain", "mesh", "sweep", "solver", "diagnostics",
                  "output", "tolerances", "seed"}, "config root")

    dom_spec = raw.get("domain")
    if not isinstance(dom_spec, dict) or "kind" not in dom_spec:
        raise ConfigError("config requires a domain object with a kind")
    kind = dom_spec["kind"]
    try:
        if kind == "disk":
            _strict(dom_spec, {"kind", "radius"}, "domain")
            domain = Domain("disk", radius=float(dom_spec.get("radius", 1.0)))
        elif kind == "ellipse":
            _strict(dom_spec, {"kind", "a", "b"}, "domain")
            domain = Domain("ellipse", a=float(dom_spec.get("a", 1.0)),
                            b=float(dom_spec.get("b", 1.0)))
        elif kind == "fourier":
            _strict(dom_spec, {"kind", "cos_coeffs", "sin_coeffs"}, "domain")
            domain = Domain(
                "fourier",
                cos_coeffs=[float(c) for c in dom_spec.get("cos_coeffs", [])],
                sin_coeffs=[float(c) for c in dom_spec.get("sin_coeffs", [])])
        else:
            raise ConfigError(f"unknown domain kind: {kind!r}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad domain parameters: {exc}")

    mesh_spec = raw.get("mesh")
    if not isinstance(mesh_spec, dict) or "h" not in mesh_spec:
        raise ConfigError("config requires a mesh object with h")
    _strict(mesh_spec, {"h", "peak_refinement"}, "mesh")
    h = float(mesh_spec["h"])
    if h <= 0:
        raise ConfigError("mesh size h must be positive")

    sweep_spec = raw.get("sweep", {})
    _strict(sweep_spec, {"p", "p_values", "p_start", "p_stop", "p_step"},
            "sweep")
    if "p" in sweep_spec:
        p_values = [float(sweep_spec["p"])]
    elif "p_values" in sweep_spec:
        p_values = [float(p) for p in sweep_spec["p_values"]]
    elif "p_start" in sweep_spec:
        start = float(sweep_spec["p_start"])
        stop = float(sweep_spec["p_stop"])
        step = float(sweep_spec.get("p_step", 1.0))
        if step <= 0 or stop < start:
            raise ConfigError("sweep range must ascend with positive step")
        n = int(round((stop - start) / step))
        p_values = [start + k * step for k in range(n + 1)]
    else:
        raise ConfigError("sweep requires p, p_values, or p_start/p_stop")
    if any(p <= 1 for p in p_values):
        raise ConfigError("exponent must exceed 1")

    solver_spec = raw.get("solver", {})
    _strict(solver_spec, {"continuation", "max_newton"}, "solver")
    diag_spec = raw.get("diagnostics", {})
    _strict(diag_spec, {"green", "bubble"}, "diagnostics")
    out_spec = raw.get("output", {})
    _strict(out_spec, {"csv", "json"}, "output")
    for key in ("csv", "json"):
        if key in out_spec and not out_spec[key]:
            raise ConfigError(f"output path for {key} is empty")

    tol = dict(DEFAULT_TOLERANCES)
    tol_spec = raw.get("tolerances", {})
    _strict(tol_spec, set(DEFAULT_TOLERANCES), "tolerances")
    for k, v in tol_spec.items():
        tol[k] = float(v)

    return RunConfig(
        domain=domain, h=h,
        peak_refinement=bool(mesh_spec.get("peak_refinement", True)),
        p_values=p_values,
        continuation=bool(solver_spec.get("continuation", True)),
        max_newton=int(solver_spec.get("max_newton", 40)),
        diag_green=bool(diag_spec.get("green", True)),
        diag_bubble=bool(diag_spec.get("bubble", True)),
        csv_path=out_spec.get("csv"), json_path=out_spec.get("json"),
        tolerances=tol, seed=int(raw.get("seed", 0)), raw=raw)


def _versions() -> dict:
    import scipy
    return {
        "lelab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _record_dict(rec) -> dict:
    return {
        "status": rec.status,
        "message": rec.message,
        "p": _num(rec.p),
        "h": _num(rec.h),
        "M": _num(rec.max_value),
        "x_max": [_num(rec.peak_point[0]), _num(rec.peak_point[1])],
        "clearance": _num(rec.clearance),
        "residual_norm": _num(rec.residual_norm),
        "newton_iters": int(rec.iterations),
        "n_nodes": int(rec.u.mesh.n_nodes),
    }


def _bundle_dict(b: diagnostics.DiagnosticsBundle) -> dict:
    return {
        "M": _num(b.M),
        "x_max": [_num(b.x_max[0]), _num(b.x_max[1])],
        "clearance": _num(b.clearance),
        "beta": _num(b.beta),
        "p_int_u_p1": _num(b.p_int_u_p1),
        "int_u_p": _num(b.int_u_p),
        "energy_gap_rel": _num(b.energy_gap_rel),
        "pohozaev_abs": _num(b.pohozaev_abs),
        "pohozaev_rel": _num(b.pohozaev_rel),
        "eigen_rel": _num(b.eigen_rel),
        "flux_rel": _num(b.flux_rel),
        "green_rel": _num(b.green_rel),
        "corrector_range": (None if b.corrector_range is None
                            else [_num(b.corrector_range[0]),
                                  _num(b.corrector_range[1])]),
        "bubble_dist": _num(b.bubble_dist),
        "v_min": _num(b.v_min),
        "v_at_peak": _num(b.v_at_peak),
        "v_growth_ratio": _num(b.v_growth_ratio),
        "concentration": [[_num(x), _num(y), _num(m)]
                          for x, y, m in b.concentration],
        "beta_pred": _num(b.beta_pred),
        "failure_reasons": dict(b.failures),
    }


def _csv_row(rec, bundle) -> str:
    if rec.status != "ok" or bundle is None:
        vals = [rec.status, fmt(rec.p), fmt(rec.h)] + [""] * 15
        vals.append(str(int(rec.iterations)))
        return ",".join(vals)
    m1 = bundle.concentration[0][2] if bundle.concentration else None
    vals = [
        rec.status, fmt(rec.p), fmt(rec.h), fmt(bundle.M),
        fmt(bundle.x_max[0]), fmt(bundle.x_max[1]), fmt(bundle.clearance),
        fmt(bundle.beta), fmt(bundle.p_int_u_p1), fmt(bundle.int_u_p),
        fmt(bundle.energy_gap_rel), fmt(bundle.pohozaev_rel),
        fmt(bundle.eigen_rel), fmt(bundle.flux_rel), fmt(bundle.green_rel),
        fmt(bundle.bubble_dist), fmt(m1), fmt(bundle.beta_pred),
        str(int(rec.iterations)),
    ]
    return ",".join(vals)


def _solve_and_diagnose(cfg: RunConfig):
    records = _run_solves(cfg)
    out = []
    for rec in records:
        if rec.status != "ok":
            out.append((rec, None))
            continue
        bundle = diagnostics.compute_bundle(
            rec, cfg.domain, green=cfg.diag_green, bubble=cfg.diag_bubble)
        out.append((rec, bundle))
    return out


def _run_solves(cfg: RunConfig):
    if cfg.continuation and len(cfg.p_values) > 1:
        return continuation_sweep(cfg.domain, cfg.p_values, cfg.h,
                                  peak_refinement=cfg.peak_refinement,
                                  max_newton=cfg.max_newton)
    records = []
    for p in cfg.p_values:
        records.append(solve_single(cfg.domain, p, cfg.h,
                                    peak_refinement=cfg.peak_refinement))
    return records


@click.group()
def main():
    """Lane-Emden laboratory: solve, sweep, verify, oracle."""


@main.command("solve")
@click.option("--config", "config_path", required=True,
              type=click.Path(), help="JSON run configuration.")
def cmd_solve(config_path):
    """Solve a single exponent and write the JSON report."""
    try:
        cfg = load_config(config_path)
        if len(cfg.p_values) != 1:
            raise ConfigError("solve requires exactly one exponent")
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)
    try:
        rec = solve_single(cfg.domain, cfg.p_values[0], cfg.h,
                           peak_refinement=cfg.peak_refinement)
        bundle = diagnostics.compute_bundle(
            rec, cfg.domain, green=cfg.diag_green, bubble=cfg.diag_bubble)
    except LelabError as exc:
        click.echo(f"solver error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(2)
    report = {
        "config_echo": cfg.raw,
        "record": _record_dict(rec),
        "diagnostics": _bundle_dict(bundle),
        "versions": _versions(),
    }
    text = json.dumps(report, indent=2, allow_nan=False) + "\n"
    if cfg.json_path:
        with open(cfg.json_path, "w") as f:
            f.write(text)
        click.echo(f"p = {fmt(rec.p)}  M = {fmt(rec.max_value)}  "
                   f"beta = {fmt(bundle.beta)}  report: {cfg.json_path}")
    else:
        click.echo(text, nl=False)


@main.command("sweep")
@click.option("--config", "config_path", required=True,
              type=click.Path(), help="JSON run configuration.")
def cmd_sweep(config_path):
    """Continuation sweep over p; one CSV row per exponent."""
    try:
        cfg = load_config(config_path)
        if len(cfg.p_values) < 2:
            raise ConfigError("sweep requires at least two exponents")
        if cfg.csv_path is None:
            raise ConfigError("sweep requires an output csv path")
        worker_count()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)
    try:
        pairs = _solve_and_diagnose(cfg)
    except LelabError as exc:
        click.echo(f"solver error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(2)
    lines = [",".join(CSV_COLUMNS)]
    for rec, bundle in pairs:
        lines.append(_csv_row(rec, bundle))
    with open(cfg.csv_path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")
    n_ok = sum(1 for rec, _ in pairs if rec.status == "ok")
    click.echo(f"{n_ok}/{len(pairs)} exponents converged; "
               f"csv: {cfg.csv_path}")


def _verify_rows(cfg: RunConfig, rec) -> list[tuple]:
    """(identity, lhs, rhs, rel gap, tolerance) rows for one record."""
    mesh = rec.u.mesh
    beta, p_int, gap = diagnostics.energy_quantities(rec)
    poh_l, poh_r = diagnostics.pohozaev_sides(rec)
    K = assemble_K(mesh)
    M_op = diagnostics._mass_for(mesh)
    Ke = eliminate_dirichlet(K, mesh.boundary_mask)
    Me = eliminate_dirichlet(M_op, mesh.boundary_mask)
    eig = principal_eigenpair(Ke, Me, mesh.boundary_mask,
                              fem.lumped_mass(mesh))
    eig_l, eig_r = diagnostics.eigen_sides(rec, eig, M_op)
    flux_l, flux_r = diagnostics.flux_sides(rec)
    rows = [
        ("energy_gap_rel", beta, p_int, gap / beta if beta else 0.0,
         cfg.tolerances["energy_gap_rel"]),
        ("pohozaev_rel", poh_l, poh_r,
         abs(poh_l - poh_r) / poh_l if poh_l else 0.0,
         cfg.tolerances["pohozaev_rel"]),
        ("eigen_rel", eig_l, eig_r,
         abs(eig_l - eig_r) / abs(eig_l) if eig_l else 0.0,
         cfg.tolerances["eigen_rel"]),
        ("flux_rel", flux_l, flux_r,
         abs(flux_l - flux_r) / flux_l if flux_l else 0.0,
         cfg.tolerances["flux_rel"]),
    ]
    if cfg.diag_green:
        g_l, g_r, _ = diagnostics.green_sides(rec, cfg.domain)
        rows.append(("green_rel", g_l, g_r, abs(g_l - g_r) / g_l,
                     cfg.tolerances["green_rel"]))
    return rows


@main.command("verify")
@click.option("--config", "config_path", required=True,
              type=click.Path(), help="JSON run configuration.")
def cmd_verify(config_path):
    """Check every integral identity against its tolerance."""
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)
    try:
        records = _run_solves(cfg)
    except LelabError as exc:
        click.echo(f"solver error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(2)
    header = (f"{'p':>6}  {'identity':<16} {'lhs':>18} {'rhs':>18} "
              f"{'rel_gap':>12} {'tol':>9}  verdict")
    click.echo(header)
    all_pass = True
    for rec in records:
        if rec.status != "ok":
            click.echo(f"{fmt(rec.p):>6}  {'(solve failed)':<16} "
                       f"{'':>18} {'':>18} {'':>12} {'':>9}  FAIL")
            all_pass = False
            continue
        for name, lhs, rhs, rel, tol in _verify_rows(cfg, rec):
            ok = rel <= tol
            all_pass = all_pass and ok
            click.echo(f"{fmt(rec.p):>6}  {name:<16} {lhs:>18.10e} "
                       f"{rhs:>18.10e} {rel:>12.4e} {tol:>9.2e}  "
                       f"{'PASS' if ok else 'FAIL'}")
    sys.exit(0 if all_pass else 3)


@main.command("oracle")
@click.option("--p", "p", required=True, type=float, help="Exponent.")
@click.option("--points", "n_points", default=0, type=int,
              help="Number of profile samples to print.")
def cmd_oracle(p, n_points):
    """Radial shooting solution on the unit disk."""
    if p <= 1:
        click.echo("config error: exponent must exceed 1", err=True)
        sys.exit(1)
    if n_points < 0:
        click.echo("config error: points must be >= 0", err=True)
        sys.exit(1)
    try:
        sol = radial_shoot(p)
    except (NoBracket, LelabError) as exc:
        click.echo(f"solver error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(2)
    lhs = 4.0 / (p + 1.0) * sol.power_integral(p + 1.0)
    rhs = 2.0 * np.pi * sol.du_boundary**2
    click.echo(f"p = {fmt(p)}")
    click.echo(f"M = {fmt(sol.center_value)}")
    click.echo(f"du_boundary = {fmt(sol.du_boundary)}")
    click.echo(f"pohozaev_lhs = {fmt(lhs)}")
    click.echo(f"pohozaev_rhs = {fmt(rhs)}")
    if n_points > 0:
        r = np.linspace(0.0, 1.0, n_points)
        u = sol.evaluate(r)
        click.echo("r,u")
        for ri, ui in zip(r, u):
            click.echo(f"{fmt(ri)},{fmt(ui)}")


if __name__ == "__main__":
    main()
