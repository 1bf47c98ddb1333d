"""Command-line front end: ``critwave <subcommand> [config.ini] [--output-dir DIR]``.

Exit status: 0 success, 2 validation failure (nothing written), 3 numerical
failure (a diagnostic JSON is written to the output directory).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from typing import Optional

import numpy as np

from critwave import __version__
from critwave.config import (
    ConfigError,
    RunConfig,
    format_float,
    parse_config,
)
from critwave.core import (
    DampingSpec,
    Profile,
    ProblemSpec,
    critical_exponent,
    lifespan_exponent,
)

SUBCOMMANDS = ("pc", "simulate", "sweep", "verify-weight", "verify-ineq", "testfn")
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class NumericalFailure(RuntimeError):
    def __init__(self, message, detail=None):
        super().__init__(message)
        self.detail = detail or {}


# -- output helpers ----------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def atomic_write(directory: str, name: str, text: str) -> str:
    fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, os.path.join(directory, name))
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_artifacts(directory: str, artifacts: dict, cfg: Optional[RunConfig], subcommand: str):
    """Write each artifact, then a manifest listing their hashes."""
    hashes = {name: atomic_write(directory, name, text) for name, text in sorted(artifacts.items())}
    manifest = {"subcommand": subcommand, "version": __version__, "artifacts": hashes}
    if cfg is not None:
        manifest["config"] = cfg.as_dict()
        manifest["config_sha256"] = cfg.sha256()
        atomic_write(directory, "config.ini", cfg.emit())
    atomic_write(directory, "manifest.json", json_text(manifest))


# -- builders from config ----------------------------------------------------------------


def build_problem(cfg: RunConfig):
    d, pr = cfg.section("damping"), cfg.section("problem")
    spec = DampingSpec(d["a0"], d["alpha"], d["beta"])
    prob = ProblemSpec(
        pr["dim"], pr["p"], pr["epsilon"],
        Profile(pr["u0_shape"], pr["u0_amplitude"], pr["u0_radius"]),
        Profile(pr["u1_shape"], pr["u1_amplitude"], pr["u1_radius"]),
        pr["R0"],
    )
    return spec, prob


def _controls(cfg: RunConfig, **kw):
    from critwave.solver import Controls

    c = cfg.section("controls")
    return Controls(t_max=c["t_max"], blowup_threshold=c["blowup_threshold"],
                    record_every=c["record_every"], cfl=c["cfl"], **kw)


def _grid(cfg: RunConfig, dim: int, R0: float, t_max: float):
    from critwave.solver import RadialGrid

    g = cfg.section("grid")
    return RadialGrid.covering(dim, g["dr"], R0, t_max, halo=g["halo"])


def _weight(cfg: RunConfig, spec: DampingSpec, dim: int, p: Optional[float] = None):
    from critwave.weights import VerificationGrid, calibrate, default_delta0

    g = cfg.section("grid")
    delta0 = cfg["controls.delta0"]
    if delta0 == 0.0:
        try:
            delta0 = default_delta0(dim, spec.alpha, p)
        except ValueError:
            delta0 = default_delta0(dim, spec.alpha)
    vg = VerificationGrid(g["verify_r_max"], g["verify_t_max"], g["verify_n_r"], g["verify_n_t"])
    return calibrate(spec, dim, delta0, vg), vg


# -- subcommands -------------------------------------------------------------------------


def cmd_pc(dim: int, alpha: float, p: Optional[float], beta: float) -> dict:
    pc = critical_exponent(dim, alpha)
    out = {"dim": dim, "alpha": alpha, "beta": beta, "p_c": pc, "critical_lifespan_power": pc - 1.0}
    if p is not None:
        out["p"] = p
        gap = 1.0 / (p - 1.0) - (dim - alpha) / 2.0
        out["subcritical_kappa"] = (2.0 - alpha) / (2.0 * (1.0 + beta)) / gap if gap > 0 else math.inf
        try:
            regime, expo = lifespan_exponent(DampingSpec(1.0, alpha, beta),
                                             ProblemSpec(dim, p, 1.0))
            out["regime"], out["exponent"] = regime, expo
        except ValueError:
            out["regime"] = "supercritical"
    return out


def cmd_simulate(cfg: RunConfig) -> dict:
    from critwave.energy import EnergyTracker, energy_columns
    from critwave.solver import TIME_SERIES_COLUMNS, NonFinite, run

    spec, prob = build_problem(cfg)
    ctl = _controls(cfg)
    grid = _grid(cfg, prob.dim, prob.R0, ctl.t_max)
    observers, tracker = [], None
    if spec.alpha < 0 and spec.beta == 0:
        weight, _ = _weight(cfg, spec, prob.dim, prob.p)
        tracker = EnergyTracker(weight, spec, grid, prob.p, prob.R0)
        observers.append(tracker)
    try:
        out = run(spec, prob, grid, ctl, observers=observers)
    except NonFinite as exc:
        raise NumericalFailure(str(exc)) from exc
    header = list(TIME_SERIES_COLUMNS)
    cols = [out.column(c) for c in header]
    if tracker is not None:
        extra = energy_columns(tracker, cfg["controls.energy_convention"])
        header += list(extra)
        cols += [extra[k] for k in extra]
    rows = zip(*cols)
    summary = {"status": out.status, "t_end": out.t_end, "steps": out.steps, "dt": out.dt,
               "max_leak": out.max_leak, "n_r": grid.n_r, "dr": grid.dr}
    if out.lifespan is not None:
        ls = out.lifespan
        summary["lifespan"] = {"T": ls.T, "lo": ls.lo, "hi": ls.hi, "t_cross": ls.t_cross}
    return {"timeseries.csv": csv_text(header, rows), "run.json": json_text(summary)}


def cmd_sweep(cfg: RunConfig) -> dict:
    from critwave.blowup import lifespan_sweep, t_nonincreasing

    spec, prob = build_problem(cfg)
    ctl = _controls(cfg)
    grid = _grid(cfg, prob.dim, prob.R0, ctl.t_max)
    res = lifespan_sweep(spec, prob, cfg["controls.sweep_eps"], grid, ctl)
    d = res.to_dict()
    d["T_nonincreasing"] = t_nonincreasing(res)
    rows = [(pt.eps, pt.status, "" if pt.T is None else pt.T, "" if pt.T_lo is None else pt.T_lo,
             "" if pt.T_hi is None else pt.T_hi, int(pt.used)) for pt in res.points]
    return {"sweep.json": json_text(d),
            "sweep.csv": csv_text(("eps", "status", "T", "T_lo", "T_hi", "used"), rows)}


def cmd_verify_weight(cfg: RunConfig) -> dict:
    from critwave.weights import CalibrationFailed, laplacian_residual

    spec = DampingSpec(cfg["damping.a0"], cfg["damping.alpha"], cfg["damping.beta"])
    dim = cfg["problem.dim"]
    try:
        weight, vg = _weight(cfg, spec, dim)
    except CalibrationFailed as exc:
        raise NumericalFailure(str(exc), exc.worst) from exc
    T, R = vg.mesh()
    m24, m25 = weight.margins(T, R)
    rows = zip(T.ravel(), R.ravel(), m24.ravel(), m25.ravel())
    par = weight.params
    summary = {"R_delta": par.R_delta, "A0": par.A0, "mu": par.mu, "delta": par.delta,
               "delta0": par.delta0, "min_margin_24": float(m24.min()),
               "min_margin_25": float(m25.min()),
               "laplacian_residual": laplacian_residual(weight.table),
               "ladder": vars(par.ladder)}
    return {"weight_margins.csv": csv_text(("t", "r", "margin_24", "margin_25"), rows),
            "weight_summary.json": json_text(summary)}


def cmd_verify_ineq(cfg: RunConfig) -> dict:
    from critwave import inequalities as iq

    dim, p = cfg["problem.dim"], cfg["problem.p"]
    corpus = iq.TestFunctionCorpus.generate(dim, cfg["controls.corpus_size"], cfg["controls.seed"])
    gn_ok = p >= 1 and (dim < 3 or p <= (dim + 2) / (dim - 2))
    header = ("index", "kind", "amp", "width", "shift", "freq", "gn", "ckn_k1", "ckn_k2",
              "ckn_k3", "gamma0", "gamma2", "ibp_gamma0", "ibp_gamma2")
    rows = []
    for i, u in enumerate(corpus.entries):
        rows.append((i, u.kind, u.amp, u.width, u.shift, u.freq,
                     iq.gn_ratio(u, p, dim) if gn_ok else float("nan"),
                     *(iq.ckn_ratio(u, k, dim) for k in (1, 2, 3)),
                     iq.gamma_step_ratio(u, 0.0, dim), iq.gamma_step_ratio(u, 2.0, dim),
                     iq.ibp_residual(u, 0.0, dim), iq.ibp_residual(u, 2.0, dim)))
    arr = {h: [row[j] for row in rows] for j, h in enumerate(header)}
    summary = {"dim": dim, "p": p, "seed": cfg["controls.seed"], "size": len(corpus),
               "sup": {h: float(np.max(arr[h])) for h in header[6:12]},
               "max_ibp_residual": float(max(np.max(arr["ibp_gamma0"]), np.max(arr["ibp_gamma2"])))}
    return {"ineq_ratios.csv": csv_text(header, rows), "ineq_summary.json": json_text(summary)}


def cmd_testfn(cfg: RunConfig) -> dict:
    from critwave.blowup import (
        InsufficientCoverage,
        SpacetimeRecord,
        TestFunctionProbe,
        derivative_constants,
        probe_controls,
        probe_inequality,
    )
    from critwave.solver import run

    spec, prob = build_problem(cfg)
    if spec.beta not in (0.0, 1.0):
        raise ConfigError("damping.beta", "test-function probes need beta = 0 or 1")
    radii = cfg["controls.probe_R"]
    probes = [TestFunctionProbe(R, prob.p, spec.alpha, spec.beta, prob.dim) for R in radii]
    r_need = max(pr.r_extent for pr in probes) + 2 * cfg["grid.dr"]
    dr = cfg["grid.dr"]
    t_max = cfg["controls.t_max"]  # run on to blow-up; probes need t <= max R only
    grid = _grid(cfg, prob.dim, prob.R0, t_max)
    ctl = probe_controls(t_max, r_need, dr, cfl=cfg["controls.cfl"],
                         blowup_threshold=cfg["controls.blowup_threshold"],
                         record_every=cfg["controls.record_every"])
    out = run(spec, prob, grid, ctl)
    rec = SpacetimeRecord.from_outcome(out, prob.dim)
    rows = []
    try:
        for pr in probes:
            res = probe_inequality(rec, pr, prob, spec)
            c = derivative_constants(pr)
            rows.append((pr.R, res.lhs, res.nonlinear, res.nonlinear_star, res.rhs_shape, res.ratio,
                         c["dt"], c["dtt"], c["lap"]))
    except InsufficientCoverage as exc:
        raise NumericalFailure(str(exc), {"status": out.status, "t_end": out.t_end}) from exc
    ratios = [row[5] for row in rows]
    summary = {"status": out.status, "t_end": out.t_end, "ratio_max_over_min": max(ratios) / min(ratios)}
    header = ("R", "lhs", "nonlinear", "nonlinear_star", "rhs_shape", "ratio", "C_dt", "C_dtt", "C_lap")
    return {"testfn.csv": csv_text(header, rows), "testfn.json": json_text(summary)}


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "verify-weight": cmd_verify_weight,
    "verify-ineq": cmd_verify_ineq,
    "testfn": cmd_testfn,
}


def dispatch(subcommand: str, cfg: RunConfig, output_dir: Optional[str] = None) -> int:
    """Run a configured subcommand and write its artifacts; returns the exit status."""
    if subcommand not in COMMANDS:
        print(f"error: unknown subcommand {subcommand!r}", file=sys.stderr)
        return EXIT_INVALID
    out_dir = output_dir or cfg["output.output_dir"]
    if not out_dir or not os.path.isdir(out_dir):
        print(f"error: output.output_dir: directory {out_dir!r} does not exist", file=sys.stderr)
        return EXIT_INVALID
    try:
        artifacts = COMMANDS[subcommand](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailure, FloatingPointError, ArithmeticError, RuntimeError) as exc:
        detail = getattr(exc, "detail", {})
        diag = {"subcommand": subcommand, "error": type(exc).__name__, "message": str(exc),
                "detail": detail}
        atomic_write(out_dir, "diagnostic.json", json_text(diag))
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    write_artifacts(out_dir, artifacts, cfg, subcommand)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="critwave", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    pc = sub.add_parser("pc", help="critical exponent and lifespan exponents")
    pc.add_argument("--dim", type=int, required=True)
    pc.add_argument("--alpha", type=float, required=True)
    pc.add_argument("--beta", type=float, default=0.0)
    pc.add_argument("--p", type=float, default=None)
    helps = {
        "simulate": "one run; time series and status",
        "sweep": "lifespan sweep over controls.sweep_eps with slope fit",
        "verify-weight": "calibrate the weight and tabulate margins",
        "verify-ineq": "interpolation-inequality ratios over a seeded corpus",
        "testfn": "test-function probe ratios on one run",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("config", help="INI configuration file")
        sp.add_argument("--output-dir", default=None, help="overrides [output] output_dir")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one configuration value")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "pc":
        try:
            res = cmd_pc(args.dim, args.alpha, args.p, args.beta)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
        sys.stdout.write(json_text(res))
        return EXIT_OK
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = parse_config(fh.read(), args.command)
        for item in args.set:
            key, _, raw = item.partition("=")
            cfg = cfg.with_value(key.strip(), raw)
        cfg = parse_config(cfg.emit(), args.command)
        if args.output_dir:
            cfg = cfg.with_value("output.output_dir", args.output_dir)
    except (OSError, ConfigError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return dispatch(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
