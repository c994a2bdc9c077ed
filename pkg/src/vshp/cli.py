"""Command-line front end. Emits CSV and JSON only.

Exit codes: 0 success, 1 numerical failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .core import ParamError, default_params, load_params, lossless_turbine
from .plant import TrimError, assemble, efficiency_vs_power, trim
from .sim import SCHEMA_VERSION, ScenarioError, load_scenario, run
from .smallsignal import LinearizationError, linearize_trim, modal_report, sweep
from .turbines import (EfficiencyUndefinedError, ModelKind, TurbineDomainError,
                       efficiency_vs_speed)

log = logging.getLogger("vshp")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2

OMEGA_MAP_GRID = tuple(np.round(np.arange(0.70, 1.3001, 0.01), 2))
POWER_MAP_GRID = tuple(np.round(np.arange(0.10, 0.9001, 0.05), 2))


class UsageError(Exception):
    pass


def _params(args):
    try:
        params = load_params(args.params) if args.params else default_params()
        overrides = {}
        for item in args.set or ():
            if "=" not in item:
                raise UsageError(f"--set expects key=value, got {item!r}")
            key, value = item.split("=", 1)
            overrides[key.strip()] = value.strip()
        if getattr(args, "penstock_mode", None):
            overrides["plant.penstock_mode"] = args.penstock_mode
        params = params.replace(**overrides)
        if args.lossless:
            params = lossless_turbine(params)
    except ParamError as exc:
        raise UsageError(str(exc)) from exc
    for key in params.defaulted:
        log.info("defaulted %s", key)
    return params


def _outdir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from exc
    return out


def _meta(params, **extra) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "params_sha256": params.digest(),
        "T_a": params.turbine.T_a,
        "rotor_law": params.turbine.rotor_law,
        "penstock_mode": params.penstock_mode.value,
        "tanh_order": list(params.tanh_order),
        "defaulted": list(params.defaulted),
        **extra,
    }


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2) + "\n")


def _write_table(path: Path, meta: dict, header, rows) -> None:
    with open(path, "w") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}: {json.dumps(value)}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _scenario_path(name: str) -> Path:
    """A scenario file path; bare names of shipped scenarios resolve to the package copy."""
    path = Path(name)
    if path.is_file():
        return path
    if path.parent == Path("."):
        shipped = resources.files("vshp.data").joinpath(path.name)
        if shipped.is_file():
            return Path(str(shipped))
    raise UsageError(f"scenario file not found: {path}")


# --- commands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    path = _scenario_path(args.scenario)
    try:
        scenario = load_scenario(path)
        if args.model:
            scenario = replace(scenario, model=ModelKind.parse(args.model))
        if args.dt:
            scenario = replace(scenario, dt=args.dt)
        if args.record_every:
            scenario = replace(scenario, record_every=args.record_every)
    except (ScenarioError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    params = _params(args)
    out = _outdir(args)
    trace = run(scenario, params)
    stem = f"{scenario.name or path.stem}_{scenario.model.value}"
    trace.to_csv(out / f"{stem}.csv")
    trace.events_json(out / f"{stem}.events.json")
    meta = _meta(params, **trace.metadata, status="ok" if trace.ok else trace.error)
    _write_json(out / f"{stem}.meta.json", meta)
    print(out / f"{stem}.csv")
    if not trace.ok:
        log.error(trace.error)
        return EXIT_NUMERIC
    return EXIT_OK


def _trim(args, params):
    plant = assemble(args.model, params)
    return trim(plant, args.pstar, args.wstar)


def cmd_trim(args) -> int:
    params = _params(args)
    out = _outdir(args)
    tr = _trim(args, params)
    data = _meta(params, model=tr.plant.kind.value, P_star=args.pstar, omega_star=args.wstar,
                 residual=tr.residual, iterations=tr.iterations,
                 state=tr.named(),
                 outputs={k: (v if np.isfinite(v) else None) for k, v in tr.outputs.items()})
    _write_json(out / f"trim_{tr.plant.kind.value}.json", data)
    print(f"g = {tr.g:.10g}  h = {tr.h:.10g}  q = {tr.q:.10g}  P_m = {tr.P_m:.10g}  "
          f"eta_h = {tr.eta_h:.10g}  residual = {tr.residual:.2e}")
    return EXIT_OK


def cmd_linearize(args) -> int:
    params = _params(args)
    out = _outdir(args)
    tr = _trim(args, params)
    lin = linearize_trim(tr)

    def mat(m):
        return [[float(v) if np.isfinite(v) else None for v in row] for row in m]

    data = _meta(params, model=tr.plant.kind.value, P_star=args.pstar, omega_star=args.wstar,
                 states=list(lin.labels), inputs=list(lin.input_names),
                 outputs=list(lin.output_names), x0=lin.x0.tolist(),
                 A=mat(lin.A), B=mat(lin.B), C=mat(lin.C), D=mat(lin.D),
                 method="central differences, step max(1e-6, 1e-6*|x_i|)")
    path = out / f"linear_{tr.plant.kind.value}.json"
    _write_json(path, data)
    print(path)
    return EXIT_OK


def cmd_modes(args) -> int:
    params = _params(args)
    out = _outdir(args)
    tr = _trim(args, params)
    rep = modal_report(tr, normalization=args.normalization)
    path = out / f"modes_{tr.plant.kind.value}.json"
    data = rep.to_dict()
    data.update(tool_version=__version__, defaulted=list(params.defaulted))
    _write_json(path, data)
    for name in ("governor", "surge"):
        k = rep.find_mode(name)
        if k is not None:
            print(f"{name} mode: f = {rep.frequency[k]:.4f} Hz, zeta = {rep.damping[k]:.4f}")
    print(path)
    return EXIT_OK


def cmd_sweep(args) -> int:
    params = _params(args)
    out = _outdir(args)
    res = sweep(args.model, params, args.grid, normalization=args.normalization)
    res.metadata["tool_version"] = __version__
    path = out / f"sweep_{res.kind}_{args.grid}.csv"
    res.to_csv(path)
    for (P, w), z, err in zip(res.points, res.governor_damping(), res.errors):
        if err:
            log.warning("point P*=%g w*=%g failed: %s", P, w, err)
        else:
            print(f"P* = {P:.2f}  w* = {w:.2f}  governor zeta = {z:.4f}")
    print(path)
    return EXIT_OK


def cmd_efficiency_map(args) -> int:
    params = _params(args)
    models = [ModelKind.parse(m) for m in args.models.split(",")]
    if ModelKind.LINEARISED in models:
        raise UsageError("efficiency is not defined for the linearised model")
    out = _outdir(args)
    omegas = OMEGA_MAP_GRID
    cols = [efficiency_vs_speed(m, omegas, args.power, params.turbine, params.waterway)
            for m in models]
    meta = _meta(params, power=args.power, head=1.0,
                 definition="turbine efficiency at fixed power and unit head; "
                            "Euler from the torque term, IEEE/Hygov as P_m/(h q)")
    _write_table(out / "efficiency_vs_speed.csv", meta,
                 ["omega"] + [f"eta_{m.value}" for m in models],
                 zip(omegas, *cols))
    powers = POWER_MAP_GRID
    tables = [efficiency_vs_power(m, params, powers) for m in models]
    header = ["P_star"]
    for m in models:
        header += [f"eta_h_{m.value}", f"eta_total_{m.value}"]
    rows = [[P] + [v for t in tables for v in (t[i][3], t[i][4])] for i, P in enumerate(powers)]
    meta = _meta(params, omega_star=1.0,
                 definition="trimmed plant; eta_total = eta_h * h includes waterway losses")
    _write_table(out / "efficiency_vs_power.csv", meta, header, rows)
    print(out / "efficiency_vs_speed.csv")
    print(out / "efficiency_vs_power.csv")
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vshp", description="Variable-speed hydropower plant simulation and analysis")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", help="parameter file (default: shipped reference set)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a parameter, e.g. turbine.T_a=8")
    common.add_argument("--lossless", action="store_true",
                        help="ideal turbine: A_t = 1, q_nl = 0, D_t = 0")
    common.add_argument("--penstock-mode", choices=["delay", "lumped", "inelastic"])
    common.add_argument("--out", default=".", help="output directory")

    point = argparse.ArgumentParser(add_help=False)
    point.add_argument("--model", required=True, choices=[k.value for k in ModelKind])
    point.add_argument("--pstar", type=float, default=0.6)
    point.add_argument("--wstar", type=float, default=1.0)

    p = sub.add_parser("simulate", parents=[common], help="run a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--model", choices=[k.value for k in ModelKind],
                   help="override the scenario's model")
    p.add_argument("--dt", type=float)
    p.add_argument("--record-every", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("trim", parents=[common, point], help="equilibrium point")
    p.set_defaults(func=cmd_trim)

    p = sub.add_parser("linearize", parents=[common, point], help="state-space matrices")
    p.set_defaults(func=cmd_linearize)

    p = sub.add_parser("modes", parents=[common, point], help="eigenvalues and participation")
    p.add_argument("--normalization", choices=["max", "sum"], default="max")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("sweep", parents=[common], help="governor-mode locus over a grid")
    p.add_argument("--model", required=True, choices=[k.value for k in ModelKind])
    p.add_argument("--grid", choices=["pstar", "wstar"], required=True)
    p.add_argument("--normalization", choices=["max", "sum"], default="max")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("efficiency-map", parents=[common],
                       help="efficiency over speed and over power")
    p.add_argument("--models", default="euler,ieee,hygov",
                   help="comma-separated model kinds")
    p.add_argument("--power", type=float, default=0.6,
                   help="fixed power for the speed map")
    p.set_defaults(func=cmd_efficiency_map)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EfficiencyUndefinedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrimError, LinearizationError, TurbineDomainError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
