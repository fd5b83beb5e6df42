"""Command-line front end: simulate, verify, prep, fit, plot.

Exit codes: 0 success, 1 verification failure, 2 input error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .dynamics import (
    NoiseSpec,
    Trajectory,
    anisotropy_envelope,
    evolve_master,
    para_hamiltonian,
    simulate_model,
)
from .errors import InvalidArgumentError, NumericalError
from .fockspace import basis_state, make_space
from .paraalgebra import ParaModel, para_lowering, vacuum_state, verify_relations
from .protocol import (
    POLARITIES,
    ReadoutScan,
    fit_populations,
    plan_fock_prep,
    prep_fidelity,
    sample_probabilities,
)
from .serialize import (
    dumps_json,
    read_csv_table,
    read_scan_csv,
    trajectory_to_dict,
    write_atomic,
    write_json,
    write_scan_csv,
    write_trajectory_csv,
)
from .svgplot import Series, line_chart

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

PLOT_LABELS = {"P_up": "P_up", "n_x": "<n_x>", "n_y": "<n_y>", "N_para": "<N_para>",
               "leakage": "top-level population", "t_s": "t (s)"}


@dataclass
class RunReport:
    config: dict
    files: List[str] = field(default_factory=list)
    wall_time_s: float = 0.0
    max_leakage: float = 0.0
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"config": self.config, "files": self.files, "wall_time_s": self.wall_time_s,
                "max_leakage": self.max_leakage, "warnings": self.warnings}


def _say(args, msg: str):
    if not args.quiet:
        print(msg)


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def trajectory_svg(traj: Trajectory, columns: Sequence[str], title: str,
                   band: Optional[tuple] = None) -> str:
    series = [Series(PLOT_LABELS.get(c, c), traj.times, traj.column(c)) for c in columns]
    y_range = (0.0, 1.0) if list(columns) == ["P_up"] else None
    return line_chart(series, title=title, x_label="t (s)",
                      y_label=", ".join(PLOT_LABELS.get(c, c) for c in columns),
                      band=band, y_range=y_range)


def cmd_simulate(cfg: RunConfig, out: Path, strict: bool = False, seed: Optional[int] = None,
                 log=print) -> RunReport:
    """Run one configured simulation and write its artifacts into ``out``."""
    start = time.perf_counter()
    strict = strict or cfg.strict
    if seed is not None:
        cfg = cfg.model_copy(update={"sampling": cfg.sampling.model_copy(update={"seed": seed})})
    report = RunReport(config=cfg.echo())
    space = make_space(*cfg.dims())
    model = cfg.para_model()
    if cfg.initial_state == "vacuum":
        psi0 = vacuum_state(space, model)
    else:
        s = cfg.initial_state
        psi0 = basis_state(space, s.spin, s.n_x, s.n_y)
    times = cfg.times_s()
    title = f"{model.order}-order {'para-Fermi' if model.is_fermi else 'para-Bose'}"

    def keep(path: Path):
        report.files.append(str(path))

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        traj = simulate_model(space, model, psi0, times, method=cfg.method,
                              snapshots=cfg.outputs.snapshots, strict=strict)
        keep(write_trajectory_csv(out / cfg.outputs.csv, traj))
        report.max_leakage = traj.max_leakage
        if cfg.outputs.snapshots:
            keep(write_json(out / (Path(cfg.outputs.csv).stem + ".json"), trajectory_to_dict(traj)))

        band = None
        if cfg.coupling.has_pair and not model.is_fermi:
            plus, minus = anisotropy_envelope(space, model, psi0, times, cfg.coupling.omega_r,
                                              cfg.coupling.omega_b, method=cfg.method, strict=strict)
            keep(write_trajectory_csv(out / "envelope_plus.csv", plus))
            keep(write_trajectory_csv(out / "envelope_minus.csv", minus))
            report.max_leakage = max(report.max_leakage, plus.max_leakage, minus.max_leakage)
            col = cfg.outputs.columns[0]
            band = (times, plus.column(col), minus.column(col))

        if cfg.noise.enabled:
            noise = NoiseSpec(cfg.noise.heating_rate, cfg.noise.n_th, dict(cfg.noise.per_mode))
            heated = evolve_master(para_hamiltonian(space, model), psi0.to_density(), times, noise,
                                   method=cfg.noise.method, model=model, strict=strict)
            keep(write_trajectory_csv(out / "trajectory_heating.csv", heated))
            report.max_leakage = max(report.max_leakage, heated.max_leakage)
            report.warnings.extend(heated.warnings)

        if cfg.sampling.enabled:
            sampled = sample_probabilities(traj.p_up, cfg.sampling.shots, cfg.sampling.seed)
            scan = ReadoutScan("x", times, sampled, cfg.sampling.shots, cfg.sampling.seed)
            keep(write_scan_csv(out / "samples.csv", scan))

        if cfg.outputs.svg:
            svg = trajectory_svg(traj, cfg.outputs.columns, title, band)
            keep(write_atomic(out / cfg.outputs.svg, svg))

    for w in caught:
        msg = str(w.message)
        if msg not in report.warnings:
            report.warnings.append(msg)
    report.wall_time_s = time.perf_counter() - start
    report_path = out / "run_report.json"
    report.files.append(str(report_path))
    write_json(report_path, report.to_dict())
    for msg in report.warnings:
        log(f"warning: {msg}")
    return report


def _run_simulate(args) -> int:
    if not args.config:
        raise InvalidArgumentError("simulate needs --config PATH")
    cfg = load_config(args.config)
    report = cmd_simulate(cfg, _out_dir(args), strict=args.strict, seed=args.seed,
                          log=lambda m: print(m, file=sys.stderr))
    for f in report.files:
        _say(args, f"wrote {f}")
    return EXIT_OK


def _corrupt(lowering):
    # negative control: a slightly rescaled ladder operator breaks the cubic relations
    return lowering * 1.01


def _run_verify(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        kind, order, branch = cfg.model.kind, cfg.model.order, cfg.model.branch
        dims = cfg.dims()
    else:
        if args.kind is None or args.order is None:
            raise InvalidArgumentError("verify needs --kind and --order (or --config)")
        kind, order, branch = args.kind, args.order, args.branch
        dims = None
    model = ParaModel(kind, order, branch)
    if args.truncation:
        dims = tuple(args.truncation)
    if dims is None:
        dims = (order // 2 + 3,) * 2 if model.is_fermi else (20, 20)
    space = make_space(*dims)
    lowering = para_lowering(space, model.kind)
    if args.corrupt:
        lowering = _corrupt(lowering)
    report = verify_relations(space, model, lowering=lowering)
    payload = report.to_dict()
    if args.out:
        write_json(_out_dir(args) / "relation_report.json", payload)
    if not args.quiet:
        sys.stdout.write(dumps_json(payload))
    if report.all_passed:
        return EXIT_OK
    print("identity check failed: " + ", ".join(report.failures), file=sys.stderr)
    return EXIT_VERIFY


def _run_prep(args) -> int:
    d = args.truncation if args.truncation is not None else args.n + 3
    if args.n >= d:
        raise InvalidArgumentError(f"Fock state {args.n} exceeds truncation of {d} levels")
    plan = plan_fock_prep(args.mode, args.n, args.rabi, truncation=d)
    # three levels in the idle mode keep its top-level leakage monitor meaningful
    space = make_space(d, 3) if args.mode == "x" else make_space(3, d)
    payload = plan.to_dict()
    payload["fidelity"] = prep_fidelity(space, plan)
    payload["truncation"] = [space.d_x, space.d_y]
    path = write_json(_out_dir(args) / "prep_plan.json", payload)
    _say(args, f"{len(plan.steps)} pulses, fidelity {payload['fidelity']:.12f}; wrote {path}")
    return EXIT_OK


def _run_fit(args) -> int:
    scan = read_scan_csv(args.scan, mode=args.mode)
    if args.n_max < 0:
        raise InvalidArgumentError("--n-max must be >= 0")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fit = fit_populations(scan, args.rabi, args.gamma, args.n_max, polarity=args.polarity)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    payload = fit.to_dict()
    payload.update(polarity=args.polarity, mode=args.mode, scan=str(args.scan))
    path = write_json(_out_dir(args) / "population_fit.json", payload)
    _say(args, "P_n = " + ", ".join(f"{p:.4f}" for p in fit.populations) + f"; wrote {path}")
    return EXIT_OK


def _run_plot(args) -> int:
    tables = [read_csv_table(p) for p in args.csv]
    x_col = "t_s"
    for path, (header, cols) in zip(args.csv, tables):
        for c in [x_col, *args.columns]:
            if c not in cols:
                raise InvalidArgumentError(f"{path} has no column {c!r} (available: {', '.join(header)})")
    band = None
    series = []
    if args.style == "band":
        if len(tables) != 2 or len(args.columns) != 1:
            raise InvalidArgumentError("band style needs exactly two CSV files and one column")
        (_, a), (_, b) = tables
        if a[x_col].shape != b[x_col].shape or not np.array_equal(a[x_col], b[x_col]):
            raise InvalidArgumentError("band inputs must share the same time grid")
        col = args.columns[0]
        band = (a[x_col], a[col], b[col])
    else:
        for path, (_, cols) in zip(args.csv, tables):
            for c in args.columns:
                label = PLOT_LABELS.get(c, c) if len(tables) == 1 else f"{Path(path).stem}: {c}"
                series.append(Series(label, cols[x_col], cols[c]))
    y_range = (0.0, 1.0) if args.columns == ["P_up"] else None
    svg = line_chart(series, title=args.title or "", x_label="t (s)",
                     y_label=", ".join(PLOT_LABELS.get(c, c) for c in args.columns),
                     band=band, y_range=y_range)
    target = Path(args.output) if args.output else _out_dir(args) / "plot.svg"
    write_atomic(target, svg)
    _say(args, f"wrote {target}")
    return EXIT_OK


def _positive(v: str) -> float:
    x = float(v)
    if not x > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return x


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="run configuration (JSON)")
    common.add_argument("--out", metavar="DIR", help="output directory (default: current)")
    common.add_argument("--seed", type=int, help="override the sampling seed")
    common.add_argument("--strict", action="store_true", help="treat truncation leakage as an error")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = argparse.ArgumentParser(prog="paraion", parents=[common],
                                     description="Trapped-ion para-particle oscillator simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    # subcommand copies of the global flags must not clobber values given before the subcommand
    sub_common = argparse.ArgumentParser(add_help=False)
    for action in common._actions:
        kw = dict(help=action.help, default=argparse.SUPPRESS)
        if isinstance(action, argparse._StoreTrueAction):
            sub_common.add_argument(*action.option_strings, action="store_true", **kw)
        else:
            sub_common.add_argument(*action.option_strings, type=action.type,
                                    metavar=action.metavar, **kw)

    p = sub.add_parser("simulate", parents=[sub_common], help="run a configured simulation")
    p.set_defaults(func=_run_simulate)

    p = sub.add_parser("verify", parents=[sub_common], help="check the para-algebra identities")
    p.add_argument("--kind", help="pF or pB")
    p.add_argument("--order", type=int, help="even order p")
    p.add_argument("--branch", default="spin_down", choices=("spin_down", "spin_up"))
    p.add_argument("--truncation", type=int, nargs=2, metavar=("D_X", "D_Y"))
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=_run_verify)

    p = sub.add_parser("prep", parents=[sub_common], help="plan and simulate Fock-state preparation")
    p.add_argument("--mode", choices=("x", "y"), default="x")
    p.add_argument("--n", type=int, required=True, help="target Fock number")
    p.add_argument("--rabi", type=_positive, default=1.0, help="base sideband Rabi frequency, rad/s")
    p.add_argument("--truncation", type=int, help="Fock levels in the target mode (default n+3)")
    p.set_defaults(func=_run_prep)

    p = sub.add_parser("fit", parents=[sub_common], help="fit Fock populations to a readout scan")
    p.add_argument("scan", help="CSV with columns t_s, P_up, shots")
    p.add_argument("--rabi", type=_positive, required=True, help="base sideband Rabi frequency, rad/s")
    p.add_argument("--gamma", type=float, default=0.0, help="base decay rate, 1/s")
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--polarity", choices=POLARITIES, default="as_printed")
    p.add_argument("--mode", choices=("x", "y"), default="x")
    p.set_defaults(func=_run_fit)

    p = sub.add_parser("plot", parents=[sub_common], help="render CSV columns to SVG")
    p.add_argument("csv", nargs="+", help="trajectory or scan CSV files")
    p.add_argument("--columns", nargs="+", default=["P_up"])
    p.add_argument("--style", choices=("lines", "band"), default="lines")
    p.add_argument("--title")
    p.add_argument("--output", help="SVG path (default: DIR/plot.svg)")
    p.set_defaults(func=_run_plot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except InvalidArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        where = "" if exc.time_reached is None else f" (reached t = {exc.time_reached:.6g} s)"
        print(f"numerical error: {exc}{where}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
