"""Command-line entry point (``mpcal``).

Exit codes: 0 success, 1 usage or configuration error, 2 solver or
optimizer failure, 3 file I/O error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import app, dataio, verify
from .config import ConfigError, RunConfig, builtin_names
from .forward import SolveError, run_forward
from .optimize import ga_initialize

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3

DEFAULT_CONFIG = {"plane": "plane_stress", "uniaxial": "uniaxial_surrogate", "3d": "three_d"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p, data=True):
    p.add_argument("--config", help=f"JSON config file or built-in name ({', '.join(builtin_names())})")
    p.add_argument("--variant", choices=["3d", "plane", "uniaxial"], help="built-in config to use when --config is absent")
    p.add_argument("--out", help="output directory (or file for 'generate')")
    p.add_argument("--seed", type=int, help="RNG seed (noise, GA, random directions)")
    p.add_argument("--noise", type=float, help="noise standard deviation for synthetic data")
    if data:
        p.add_argument("--data", help="CSV data file; synthetic data are generated when omitted")
        p.add_argument("--truncate-strain", type=float, help="drop data from the first row with |eps_11| above this value")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mpcal", description="Material point elastoplastic calibration toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="forward solve and write the stress-strain curve")
    _add_common(p, data=False)
    p.add_argument("--truth", action="store_true", help="use the config's truth parameters instead of its initial values")

    p = sub.add_parser("generate", help="write a synthetic data file")
    _add_common(p, data=False)

    p = sub.add_parser("calibrate", help="fit the active parameters")
    _add_common(p)
    p.add_argument("--optimizer", choices=["newton", "lbfgs"])
    p.add_argument("--ga", action="store_true", help="start from a genetic-algorithm initial guess")
    p.add_argument("--seeds", type=int, metavar="K", help="ensemble of K synthetic-data calibrations (seeds seed..seed+K-1)")

    for name, what in (("check-grad", "finite-difference gradient sweep"),
                       ("check-hess", "finite-difference Hessian sweep"),
                       ("check-complex", "complex-step gradient and Hessian sweeps")):
        p = sub.add_parser(name, help=what)
        _add_common(p)
        p.add_argument("--space", choices=["p", "eta"], help="perturb raw or log-scaled parameters")

    p = sub.add_parser("ga-init", help="genetic-algorithm initial guess")
    _add_common(p)

    p = sub.add_parser("report", help="curve and misfit at the config's parameter values")
    _add_common(p)
    return parser


# ---------------------------------------------------------------------------


def _load_config(args) -> RunConfig:
    name = args.config
    if name is None:
        name = DEFAULT_CONFIG[args.variant or "plane"]
    path = Path(name)
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        cfg = RunConfig.load(path)
    else:
        cfg = RunConfig.builtin(name)
    if args.variant is not None and args.config is not None and cfg.variant.cli_name != args.variant:
        raise UsageError(f"--variant {args.variant} conflicts with the config's variant {cfg.variant.cli_name}")
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.noise is not None:
        if args.noise < 0:
            raise UsageError("--noise must be >= 0")
        changes["noise"] = args.noise
    if getattr(args, "truncate_strain", None) is not None:
        changes["truncate_strain"] = args.truncate_strain
    if getattr(args, "optimizer", None) is not None:
        changes["optimizer"] = args.optimizer
    if getattr(args, "ga", False):
        changes["ga"] = dict(cfg.ga, enabled=True)
    if changes:
        cfg = replace(cfg, **changes)
        cfg.validate()
    return cfg


def _out_dir(args, default="mpcal_out") -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _problem(cfg, args):
    schedule, obs = app.load_or_generate(cfg, getattr(args, "data", None))
    return app.build_problem(cfg, schedule, obs)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    params = cfg.truth_set() if args.truth else cfg.param_set()
    if params is None:
        raise UsageError("--truth given but the config has no truth parameters")
    history = run_forward(cfg.load_schedule(), params, cfg.solver_opts())
    path = _out_dir(args) / "curve.csv"
    dataio.write_curve(path, history)
    print(f"{history.n_steps} steps, {int(history.plastic.sum())} plastic, {history.n_solves} local solves -> {path}")
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    schedule, targets, _ = app.generate_synthetic(cfg)
    out = Path(args.out or "data.csv")
    if out.suffix.lower() != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "data.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    dataio.write_data(out, schedule, targets)
    print(f"wrote {schedule.n_steps} rows (noise {cfg.noise:g}, seed {cfg.seed}) -> {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    if args.seeds:
        if args.data:
            raise UsageError("--seeds runs on synthetic data; drop --data")
        base = 0 if cfg.seed is None else int(cfg.seed)
        rows = app.run_ensemble(cfg, range(base, base + args.seeds))
        path = _out_dir(args) / "ensemble.csv"
        names = cfg.param_set().active_names
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed"] + names + [f"relerr_{n}" for n in names] + ["iterations", "converged", "solves"])
            for seed, p, rel, iters, conv, solves in rows:
                rel = [np.nan] * len(p) if rel is None else rel
                w.writerow([seed] + [repr(float(v)) for v in p] + [f"{v:.6e}" for v in rel] + [iters, conv, solves])
        rel = np.array([r[2] for r in rows if r[2] is not None])
        if rel.size:
            med = np.median(rel, axis=0) * 100
            print("median relative error [%]: " + ", ".join(f"{n}={v:.3f}" for n, v in zip(names, med)))
        print(f"{len(rows)} calibrations -> {path}")
        return EXIT_OK if all(r[4] for r in rows) else EXIT_SOLVER
    result = app.run_calibration(cfg, data=args.data)
    paths = app.emit_report(result, _out_dir(args))
    print(paths["summary"].read_text(), end="")
    return EXIT_OK if result.trace.converged else EXIT_SOLVER


def _check_point(cfg, args):
    problem = _problem(cfg, args)
    p = problem.params.active_values
    return problem, p


def _report_check(report, path):
    report.to_csv(path)
    verdict = "PASS" if report.passed else "FAIL"
    print(f"{report.kind}: exact {report.exact:.12e}, best h {report.best_h:.0e}, "
          f"min rel error {report.min_rel_error:.3e}, V-shaped {report.v_shaped()} [{verdict}] -> {path}")


def _view(problem, p, space):
    return (problem.in_eta(), problem.to_eta(p)) if space == "eta" else (problem, p)


def cmd_check(args) -> int:
    cfg = _load_config(args)
    problem, p = _check_point(cfg, args)
    out = _out_dir(args)
    seed = cfg.seed if args.seed is None else args.seed
    d = verify.random_direction(problem.n, seed)
    ok = True
    if args.command == "check-grad":
        target, x = _view(problem, p, args.space or "p")
        rep = verify.fd_check_gradient(target, x, d)
        _report_check(rep, out / "check_grad.csv")
        ok = rep.passed
    elif args.command == "check-hess":
        target, x = _view(problem, p, args.space or "eta")
        rep = verify.fd_check_hessian(target, x, d)
        _report_check(rep, out / "check_hess.csv")
        h, err = verify.hessian_columns_check(problem, p)
        best = err.min(axis=0)
        print("Hessian columns vs differenced gradient, best rel error: " + ", ".join(
            f"{n}={e:.2e}" for n, e in zip(problem.names, best)))
        ok = rep.passed and bool(np.all(best <= 1e-5))
    else:
        target, x = _view(problem, p, args.space or "p")
        rep = verify.complex_step_gradient(target, x, d)
        _report_check(rep, out / "check_complex_grad.csv")
        target, x = _view(problem, p, args.space or "eta")
        rep2 = verify.complex_step_hessian(target, x, d)
        _report_check(rep2, out / "check_complex_hess.csv")
        ok = rep.passed and rep2.passed
    return EXIT_OK if ok else EXIT_SOLVER


def cmd_ga_init(args) -> int:
    cfg = _load_config(args)
    if cfg.seed is None:
        raise UsageError("ga-init needs --seed or a config seed")
    problem = _problem(cfg, args)
    settings = cfg.opt_settings()
    best, history = ga_initialize(problem, settings, cfg.seed)
    if best is None:
        print("every chromosome failed to solve", file=sys.stderr)
        return EXIT_SOLVER
    for gen, c in enumerate(history, 1):
        print(f"generation {gen}: best J = {c:.6e}")
    print("initial guess: " + ", ".join(f"{n}={v:.6g}" for n, v in zip(problem.names, best)))
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _load_config(args)
    problem = _problem(cfg, args)
    p = problem.params.active_values
    history = problem.history(p)
    out = _out_dir(args)
    dataio.write_curve(out / "curve.csv", history, problem.obs)
    J, g = problem.gradient(p)
    text = (
        "parameters: " + ", ".join(f"{n}={v:.6g}" for n, v in zip(problem.names, p)) + "\n"
        f"J = {J:.10e} (log10 {np.log10(J) if J > 0 else -np.inf:.8f})\n"
        f"|dJ/dp|_inf = {np.max(np.abs(g)):.6e}\n"
    )
    (out / "report.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "generate": cmd_generate,
    "calibrate": cmd_calibrate,
    "check-grad": cmd_check,
    "check-hess": cmd_check,
    "check-complex": cmd_check,
    "ga-init": cmd_ga_init,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"mpcal: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except dataio.DataFileError as exc:
        print(f"mpcal: data error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"mpcal: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SolveError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"mpcal: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
