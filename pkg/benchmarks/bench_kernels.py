"""Compiled vs pure-Python kernel timings.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times a 100-step plane-stress forward solve, one sweep of residual
derivative evaluations over that history, and one full Hessian evaluation
for every available backend, and prints the speed-up of the compiled
kernels.
"""

import argparse
import time

from mpcal import kernels
from mpcal.app import generate_synthetic
from mpcal.config import RunConfig
from mpcal.diff import StepContext, residual_derivatives
from mpcal.forward import run_forward
from mpcal.sensitivity import CalibrationProblem, Observation


def _best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run(repeat=5):
    cfg = RunConfig.builtin("plane_stress")
    schedule, targets, _ = generate_synthetic(cfg)
    params = cfg.param_set()
    obs = Observation(targets, cfg.mask_array(), cfg.norm)
    results = {}
    for name in kernels.available():
        kernels.use(name)
        history = run_forward(schedule, params)
        ctxs = [StepContext.from_history(history, n) for n in range(1, history.n_steps + 1)]
        problem = CalibrationProblem(schedule, params, obs)
        p = params.active_values
        results[name] = {
            "solve_history": _best_of(lambda: run_forward(schedule, params), repeat),
            "residual_derivs": _best_of(lambda: [residual_derivatives(c) for c in ctxs], repeat),
            "hessian": _best_of(lambda: problem.hessian(p), repeat),
        }
    kernels.use("cython" if "cython" in kernels.available() else "python")
    return results


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    results = run(args.repeat)
    names = list(results)
    print(f"{'kernel':<18}" + "".join(f"{n:>12}" for n in names) + ("     speed-up" if len(names) > 1 else ""))
    for key in results[names[0]]:
        row = [results[n][key] for n in names]
        line = f"{key:<18}" + "".join(f"{t * 1e3:>10.2f}ms" for t in row)
        if len(names) > 1:
            line += f"{row[0] / row[1]:>12.1f}x"
        print(line)
    if len(names) == 1:
        print("compiled kernels not built; only the pure-Python backend was timed")


if __name__ == "__main__":
    main()
