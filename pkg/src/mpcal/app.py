"""End-to-end workflows behind the command line: data generation, calibration, reports."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import dataio
from .config import RunConfig
from .counters import SOLVES
from .forward import ForwardHistory, LoadSchedule, SolveError, run_forward
from .optimize import OptTrace, count_solves, ga_initialize, newton_solve, quasi_newton_solve
from .sensitivity import CalibrationProblem, Observation

SOLVERS = {"newton": newton_solve, "lbfgs": quasi_newton_solve}


def noisy_targets(history: ForwardHistory, mask, noise: float, seed) -> np.ndarray:
    """Model stress plus i.i.d. Gaussian noise on the masked components.

    The standard-normal draws depend on ``seed`` only, so one seed at two
    noise levels gives proportional perturbations.
    """
    targets = np.array(history.stress.real)
    if noise > 0:
        draws = np.random.default_rng(seed).standard_normal(targets.shape)
        targets += noise * draws * np.asarray(mask, dtype=bool)
    return targets


def generate_synthetic(config: RunConfig, noise: float | None = None, seed=None):
    """Forward solve at the configured truth and optionally perturb the stresses.

    Returns
    -------
    schedule : LoadSchedule
    targets : (N_L, 6) array
    history : ForwardHistory
        Noiseless model response.
    """
    if config.truth is None:
        raise ValueError("generating synthetic data needs 'truth' parameters in the config")
    noise = config.noise if noise is None else noise
    seed = config.seed if seed is None else seed
    schedule = config.load_schedule()
    history = run_forward(schedule, config.truth_set(), config.solver_opts())
    return schedule, noisy_targets(history, config.mask_array(), float(noise), seed), history


def load_or_generate(config: RunConfig, data=None):
    """Observations from ``data`` (or the config's data file) or else synthetic ones."""
    path = data if data is not None else config.data_path()
    if path is not None:
        return dataio.load_observations(path, config.variant, config.truncate_strain, config.norm, config.mask_array())
    schedule, targets, _ = generate_synthetic(config)
    return schedule, Observation(targets, config.mask_array(), config.norm)


@dataclass
class CalibrationResult:
    names: list
    params: np.ndarray
    initial: np.ndarray
    truth: np.ndarray | None
    trace: OptTrace
    history: ForwardHistory
    obs: Observation
    solves: int
    ga_solves: int = 0

    @property
    def rel_errors(self) -> np.ndarray | None:
        if self.truth is None:
            return None
        return np.abs(self.params - self.truth) / np.abs(self.truth)


def build_problem(config: RunConfig, schedule: LoadSchedule, obs: Observation) -> CalibrationProblem:
    return CalibrationProblem(schedule, config.param_set(), obs, config.solver_opts())


def run_calibration(config: RunConfig, data=None, optimizer: str | None = None) -> CalibrationResult:
    schedule, obs = load_or_generate(config, data)
    problem = build_problem(config, schedule, obs)
    settings = config.opt_settings()
    p0 = problem.params.active_values
    ga_solves = 0
    if config.ga.get("enabled"):
        start = SOLVES.count
        p0, _ = ga_initialize(problem, settings, config.seed)
        if p0 is None:
            raise SolveError("every GA chromosome failed to solve")
        ga_solves = SOLVES.count - start
        p0 = np.clip(p0, problem.lower, problem.upper)
    solver = SOLVERS[optimizer or config.optimizer]
    eta, trace = solver(problem, problem.to_eta(p0), settings)
    p = problem.to_p(eta)
    truth = None
    if config.truth is not None:
        truth = config.truth_set().active_values
    return CalibrationResult(problem.names, p, np.asarray(p0, dtype=float), truth, trace,
                             problem.history(p), obs, count_solves(trace), ga_solves)


def _ensemble_member(args):
    config, seed, optimizer = args
    res = run_calibration(replace(config, seed=seed), optimizer=optimizer)
    return seed, res.params, res.rel_errors, res.trace.iterations, res.trace.converged, res.solves


def run_ensemble(config: RunConfig, seeds, optimizer: str | None = None, workers: int | None = None):
    """Independent calibrations on freshly generated data, one per seed, run in parallel processes."""
    jobs = [(config, int(s), optimizer) for s in seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_ensemble_member, jobs))


def emit_report(result: CalibrationResult, out_dir) -> dict:
    """Write convergence, curve and summary files; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "convergence": out / "convergence.csv",
        "curve": out / "curve.csv",
        "summary": out / "summary.txt",
    }
    dataio.write_convergence(paths["convergence"], result.trace)
    dataio.write_curve(paths["curve"], result.history, result.obs)
    paths["summary"].write_text(dataio.summary_text(result))
    return paths
