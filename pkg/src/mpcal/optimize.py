"""Bound-constrained minimisers working on log-scaled parameters.

Both optimizers iterate on ``eta = ln(p / p_ref)`` but stop on the infinity
norm of the gradient with respect to the raw parameters ``p``.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .counters import SOLVES
from .forward import SolveError


@dataclass
class GASettings:
    population: int = 25
    parents: int = 8
    children: int = 8
    fresh: int = 9
    generations: int = 4
    mutation_rate: float = 0.1
    lower: np.ndarray | None = None  # sampling box in p-space; defaults to the problem bounds
    upper: np.ndarray | None = None

    def __post_init__(self):
        if self.parents + self.children + self.fresh != self.population:
            raise ValueError("parents + children + fresh must equal the population size")
        if self.parents < 2 or self.generations < 1:
            raise ValueError("the GA needs at least two parents and one generation")


@dataclass
class OptSettings:
    tol_grad_inf: float = 1e-4
    max_iterations: int = 100
    memory: int = 10
    reg_floor: float = 1e-8
    max_halvings: int = 30
    armijo: float = 1e-4
    ga: GASettings = field(default_factory=GASettings)

    def __post_init__(self):
        if not self.tol_grad_inf > 0:
            raise ValueError("tol_grad_inf must be positive")
        if self.memory < 1 or self.max_iterations < 0:
            raise ValueError("memory must be >= 1 and max_iterations >= 0")


@dataclass
class OptTrace:
    """Per-iteration record; row 0 is the initial guess."""

    method: str
    names: list
    objective: list = field(default_factory=list)
    grad_inf: list = field(default_factory=list)  # p-space
    grad_inf_eta: list = field(default_factory=list)
    cond: list = field(default_factory=list)  # eta-space Hessian (NaN for quasi-Newton)
    solves: list = field(default_factory=list)  # cumulative local linear solves
    params: list = field(default_factory=list)
    converged: bool = False
    message: str = ""
    wall_time: float = 0.0

    def record(self, J, g_p, g_eta, cond, solves, p):
        self.objective.append(float(J))
        self.grad_inf.append(float(np.max(np.abs(g_p))))
        self.grad_inf_eta.append(float(np.max(np.abs(g_eta))))
        self.cond.append(float(cond))
        self.solves.append(int(solves))
        self.params.append(np.array(p, dtype=float))

    @property
    def iterations(self) -> int:
        return len(self.objective) - 1

    @property
    def log10_objective(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log10(np.asarray(self.objective))

    @property
    def final_params(self) -> np.ndarray:
        return self.params[-1]

    def rows(self):
        """Table rows ``(iteration, log10 J, |g|_inf, cond, solves)``."""
        logJ = self.log10_objective
        return [
            (k, logJ[k], self.grad_inf[k], self.cond[k], self.solves[k])
            for k in range(len(self.objective))
        ]


def count_solves(trace: OptTrace) -> int:
    """Total local linear solves spent by the run that produced ``trace``."""
    return trace.solves[-1] if trace.solves else 0


def condition_number(H) -> float:
    w = np.abs(np.linalg.eigvalsh(H))
    return float(w.max() / w.min()) if w.min() > 0 else np.inf


def newton_direction(H, g, floor=1e-8):
    """Newton step ``-H^{-1} g`` with a safeguard for indefinite or singular ``H``.

    The plain step is kept whenever ``H`` is numerically non-singular and the
    step is a descent direction, even if ``H`` is indefinite.  Otherwise the
    spectrum is shifted so its smallest eigenvalue equals ``floor * max|eig|``.
    Returns ``(step, shifted)``.
    """
    w, V = np.linalg.eigh(H)
    scale = np.max(np.abs(w))
    if not np.isfinite(scale) or scale == 0.0:
        raise np.linalg.LinAlgError("Hessian is zero or not finite")
    lo = floor * scale
    gV = V.T @ g
    if np.min(np.abs(w)) >= lo:
        step = -V @ (gV / w)
        if g @ step < 0:
            return step, False
    if w.min() < lo:
        w = w + (lo - w.min())
    return -V @ (gV / w), True


def _accepts(J_new, J, slack):
    return np.isfinite(J_new) and J_new <= J + slack


def _safe_objective(problem, eta):
    try:
        return problem.objective_eta(eta)
    except (SolveError, ArithmeticError):
        return np.inf


def newton_solve(problem, x0, settings: OptSettings = OptSettings()):
    """Newton iteration with backtracking, projected onto the bounds.

    Parameters
    ----------
    problem : CalibrationProblem
    x0 : array
        Starting point in eta-space.

    Returns
    -------
    eta : array
    trace : OptTrace
    """
    start, t0 = SOLVES.count, time.perf_counter()
    lo, hi = problem.eta_bounds()
    eta = np.clip(np.asarray(x0, dtype=float), lo, hi)
    trace = OptTrace("newton", problem.names)
    while True:
        J, g, H, g_p, _ = problem.hessian_eta(eta)
        trace.record(J, g_p, g, condition_number(H), SOLVES.count - start, problem.to_p(eta))
        if trace.grad_inf[-1] < settings.tol_grad_inf:
            trace.converged, trace.message = True, "gradient tolerance reached"
            break
        if trace.iterations >= settings.max_iterations:
            trace.message = "maximum iterations reached"
            break
        step, _ = newton_direction(H, g, settings.reg_floor)
        slack = 10 * np.finfo(float).eps * abs(J)
        t = 1.0
        for _ in range(settings.max_halvings + 1):
            trial = np.clip(eta + t * step, lo, hi)
            J_new = _safe_objective(problem, trial)
            if _accepts(J_new, J, slack):
                break
            t *= 0.5
        else:
            trace.message = "line search failed to decrease the objective"
            break
        if np.array_equal(trial, eta):
            trace.message = "step vanished at the bounds"
            break
        eta = trial
    trace.wall_time = time.perf_counter() - t0
    return eta, trace


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        alphas.append(a)
        q -= a * y
    s, y, _ = pairs[-1]
    q *= (s @ y) / (y @ y)
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def quasi_newton_solve(problem, x0, settings: OptSettings = OptSettings()):
    """Limited-memory BFGS with gradient projection onto the eta-space box.

    Variables sitting on a bound with the search direction pointing outward
    are frozen for that iteration; the step length comes from Armijo
    backtracking along the projected path.
    """
    start, t0 = SOLVES.count, time.perf_counter()
    lo, hi = problem.eta_bounds()
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    trace = OptTrace("lbfgs", problem.names)
    pairs: deque = deque(maxlen=settings.memory)
    J, g, g_p = problem.gradient_eta(x)
    while True:
        trace.record(J, g_p, g, np.nan, SOLVES.count - start, problem.to_p(x))
        if trace.grad_inf[-1] < settings.tol_grad_inf:
            trace.converged, trace.message = True, "gradient tolerance reached"
            break
        if trace.iterations >= settings.max_iterations:
            trace.message = "maximum iterations reached"
            break
        d = -_two_loop(g, pairs) if pairs else -g / np.linalg.norm(g)
        blocked = ((x <= lo) & (d < 0)) | ((x >= hi) & (d > 0))
        d[blocked] = 0.0
        if not g @ d < 0:
            pairs.clear()
            d = -g / np.linalg.norm(g)
            d[((x <= lo) & (d < 0)) | ((x >= hi) & (d > 0))] = 0.0
        t = 1.0
        for _ in range(settings.max_halvings + 1):
            trial = np.clip(x + t * d, lo, hi)
            J_new = _safe_objective(problem, trial)
            if np.isfinite(J_new) and J_new <= J + settings.armijo * (g @ (trial - x)):
                break
            t *= 0.5
        else:
            trace.message = "line search failed"
            break
        J_new, g_new, g_p = problem.gradient_eta(trial)
        s, y = trial - x, g_new - g
        sy = s @ y
        if sy > np.finfo(float).eps * (y @ y):
            pairs.append((s, y, 1.0 / sy))
        x, J, g = trial, J_new, g_new
    trace.wall_time = time.perf_counter() - t0
    return x, trace


def ga_initialize(problem, settings: OptSettings = OptSettings(), rng_seed=None):
    """Genetic search for a starting point.

    Every generation evaluates a full population, keeps the cheapest
    parents, breeds children by per-gene blend crossover with random
    mutation, and tops up with fresh random chromosomes.  Chromosomes whose
    forward solve fails get infinite cost.

    Returns
    -------
    best : array
        Best chromosome found (raw parameter values).
    history : list of float
        Best cost after each generation.
    """
    ga = settings.ga
    rng = np.random.default_rng(rng_seed)
    lo = problem.lower if ga.lower is None else np.asarray(ga.lower, dtype=float)
    hi = problem.upper if ga.upper is None else np.asarray(ga.upper, dtype=float)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo < hi)):
        raise ValueError("GA sampling box must be finite with lower < upper")

    def cost(p):
        try:
            J = problem.objective(p)
        except (SolveError, ArithmeticError):
            return np.inf
        return float(J) if np.isfinite(J) else np.inf

    pop = rng.uniform(lo, hi, size=(ga.population, len(lo)))
    best, best_cost, history = None, np.inf, []
    for gen in range(ga.generations):
        costs = np.array([cost(p) for p in pop])
        order = np.argsort(costs, kind="stable")
        if costs[order[0]] < best_cost:
            best, best_cost = pop[order[0]].copy(), costs[order[0]]
        history.append(best_cost)
        if gen == ga.generations - 1:
            break
        parents = pop[order[: ga.parents]]
        pairs = np.array([rng.choice(ga.parents, size=2, replace=False) for _ in range(ga.children)])
        beta = rng.uniform(size=(ga.children, len(lo)))
        children = beta * parents[pairs[:, 0]] + (1 - beta) * parents[pairs[:, 1]]
        mutate = rng.uniform(size=children.shape) < ga.mutation_rate
        children[mutate] = rng.uniform(np.broadcast_to(lo, children.shape), np.broadcast_to(hi, children.shape))[mutate]
        fresh = rng.uniform(lo, hi, size=(ga.fresh, len(lo)))
        pop = np.vstack([parents, children, fresh])
    return best, history
