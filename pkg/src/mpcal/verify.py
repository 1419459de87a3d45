"""Step-size sweeps comparing exact derivatives with difference formulas.

Every check evaluates the exact directional derivative once and compares it
with a finite-difference or complex-step estimate for each step size.
Probes are ``x + h d`` in whatever variables ``problem`` is written in: pass a
:class:`~mpcal.sensitivity.CalibrationProblem` for raw parameters or its
``in_eta()`` view for log-scaled ones.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

DEFAULT_STEPS = 10.0 ** -np.arange(2, 11)

_W1 = np.exp(1j * np.pi / 3)  # i^(2/3)
_W2 = np.exp(4j * np.pi / 3)  # i^(8/3)


@dataclass
class CheckReport:
    """Error of an approximate directional derivative over a step-size sweep."""

    kind: str
    direction: np.ndarray
    h: np.ndarray
    exact: float
    approx: np.ndarray
    threshold: float  # pass level for the best relative error

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.approx = np.asarray(self.approx, dtype=float)
        if self.h.size and np.any(np.diff(self.h) >= 0):
            raise ValueError("step sizes must be strictly decreasing")

    @property
    def error(self) -> np.ndarray:
        return np.abs(self.approx - self.exact)

    @property
    def rel_error(self) -> np.ndarray:
        return self.error / max(abs(self.exact), np.finfo(float).tiny)

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.error))

    @property
    def best_h(self) -> float:
        return float(self.h[self.best_index])

    @property
    def min_error(self) -> float:
        return float(self.error[self.best_index])

    @property
    def min_rel_error(self) -> float:
        return float(self.rel_error[self.best_index])

    @property
    def passed(self) -> bool:
        return self.min_rel_error <= self.threshold

    def v_shaped(self, allowed_violations: int = 1) -> bool:
        """Errors fall towards the best step and grow after it.

        ``allowed_violations`` adjacent pairs may break monotonicity on each
        side (roundoff noise).  The minimum must be interior to the sweep.
        """
        e = self.error
        k = self.best_index
        if k == 0 or k == len(e) - 1:
            return False
        down = int(np.sum(np.diff(e[: k + 1]) > 0))
        up = int(np.sum(np.diff(e[k:]) < 0))
        return down <= allowed_violations and up <= allowed_violations

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["h", "abs_error", "rel_error", "approx", "exact"])
            for h, e, r, a in zip(self.h, self.error, self.rel_error, self.approx):
                w.writerow([f"{h:.6e}", f"{e:.17e}", f"{r:.17e}", f"{a:.17e}", f"{self.exact:.17e}"])


def random_direction(n: int, rng=None) -> np.ndarray:
    """Direction with independent ``U[-1, 1]`` components."""
    return np.random.default_rng(rng).uniform(-1.0, 1.0, size=n)


def _prepare(problem, p, d, h_list, rng):
    p = np.asarray(p, dtype=float)
    d = random_direction(p.size, rng) if d is None else np.asarray(d, dtype=float)
    if d.shape != p.shape:
        raise ValueError("direction and parameter vector differ in size")
    if not np.any(d):
        raise ValueError("direction must be nonzero")
    h = np.asarray(DEFAULT_STEPS if h_list is None else h_list, dtype=float)
    return p, d, h


def fd_check_gradient(problem, p, d=None, h_list=None, rng=None, threshold=1e-5) -> CheckReport:
    """Central differences of the objective against the adjoint gradient."""
    p, d, h = _prepare(problem, p, d, h_list, rng)
    exact = float(problem.gradient(p)[1] @ d)
    approx = [(problem.objective(p + hk * d) - problem.objective(p - hk * d)) / (2 * hk) for hk in h]
    return CheckReport("fd_gradient", d, h, exact, approx, threshold)


def fd_check_hessian(problem, p, d=None, h_list=None, rng=None, threshold=1e-3) -> CheckReport:
    """Second central differences of the objective against ``d^T H d``."""
    p, d, h = _prepare(problem, p, d, h_list, rng)
    exact = float(d @ problem.hessian(p).hessian @ d)
    J0 = problem.objective(p)
    approx = [(problem.objective(p + hk * d) - 2 * J0 + problem.objective(p - hk * d)) / hk**2 for hk in h]
    return CheckReport("fd_hessian", d, h, exact, approx, threshold)


def complex_step_gradient(problem, p, d=None, h_list=None, rng=None, threshold=1e-6) -> CheckReport:
    """``Im J(p + i h d) / h`` against the adjoint gradient."""
    p, d, h = _prepare(problem, p, d, h_list, rng)
    exact = float(problem.gradient(p)[1] @ d)
    approx = [np.imag(problem.objective(p + 1j * hk * d)) / hk for hk in h]
    return CheckReport("complex_gradient", d, h, exact, approx, threshold)


def complex_step_hessian(problem, p, d=None, h_list=None, rng=None, threshold=1e-4) -> CheckReport:
    """Two complex probes on the rays ``exp(i pi/3)`` and ``exp(4 i pi/3)``.

    The first- and third-order terms cancel between the probes, leaving
    ``d^T H d`` from the imaginary parts.
    """
    p, d, h = _prepare(problem, p, d, h_list, rng)
    exact = float(d @ problem.hessian(p).hessian @ d)
    approx = [
        2.0 * np.imag(problem.objective(p + _W1 * hk * d) + problem.objective(p + _W2 * hk * d)) / (np.sqrt(3.0) * hk**2)
        for hk in h
    ]
    return CheckReport("complex_hessian", d, h, exact, approx, threshold)


def hessian_columns_check(problem, p, h_list=None):
    """Central differences of the adjoint gradient, column by column.

    Column ``i`` is perturbed by ``h * |p_i|`` (``h`` when ``p_i = 0``).  Returns ``(h, rel_errors)``
    where ``rel_errors[k, i]`` is the max-norm error of column ``i`` at step
    ``h[k]`` relative to the max-norm of the exact column.
    """
    p = np.asarray(p, dtype=float)
    h = np.asarray(DEFAULT_STEPS if h_list is None else h_list, dtype=float)
    H = problem.hessian(p).hessian
    scale = np.maximum(np.max(np.abs(H), axis=0), np.finfo(float).tiny)
    err = np.zeros((h.size, p.size))
    for k, hk in enumerate(h):
        for i in range(p.size):
            dp = np.zeros_like(p)
            dp[i] = hk * (abs(p[i]) if p[i] != 0 else 1.0)
            col = (problem.gradient(p + dp)[1] - problem.gradient(p - dp)[1]) / (2 * dp[i])
            err[k, i] = np.max(np.abs(col - H[:, i])) / scale[i]
    return h, err


def gradient_methods_agree(problem, p) -> float:
    """Relative max-norm gap between direct and adjoint gradients."""
    _, ga = problem.gradient(p, "adjoint")
    _, gd = problem.gradient(p, "direct")
    return float(np.max(np.abs(gd - ga)) / max(1.0, np.max(np.abs(gd))))
