"""Strain-driven forward solve of the material point model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels, model
from .counters import SOLVES
from .kernels import _pure
from .model import LocalState, ModelVariant, ParamSet, SymTensor

_STATUS_TEXT = {
    kernels.STATUS_DEGENERATE: "degenerate deviator on the plastic branch",
    kernels.STATUS_MAXITER: "local Newton iteration did not converge",
    kernels.STATUS_SINGULAR: "singular local Jacobian",
}


class SolveError(RuntimeError):
    """Local solve failure; ``step`` is 1-based (0 when not step-specific)."""

    def __init__(self, message, step=0, status=None, residual=None):
        super().__init__(message if not step else f"step {step}: {message}")
        self.step = step
        self.status = status
        self.residual = residual


@dataclass(frozen=True)
class SolverOpts:
    tol: float = 1e-10
    max_iter: int = 50


@dataclass
class LoadSchedule:
    """Prescribed strains, one row of six components per load step.

    Components not prescribed by the variant are ignored by the model (they
    come from the local state) and are stored as zero.
    """

    variant: ModelVariant
    strains: np.ndarray

    def __post_init__(self):
        self.variant = ModelVariant.parse(self.variant)
        self.strains = np.array(self.strains, dtype=float).reshape(-1, 6)
        if self.strains.shape[0] < 1:
            raise ValueError("a load schedule needs at least one step")
        free = [c for c in range(6) if c not in self.variant.prescribed]
        self.strains[:, free] = 0.0

    @property
    def n_steps(self) -> int:
        return self.strains.shape[0]

    @classmethod
    def from_prescribed(cls, variant, values) -> LoadSchedule:
        """Build from an ``(N_L, k)`` array of the variant's prescribed components."""
        variant = ModelVariant.parse(variant)
        values = np.asarray(values, dtype=float).reshape(len(values), -1)
        idx = variant.prescribed
        if values.shape[1] != len(idx):
            raise ValueError(f"{variant.cli_name} schedules prescribe {len(idx)} components")
        strains = np.zeros((values.shape[0], 6))
        strains[:, idx] = values
        return cls(variant, strains)

    @classmethod
    def from_ramps(cls, variant, ramps) -> LoadSchedule:
        """Piecewise-linear schedule.

        ``ramps`` is a sequence of ``(target, steps)``; ``target`` maps
        component labels (``"11"``, ``"22"``...) to the strain reached at the
        end of the ramp.  Unlisted components hold their previous value.
        """
        variant = ModelVariant.parse(variant)
        current = np.zeros(6)
        rows = []
        for target, steps in ramps:
            steps = int(steps)
            if steps < 1:
                raise ValueError("ramp step counts must be >= 1")
            end = current.copy()
            for key, val in dict(target).items():
                end[model.COMPONENTS.index(str(key))] = float(val)
            for k in range(1, steps + 1):
                rows.append(current + (end - current) * (k / steps))
            current = end
        return cls(variant, np.array(rows))


@dataclass
class ForwardHistory:
    schedule: LoadSchedule
    params: ParamSet
    xi: np.ndarray  # (N_L + 1, M), row 0 is the initial state
    plastic: np.ndarray
    iterations: np.ndarray
    residual_norms: np.ndarray
    f_trial: np.ndarray
    stress: np.ndarray = field(init=False)

    def __post_init__(self):
        self.stress = history_stress(self.schedule.variant, self.xi[1:], self.schedule.strains, self.params)

    @property
    def variant(self) -> ModelVariant:
        return self.schedule.variant

    @property
    def n_steps(self) -> int:
        return self.schedule.n_steps

    @property
    def n_solves(self) -> int:
        return int(self.iterations.sum())

    def state(self, n: int) -> LocalState:
        plastic = bool(self.plastic[n - 1]) if n > 0 else False
        return LocalState(self.xi[n].copy(), plastic, n)

    def plastic_strain(self) -> np.ndarray:
        """``(N_L, 6)`` plastic strain tensors including the reconstructed ep33."""
        x = self.xi[1:]
        ep = np.zeros((x.shape[0], 6), dtype=x.dtype)
        ep[:, 0], ep[:, 1], ep[:, 2] = x[:, 0], x[:, 3], -(x[:, 0] + x[:, 3])
        ep[:, 3], ep[:, 4], ep[:, 5] = x[:, 1], x[:, 2], x[:, 4]
        return ep

    def total_strain(self) -> np.ndarray:
        return full_strains(self.variant, self.xi[1:], self.schedule.strains)


def full_strains(variant, xi, strains) -> np.ndarray:
    eps = np.array(strains, dtype=xi.dtype)
    if variant == ModelVariant.PLANE_STRESS:
        eps[:, 2] = xi[:, 6]
    elif variant == ModelVariant.UNIAXIAL:
        eps[:, 1] = xi[:, 6]
        eps[:, 2] = xi[:, 7]
    return eps


def history_stress(variant, xi, strains, params: ParamSet) -> np.ndarray:
    """Stress at every step from the converged states (vectorised elasticity)."""
    E, nu = params.values[0], params.values[1]
    lam, mu = model.lame(E, nu)
    eps = full_strains(variant, xi, strains)
    ep = np.zeros_like(eps)
    ep[:, 0], ep[:, 1], ep[:, 2] = xi[:, 0], xi[:, 3], -(xi[:, 0] + xi[:, 3])
    ep[:, 3], ep[:, 4], ep[:, 5] = xi[:, 1], xi[:, 2], xi[:, 4]
    ee = eps - ep
    tr = ee[:, 0] + ee[:, 1] + ee[:, 2]
    sig = 2.0 * mu * ee
    sig[:, :3] += (lam * tr)[:, None]
    return sig


# ---------------------------------------------------------------------------
# single step (scalar-generic path)
# ---------------------------------------------------------------------------


def _as_list(xi):
    return list(np.asarray(xi).tolist())


def elastic_trial(xi_prev: LocalState, eps_n, params: ParamSet, variant, opts: SolverOpts = SolverOpts()):
    """Elastic predictor: plastic variables frozen, off-axis strains from the sigma = 0 rows.

    Returns ``(trial_state, f_trial)``.
    """
    variant = ModelVariant.parse(variant)
    prm = _as_list(params.values)
    eps = [float(e) for e in eps_n]
    xp = _as_list(xi_prev.xi)
    status, x, iters, rn = _pure.newton_local(variant, xp, xp, eps, prm, False, opts.tol, opts.max_iter)
    if status != kernels.STATUS_OK:
        raise SolveError(_STATUS_TEXT[status], xi_prev.step + 1, status, rn)
    SOLVES.add(iters)
    f = _pure.trial_yield(variant, x, eps, prm)
    state = LocalState(np.array(x), False, xi_prev.step + 1)
    return state, f


def solve_step(xi_prev: LocalState, eps_n, params: ParamSet, variant, opts: SolverOpts = SolverOpts()) -> LocalState:
    """Advance one load step: elastic trial, then a plastic corrector if ``f_trial > 0``."""
    variant = ModelVariant.parse(variant)
    trial, f_trial = elastic_trial(xi_prev, eps_n, params, variant, opts)
    if not model.real(f_trial) > 0.0:
        return trial
    prm = _as_list(params.values)
    eps = [float(e) for e in eps_n]
    status, x, iters, rn = _pure.newton_local(
        variant, _as_list(trial.xi), _as_list(xi_prev.xi), eps, prm, True, opts.tol, opts.max_iter
    )
    SOLVES.add(iters)
    if status != kernels.STATUS_OK:
        raise SolveError(_STATUS_TEXT[status], trial.step, status, rn)
    return LocalState(np.array(x), True, trial.step)


# ---------------------------------------------------------------------------
# full history
# ---------------------------------------------------------------------------


def run_forward(schedule: LoadSchedule, params: ParamSet, opts: SolverOpts = SolverOpts(), backend=None) -> ForwardHistory:
    """Solve every load step from the unloaded initial state.

    Real parameters go through the active kernel backend; complex parameters
    (complex-step probes) through the scalar-generic Python path.
    """
    variant = schedule.variant
    if np.iscomplexobj(params.values):
        out = _pure.solve_history_generic(int(variant), schedule.strains, params.values, opts.tol, opts.max_iter)
    else:
        impl = kernels.impl if backend is None else kernels.get(backend)
        out = impl.solve_history(
            int(variant),
            np.ascontiguousarray(schedule.strains),
            np.ascontiguousarray(params.values, dtype=float),
            float(opts.tol),
            int(opts.max_iter),
        )
    xi, plastic, iters, res, ftrial, status, failed = out
    SOLVES.add(int(np.sum(iters)))
    if status != kernels.STATUS_OK:
        raise SolveError(_STATUS_TEXT[status], int(failed), status, float(res[failed - 1]))
    return ForwardHistory(schedule, params, np.asarray(xi), np.asarray(plastic, dtype=bool), np.asarray(iters), np.asarray(res), np.asarray(ftrial))
