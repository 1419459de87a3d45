"""Misfit objective, its exact gradient (direct and adjoint) and Hessian.

All derivatives are with respect to the active parameters of the
:class:`~mpcal.model.ParamSet` attached to a forward history.  Linear solves
with the local Jacobian are tallied in :data:`mpcal.counters.SOLVES`, one per
right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .counters import SOLVES
from .diff import StepContext, objective_partials, residual_derivatives
from .forward import ForwardHistory, LoadSchedule, SolverOpts, run_forward
from .model import FROBENIUS_WEIGHTS, ModelVariant, ParamSet

NORMS = ("frobenius", "unit")


@dataclass
class Observation:
    """Target stresses for every load step and the components they constrain.

    Parameters
    ----------
    targets : (N_L, 6) array
        Observed stress, component order ``11, 22, 33, 12, 13, 23``.
        Unobserved entries may hold anything finite (NaN is replaced by 0).
    mask : sequence of 6 bool
        Components entering the misfit.
    norm : {"frobenius", "unit"}
        ``"frobenius"`` counts each masked shear component twice (tensor
        double contraction); ``"unit"`` weights every masked component once.
    """

    targets: np.ndarray
    mask: np.ndarray
    norm: str = "frobenius"
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        self.targets = np.array(self.targets, dtype=float).reshape(-1, 6)
        self.mask = np.asarray(self.mask, dtype=bool).reshape(6)
        if not self.mask.any():
            raise ValueError("observation mask selects no component")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")
        masked = self.targets[:, self.mask]
        if not np.all(np.isfinite(masked)):
            raise ValueError("observed stress components must be finite")
        self.targets[:, ~self.mask] = np.nan_to_num(self.targets[:, ~self.mask])
        base = FROBENIUS_WEIGHTS if self.norm == "frobenius" else np.ones(6)
        self.weights = np.where(self.mask, base, 0.0)

    def __len__(self) -> int:
        return self.targets.shape[0]

    @classmethod
    def for_variant(cls, variant, targets, norm: str = "frobenius") -> Observation:
        """Observation masked to the stress components a variant can carry."""
        variant = ModelVariant.parse(variant)
        mask = np.zeros(6, dtype=bool)
        mask[list(variant.observed)] = True
        return cls(targets, mask, norm)

    @classmethod
    def from_history(cls, history: ForwardHistory, mask=None, norm: str = "frobenius") -> Observation:
        """Self-consistent observation reproducing a forward history exactly."""
        if mask is None:
            return cls.for_variant(history.variant, history.stress.real, norm)
        return cls(history.stress.real, mask, norm)


@dataclass
class SensBundle:
    """Sensitivity results for one forward history."""

    objective: float
    gradient: np.ndarray
    hessian: np.ndarray | None
    W: np.ndarray  # (N_L + 1, M, P); W[0] = 0
    phi: np.ndarray  # (N_L + 1, M); phi[0] unused (zero)
    solves: int


def _check_lengths(history: ForwardHistory, obs: Observation) -> None:
    if len(obs) != history.n_steps:
        raise ValueError(f"observation has {len(obs)} steps, history has {history.n_steps}")


def objective(history: ForwardHistory, obs: Observation) -> float:
    """Total weighted misfit between model and observed stress."""
    _check_lengths(history, obs)
    r = history.stress - obs.targets
    return 0.5 * np.sum(obs.weights * (r * r))


def _step_objective(history, obs, n, order):
    return objective_partials(
        history.variant, history.xi[n], history.schedule.strains[n - 1], history.params, obs.targets[n - 1], obs.weights, order
    )


def direct_gradient(history: ForwardHistory, obs: Observation):
    """Gradient by forward propagation of the state sensitivities.

    Returns
    -------
    gradient : (P,) array
    W : (N_L + 1, M, P) array
        ``W[n] = d xi^n / d p``, with ``W[0] = 0``.
    """
    _check_lengths(history, obs)
    NL, M, P = history.n_steps, history.xi.shape[1], history.params.n_active
    W = np.zeros((NL + 1, M, P))
    g = np.zeros(P)
    for n in range(1, NL + 1):
        rp, _ = residual_derivatives(StepContext.from_history(history, n), order=1)
        rhs = rp.d_xi_prev @ W[n - 1] + rp.d_p
        W[n] = -np.linalg.solve(rp.d_xi, rhs)
        SOLVES.add(P)
        op = _step_objective(history, obs, n, order=1)
        g += op.d_xi @ W[n] + op.d_p
    return g, W


def _step_partials(history, obs, order):
    """Residual and objective partials of every step (index 0 unused)."""
    res, obj = [None], [None]
    for n in range(1, history.n_steps + 1):
        res.append(residual_derivatives(StepContext.from_history(history, n), order=order))
        obj.append(_step_objective(history, obs, n, order=order))
    return res, obj


def _backward(res, obj, M):
    NL = len(res) - 1
    phi = np.zeros((NL + 1, M))
    carry = np.zeros(M)  # (dC^{n+1}/dxi^n)^T phi^{n+1}
    for n in range(NL, 0, -1):
        rp = res[n][0]
        phi[n] = -np.linalg.solve(rp.d_xi.T, obj[n].d_xi + carry)
        SOLVES.add(1)
        carry = rp.d_xi_prev.T @ phi[n]
    return phi


def _adjoint_assemble(res, obj, phi, P):
    g = np.zeros(P)
    for n in range(1, len(res)):
        g += obj[n].d_p + phi[n] @ res[n][0].d_p
    return g


def adjoint_solve(history: ForwardHistory, obs: Observation) -> np.ndarray:
    """Adjoint multipliers from the backward recursion; one transposed solve per step.

    Returns
    -------
    (N_L + 1, M) array
        Row ``n`` is the multiplier of step ``n``; row 0 is zero.
    """
    _check_lengths(history, obs)
    res, obj = _step_partials(history, obs, order=1)
    return _backward(res, obj, history.xi.shape[1])


def adjoint_gradient(history: ForwardHistory, obs: Observation, phi: np.ndarray | None = None) -> np.ndarray:
    """Gradient from the adjoint multipliers (solved for here unless supplied)."""
    _check_lengths(history, obs)
    res, obj = _step_partials(history, obs, order=1)
    if phi is None:
        phi = _backward(res, obj, history.xi.shape[1])
    return _adjoint_assemble(res, obj, phi, history.params.n_active)


def hessian_direct_adjoint(history: ForwardHistory, obs: Observation) -> SensBundle:
    """Objective, gradient and exact Hessian from one direct and one adjoint sweep.

    Costs ``N_L * (P + 1)`` local linear solves: ``P`` per step for the state
    sensitivities and one per step for the multipliers.
    """
    _check_lengths(history, obs)
    NL, M, P = history.n_steps, history.xi.shape[1], history.params.n_active
    before = SOLVES.count
    res, obj = _step_partials(history, obs, order=2)

    W = np.zeros((NL + 1, M, P))
    for n in range(1, NL + 1):
        rp = res[n][0]
        W[n] = -np.linalg.solve(rp.d_xi, rp.d_xi_prev @ W[n - 1] + rp.d_p)
        SOLVES.add(P)
    phi = _backward(res, obj, M)
    g = _adjoint_assemble(res, obj, phi, P)

    eye = np.eye(P)
    H = np.zeros((P, P))
    for n in range(1, NL + 1):
        Zc = np.vstack([W[n], W[n - 1], eye])
        Zj = np.vstack([W[n], eye])
        curv = np.einsum("q,qab->ab", phi[n], res[n][1].full)
        H += Zc.T @ curv @ Zc + Zj.T @ obj[n].full_hessian @ Zj
    return SensBundle(objective(history, obs), g, H, W, phi, SOLVES.count - before)


# ---------------------------------------------------------------------------
# logarithmic parameter scaling
# ---------------------------------------------------------------------------


def scale_params(values, ref) -> np.ndarray:
    """``eta = ln(p / p_ref)``; both arguments must be positive."""
    values = np.asarray(values, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if np.any(values <= 0) or np.any(ref <= 0):
        raise ValueError("log scaling needs positive parameters and reference values")
    return np.log(values / ref)


def unscale_params(eta, ref) -> np.ndarray:
    return np.asarray(ref) * np.exp(eta)


def transform_gradient(grad_p, p) -> np.ndarray:
    return np.asarray(grad_p) * np.asarray(p)


def transform_hessian(hess_p, grad_p, p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return np.asarray(hess_p) * np.outer(p, p) + np.diag(np.asarray(grad_p) * p)


# ---------------------------------------------------------------------------
# optimizer-facing problem
# ---------------------------------------------------------------------------


class CalibrationProblem:
    """Misfit as a function of the active parameters for a fixed loading and data set.

    Methods taking ``p`` work on raw active parameter values; the ``*_eta``
    variants work on ``eta = ln(p / p_ref)`` and return chain-rule
    transformed derivatives.  The last forward solve is cached so that an
    objective evaluation followed by a derivative request at the same point
    solves the forward problem once.
    """

    def __init__(self, schedule: LoadSchedule, params: ParamSet, obs: Observation,
                 opts: SolverOpts = SolverOpts(), backend: str | None = None):
        if len(obs) != schedule.n_steps:
            raise ValueError("observation and schedule lengths differ")
        if params.n_active == 0:
            raise ValueError("no active parameters to calibrate")
        self.schedule = schedule
        self.params = params.copy()
        self.obs = obs
        self.opts = opts
        self.backend = backend
        self._cache_key = None
        self._cache = None

    @property
    def n(self) -> int:
        return self.params.n_active

    @property
    def names(self) -> list[str]:
        return self.params.active_names

    @property
    def ref(self) -> np.ndarray:
        return self.params.ref[self.params.active_index]

    @property
    def lower(self) -> np.ndarray:
        return self.params.lower[self.params.active_index]

    @property
    def upper(self) -> np.ndarray:
        return self.params.upper[self.params.active_index]

    @property
    def n_steps(self) -> int:
        return self.schedule.n_steps

    def to_eta(self, p) -> np.ndarray:
        return scale_params(p, self.ref)

    def to_p(self, eta) -> np.ndarray:
        return unscale_params(eta, self.ref)

    def eta_bounds(self):
        return self.to_eta(self.lower), self.to_eta(self.upper)

    def params_at(self, p) -> ParamSet:
        return self.params.with_active(p)

    def history(self, p) -> ForwardHistory:
        p = np.asarray(p)
        if np.iscomplexobj(p):
            return run_forward(self.schedule, self.params_at(p), self.opts)
        key = tuple(np.asarray(p, dtype=float).tolist())
        if key != self._cache_key:
            self._cache = run_forward(self.schedule, self.params_at(p), self.opts, self.backend)
            self._cache_key = key
        return self._cache

    def objective(self, p):
        """Misfit at ``p``; complex ``p`` is allowed for complex-step probing."""
        h = self.history(p)
        r = h.stress - self.obs.targets
        return 0.5 * np.sum(self.obs.weights * (r * r))

    def gradient(self, p, method: str = "adjoint"):
        """Returns ``(J, dJ/dp)``."""
        h = self.history(p)
        if method == "adjoint":
            g = adjoint_gradient(h, self.obs)
        elif method == "direct":
            g = direct_gradient(h, self.obs)[0]
        else:
            raise ValueError(f"unknown gradient method {method!r}")
        return objective(h, self.obs), g

    def hessian(self, p) -> SensBundle:
        return hessian_direct_adjoint(self.history(p), self.obs)

    def in_eta(self) -> EtaView:
        """The same objective seen as a function of ``eta``."""
        return EtaView(self)

    def objective_eta(self, eta):
        return self.objective(self.to_p(eta))

    def gradient_eta(self, eta):
        p = self.to_p(eta)
        J, g = self.gradient(p)
        return J, transform_gradient(g, p), g

    def hessian_eta(self, eta):
        """Returns ``(J, grad_eta, hess_eta, grad_p, hess_p)``."""
        p = self.to_p(eta)
        b = self.hessian(p)
        return (b.objective, transform_gradient(b.gradient, p), transform_hessian(b.hessian, b.gradient, p),
                b.gradient, b.hessian)


class EtaView:
    """Adapter exposing ``objective``/``gradient``/``hessian`` of a problem in eta-space.

    Lets the verification sweeps run on the scaled variables without knowing
    about the transform.
    """

    def __init__(self, problem: CalibrationProblem):
        self.problem = problem

    @property
    def n(self) -> int:
        return self.problem.n

    def objective(self, eta):
        return self.problem.objective(self.problem.to_p(eta))

    def gradient(self, eta, method: str = "adjoint"):
        p = self.problem.to_p(eta)
        J, g = self.problem.gradient(p, method)
        return J, transform_gradient(g, p)

    def hessian(self, eta) -> SensBundle:
        p = self.problem.to_p(eta)
        b = self.problem.hessian(p)
        return SensBundle(b.objective, transform_gradient(b.gradient, p), transform_hessian(b.hessian, b.gradient, p),
                          b.W, b.phi, b.solves)
