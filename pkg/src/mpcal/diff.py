"""Exact first and second partials of the local residual and per-step misfit.

Derivatives come from evaluating the model with truncated Taylor numbers
(see :mod:`mpcal.jet`), seeded over every independent direction in a single
pass.  Residual directions are ordered ``[xi_n (M), xi_prev (M), p_active (P)]``;
objective directions ``[xi_n (M), p_active (P)]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import ModelVariant, ParamSet


@dataclass
class StepContext:
    """Everything that defines the residual of one converged load step."""

    variant: ModelVariant
    xi_n: np.ndarray
    xi_prev: np.ndarray
    eps: np.ndarray
    params: ParamSet
    plastic: bool

    @classmethod
    def from_history(cls, history, n: int) -> StepContext:
        """Context of step ``n`` (1-based) of a :class:`~mpcal.forward.ForwardHistory`."""
        return cls(
            history.variant,
            history.xi[n],
            history.xi[n - 1],
            history.schedule.strains[n - 1],
            history.params,
            bool(history.plastic[n - 1]),
        )


@dataclass
class ResidualPartials:
    value: np.ndarray  # (N,)
    d_xi: np.ndarray  # (N, M)
    d_xi_prev: np.ndarray  # (N, M)
    d_p: np.ndarray  # (N, P)


@dataclass
class ResidualSecondPartials:
    """Second derivatives of every residual row, stored as one dense array.

    ``full[q]`` is the Hessian of row ``q`` over the stacked direction vector
    ``[xi_n, xi_prev, p]``; the named blocks are views into it.
    """

    full: np.ndarray  # (N, 2M + P, 2M + P)
    M: int

    def _block(self, a: slice, b: slice) -> np.ndarray:
        return self.full[:, a, b]

    @property
    def _xi(self):
        return slice(0, self.M)

    @property
    def _prev(self):
        return slice(self.M, 2 * self.M)

    @property
    def _p(self):
        return slice(2 * self.M, None)

    @property
    def xi_xi(self):
        return self._block(self._xi, self._xi)

    @property
    def xi_prev(self):
        return self._block(self._xi, self._prev)

    @property
    def prev_xi(self):
        return self._block(self._prev, self._xi)

    @property
    def prev_prev(self):
        return self._block(self._prev, self._prev)

    @property
    def p_p(self):
        return self._block(self._p, self._p)

    @property
    def p_xi(self):
        return self._block(self._p, self._xi)

    @property
    def xi_p(self):
        return self._block(self._xi, self._p)

    @property
    def p_prev(self):
        return self._block(self._p, self._prev)

    @property
    def prev_p(self):
        return self._block(self._prev, self._p)


@dataclass
class ObjectivePartials:
    value: float
    d_xi: np.ndarray  # (M,)
    d_p: np.ndarray  # (P,)
    full_hessian: np.ndarray | None  # (M + P, M + P) or None for first order only

    @property
    def xi_xi(self):
        M = self.d_xi.shape[0]
        return self.full_hessian[:M, :M]

    @property
    def p_xi(self):
        M = self.d_xi.shape[0]
        return self.full_hessian[M:, :M]

    @property
    def p_p(self):
        M = self.d_xi.shape[0]
        return self.full_hessian[M:, M:]


def _param_seed(params: ParamSet, offset: int) -> np.ndarray:
    seed = np.full(6, -1, dtype=np.int_)
    seed[params.active_index] = offset + np.arange(params.n_active)
    return seed


def residual_derivatives(ctx: StepContext, order: int = 2):
    """Residual value with first (and optionally second) partials in one pass.

    Returns
    -------
    ResidualPartials, ResidualSecondPartials or None
    """
    M = len(ctx.xi_n)
    P = ctx.params.n_active
    n = 2 * M + P
    seed = np.concatenate([np.arange(2 * M, dtype=np.int_), _param_seed(ctx.params, 2 * M)])
    status, val, grad, hess = kernels.impl.residual_derivs(
        int(ctx.variant),
        np.ascontiguousarray(ctx.xi_n, dtype=float),
        np.ascontiguousarray(ctx.xi_prev, dtype=float),
        np.ascontiguousarray(ctx.eps, dtype=float),
        np.ascontiguousarray(ctx.params.values, dtype=float),
        bool(ctx.plastic),
        seed,
        n,
        order,
    )
    if status != kernels.STATUS_OK:
        raise ArithmeticError("residual is not differentiable here (degenerate deviator)")
    grad = np.asarray(grad)
    first = ResidualPartials(np.asarray(val), grad[:, :M], grad[:, M : 2 * M], grad[:, 2 * M :])
    second = ResidualSecondPartials(np.asarray(hess), M) if order >= 2 else None
    return first, second


def residual_partials(ctx: StepContext) -> ResidualPartials:
    return residual_derivatives(ctx, order=1)[0]


def residual_second_partials(ctx: StepContext) -> ResidualSecondPartials:
    return residual_derivatives(ctx, order=2)[1]


def objective_partials(variant, xi_n, eps, params: ParamSet, target, weights, order: int = 2) -> ObjectivePartials:
    """Partials of one step's weighted stress misfit.

    ``weights`` holds one non-negative weight per stress component; zero
    leaves the component out.
    """
    M = len(xi_n)
    P = params.n_active
    seed = np.concatenate([np.arange(M, dtype=np.int_), _param_seed(params, M)])
    val, grad, hess = kernels.impl.objective_derivs(
        int(variant),
        np.ascontiguousarray(xi_n, dtype=float),
        np.ascontiguousarray(eps, dtype=float),
        np.ascontiguousarray(params.values, dtype=float),
        np.ascontiguousarray(target, dtype=float),
        np.ascontiguousarray(weights, dtype=float),
        seed,
        M + P,
        order,
    )
    grad = np.asarray(grad)
    return ObjectivePartials(float(val), grad[:M], grad[M:], None if hess is None else np.asarray(hess))
