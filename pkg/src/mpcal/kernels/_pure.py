"""Pure-Python kernels built directly on the scalar-generic model.

Besides mirroring the compiled API for real inputs, :func:`newton_local` and
:func:`solve_history_generic` accept complex parameters, which is how the
complex-step checks run the forward model.
"""

from __future__ import annotations

import numpy as np

from .. import model
from ..jet import Jet, gradients, hessians

STATUS_OK = 0
STATUS_DEGENERATE = 1
STATUS_MAXITER = 2
STATUS_SINGULAR = 3


def _seeded(vals, seed, n, order):
    out = []
    for v, s in zip(vals, seed):
        if order >= 1 and s >= 0:
            out.append(Jet.variable(v, int(s), n, order=order))
        else:
            out.append(v)
    return out


def _values(rows):
    return np.array([r.val if isinstance(r, Jet) else r for r in rows])


def residual_derivs(variant, xi_n, xi_prev, eps, params, plastic, seed, n, order):
    M = len(xi_n)
    seed = list(seed)
    xn = _seeded(list(xi_n), seed[:M], n, order)
    xp = _seeded(list(xi_prev), seed[M : 2 * M], n, order)
    pr = _seeded(list(params), seed[2 * M :], n, order)
    try:
        rows = model.local_residual(variant, xn, xp, list(eps), pr, bool(plastic))
    except model.DegenerateDeviatorError:
        return STATUS_DEGENERATE, np.empty(M), None, None
    val = _values(rows)
    grad = gradients(rows, n) if order >= 1 else None
    hess = hessians(rows, n) if order >= 2 else None
    return STATUS_OK, val, grad, hess


def objective_derivs(variant, xi_n, eps, params, target, weights, seed, n, order):
    M = len(xi_n)
    seed = list(seed)
    xn = _seeded(list(xi_n), seed[:M], n, order)
    pr = _seeded(list(params), seed[M:], n, order)
    J = model.step_objective(variant, xn, list(eps), pr, list(target), list(weights))
    if not isinstance(J, Jet):
        J = Jet.constant(J, n, order=max(order, 1))
    grad = np.array(J.grad) if order >= 1 else None
    hess = np.array(J.hess) if order >= 2 else None
    return J.val, grad, hess


def trial_yield(variant, x, eps, params):
    E, nu, Y, K, S, D = params
    sigma = model.state_stress(variant, x, eps, E, nu)
    return model.yield_value(sigma, x[5], Y, K, S, D)


def newton_local(variant, x, xp, eps, params, plastic, tol, max_iter):
    """Newton iteration on one branch of the local residual.

    Works for real or complex scalars.  Convergence is judged on the real
    part; complex solves take one further correction so the imaginary part
    is converged as tightly as the real one.

    Returns ``(status, x, iterations, residual_norm)``.
    """
    M = len(x)
    x = list(x)
    iters = 0
    cplx = any(isinstance(v, complex) for v in x) or any(isinstance(v, complex) for v in params)
    polish = 1 if cplx else 0
    rn = np.inf
    for it in range(max_iter + 1 + polish):
        jets = [Jet.variable(v, k, M, order=1) for k, v in enumerate(x)]
        try:
            rows = model.local_residual(variant, jets, xp, eps, params, plastic)
        except model.DegenerateDeviatorError:
            return STATUS_DEGENERATE, x, iters, rn
        R = _values(rows)
        rn = float(np.max(np.abs(R.real))) if M else 0.0
        if not np.isfinite(rn):
            return STATUS_MAXITER, x, iters, rn
        if rn <= tol:
            if polish == 0 or not np.any(R):
                return STATUS_OK, x, iters, rn
            polish -= 1
        elif it >= max_iter:
            return STATUS_MAXITER, x, iters, rn
        Jac = gradients(rows, M)
        # elastic rows hold x[:6] = xp[:6] exactly; iterate on the off-axis block only
        k0 = 0 if plastic else 6
        try:
            dx = np.linalg.solve(Jac[k0:, k0:], -R[k0:])
        except np.linalg.LinAlgError:
            return STATUS_SINGULAR, x, iters + 1, rn
        iters += 1
        x = x[:k0] + [xk + dk for xk, dk in zip(x[k0:], dx.tolist())]
    return STATUS_OK, x, iters, rn


def solve_history_generic(variant, strains, params, tol, max_iter):
    """Forward history for real or complex parameters (see :func:`solve_history`)."""
    variant = model.ModelVariant(variant)
    M = variant.state_dim
    strains = np.asarray(strains, dtype=float)
    NL = strains.shape[0]
    params = list(np.asarray(params).tolist())
    cplx = any(isinstance(p, complex) for p in params)
    dtype = complex if cplx else float
    xi = np.zeros((NL + 1, M), dtype=dtype)
    plastic = np.zeros(NL, dtype=bool)
    iters = np.zeros(NL, dtype=np.int64)
    res = np.zeros(NL)
    ftrial = np.zeros(NL)
    zero = 0j if cplx else 0.0
    x_prev = [zero] * M
    for n in range(1, NL + 1):
        eps = strains[n - 1].tolist()
        status, x, it_el, rn = newton_local(variant, x_prev, x_prev, eps, params, False, tol, max_iter)
        if status != STATUS_OK:
            return xi, plastic, iters, res, ftrial, status, n
        ft = model.real(trial_yield(variant, x, eps, params))
        ftrial[n - 1] = ft
        it_pl = 0
        if ft > 0.0:
            plastic[n - 1] = True
            status, x, it_pl, rn = newton_local(variant, x, x_prev, eps, params, True, tol, max_iter)
            if status != STATUS_OK:
                iters[n - 1] = it_el + it_pl
                res[n - 1] = rn
                return xi, plastic, iters, res, ftrial, status, n
        iters[n - 1] = it_el + it_pl
        res[n - 1] = rn
        xi[n] = x
        x_prev = list(x)
    return xi, plastic, iters, res, ftrial, STATUS_OK, 0


def solve_history(variant, strains, params, tol, max_iter):
    return solve_history_generic(variant, strains, np.asarray(params, dtype=float), tol, max_iter)
