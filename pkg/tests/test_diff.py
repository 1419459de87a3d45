import numpy as np
import pytest

from mpcal import kernels
from mpcal.diff import StepContext, objective_partials, residual_derivatives, residual_partials, residual_second_partials
from mpcal.model import FROBENIUS_WEIGHTS, ModelVariant, lame, local_residual, step_objective


def _residual(ctx, xi_n=None, xi_prev=None, params=None):
    return np.array(local_residual(
        ctx.variant,
        list(ctx.xi_n if xi_n is None else xi_n),
        list(ctx.xi_prev if xi_prev is None else xi_prev),
        list(ctx.eps),
        list(ctx.params.values if params is None else params),
        ctx.plastic,
    ))


def _fd_jacobian(f, x, h):
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h * max(1.0, abs(x[k]))
        cols.append((f(x + e) - f(x - e)) / (2 * e[k]))
    return np.array(cols).T


def _plastic_step(history):
    return int(np.flatnonzero(history.plastic)[-1]) + 1


def _elastic_step(history):
    return int(np.flatnonzero(~history.plastic)[1]) + 1


class TestResidualPartials:
    def test_elastic_rows(self, truth_history):
        ctx = StepContext.from_history(truth_history, _elastic_step(truth_history))
        rp = residual_partials(ctx)
        np.testing.assert_array_equal(rp.d_xi[:6, :6], np.eye(6))
        np.testing.assert_array_equal(rp.d_xi_prev[:6, :6], -np.eye(6))
        np.testing.assert_array_equal(rp.d_p[:6], 0.0)

    def test_plane_constraint_row(self, truth_history):
        ctx = StepContext.from_history(truth_history, 10)
        lam, mu = lame(70000.0, 0.3)
        assert residual_partials(ctx).d_xi[6, 6] == pytest.approx(lam + 2 * mu, rel=1e-15)

    @pytest.mark.parametrize("which", ["elastic", "plastic"])
    def test_matches_finite_differences(self, truth_history, which):
        n = _plastic_step(truth_history) if which == "plastic" else _elastic_step(truth_history)
        ctx = StepContext.from_history(truth_history, n)
        rp = residual_partials(ctx)
        scale = max(1.0, np.max(np.abs(rp.d_xi)))
        fd = _fd_jacobian(lambda x: _residual(ctx, xi_n=x), np.array(ctx.xi_n), 1e-6)
        assert np.max(np.abs(fd - rp.d_xi)) / scale <= 1e-6
        fd = _fd_jacobian(lambda x: _residual(ctx, xi_prev=x), np.array(ctx.xi_prev), 1e-6)
        assert np.max(np.abs(fd - rp.d_xi_prev)) / scale <= 1e-6
        p = np.array(ctx.params.values)
        idx = ctx.params.active_index

        def fp(x):
            q = p.copy()
            q[idx] = x
            return _residual(ctx, params=q)

        fd = _fd_jacobian(fp, p[idx], 1e-6)
        assert np.max(np.abs(fd - rp.d_p)) / max(1.0, np.max(np.abs(rp.d_p))) <= 1e-6

    def test_jacobian_matches_newton(self, truth_history):
        # the Jacobian at the converged state is non-singular and well scaled
        ctx = StepContext.from_history(truth_history, _plastic_step(truth_history))
        assert np.isfinite(np.linalg.cond(residual_partials(ctx).d_xi))

    def test_degenerate_raises(self, truth_history):
        ctx = StepContext.from_history(truth_history, 1)
        ctx.plastic = True
        ctx.xi_n = np.zeros(7)
        ctx.eps = np.zeros(6)
        with pytest.raises(ArithmeticError):
            residual_derivatives(ctx)


class TestResidualSecondPartials:
    def test_elastic_rows_vanish(self, truth_history):
        sp = residual_second_partials(StepContext.from_history(truth_history, _elastic_step(truth_history)))
        assert not np.any(sp.full[:6])

    def test_blocks_symmetric(self, truth_history):
        sp = residual_second_partials(StepContext.from_history(truth_history, _plastic_step(truth_history)))
        tol = 1e-14 * np.max(np.abs(sp.full))
        np.testing.assert_allclose(sp.full, np.transpose(sp.full, (0, 2, 1)), rtol=0, atol=tol)
        np.testing.assert_allclose(sp.xi_p, np.transpose(sp.p_xi, (0, 2, 1)), rtol=0, atol=tol)
        np.testing.assert_allclose(sp.xi_prev, np.transpose(sp.prev_xi, (0, 2, 1)), rtol=0, atol=tol)

    def test_contraction_matches_fd_of_jacobian(self, truth_history, rng):
        ctx = StepContext.from_history(truth_history, _plastic_step(truth_history))
        sp = residual_second_partials(ctx)
        M = len(ctx.xi_n)
        u = rng.uniform(-1, 1, M) * 1e-3
        v = rng.uniform(-1, 1, M)
        exact = np.einsum("qab,a,b->q", sp.xi_xi, u, v)
        h = 1e-4

        def jac(t):
            c = StepContext(ctx.variant, np.array(ctx.xi_n) + t * u, ctx.xi_prev, ctx.eps, ctx.params, True)
            return residual_partials(c).d_xi @ v

        fd = (jac(h) - jac(-h)) / (2 * h)
        assert np.max(np.abs(fd - exact)) / np.max(np.abs(exact)) <= 1e-4


class TestObjectivePartials:
    def _args(self, history, n, target=None):
        return (history.variant, history.xi[n], history.schedule.strains[n - 1], history.params,
                history.stress[n - 1] if target is None else target, FROBENIUS_WEIGHTS)

    def test_zero_at_match(self, truth_history):
        op = objective_partials(*self._args(truth_history, 80))
        assert op.value == 0.0
        assert not np.any(op.d_xi) and not np.any(op.d_p)

    def test_param_block_psd(self, truth_history):
        op = objective_partials(*self._args(truth_history, 80))
        assert np.min(np.linalg.eigvalsh(op.full_hessian)) >= -1e-9 * np.max(np.abs(op.full_hessian))

    def test_gradient_matches_fd(self, truth_history, rng):
        args = list(self._args(truth_history, 80, target=truth_history.stress[79] + rng.normal(0, 5, 6)))
        op = objective_partials(*args)
        xi = np.array(args[1])

        def J(x):
            return step_objective(args[0], list(x), list(args[2]), list(args[3].values), args[4], args[5])

        fd = _fd_jacobian(lambda x: np.array([J(x)]), xi, 1e-6)[0]
        assert np.max(np.abs(fd - op.d_xi)) / np.max(np.abs(op.d_xi)) <= 1e-6


@pytest.mark.skipif("cython" not in kernels.available(), reason="compiled kernels not built")
class TestBackendParity:
    def test_residual_derivs_agree(self, truth_history):
        ctx = StepContext.from_history(truth_history, _plastic_step(truth_history))
        out = {}
        for name in ("python", "cython"):
            kernels.use(name)
            out[name] = residual_derivatives(ctx)
        kernels.use("cython")
        a, b = out["python"], out["cython"]
        np.testing.assert_allclose(a[0].d_xi, b[0].d_xi, rtol=1e-13, atol=1e-9)
        np.testing.assert_allclose(a[0].d_p, b[0].d_p, rtol=1e-13, atol=1e-18)
        np.testing.assert_allclose(a[1].full, b[1].full, rtol=1e-12, atol=1e-8)
