import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcal.forward import LoadSchedule, run_forward
from mpcal.model import SymTensor, effective_stress, flow_normal, hardening
from mpcal.sensitivity import scale_params, transform_hessian, unscale_params

from conftest import make_params

comp = st.floats(-500.0, 500.0, allow_nan=False)
tensors = st.builds(SymTensor, comp, comp, comp, comp, comp, comp)


class TestInvariants:
    @given(tensors, st.floats(-1e3, 1e3))
    def test_pressure_insensitive(self, s, c):
        a = effective_stress(s)
        b = effective_stress(s + SymTensor.identity() * c)
        assert abs(a - b) <= 1e-9 * max(1.0, a)

    @given(tensors)
    def test_normal_identities(self, s):
        if s.dev().norm() < 1e-6:
            return
        n = flow_normal(s)
        assert abs(n.trace()) <= 1e-12
        assert abs(n.ddot(n) - 1.5) <= 1e-12
        assert abs(n.ddot(s.dev()) - np.sqrt(1.5) * s.dev().norm()) <= 1e-9 * s.dev().norm()

    @given(st.floats(0, 1), st.floats(0, 1e4), st.floats(0, 500), st.floats(0, 1e4))
    def test_hardening_monotone(self, a, K, S, D):
        assert hardening(a + 1e-3, K, S, D) >= hardening(a, K, S, D)

    @given(st.lists(st.floats(1e-3, 1e4), min_size=1, max_size=6))
    def test_scaling_round_trip(self, p):
        p = np.array(p)
        ref = p[::-1].copy()
        np.testing.assert_allclose(unscale_params(scale_params(p, ref), ref), p, rtol=1e-14)

    @given(st.lists(st.floats(-10, 10), min_size=9, max_size=9), st.lists(st.floats(0.1, 10), min_size=3, max_size=3))
    def test_transformed_hessian_symmetric(self, h, p):
        H = np.array(h).reshape(3, 3)
        H = H + H.T
        T = transform_hessian(H, np.arange(3.0), np.array(p))
        np.testing.assert_allclose(T, T.T, rtol=1e-15, atol=0)


class TestForwardProperties:
    @settings(max_examples=20, deadline=None)
    @given(st.floats(-0.02, 0.02), st.floats(-0.02, 0.02), st.floats(-0.01, 0.01))
    def test_plane_stress_paths(self, e11, e22, e12):
        sched = LoadSchedule.from_ramps("plane", [({"11": e11, "22": e22, "12": e12}, 20), ({"11": 0.0}, 20)])
        h = run_forward(sched, make_params())
        ep = h.plastic_strain()
        assert np.max(np.abs(ep[:, :3].sum(axis=1))) <= 1e-12
        assert np.all(np.diff(h.xi[:, 5]) >= 0)
        assert np.max(np.abs(h.stress[:, 2])) <= 1e-5
        assert np.max(h.residual_norms) <= 1e-10
