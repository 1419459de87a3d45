import numpy as np
import pytest

from mpcal.app import generate_synthetic, run_calibration
from mpcal.config import RunConfig
from mpcal.forward import LoadSchedule, run_forward
from mpcal.model import ParamSet
from mpcal.sensitivity import CalibrationProblem, Observation

TRUTH = dict(E=70000.0, nu=0.3, Y=200.0, K=0.0, S=200.0, D=20.0)


def make_params(active=("Y", "S", "D"), **over):
    vals = dict(TRUTH, **over)
    return ParamSet.from_dict(vals, active=active)


def plane_schedule(steps=50):
    return LoadSchedule.from_ramps("plane", [({"11": 0.02}, steps), ({"22": 0.02}, steps)])


def plane_problem(noise=0.0, seed=0, start=(220.0, 220.0, 22.0)):
    cfg = RunConfig.builtin("plane_stress")
    cfg.noise, cfg.seed = noise, seed
    schedule, targets, _ = generate_synthetic(cfg)
    params = cfg.param_set(dict(cfg.values, Y=start[0], S=start[1], D=start[2]))
    return CalibrationProblem(schedule, params, Observation(targets, cfg.mask_array(), cfg.norm))


@pytest.fixture(scope="session")
def truth_history():
    return run_forward(plane_schedule(), make_params())


@pytest.fixture(scope="session")
def noisy_problem():
    return plane_problem(noise=5.0, seed=0)


@pytest.fixture(scope="session")
def clean_problem():
    return plane_problem(noise=0.0)


@pytest.fixture(scope="session")
def uniaxial_problem():
    cfg = RunConfig.builtin("uniaxial_surrogate")
    schedule, targets, _ = generate_synthetic(cfg)
    return CalibrationProblem(schedule, cfg.param_set(), Observation(targets, cfg.mask_array(), cfg.norm))


@pytest.fixture(scope="session")
def plane_runs():
    """Newton and L-BFGS results on the builtin plane-stress problem at noise 5 and 10."""
    out = {}
    for noise in (5.0, 10.0):
        cfg = RunConfig.builtin("plane_stress")
        cfg.noise = noise
        for opt in ("newton", "lbfgs"):
            out[noise, opt] = run_calibration(cfg, optimizer=opt)
    return out


@pytest.fixture(scope="session")
def uniaxial_runs():
    cfg = RunConfig.builtin("uniaxial_surrogate")
    return {opt: run_calibration(cfg, optimizer=opt) for opt in ("newton", "lbfgs")}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
