"""Material point elastoplastic calibration.

Forward solves of a J2 plasticity model with nonlinear isotropic hardening,
exact gradients (direct and adjoint) and Hessians (direct-adjoint) of a
least-squares stress misfit, Newton and L-BFGS calibration, and
finite-difference / complex-step derivative checks.
"""

from .config import ConfigError, RunConfig
from .forward import ForwardHistory, LoadSchedule, SolveError, SolverOpts, run_forward
from .model import ModelVariant, ParamSet, SymTensor
from .optimize import OptSettings, OptTrace, ga_initialize, newton_solve, quasi_newton_solve
from .sensitivity import CalibrationProblem, Observation, SensBundle

__version__ = "0.1.0"

__all__ = [
    "CalibrationProblem",
    "ConfigError",
    "ForwardHistory",
    "LoadSchedule",
    "ModelVariant",
    "Observation",
    "OptSettings",
    "OptTrace",
    "ParamSet",
    "RunConfig",
    "SensBundle",
    "SolveError",
    "SolverOpts",
    "SymTensor",
    "ga_initialize",
    "newton_solve",
    "quasi_newton_solve",
    "run_forward",
]
