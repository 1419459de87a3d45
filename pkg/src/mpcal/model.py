"""Small-strain elastoplastic material point model.

Every function here is written against an abstract scalar supporting
``+ - * /``, ``sqrt``, ``exp`` and real-part comparison, so it runs unchanged
on floats, complex numbers (complex step) and :class:`~mpcal.jet.Jet`
derivative carriers.

Tensor components are stored in the order (11, 22, 33, 12, 13, 23).  The
local state layout is::

    ThreeD       [ep11, ep12, ep13, ep22, ep23, alpha]
    PlaneStress  ThreeD + [eps33]
    Uniaxial     ThreeD + [eps22, eps33]

with ep33 = -(ep11 + ep22) reconstructed on demand.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, field

import numpy as np

COMPONENTS = ("11", "22", "33", "12", "13", "23")
PARAM_NAMES = ("E", "nu", "Y", "K", "S", "D")
# Double-contraction weights: off-diagonal components count twice.
FROBENIUS_WEIGHTS = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
SQRT_3_2 = math.sqrt(1.5)


class DegenerateDeviatorError(ArithmeticError):
    """Flow direction requested for a stress with (numerically) zero deviator."""


# ---------------------------------------------------------------------------
# scalar dispatch
# ---------------------------------------------------------------------------


def sqrt(x):
    if isinstance(x, complex):
        return cmath.sqrt(x)
    if isinstance(x, (float, int)):
        return math.sqrt(x)
    return x.sqrt()


def exp(x):
    if isinstance(x, complex):
        return cmath.exp(x)
    if isinstance(x, (float, int)):
        return math.exp(x)
    return x.exp()


def real(x) -> float:
    """Real part of any supported scalar (used for every branch decision)."""
    r = x.real
    return float(r)


# ---------------------------------------------------------------------------
# tensors
# ---------------------------------------------------------------------------


class SymTensor:
    """Symmetric second-order tensor stored as six independent components."""

    __slots__ = ("c",)

    def __init__(self, c11=0.0, c22=0.0, c33=0.0, c12=0.0, c13=0.0, c23=0.0):
        self.c = (c11, c22, c33, c12, c13, c23)

    @classmethod
    def from_components(cls, comps) -> SymTensor:
        comps = tuple(comps)
        if len(comps) != 6:
            raise ValueError(f"expected 6 components, got {len(comps)}")
        return cls(*comps)

    @classmethod
    def identity(cls) -> SymTensor:
        return cls(1.0, 1.0, 1.0)

    @classmethod
    def diag(cls, a, b, c) -> SymTensor:
        return cls(a, b, c)

    def __iter__(self):
        return iter(self.c)

    def __getitem__(self, i):
        return self.c[i]

    def __len__(self) -> int:
        return 6

    def __repr__(self) -> str:
        return "SymTensor(" + ", ".join(f"{k}={v!r}" for k, v in zip(COMPONENTS, self.c)) + ")"

    def __add__(self, other: SymTensor) -> SymTensor:
        return SymTensor(*(a + b for a, b in zip(self.c, other.c)))

    def __sub__(self, other: SymTensor) -> SymTensor:
        return SymTensor(*(a - b for a, b in zip(self.c, other.c)))

    def __mul__(self, k) -> SymTensor:
        return SymTensor(*(a * k for a in self.c))

    __rmul__ = __mul__

    def __truediv__(self, k) -> SymTensor:
        return SymTensor(*(a / k for a in self.c))

    def trace(self):
        return self.c[0] + self.c[1] + self.c[2]

    def dev(self) -> SymTensor:
        m = self.trace() / 3.0
        c11, c22, c33, c12, c13, c23 = self.c
        return SymTensor(c11 - m, c22 - m, c33 - m, c12, c13, c23)

    def ddot(self, other: SymTensor):
        a, b = self.c, other.c
        return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + 2.0 * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5])

    def norm(self):
        return sqrt(self.ddot(self))

    def full(self) -> np.ndarray:
        """3x3 matrix (symmetric by construction)."""
        c11, c22, c33, c12, c13, c23 = self.c
        return np.array([[c11, c12, c13], [c12, c22, c23], [c13, c23, c33]])

    def to_array(self) -> np.ndarray:
        return np.array(self.c)


# ---------------------------------------------------------------------------
# parameters and variants
# ---------------------------------------------------------------------------


class ModelVariant(enum.IntEnum):
    THREE_D = 0
    PLANE_STRESS = 1
    UNIAXIAL = 2

    @property
    def state_dim(self) -> int:
        return (6, 7, 8)[self]

    @property
    def prescribed(self) -> tuple[int, ...]:
        """Strain component indices supplied by the load schedule."""
        return ((0, 1, 2, 3, 4, 5), (0, 1, 3), (0,))[self]

    @property
    def observed(self) -> tuple[int, ...]:
        """Stress components that can carry data (the rest are zero by construction)."""
        return ((0, 1, 2, 3, 4, 5), (0, 1, 3), (0,))[self]

    @property
    def cli_name(self) -> str:
        return ("3d", "plane", "uniaxial")[self]

    @classmethod
    def parse(cls, name) -> ModelVariant:
        if isinstance(name, ModelVariant):
            return name
        key = str(name).lower().replace("_", "").replace("-", "")
        table = {
            "3d": cls.THREE_D,
            "threed": cls.THREE_D,
            "plane": cls.PLANE_STRESS,
            "planestress": cls.PLANE_STRESS,
            "uniaxial": cls.UNIAXIAL,
        }
        if key not in table:
            raise ValueError(f"unknown model variant {name!r}")
        return table[key]


def lame(E, nu):
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


@dataclass
class ParamSet:
    """The six material parameters ``[E, nu, Y, K, S, D]`` and their design metadata.

    ``lower``/``upper``/``ref`` are only meaningful for active entries.  When
    bounds are omitted they default to ``[1e-3 * ref, 1e3 * ref]`` and the
    reference defaults to the current value.
    """

    values: np.ndarray
    active: np.ndarray = field(default_factory=lambda: np.zeros(6, dtype=bool))
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    ref: np.ndarray | None = None

    def __post_init__(self):
        dtype = complex if np.iscomplexobj(self.values) else float
        self.values = np.array(self.values, dtype=dtype).reshape(6)
        self.active = np.array(self.active, dtype=bool).reshape(6)
        if self.ref is None:
            self.ref = np.abs(np.real(self.values)).astype(float)
        self.ref = np.array(self.ref, dtype=float).reshape(6)
        if self.lower is None:
            self.lower = 1e-3 * self.ref
        if self.upper is None:
            self.upper = 1e3 * self.ref
        self.lower = np.array(self.lower, dtype=float).reshape(6)
        self.upper = np.array(self.upper, dtype=float).reshape(6)

    @classmethod
    def from_dict(cls, values: dict, active=(), **kw) -> ParamSet:
        vals = [values[k] for k in PARAM_NAMES]
        act = [k in active for k in PARAM_NAMES]
        return cls(np.array(vals, dtype=float), np.array(act), **kw)

    def validate(self) -> None:
        E, nu, Y, K, S, D = np.real(self.values)
        problems = []
        if not E > 0:
            problems.append("E must be positive")
        if not -1.0 < nu < 0.5:
            problems.append("nu must lie in (-1, 0.5)")
        if not Y > 0:
            problems.append("Y must be positive")
        for name, v in (("K", K), ("S", S), ("D", D)):
            if not v >= 0:
                problems.append(f"{name} must be non-negative")
        act = self.active
        if np.any(self.ref[act] <= 0):
            problems.append("reference values of active parameters must be positive")
        if np.any(self.lower[act] >= self.upper[act]):
            problems.append("lower bound must be below upper bound")
        v = np.real(self.values)
        if np.any((v[act] < self.lower[act]) | (v[act] > self.upper[act])):
            problems.append("active parameter outside its bounds")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    @property
    def active_index(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    @property
    def active_names(self) -> list[str]:
        return [PARAM_NAMES[i] for i in self.active_index]

    @property
    def active_values(self) -> np.ndarray:
        return self.values[self.active].copy()

    def with_active(self, x) -> ParamSet:
        """Copy with active entries replaced by ``x`` (may be complex)."""
        x = np.asarray(x)
        dtype = complex if (np.iscomplexobj(x) or np.iscomplexobj(self.values)) else float
        vals = self.values.astype(dtype)
        vals[self.active] = x
        return ParamSet(vals, self.active.copy(), self.lower.copy(), self.upper.copy(), self.ref.copy())

    def copy(self) -> ParamSet:
        return self.with_active(self.active_values)

    def as_dict(self) -> dict:
        return {k: complex(v) if isinstance(v, complex) else float(v) for k, v in zip(PARAM_NAMES, self.values)}

    @property
    def lame(self):
        return lame(self.values[0], self.values[1])


@dataclass
class LocalState:
    """Converged local state at one load step."""

    xi: np.ndarray
    plastic: bool = False
    step: int = 0

    @property
    def alpha(self):
        return self.xi[5]

    def plastic_strain(self) -> SymTensor:
        return plastic_strain(self.xi)


# ---------------------------------------------------------------------------
# constitutive functions
# ---------------------------------------------------------------------------


def elastic_stress(eps_e: SymTensor, E, nu) -> SymTensor:
    """Isotropic linear elasticity, ``lam tr[eps_e] I + 2 mu eps_e``."""
    lam, mu = lame(E, nu)
    ltr = lam * eps_e.trace()
    c11, c22, c33, c12, c13, c23 = eps_e.c
    two_mu = 2.0 * mu
    return SymTensor(
        ltr + two_mu * c11,
        ltr + two_mu * c22,
        ltr + two_mu * c33,
        two_mu * c12,
        two_mu * c13,
        two_mu * c23,
    )


def hardening(alpha, K, S, D):
    """Linear plus Voce hardening ``K alpha + S (1 - exp(-D alpha))``."""
    return K * alpha + S * (1.0 - exp(-D * alpha))


def effective_stress(sigma: SymTensor):
    """von Mises stress ``sqrt(3/2) ||dev sigma||``."""
    return SQRT_3_2 * sigma.dev().norm()


def yield_value(sigma: SymTensor, alpha, Y, K, S, D):
    return effective_stress(sigma) - (Y + hardening(alpha, K, S, D))


def flow_normal(sigma: SymTensor) -> SymTensor:
    """Unit-consistent flow direction ``sqrt(3/2) s / ||s||``.

    Raises
    ------
    DegenerateDeviatorError
        If ``||s|| <= 1e-12 * max(1, ||sigma||)``.
    """
    s = sigma.dev()
    s_norm = s.norm()
    tol = 1e-12 * max(1.0, abs(real(sigma.norm())))
    if abs(real(s_norm)) <= tol:
        raise DegenerateDeviatorError("flow direction undefined for a hydrostatic stress")
    return s * (SQRT_3_2 / s_norm)


# ---------------------------------------------------------------------------
# state reconstruction and the local residual
# ---------------------------------------------------------------------------


def plastic_strain(xi) -> SymTensor:
    ep11, ep12, ep13, ep22, ep23 = xi[0], xi[1], xi[2], xi[3], xi[4]
    return SymTensor(ep11, ep22, -ep11 - ep22, ep12, ep13, ep23)


def total_strain(variant: ModelVariant, xi, eps) -> SymTensor:
    """Total strain with the variant's off-axis components read from the state."""
    e = list(eps)
    if variant == ModelVariant.PLANE_STRESS:
        e[2] = xi[6]
    elif variant == ModelVariant.UNIAXIAL:
        e[1] = xi[6]
        e[2] = xi[7]
    return SymTensor(*e)


def state_stress(variant: ModelVariant, xi, eps, E, nu) -> SymTensor:
    eps_full = total_strain(variant, xi, eps)
    return elastic_stress(eps_full - plastic_strain(xi), E, nu)


def _constraint_rows(variant, eps_full: SymTensor, ep: SymTensor, E, nu) -> list:
    lam, mu = lame(E, nu)
    ltr = lam * eps_full.trace()
    if variant == ModelVariant.PLANE_STRESS:
        return [ltr + 2.0 * mu * (eps_full[2] - ep[2])]
    if variant == ModelVariant.UNIAXIAL:
        return [
            ltr + 2.0 * mu * (eps_full[1] - ep[1]),
            ltr + 2.0 * mu * (eps_full[2] - ep[2]),
        ]
    return []


def local_residual(variant, xi_n, xi_prev, eps, params, plastic: bool) -> list:
    """Branch-specific local residual of one load step.

    Parameters
    ----------
    variant : ModelVariant
    xi_n, xi_prev : sequence of scalars
        Current and previous local state vectors.
    eps : sequence of 6 scalars
        Prescribed strain; components owned by the state are ignored.
    params : sequence of 6 scalars
        ``[E, nu, Y, K, S, D]``.
    plastic : bool
        Branch selector (elastic rows are pure increments).

    Returns
    -------
    list
        ``N = variant.state_dim`` residual entries, same scalar type as inputs.
    """
    variant = ModelVariant(variant)
    E, nu, Y, K, S, D = params
    eps_full = total_strain(variant, xi_n, eps)
    ep = plastic_strain(xi_n)
    rows = []
    if plastic:
        sigma = elastic_stress(eps_full - ep, E, nu)
        n = flow_normal(sigma)
        d_alpha = xi_n[5] - xi_prev[5]
        for k, comp in enumerate((0, 3, 4, 1, 5)):
            rows.append(xi_n[k] - xi_prev[k] - d_alpha * n[comp])
        rows.append(yield_value(sigma, xi_n[5], Y, K, S, D))
    else:
        for k in range(6):
            rows.append(xi_n[k] - xi_prev[k])
    rows.extend(_constraint_rows(variant, eps_full, ep, E, nu))
    return rows


def step_objective(variant, xi_n, eps, params, target, weights):
    """Per-step misfit ``1/2 sum_c w_c (sigma_c - target_c)^2``.

    ``weights`` already folds in the component mask (zero = unobserved).
    """
    sigma = state_stress(variant, xi_n, eps, params[0], params[1])
    total = 0.0
    for c in range(6):
        w = weights[c]
        if w != 0.0:
            r = sigma[c] - target[c]
            total = total + w * (r * r)
    return 0.5 * total
