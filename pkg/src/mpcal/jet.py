"""Truncated second-order Taylor numbers for forward-mode differentiation.

A :class:`Jet` carries a value together with its gradient and (optionally)
its Hessian with respect to ``n`` seeded input directions.  With the Hessian
omitted it behaves as a multi-directional dual number; with it, as a
hyper-dual number seeded over every direction pair at once.  The value part
may be real or complex, so the same model code also runs under the complex
step.
"""

from __future__ import annotations

import cmath
import math

import numpy as np


class Jet:
    __slots__ = ("val", "grad", "hess")
    __array_priority__ = 1000  # keep numpy scalars from hijacking binary ops

    def __init__(self, val, grad, hess=None):
        self.val = val
        self.grad = grad
        self.hess = hess

    # -- construction -----------------------------------------------------
    @classmethod
    def variable(cls, val, index: int, n: int, order: int = 2, dtype=None):
        """Independent variable seeded along direction ``index`` of ``n``."""
        if dtype is None:
            dtype = complex if isinstance(val, complex) else float
        grad = np.zeros(n, dtype=dtype)
        grad[index] = 1.0
        hess = np.zeros((n, n), dtype=dtype) if order >= 2 else None
        return cls(val, grad, hess)

    @classmethod
    def constant(cls, val, n: int, order: int = 2, dtype=float):
        hess = np.zeros((n, n), dtype=dtype) if order >= 2 else None
        return cls(val, np.zeros(n, dtype=dtype), hess)

    @property
    def order(self) -> int:
        return 1 if self.hess is None else 2

    @property
    def real(self):
        return self.val.real

    def __repr__(self) -> str:
        return f"Jet(val={self.val!r}, order={self.order}, n={self.grad.shape[0]})"

    # -- helpers ----------------------------------------------------------
    def _chain(self, f0, f1, f2):
        """Compose with a scalar function given its value and two derivatives."""
        grad = f1 * self.grad
        hess = None
        if self.hess is not None:
            hess = f1 * self.hess + f2 * np.multiply.outer(self.grad, self.grad)
        return Jet(f0, grad, hess)

    # -- arithmetic -------------------------------------------------------
    def __neg__(self):
        return Jet(-self.val, -self.grad, None if self.hess is None else -self.hess)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Jet):
            hess = None if self.hess is None else self.hess + other.hess
            return Jet(self.val + other.val, self.grad + other.grad, hess)
        return Jet(self.val + other, self.grad, self.hess)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            hess = None if self.hess is None else self.hess - other.hess
            return Jet(self.val - other.val, self.grad - other.grad, hess)
        return Jet(self.val - other, self.grad, self.hess)

    def __rsub__(self, other):
        return Jet(other - self.val, -self.grad, None if self.hess is None else -self.hess)

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self, other
            grad = a.val * b.grad + b.val * a.grad
            hess = None
            if a.hess is not None:
                cross = np.multiply.outer(a.grad, b.grad)
                hess = a.val * b.hess + b.val * a.hess + cross + cross.T
            return Jet(a.val * b.val, grad, hess)
        return Jet(
            self.val * other,
            self.grad * other,
            None if self.hess is None else self.hess * other,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other._reciprocal()
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return self._reciprocal() * other

    def _reciprocal(self):
        inv = 1.0 / self.val
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __pow__(self, k):
        if k == 2:
            return self * self
        if not isinstance(k, (int, float)):
            raise TypeError("Jet powers are limited to real constant exponents")
        v = self.val
        return self._chain(v**k, k * v ** (k - 1), k * (k - 1) * v ** (k - 2))

    # -- elementary functions --------------------------------------------
    def sqrt(self):
        r = cmath.sqrt(self.val) if isinstance(self.val, complex) else math.sqrt(self.val)
        return self._chain(r, 0.5 / r, -0.25 / (r * r * r))

    def exp(self):
        e = cmath.exp(self.val) if isinstance(self.val, complex) else math.exp(self.val)
        return self._chain(e, e, e)

    # -- comparisons act on the real part --------------------------------
    def __lt__(self, other):
        return self.real < _real(other)

    def __le__(self, other):
        return self.real <= _real(other)

    def __gt__(self, other):
        return self.real > _real(other)

    def __ge__(self, other):
        return self.real >= _real(other)


def _real(x):
    if isinstance(x, Jet):
        return x.real
    return x.real if isinstance(x, complex) else x


def seed(values, order: int = 2, offset: int = 0, n: int | None = None):
    """Seed a sequence of scalars as independent jet variables.

    Returns a list of jets whose directions start at ``offset``; ``n`` is the
    total direction count (defaults to ``offset + len(values)``).
    """
    values = list(values)
    n = offset + len(values) if n is None else n
    dtype = complex if any(isinstance(v, complex) for v in values) else float
    return [
        Jet.variable(v, offset + i, n, order=order, dtype=dtype) for i, v in enumerate(values)
    ]


def values(jets) -> np.ndarray:
    return np.array([j.val if isinstance(j, Jet) else j for j in jets])


def gradients(jets, n: int) -> np.ndarray:
    """Stack jet gradients into a Jacobian; plain scalars give zero rows."""
    rows = [j.grad if isinstance(j, Jet) else np.zeros(n) for j in jets]
    return np.vstack(rows) if rows else np.zeros((0, n))


def hessians(jets, n: int) -> np.ndarray:
    mats = [
        j.hess if isinstance(j, Jet) and j.hess is not None else np.zeros((n, n)) for j in jets
    ]
    return np.stack(mats) if mats else np.zeros((0, n, n))
