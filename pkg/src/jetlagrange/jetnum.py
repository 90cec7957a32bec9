"""Truncated multivariate Taylor arithmetic ("jets").

A jet over ``num_vars`` base variables truncated at ``order`` stores the Taylor
coefficients of a function at a point, one per multi-index of total degree
``<= order``.  Coefficients are *Taylor* coefficients (derivative divided by the
multi-index factorial), which turns multiplication into a plain truncated
convolution.

Two layers live here:

* :class:`JetSpace` works on plain numpy arrays whose **last axis** is the
  coefficient axis.  Any leading axes are tensor indices or batch axes and
  broadcast like ordinary numpy arrays.  Everything geometric is built on this
  layer.
* :class:`JetScalar` is a small immutable value type over a single jet, with
  operator overloading, for interactive use and for tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, SingularPointError

MAX_ORDER = 3

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "sinh", "cosh")


def _multi_indices(num_vars: int, order: int) -> list[tuple[int, ...]]:
    out = []
    for degree in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(num_vars), degree):
            mi = [0] * num_vars
            for v in combo:
                mi[v] += 1
            out.append(tuple(mi))
    return out


class JetSpace:
    """Coefficient layout and arithmetic tables for jets of a fixed shape."""

    def __init__(self, num_vars: int, order: int):
        if num_vars < 1:
            raise ConfigurationError(f"num_vars must be >= 1, got {num_vars}")
        if not 0 <= order <= MAX_ORDER:
            raise ConfigurationError(f"order must be in 0..{MAX_ORDER}, got {order}")
        self.num_vars = num_vars
        self.order = order
        self.multi_indices = _multi_indices(num_vars, order)
        self.index = {mi: k for k, mi in enumerate(self.multi_indices)}
        self.size = len(self.multi_indices)
        self.degrees = np.array([sum(mi) for mi in self.multi_indices])
        self.factorials = np.array(
            [math.prod(math.factorial(m) for m in mi) for mi in self.multi_indices], dtype=float
        )

        pa, pb, pc = [], [], []
        for a, ma in enumerate(self.multi_indices):
            for b, mb in enumerate(self.multi_indices):
                mc = tuple(x + y for x, y in zip(ma, mb))
                c = self.index.get(mc)
                if c is not None:
                    pa.append(a)
                    pb.append(b)
                    pc.append(c)
        self._pa = np.array(pa)
        self._pb = np.array(pb)
        # product coefficients = (A[pa] * B[pb]) @ scatter
        self._scatter = np.zeros((len(pc), self.size))
        self._scatter[np.arange(len(pc)), pc] = 1.0

        # d/dz_v: out[m] = (m_v + 1) * A[m + e_v], zero on the top degree
        self._diff_src = np.zeros((num_vars, self.size), dtype=int)
        self._diff_fac = np.zeros((num_vars, self.size))
        for v in range(num_vars):
            for k, mi in enumerate(self.multi_indices):
                up = list(mi)
                up[v] += 1
                src = self.index.get(tuple(up))
                if src is not None:
                    self._diff_src[v, k] = src
                    self._diff_fac[v, k] = mi[v] + 1

    def __repr__(self) -> str:
        return f"JetSpace(num_vars={self.num_vars}, order={self.order})"

    # -- construction -------------------------------------------------------

    def unit_index(self, var: int) -> int:
        e = [0] * self.num_vars
        e[var] = 1
        return self.index[tuple(e)]

    def constant(self, value) -> np.ndarray:
        value = np.asarray(value, dtype=float)
        out = np.zeros(value.shape + (self.size,))
        out[..., 0] = value
        return out

    def variable(self, var: int, value) -> np.ndarray:
        if not 0 <= var < self.num_vars:
            raise ConfigurationError(f"variable index {var} out of range for {self.num_vars} variables")
        out = self.constant(value)
        if self.order >= 1:
            out[..., self.unit_index(var)] = 1.0
        return out

    # -- arithmetic ---------------------------------------------------------

    def mul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return (a[..., self._pa] * b[..., self._pb]) @ self._scatter

    def contract(self, subscripts: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Jet-valued ``einsum`` of two jet tensors, e.g. ``'ik,kj->ij'``."""
        lhs, out = subscripts.replace(" ", "").split("->")
        sa, sb = lhs.split(",")
        spec = f"...{sa}P,...{sb}P->...{out}P"
        return np.einsum(spec, a[..., self._pa], b[..., self._pb]) @ self._scatter

    def reciprocal(self, a: np.ndarray) -> np.ndarray:
        a0 = a[..., 0]
        if np.any(a0 == 0.0):
            raise SingularPointError("division by a jet with zero constant term",
                                     function="div", value=0.0)
        r = 1.0 / a0
        return self.compose(a, [r, -r**2, r**3, -r**4])

    def div(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.mul(a, self.reciprocal(b))

    def compose(self, a: np.ndarray, taylor: Sequence) -> np.ndarray:
        """f(a) given the univariate Taylor coefficients f^(k)(a0)/k! of f at a0."""
        delta = a.copy()
        delta[..., 0] = 0.0
        coeffs = [np.asarray(c, dtype=float) for c in taylor[: self.order + 1]]
        out = self.constant(coeffs[-1])
        for c in reversed(coeffs[:-1]):
            out = self.mul(out, delta)
            out[..., 0] += c
        return out

    def apply(self, fn: str, a: np.ndarray) -> np.ndarray:
        """Apply one of :data:`FUNCTIONS` with domain checking on the constant term."""
        x = a[..., 0]
        if fn == "sin":
            s, c = np.sin(x), np.cos(x)
            taylor = [s, c, -s / 2, -c / 6]
        elif fn == "cos":
            s, c = np.sin(x), np.cos(x)
            taylor = [c, -s, -c / 2, s / 6]
        elif fn == "tan":
            c = np.cos(x)
            if np.any(np.abs(c) < 1e-12):
                raise SingularPointError(f"tan evaluated at a pole (value {_worst(x, np.abs(c) < 1e-12)})",
                                         function="tan", value=_worst(x, np.abs(c) < 1e-12))
            t = np.tan(x)
            sec2 = 1.0 + t * t
            taylor = [t, sec2, t * sec2, sec2 * (1.0 + 3.0 * t * t) / 3.0]
        elif fn == "exp":
            e = np.exp(x)
            taylor = [e, e, e / 2, e / 6]
        elif fn == "log":
            if np.any(x <= 0):
                raise SingularPointError(f"log of non-positive value {_worst(x, x <= 0)}",
                                         function="log", value=_worst(x, x <= 0))
            r = 1.0 / x
            taylor = [np.log(x), r, -r**2 / 2, r**3 / 3]
        elif fn == "sqrt":
            if np.any(x <= 0):
                raise SingularPointError(f"sqrt of non-positive value {_worst(x, x <= 0)}",
                                         function="sqrt", value=_worst(x, x <= 0))
            r = np.sqrt(x)
            taylor = [r, 0.5 / r, -0.125 / r**3, 0.0625 / r**5]
        elif fn == "sinh":
            s, c = np.sinh(x), np.cosh(x)
            taylor = [s, c, s / 2, c / 6]
        elif fn == "cosh":
            s, c = np.sinh(x), np.cosh(x)
            taylor = [c, s, c / 2, s / 6]
        else:
            raise ConfigurationError(f"unknown function '{fn}'")
        return self.compose(a, taylor)

    def power(self, a: np.ndarray, exponent: float) -> np.ndarray:
        """a**exponent for a constant exponent. Integer exponents allow negative bases."""
        if float(exponent).is_integer():
            k = int(exponent)
            if k < 0:
                return self.reciprocal(self.power(a, -k))
            out = self.constant(np.ones(a.shape[:-1]))
            base = a
            while k:
                if k & 1:
                    out = self.mul(out, base)
                k >>= 1
                if k:
                    base = self.mul(base, base)
            return out
        x = a[..., 0]
        if np.any(x <= 0):
            raise SingularPointError(
                f"non-integer power {exponent} of non-positive value {_worst(x, x <= 0)}",
                function="pow", value=_worst(x, x <= 0))
        c = exponent
        taylor = [x**c, c * x ** (c - 1), c * (c - 1) / 2 * x ** (c - 2),
                  c * (c - 1) * (c - 2) / 6 * x ** (c - 3)]
        return self.compose(a, taylor)

    def inv(self, m: np.ndarray) -> np.ndarray:
        """Inverse of a jet-valued square matrix with shape (..., d, d, K)."""
        m0 = m[..., 0]
        cond = np.linalg.cond(m0)
        if np.any(~np.isfinite(cond)) or np.any(cond > 1e14):
            raise SingularPointError("singular matrix", function="inv")
        m0inv = np.linalg.inv(m0)
        delta = m.copy()
        delta[..., 0] = 0.0
        # (M0 + D)^-1 = sum_k (-M0^-1 D)^k M0^-1, exact because D is nilpotent
        x = -np.einsum("...ik,...kjP->...ijP", m0inv, delta)
        term = self.constant(m0inv)
        total = term.copy()
        for _ in range(self.order):
            term = self.contract("ik,kj->ij", x, term)
            total += term
        return total

    # -- derivatives --------------------------------------------------------

    def diff(self, a: np.ndarray, var: int) -> np.ndarray:
        """Partial derivative jet; one order of accuracy is lost."""
        return a[..., self._diff_src[var]] * self._diff_fac[var]

    def gradient(self, a: np.ndarray, variables: Sequence[int]) -> np.ndarray:
        """Stack of partials with the derivative index appended before the coefficient axis."""
        return np.stack([self.diff(a, v) for v in variables], axis=-2)

    def partial(self, a: np.ndarray, multi_index: Sequence[int]) -> np.ndarray:
        mi = tuple(multi_index)
        if len(mi) != self.num_vars or any(m < 0 for m in mi):
            raise ConfigurationError(f"bad multi-index {mi} for {self.num_vars} variables")
        k = self.index.get(mi)
        if k is None:
            raise ConfigurationError(f"multi-index {mi} exceeds truncation order {self.order}")
        return a[..., k] * self.factorials[k]


def _worst(x: np.ndarray, mask: np.ndarray) -> float:
    return float(np.asarray(x)[mask].flat[0])


@lru_cache(maxsize=None)
def jet_space(num_vars: int, order: int) -> JetSpace:
    return JetSpace(num_vars, order)


@dataclass(frozen=True, eq=False)
class JetScalar:
    """A single truncated Taylor value.

    ``coeffs`` is indexed by the ranked multi-indices of ``space``; use
    :meth:`coefficient` / :meth:`partial` rather than raw positions.
    """

    space: JetSpace
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (self.space.size,):
            raise ConfigurationError(f"expected {self.space.size} coefficients, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def num_vars(self) -> int:
        return self.space.num_vars

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def value(self) -> float:
        return float(self.coeffs[0])

    @classmethod
    def constant(cls, value: float, num_vars: int, order: int) -> "JetScalar":
        space = jet_space(num_vars, order)
        return cls(space, space.constant(value))

    def coefficient(self, multi_index: Sequence[int]) -> float:
        return float(self.coeffs[self.space.index[tuple(multi_index)]])

    def partial(self, multi_index: Sequence[int]) -> float:
        return float(self.space.partial(self.coeffs, multi_index))

    def _lift(self, other) -> "JetScalar":
        if isinstance(other, JetScalar):
            if other.space is not self.space:
                raise ConfigurationError("jets live in different spaces "
                                         f"({self.space} vs {other.space})")
            return other
        return JetScalar(self.space, self.space.constant(float(other)))

    def __add__(self, other):
        return JetScalar(self.space, self.coeffs + self._lift(other).coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        return JetScalar(self.space, self.coeffs - self._lift(other).coeffs)

    def __rsub__(self, other):
        return JetScalar(self.space, self._lift(other).coeffs - self.coeffs)

    def __neg__(self):
        return JetScalar(self.space, -self.coeffs)

    def __mul__(self, other):
        return JetScalar(self.space, self.space.mul(self.coeffs, self._lift(other).coeffs))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return JetScalar(self.space, self.space.div(self.coeffs, self._lift(other).coeffs))

    def __rtruediv__(self, other):
        return JetScalar(self.space, self.space.div(self._lift(other).coeffs, self.coeffs))

    def __pow__(self, exponent: float):
        return JetScalar(self.space, self.space.power(self.coeffs, float(exponent)))

    def __repr__(self) -> str:
        terms = ", ".join(f"{mi}: {c:.6g}" for mi, c in zip(self.space.multi_indices, self.coeffs) if c)
        return f"JetScalar({{{terms}}})"


def seed_variable(var_index: int, value: float, num_vars: int, order: int) -> JetScalar:
    """The coordinate function z_{var_index} expanded at ``value``."""
    if not 0 <= var_index < num_vars:
        raise ConfigurationError(f"var_index {var_index} out of range for {num_vars} variables")
    if not 0 <= order <= MAX_ORDER:
        raise ConfigurationError(f"order must be in 0..{MAX_ORDER}, got {order}")
    space = jet_space(num_vars, order)
    return JetScalar(space, space.variable(var_index, value))


def jet_binary(op: str, a: JetScalar, b: JetScalar) -> JetScalar:
    if a.space is not b.space:
        raise ConfigurationError("jet_binary operands must share num_vars and order")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ConfigurationError(f"unknown jet operation '{op}'")


def jet_apply(fn: str, a: JetScalar, exponent: float | None = None) -> JetScalar:
    if fn == "pow_const":
        if exponent is None:
            raise ConfigurationError("pow_const needs an exponent")
        return a ** exponent
    return JetScalar(a.space, a.space.apply(fn, a.coeffs))


def extract_partial(a: JetScalar, multi_index: Sequence[int]) -> float:
    return a.partial(multi_index)
