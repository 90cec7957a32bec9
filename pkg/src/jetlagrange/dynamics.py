"""Extremals of the energy action: harmonic-map residuals, trajectories, action values.

For p = 1 the harmonic map equations reduce to the second-order system
``x'' = -2 (H + G)(x, x')`` which :func:`integrate_extremal` solves with the
classical fixed-step Runge-Kutta scheme.  For any p, :class:`DiscreteMap`
holds a map T -> M sampled on a uniform box grid, and the residual and the
action are evaluated on it with finite differences and trapezoidal
quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import jetnum
from .errors import ConfigurationError, SingularMetricError, SingularPointError
from .jetgeometry import FieldJets, JetPoint, _spray_values, lagrangian_values, spray
from .modelspec import ModelDef, evaluate, is_constant, is_zero, metric_values

MIN_NODES = 5


# -- p = 1 right-hand side ------------------------------------------------------------


def _require_single_time(model: ModelDef):
    if model.p != 1:
        raise ConfigurationError(f"trajectories need a single time parameter (p = 1), model has p = {model.p}")


def harmonic_rhs(model: ModelDef, pt: JetPoint) -> np.ndarray:
    """Acceleration x''^i = -2 (H + G)^(i)_(1)1 of the harmonic map equations for p = 1."""
    _require_single_time(model)
    s = spray(model, pt)
    return -2.0 * (s.H[..., 0, 0] + s.G[..., 0, 0])


class _SprayKernel:
    """Order-one evaluation of the p = 1 acceleration at a single point.

    Skips the generic machinery (lazy tensors, jet matrix inverse) so the
    integrator can afford tens of thousands of evaluations.
    """

    def __init__(self, model: ModelDef):
        _require_single_time(model)
        self.model = model
        self.n = n = model.n
        self.space = jetnum.jet_space(1 + n, 1)
        self.names = model.variable_names
        self.g_entries = [(i, j, model.g[i][j]) for i in range(n) for j in range(i, n)
                          if not is_zero(model.g[i][j])]
        self.u_entries = [(i, model.U[0][i]) for i in range(n) if not is_zero(model.U[0][i])]
        self.F = None if is_zero(model.F) else model.F
        self.t_index = self.space.unit_index(0)
        self.x_index = [self.space.unit_index(1 + i) for i in range(n)]
        self._seeds = np.stack([self.space.variable(k, 0.0) for k in range(1 + n)])
        constant = all(is_constant(e) for rows in (model.h, model.g) for row in rows for e in row)
        self._static = self._metric(self._env(0.0, np.zeros(n)), 0.0) if constant else None

    def _env(self, t: float, x: np.ndarray) -> dict:
        seeds = self._seeds.copy()
        seeds[0, 0] = t
        seeds[1:, 0] = x
        return dict(zip(self.names, seeds))

    def _metric(self, env: dict, t: float):
        """(h_11, H^1_11, g^-1, gamma) at the point."""
        n, sp = self.n, self.space
        h = evaluate(self.model.h[0][0], sp, env)
        g = np.zeros((n, n, sp.size))
        for i, j, e in self.g_entries:
            g[i, j] = g[j, i] = evaluate(e, sp, env)
        g0, dg = g[..., 0], g[..., self.x_index]
        if not abs(np.linalg.det(g0)) > 1e-10 or not abs(h[0]) > 1e-10:
            raise SingularMetricError(f"metric is degenerate at t={t:.17g}", function="metric")
        ginv = np.linalg.inv(g0)
        # gamma^k_ij = 1/2 g^kl (d_i g_lj + d_j g_li - d_l g_ij), dg[i, j, l] = d_l g_ij
        bracket = np.einsum("lji->lij", dg) + dg - np.einsum("ijl->lij", dg)
        gamma = 0.5 * np.einsum("kl,lij->kij", ginv, bracket)
        return h[0], 0.5 * h[self.t_index] / h[0], ginv, gamma

    def __call__(self, t: float, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        n, sp = self.n, self.space
        env = self._env(t, x)
        h0, hc, ginv, gamma = self._static or self._metric(env, t)
        it, ix = self.t_index, self.x_index
        force = np.zeros(n)
        if self.u_entries:
            U = np.zeros((n, sp.size))
            for i, e in self.u_entries:
                U[i] = evaluate(e, sp, env)
            dU = U[:, ix]
            force += (dU - dU.T) @ v + U[:, it] + hc * U[:, 0]
        if self.F is not None:
            force -= evaluate(self.F, sp, env)[ix]
        G = 0.5 * gamma @ v @ v + h0 * (ginv @ force) / 4.0
        return -2.0 * (G - 0.5 * hc * v)


# -- trajectories ---------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray  # (steps + 1,)
    x: np.ndarray  # (steps + 1, n)
    v: np.ndarray  # (steps + 1, n)
    steps: int
    energy_drift: float | None  # max |g_ij v^i v^j - initial| when that quantity is conserved

    def to_table(self) -> str:
        return _format_table(np.column_stack([self.t, self.x, self.v]),
                             "t " + " ".join(f"x{i + 1}" for i in range(self.x.shape[1]))
                             + " " + " ".join(f"v{i + 1}" for i in range(self.x.shape[1])))

    def as_map(self) -> "DiscreteMap":
        return DiscreteMap((self.t,), self.x)


def integrate_extremal(model: ModelDef, x0, v0, t_span: tuple[float, float], steps: int) -> Trajectory:
    """Classical RK4 for (x, v)' = (v, harmonic_rhs) with a fixed step."""
    _require_single_time(model)
    if steps < 1:
        raise ConfigurationError("steps must be >= 1")
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ConfigurationError("t_span must be increasing")
    n = model.n
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if x0.shape != (n,) or v0.shape != (n,):
        raise ConfigurationError(f"x0 and v0 need {n} components")
    accel = _SprayKernel(model)
    dt = (t1 - t0) / steps
    ts = t0 + dt * np.arange(steps + 1)
    xs = np.empty((steps + 1, n))
    vs = np.empty((steps + 1, n))
    x, v = x0.copy(), v0.copy()
    xs[0], vs[0] = x, v
    for k in range(steps):
        t = ts[k]
        try:
            a1 = accel(t, x, v)
            x2, v2 = x + 0.5 * dt * v, v + 0.5 * dt * a1
            a2 = accel(t + 0.5 * dt, x2, v2)
            x3, v3 = x + 0.5 * dt * v2, v + 0.5 * dt * a2
            a3 = accel(t + 0.5 * dt, x3, v3)
            x4, v4 = x + dt * v3, v + dt * a3
            a4 = accel(t + dt, x4, v4)
        except SingularPointError as exc:
            raise SingularMetricError(f"integration stopped at t={t:.17g}: {exc}",
                                      function=exc.function, value=t) from None
        x = x + dt / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4)
        v = v + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        xs[k + 1], vs[k + 1] = x, v
    drift = None
    if model.potential_is_zero() and model.temporal_metric_is_constant():
        g = metric_values(model.g, [f"x{i + 1}" for i in range(n)], xs)
        energy = np.einsum("kij,ki,kj->k", g, vs, vs)
        drift = float(np.abs(energy - energy[0]).max())
    return Trajectory(ts, xs, vs, steps, drift)


# -- discrete maps --------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteMap:
    """A map T -> M sampled on a uniform box grid.

    ``axes[a]`` holds the node coordinates along t^(a+1); ``values`` has shape
    ``(len(axes[0]), ..., len(axes[p-1]), n)``.
    """

    axes: tuple[np.ndarray, ...]
    values: np.ndarray

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", values)
        counts = tuple(len(a) for a in axes)
        if values.ndim != len(axes) + 1 or values.shape[:-1] != counts:
            raise ConfigurationError(f"values of shape {values.shape} do not fit grid {counts} + (n,)")
        for k, a in enumerate(axes):
            if len(a) < MIN_NODES:
                raise ConfigurationError(f"axis t{k + 1} has {len(a)} nodes; at least {MIN_NODES} required")
            step = np.diff(a)
            if not np.all(step > 0) or not np.allclose(step, step[0], rtol=1e-9, atol=0.0):
                raise ConfigurationError(f"axis t{k + 1} must be uniformly spaced and increasing")

    @classmethod
    def from_function(cls, axes: Sequence, fn: Callable[[np.ndarray], np.ndarray]) -> "DiscreteMap":
        """Sample ``fn`` (mapping t of shape (..., p) to x of shape (..., n)) on the grid."""
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        return cls(axes, np.asarray(fn(_grid(axes)), dtype=float))

    @property
    def p(self) -> int:
        return len(self.axes)

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(float(a[1] - a[0]) for a in self.axes)

    @property
    def nodes(self) -> np.ndarray:
        """Grid coordinates, shape counts + (p,)."""
        return _grid(self.axes)

    def first_derivatives(self) -> np.ndarray:
        """x^i_alpha at every node, shape counts + (p, n); second-order accurate."""
        grads = [np.gradient(self.values, h, axis=k, edge_order=2) for k, h in enumerate(self.spacing)]
        return np.stack(grads, axis=-2)

    def second_derivatives(self) -> np.ndarray:
        """x^i_{alpha beta} on interior nodes, shape (counts - 2) + (p, p, n)."""
        f, p, hs = self.values, self.p, self.spacing
        inner = tuple(slice(1, -1) for _ in range(p))
        out = np.empty(tuple(c - 2 for c in f.shape[:-1]) + (p, p, self.n))

        def shifted(offsets):
            return f[tuple(slice(1 + o, f.shape[k] - 1 + o) for k, o in enumerate(offsets))]

        for a in range(p):
            ea = [0] * p
            ea[a] = 1
            minus = [-o for o in ea]
            out[..., a, a, :] = (shifted(ea) - 2.0 * f[inner] + shifted(minus)) / hs[a] ** 2
            for b in range(a + 1, p):
                def off(sa, sb):
                    o = [0] * p
                    o[a], o[b] = sa, sb
                    return shifted(o)
                mixed = (off(1, 1) - off(1, -1) - off(-1, 1) + off(-1, -1)) / (4.0 * hs[a] * hs[b])
                out[..., a, b, :] = out[..., b, a, :] = mixed
        return out

    def to_table(self) -> str:
        t = self.nodes.reshape(-1, self.p)
        x = self.values.reshape(-1, self.n)
        header = " ".join(f"t{a + 1}" for a in range(self.p)) + " " + " ".join(f"x{i + 1}" for i in range(self.n))
        return _format_table(np.column_stack([t, x]), header)

    @classmethod
    def from_table(cls, text: str, p: int) -> "DiscreteMap":
        """Parse whitespace-separated rows ``t1..tp x1..xn``; '#' starts a comment."""
        data = _parse_table(text)
        if data.shape[1] <= p:
            raise ConfigurationError(f"map table needs more than {p} columns, found {data.shape[1]}")
        t, x = data[:, :p], data[:, p:]
        axes = tuple(np.unique(t[:, a]) for a in range(p))
        counts = tuple(len(a) for a in axes)
        if int(np.prod(counts)) != len(data):
            raise ConfigurationError(f"map table has {len(data)} rows; a full {counts} grid needs {int(np.prod(counts))}")
        order = np.lexsort(t.T[::-1])
        t, x = t[order], x[order]
        if not np.allclose(t, _grid(axes).reshape(-1, p)):
            raise ConfigurationError("map table rows do not form a full box grid")
        return cls(axes, x.reshape(counts + (x.shape[1],)))

    @classmethod
    def read(cls, path, p: int) -> "DiscreteMap":
        return cls.from_table(Path(path).read_text(encoding="utf-8"), p)


def _grid(axes: Sequence[np.ndarray]) -> np.ndarray:
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _format_table(rows: np.ndarray, header: str) -> str:
    lines = ["# " + header]
    lines += [" ".join(repr(float(v)) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _parse_table(text: str) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError:
            raise ConfigurationError(f"line {lineno}: non-numeric entry in table") from None
        if len(rows[-1]) != len(rows[0]):
            raise ConfigurationError(f"line {lineno}: expected {len(rows[0])} columns, found {len(rows[-1])}")
    if not rows:
        raise ConfigurationError("table is empty")
    return np.array(rows)


# -- residual and action --------------------------------------------------------------


def _check_dims(model: ModelDef, f: DiscreteMap):
    if f.p != model.p or f.n != model.n:
        raise ConfigurationError(f"map is T^{f.p} -> R^{f.n}, model has p={model.p}, n={model.n}")


@dataclass(frozen=True)
class HarmonicResidual:
    values: np.ndarray  # interior nodes x (n,)
    max_abs: float


def harmonic_residual(model: ModelDef, f: DiscreteMap) -> HarmonicResidual:
    """h^{ab} (x^i_ab + 2 H^(i)_(a)b + 2 G^(i)_(a)b) at interior nodes."""
    _check_dims(model, f)
    inner = tuple(slice(1, -1) for _ in range(f.p))
    t = f.nodes[inner]
    x = f.values[inner]
    v = f.first_derivatives()[inner]
    fields = FieldJets(model, t, x, order=1)
    s = _spray_values(fields, v)
    total = np.einsum("...ab,...abi->...iab", np.ones_like(fields.h), f.second_derivatives()) + 2.0 * (s.H + s.G)
    res = np.einsum("...ab,...iab->...i", fields.hinv, total)
    return HarmonicResidual(res, float(np.abs(res).max()))


@dataclass(frozen=True)
class ActionEval:
    value: float
    rule: str
    error_estimate: float


def _trapezoid(values: np.ndarray, spacing: Sequence[float]) -> float:
    out = values
    for h in spacing:
        out = np.trapezoid(out, dx=h, axis=0)
    return float(out)


def lagrangian_density(model: ModelDef, f: DiscreteMap) -> np.ndarray:
    """L sqrt|det h| at every node of the grid."""
    _check_dims(model, f)
    fields = FieldJets(model, f.nodes, f.values, order=1)
    lag = lagrangian_values(fields, f.first_derivatives())
    return lag * np.sqrt(np.abs(np.linalg.det(fields.h)))


def action(model: ModelDef, f: DiscreteMap) -> ActionEval:
    """Energy action by tensor-product trapezoidal quadrature.

    The error estimate compares with the rule on every other node
    (Richardson, assuming O(h^2)); it is ``nan`` when no axis has an odd
    node count.
    """
    dens = lagrangian_density(model, f)
    fine = _trapezoid(dens, f.spacing)
    sub = tuple(slice(None, None, 2) if len(a) % 2 == 1 else slice(None) for a in f.axes)
    if all(s == slice(None) for s in sub):
        return ActionEval(fine, "trapezoid", float("nan"))
    coarse_h = [h * (2 if s.step == 2 else 1) for h, s in zip(f.spacing, sub)]
    coarse = _trapezoid(dens[sub], coarse_h)
    return ActionEval(fine, "trapezoid", abs(fine - coarse) / 3.0)


# -- variational check ----------------------------------------------------------------


@dataclass(frozen=True)
class VariationalCheck:
    eps: np.ndarray
    first_variation: np.ndarray  # [E(f + eps eta) - E(f - eps eta)] / (2 eps)
    order: float  # fitted slope of log|first variation| against log eps
    extremal: bool


def variational_check(model: ModelDef, f: DiscreteMap, perturbation: DiscreteMap,
                      eps_ladder: Sequence[float] = (1e-2, 1e-3, 1e-4), tol: float = 1e-5) -> VariationalCheck:
    """Symmetric difference quotients of the action along a boundary-vanishing perturbation.

    ``extremal`` is true when the quotient at the smallest step is below ``tol``.
    """
    _check_dims(model, f)
    eta = perturbation.values
    if eta.shape != f.values.shape:
        raise ConfigurationError("perturbation must live on the same grid as the map")
    for k in range(f.p):
        face = np.take(eta, [0, -1], axis=k)
        if np.any(np.abs(face) > 1e-14):
            raise ConfigurationError(f"perturbation does not vanish on the boundary (axis t{k + 1})")
    eps = np.asarray(eps_ladder, dtype=float)
    quotients = []
    for e in eps:
        plus = action(model, DiscreteMap(f.axes, f.values + e * eta)).value
        minus = action(model, DiscreteMap(f.axes, f.values - e * eta)).value
        quotients.append((plus - minus) / (2.0 * e))
    quotients = np.array(quotients)
    mag = np.maximum(np.abs(quotients), np.finfo(float).tiny)
    order = float(np.polyfit(np.log(eps), np.log(mag), 1)[0]) if len(eps) > 1 else float("nan")
    return VariationalCheck(eps, quotients, order, bool(np.abs(quotients[np.argmin(eps)]) < tol))
