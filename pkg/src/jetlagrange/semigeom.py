"""Levi-Civita geometry of a single semi-Riemannian metric, computed with jets.

Conventions::

    Gamma[k, i, j]   = Gamma^k_{ij}
    R[l, i, j, k]    = R^l_{ijk} = d_j Gamma^l_{ik} - d_k Gamma^l_{ij}
                                   + Gamma^l_{jm} Gamma^m_{ik} - Gamma^l_{km} Gamma^m_{ij}
    Ric[i, j]        = R^m_{imj}

which gives the unit 2-sphere scalar curvature +2.

:class:`MetricJets` is the working object: a jet-valued metric over a subset
of the jet variables (its coordinates).  Derived quantities are computed
lazily; each loses one order of jet accuracy per derivative, so with order-3
jets the Christoffel symbols are known to order 2, curvature to order 1 and
the divergence of the Einstein tensor at the point itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import jetnum
from .errors import SingularMetricError, SingularPointError
from .jetnum import JetSpace
from .modelspec import ExprNode, evaluate

DET_TOL = 1e-10


def evaluate_matrix(rows: Sequence[Sequence[ExprNode]], space: JetSpace, env: dict,
                    batch_shape: tuple[int, ...]) -> np.ndarray:
    """Jet array of shape batch + (len(rows), len(rows[0]), K)."""
    out = np.empty(batch_shape + (len(rows), len(rows[0]), space.size))
    for i, row in enumerate(rows):
        for j, node in enumerate(row):
            out[..., i, j, :] = evaluate(node, space, env)
    return out


class MetricJets:
    """Jet-valued metric ``g`` (shape (..., d, d, K)) over jet variables ``coords``."""

    def __init__(self, space: JetSpace, g: np.ndarray, coords: Sequence[int]):
        self.space = space
        self.g = g
        self.coords = list(coords)
        self.dim = len(self.coords)
        det = np.linalg.det(g[..., 0])
        if np.any(~(np.abs(det) > DET_TOL)):
            bad = float(np.asarray(det).flat[np.flatnonzero(~(np.abs(det) > DET_TOL))[0]])
            raise SingularMetricError(f"metric is degenerate at the point (det={bad:.3g})",
                                      function="metric", value=bad)

    def _require(self, order: int, what: str):
        if self.space.order < order:
            raise ValueError(f"{what} needs jets of order >= {order}, have {self.space.order}")

    @cached_property
    def inverse(self) -> np.ndarray:
        try:
            return self.space.inv(self.g)
        except SingularPointError as exc:
            raise SingularMetricError(f"metric is singular: {exc}") from None

    @cached_property
    def dg(self) -> np.ndarray:
        """dg[i, j, a] = d_a g_ij."""
        return self.space.gradient(self.g, self.coords)

    @cached_property
    def christoffel(self) -> np.ndarray:
        self._require(1, "Christoffel symbols")
        dg = self.dg
        # bracket[l, i, j] = d_i g_lj + d_j g_li - d_l g_ij
        bracket = (np.einsum("...ljiP->...lijP", dg) + dg
                   - np.einsum("...ijlP->...lijP", dg))
        return 0.5 * self.space.contract("kl,lij->kij", self.inverse, bracket)

    @cached_property
    def dchristoffel(self) -> np.ndarray:
        """dchristoffel[k, i, j, a] = d_a Gamma^k_ij."""
        return self.space.gradient(self.christoffel, self.coords)

    @cached_property
    def riemann(self) -> np.ndarray:
        self._require(2, "curvature")
        gam, dgam = self.christoffel, self.dchristoffel
        # d_j Gamma^l_ik -> [l, i, j, k]; d_k Gamma^l_ij -> [l, i, j, k]
        term1 = np.swapaxes(dgam, -3, -2)
        term2 = dgam
        quad = (self.space.contract("ljm,mik->lijk", gam, gam)
                - self.space.contract("lkm,mij->lijk", gam, gam))
        return term1 - term2 + quad

    @cached_property
    def ricci(self) -> np.ndarray:
        return np.einsum("...mimjP->...ijP", self.riemann)

    @cached_property
    def scalar(self) -> np.ndarray:
        return self.space.contract("ij,ij->", self.inverse, self.ricci)

    @cached_property
    def einstein(self) -> np.ndarray:
        return self.ricci - 0.5 * self.space.mul(self.scalar[..., None, None, :], self.g)

    @cached_property
    def mixed_ricci(self) -> np.ndarray:
        """Ric^m_j = g^{mk} Ric_kj."""
        return self.space.contract("mk,kj->mj", self.inverse, self.ricci)

    def covariant_divergence(self, tensor: np.ndarray, derivs: np.ndarray | None = None) -> np.ndarray:
        """nabla_m T^m_j for a jet-valued (1,1) tensor T[m, j] (order-0 values).

        ``derivs[m, j, a]`` may supply d_a T^m_j when T also depends on
        variables outside this metric's coordinates.
        """
        if derivs is None:
            derivs = self.space.gradient(tensor, self.coords)
        gam = self.christoffel
        div = np.einsum("...mjmP->...jP", derivs)
        div = div + self.space.contract("mml,lj->j", gam, tensor)
        div = div - self.space.contract("lmj,ml->j", gam, tensor)
        return div[..., 0]

    def contracted_bianchi(self) -> np.ndarray:
        self._require(3, "contracted Bianchi residual")
        e_mixed = self.mixed_ricci - 0.5 * self.scalar[..., None, None, :] * np.eye(self.dim)[:, :, None]
        return self.covariant_divergence(e_mixed)

    def metric_compatibility(self) -> np.ndarray:
        """nabla_k g_ij (values), shape (..., d, d, d) indexed [i, j, k]."""
        gam = self.christoffel[..., 0]
        g = self.g[..., 0]
        dg = self.dg[..., 0]
        return (dg - np.einsum("...mki,...mj->...ijk", gam, g)
                - np.einsum("...mkj,...im->...ijk", gam, g))

    def first_bianchi(self) -> np.ndarray:
        r = self.riemann[..., 0]
        return r + np.einsum("...ljki->...lijk", r) + np.einsum("...lkij->...lijk", r)


def value(a: np.ndarray) -> np.ndarray:
    return a[..., 0]


def _metric_from_exprs(metric: Sequence[Sequence[ExprNode]], point, var: str, order: int) -> MetricJets:
    pt = np.atleast_1d(np.asarray(point, dtype=float))
    dim = len(metric)
    if pt.shape[-1] != dim:
        raise ValueError(f"point has {pt.shape[-1]} coordinates, metric is {dim}-dimensional")
    space = jetnum.jet_space(dim, order)
    env = {f"{var}{k + 1}": space.variable(k, pt[..., k]) for k in range(dim)}
    return MetricJets(space, evaluate_matrix(metric, space, env, pt.shape[:-1]), range(dim))


def _all_partials(space: JetSpace, a: np.ndarray, upto: int) -> list[np.ndarray]:
    """[value, first partials (..., d), second partials (..., d, d), ...]."""
    out = [a[..., 0]]
    cur = a
    for _ in range(upto):
        cur = space.gradient(cur, range(space.num_vars))
        out.append(cur[..., 0])
    return out


@dataclass(frozen=True)
class MetricEval:
    dim: int
    point: np.ndarray
    components: np.ndarray
    inverse: np.ndarray
    partials: tuple[np.ndarray, ...]  # first, second, third partials; derivative axes last


@dataclass(frozen=True)
class ChristoffelEval:
    values: np.ndarray  # [k, i, j]
    first_partials: np.ndarray  # [k, i, j, a]
    second_partials: np.ndarray  # [k, i, j, a, b]


@dataclass(frozen=True)
class CurvatureEval:
    riemann: np.ndarray  # [l, i, j, k]
    ricci: np.ndarray
    scalar: float | np.ndarray
    einstein: np.ndarray


def metric_eval(metric, point, var: str = "x") -> MetricEval:
    mj = _metric_from_exprs(metric, point, var, 3)
    parts = _all_partials(mj.space, mj.g, 3)
    return MetricEval(mj.dim, np.asarray(point, dtype=float), parts[0], value(mj.inverse), tuple(parts[1:]))


def christoffel(metric, point, var: str = "x") -> ChristoffelEval:
    """Christoffel symbols of ``metric`` (expressions in var1..vard) and their partials."""
    mj = _metric_from_exprs(metric, point, var, 3)
    vals, first, second = _all_partials(mj.space, mj.christoffel, 2)
    return ChristoffelEval(vals, first, second)


def curvature_from_jets(mj: MetricJets) -> CurvatureEval:
    return CurvatureEval(value(mj.riemann), value(mj.ricci), value(mj.scalar), value(mj.einstein))


def curvature(metric, point, var: str = "x") -> CurvatureEval:
    return curvature_from_jets(_metric_from_exprs(metric, point, var, 3))


def contracted_bianchi_residual(metric, point, var: str = "x") -> np.ndarray:
    """nabla_m (Ric^m_j - scalar/2 delta^m_j) for each j; vanishes identically."""
    return _metric_from_exprs(metric, point, var, 3).contracted_bianchi()


def pullback_scalar(metric, coordinate_map: Sequence[ExprNode], point, var: str = "x") -> float:
    """Scalar curvature of the pulled-back metric phi^* g at ``point`` (new coordinates).

    ``coordinate_map[i]`` expresses old coordinate i in terms of the new
    coordinates, which use the same variable names var1..vard.
    """
    y = np.asarray(point, dtype=float)
    dim = len(metric)
    space = jetnum.jet_space(dim, 3)
    env_new = {f"{var}{k + 1}": space.variable(k, y[..., k]) for k in range(dim)}
    batch = y.shape[:-1]
    phi = np.stack([np.broadcast_to(evaluate(e, space, env_new), batch + (space.size,))
                    for e in coordinate_map], axis=-2)
    jac = space.gradient(phi, range(dim))  # jac[i, a] = d phi^i / d y^a
    if np.any(np.abs(np.linalg.det(jac[..., 0])) < DET_TOL):
        raise SingularMetricError("coordinate map has a degenerate Jacobian at the point")
    env_old = {f"{var}{k + 1}": phi[..., k, :] for k in range(dim)}
    g_old = evaluate_matrix(metric, space, env_old, batch)
    g_new = space.contract("ia,ij->aj", jac, g_old)
    g_new = space.contract("aj,jb->ab", g_new, jac)
    return value(MetricJets(space, g_new, range(dim)).scalar)


def scalar_invariance_check(metric, coordinate_map: Sequence[ExprNode], point, var: str = "x") -> float:
    """|scalar(g, phi(y)) - scalar(phi^* g, y)| with ``point`` = y in the new coordinates."""
    y = np.asarray(point, dtype=float)
    dim = len(metric)
    image = np.array([evaluate(e, jetnum.jet_space(dim, 0),
                               {f"{var}{k + 1}": np.array([y[k]]) for k in range(dim)})[0]
                      for e in coordinate_map])
    original = value(_metric_from_exprs(metric, image, var, 3).scalar)
    return float(abs(original - pullback_scalar(metric, coordinate_map, y, var)))
