"""Canonical geometry of an electrodynamic multi-time Lagrange space on J^1(T, M).

Array layout (0-based, batch axes first)::

    v[alpha, i]              x^i_alpha
    U[alpha, i]              U^(alpha)_(i)
    ucurl[alpha, i, j]       U^(alpha)_(i)j = d_j U^(alpha)_(i) - d_i U^(alpha)_(j)
    spray H, G  [i, alpha, beta]
    M [i, alpha, beta],  N [i, alpha, j]
    torsion  R_tt[m, mu, alpha, beta], R_tx[m, mu, alpha, j], R_xx[m, mu, i, j]

All fundamental fields depend on (t, x) only, so jets are taken over the p + n
base variables (t first, then x).  Velocities enter polynomially and are kept
as plain numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import jetnum
from .errors import ConfigurationError
from .modelspec import ModelDef, evaluate
from .semigeom import CurvatureEval, MetricJets, curvature_from_jets, evaluate_matrix

# Coefficient of the potential term in N^(i)_(alpha)j.
_N_POTENTIAL_FACTOR = 0.25


@dataclass(frozen=True)
class JetPoint:
    """A point (t^alpha, x^i, x^i_alpha) of J^1(T, M); arrays may carry leading batch axes."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray

    @classmethod
    def of(cls, model: ModelDef, t, x, v) -> "JetPoint":
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if v.ndim == x.ndim and model.p == 1:
            v = v[..., None, :]
        if t.shape[-1:] != (model.p,) or x.shape[-1:] != (model.n,) or v.shape[-2:] != (model.p, model.n):
            raise ConfigurationError(
                f"jet point dimensions do not match model (p={model.p}, n={model.n}): "
                f"t{t.shape}, x{x.shape}, v{v.shape}")
        return cls(t, x, v)

    @property
    def base(self) -> tuple[np.ndarray, np.ndarray]:
        return self.t, self.x


class FieldJets:
    """Jets of h, g, U, F and their Levi-Civita geometry at base point(s) (t, x)."""

    def __init__(self, model: ModelDef, t, x, order: int = 3):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        if t.shape[-1:] != (model.p,) or x.shape[-1:] != (model.n,):
            raise ConfigurationError(f"base point dimensions do not match model (p={model.p}, n={model.n})")
        p, n = model.p, model.n
        self.model = model
        self.p, self.n = p, n
        self.t, self.x = t, x
        self.batch = np.broadcast_shapes(t.shape[:-1], x.shape[:-1])
        self.space = space = jetnum.jet_space(p + n, order)
        env = {f"t{a + 1}": space.variable(a, np.broadcast_to(t[..., a], self.batch)) for a in range(p)}
        env.update({f"x{i + 1}": space.variable(p + i, np.broadcast_to(x[..., i], self.batch))
                    for i in range(n)})
        self.tvars = list(range(p))
        self.xvars = list(range(p, p + n))
        self.hj = MetricJets(space, evaluate_matrix(model.h, space, env, self.batch), self.tvars)
        self.gj = MetricJets(space, evaluate_matrix(model.g, space, env, self.batch), self.xvars)
        self.U = evaluate_matrix(model.U, space, env, self.batch)
        self.F = np.broadcast_to(evaluate(model.F, space, env), self.batch + (space.size,))

    @property
    def order(self) -> int:
        return self.space.order

    # values of frequently used objects
    @cached_property
    def h(self) -> np.ndarray:
        return self.hj.g[..., 0]

    @cached_property
    def hinv(self) -> np.ndarray:
        return self.hj.inverse[..., 0]

    @cached_property
    def g(self) -> np.ndarray:
        return self.gj.g[..., 0]

    @cached_property
    def ginv(self) -> np.ndarray:
        return self.gj.inverse[..., 0]

    @cached_property
    def Hc(self) -> np.ndarray:
        """Temporal Christoffels H^gamma_{alpha beta} (values)."""
        return self.hj.christoffel[..., 0]

    @cached_property
    def gamma(self) -> np.ndarray:
        """Spatial Christoffels gamma^i_{jk} (values)."""
        return self.gj.christoffel[..., 0]

    @cached_property
    def dU_dx(self) -> np.ndarray:
        """dU_dx[alpha, i, j] = d U^(alpha)_(i) / d x^j (jet)."""
        return self.space.gradient(self.U, self.xvars)

    @cached_property
    def dU_dt(self) -> np.ndarray:
        """dU_dt[alpha, i, mu] = d U^(alpha)_(i) / d t^mu (jet)."""
        return self.space.gradient(self.U, self.tvars)

    @cached_property
    def ucurl(self) -> np.ndarray:
        d = self.dU_dx
        return d - np.swapaxes(d, -3, -2)

    @cached_property
    def ucurl_dt(self) -> np.ndarray:
        """ucurl_dt[alpha, i, j, beta] = d_t^beta U^(alpha)_(i)j (jet)."""
        return self.space.gradient(self.ucurl, self.tvars)

    @cached_property
    def ucurl_cov(self) -> np.ndarray:
        """U^(alpha)_(i)j|k: spatial covariant derivative, index order [alpha, i, j, k] (jet)."""
        sp = self.space
        gam = self.gj.christoffel
        return (sp.gradient(self.ucurl, self.xvars)
                - sp.contract("amj,mik->aijk", self.ucurl, gam)
                - sp.contract("aim,mjk->aijk", self.ucurl, gam))

    @cached_property
    def bracket_static(self) -> np.ndarray:
        """Velocity-independent part of the spray bracket, indexed by l (values)."""
        div_t = np.einsum("...mlm->...l", self.dU_dt[..., 0])
        trace_h = np.einsum("...gmg->...m", self.Hc)
        dF = self.space.gradient(self.F, self.xvars)[..., 0]
        return div_t + np.einsum("...ml,...m->...l", self.U[..., 0], trace_h) - dF


def fields_at(model: ModelDef, t, x, order: int = 3) -> FieldJets:
    return FieldJets(model, t, x, order)


def _fields(model: ModelDef, pt, fields: FieldJets | None, order: int) -> FieldJets:
    if fields is not None:
        return fields
    t, x = pt.base if isinstance(pt, JetPoint) else pt
    return FieldJets(model, t, x, order)


# -- Lagrangian and vertical metric ------------------------------------------------


def lagrangian_values(fields: FieldJets, v: np.ndarray) -> np.ndarray:
    quad = np.einsum("...ab,...ij,...ai,...bj->...", fields.hinv, fields.g, v, v)
    return quad + np.einsum("...ai,...ai->...", fields.U[..., 0], v) + fields.F[..., 0]


def lagrangian_at(model: ModelDef, pt: JetPoint, fields: FieldJets | None = None) -> np.ndarray:
    """L = h^{ab} g_ij x^i_a x^j_b + U^(a)_(i) x^i_a + F."""
    return lagrangian_values(_fields(model, pt, fields, 1), pt.v)


@dataclass(frozen=True)
class VerticalMetricEval:
    block: np.ndarray  # [alpha, beta, i, j] = h^{alpha beta} g_ij
    half_hessian: np.ndarray  # same layout, from jets in the velocity variables
    discrepancy: np.ndarray


def vertical_metric(model: ModelDef, pt: JetPoint, fields: FieldJets | None = None) -> VerticalMetricEval:
    f = _fields(model, pt, fields, 1)
    p, n = model.p, model.n
    block = np.einsum("...ab,...ij->...abij", f.hinv, f.g)
    vspace = jetnum.jet_space(p * n, 2)
    v = np.broadcast_to(pt.v, np.broadcast_shapes(f.batch, pt.v.shape[:-2]) + (p, n))
    vj = np.stack([np.stack([vspace.variable(a * n + i, v[..., a, i]) for i in range(n)], axis=-2)
                   for a in range(p)], axis=-3)
    quad = vspace.contract("ai,bj->aibj", vj, vj)
    lag = np.einsum("...abij,...aibjP->...P", block, quad)
    lag = lag + np.einsum("...ai,...aiP->...P", f.U[..., 0], vj)
    lag[..., 0] += f.F[..., 0]
    hess = vspace.gradient(vspace.gradient(lag, range(p * n)), range(p * n))[..., 0]
    half = 0.5 * hess.reshape(hess.shape[:-2] + (p, n, p, n))
    half = np.einsum("...aibj->...abij", half)
    disc = np.abs(half - block).max(axis=(-4, -3, -2, -1))
    return VerticalMetricEval(block, half, disc)


# -- potential curl ------------------------------------------------------------------


@dataclass(frozen=True)
class PotentialCurlEval:
    values: np.ndarray  # [alpha, i, j]
    dt: np.ndarray  # [alpha, i, j, beta]
    dx: np.ndarray  # [alpha, i, j, k]
    cov: np.ndarray  # [alpha, i, j, k] = U^(alpha)_(i)j|k


def potential_curl(model: ModelDef, base_point, fields: FieldJets | None = None) -> PotentialCurlEval:
    f = _fields(model, base_point, fields, 2)
    return PotentialCurlEval(f.ucurl[..., 0], f.ucurl_dt[..., 0],
                             f.space.gradient(f.ucurl, f.xvars)[..., 0], f.ucurl_cov[..., 0])


# -- spray and nonlinear connection --------------------------------------------------


@dataclass(frozen=True)
class SprayEval:
    H: np.ndarray  # H^(i)_(alpha)beta
    G: np.ndarray  # G^(i)_(alpha)beta
    G_script: np.ndarray  # h^{alpha beta} G^(i)_(alpha)beta


def _spray_values(f: FieldJets, v: np.ndarray) -> SprayEval:
    H = -0.5 * np.einsum("...gab,...gi->...iab", f.Hc, v)
    bracket = np.einsum("...mlk,...mk->...l", f.ucurl[..., 0], v) + f.bracket_static
    force = np.einsum("...il,...l->...i", f.ginv, bracket) / (4.0 * f.p)
    G = (0.5 * np.einsum("...ijk,...aj,...bk->...iab", f.gamma, v, v)
         + np.einsum("...ab,...i->...iab", f.h, force))
    G_script = np.einsum("...ab,...iab->...i", f.hinv, G)
    return SprayEval(H, G, G_script)


def spray(model: ModelDef, pt: JetPoint, fields: FieldJets | None = None) -> SprayEval:
    """Canonical spray (H, G) whose harmonic maps are the extremals of the energy action."""
    return _spray_values(_fields(model, pt, fields, 1), pt.v)


@dataclass(frozen=True)
class NonlinearConnectionEval:
    M: np.ndarray  # [i, alpha, beta]
    N: np.ndarray  # [i, alpha, j]


def nonlinear_N_jet(f: FieldJets, v: np.ndarray) -> np.ndarray:
    """N^(i)_(alpha)j as a jet in (t, x) at fixed velocities."""
    sp = f.space
    geo = np.einsum("...ijkP,...ak->...iajP", f.gj.christoffel, v)
    pot = sp.contract("ag,glj->alj", f.hj.g, f.ucurl)
    pot = sp.contract("il,alj->iaj", f.gj.inverse, pot)
    return geo + _N_POTENTIAL_FACTOR * pot


def nonlinear_connection(model: ModelDef, pt: JetPoint, fields: FieldJets | None = None) -> NonlinearConnectionEval:
    f = _fields(model, pt, fields, 1)
    M = np.einsum("...gab,...gi->...iab", -f.Hc, pt.v)
    return NonlinearConnectionEval(M, nonlinear_N_jet(f, pt.v)[..., 0])


def nonlinear_N_velocity_jacobian(f: FieldJets) -> np.ndarray:
    """d N^(i)_(alpha)j / d x^k_gamma, layout [i, alpha, j, gamma, k]; N is affine in velocities."""
    eye = np.eye(f.p)
    return np.einsum("...ijk,ag->...iajgk", f.gamma, eye)


def nonlinear_from_spray_check(model: ModelDef, pt: JetPoint, fields: FieldJets | None = None) -> np.ndarray:
    """Max |h_{alpha gamma} dG^i/dx^j_gamma - N^(i)_(alpha)j| with central differences in v."""
    f = _fields(model, pt, fields, 1)
    p, n = model.p, model.n
    v = np.broadcast_to(pt.v, np.broadcast_shapes(f.batch, pt.v.shape[:-2]) + (p, n))
    step = 1e-6 * np.maximum(1.0, np.abs(v).max(axis=(-2, -1)))
    basis = np.eye(p * n).reshape(p * n, p, n)
    shift = basis.reshape((p * n,) + (1,) * (v.ndim - 2) + (p, n)) * step[..., None, None]
    plus = _spray_values(f, v + shift).G_script
    minus = _spray_values(f, v - shift).G_script
    deriv = (plus - minus) / (2.0 * step[..., None])  # [(gamma, j), ..., i]
    deriv = np.moveaxis(deriv.reshape((p, n) + deriv.shape[1:]), (0, 1), (-2, -1))  # [..., i, gamma, j]
    n_fd = np.einsum("...igj,...ag->...iaj", deriv, f.h)
    n_closed = nonlinear_connection(model, pt, f).N
    return np.abs(n_fd - n_closed).max(axis=(-3, -2, -1))


# -- Cartan connection, torsion, curvature ------------------------------------------


@dataclass(frozen=True)
class CartanConnectionEval:
    H: np.ndarray  # H^gamma_{alpha beta}
    G: np.ndarray  # G^k_{j gamma} [k, j, gamma], identically zero
    L: np.ndarray  # L^i_{jk} = gamma^i_{jk}
    C: np.ndarray  # C^{i(gamma)}_{j(k)} [i, j, gamma, k], identically zero


def cartan_connection(model: ModelDef, base_point, fields: FieldJets | None = None) -> CartanConnectionEval:
    f = _fields(model, base_point, fields, 1)
    p, n = model.p, model.n
    return CartanConnectionEval(f.Hc, np.zeros(f.batch + (n, n, p)), f.gamma,
                                np.zeros(f.batch + (n, n, p, n)))


@dataclass(frozen=True)
class TorsionEval:
    R_tt: np.ndarray  # R^(m)_(mu) alpha beta
    R_tx: np.ndarray  # R^(m)_(mu) alpha j
    R_xx: np.ndarray  # R^(m)_(mu) i j


def torsion(model: ModelDef, pt: JetPoint, fields: FieldJets | None = None) -> TorsionEval:
    f = _fields(model, pt, fields, 2)
    v = pt.v
    Hriem = f.hj.riemann[..., 0]
    r = f.gj.riemann[..., 0]
    R_tt = -np.einsum("...gqab,...gm->...mqab", Hriem, v)
    inner = (np.einsum("...eag,...gkj->...ekja", f.Hc, f.ucurl[..., 0]) + f.ucurl_dt[..., 0])
    R_tx = -0.25 * np.einsum("...qe,...mk,...ekja->...mqaj", f.h, f.ginv, inner)
    cov = f.ucurl_cov[..., 0]
    sym = cov + np.swapaxes(cov, -2, -1)
    R_xx = (np.einsum("...mijk,...qk->...mqij", r, v)
            + 0.25 * np.einsum("...qe,...mk,...ekij->...mqij", f.h, f.ginv, sym))
    return TorsionEval(R_tt, R_tx, R_xx)


def curvature_d(model: ModelDef, base_point, fields: FieldJets | None = None) -> tuple[CurvatureEval, CurvatureEval]:
    """(curvature of h, curvature of g); every other curvature block of the Cartan connection is zero."""
    f = _fields(model, base_point, fields, 2)
    return curvature_from_jets(f.hj), curvature_from_jets(f.gj)
