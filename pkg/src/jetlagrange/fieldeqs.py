"""Electromagnetic and gravitational field equations of the space.

Covariant derivatives of (t, x)-dependent d-tensors with one contravariant
temporal index and covariant spatial indices use the Cartan connection::

    T^(a)_(i)j/b = d_t^b T^(a)_(i)j + T^(m)_(i)j H^a_{m b}
    T^(a)_(i)j|k = d_x^k T^(a)_(i)j - T^(a)_(m)j gamma^m_{ik} - T^(a)_(i)m gamma^m_{jk}

and the vertical derivative is the plain velocity derivative (the C-block of
the connection vanishes).  The electromagnetic tensor entering the Maxwell
residuals is built from the *definitional* deflection tensor, i.e. from the
nonlinear connection N, while the right-hand side comes from the closed-form
torsion; a wrong coefficient in N therefore shows up as a residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .jetgeometry import (
    FieldJets,
    JetPoint,
    _fields,
    nonlinear_connection,
    nonlinear_N_jet,
    nonlinear_N_velocity_jacobian,
    torsion,
)
from .modelspec import ModelDef


def _cyclic(a: np.ndarray) -> np.ndarray:
    """Sum over cyclic permutations of the last three axes (i, j, k)."""
    return a + np.einsum("...jki->...ijk", a) + np.einsum("...kij->...ijk", a)


# -- deflection tensors --------------------------------------------------------------


@dataclass(frozen=True)
class DeflectionEval:
    Dbar: np.ndarray  # Dbar^(i)_(alpha)beta [i, alpha, beta]
    D: np.ndarray  # D^(i)_(alpha)j closed form [i, alpha, j]
    D_definitional: np.ndarray
    d: np.ndarray  # d^(i)(beta)_(alpha)(j) [i, alpha, j, beta]
    Dbar_lowered: np.ndarray  # [alpha, i, beta]
    D_lowered: np.ndarray  # [alpha, i, j]
    d_lowered: np.ndarray  # [alpha, beta, i, j]
    deviation: np.ndarray  # max |definitional - closed form| over all three blocks


def deflection_D_jet(f: FieldJets, v: np.ndarray) -> np.ndarray:
    """x^i_(alpha)|j = -N^(i)_(alpha)j + x^m_alpha gamma^i_mj, as a jet in (t, x)."""
    transport = np.einsum("...imjP,...am->...iajP", f.gj.christoffel, v)
    return transport - nonlinear_N_jet(f, v)


def deflections(model: ModelDef, pt: JetPoint, fields: FieldJets | None = None) -> DeflectionEval:
    f = _fields(model, pt, fields, 1)
    p, n = model.p, model.n
    v = pt.v
    M = nonlinear_connection(model, pt, f).M
    Dbar = -M - np.einsum("...mi,...mab->...iab", v, f.Hc)
    D_closed = -0.25 * np.einsum("...im,...au,...umj->...iaj", f.ginv, f.h, f.ucurl[..., 0])
    D_def = deflection_D_jet(f, v)[..., 0]
    kron = np.einsum("ij,ab->iajb", np.eye(n), np.eye(p))  # [i, alpha, j, beta]
    # the Liouville components x^i_alpha are linear in the velocities
    d_def = np.broadcast_to(kron, f.batch + kron.shape)
    Dbar_low = np.einsum("...ag,...ik,...kgb->...aib", f.hinv, f.g, Dbar)
    D_low = np.einsum("...ag,...ik,...kgj->...aij", f.hinv, f.g, D_closed)
    d_low = np.einsum("...ag,...ik,...kgjb->...abij", f.hinv, f.g, d_def)
    dev = np.maximum.reduce([
        np.abs(D_def - D_closed).max(axis=(-3, -2, -1)),
        np.abs(Dbar).max(axis=(-3, -2, -1)),
        np.abs(d_def - kron).max(axis=(-4, -3, -2, -1)),
    ])
    return DeflectionEval(Dbar, D_closed, D_def, d_def, Dbar_low, D_low, d_low, dev)


# -- electromagnetic tensor ----------------------------------------------------------


@dataclass(frozen=True)
class ElectromagneticEval:
    F: np.ndarray  # F^(alpha)_(i)j
    f: np.ndarray  # f^(alpha)(beta)_(i)(j), identically zero
    F_skew_route: np.ndarray  # 1/2 [D^(a)_(i)j - D^(a)_(j)i]
    route_deviation: np.ndarray


def em_tensor(model: ModelDef, base_point, fields: FieldJets | None = None) -> ElectromagneticEval:
    f = _fields(model, base_point, fields, 1)
    F = -0.25 * f.ucurl[..., 0]
    D_closed = -0.25 * np.einsum("...im,...au,...umj->...iaj", f.ginv, f.h, f.ucurl[..., 0])
    D_low = np.einsum("...ag,...ik,...kgj->...aij", f.hinv, f.g, D_closed)
    F_skew = 0.5 * (D_low - np.swapaxes(D_low, -2, -1))
    d_low = np.einsum("...ab,...ij->...abij", f.hinv, f.g)
    small_f = 0.5 * (d_low - np.swapaxes(d_low, -2, -1))
    dev = np.abs(F - F_skew).max(axis=(-3, -2, -1))
    return ElectromagneticEval(F, small_f, F_skew, dev)


def em_tensor_jet(f: FieldJets, v: np.ndarray) -> np.ndarray:
    """F^(alpha)_(i)j via skew-symmetrization of the definitional deflection tensor (jet)."""
    sp = f.space
    D = deflection_D_jet(f, v)
    D_low = sp.contract("ag,kgj->akj", f.hj.inverse, D)
    D_low = sp.contract("ik,akj->aij", f.gj.g, D_low)
    return 0.5 * (D_low - np.swapaxes(D_low, -3, -2))


# -- Maxwell equations ---------------------------------------------------------------


@dataclass(frozen=True)
class MaxwellResiduals:
    """Per-point max-abs residuals of the three Maxwell-type equations."""

    eq1: np.ndarray
    eq2: np.ndarray
    eq3: np.ndarray
    lhs1: np.ndarray  # F^(a)_(i)j/b, layout [a, i, j, b]
    rhs1: np.ndarray


def maxwell_residuals(model: ModelDef, pt: JetPoint, fields: FieldJets | None = None) -> MaxwellResiduals:
    f = _fields(model, pt, fields, 2)
    if f.order < 2:
        raise ConfigurationError("Maxwell residuals need jets of order >= 2")
    sp = f.space
    v = pt.v
    Fj = em_tensor_jet(f, v)
    F = Fj[..., 0]

    # eq 1: F^(a)_(i)j/b = 1/2 Alt_{ij} h^{a m} g_{i k} R^(k)_(m) b j
    lhs = sp.gradient(Fj, f.tvars)[..., 0] + np.einsum("...mij,...amb->...aijb", F, f.Hc)
    R_tx = torsion(model, pt, f).R_tx
    X = np.einsum("...am,...ik,...kmbj->...aibj", f.hinv, f.g, R_tx)
    rhs = 0.5 * (X - np.einsum("...ajbi->...aibj", X))
    rhs = np.einsum("...aibj->...aijb", rhs)
    eq1 = np.abs(lhs - rhs).max(axis=(-4, -3, -2, -1))

    # eq 2: cyclic sum of F^(a)_(i)j|k
    cov = (sp.gradient(Fj, f.xvars)[..., 0]
           - np.einsum("...amj,...mik->...aijk", F, f.gamma)
           - np.einsum("...aim,...mjk->...aijk", F, f.gamma))
    eq2 = np.abs(_cyclic(cov)).max(axis=(-4, -3, -2, -1))

    # eq 3: cyclic sum of the vertical derivative F^(a)_(i)j |^(c)_(k)
    dN = nonlinear_N_velocity_jacobian(f)  # [i, a, j, c, k]
    dtransport = np.einsum("...ikj,ac->...iajck", f.gamma, np.eye(f.p))
    dD = dtransport - dN
    dD_low = np.einsum("...ab,...il,...lbjck->...aijck", f.hinv, f.g, dD)
    dF = 0.5 * (dD_low - np.swapaxes(dD_low, -4, -3))
    dF = np.einsum("...aijck->...acijk", dF)
    eq3 = np.abs(_cyclic(dF)).max(axis=(-5, -4, -3, -2, -1))
    return MaxwellResiduals(eq1, eq2, eq3, lhs, rhs)


# -- Einstein equations --------------------------------------------------------------


@dataclass(frozen=True)
class EinsteinEval:
    K: float
    H_ricci: np.ndarray  # H_{alpha beta}
    r_ricci: np.ndarray  # r_ij
    H_scalar: np.ndarray
    r_scalar: np.ndarray
    S_scalar: np.ndarray  # vertical contribution, zero
    Sc: np.ndarray  # H + r
    E1_temporal: np.ndarray  # H_ab - (H + r)/2 h_ab
    E1_spatial: np.ndarray  # r_ij - (H + r)/2 g_ij
    E1_vertical: np.ndarray  # -(H + r)/2 h^{ab} g_ij, layout [a, b, i, j]
    T_temporal: np.ndarray
    T_spatial: np.ndarray
    T_vertical: np.ndarray
    E2_blocks: dict[str, np.ndarray]  # stress-energy blocks forced to vanish
    E1p_temporal: np.ndarray  # H_ab - H/2 h_ab
    E1p_spatial: np.ndarray  # r_ij - r/2 g_ij
    Tt_temporal: np.ndarray
    Tt_spatial: np.ndarray
    adapted_inverse: dict[str, np.ndarray]  # G^{AB} blocks
    h_potential: dict[str, np.ndarray]  # G_{AB} blocks of the gravitational h-potential


def einstein_blocks(model: ModelDef, base_point, K: float = 1.0,
                    fields: FieldJets | None = None) -> EinsteinEval:
    if K == 0:
        raise ConfigurationError("Einstein constant K must be nonzero")
    f = _fields(model, base_point, fields, 2)
    p, n, batch = f.p, f.n, f.batch
    Hab = f.hj.ricci[..., 0]
    rij = f.gj.ricci[..., 0]
    Hs = f.hj.scalar[..., 0]
    rs = f.gj.scalar[..., 0]
    Sc = Hs + rs
    half = (Sc / 2.0)[..., None, None]
    E_t = Hab - half * f.h
    E_x = rij - half * f.g
    E_v = -(Sc / 2.0)[..., None, None, None, None] * np.einsum("...ab,...ij->...abij", f.hinv, f.g)
    E1p_t = Hab - (Hs / 2.0)[..., None, None] * f.h
    E1p_x = rij - (rs / 2.0)[..., None, None] * f.g
    zeros = lambda *shape: np.zeros(batch + shape)
    E2 = {
        "T_alpha_i": zeros(p, n),
        "T_i_alpha": zeros(n, p),
        "T^(alpha)_(i)beta": zeros(p, n, p),
        "T_alpha^(beta)_(i)": zeros(p, p, n),
        "T_i^(alpha)_(j)": zeros(n, p, n),
        "T^(alpha)_(i)j": zeros(p, n, n),
    }
    adapted_inverse = {
        "temporal": f.hinv,
        "spatial": f.ginv,
        "vertical": np.einsum("...ab,...ij->...abij", f.h, f.ginv),
    }
    h_potential = {
        "temporal": f.h,
        "spatial": f.g,
        "vertical": np.einsum("...ab,...ij->...abij", f.hinv, f.g),
    }
    return EinsteinEval(
        K, Hab, rij, Hs, rs, np.zeros(batch), Sc, E_t, E_x, E_v, E_t / K, E_x / K, E_v / K, E2,
        E1p_t, E1p_x, E1p_t / K, E1p_x / K, adapted_inverse, h_potential)


# -- conservation laws ---------------------------------------------------------------


@dataclass(frozen=True)
class ConservationResiduals:
    temporal: np.ndarray  # [H^mu_b - (H + r)/2 delta^mu_b]_/mu, indexed by b
    spatial: np.ndarray  # [r^m_j - (H + r)/2 delta^m_j]_|m, indexed by j
    simplified_temporal: np.ndarray  # Tt^mu_b/mu
    simplified_spatial: np.ndarray  # Tt^m_j|m


def conservation_residuals(model: ModelDef, base_point, K: float = 1.0,
                           fields: FieldJets | None = None) -> ConservationResiduals:
    f = _fields(model, base_point, fields, 3)
    if f.order < 3:
        raise ConfigurationError("conservation residuals need jets of order 3")
    hj, gj = f.hj, f.gj
    Sc = hj.scalar + gj.scalar  # jets over all base variables
    eye_p = np.eye(f.p)[:, :, None]
    eye_n = np.eye(f.n)[:, :, None]
    temporal = hj.covariant_divergence(hj.mixed_ricci - 0.5 * Sc[..., None, None, :] * eye_p)
    spatial = gj.covariant_divergence(gj.mixed_ricci - 0.5 * Sc[..., None, None, :] * eye_n)
    tt = (hj.mixed_ricci - 0.5 * hj.scalar[..., None, None, :] * eye_p) / K
    ts = (gj.mixed_ricci - 0.5 * gj.scalar[..., None, None, :] * eye_n) / K
    return ConservationResiduals(temporal, spatial, hj.covariant_divergence(tt), gj.covariant_divergence(ts))
