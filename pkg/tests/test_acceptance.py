"""Acceptance criteria, one test per criterion.

Each test records what it measured; the summary hook in conftest prints one
PASS/FAIL line per criterion at the end of the run.  Run just this file with
``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np
import pytest

from jetlagrange.cli import bundled_models, main, resolve_model
from jetlagrange.dynamics import DiscreteMap, action, integrate_extremal, variational_check
from jetlagrange.fieldeqs import conservation_residuals, deflections, einstein_blocks, maxwell_residuals
from jetlagrange.jetgeometry import FieldJets, JetPoint, nonlinear_connection, spray
from jetlagrange.semigeom import christoffel, curvature

from builders import (
    POLAR_X,
    SPHERE,
    metric,
    random_compact_perturbation,
    random_points,
    random_polynomial_model,
    sphere_model,
)

RANDOM_MODELS = [(0, 2, 2), (1, 1, 3), (2, 2, 3)]


def all_models():
    return [resolve_model(name) for name in bundled_models()] + [random_polynomial_model(*s) for s in RANDOM_MODELS]


def fd_nonlinear_connection(model, pt, step=1e-6):
    """h_{alpha gamma} dG^i/dx^j_gamma by central differences of the contracted spray."""
    p, n = model.p, model.n
    deriv = np.empty(pt.v.shape[:-2] + (n, p, n))
    for g in range(p):
        for j in range(n):
            e = np.zeros((p, n))
            e[g, j] = step
            plus = spray(model, JetPoint(pt.t, pt.x, pt.v + e)).G_script
            minus = spray(model, JetPoint(pt.t, pt.x, pt.v - e)).G_script
            deriv[..., g, j] = (plus - minus) / (2 * step)
    h = FieldJets(model, pt.t, pt.x, 1).h
    return np.einsum("...igj,...ag->...iaj", deriv, h)


def test_criterion_01_nonlinear_connection_from_spray(record_property):
    """N equals the h-contracted velocity derivative of the spray (1e-6, 100 points, 4 models, < 5 s)."""
    start = time.perf_counter()
    worst = 0.0
    for name in ("flat", "lorentz", "sphere", "curved_time"):
        m = resolve_model(name)
        pt = random_points(m, 100, seed=1)
        worst = max(worst, float(np.abs(fd_nonlinear_connection(m, pt) - nonlinear_connection(m, pt).N).max()))
    elapsed = time.perf_counter() - start
    record_property("measured", f"max |N - N_fd| = {worst:.2e}, {elapsed:.2f} s")
    assert worst < 1e-6 and elapsed < 5.0


def test_criterion_02_deflection_closed_forms(record_property):
    """Definitional deflection tensors equal Dbar = 0, D = -1/4 g^-1 h curl U, d = delta delta (1e-10)."""
    worst = 0.0
    models = all_models()
    for m in models:
        pt = random_points(m, 50, seed=2)
        f = FieldJets(m, pt.t, pt.x, 2)
        d = deflections(m, pt, f)
        closed = -0.25 * np.einsum("...im,...au,...umj->...iaj", f.ginv, f.h, f.ucurl[..., 0])
        kron = np.einsum("ij,ab->iajb", np.eye(m.n), np.eye(m.p))
        worst = max(worst, np.abs(d.D_definitional - closed).max(), np.abs(d.Dbar).max(),
                    np.abs(d.d - kron).max())
    record_property("measured", f"max deviation = {worst:.2e} over {len(models)} models")
    assert worst < 1e-10


def test_criterion_03_maxwell(record_property):
    """All three Maxwell residuals < 1e-8 on >= 5 models; the hand case reproduces -1/2 within 1e-12."""
    worst, count = 0.0, 0
    for m in all_models():
        pt = random_points(m, 100, seed=3)
        mx = maxwell_residuals(m, pt, FieldJets(m, pt.t, pt.x, 2))
        worst = max(worst, mx.eq1.max(), mx.eq2.max(), mx.eq3.max())
        count += 1
    m = resolve_model("lorentz_t")
    hand = maxwell_residuals(m, JetPoint.of(m, [0.7], [0.3, -0.2], [0.4, 0.1]))
    sides = (hand.lhs1[0, 0, 1, 0], hand.rhs1[0, 0, 1, 0])
    hand_err = max(abs(s + 0.5) for s in sides)
    record_property("measured", f"max residual = {worst:.2e} on {count} models, hand case error {hand_err:.1e}")
    assert count >= 5 and worst < 1e-8 and hand_err < 1e-12


def test_criterion_04_conservation(record_property):
    """Temporal and spatial conservation residuals < 1e-8, exactly zero on flat models."""
    worst = 0.0
    for m in all_models():
        c = conservation_residuals(m, random_points(m, 100, seed=4).base)
        worst = max(worst, np.abs(c.temporal[..., 0]).max(), np.abs(c.spatial[..., 0]).max())
    flat = resolve_model("flat")
    cf = conservation_residuals(flat, random_points(flat, 100, seed=4).base)
    flat_max = max(np.abs(cf.temporal[..., 0]).max(), np.abs(cf.spatial[..., 0]).max())
    record_property("measured", f"max residual = {worst:.2e}, flat = {flat_max}")
    assert worst < 1e-8 and flat_max == 0.0


def test_criterion_05_einstein_worked_case(record_property):
    """p = 1, h = 1, unit sphere, K = 1: T_11 = -1, T_ij = 0, vertical block -g, primed blocks zero."""
    m = sphere_model()
    errs = []
    for x1 in (0.5, 1.2, 2.4):
        e = einstein_blocks(m, ([0.0], [x1, 0.3]), K=1.0)
        g = np.diag([1.0, math.sin(x1) ** 2])
        errs += [abs(e.T_temporal[0, 0] + 1.0), np.abs(e.T_spatial).max(), np.abs(e.T_vertical[0, 0] + g).max(),
                 np.abs(e.E1p_temporal).max(), np.abs(e.E1p_spatial).max()]
    record_property("measured", f"max deviation = {max(errs):.2e}")
    assert max(errs) < 1e-10


def test_criterion_06_dynamics(record_property):
    """Lorentz circle closes (1e-6, < 1 s), equator stays put (1e-7), energy drift < 1e-7 over 1e4 steps."""
    start = time.perf_counter()
    lor = integrate_extremal(resolve_model("lorentz"), [0.0, 0.0], [1.0, 0.0], (0.0, 2 * math.pi), 6283)
    elapsed = time.perf_counter() - start
    closure = float(np.abs(lor.x[-1]).max())
    sphere = resolve_model("sphere")
    eq = integrate_extremal(sphere, [math.pi / 2, 0.0], [0.0, 1.0], (0.0, 2 * math.pi), 6283)
    equator = float(np.abs(eq.x[:, 0] - math.pi / 2).max())
    drift = integrate_extremal(sphere, [1.0, 0.0], [0.3, 0.8], (0.0, 20.0), 10_000).energy_drift
    record_property("measured", f"closure {closure:.1e} in {elapsed:.2f} s, equator {equator:.1e}, drift {drift:.1e}")
    assert closure < 1e-6 and elapsed < 1.0 and equator < 1e-7 and drift < 1e-7


def test_criterion_07_action(record_property):
    """Action of t^2 on [0, 1] is 4/3 within 1e-4 at 401 nodes; extremal first variation decays at order >= 1.9."""
    t = np.linspace(0, 1, 401)
    value = action(resolve_model("flat"), DiscreteMap((t,), np.column_stack([t**2, 0 * t]))).value
    f = DiscreteMap((t,), np.column_stack([np.full_like(t, math.pi / 2), t]))
    orders = [variational_check(resolve_model("sphere"), f, random_compact_perturbation(t, 2, seed)).order
              for seed in range(3)]
    record_property("measured", f"action error {abs(value - 4 / 3):.1e}, fitted orders {min(orders):.3f}..{max(orders):.3f}")
    assert abs(value - 4 / 3) < 1e-4 and min(orders) >= 1.9


def test_criterion_08_curvature_kernel(record_property):
    """Sphere scalar 2 (1e-10), polar-disguised flat Riemann < 1e-10, jet derivatives vs FD (1e-5 rel)."""
    rng = np.random.default_rng(8)
    scal = max(abs(curvature(SPHERE, [rng.uniform(0.3, 2.8), 0.0]).scalar - 2.0) for _ in range(10))
    polar3 = metric([["1", "0", "0"], ["0", "x1^2", "0"], ["0", "0", "x1^2*sin(x2)^2"]])
    riem = max(np.abs(curvature(g, pt).riemann).max()
               for g, pt in ((POLAR_X, [1.3, 0.4]), (polar3, [1.7, 0.9, -0.3])))
    rel = 0.0
    g = metric([["1 + x2^2", "0.3*x1*x2"], ["0.3*x1*x2", "2 + sin(x1)"]])
    x0 = np.array([0.4, -0.7])
    ev, h = christoffel(g, x0), 1e-5
    for a in range(2):
        e = np.eye(2)[a] * h
        for got, fn in ((ev.first_partials[..., a], lambda y: christoffel(g, y).values),
                        (ev.second_partials[..., a], lambda y: christoffel(g, y).first_partials)):
            fd = (fn(x0 + e) - fn(x0 - e)) / (2 * h)
            mask = np.abs(fd) > 1e-8
            rel = max(rel, float((np.abs(got - fd)[mask] / np.abs(fd)[mask]).max()))
    record_property("measured", f"scalar error {scal:.1e}, flat Riemann {riem:.1e}, jet vs FD rel {rel:.1e}")
    assert scal < 1e-10 and riem < 1e-10 and rel < 1e-5


def test_criterion_09_mutation_sensitivity(record_property, without_quarter_in_N):
    """Dropping the 1/4 in front of the potential term of N pushes Maxwell eq 1 above 1e-3."""
    m = resolve_model("lorentz_t")
    pt = random_points(m, 100, seed=9)
    eq1 = float(maxwell_residuals(m, pt).eq1.max())
    record_property("measured", f"mutated eq 1 residual = {eq1:.3g}")
    assert eq1 > 1e-3


def test_criterion_10_bundled_check_suite(record_property, capsys):
    """`check` over every bundled model exits 0 in < 10 s total."""
    start = time.perf_counter()
    codes = {name: main(["check", name]) for name in bundled_models()}
    elapsed = time.perf_counter() - start
    capsys.readouterr()
    record_property("measured", f"{len(codes)} models, exit codes {sorted(set(codes.values()))}, {elapsed:.2f} s")
    assert all(c == 0 for c in codes.values()) and elapsed < 10.0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
