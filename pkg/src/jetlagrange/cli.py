"""Command-line driver: inspect, compute, check, integrate, action.

Every command takes a model path or the name of a bundled model
(``jetlagrange inspect sphere``).  ``compute`` and ``check`` emit a single
JSON document with a ``schema`` field; floats are written in shortest
round-trip form.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Callable

import numpy as np

from .dynamics import DiscreteMap, action, harmonic_residual, integrate_extremal
from .errors import ConfigurationError, ExpressionError, JetLagrangeError, ModelError, SingularPointError
from .fieldeqs import conservation_residuals, deflections, einstein_blocks, em_tensor, maxwell_residuals
from .jetgeometry import (
    FieldJets,
    JetPoint,
    cartan_connection,
    lagrangian_at,
    nonlinear_connection,
    nonlinear_from_spray_check,
    potential_curl,
    spray,
    torsion,
    vertical_metric,
)
from .modelspec import ModelDef, load_model, load_model_file, metric_values, signature

CHECK_SCHEMA = "jetlagrange.check/1"
COMPUTE_SCHEMA = "jetlagrange.compute/1"

EXIT_OK, EXIT_FAIL, EXIT_MODEL = 0, 1, 2


def tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


# -- model resolution -----------------------------------------------------------------


def bundled_models() -> list[str]:
    root = resources.files("jetlagrange") / "models"
    return sorted(p.name[:-len(".model")] for p in root.iterdir() if p.name.endswith(".model"))


def resolve_model(spec: str) -> ModelDef:
    """Load a model file, or a bundled model by name."""
    path = Path(spec)
    if path.is_file():
        return load_model_file(path)
    if spec in bundled_models():
        text = (resources.files("jetlagrange") / "models" / f"{spec}.model").read_text(encoding="utf-8")
        return load_model(text)
    raise ModelError(f"no model file or bundled model named '{spec}' "
                     f"(bundled: {', '.join(bundled_models())})")


# -- serialization --------------------------------------------------------------------


def _num(x) -> float | str:
    x = float(x)
    return x if np.isfinite(x) else repr(x)


def tensor(values, index_order: str) -> dict:
    arr = np.asarray(values, dtype=float)
    nested = np.vectorize(_num, otypes=[object])(arr).tolist() if arr.ndim else _num(arr)
    return {"index_order": index_order, "shape": list(arr.shape), "values": nested}


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _emit(text: str, path: str | None):
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- compute --------------------------------------------------------------------------


def geometry_report(model: ModelDef, pt: JetPoint, K: float = 1.0) -> dict:
    """All tensor blocks at one jet point, 0-based arrays with 1-based index names."""
    f = FieldJets(model, pt.t, pt.x, order=3)
    sp = spray(model, pt, f)
    nc = nonlinear_connection(model, pt, f)
    cc = cartan_connection(model, pt, f)
    tor = torsion(model, pt, f)
    curl = potential_curl(model, pt, f)
    dfl = deflections(model, pt, f)
    em = em_tensor(model, pt, f)
    ein = einstein_blocks(model, pt, K, f)
    vm = vertical_metric(model, pt, f)
    hj, gj = f.hj, f.gj
    return {
        "schema": COMPUTE_SCHEMA,
        "tool_version": tool_version(),
        "model": model.name,
        "point": {"t": pt.t.tolist(), "x": pt.x.tolist(), "v": pt.v.tolist()},
        "lagrangian": _num(lagrangian_at(model, pt, f)),
        "metric_h": tensor(f.h, "alpha,beta"),
        "metric_g": tensor(f.g, "i,j"),
        "christoffel_h": tensor(f.Hc, "gamma,alpha,beta"),
        "christoffel_g": tensor(f.gamma, "i,j,k"),
        "vertical_metric": tensor(vm.block, "(alpha),(beta),(i),(j)"),
        "potential_curl": tensor(curl.values, "(alpha),(i),j"),
        "spray_H": tensor(sp.H, "(i),(alpha),beta"),
        "spray_G": tensor(sp.G, "(i),(alpha),beta"),
        "spray_G_script": tensor(sp.G_script, "i"),
        "nonlinear_M": tensor(nc.M, "(i),(alpha),beta"),
        "nonlinear_N": tensor(nc.N, "(i),(alpha),j"),
        "cartan_H": tensor(cc.H, "gamma,alpha,beta"),
        "cartan_G": tensor(cc.G, "k,j,gamma"),
        "cartan_L": tensor(cc.L, "i,j,k"),
        "cartan_C": tensor(cc.C, "i,j,(gamma),(k)"),
        "torsion_R_mu_alpha_beta": tensor(tor.R_tt, "(m),(mu),alpha,beta"),
        "torsion_R_mu_alpha_j": tensor(tor.R_tx, "(m),(mu),alpha,j"),
        "torsion_R_mu_ij": tensor(tor.R_xx, "(m),(mu),i,j"),
        "curvature_H": tensor(hj.riemann[..., 0], "eta,alpha,beta,gamma"),
        "curvature_r": tensor(gj.riemann[..., 0], "l,i,j,k"),
        "ricci_H": tensor(ein.H_ricci, "alpha,beta"),
        "ricci_r": tensor(ein.r_ricci, "i,j"),
        "scalar_curvature": {"H": _num(ein.H_scalar), "r": _num(ein.r_scalar),
                             "S": _num(ein.S_scalar), "Sc": _num(ein.Sc)},
        "deflection_Dbar": tensor(dfl.Dbar, "(i),(alpha),beta"),
        "deflection_D": tensor(dfl.D, "(i),(alpha),j"),
        "deflection_d": tensor(dfl.d, "(i),(alpha),(j),(beta)"),
        "em_F": tensor(em.F, "(alpha),(i),j"),
        "em_f": tensor(em.f, "(alpha),(beta),(i),(j)"),
        "einstein_constant": _num(K),
        "einstein_E1": {"temporal": tensor(ein.E1_temporal, "alpha,beta"),
                        "spatial": tensor(ein.E1_spatial, "i,j"),
                        "vertical": tensor(ein.E1_vertical, "(alpha),(beta),(i),(j)")},
        "einstein_T": {"temporal": tensor(ein.T_temporal, "alpha,beta"),
                       "spatial": tensor(ein.T_spatial, "i,j"),
                       "vertical": tensor(ein.T_vertical, "(alpha),(beta),(i),(j)")},
        "einstein_T_tilde": {"temporal": tensor(ein.Tt_temporal, "alpha,beta"),
                             "spatial": tensor(ein.Tt_spatial, "i,j")},
    }


# -- check suite ----------------------------------------------------------------------


@dataclass(frozen=True)
class IdentityResult:
    name: str
    samples: int
    max_abs_residual: float
    worst_point: dict
    passed: bool


@dataclass(frozen=True)
class ResidualReport:
    model: str
    seed: int
    samples: int
    tolerance: float
    identities: list[IdentityResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.identities)

    def to_dict(self, timestamp: str | None = None) -> dict:
        return {
            "schema": CHECK_SCHEMA,
            "tool_version": tool_version(),
            "model": self.model,
            "seed": self.seed,
            "samples": self.samples,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "identities": [
                {"name": r.name, "samples": r.samples, "max_abs_residual": _num(r.max_abs_residual),
                 "worst_point": r.worst_point, "passed": r.passed}
                for r in self.identities
            ],
            "timestamp": timestamp,
        }


def _per_point(a: np.ndarray, count: int) -> np.ndarray:
    a = np.abs(np.asarray(a, dtype=float))
    a = np.broadcast_to(a, (count,) + a.shape[1:]) if a.ndim else np.full(count, float(a))
    return a.reshape(count, -1).max(axis=1) if a.ndim > 1 else a


def _checks(model: ModelDef, pt: JetPoint, f: FieldJets) -> dict[str, Callable[[], np.ndarray]]:
    """Identity name -> residual array with the sample axis first."""
    hj, gj = f.hj, f.gj

    def both(fn):
        return lambda: np.maximum(_per_point(fn(hj), len(pt.t)), _per_point(fn(gj), len(pt.t)))

    def spray_symmetry():
        s = spray(model, pt, f)
        return np.maximum(_per_point(s.H - np.swapaxes(s.H, -2, -1), len(pt.t)),
                          _per_point(s.G - np.swapaxes(s.G, -2, -1), len(pt.t)))

    def em_routes():
        em = em_tensor(model, pt, f)
        return np.maximum(em.route_deviation, _per_point(em.F + np.swapaxes(em.F, -2, -1), len(pt.t)))

    def einstein_linearity():
        one = einstein_blocks(model, pt, 1.0, f)
        two = einstein_blocks(model, pt, 2.0, f)
        return np.maximum.reduce([
            _per_point(one.T_temporal - 2.0 * two.T_temporal, len(pt.t)),
            _per_point(one.T_spatial - 2.0 * two.T_spatial, len(pt.t)),
            _per_point(one.T_vertical - 2.0 * two.T_vertical, len(pt.t)),
        ])

    maxwell = {}

    def mx(k):
        def run():
            if not maxwell:
                maxwell["r"] = maxwell_residuals(model, pt, f)
            return getattr(maxwell["r"], f"eq{k}")
        return run

    conservation = {}

    def cons(attr):
        def run():
            if not conservation:
                conservation["r"] = conservation_residuals(model, pt, 1.0, f)
            return getattr(conservation["r"], attr)
        return run

    return {
        "metric_compatibility": both(lambda m: m.metric_compatibility()),
        "christoffel_symmetry": both(lambda m: m.christoffel[..., 0] - np.swapaxes(m.christoffel[..., 0], -2, -1)),
        "first_bianchi": both(lambda m: m.first_bianchi()),
        "contracted_bianchi": both(lambda m: m.contracted_bianchi()),
        "ricci_symmetry": both(lambda m: m.ricci[..., 0] - np.swapaxes(m.ricci[..., 0], -2, -1)),
        "spray_symmetry": spray_symmetry,
        "M_equals_2H": lambda: nonlinear_connection(model, pt, f).M - 2.0 * spray(model, pt, f).H,
        "N_from_spray": lambda: nonlinear_from_spray_check(model, pt, f),
        "vertical_metric_regularity": lambda: vertical_metric(model, pt, f).discrepancy,
        "deflection_closed_vs_definitional": lambda: deflections(model, pt, f).deviation,
        "em_tensor_routes": em_routes,
        "maxwell_1": mx(1),
        "maxwell_2": mx(2),
        "maxwell_3": mx(3),
        "conservation_temporal": cons("temporal"),
        "conservation_spatial": cons("spatial"),
        "conservation_simplified_temporal": cons("simplified_temporal"),
        "conservation_simplified_spatial": cons("simplified_spatial"),
        "einstein_linearity": einstein_linearity,
    }


def check_identities(model: ModelDef, samples: int = 100, seed: int = 0, tol: float = 1e-8) -> ResidualReport:
    """Evaluate the identity suite at ``samples`` seeded random jet points."""
    if samples < 1:
        raise ConfigurationError("samples must be >= 1")
    if not tol > 0:
        raise ConfigurationError("tolerance must be positive")
    rng = np.random.default_rng(seed)
    t, x = model.sample_base_points(samples, rng)
    v = rng.uniform(-1.0, 1.0, size=(samples, model.p, model.n))
    pt = JetPoint(t, x, v)
    f = FieldJets(model, t, x, order=3)
    results = []
    for name, run in _checks(model, pt, f).items():
        res = _per_point(run(), samples)
        k = int(np.argmax(np.where(np.isnan(res), np.inf, res)))
        worst = {"t": t[k].tolist(), "x": x[k].tolist(), "v": v[k].tolist()}
        value = float(res[k])
        results.append(IdentityResult(name, samples, value, worst, bool(value < tol)))
    return ResidualReport(model.name, seed, samples, tol, results)


# -- commands -------------------------------------------------------------------------


def _floats(values: list[float] | None, count: int, what: str) -> np.ndarray:
    arr = np.asarray(values or [], dtype=float)
    if arr.size != count:
        raise ConfigurationError(f"{what} needs {count} values, got {arr.size}")
    return arr


def cmd_inspect(args) -> int:
    try:
        model = resolve_model(args.model)
    except (JetLagrangeError, OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    t, x = model.sample_base_points(1, np.random.default_rng(0))
    h = metric_values(model.h, [f"t{a + 1}" for a in range(model.p)], t)[0]
    g = metric_values(model.g, [f"x{i + 1}" for i in range(model.n)], x)[0]
    census = ", ".join(f"{k}={v}" for k, v in model.census().items())
    print(f"model {model.name}: {model.description}" if model.description else f"model {model.name}")
    print(f"p={model.p} n={model.n}, h signature {signature(h)}, g signature {signature(g)}")
    print(f"components: {census}")
    return EXIT_OK


def cmd_compute(args) -> int:
    model = resolve_model(args.model)
    t = _floats(args.t, model.p, "--t")
    x = _floats(args.x, model.n, "--x")
    v = _floats(args.v, model.p * model.n, "--v").reshape(model.p, model.n)
    _emit(_dump(geometry_report(model, JetPoint.of(model, t, x, v), args.K)), args.out)
    return EXIT_OK


def cmd_check(args) -> int:
    model = resolve_model(args.model)
    report = check_identities(model, args.samples, args.seed, args.tol)
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    if args.report:
        Path(args.report).write_text(_dump(report.to_dict(stamp)), encoding="utf-8")
    if args.json:
        sys.stdout.write(_dump(report.to_dict(stamp)))
    else:
        for r in report.identities:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<36s} {r.max_abs_residual:.3e}")
        print(f"{model.name}: {'all identities hold' if report.passed else 'identity failure'} "
              f"(tol {args.tol:g}, {args.samples} samples, seed {args.seed})")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_integrate(args) -> int:
    model = resolve_model(args.model)
    if model.p != 1:
        print(f"error: integrate needs p = 1, model has p = {model.p}", file=sys.stderr)
        return EXIT_MODEL
    x0 = _floats(args.x0, model.n, "--x0")
    v0 = _floats(args.v0, model.n, "--v0")
    traj = integrate_extremal(model, x0, v0, (args.t0, args.t1), args.steps)
    if args.out:
        Path(args.out).write_text(traj.to_table(), encoding="utf-8")
    print(f"steps {traj.steps}, t = {float(traj.t[-1])!r}")
    print("x = " + " ".join(repr(float(c)) for c in traj.x[-1]))
    print("v = " + " ".join(repr(float(c)) for c in traj.v[-1]))
    if traj.energy_drift is not None:
        print(f"energy drift {traj.energy_drift:.3e}")
    if traj.steps + 1 >= 5:
        print(f"harmonic residual {harmonic_residual(model, traj.as_map()).max_abs:.3e}")
    return EXIT_OK


def cmd_action(args) -> int:
    model = resolve_model(args.model)
    fmap = DiscreteMap.read(args.map, model.p)
    result = action(model, fmap)
    print(f"action {result.value!r} +- {result.error_estimate:.3e} ({result.rule})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jetlagrange",
                                     description="Geometry of electrodynamic multi-time Lagrange spaces.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="validate a model and summarize it")
    p.add_argument("model")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("compute", help="all tensor blocks at one jet point (JSON)")
    p.add_argument("model")
    p.add_argument("--t", type=float, nargs="+", required=True)
    p.add_argument("--x", type=float, nargs="+", required=True)
    p.add_argument("--v", type=float, nargs="+", required=True, help="velocities x^i_alpha, alpha-major")
    p.add_argument("--K", type=float, default=1.0, help="Einstein constant")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_compute)

    p = sub.add_parser("check", help="run the identity suite at random jet points")
    p.add_argument("model")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--report", help="write the JSON report to this path")
    p.add_argument("--json", action="store_true", help="print the JSON report instead of a summary")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("integrate", help="integrate an extremal (p = 1)")
    p.add_argument("model")
    p.add_argument("--x0", type=float, nargs="+", required=True)
    p.add_argument("--v0", type=float, nargs="+", required=True)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, required=True)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--out", help="trajectory table (t x v columns)")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("action", help="energy action of a sampled map")
    p.add_argument("model")
    p.add_argument("--map", required=True, help="table with columns t1..tp x1..xn")
    p.set_defaults(func=cmd_action)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, ExpressionError, OSError, UnicodeDecodeError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except SingularPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
