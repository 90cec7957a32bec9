import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetlagrange.errors import (
    AutonomyViolationError,
    DegenerateMetricError,
    ExpressionError,
    ModelError,
    SingularPointError,
    SymmetryConflictError,
)
from jetlagrange.jetnum import jet_space, seed_variable
from jetlagrange.modelspec import (
    BinOp,
    Call,
    Neg,
    Num,
    Pow,
    Var,
    eval_expression,
    evaluate,
    evaluate_float,
    load_model,
    parse_expression,
    to_text,
    variables,
)

from builders import make_model

FLAT_DOC = """
name = "flat"
[space]
p = 1, n = 2
[temporal_metric]
h_1_1 = "1"
[spatial_metric]
g_1_1 = "1"
g_2_2 = "1"
"""


class TestParser:
    def test_power_of_call(self):
        assert parse_expression("sin(x1)^2", 1, 2) == Pow(Call("sin", Var("x", 1)), Num(2.0), 2.0)

    def test_precedence_and_division(self):
        expected = BinOp("+", BinOp("*", Num(2.0), Var("t", 1)), BinOp("/", Var("x", 2), Num(3.0)))
        assert parse_expression("2*t1 + x2/3", 1, 2) == expected

    def test_unary_minus_binds_looser_than_power(self):
        assert parse_expression("-x1^2", 1, 1) == Neg(Pow(Var("x", 1), Num(2.0), 2.0))

    def test_left_associative(self):
        assert parse_expression("x1 - x2 - 1", 1, 2) == BinOp("-", BinOp("-", Var("x", 1), Var("x", 2)), Num(1.0))

    def test_power_right_associative(self):
        node = parse_expression("2^3^2", 1, 1)
        assert evaluate_float(node, {}) == 2.0**9

    def test_out_of_range_variable(self):
        with pytest.raises(ExpressionError, match="out of range") as info:
            parse_expression("x3", 1, 2)
        assert info.value.span == (0, 2)

    def test_unknown_identifier(self):
        with pytest.raises(ExpressionError, match="unknown identifier 'y'"):
            parse_expression("1 + y", 1, 1)

    @pytest.mark.parametrize("text, column", [("1 +", 4), ("(x1", 4), ("x1 $ 2", 4), ("2 3", 3)])
    def test_syntax_error_columns(self, text, column):
        with pytest.raises(ExpressionError) as info:
            parse_expression(text, 1, 1)
        assert info.value.column == column
        assert "^" in str(info.value)

    def test_variable_exponent_rejected(self):
        with pytest.raises(ExpressionError, match="constant"):
            parse_expression("x1^t1", 1, 1)

    def test_variables_scan(self):
        assert variables(parse_expression("t1*x2 + sin(x1)", 1, 2)) == {("t", 1), ("x", 2), ("x", 1)}


class TestEvaluation:
    def test_extremum_of_sin_squared(self):
        e = parse_expression("sin(x1)^2", 0, 1)
        r = eval_expression(e, {"x1": seed_variable(0, math.pi / 2, 1, 2)})
        assert r.value == pytest.approx(1.0, abs=1e-15)
        assert r.partial((1,)) == pytest.approx(0.0, abs=1e-15)

    def test_mixed_partial(self):
        e = parse_expression("t1*x1", 1, 1)
        r = eval_expression(e, {"t1": seed_variable(0, 0.3, 2, 2), "x1": seed_variable(1, -2.0, 2, 2)})
        assert r.partial((1, 1)) == 1.0

    def test_singular_point_carries_span(self):
        e = parse_expression("2 + log(x1-1)", 0, 1)
        with pytest.raises(SingularPointError) as info:
            eval_expression(e, {"x1": seed_variable(0, 1.0, 1, 1)})
        assert info.value.span == (4, 13)

    def test_batched_evaluation(self):
        sp = jet_space(1, 1)
        e = parse_expression("x1^3", 0, 1)
        out = evaluate(e, sp, {"x1": sp.variable(0, np.array([1.0, 2.0]))})
        np.testing.assert_allclose(out, [[1.0, 3.0], [8.0, 12.0]])


# -- random expressions for the property tests ---------------------------------------------

atoms = st.one_of(
    st.sampled_from(["t1", "x1", "x2", "pi"]),
    st.floats(0.01, 5.0).map(lambda v: f"{v:.4g}"),
)


def _combine(children):
    binary = st.tuples(children, st.sampled_from("+-*/"), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})")
    call = st.tuples(st.sampled_from(["sin", "cos", "exp", "sinh", "cosh"]), children).map(lambda t: f"{t[0]}({t[1]})")
    power = st.tuples(children, st.sampled_from(["2", "3", "-1", "0.5"])).map(lambda t: f"({t[0]})^{t[1]}")
    neg = children.map(lambda c: f"-{c}")
    return st.one_of(binary, call, power, neg)


expressions = st.recursive(atoms, _combine, max_leaves=8)


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(expressions)
    def test_print_parse_round_trip(self, text):
        tree = parse_expression(text, 1, 2)
        printed = to_text(tree)
        again = parse_expression(printed, 1, 2)
        assert again == tree
        assert to_text(again) == printed

    @settings(max_examples=200, deadline=None)
    @given(expressions, st.floats(0.1, 1.0), st.floats(0.1, 1.0), st.floats(0.1, 1.0))
    def test_order_zero_matches_float_evaluation(self, text, t1, x1, x2):
        tree = parse_expression(text, 1, 2)
        env = {"t1": t1, "x1": x1, "x2": x2}
        try:
            with np.errstate(all="ignore"):
                ref = evaluate_float(tree, env)
        except (ZeroDivisionError, OverflowError, ValueError, SingularPointError):
            return
        sp = jet_space(3, 0)
        try:
            with np.errstate(all="ignore"):
                got = evaluate(tree, sp, {k: sp.constant(v) for k, v in env.items()})[0]
        except SingularPointError:
            return
        if not math.isfinite(ref):
            return
        assert got == pytest.approx(ref, rel=1e-15, abs=1e-300)


class TestLoadModel:
    def test_flat_model(self):
        m = load_model(FLAT_DOC)
        assert (m.p, m.n, m.name) == (1, 2, "flat")
        assert m.potential_is_zero()
        assert m.h[0][0] == Num(1.0)
        assert m.g[0][1] == Num(0.0)

    def test_sphere_with_probe_domain(self):
        m = make_model(1, 2, {(1, 1): "1"}, {(1, 1): "1", (2, 2): "sin(x1)^2"}, probe_domain={"x1": (0.3, 2.8)})
        assert m.probe_range("x1") == (0.3, 2.8)
        assert m.probe_range("x2") == (-1.0, 1.0)
        _, x = m.sample_base_points(50, np.random.default_rng(0))
        assert np.all((x[:, 0] > 0.3) & (x[:, 0] < 2.8))

    def test_vanishing_component_is_degenerate(self):
        with pytest.raises(DegenerateMetricError):
            make_model(1, 2, {(1, 1): "1"}, {(1, 1): "1", (2, 2): "0*x1"})

    def test_upper_triangle_symmetrized(self):
        m = make_model(1, 2, {(1, 1): "1"}, {(1, 1): "2", (1, 2): "0.5*x1", (2, 2): "2"})
        assert m.g[1][0] == m.g[0][1]

    def test_symmetry_conflict(self):
        with pytest.raises(SymmetryConflictError):
            make_model(1, 2, {(1, 1): "1"}, {(1, 1): "2", (1, 2): "0.5", (2, 1): "0.6", (2, 2): "2"})

    def test_consistent_lower_triangle_is_accepted(self):
        m = make_model(1, 2, {(1, 1): "1"}, {(1, 1): "2", (1, 2): "0.5", (2, 1): "0.5", (2, 2): "2"})
        assert m.g[0][1] == Num(0.5)

    def test_autonomy_violation_in_g(self):
        with pytest.raises(AutonomyViolationError, match="t1"):
            make_model(1, 2, {(1, 1): "1"}, {(1, 1): "1", (1, 2): "t1*x1", (2, 2): "1"})

    def test_autonomy_violation_in_h(self):
        with pytest.raises(AutonomyViolationError):
            make_model(1, 1, {(1, 1): "1 + x1^2"}, {(1, 1): "1"})

    def test_parse_error_reports_line_and_column(self):
        doc = FLAT_DOC.replace('g_2_2 = "1"', 'g_2_2 = "1 + * x1"')
        with pytest.raises(ModelError) as info:
            load_model(doc)
        lineno = doc.splitlines().index('g_2_2 = "1 + * x1"') + 1
        assert info.value.line == lineno
        assert info.value.column == len('g_2_2 = "1 + ') + 1
        assert f"line {lineno}" in str(info.value)

    def test_comments_and_semicolons(self):
        doc = FLAT_DOC.replace("p = 1, n = 2", "p = 1; n = 2  # dimensions") + "# trailing\n"
        assert load_model(doc).n == 2

    @pytest.mark.parametrize("bad", ["[space]\np = 1\n", "[nonsense]\n", "[space]\np = x\nn = 1\n"])
    def test_structural_errors(self, bad):
        with pytest.raises(ModelError):
            load_model(bad)

    def test_degenerate_metric(self):
        with pytest.raises(DegenerateMetricError, match="g is degenerate"):
            make_model(1, 2, {(1, 1): "1"}, {(1, 1): "1", (1, 2): "1", (2, 2): "1"})

    def test_validation_can_be_skipped(self):
        m = make_model(1, 2, {(1, 1): "1"}, {(1, 1): "1", (1, 2): "1", (2, 2): "1"}, validate=False)
        assert m.g[0][1] == Num(1.0)

    def test_loaded_metrics_respect_autonomy(self, bundled):
        assert all(k == "t" for row in bundled.h for e in row for k, _ in variables(e))
        assert all(k == "x" for row in bundled.g for e in row for k, _ in variables(e))
