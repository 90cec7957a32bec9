"""Expression language and model files for the input fields (h, g, U, F).

Grammar (highest precedence first)::

    atom    := number | 'pi' | t<k> | x<k> | func '(' expr ')' | '(' expr ')'
    power   := atom ['^' unary]            # right associative
    unary   := '-' unary | '+' unary | power
    term    := unary (('*' | '/') unary)*
    expr    := term (('+' | '-') term)*

so ``-x1^2`` is ``-(x1^2)``.  Exponents must be constant and are folded at
parse time.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from . import jetnum
from .errors import (
    AutonomyViolationError,
    ConfigurationError,
    DegenerateMetricError,
    ExpressionError,
    ModelError,
    SingularPointError,
    SymmetryConflictError,
)
from .jetnum import JetScalar, JetSpace

Span = tuple[int, int]


@dataclass(frozen=True)
class Num:
    value: float
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Pi:
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Var:
    kind: str  # 't' or 'x'
    index: int  # 1-based
    span: Span = field(default=(0, 0), compare=False)

    @property
    def name(self) -> str:
        return f"{self.kind}{self.index}"


@dataclass(frozen=True)
class Neg:
    operand: "ExprNode"
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "ExprNode"
    right: "ExprNode"
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Pow:
    base: "ExprNode"
    exponent: "ExprNode"
    value: float  # folded exponent
    span: Span = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "ExprNode"
    span: Span = field(default=(0, 0), compare=False)


ExprNode = Union[Num, Pi, Var, Neg, BinOp, Pow, Call]

ZERO = Num(0.0)

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)
_VAR = re.compile(r"([tx])(\d+)$")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionError(f"unexpected character '{text[bad]}'", (bad, bad + 1), text)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, p: int, n: int):
        self.text = text
        self.p = p
        self.n = n
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.pos]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, start: int, end: int | None = None) -> ExpressionError:
        return ExpressionError(message, (start, end if end is not None else start + 1), self.text)

    def expect(self, value: str) -> tuple[str, str, int]:
        tok = self.advance()
        if tok[1] != value or tok[0] == "end":
            found = "end of input" if tok[0] == "end" else f"'{tok[1]}'"
            raise self.error(f"expected '{value}', found {found}", tok[2])
        return tok

    def parse(self) -> ExprNode:
        node = self.expr()
        kind, value, start = self.peek()
        if kind != "end":
            raise self.error(f"unexpected '{value}'", start, start + len(value))
        return node

    def expr(self) -> ExprNode:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            right = self.term()
            node = BinOp(op, node, right, (node.span[0], right.span[1]))
        return node

    def term(self) -> ExprNode:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            right = self.unary()
            node = BinOp(op, node, right, (node.span[0], right.span[1]))
        return node

    def unary(self) -> ExprNode:
        kind, value, start = self.peek()
        if kind == "op" and value in ("-", "+"):
            self.advance()
            operand = self.unary()
            if value == "+":
                return operand
            return Neg(operand, (start, operand.span[1]))
        return self.power()

    def power(self) -> ExprNode:
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.advance()
            exponent = self.unary()
            for node in _walk(exponent):
                if isinstance(node, Var):
                    raise self.error("exponent must be constant", *exponent.span)
            value = evaluate_float(exponent, {})
            return Pow(base, exponent, value, (base.span[0], exponent.span[1]))
        return base

    def atom(self) -> ExprNode:
        kind, value, start = self.advance()
        end = start + len(value)
        if kind == "num":
            return Num(float(value), (start, end))
        if kind == "name":
            if value == "pi":
                return Pi((start, end))
            if value in jetnum.FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                close = self.expect(")")
                return Call(value, arg, (start, close[2] + 1))
            m = _VAR.match(value)
            if m:
                var_kind, idx = m.group(1), int(m.group(2))
                limit = self.p if var_kind == "t" else self.n
                if not 1 <= idx <= limit:
                    dim = "p" if var_kind == "t" else "n"
                    raise self.error(f"variable '{value}' out of range ({dim}={limit})", start, end)
                return Var(var_kind, idx, (start, end))
            raise self.error(f"unknown identifier '{value}'", start, end)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise self.error("unexpected end of input", start)
        raise self.error(f"unexpected '{value}'", start, end)


def parse_expression(text: str, p: int, n: int) -> ExprNode:
    """Parse ``text`` into an expression tree over t1..tp, x1..xn."""
    return _Parser(text, p, n).parse()


def _walk(node: ExprNode):
    yield node
    if isinstance(node, Neg):
        yield from _walk(node.operand)
    elif isinstance(node, BinOp):
        yield from _walk(node.left)
        yield from _walk(node.right)
    elif isinstance(node, Pow):
        yield from _walk(node.base)
    elif isinstance(node, Call):
        yield from _walk(node.arg)


def variables(node: ExprNode) -> set[tuple[str, int]]:
    return {(v.kind, v.index) for v in _walk(node) if isinstance(v, Var)}


def is_zero(node: ExprNode) -> bool:
    return isinstance(node, Num) and node.value == 0.0


def is_constant(node: ExprNode) -> bool:
    return not variables(node)


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def to_text(node: ExprNode) -> str:
    """Print an expression so that parsing it back yields an equal tree."""
    match node:
        case Num(value=v):
            return format(v, ".17g")
        case Pi():
            return "pi"
        case Var():
            return node.name
        case Call(func=f, arg=a):
            return f"{f}({to_text(a)})"
        case Neg(operand=o):
            inner = to_text(o)
            # unary minus binds looser than ^ only
            if isinstance(o, (BinOp, Neg)):
                inner = f"({inner})"
            return f"-{inner}"
        case Pow(base=b, exponent=e):
            base = to_text(b)
            if isinstance(b, (BinOp, Neg, Pow)):
                base = f"({base})"
            exp = to_text(e)
            if isinstance(e, BinOp):
                exp = f"({exp})"
            return f"{base}^{exp}"
        case BinOp(op=op, left=l, right=r):
            prec = _PREC[op]
            left = to_text(l)
            if isinstance(l, BinOp) and _PREC[l.op] < prec:
                left = f"({left})"
            right = to_text(r)
            if isinstance(r, BinOp) and _PREC[r.op] <= prec:
                right = f"({right})"
            elif isinstance(r, Neg):
                right = f"({right})"
            return f"{left} {op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


def evaluate_float(node: ExprNode, env: Mapping[str, float]) -> float:
    """Plain floating-point evaluation (reference path for the jet evaluator)."""
    match node:
        case Num(value=v):
            return v
        case Pi():
            return math.pi
        case Var():
            return float(env[node.name])
        case Neg(operand=o):
            return -evaluate_float(o, env)
        case Pow(base=b, value=k):
            return evaluate_float(b, env) ** k
        case Call(func=f, arg=a):
            return getattr(math, f)(evaluate_float(a, env))
        case BinOp(op=op, left=l, right=r):
            x, y = evaluate_float(l, env), evaluate_float(r, env)
            if op == "+":
                return x + y
            if op == "-":
                return x - y
            if op == "*":
                return x * y
            return x / y
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(node: ExprNode, space: JetSpace, env: Mapping[str, np.ndarray]) -> np.ndarray:
    """Jet-array evaluation; ``env`` maps variable names to jet arrays.

    Singular-point errors carry the span of the innermost failing node.
    """
    return _evaluate(node, space, env)


def _evaluate(node: ExprNode, space: JetSpace, env: Mapping[str, np.ndarray]) -> np.ndarray:
    try:
        match node:
            case Num(value=v):
                return space.constant(v)
            case Pi():
                return space.constant(math.pi)
            case Var():
                try:
                    return env[node.name]
                except KeyError:
                    raise ConfigurationError(f"no value supplied for variable '{node.name}'") from None
            case Neg(operand=o):
                return -_evaluate(o, space, env)
            case Pow(base=b, value=k):
                return space.power(_evaluate(b, space, env), k)
            case Call(func=f, arg=a):
                return space.apply(f, _evaluate(a, space, env))
            case BinOp(op=op, left=l, right=r):
                x, y = _evaluate(l, space, env), _evaluate(r, space, env)
                if op == "+":
                    return x + y
                if op == "-":
                    return x - y
                if op == "*":
                    return space.mul(x, y)
                return space.div(x, y)
    except SingularPointError as exc:
        if exc.span is None:
            raise exc.with_span(node.span) from None
        raise
    raise TypeError(f"not an expression node: {node!r}")


def eval_expression(e: ExprNode, env: Mapping[str, JetScalar]) -> JetScalar:
    """Evaluate ``e`` with each referenced variable bound to a :class:`JetScalar`."""
    spaces = {j.space for j in env.values()}
    if len(spaces) != 1:
        raise ConfigurationError("environment jets must share num_vars and order")
    space = spaces.pop()
    arrays = {name: j.coeffs for name, j in env.items()}
    return JetScalar(space, np.broadcast_to(_evaluate(e, space, arrays), (space.size,)))


# -- models -------------------------------------------------------------------

DEFAULT_PROBE = (-1.0, 1.0)
PROBE_COUNT = 8
PROBE_SEED = 20240601
DET_TOL = 1e-10


@dataclass(frozen=True)
class ModelDef:
    """An autonomous electrodynamic multi-time Lagrange model.

    ``h`` is p x p over t only, ``g`` n x n over x only, ``U[alpha][i]`` is the
    potential component with temporal index alpha (upper) and spatial index i
    (lower), ``F`` the scalar potential.
    """

    p: int
    n: int
    h: tuple[tuple[ExprNode, ...], ...]
    g: tuple[tuple[ExprNode, ...], ...]
    U: tuple[tuple[ExprNode, ...], ...]
    F: ExprNode
    name: str = "model"
    description: str = ""
    probe_domain: tuple[tuple[str, tuple[float, float]], ...] = ()

    def probe_range(self, var: str) -> tuple[float, float]:
        return dict(self.probe_domain).get(var, DEFAULT_PROBE)

    @property
    def variable_names(self) -> list[str]:
        return [f"t{a + 1}" for a in range(self.p)] + [f"x{i + 1}" for i in range(self.n)]

    def potential_is_zero(self) -> bool:
        return all(is_zero(u) for row in self.U for u in row) and is_zero(self.F)

    def temporal_metric_is_constant(self) -> bool:
        return all(is_constant(e) for row in self.h for e in row)

    def sample_base_points(self, count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        t = np.column_stack([rng.uniform(*self.probe_range(f"t{a + 1}"), size=count)
                             for a in range(self.p)])
        x = np.column_stack([rng.uniform(*self.probe_range(f"x{i + 1}"), size=count)
                             for i in range(self.n)])
        return t, x

    def census(self) -> dict[str, int]:
        nz = lambda rows: sum(not is_zero(e) for row in rows for e in row)
        return {"h_nonzero": nz(self.h), "g_nonzero": nz(self.g),
                "U_nonzero": nz(self.U), "F_nonzero": int(not is_zero(self.F))}


def make_model(p: int, n: int, h: Mapping[tuple[int, int], str], g: Mapping[tuple[int, int], str],
               U: Mapping[tuple[int, int], str] | None = None, F: str = "0", name: str = "model",
               probe_domain: Mapping[str, tuple[float, float]] | None = None,
               validate: bool = True) -> ModelDef:
    """Build a model programmatically from 1-based component dictionaries."""
    lines = [f'name = "{name}"', "[space]", f"p = {p}", f"n = {n}"]
    for var, (a, b) in (probe_domain or {}).items():
        lines.append(f"{var} = [{a!r}, {b!r}]")
    lines.append("[temporal_metric]")
    lines += [f'h_{i}_{j} = "{e}"' for (i, j), e in h.items()]
    lines.append("[spatial_metric]")
    lines += [f'g_{i}_{j} = "{e}"' for (i, j), e in g.items()]
    lines.append("[potential]")
    lines += [f'U_{a}_{i} = "{e}"' for (a, i), e in (U or {}).items()]
    lines += ["[scalar]", f'F = "{F}"']
    return load_model("\n".join(lines), validate=validate)


_SECTIONS = ("space", "temporal_metric", "spatial_metric", "potential", "scalar")
_COMPONENT = {
    "temporal_metric": re.compile(r"h_(\d+)_(\d+)$"),
    "spatial_metric": re.compile(r"g_(\d+)_(\d+)$"),
    "potential": re.compile(r"U_(\d+)_(\d+)$"),
    "scalar": re.compile(r"F$"),
}


@dataclass
class _Entry:
    key: str
    raw: str
    line: int
    column: int  # 1-based column of the raw value


def _strip_comment(line: str) -> str:
    in_quote = False
    for k, ch in enumerate(line):
        if ch == '"':
            in_quote = not in_quote
        elif ch == "#" and not in_quote:
            return line[:k]
    return line


def _split_assignments(line: str, offset: int) -> list[tuple[str, int]]:
    parts, depth, in_quote, start = [], 0, False, 0
    for k, ch in enumerate(line):
        if ch == '"':
            in_quote = not in_quote
        elif not in_quote and ch == "[":
            depth += 1
        elif not in_quote and ch == "]":
            depth -= 1
        elif not in_quote and depth == 0 and ch in ",;":
            parts.append((line[start:k], offset + start))
            start = k + 1
    parts.append((line[start:], offset + start))
    return [(s, o) for s, o in parts if s.strip()]


def _read_document(document: str) -> tuple[dict[str, _Entry], dict[str, dict[str, _Entry]]]:
    header: dict[str, _Entry] = {}
    sections: dict[str, dict[str, _Entry]] = {s: {} for s in _SECTIONS}
    current = None
    for lineno, full in enumerate(document.splitlines(), start=1):
        line = _strip_comment(full)
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ModelError("malformed section header", lineno, line.index("[") + 1)
            current = stripped[1:-1].strip()
            if current not in sections:
                raise ModelError(f"unknown section [{current}]", lineno, line.index("[") + 1)
            continue
        for part, offset in _split_assignments(line, 0):
            if "=" not in part:
                raise ModelError(f"expected 'key = value', got '{part.strip()}'", lineno,
                                 offset + len(part) - len(part.lstrip()) + 1)
            key, _, raw = part.partition("=")
            value_col = offset + len(key) + 1 + (len(raw) - len(raw.lstrip())) + 1
            entry = _Entry(key.strip(), raw.strip(), lineno, value_col)
            target = header if current is None else sections[current]
            if entry.key in target:
                raise ModelError(f"duplicate key '{entry.key}'", lineno, value_col)
            target[entry.key] = entry
    return header, sections


def _string_value(entry: _Entry) -> tuple[str, int]:
    raw = entry.raw
    if len(raw) >= 2 and raw[0] == raw[-1] == '"':
        return raw[1:-1], entry.column + 1
    return raw, entry.column


def _int_value(entry: _Entry) -> int:
    try:
        return int(entry.raw)
    except ValueError:
        raise ModelError(f"'{entry.key}' must be an integer", entry.line, entry.column) from None


def _interval(entry: _Entry) -> tuple[float, float]:
    m = re.fullmatch(r"\[\s*([^,\]]+)\s*,\s*([^,\]]+)\s*\]", entry.raw)
    if not m:
        raise ModelError(f"probe domain for '{entry.key}' must look like [a, b]", entry.line, entry.column)
    try:
        a, b = (evaluate_float(parse_expression(s, 0, 0), {}) for s in m.groups())
    except ExpressionError as exc:
        raise ModelError(f"bad probe bound: {exc.args[0]}", entry.line, entry.column) from None
    if not a < b:
        raise ModelError(f"empty probe interval for '{entry.key}'", entry.line, entry.column)
    return a, b


def load_model(document: str, *, validate: bool = True) -> ModelDef:
    """Parse a model document (see README for the format) into a :class:`ModelDef`."""
    header, sections = _read_document(document)
    space = sections["space"]
    for key in ("p", "n"):
        if key not in space:
            raise ModelError(f"[space] must define '{key}'")
    p, n = _int_value(space["p"]), _int_value(space["n"])
    if p < 1 or n < 1:
        raise ModelError("p and n must both be >= 1", space["p"].line)

    probe = []
    for key, entry in space.items():
        if key in ("p", "n"):
            continue
        m = _VAR.match(key)
        if not m or int(m.group(2)) > (p if m.group(1) == "t" else n) or int(m.group(2)) < 1:
            raise ModelError(f"unknown [space] entry '{key}'", entry.line, entry.column)
        probe.append((key, _interval(entry)))

    def parse_entry(entry: _Entry) -> ExprNode:
        text, col = _string_value(entry)
        try:
            return parse_expression(text, p, n)
        except ExpressionError as exc:
            raise ModelError(f"{entry.key}: {exc.args[0]}", entry.line, col + exc.span[0]) from None

    def matrix(section: str, dim: int, symbol: str) -> tuple[tuple[ExprNode, ...], ...]:
        comps: dict[tuple[int, int], tuple[ExprNode, _Entry]] = {}
        for key, entry in sections[section].items():
            m = _COMPONENT[section].match(key)
            if not m:
                raise ModelError(f"unknown [{section}] entry '{key}'", entry.line, entry.column)
            i, j = int(m.group(1)), int(m.group(2))
            if not (1 <= i <= dim and 1 <= j <= dim):
                raise ModelError(f"index out of range in '{key}'", entry.line, entry.column)
            comps[(i, j)] = (parse_entry(entry), entry)
        rows = [[ZERO] * dim for _ in range(dim)]
        for (i, j), (node, entry) in comps.items():
            other = comps.get((j, i))
            if other is not None and i != j and other[0] != node:
                raise SymmetryConflictError(
                    f"{symbol}_{i}_{j} and {symbol}_{j}_{i} are both given and differ",
                    entry.line, entry.column)
            rows[i - 1][j - 1] = node
            rows[j - 1][i - 1] = node
        return tuple(tuple(r) for r in rows)

    h = matrix("temporal_metric", p, "h")
    g = matrix("spatial_metric", n, "g")
    if not sections["temporal_metric"]:
        raise ModelError("[temporal_metric] is empty")
    if not sections["spatial_metric"]:
        raise ModelError("[spatial_metric] is empty")

    for section, forbidden, label in (("temporal_metric", "x", "h"), ("spatial_metric", "t", "g")):
        for key, entry in sections[section].items():
            node = parse_entry(entry)
            bad = sorted(f"{k}{i}" for k, i in variables(node) if k == forbidden)
            if bad:
                what = "spatial" if forbidden == "x" else "temporal"
                raise AutonomyViolationError(
                    f"{key} depends on {what} variable(s) {', '.join(bad)}; "
                    f"{label} must depend on {'t' if label == 'h' else 'x'} only",
                    entry.line, entry.column)

    U_rows = [[ZERO] * n for _ in range(p)]
    for key, entry in sections["potential"].items():
        m = _COMPONENT["potential"].match(key)
        if not m:
            raise ModelError(f"unknown [potential] entry '{key}'", entry.line, entry.column)
        a, i = int(m.group(1)), int(m.group(2))
        if not (1 <= a <= p and 1 <= i <= n):
            raise ModelError(f"index out of range in '{key}'", entry.line, entry.column)
        U_rows[a - 1][i - 1] = parse_entry(entry)
    F = ZERO
    for key, entry in sections["scalar"].items():
        if key != "F":
            raise ModelError(f"unknown [scalar] entry '{key}'", entry.line, entry.column)
        F = parse_entry(entry)

    name = _string_value(header["name"])[0] if "name" in header else "model"
    description = _string_value(header["description"])[0] if "description" in header else ""
    model = ModelDef(p, n, h, g, tuple(tuple(r) for r in U_rows), F, name, description, tuple(probe))
    if validate:
        check_nondegenerate(model)
    return model


def load_model_file(path) -> ModelDef:
    with open(path, encoding="utf-8") as fh:
        return load_model(fh.read())


def metric_values(rows, names: list[str], points: np.ndarray) -> np.ndarray:
    """Order-0 evaluation of an expression matrix at a batch of points (B, d)."""
    space = jetnum.jet_space(max(1, len(names)), 0)
    env = {nm: space.constant(points[:, k]) for k, nm in enumerate(names)}
    batch = points.shape[0]
    out = np.empty((batch, len(rows), len(rows[0])))
    for i, row in enumerate(rows):
        for j, node in enumerate(row):
            out[:, i, j] = np.broadcast_to(evaluate(node, space, env)[..., 0], (batch,))
    return out


def check_nondegenerate(model: ModelDef, count: int = PROBE_COUNT, seed: int = PROBE_SEED) -> None:
    """Raise :class:`DegenerateMetricError` if h or g is singular at a probe point."""
    rng = np.random.default_rng(seed)
    t, x = model.sample_base_points(count, rng)
    for label, rows, names, pts in (("h", model.h, [f"t{a + 1}" for a in range(model.p)], t),
                                    ("g", model.g, [f"x{i + 1}" for i in range(model.n)], x)):
        try:
            vals = metric_values(rows, names, pts)
        except SingularPointError as exc:
            raise DegenerateMetricError(f"{label} cannot be evaluated on the probe domain: {exc}") from None
        det = np.linalg.det(vals)
        bad = np.flatnonzero(~(np.abs(det) > DET_TOL))
        if bad.size:
            k = bad[0]
            where = ", ".join(f"{nm}={v:.6g}" for nm, v in zip(names, pts[k]))
            raise DegenerateMetricError(f"{label} is degenerate at probe point ({where}): det={det[k]:.3g}")


def signature(matrix: np.ndarray) -> str:
    eig = np.linalg.eigvalsh(matrix)
    return "(" + ",".join("+" if e > 0 else "-" for e in sorted(eig, reverse=True)) + ")"
