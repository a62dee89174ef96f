"""Expression mini-language for coefficient fields and certificates.

Grammar (whitespace-insensitive, no implicit multiplication):

    expr    := term (("+" | "-") term)*
    term    := factor (("*" | "/") factor)*
    factor  := "-" factor | power
    power   := atom ("^" factor)?          # right-associative
    atom    := NUMBER | IDENT | IDENT "(" expr ("," expr)* ")" | "(" expr ")"

Numbers are decimals with optional scientific notation ("0.5", "1e-4").
Identifiers are the time variable `t`, state coordinates `x1`..`xd`
(1-indexed), the reserved radial-argument names `z` and `rho` used by
certificate functions, and `norm`, which evaluates to the Euclidean norm of
the full state vector.  Functions: exp, log, sqrt, abs (1 argument), min,
max, pow (2 arguments).

Precedence: `^` binds tighter than unary minus, which binds tighter than
`*` `/`, which bind tighter than `+` `-`.  So "-x1^2" is -(x1^2) while
"2^-3" parses (the exponent position admits a sign).

Evaluation is strict over the reals: log/sqrt of a negative number,
division by zero, 0 raised to a negative power, a negative base raised to a
non-integer power, and any non-finite intermediate all raise DomainError
with the offending point.  There are no silent NaNs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    ArityError,
    BindError,
    DomainError,
    ParseError,
    UnknownIdentifier,
)

__all__ = [
    "Expr",
    "Lit",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "parse_expr",
    "eval_expr",
    "print_expr",
    "free_variables",
    "bind_state_expr",
    "bind_scalar_expr",
    "scalar_function",
    "is_zero",
]


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Lit(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: tuple[Expr, ...]


FUNCTIONS = {"exp": 1, "log": 1, "sqrt": 1, "abs": 1, "min": 2, "max": 2, "pow": 2}

# Reserved non-indexed variable names.  `norm` reads as a bare identifier.
RESERVED_VARS = ("t", "z", "rho", "norm")

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)

_VAR_RE = re.compile(r"^x([1-9]\d*)$")


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == m.start():
            # Skip pure whitespace tail, else report the bad character.
            rest = source[pos:]
            stripped = rest.lstrip()
            if not stripped:
                break
            at = pos + (len(rest) - len(stripped))
            raise ParseError(at, "a token", stripped[0])
        kind = m.lastgroup
        text = m.group(kind)
        tokens.append((kind, text, m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise ParseError(pos, repr(op), text or "end of input")
        return self.advance()

    def parse(self) -> Expr:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(pos, "end of input", text)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in ("+", "-"):
                self.advance()
                node = BinOp(text, node, self.term())
            else:
                return node

    def term(self) -> Expr:
        node = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in ("*", "/"):
                self.advance()
                node = BinOp(text, node, self.factor())
            else:
                return node

    def factor(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            # Right-associative; the exponent position admits unary minus.
            return BinOp("^", base, self.factor())
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.advance()
        if kind == "number":
            return Lit(float(text))
        if kind == "ident":
            nxt_kind, nxt_text, _ = self.peek()
            if nxt_kind == "op" and nxt_text == "(":
                return self.call(text, pos)
            if text in RESERVED_VARS or _VAR_RE.match(text):
                return Var(text)
            raise UnknownIdentifier(text, pos)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ParseError(pos, "a number, identifier or '('", text or "end of input")

    def call(self, name: str, pos: int) -> Expr:
        if name not in FUNCTIONS:
            raise UnknownIdentifier(name, pos)
        self.expect_op("(")
        args = [self.expr()]
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text == ",":
                self.advance()
                args.append(self.expr())
            else:
                break
        self.expect_op(")")
        want = FUNCTIONS[name]
        if len(args) != want:
            raise ArityError(name, len(args), want)
        return Call(name, tuple(args))


def parse_expr(source: str) -> Expr:
    """Parse a single expression string into an AST."""
    if not isinstance(source, str):
        raise ParseError(0, "an expression string", type(source).__name__)
    parser = _Parser(source)
    kind, _, pos = parser.peek()
    if kind == "end":
        raise ParseError(pos, "an expression", "end of input")
    return parser.parse()


# ---------------------------------------------------------------------------
# Printing


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def print_expr(expr: Expr) -> str:
    """Canonical fully-parenthesized rendering; parse(print(e)) == e."""
    if isinstance(expr, Lit):
        return _format_number(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Neg):
        return f"(-{print_expr(expr.operand)})"
    if isinstance(expr, BinOp):
        return f"({print_expr(expr.left)} {expr.op} {print_expr(expr.right)})"
    if isinstance(expr, Call):
        args = ", ".join(print_expr(a) for a in expr.args)
        return f"{expr.func}({args})"
    raise TypeError(f"not an Expr node: {expr!r}")


# ---------------------------------------------------------------------------
# Binding


def free_variables(expr: Expr) -> set[str]:
    """Names of all variables the expression reads."""
    out: set[str] = set()
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Neg):
            stack.append(node.operand)
        elif isinstance(node, BinOp):
            stack.append(node.left)
            stack.append(node.right)
        elif isinstance(node, Call):
            stack.extend(node.args)
    return out


def bind_state_expr(expr: Expr, d: int) -> Expr:
    """Check that expr only uses t, norm and x1..xd.  Returns expr."""
    for name in free_variables(expr):
        m = _VAR_RE.match(name)
        if m:
            k = int(m.group(1))
            if k > d:
                raise BindError(name, f"state dimension is {d}")
        elif name in ("z", "rho"):
            raise BindError(name, "radial variable not allowed in a (t, x) field")
        elif name not in ("t", "norm"):
            raise BindError(name, "not a (t, x) field variable")
    return expr


def bind_scalar_expr(expr: Expr, var: str) -> Expr:
    """Check that expr is a function of the single variable `var`."""
    extra = free_variables(expr) - {var}
    if extra:
        raise BindError(sorted(extra)[0], f"only {var!r} is in scope here")
    return expr


def is_zero(expr: Expr) -> bool:
    """Structurally the literal 0 (possibly negated)."""
    if isinstance(expr, Lit):
        return expr.value == 0.0
    if isinstance(expr, Neg):
        return is_zero(expr.operand)
    return False


# ---------------------------------------------------------------------------
# Evaluation


def _witness(t, x, mask):
    """First offending point for a vectorized domain failure."""
    if mask.ndim == 0:
        return t, x
    idx = int(np.argmax(mask))
    xw = x
    if isinstance(x, np.ndarray) and x.ndim == 2:
        xw = x[idx]
    elif isinstance(x, np.ndarray) and x.ndim == 1 and x.shape[0] == mask.shape[0]:
        xw = x[idx]
    tw = t
    if isinstance(t, np.ndarray) and t.ndim == 1 and t.shape[0] == mask.shape[0]:
        tw = t[idx]
    return tw, xw


def _check_finite(value, t, x, what: str):
    bad = ~np.isfinite(value)
    if np.any(bad):
        tw, xw = _witness(t, x, np.asarray(bad))
        raise DomainError(f"non-finite result in {what}", tw, xw)
    return value


def _eval(node: Expr, env: dict):
    t = env.get("t")
    x = env.get("x_witness")
    if isinstance(node, Lit):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise BindError(node.name, "variable not bound at evaluation") from None
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, BinOp):
        left = _eval(node.left, env)
        right = _eval(node.right, env)
        if node.op == "+":
            return _check_finite(np.add(left, right), t, x, "+")
        if node.op == "-":
            return _check_finite(np.subtract(left, right), t, x, "-")
        if node.op == "*":
            return _check_finite(np.multiply(left, right), t, x, "*")
        if node.op == "/":
            bad = np.asarray(np.equal(right, 0.0))
            if np.any(bad):
                tw, xw = _witness(t, x, bad)
                raise DomainError("division by zero", tw, xw)
            return _check_finite(np.divide(left, right), t, x, "/")
        if node.op == "^":
            return _pow(left, right, t, x)
        raise TypeError(f"unknown operator {node.op!r}")
    if isinstance(node, Call):
        args = [_eval(a, env) for a in node.args]
        return _call(node.func, args, t, x)
    raise TypeError(f"not an Expr node: {node!r}")


def _pow(base, exponent, t, x):
    base = np.asarray(base, dtype=float)
    exponent = np.asarray(exponent, dtype=float)
    frac = np.not_equal(exponent, np.floor(exponent))
    bad = np.asarray((base < 0) & frac)
    if np.any(bad):
        tw, xw = _witness(t, x, bad)
        raise DomainError("negative base with non-integer exponent", tw, xw)
    bad = np.asarray((base == 0) & (exponent < 0))
    if np.any(bad):
        tw, xw = _witness(t, x, bad)
        raise DomainError("zero base with negative exponent", tw, xw)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.power(base, exponent)
    return _check_finite(out, t, x, "^")[()]


def _call(func: str, args, t, x):
    if func == "exp":
        with np.errstate(over="ignore"):
            out = np.exp(args[0])
        return _check_finite(out, t, x, "exp")[()]
    if func == "log":
        arg = np.asarray(args[0], dtype=float)
        bad = np.asarray(arg <= 0)
        if np.any(bad):
            tw, xw = _witness(t, x, bad)
            raise DomainError("log of a non-positive number", tw, xw)
        return np.log(arg)[()]
    if func == "sqrt":
        arg = np.asarray(args[0], dtype=float)
        bad = np.asarray(arg < 0)
        if np.any(bad):
            tw, xw = _witness(t, x, bad)
            raise DomainError("sqrt of a negative number", tw, xw)
        return np.sqrt(arg)[()]
    if func == "abs":
        return np.abs(args[0])
    if func == "min":
        return np.minimum(args[0], args[1])
    if func == "max":
        return np.maximum(args[0], args[1])
    if func == "pow":
        return _pow(args[0], args[1], t, x)
    raise TypeError(f"unknown function {func!r}")


def eval_expr(expr: Expr, t, x):
    """Evaluate a (t, x) field expression.

    t is a scalar time; x is a length-d vector, or an (N, d) array for
    vectorized evaluation over N states (returns a length-N array).
    `norm` evaluates to the Euclidean norm of x (per row when vectorized).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        env = {"t": t, "norm": float(np.sqrt(np.dot(x, x))), "x_witness": x}
        for k in range(x.shape[0]):
            env[f"x{k + 1}"] = x[k]
        out = _eval(expr, env)
        return float(np.asarray(out))
    if x.ndim == 2:
        env = {
            "t": t,
            "norm": np.sqrt(np.einsum("nd,nd->n", x, x)),
            "x_witness": x,
        }
        for k in range(x.shape[1]):
            env[f"x{k + 1}"] = x[:, k]
        out = np.asarray(_eval(expr, env), dtype=float)
        if out.ndim == 0:
            out = np.full(x.shape[0], float(out))
        return out
    raise ValueError("x must be a vector or an (N, d) array")


def eval_scalar_expr(expr: Expr, var: str, value):
    """Evaluate a single-variable expression at a scalar or an array.

    Returns a float for scalar input and a same-shape float array
    otherwise.  Domain failures carry the offending value as the
    witness state.
    """
    arr = np.asarray(value, dtype=float)
    env = {var: arr, "x_witness": arr}
    out = np.asarray(_eval(expr, env), dtype=float)
    if arr.ndim == 0:
        return float(out)
    if out.ndim == 0:
        return np.full(arr.shape, float(out))
    return out


def scalar_function(expr: Expr, var: str):
    """Compile a single-variable certificate expression to a vectorized
    callable.  Used for A(z), B(z), xi(z), alpha(rho), zeta(t)."""
    bind_scalar_expr(expr, var)

    def fn(values):
        values = np.asarray(values, dtype=float)
        env = {var: values, "x_witness": values}
        out = np.asarray(_eval(expr, env), dtype=float)
        if out.ndim == 0 and values.ndim > 0:
            out = np.full(values.shape, float(out))
        return out if values.ndim > 0 else float(out)

    return fn
