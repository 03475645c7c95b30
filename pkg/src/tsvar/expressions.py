"""Arithmetic expressions over the problem variables.

Expressions define the maps L(t, y, v, z), g(t, y, v), and F(t, y, v, z)
of a variational problem. The grammar is plain infix arithmetic:

    expr   = term { ("+" | "-") term }
    term   = unary { ("*" | "/") unary }
    unary  = "-" unary | power
    power  = atom [ "^" unary ]
    atom   = NUMBER | NAME | NAME "(" expr ")" | "(" expr ")"

"^" is right associative and binds tighter than unary minus, so "-v^2"
means -(v^2). Function names are sin, cos, exp, log, sqrt, abs (and neg,
an alias for the prefix minus). Any other name must be declared in
`allowed_vars` when parsing; undeclared names are rejected up front.

Partial derivatives use exact symbolic differentiation whenever the
target variable appears only under +, -, *, prefix minus, and ^ with a
numeric-literal exponent. Everything else falls back to a central finite
difference with relative step control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, ExpressionSyntaxError, UnboundVariable, UnknownIdentifier

__all__ = [
    "Expression",
    "Num",
    "Var",
    "Un",
    "Bin",
    "parse_expression",
    "evaluate",
    "partial",
    "to_string",
    "variables_in",
    "substitute",
]

FUNCTIONS = ("neg", "sin", "cos", "exp", "log", "sqrt", "abs")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Un:
    op: str  # one of FUNCTIONS
    arg: "Expression"


@dataclass(frozen=True)
class Bin:
    op: str  # + - * / ^
    left: "Expression"
    right: "Expression"


Expression = Num | Var | Un | Bin


# --------------------------------------------------------------- parsing


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens: list[tuple[str, object, int]] = []
        self._scan()
        self.i = 0

    def _scan(self):
        text, n = self.text, len(self.text)
        pos = 0
        while pos < n:
            c = text[pos]
            if c.isspace():
                pos += 1
                continue
            if c in "+-*/^()":
                self.tokens.append((c, c, pos))
                pos += 1
                continue
            if c.isdigit() or c == ".":
                start = pos
                while pos < n and (text[pos].isdigit() or text[pos] == "."):
                    pos += 1
                if pos < n and text[pos] in "eE":
                    probe = pos + 1
                    if probe < n and text[probe] in "+-":
                        probe += 1
                    if probe < n and text[probe].isdigit():
                        pos = probe
                        while pos < n and text[pos].isdigit():
                            pos += 1
                lit = text[start:pos]
                try:
                    val = float(lit)
                except ValueError:
                    raise ExpressionSyntaxError(f"bad number {lit!r}", start) from None
                self.tokens.append(("num", val, start))
                continue
            if c.isalpha() or c == "_":
                start = pos
                while pos < n and (text[pos].isalnum() or text[pos] == "_"):
                    pos += 1
                self.tokens.append(("name", text[start:pos], start))
                continue
            raise ExpressionSyntaxError(f"unexpected character {c!r}", pos)
        self.tokens.append(("end", None, n))

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok


class _Parser:
    def __init__(self, text: str, allowed_vars):
        self.tz = _Tokenizer(text)
        self.allowed = frozenset(allowed_vars)

    def parse(self) -> Expression:
        node = self.expr()
        kind, _, pos = self.tz.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected {kind!r}", pos)
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self.tz.peek()[0] in ("+", "-"):
            op = self.tz.next()[0]
            node = Bin(op, node, self.term())
        return node

    def term(self) -> Expression:
        node = self.unary()
        while self.tz.peek()[0] in ("*", "/"):
            op = self.tz.next()[0]
            node = Bin(op, node, self.unary())
        return node

    def unary(self) -> Expression:
        if self.tz.peek()[0] == "-":
            self.tz.next()
            return _neg(self.unary())
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        if self.tz.peek()[0] == "^":
            self.tz.next()
            # right-associative exponent; binds tighter than prefix minus
            return Bin("^", base, self.unary())
        return base

    def atom(self) -> Expression:
        kind, val, pos = self.tz.next()
        if kind == "num":
            return Num(float(val))
        if kind == "(":
            node = self.expr()
            k, _, p = self.tz.next()
            if k != ")":
                raise ExpressionSyntaxError("expected ')'", p)
            return node
        if kind == "name":
            if self.tz.peek()[0] == "(":
                if val not in FUNCTIONS:
                    raise UnknownIdentifier(str(val), pos)
                self.tz.next()
                arg = self.expr()
                k, _, p = self.tz.next()
                if k != ")":
                    raise ExpressionSyntaxError("expected ')'", p)
                return _neg(arg) if val == "neg" else Un(str(val), arg)
            if val not in self.allowed:
                raise UnknownIdentifier(str(val), pos)
            return Var(str(val))
        raise ExpressionSyntaxError(f"unexpected {kind!r}", pos)


def parse_expression(text: str, allowed_vars) -> Expression:
    """Parse expression text over the given variable and parameter names."""
    if not text or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    return _Parser(text, allowed_vars).parse()


def _neg(node: Expression) -> Expression:
    # collapse double negation so dualizing twice restores the original text
    if isinstance(node, Un) and node.op == "neg":
        return node.arg
    return Un("neg", node)


# ------------------------------------------------------------ evaluation


def evaluate(expr: Expression, bindings: dict) -> float:
    """Evaluate at scalar bindings with checked real arithmetic.

    Raises UnboundVariable for a missing name and DomainError for results
    outside real arithmetic (log of a non-positive value, square root of a
    negative, division by zero, negative base with fractional exponent).
    """
    return float(_eval_scalar(expr, bindings))


def _eval_scalar(expr: Expression, env: dict) -> float:
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        try:
            return float(env[expr.name])
        except KeyError:
            raise UnboundVariable(expr.name) from None
    if isinstance(expr, Un):
        x = _eval_scalar(expr.arg, env)
        op = expr.op
        if op == "neg":
            return -x
        if op == "sin":
            return math.sin(x)
        if op == "cos":
            return math.cos(x)
        if op == "exp":
            try:
                return math.exp(x)
            except OverflowError:
                raise DomainError(f"exp overflow at {x!r}") from None
        if op == "log":
            if x <= 0.0:
                raise DomainError(f"log of non-positive value {x!r}")
            return math.log(x)
        if op == "sqrt":
            if x < 0.0:
                raise DomainError(f"sqrt of negative value {x!r}")
            return math.sqrt(x)
        if op == "abs":
            return abs(x)
        raise ValueError(f"unknown unary op {op!r}")
    l = _eval_scalar(expr.left, env)
    r = _eval_scalar(expr.right, env)
    op = expr.op
    if op == "+":
        return l + r
    if op == "-":
        return l - r
    if op == "*":
        return l * r
    if op == "/":
        if r == 0.0:
            raise DomainError("division by zero")
        return l / r
    if op == "^":
        if l < 0.0 and r != round(r):
            raise DomainError(f"negative base {l!r} with fractional exponent {r!r}")
        if l == 0.0 and r < 0.0:
            raise DomainError("zero base with negative exponent")
        try:
            return math.pow(l, r)
        except (OverflowError, ValueError) as exc:
            raise DomainError(str(exc)) from None
    raise ValueError(f"unknown binary op {op!r}")


def eval_array(expr: Expression, env: dict) -> np.ndarray:
    """Evaluate with numpy broadcasting; no per-node domain checks.

    Bindings may be scalars or arrays. Domain violations surface as NaN or
    infinity; callers check finiteness and, when they need a precise
    message, re-evaluate pointwise through `evaluate`.
    """
    with np.errstate(all="ignore"):
        out = _eval_array(expr, env)
    return np.asarray(out, dtype=float)


def _eval_array(expr: Expression, env: dict):
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        try:
            return env[expr.name]
        except KeyError:
            raise UnboundVariable(expr.name) from None
    if isinstance(expr, Un):
        x = _eval_array(expr.arg, env)
        op = expr.op
        if op == "neg":
            return np.negative(x)
        if op == "abs":
            return np.abs(x)
        return getattr(np, op)(x)
    l = _eval_array(expr.left, env)
    r = _eval_array(expr.right, env)
    op = expr.op
    if op == "+":
        return np.add(l, r)
    if op == "-":
        return np.subtract(l, r)
    if op == "*":
        return np.multiply(l, r)
    if op == "/":
        return np.divide(l, r)
    return np.power(l, r)


# ----------------------------------------------------- partial derivatives


def partial(expr: Expression, var: str, bindings: dict, step: float = 1e-6):
    """Partial derivative of the expression with respect to one variable.

    When the expression is polynomial in `var` (the variable occurs only
    under +, -, *, prefix minus, and ^ with a numeric-literal exponent)
    the derivative tree is built symbolically and evaluated exactly.
    Otherwise a central difference (f(x+s) - f(x-s)) / 2s is used with
    s = step * max(1, |x|).

    Scalar bindings give a float; array bindings broadcast.
    """
    dtree = derivative_tree(expr, var)
    arrays = any(isinstance(v, np.ndarray) for v in bindings.values())
    if dtree is not None:
        if arrays:
            return eval_array(dtree, bindings)
        return evaluate(dtree, bindings)
    if var not in bindings:
        raise UnboundVariable(var)
    x = bindings[var]
    if arrays:
        s = step * np.maximum(1.0, np.abs(x))
        hi = eval_array(expr, {**bindings, var: x + s})
        lo = eval_array(expr, {**bindings, var: x - s})
        return (hi - lo) / (2.0 * s)
    x = float(x)
    s = step * max(1.0, abs(x))
    hi = evaluate(expr, {**bindings, var: x + s})
    lo = evaluate(expr, {**bindings, var: x - s})
    return (hi - lo) / (2.0 * s)


@lru_cache(maxsize=4096)
def derivative_tree(expr: Expression, var: str):
    """Symbolic derivative, or None when the polynomial rule does not apply."""
    if not _contains(expr, var):
        return Num(0.0)
    if isinstance(expr, Var):
        return Num(1.0)
    if isinstance(expr, Un) and expr.op == "neg":
        d = derivative_tree(expr.arg, var)
        return None if d is None else _neg_fold(d)
    if isinstance(expr, Bin):
        if expr.op in ("+", "-"):
            dl = derivative_tree(expr.left, var)
            dr = derivative_tree(expr.right, var)
            if dl is None or dr is None:
                return None
            return _add_fold(expr.op, dl, dr)
        if expr.op == "*":
            dl = derivative_tree(expr.left, var)
            dr = derivative_tree(expr.right, var)
            if dl is None or dr is None:
                return None
            return _add_fold("+", _mul_fold(dl, expr.right), _mul_fold(expr.left, dr))
        if expr.op == "^":
            c = _literal_value(expr.right)
            if c is None or _contains(expr.right, var):
                return None
            du = derivative_tree(expr.left, var)
            if du is None:
                return None
            if c == 0.0:
                return Num(0.0)
            # power rule c * u^(c-1) * u'
            if c == 1.0:
                return du
            pw = expr.left if c == 2.0 else Bin("^", expr.left, Num(c - 1.0))
            return _mul_fold(Num(c), _mul_fold(pw, du))
    return None


def _contains(expr: Expression, var: str) -> bool:
    if isinstance(expr, Var):
        return expr.name == var
    if isinstance(expr, Un):
        return _contains(expr.arg, var)
    if isinstance(expr, Bin):
        return _contains(expr.left, var) or _contains(expr.right, var)
    return False


def _literal_value(expr: Expression):
    """Value of a variable-free subtree, or None."""
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        return None
    if isinstance(expr, Un) and expr.op == "neg":
        v = _literal_value(expr.arg)
        return None if v is None else -v
    if isinstance(expr, Bin) and expr.op in ("+", "-", "*"):
        l = _literal_value(expr.left)
        r = _literal_value(expr.right)
        if l is None or r is None:
            return None
        return l + r if expr.op == "+" else (l - r if expr.op == "-" else l * r)
    return None


def _neg_fold(e: Expression) -> Expression:
    if isinstance(e, Num):
        return Num(-e.value)
    return _neg(e)


def _add_fold(op: str, l: Expression, r: Expression) -> Expression:
    if isinstance(r, Num) and r.value == 0.0:
        return l
    if isinstance(l, Num) and l.value == 0.0:
        return r if op == "+" else _neg_fold(r)
    return Bin(op, l, r)


def _mul_fold(l: Expression, r: Expression) -> Expression:
    if isinstance(l, Num):
        if l.value == 0.0:
            return Num(0.0)
        if l.value == 1.0:
            return r
    if isinstance(r, Num):
        if r.value == 0.0:
            return Num(0.0)
        if r.value == 1.0:
            return l
    return Bin("*", l, r)


def variables_in(expr: Expression) -> frozenset[str]:
    if isinstance(expr, Var):
        return frozenset((expr.name,))
    if isinstance(expr, Un):
        return variables_in(expr.arg)
    if isinstance(expr, Bin):
        return variables_in(expr.left) | variables_in(expr.right)
    return frozenset()


def substitute(expr: Expression, mapping: dict) -> Expression:
    """Replace variables by expressions (used by the duality transform)."""
    if isinstance(expr, Var):
        return mapping.get(expr.name, expr)
    if isinstance(expr, Un):
        arg = substitute(expr.arg, mapping)
        return _neg(arg) if expr.op == "neg" else Un(expr.op, arg)
    if isinstance(expr, Bin):
        return Bin(expr.op, substitute(expr.left, mapping), substitute(expr.right, mapping))
    return expr


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def to_string(expr: Expression) -> str:
    """Canonical text form; parse(to_string(e)) reproduces the tree."""
    return _print(expr, 0)


def _print(expr: Expression, parent_prec: int) -> str:
    if isinstance(expr, Num):
        v = expr.value
        if v < 0 or (v == 0 and math.copysign(1.0, v) < 0):
            return _print(_neg(Num(-v)), parent_prec)
        s = repr(v)
        return s[:-2] if s.endswith(".0") else s
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Un):
        if expr.op == "neg":
            inner = "-" + _print(expr.arg, _PREC["neg"])
            return f"({inner})" if parent_prec > _PREC["neg"] else inner
        return f"{expr.op}({_print(expr.arg, 0)})"
    prec = _PREC[expr.op]
    if expr.op == "^":
        # right associative: parenthesize a left child of equal precedence
        left = _print(expr.left, prec + 1)
        right = _print(expr.right, prec)
        s = f"{left}{expr.op}{right}"
    else:
        # left associative: parenthesize a right child of equal precedence
        left = _print(expr.left, prec)
        right = _print(expr.right, prec + 1)
        s = f"{left} {expr.op} {right}"
    return f"({s})" if parent_prec > prec else s
