"""Meromorphic expressions of one complex variable.

Expressions are small immutable trees built by :func:`parse`.  They evaluate
on Python complex scalars or on complex numpy arrays, and every tree has a
derivative tree (see :func:`derivative`).

Grammar::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := "-" factor | atom ("^" integer)?
    atom   := number | "i" | <variable> | func "(" expr ")" | "(" expr ")"
    func   := "exp" | "sin" | "cos" | "log"
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "ExprError",
    "ParseError",
    "UnknownIdentifier",
    "PoleHit",
    "NotMeromorphic",
    "Expr",
    "Const",
    "Var",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Neg",
    "Pow",
    "Func",
    "SpecialPoint",
    "parse",
    "evaluate",
    "eval_derivative",
    "derivative",
    "format_expr",
    "local_order",
]

FUNCTIONS = ("exp", "sin", "cos", "log")


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifier(ParseError):
    pass


class PoleHit(ExprError, ZeroDivisionError):
    """Evaluation reached a division by zero or log(0)."""


class NotMeromorphic(ExprError):
    pass


Number = Union[complex, np.ndarray]


class Expr:
    """Base class of expression nodes."""

    def __call__(self, z=None, **env):
        return evaluate(self, z, **env)

    def __str__(self):
        return format_expr(self)


@dataclass(frozen=True)
class Const(Expr):
    value: complex


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr


@dataclass(frozen=True)
class SpecialPoint:
    location: complex
    declared_kind: str = "unknown"  # "zero" | "pole" | "unknown"

    def __post_init__(self):
        if self.declared_kind not in ("zero", "pole", "unknown"):
            raise ValueError(f"bad declared_kind {self.declared_kind!r}")


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            offset = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[offset]!r}", offset)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.variables = tuple(variables)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, off = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {found}", off)

    def parse(self) -> Expr:
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {val!r}", off)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.factor()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def factor(self) -> Expr:
        if self.peek()[1] == "-":
            self.take()
            return Neg(self.factor())
        node = self.atom()
        if self.peek()[1] == "^":
            self.take()
            sign = 1
            if self.peek()[1] == "-":
                self.take()
                sign = -1
            kind, val, off = self.take()
            if kind != "num" or not val.isdigit():
                raise ParseError("exponent must be an integer literal", off)
            node = Pow(node, sign * int(val))
        return node

    def atom(self) -> Expr:
        kind, val, off = self.take()
        if kind == "num":
            return Const(complex(float(val)))
        if kind == "name":
            if val == "i":
                return Const(1j)
            if val in self.variables:
                return Var(val)
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(val, arg)
            raise UnknownIdentifier(f"unknown identifier {val!r}", off)
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {found}", off)


def parse(text: str, variables: Sequence[str] = ("z",)) -> Expr:
    """Parse ``text`` into an expression tree.

    ``variables`` lists the identifiers treated as free variables; the
    default is the single complex variable ``z``.
    """
    return _Parser(text, variables).parse()


# --------------------------------------------------------------------------
# evaluation


def _check_finite_div(den):
    if np.ndim(den) == 0:
        if den == 0:
            raise PoleHit("division by zero (pole hit)")
    elif np.any(den == 0):
        raise PoleHit("division by zero (pole hit)")


def _eval(node: Expr, env: Mapping[str, Number], strict: bool = True):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise ExprError(f"no value bound for variable {node.name!r}") from None
    if isinstance(node, Add):
        return _eval(node.left, env, strict) + _eval(node.right, env, strict)
    if isinstance(node, Sub):
        return _eval(node.left, env, strict) - _eval(node.right, env, strict)
    if isinstance(node, Mul):
        return _eval(node.left, env, strict) * _eval(node.right, env, strict)
    if isinstance(node, Div):
        num = _eval(node.left, env, strict)
        den = _eval(node.right, env, strict)
        if strict:
            _check_finite_div(den)
        return num / den
    if isinstance(node, Neg):
        return -_eval(node.arg, env, strict)
    if isinstance(node, Pow):
        base = _eval(node.base, env, strict)
        if node.exponent < 0:
            if strict:
                _check_finite_div(base)
            return 1.0 / _ipow(base, -node.exponent)
        return _ipow(base, node.exponent)
    if isinstance(node, Func):
        arg = _eval(node.arg, env, strict)
        if node.name == "log" and strict:
            _check_finite_div(arg)
        return _FUNCS[node.name](arg)
    raise TypeError(f"not an expression node: {node!r}")


def _ipow(base, n: int):
    # repeated squaring keeps z^n exact for small integer n
    result = 1.0 + 0j if np.ndim(base) == 0 else np.ones_like(base)
    while n:
        if n & 1:
            result = result * base
        base = base * base
        n >>= 1
    return result


_FUNCS = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "log": np.log}


def evaluate(expr: Expr, z=None, *, strict: bool = True, **env):
    """Evaluate ``expr`` at ``z`` (bound to ``"z"``) and any named variables.

    Scalars give a Python ``complex``; array arguments give complex arrays.
    Raises :class:`PoleHit` on division by zero, unless ``strict`` is false,
    in which case the offending entries come back as inf/nan.
    """
    if z is not None:
        env["z"] = z
    values = {k: _as_complex(v) for k, v in env.items()}
    with np.errstate(all="ignore"):
        try:
            out = _eval(expr, values, strict)
        except ZeroDivisionError as exc:
            if isinstance(exc, PoleHit):
                raise
            raise PoleHit("division by zero in constant subexpression") from None
    shape = np.broadcast_shapes(*(np.shape(v) for v in values.values())) if values else ()
    if np.ndim(out) == 0 and shape == ():
        return complex(out)
    return np.broadcast_to(np.asarray(out, dtype=complex), shape).copy()


def _as_complex(v):
    if np.ndim(v) == 0:
        return np.complex128(v)
    return np.asarray(v, dtype=complex)


# --------------------------------------------------------------------------
# differentiation

_ZERO = Const(0j)
_ONE = Const(1 + 0j)


def _is_const(node, value=None):
    return isinstance(node, Const) and (value is None or node.value == value)


def _add(a, b):
    if _is_const(a, 0):
        return b
    if _is_const(b, 0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    return Add(a, b)


def _sub(a, b):
    if _is_const(b, 0):
        return a
    if _is_const(a, 0):
        return _neg(b)
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    return Sub(a, b)


def _mul(a, b):
    if _is_const(a, 0) or _is_const(b, 0):
        return _ZERO
    if _is_const(a, 1):
        return b
    if _is_const(b, 1):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    return Mul(a, b)


def _neg(a):
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _pow(base, n):
    if n == 0:
        return _ONE
    if n == 1:
        return base
    return Pow(base, n)


@functools.lru_cache(maxsize=1024)
def derivative(expr: Expr, var: str = "z") -> Expr:
    """Derivative tree of ``expr`` with respect to ``var``."""
    d = lambda e: derivative(e, var)  # noqa: E731
    if isinstance(expr, Const):
        return _ZERO
    if isinstance(expr, Var):
        return _ONE if expr.name == var else _ZERO
    if isinstance(expr, Add):
        return _add(d(expr.left), d(expr.right))
    if isinstance(expr, Sub):
        return _sub(d(expr.left), d(expr.right))
    if isinstance(expr, Mul):
        return _add(_mul(d(expr.left), expr.right), _mul(expr.left, d(expr.right)))
    if isinstance(expr, Div):
        u, v = expr.left, expr.right
        du, dv = d(u), d(v)
        if _is_const(dv, 0):
            return Div(du, v) if not _is_const(du, 0) else _ZERO
        return Div(_sub(_mul(du, v), _mul(u, dv)), _pow(v, 2))
    if isinstance(expr, Neg):
        return _neg(d(expr.arg))
    if isinstance(expr, Pow):
        n = expr.exponent
        if n == 0:
            return _ZERO
        return _mul(_mul(Const(complex(n)), _pow(expr.base, n - 1)), d(expr.base))
    if isinstance(expr, Func):
        u = expr.arg
        du = d(u)
        if expr.name == "exp":
            outer = expr
        elif expr.name == "sin":
            outer = Func("cos", u)
        elif expr.name == "cos":
            outer = _neg(Func("sin", u))
        else:
            outer = Pow(u, -1)
        return _mul(outer, du)
    raise TypeError(f"not an expression node: {expr!r}")


def eval_derivative(expr: Expr, z, var: str = "z", *, strict: bool = True, **env):
    return evaluate(derivative(expr, var), z, strict=strict, **env)


# --------------------------------------------------------------------------
# formatting

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _fmt_number(x: float) -> str:
    s = repr(float(x))
    if s in ("inf", "-inf", "nan"):
        raise ExprError(f"cannot format non-finite constant {s}")
    return s


def _fmt_const(c: complex) -> str:
    re_, im = c.real, c.imag
    if im == 0:
        s = _fmt_number(abs(re_))
        return f"-{s}" if math.copysign(1, re_) < 0 and re_ != 0 else s
    if re_ == 0:
        s = "i" if abs(im) == 1 else f"{_fmt_number(abs(im))}*i"
        return f"-{s}" if im < 0 else s
    op = "-" if im < 0 else "+"
    return f"({_fmt_const(complex(re_))} {op} {_fmt_const(complex(0, abs(im)))})"


def format_expr(expr: Expr) -> str:
    """Render ``expr`` as text that :func:`parse` maps back to an equal tree value."""

    def wrap(node, min_prec, right=False):
        s = fmt(node)
        p = _PREC.get(type(node), 5)
        if isinstance(node, Const) and s != "i" and (
            node.value.imag != 0 or s.startswith("-")
        ):
            s = s if s.startswith("(") else f"({s})"
            p = 5
        if p < min_prec or (right and p == min_prec):
            return f"({s})"
        return s

    def fmt(node):
        if isinstance(node, Const):
            return _fmt_const(node.value)
        if isinstance(node, Var):
            return node.name
        if isinstance(node, Add):
            return f"{wrap(node.left, 1)} + {wrap(node.right, 1, True)}"
        if isinstance(node, Sub):
            return f"{wrap(node.left, 1)} - {wrap(node.right, 1, True)}"
        if isinstance(node, Mul):
            return f"{wrap(node.left, 2)}*{wrap(node.right, 2, True)}"
        if isinstance(node, Div):
            return f"{wrap(node.left, 2)}/{wrap(node.right, 2, True)}"
        if isinstance(node, Neg):
            return f"-{wrap(node.arg, 3)}"
        if isinstance(node, Pow):
            return f"{wrap(node.base, 5)}^{node.exponent}"
        if isinstance(node, Func):
            return f"{node.name}({fmt(node.arg)})"
        raise TypeError(f"not an expression node: {node!r}")

    return fmt(expr)


# --------------------------------------------------------------------------
# order probing

ORDER_TOLERANCE = 0.1


def local_order(
    expr: Expr,
    p: SpecialPoint | complex,
    radii: Sequence[float] | None = None,
    n_angles: int = 8,
) -> int:
    """Signed order of ``expr`` at an isolated zero or pole.

    Fits the slope of log|f| against log|z - p| over a shrinking ladder of
    radii (1e-2 down to 1e-5 by default), averaging |f| over ``n_angles``
    directions.  Positive result = zero, negative = pole, 0 = regular nonzero.
    """
    loc = p.location if isinstance(p, SpecialPoint) else complex(p)
    if radii is None:
        radii = np.logspace(-2, -5, 7)
    radii = np.asarray(radii, dtype=float)
    angles = 2 * np.pi * (np.arange(n_angles) + 0.3731) / n_angles
    pts = loc + radii[:, None] * np.exp(1j * angles)[None, :]
    vals = np.abs(evaluate(expr, pts))
    if not np.all(np.isfinite(vals)) or np.any(vals == 0):
        raise NotMeromorphic(f"expression not finite and nonzero near {loc}")
    logf = np.log(vals).mean(axis=1)
    slope = np.polyfit(np.log(radii), logf, 1)[0]
    order = int(round(slope))
    if abs(slope - order) > ORDER_TOLERANCE:
        raise NotMeromorphic(f"not meromorphic-like at {loc}: slope {slope:.4f}")
    return order
