"""Symbolic scalar expressions over real variables.

This is the expression core the rest of the toolkit is built on: candidate
barrier functions, system dynamics, controllers, Lie derivatives and
discrete differences are all trees of these nodes.  The grammar is fixed:

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' INT)?
    base   := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')' | '-' base

`^` takes a nonnegative integer literal exponent only, multiplication is
always explicit (`2*x`, never `2x`), and the recognised functions are
sin, cos, exp, tanh, sqrt, abs and sign.  NUMBER accepts ordinary decimal
and scientific notation.

Nodes are immutable (frozen dataclasses), so structural equality and
hashing come for free and expressions can be shared across threads.
Differentiation uses the convention d|u|/dx = sign(u)*u' with sign(0) = 0,
which is why `sign` is part of the node vocabulary even though barrier
candidates are not expected to use it directly.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import intervals

__all__ = [
    "Expression",
    "Const",
    "Var",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Func",
    "PolynomialInfo",
    "ExprError",
    "ParseError",
    "UnknownVariableError",
    "EvaluationError",
    "TaylorError",
    "FUNCTIONS",
    "parse_expression",
    "evaluate",
    "differentiate",
    "substitute",
    "classify",
    "taylor_polynomial",
    "transcendental_nodes",
    "replace_nodes",
    "monomial_map",
    "SMOOTH_FUNCTIONS",
    "variables",
    "functions_used",
    "to_string",
    "to_callable",
]

FUNCTIONS = ("sin", "cos", "exp", "tanh", "sqrt", "abs", "sign")

#: Functions that admit a Taylor expansion with a Lagrange remainder.
SMOOTH_FUNCTIONS = ("sin", "cos", "exp", "tanh")


class ExprError(Exception):
    """Base class for expression errors."""


class ParseError(ExprError):
    """Syntax error; `offset` is the byte offset into the input text."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownVariableError(ParseError):
    """A name that is neither a known function nor an allowed variable."""

    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown variable '{name}'", offset)
        self.name = name


class EvaluationError(ExprError):
    """Evaluation fault: unbound variable or non-finite intermediate."""


class TaylorError(ExprError):
    """Expression cannot be soundly polynomialized."""


# ---------------------------------------------------------------------------
# Node types
# ---------------------------------------------------------------------------


class Expression:
    """Base class for all nodes.  Provides operator sugar for building trees."""

    def __add__(self, other):
        return Add(self, _coerce(other))

    def __radd__(self, other):
        return Add(_coerce(other), self)

    def __sub__(self, other):
        return Sub(self, _coerce(other))

    def __rsub__(self, other):
        return Sub(_coerce(other), self)

    def __mul__(self, other):
        return Mul(self, _coerce(other))

    def __rmul__(self, other):
        return Mul(_coerce(other), self)

    def __truediv__(self, other):
        return Div(self, _coerce(other))

    def __rtruediv__(self, other):
        return Div(_coerce(other), self)

    def __pow__(self, exponent: int):
        return Pow(self, exponent)

    def __neg__(self):
        return _neg(self)

    def __str__(self) -> str:
        return to_string(self)


def _coerce(value) -> Expression:
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, float)):
        return Const(float(value))
    raise TypeError(f"cannot use {type(value).__name__} as an expression")


@dataclass(frozen=True, repr=False)
class Const(Expression):
    value: float

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, repr=False)
class Var(Expression):
    name: str

    def __repr__(self):
        return f"Var({self.name!r})"


@dataclass(frozen=True, repr=False)
class Neg(Expression):
    arg: Expression

    def __repr__(self):
        return f"Neg({self.arg!r})"


@dataclass(frozen=True, repr=False)
class Add(Expression):
    left: Expression
    right: Expression

    def __repr__(self):
        return f"Add({self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Sub(Expression):
    left: Expression
    right: Expression

    def __repr__(self):
        return f"Sub({self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Mul(Expression):
    left: Expression
    right: Expression

    def __repr__(self):
        return f"Mul({self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Div(Expression):
    left: Expression
    right: Expression

    def __repr__(self):
        return f"Div({self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Pow(Expression):
    base: Expression
    exponent: int

    def __post_init__(self):
        if not isinstance(self.exponent, int) or self.exponent < 0:
            raise ValueError("pow exponent must be a nonnegative integer")

    def __repr__(self):
        return f"Pow({self.base!r}, {self.exponent})"


@dataclass(frozen=True, repr=False)
class Func(Expression):
    name: str
    arg: Expression

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unsupported function '{self.name}'")

    def __repr__(self):
        return f"Func({self.name!r}, {self.arg!r})"


# ---------------------------------------------------------------------------
# Smart constructors: constant folding on exact operations only.
# Used by differentiate/substitute so derivative output stays readable;
# the parser never folds, keeping parse(print(e)) an exact round trip.
# ---------------------------------------------------------------------------


def _is_const(e: Expression, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def _add(a: Expression, b: Expression) -> Expression:
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def _sub(a: Expression, b: Expression) -> Expression:
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    return Sub(a, b)


def _mul(a: Expression, b: Expression) -> Expression:
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def _div(a: Expression, b: Expression) -> Expression:
    if _is_const(b, 1.0):
        return a
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return Const(0.0)
    return Div(a, b)


def _neg(a: Expression) -> Expression:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _pow(base: Expression, exponent: int) -> Expression:
    if exponent == 0:
        return Const(1.0)
    if exponent == 1:
        return base
    if _is_const(base):
        return Const(base.value**exponent)
    return Pow(base, exponent)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_NUMBER_RE = re.compile(r"\d+(\.\d+)?([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?")
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_INT_RE = re.compile(r"\d+")


class _Parser:
    def __init__(self, text: str, allowed_vars: frozenset[str]):
        self.text = text
        self.pos = 0
        self.allowed = allowed_vars

    def error(self, message: str) -> ParseError:
        return ParseError(message, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            raise self.error(f"expected '{ch}'")
        self.pos += 1

    def parse(self) -> Expression:
        e = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            raise self.error("unexpected trailing input")
        return e

    def expr(self) -> Expression:
        e = self.term()
        while True:
            ch = self.peek()
            if ch == "+":
                self.pos += 1
                e = Add(e, self.term())
            elif ch == "-":
                self.pos += 1
                e = Sub(e, self.term())
            else:
                return e

    def term(self) -> Expression:
        e = self.factor()
        while True:
            ch = self.peek()
            if ch == "*":
                self.pos += 1
                e = Mul(e, self.factor())
            elif ch == "/":
                self.pos += 1
                e = Div(e, self.factor())
            else:
                return e

    def factor(self) -> Expression:
        e = self.base()
        if self.peek() == "^":
            self.pos += 1
            self.skip_ws()
            m = _INT_RE.match(self.text, self.pos)
            if not m or (m.end() < len(self.text) and self.text[m.end()] == "."):
                raise self.error("exponent must be a nonnegative integer literal")
            self.pos = m.end()
            e = Pow(e, int(m.group()))
        return e

    def base(self) -> Expression:
        ch = self.peek()
        if ch == "":
            raise self.error("unexpected end of input")
        if ch == "-":
            self.pos += 1
            inner = self.base()
            # Fold a negated literal so constants produced by folding print
            # as "-3" and still round-trip.
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Neg(inner)
        if ch == "(":
            self.pos += 1
            e = self.expr()
            self.expect(")")
            return e
        m = _NUMBER_RE.match(self.text, self.pos)
        if m:
            self.pos = m.end()
            return Const(float(m.group()))
        m = _NAME_RE.match(self.text, self.pos)
        if m:
            name = m.group()
            start = self.pos
            self.pos = m.end()
            if self.peek() == "(":
                if name not in FUNCTIONS:
                    self.pos = start
                    raise self.error(f"unknown function '{name}'")
                self.pos += 1
                arg = self.expr()
                self.expect(")")
                return Func(name, arg)
            if name not in self.allowed:
                raise UnknownVariableError(name, start)
            return Var(name)
        raise self.error(f"unexpected character {ch!r}")


def parse_expression(text: str, allowed_vars: Iterable[str]) -> Expression:
    """Parse `text` into an expression tree.

    Every variable name occurring in `text` must be in `allowed_vars`;
    anything else raises :class:`UnknownVariableError` naming the offender.
    Syntax errors raise :class:`ParseError` carrying the byte offset.
    """
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    return _Parser(text, frozenset(allowed_vars)).parse()


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC_SUM = 1
_PREC_PROD = 2
_PREC_POW = 3
_PREC_ATOM = 4


def _fmt_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _to_string(e: Expression) -> tuple[str, int]:
    """Return (text, precedence of the outermost construct)."""
    match e:
        case Const(value):
            if value < 0:
                return f"-{_fmt_number(-value)}", _PREC_POW
            return _fmt_number(value), _PREC_ATOM
        case Var(name):
            return name, _PREC_ATOM
        case Func(name, arg):
            return f"{name}({to_string(arg)})", _PREC_ATOM
        case Neg(arg):
            text, prec = _to_string(arg)
            if prec < _PREC_ATOM:
                text = f"({text})"
            return f"-{text}", _PREC_POW
        case Add(left, right):
            lt = _paren(left, _PREC_SUM)
            rt = _paren(right, _PREC_SUM + 1)
            return f"{lt} + {rt}", _PREC_SUM
        case Sub(left, right):
            lt = _paren(left, _PREC_SUM)
            rt = _paren(right, _PREC_SUM + 1)
            return f"{lt} - {rt}", _PREC_SUM
        case Mul(left, right):
            lt = _paren(left, _PREC_PROD)
            rt = _paren(right, _PREC_PROD + 1)
            return f"{lt}*{rt}", _PREC_PROD
        case Div(left, right):
            lt = _paren(left, _PREC_PROD)
            rt = _paren(right, _PREC_PROD + 1)
            return f"{lt}/{rt}", _PREC_PROD
        case Pow(base, exponent):
            bt, prec = _to_string(base)
            if prec < _PREC_ATOM:
                bt = f"({bt})"
            return f"{bt}^{exponent}", _PREC_POW
    raise TypeError(f"not an expression node: {e!r}")


def _paren(e: Expression, min_prec: int) -> str:
    text, prec = _to_string(e)
    return f"({text})" if prec < min_prec else text


def to_string(e: Expression) -> str:
    """Render `e` in the input grammar; parse(to_string(e)) == e."""
    return _to_string(e)[0]


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

_FUNC_IMPL: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "tanh": math.tanh,
    "sqrt": math.sqrt,
    "abs": abs,
    "sign": lambda v: float((v > 0) - (v < 0)),
}


def evaluate(e: Expression, point: Mapping[str, float]) -> float:
    """IEEE double value of `e` at `point`.

    Raises :class:`EvaluationError` for unbound variables and for any
    non-finite intermediate (division by zero, sqrt of a negative,
    overflow) rather than propagating NaN or crashing.
    """

    def walk(node: Expression) -> float:
        match node:
            case Const(value):
                return value
            case Var(name):
                try:
                    return point[name]
                except KeyError:
                    raise EvaluationError(f"unbound variable '{name}'") from None
            case Neg(arg):
                return -walk(arg)
            case Add(left, right):
                return walk(left) + walk(right)
            case Sub(left, right):
                return walk(left) - walk(right)
            case Mul(left, right):
                return walk(left) * walk(right)
            case Div(left, right):
                denom = walk(right)
                if denom == 0.0:
                    raise EvaluationError("division by zero")
                return walk(left) / denom
            case Pow(base, exponent):
                return walk(base) ** exponent
            case Func(name, arg):
                v = walk(arg)
                if name == "sqrt" and v < 0:
                    raise EvaluationError(f"sqrt of negative value {v}")
                return _FUNC_IMPL[name](v)
        raise TypeError(f"not an expression node: {node!r}")

    try:
        result = walk(e)
    except OverflowError as exc:
        raise EvaluationError(f"overflow: {exc}") from None
    if not math.isfinite(result):
        raise EvaluationError(f"non-finite result {result}")
    return result


def to_callable(e: Expression, var_order: Iterable[str]) -> Callable[[np.ndarray], np.ndarray]:
    """Compile `e` to a vectorized function of an (n_points, dim) array.

    Column i of the input corresponds to var_order[i].  Faulting points
    (division by zero and friends) yield NaN/inf entries instead of
    raising, so callers can treat non-finite outputs as per-point faults.
    """
    index = {name: i for i, name in enumerate(var_order)}

    def build(node: Expression) -> Callable[[np.ndarray], np.ndarray]:
        match node:
            case Const(value):
                return lambda X: np.full(X.shape[0], value)
            case Var(name):
                i = index[name]
                return lambda X: X[:, i]
            case Neg(arg):
                f = build(arg)
                return lambda X: -f(X)
            case Add(left, right):
                fl, fr = build(left), build(right)
                return lambda X: fl(X) + fr(X)
            case Sub(left, right):
                fl, fr = build(left), build(right)
                return lambda X: fl(X) - fr(X)
            case Mul(left, right):
                fl, fr = build(left), build(right)
                return lambda X: fl(X) * fr(X)
            case Div(left, right):
                fl, fr = build(left), build(right)
                return lambda X: fl(X) / fr(X)
            case Pow(base, exponent):
                f = build(base)
                n = exponent
                return lambda X: f(X) ** n
            case Func(name, arg):
                f = build(arg)
                g = {
                    "sin": np.sin,
                    "cos": np.cos,
                    "exp": np.exp,
                    "tanh": np.tanh,
                    "sqrt": np.sqrt,
                    "abs": np.abs,
                    "sign": np.sign,
                }[name]
                return lambda X: g(f(X))
        raise TypeError(f"not an expression node: {node!r}")

    f = build(e)

    def run(X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        with np.errstate(all="ignore"):
            return f(X)

    return run


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------


def differentiate(e: Expression, var: str) -> Expression:
    """Symbolic partial derivative of `e` with respect to `var`.

    abs differentiates to sign(u)*u' (so the derivative at u = 0 is 0);
    sign differentiates to 0, its almost-everywhere derivative.
    """
    match e:
        case Const(_):
            return Const(0.0)
        case Var(name):
            return Const(1.0 if name == var else 0.0)
        case Neg(arg):
            return _neg(differentiate(arg, var))
        case Add(left, right):
            return _add(differentiate(left, var), differentiate(right, var))
        case Sub(left, right):
            return _sub(differentiate(left, var), differentiate(right, var))
        case Mul(left, right):
            return _add(
                _mul(differentiate(left, var), right),
                _mul(left, differentiate(right, var)),
            )
        case Div(left, right):
            num = _sub(
                _mul(differentiate(left, var), right),
                _mul(left, differentiate(right, var)),
            )
            return _div(num, _pow(right, 2))
        case Pow(base, exponent):
            if exponent == 0:
                return Const(0.0)
            inner = differentiate(base, var)
            return _mul(_mul(Const(float(exponent)), _pow(base, exponent - 1)), inner)
        case Func(name, arg):
            inner = differentiate(arg, var)
            match name:
                case "sin":
                    outer = Func("cos", arg)
                case "cos":
                    outer = _neg(Func("sin", arg))
                case "exp":
                    outer = Func("exp", arg)
                case "tanh":
                    outer = _sub(Const(1.0), _pow(Func("tanh", arg), 2))
                case "sqrt":
                    return _div(inner, _mul(Const(2.0), Func("sqrt", arg)))
                case "abs":
                    outer = Func("sign", arg)
                case "sign":
                    return Const(0.0)
                case _:  # pragma: no cover
                    raise TypeError(name)
            return _mul(outer, inner)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Substitution
# ---------------------------------------------------------------------------


def substitute(e: Expression, bindings: Mapping[str, Expression]) -> Expression:
    """Simultaneously replace variables per `bindings`.

    Subtrees that mention no bound variable are returned as-is (so an
    empty substitution is the structural identity); rebuilt subtrees are
    lightly constant-folded.
    """
    if not bindings:
        return e
    keys = frozenset(bindings)

    def walk(node: Expression) -> Expression:
        if not (variables(node) & keys):
            return node
        match node:
            case Var(name):
                return bindings[name]
            case Neg(arg):
                return _neg(walk(arg))
            case Add(left, right):
                return _add(walk(left), walk(right))
            case Sub(left, right):
                return _sub(walk(left), walk(right))
            case Mul(left, right):
                return _mul(walk(left), walk(right))
            case Div(left, right):
                return _div(walk(left), walk(right))
            case Pow(base, exponent):
                return _pow(walk(base), exponent)
            case Func(name, arg):
                folded = walk(arg)
                if isinstance(folded, Const):
                    try:
                        return Const(evaluate(Func(name, folded), {}))
                    except EvaluationError:
                        pass
                return Func(name, folded)
        raise TypeError(f"not an expression node: {node!r}")

    return walk(e)


def variables(e: Expression) -> frozenset[str]:
    """Set of variable names occurring in `e`."""
    match e:
        case Const(_):
            return frozenset()
        case Var(name):
            return frozenset((name,))
        case Neg(arg) | Func(_, arg) | Pow(arg, _):
            return variables(arg)
        case Add(left, right) | Sub(left, right) | Mul(left, right) | Div(left, right):
            return variables(left) | variables(right)
    raise TypeError(f"not an expression node: {e!r}")


def functions_used(e: Expression) -> frozenset[str]:
    """Names of the unary functions occurring in `e`."""
    match e:
        case Const(_) | Var(_):
            return frozenset()
        case Neg(arg) | Pow(arg, _):
            return functions_used(arg)
        case Func(name, arg):
            return functions_used(arg) | {name}
        case Add(left, right) | Sub(left, right) | Mul(left, right) | Div(left, right):
            return functions_used(left) | functions_used(right)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Polynomial classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolynomialInfo:
    """Whether an expression is a polynomial, and its structural degree.

    The degree of a sum is the max of the term degrees (no cancellation
    detection), a product sums factor degrees, and pow multiplies.
    `degree` is None when `is_polynomial` is False.
    """

    is_polynomial: bool
    degree: int | None = None


def classify(e: Expression) -> PolynomialInfo:
    deg = _poly_degree(e)
    if deg is None:
        return PolynomialInfo(False)
    return PolynomialInfo(True, deg)


def monomial_map(
    e: Expression, var_order: Sequence[str]
) -> dict[tuple[int, ...], float] | None:
    """Expand a polynomial into {exponent vector: coefficient}, or None.

    Returns None when `e` is not a polynomial over `var_order` (division,
    functions, or stray variables).  Zero coefficients are dropped, so two
    polynomials with the same expansion map compare equal.
    """
    index = {name: i for i, name in enumerate(var_order)}
    zero = tuple([0] * len(var_order))

    def merge(a: dict, b: dict, sgn: float) -> dict:
        out = dict(a)
        for k, v in b.items():
            out[k] = out.get(k, 0.0) + sgn * v
        return {k: v for k, v in out.items() if v != 0.0}

    def convolve(a: dict, b: dict) -> dict:
        out: dict[tuple[int, ...], float] = {}
        for ka, va in a.items():
            for kb, vb in b.items():
                k = tuple(x + y for x, y in zip(ka, kb))
                out[k] = out.get(k, 0.0) + va * vb
        return {k: v for k, v in out.items() if v != 0.0}

    def walk(node: Expression) -> dict | None:
        match node:
            case Const(value):
                return {zero: value} if value != 0.0 else {}
            case Var(name):
                if name not in index:
                    return None
                key = tuple(1 if i == index[name] else 0 for i in range(len(var_order)))
                return {key: 1.0}
            case Neg(arg):
                inner = walk(arg)
                return None if inner is None else {k: -v for k, v in inner.items()}
            case Add(left, right):
                l, r = walk(left), walk(right)
                return None if l is None or r is None else merge(l, r, 1.0)
            case Sub(left, right):
                l, r = walk(left), walk(right)
                return None if l is None or r is None else merge(l, r, -1.0)
            case Mul(left, right):
                l, r = walk(left), walk(right)
                return None if l is None or r is None else convolve(l, r)
            case Pow(base, exponent):
                b = walk(base)
                if b is None:
                    return None
                out = {zero: 1.0}
                for _ in range(exponent):
                    out = convolve(out, b)
                return out
            case Div(_, _) | Func(_, _):
                return None
        raise TypeError(f"not an expression node: {node!r}")

    return walk(e)


def _poly_degree(e: Expression) -> int | None:
    match e:
        case Const(_):
            return 0
        case Var(_):
            return 1
        case Neg(arg):
            return _poly_degree(arg)
        case Add(left, right) | Sub(left, right):
            dl, dr = _poly_degree(left), _poly_degree(right)
            return None if dl is None or dr is None else max(dl, dr)
        case Mul(left, right):
            dl, dr = _poly_degree(left), _poly_degree(right)
            return None if dl is None or dr is None else dl + dr
        case Pow(base, exponent):
            db = _poly_degree(base)
            return None if db is None else db * exponent
        case Div(_, _) | Func(_, _):
            return None
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# Taylor polynomialization with Lagrange remainder
# ---------------------------------------------------------------------------


def transcendental_nodes(e: Expression) -> set[Func]:
    """Distinct non-polynomial function nodes in `e`."""
    out: set[Func] = set()

    def walk(node: Expression):
        match node:
            case Func(_, arg):
                out.add(node)
                walk(arg)
            case Neg(arg) | Pow(arg, _):
                walk(arg)
            case Add(l, r) | Sub(l, r) | Mul(l, r) | Div(l, r):
                walk(l)
                walk(r)
            case _:
                pass

    walk(e)
    return out


def replace_nodes(e: Expression, mapping: Mapping[Func, Expression]) -> Expression:
    def walk(node: Expression) -> Expression:
        if isinstance(node, Func) and node in mapping:
            return mapping[node]
        match node:
            case Const(_) | Var(_):
                return node
            case Neg(arg):
                return _neg(walk(arg))
            case Add(left, right):
                return _add(walk(left), walk(right))
            case Sub(left, right):
                return _sub(walk(left), walk(right))
            case Mul(left, right):
                return _mul(walk(left), walk(right))
            case Div(left, right):
                return _div(walk(left), walk(right))
            case Pow(base, exponent):
                return _pow(walk(base), exponent)
            case Func(name, arg):
                return Func(name, walk(arg))
        raise TypeError(f"not an expression node: {node!r}")

    return walk(e)


def _expand_node(
    node: Func, var: str, center: float, order: int, radius: float
) -> tuple[Expression, float]:
    """Taylor polynomial and Lagrange remainder bound for one function node.

    The node is treated as a univariate function g(var); coefficients come
    from repeated symbolic differentiation evaluated at the center.  When
    the first few coefficients past `order` vanish (sin at 0, say) the
    remainder uses the next nonzero derivative order, which is both valid
    and noticeably sharper.
    """
    if node.name not in SMOOTH_FUNCTIONS:
        raise TaylorError(f"cannot Taylor-expand non-smooth function '{node.name}'")

    # Derivative chain g, g', g'', ... evaluated lazily up to what we need.
    chain: list[Expression] = [node]

    def deriv(k: int) -> Expression:
        while len(chain) <= k:
            chain.append(differentiate(chain[-1], var))
        return chain[k]

    def coeff(k: int) -> float:
        return evaluate(deriv(k), {var: center}) / math.factorial(k)

    shifted = _sub(Var(var), Const(center)) if center != 0.0 else Var(var)
    poly: Expression = Const(0.0)
    for k in range(order + 1):
        c = coeff(k)
        if c != 0.0:
            poly = _add(poly, _mul(Const(c), _pow(shifted, k)))

    m = order
    while m < order + 6 and coeff(m + 1) == 0.0:
        m += 1
    lo, hi = intervals.evaluate(deriv(m + 1), {var: (center - radius, center + radius)})
    sup = max(abs(lo), abs(hi))
    bound = sup * radius ** (m + 1) / math.factorial(m + 1)
    return poly, bound


def taylor_polynomial(
    e: Expression,
    var: str,
    center: float,
    order: int,
    radius: float,
    other_bounds: Mapping[str, tuple[float, float]] | None = None,
) -> tuple[Expression, float]:
    """Replace transcendental nodes in `var` by Taylor polynomials.

    Returns (polynomialized expression, remainder bound): for every point
    with |var - center| <= radius (and the other variables inside
    `other_bounds`, when given), |e - result| <= bound.  Polynomial input
    comes back unchanged with bound 0.  The bound is inf when a node's
    surroundings cannot be bounded, e.g. an unbounded variable multiplies
    a sin term and no `other_bounds` entry constrains it.

    Each transcendental node's argument must involve `var` only;
    transcendentals over other or multiple variables raise TaylorError.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if radius <= 0:
        raise ValueError("radius must be > 0")
    if classify(e).is_polynomial:
        return e, 0.0

    nodes = sorted(transcendental_nodes(e), key=to_string)
    expansions: dict[Func, tuple[Expression, float]] = {}
    for node in nodes:
        arg_vars = variables(node.arg)
        if not arg_vars:
            expansions[node] = (Const(evaluate(node, {})), 0.0)
            continue
        if arg_vars != {var}:
            raise TaylorError(
                f"transcendental argument over {sorted(arg_vars)} is not univariate in '{var}'"
            )
        expansions[node] = _expand_node(node, var, center, order, radius)

    result = replace_nodes(e, {n: p for n, (p, _) in expansions.items()})

    # Error propagation: treat each expanded node as a fresh variable w_j and
    # bound |dE/dw_j| over the box; the mean value theorem then gives
    # |E(true nodes) - E(polynomials)| <= sum_j sup|dE/dw_j| * delta_j.
    box: dict[str, tuple[float, float]] = dict(other_bounds or {})
    box[var] = (center - radius, center + radius)
    placeholders = {node: Var(f"__w{i}") for i, node in enumerate(nodes)}
    host = replace_nodes(e, placeholders)
    total = 0.0
    for i, node in enumerate(nodes):
        poly, delta = expansions[node]
        if delta == 0.0:
            continue
        g_lo, g_hi = intervals.evaluate(node, box)
        p_lo, p_hi = intervals.evaluate(poly, box)
        w_box = dict(box)
        for j, other in enumerate(nodes):
            o_lo, o_hi = intervals.evaluate(other, box)
            op_lo, op_hi = intervals.evaluate(expansions[other][0], box)
            od = expansions[other][1]
            w_box[f"__w{j}"] = (min(o_lo, op_lo - od), max(o_hi, op_hi + od))
        w_box[f"__w{i}"] = (min(g_lo, p_lo - delta), max(g_hi, p_hi + delta))
        s_lo, s_hi = intervals.evaluate(differentiate(host, f"__w{i}"), w_box)
        total += max(abs(s_lo), abs(s_hi)) * delta

    return result, total
