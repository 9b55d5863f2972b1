"""Plain interval arithmetic for sound range enclosures of expressions.

Used to bound derivative magnitudes for Lagrange remainders and to
propagate Taylor truncation error through the surrounding expression.
Endpoints are ordinary doubles without outward rounding; the enclosures
here pad analytic bounds, where float-level slack is irrelevant.

An interval is a (lo, hi) tuple with lo <= hi; unbounded variables map to
(-inf, inf) and any operation that can blow up (division through zero)
widens to the full line rather than raising.
"""

from __future__ import annotations

import math
from typing import Mapping

Interval = tuple[float, float]

FULL: Interval = (-math.inf, math.inf)


def _mul_ends(a: float, b: float) -> float:
    # 0 * inf arises from endpoint products of valid intervals; treat as 0,
    # which keeps the hull conservative because the other products dominate.
    if (a == 0.0 and math.isinf(b)) or (b == 0.0 and math.isinf(a)):
        return 0.0
    return a * b


def add(x: Interval, y: Interval) -> Interval:
    return (x[0] + y[0], x[1] + y[1])


def sub(x: Interval, y: Interval) -> Interval:
    return (x[0] - y[1], x[1] - y[0])


def neg(x: Interval) -> Interval:
    return (-x[1], -x[0])


def mul(x: Interval, y: Interval) -> Interval:
    products = [
        _mul_ends(x[0], y[0]),
        _mul_ends(x[0], y[1]),
        _mul_ends(x[1], y[0]),
        _mul_ends(x[1], y[1]),
    ]
    if any(math.isnan(p) for p in products):
        return FULL
    return (min(products), max(products))


def div(x: Interval, y: Interval) -> Interval:
    if y[0] <= 0.0 <= y[1]:
        return FULL
    return mul(x, (1.0 / y[1], 1.0 / y[0]))


def pow_int(x: Interval, n: int) -> Interval:
    if n == 0:
        return (1.0, 1.0)
    if n % 2 == 1 or x[0] >= 0.0:
        return (x[0] ** n, x[1] ** n)
    if x[1] <= 0.0:
        return (x[1] ** n, x[0] ** n)
    return (0.0, max(x[0] ** n, x[1] ** n))


_TWO_PI = 2.0 * math.pi


def _has_point(lo: float, hi: float, base: float) -> bool:
    """Does base + 2*pi*k fall inside [lo, hi] for some integer k?"""
    k = math.ceil((lo - base) / _TWO_PI)
    return base + k * _TWO_PI <= hi


def sin(x: Interval) -> Interval:
    lo, hi = x
    if math.isinf(lo) or math.isinf(hi) or hi - lo >= _TWO_PI:
        return (-1.0, 1.0)
    vals = [math.sin(lo), math.sin(hi)]
    s_lo, s_hi = min(vals), max(vals)
    if _has_point(lo, hi, math.pi / 2):
        s_hi = 1.0
    if _has_point(lo, hi, -math.pi / 2):
        s_lo = -1.0
    return (s_lo, s_hi)


def cos(x: Interval) -> Interval:
    return sin(add(x, (math.pi / 2, math.pi / 2)))


def exp(x: Interval) -> Interval:
    def safe(v: float) -> float:
        if v == math.inf:
            return math.inf
        try:
            return math.exp(v)
        except OverflowError:
            return math.inf

    return (0.0 if x[0] == -math.inf else safe(x[0]), safe(x[1]))


def tanh(x: Interval) -> Interval:
    return (math.tanh(x[0]) if not math.isinf(x[0]) else -1.0,
            math.tanh(x[1]) if not math.isinf(x[1]) else 1.0)


def sqrt(x: Interval) -> Interval:
    if x[1] < 0.0:
        raise ValueError(f"sqrt of interval entirely below zero: {x}")
    lo = 0.0 if x[0] < 0.0 else math.sqrt(x[0])
    return (lo, math.inf if x[1] == math.inf else math.sqrt(x[1]))


def absolute(x: Interval) -> Interval:
    if x[0] >= 0.0:
        return x
    if x[1] <= 0.0:
        return neg(x)
    return (0.0, max(-x[0], x[1]))


def sign(x: Interval) -> Interval:
    lo = -1.0 if x[0] < 0.0 else (0.0 if x[0] == 0.0 else 1.0)
    hi = 1.0 if x[1] > 0.0 else (0.0 if x[1] == 0.0 else -1.0)
    return (lo, hi)


_FUNC = {
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "tanh": tanh,
    "sqrt": sqrt,
    "abs": absolute,
    "sign": sign,
}


def evaluate(e, bounds: Mapping[str, Interval]) -> Interval:
    """Interval enclosure of expression `e` over the box `bounds`.

    Variables absent from `bounds` are treated as unbounded.
    """
    from . import expr as ex  # local import; expr depends on this module

    match e:
        case ex.Const(value):
            return (value, value)
        case ex.Var(name):
            return bounds.get(name, FULL)
        case ex.Neg(arg):
            return neg(evaluate(arg, bounds))
        case ex.Add(left, right):
            return add(evaluate(left, bounds), evaluate(right, bounds))
        case ex.Sub(left, right):
            return sub(evaluate(left, bounds), evaluate(right, bounds))
        case ex.Mul(left, right):
            return mul(evaluate(left, bounds), evaluate(right, bounds))
        case ex.Div(left, right):
            return div(evaluate(left, bounds), evaluate(right, bounds))
        case ex.Pow(base, exponent):
            return pow_int(evaluate(base, bounds), exponent)
        case ex.Func(name, arg):
            return _FUNC[name](evaluate(arg, bounds))
    raise TypeError(f"not an expression node: {e!r}")
