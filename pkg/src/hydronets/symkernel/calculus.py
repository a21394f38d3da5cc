"""Tree-level differentiation and substitution."""
from __future__ import annotations

from typing import Mapping

from .expr import (
    ONE, ZERO, Add, Apply, Div, Expr, Lambda, Mul, Num, Pow, Sym,
    add, as_expr, div, mul, power,
)


def diff(e: Expr, v: str) -> Expr:
    """Derivative of ``e`` with respect to the variable ``v`` (chain rule for f(arg))."""
    if isinstance(v, Sym):
        v = v.name
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Sym):
        return ONE if e.name == v else ZERO
    if isinstance(e, Add):
        return add(*(diff(a, v) for a in e.args))
    if isinstance(e, Mul):
        terms = []
        for i, a in enumerate(e.args):
            da = diff(a, v)
            if da != ZERO:
                terms.append(mul(*e.args[:i], da, *e.args[i + 1:]))
        return add(*terms)
    if isinstance(e, Pow):
        db = diff(e.base, v)
        if db == ZERO:
            return ZERO
        return mul(Num(e.exp), power(e.base, e.exp - 1), db)
    if isinstance(e, Div):
        dn, dd = diff(e.num, v), diff(e.den, v)
        if dd == ZERO:
            return div(dn, e.den)
        return div(add(mul(dn, e.den), mul(Num(-1), e.num, dd)), power(e.den, 2))
    if isinstance(e, Apply):
        da = diff(e.arg, v)
        if da == ZERO:
            return ZERO
        return mul(Apply(e.fn.derivative(), e.arg), da)
    raise TypeError(type(e))


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (simultaneously)."""
    mapping = {k: as_expr(x) for k, x in mapping.items()}

    def go(x: Expr) -> Expr:
        if isinstance(x, Sym):
            return mapping.get(x.name, x)
        if isinstance(x, Num):
            return x
        if isinstance(x, Add):
            return add(*(go(a) for a in x.args))
        if isinstance(x, Mul):
            return mul(*(go(a) for a in x.args))
        if isinstance(x, Pow):
            return power(go(x.base), x.exp)
        if isinstance(x, Div):
            return div(go(x.num), go(x.den))
        if isinstance(x, Apply):
            return Apply(x.fn, go(x.arg))
        raise TypeError(type(x))

    return go(e)


def bind_functions(e: Expr, bindings: Mapping[str, Lambda]) -> Expr:
    """Replace formal functions (and their derivatives) by concrete lambdas."""
    cache: dict = {}

    def lam(fn) -> Lambda:
        key = (fn.base, fn.order)
        if key not in cache:
            cache[key] = bindings[fn.base].derivative(fn.order)
        return cache[key]

    def go(x: Expr) -> Expr:
        if isinstance(x, (Sym, Num)):
            return x
        if isinstance(x, Add):
            return add(*(go(a) for a in x.args))
        if isinstance(x, Mul):
            return mul(*(go(a) for a in x.args))
        if isinstance(x, Pow):
            return power(go(x.base), x.exp)
        if isinstance(x, Div):
            return div(go(x.num), go(x.den))
        if isinstance(x, Apply):
            arg = go(x.arg)
            if x.fn.base in bindings:
                return lam(x.fn)(arg)
            return Apply(x.fn, arg)
        raise TypeError(type(x))

    return go(e)
