"""Printing expressions in the ASCII input grammar (round-trips through parse)."""
from __future__ import annotations

from fractions import Fraction

from .expr import Add, Apply, Div, Expr, Mul, Num, Pow, Sym

# precedence levels
_ADD, _MUL, _NEG, _POW, _ATOM = 1, 2, 3, 4, 5


def _num_str(v: Fraction) -> tuple[str, int]:
    if v.denominator == 1:
        s = str(v.numerator)
        return s, (_NEG if v < 0 else _ATOM)
    s = f"{abs(v.numerator)}/{v.denominator}"
    return ("-" + s, _NEG) if v < 0 else (s, _MUL)


def _wrap(s: str, prec: int, need: int) -> str:
    return f"({s})" if prec < need else s


def _split_sign(e: Expr) -> tuple[bool, Expr]:
    """Return (negative, magnitude) for a term about to be printed in a sum."""
    if isinstance(e, Num) and e.value < 0:
        return True, Num(-e.value)
    if isinstance(e, Mul) and isinstance(e.args[0], Num) and e.args[0].value < 0:
        c = -e.args[0].value
        rest = e.args[1:]
        if c == 1:
            mag = rest[0] if len(rest) == 1 else Mul(rest)
        else:
            mag = Mul((Num(c),) + rest)
        return True, mag
    return False, e


def _fmt(e: Expr) -> tuple[str, int]:
    if isinstance(e, Num):
        return _num_str(e.value)
    if isinstance(e, Sym):
        return e.name, _ATOM
    if isinstance(e, Apply):
        return f"{e.fn.name}({_fmt(e.arg)[0]})", _ATOM
    if isinstance(e, Add):
        out = []
        for i, t in enumerate(e.args):
            negative, mag = _split_sign(t)
            s, p = _fmt(mag)
            s = _wrap(s, p, _MUL if negative else _ADD + 1)
            if i == 0:
                out.append(("-" + s) if negative else s)
            else:
                out.append((" - " if negative else " + ") + s)
        return "".join(out), _ADD
    if isinstance(e, Mul):
        args = list(e.args)
        if isinstance(args[0], Num) and args[0].value == -1:
            rest = args[1:]
            s, p = _fmt(rest[0] if len(rest) == 1 else Mul(tuple(rest)))
            return "-" + _wrap(s, p, _MUL + 1 if len(rest) == 1 else _MUL), _NEG
        parts = []
        for i, a in enumerate(args):
            s, p = _fmt(a)
            # leading rational coefficient prints bare; later factors need tighter binding
            need = _MUL if i == 0 else _MUL + 1
            if isinstance(a, Num) and a.value.denominator != 1 and i == 0 and a.value > 0:
                need = _MUL
            parts.append(_wrap(s, p, need))
        return "*".join(parts), _MUL
    if isinstance(e, Div):
        sn, pn = _fmt(e.num)
        sd, pd = _fmt(e.den)
        return f"{_wrap(sn, pn, _MUL)}/{_wrap(sd, pd, _MUL + 1)}", _MUL
    if isinstance(e, Pow):
        sb, pb = _fmt(e.base)
        exp = str(e.exp) if e.exp > 0 else f"({e.exp})"
        return f"{_wrap(sb, pb, _POW + 1)}^{exp}", _POW
    raise TypeError(type(e))


def to_str(e: Expr) -> str:
    return _fmt(e)[0]


_PRIMES = {1: "′", 2: "″", 3: "‴"}


def pretty(e: Expr) -> str:
    """Human-facing form: derivatives of formal functions shown with primes."""
    s = to_str(e)
    for fn in sorted(e.functions(), key=lambda f: -len(f.name)):
        if fn.order:
            mark = _PRIMES.get(fn.order, f"^({fn.order})")
            s = s.replace(fn.name + "(", fn.base + mark + "(")
    return s
