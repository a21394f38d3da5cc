"""Immutable expression trees with exact rational constants and formal functions."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

_REGISTRY_LOCK = threading.Lock()
_DERIVATIVE_NAMES: dict[str, list[str]] = {}


def declare_function(base: str, derivative_names: list[str] | None = None) -> "Function":
    """Register a formal unary function; optional explicit names for f', f'', ..."""
    with _REGISTRY_LOCK:
        names = _DERIVATIVE_NAMES.setdefault(base, [base])
        if derivative_names:
            for i, n in enumerate(derivative_names, start=1):
                if i < len(names):
                    if names[i] != n:
                        raise ValueError(f"derivative {i} of {base} already named {names[i]}")
                else:
                    names.append(n)
    return Function(base, 0)


def _derivative_name(base: str, order: int) -> str:
    with _REGISTRY_LOCK:
        names = _DERIVATIVE_NAMES.setdefault(base, [base])
        while len(names) <= order:
            names.append(base + "p" * len(names))
        return names[order]


def lookup_function(name: str) -> "Function | None":
    """Resolve a function identifier (base or derivative name) to a Function."""
    with _REGISTRY_LOCK:
        items = list(_DERIVATIVE_NAMES.items())
    for base, names in items:
        if name in names:
            return Function(base, names.index(name))
    for base, _ in items:
        rest = name[len(base):]
        if name.startswith(base) and rest and set(rest) == {"p"}:
            return Function(base, len(rest))
    return None


@dataclass(frozen=True)
class Function:
    base: str
    order: int = 0

    @property
    def name(self) -> str:
        return _derivative_name(self.base, self.order)

    def derivative(self) -> "Function":
        return Function(self.base, self.order + 1)

    def __call__(self, arg) -> "Expr":
        return Apply(self, as_expr(arg))


class Expr:
    __slots__ = ()

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, n: int):
        return power(self, n)

    def __neg__(self):
        return neg(self)

    def __str__(self):
        from .printer import to_str

        return to_str(self)

    def children(self) -> tuple["Expr", ...]:
        return ()

    def walk(self) -> Iterator["Expr"]:
        yield self
        for c in self.children():
            yield from c.walk()

    def free_symbols(self) -> set[str]:
        return {e.name for e in self.walk() if isinstance(e, Sym)}

    def functions(self) -> set[Function]:
        return {e.fn for e in self.walk() if isinstance(e, Apply)}


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: Fraction

    def __post_init__(self):
        object.__setattr__(self, "value", Fraction(self.value))


@dataclass(frozen=True)
class Sym(Expr):
    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("empty variable name")


@dataclass(frozen=True)
class Add(Expr):
    args: tuple[Expr, ...]

    def children(self):
        return self.args


@dataclass(frozen=True)
class Mul(Expr):
    args: tuple[Expr, ...]

    def children(self):
        return self.args


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exp: int

    def children(self):
        return (self.base,)


@dataclass(frozen=True)
class Div(Expr):
    num: Expr
    den: Expr

    def children(self):
        return (self.num, self.den)


@dataclass(frozen=True)
class Apply(Expr):
    fn: Function
    arg: Expr

    def children(self):
        return (self.arg,)


ZERO = Num(Fraction(0))
ONE = Num(Fraction(1))


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return Num(Fraction(x))
    if isinstance(x, str):
        return Sym(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def _is_num(e: Expr, v=None) -> bool:
    return isinstance(e, Num) and (v is None or e.value == v)


def add(*terms: Expr) -> Expr:
    flat: list[Expr] = []
    const = Fraction(0)
    for t in terms:
        for s in (t.args if isinstance(t, Add) else (t,)):
            if isinstance(s, Num):
                const += s.value
            else:
                flat.append(s)
    if const:
        flat.append(Num(const))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    return Add(tuple(flat))


def mul(*factors: Expr) -> Expr:
    flat: list[Expr] = []
    const = Fraction(1)
    for f in factors:
        for s in (f.args if isinstance(f, Mul) else (f,)):
            if isinstance(s, Num):
                const *= s.value
            else:
                flat.append(s)
    if not const:
        return ZERO
    if const != 1:
        flat.insert(0, Num(const))
    if not flat:
        return ONE
    if len(flat) == 1:
        return flat[0]
    return Mul(tuple(flat))


def neg(e: Expr) -> Expr:
    return mul(Num(Fraction(-1)), e)


def div(a: Expr, b: Expr) -> Expr:
    if _is_num(b):
        if not b.value:
            raise ZeroDivisionError("division by constant zero")
        return mul(Num(1 / b.value), a)
    if _is_num(a, 0):
        return ZERO
    return Div(a, b)


def power(base: Expr, n) -> Expr:
    if isinstance(n, Num):
        n = n.value
    if Fraction(n).denominator != 1:
        raise ValueError("only integer exponents are supported")
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return base
    if isinstance(base, Num):
        if not base.value and n < 0:
            raise ZeroDivisionError("zero to a negative power")
        return Num(base.value ** n)
    if isinstance(base, Pow):
        return power(base.base, base.exp * n)
    return Pow(base, n)


def symbols(names: str) -> tuple[Sym, ...]:
    return tuple(Sym(n) for n in names.replace(",", " ").split())


@dataclass(frozen=True)
class Lambda:
    """A concrete unary function ``var -> body`` used to bind a formal function."""

    var: str
    body: Expr

    def __call__(self, arg: Expr) -> Expr:
        from .calculus import substitute

        return substitute(self.body, {self.var: as_expr(arg)})

    def derivative(self, order: int = 1) -> "Lambda":
        from .calculus import diff

        body = self.body
        for _ in range(order):
            body = diff(body, self.var)
        return Lambda(self.var, body)


@dataclass
class SymbolTable:
    """Declared variables and formal functions of a problem."""

    variables: list[str] = field(default_factory=list)
    functions: list[str] = field(default_factory=list)

    def declare_variables(self, *names: str) -> None:
        for n in names:
            if n not in self.variables:
                self.variables.append(n)

    def declare_functions(self, *names: str, derivative_names: dict | None = None) -> None:
        for n in names:
            declare_function(n, (derivative_names or {}).get(n))
            if n not in self.functions:
                self.functions.append(n)

    def resolve_function(self, name: str) -> Function | None:
        fn = lookup_function(name)
        if fn is not None and fn.base in self.functions:
            return fn
        return None

    def has_variable(self, name: str) -> bool:
        return name in self.variables
