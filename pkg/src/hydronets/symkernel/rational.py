"""Canonical rational functions, derivations, evaluation and zero testing.

A :class:`RationalFn` is ``num/den`` with both parts :class:`Poly` over the
rationals.  Generators are variable names and formal-function atoms; an atom
``f(arg)`` is keyed by its printed form with ``arg`` itself in canonical form,
so equal arguments always give the same generator.
"""
from __future__ import annotations

import random
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping

from .expr import Apply, Expr, Function, Lambda, Num, Sym, add, as_expr, div, mul, power
from .poly import Poly, poly_gcd
from .printer import to_str

SEED = 0x48594452
N_ZERO_POINTS = 16
ZERO_TOL = 1e-12


class ZeroDenominatorError(ZeroDivisionError):
    """Denominator normalizes to the zero polynomial."""


class UnboundSymbolError(KeyError):
    pass


# atom registry: key -> (Function, canonical argument)
_ATOM_LOCK = threading.Lock()
_ATOMS: dict[str, tuple[Function, "RationalFn"]] = {}


def is_atom_key(key: str) -> bool:
    return "(" in key


def atom_info(key: str) -> tuple[Function, "RationalFn"]:
    return _ATOMS[key]


class RationalFn:
    __slots__ = ("num", "den")

    def __init__(self, num: Poly, den: Poly | None = None, normalized: bool = False):
        if den is None:
            den = Poly.const(1)
        if not normalized:
            num, den = _canonical(num, den)
        self.num = num
        self.den = den

    @classmethod
    def const(cls, c) -> "RationalFn":
        return cls(Poly.const(c), Poly.const(1), normalized=True) if Fraction(c).denominator == 1 \
            else cls(Poly.const(c))

    @classmethod
    def gen(cls, key: str) -> "RationalFn":
        return cls(Poly.gen(key), Poly.const(1), normalized=True)

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_const(self) -> bool:
        return self.num.is_const() and self.den.is_const()

    def const_value(self) -> Fraction:
        if not self.is_const():
            raise ValueError("not a constant")
        return self.num.const_value() / self.den.const_value()

    def is_poly(self) -> bool:
        return self.den.is_const()

    def gens(self) -> set[str]:
        return self.num.gens() | self.den.gens()

    def variables(self) -> set[str]:
        """All variable names, including those inside atom arguments."""
        out = set()
        for g in self.gens():
            if is_atom_key(g):
                out |= atom_info(g)[1].variables()
            else:
                out.add(g)
        return out

    def atoms(self) -> set[str]:
        out = set()
        for g in self.gens():
            if is_atom_key(g):
                out.add(g)
                out |= atom_info(g)[1].atoms()
        return out

    def __eq__(self, other):
        if not isinstance(other, RationalFn):
            try:
                other = as_rf(other)
            except TypeError:
                return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        return hash((self.num, self.den))

    def __repr__(self):
        return f"RationalFn({to_str(self.to_expr())})"

    def __str__(self):
        return to_str(self.to_expr())

    def to_expr(self) -> Expr:
        return rf_to_expr(self)

    def __neg__(self):
        return RationalFn(-self.num, self.den, normalized=True)

    def __add__(self, other):
        other = as_rf(other)
        one = Poly.const(1)
        if self.den == other.den:
            return RationalFn(self.num + other.num, self.den, normalized=self.den == one)
        if other.den == one:
            return RationalFn(self.num + other.num * self.den, self.den)
        if self.den == one:
            return RationalFn(self.num * other.den + other.num, other.den)
        g = poly_gcd(self.den, other.den)
        if g.is_const():
            return RationalFn(self.num * other.den + other.num * self.den, self.den * other.den)
        a, b = self.den.exact_div(g), other.den.exact_div(g)
        return RationalFn(self.num * b + other.num * a, self.den * b)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-as_rf(other))

    def __rsub__(self, other):
        return as_rf(other) + (-self)

    def __mul__(self, other):
        other = as_rf(other)
        if self.is_zero() or other.is_zero():
            return ZERO_RF
        # cross-cancel before multiplying to keep sizes small
        g1 = poly_gcd(self.num, other.den)
        g2 = poly_gcd(other.num, self.den)
        n1, d2 = (self.num, other.den) if g1.is_const() else (self.num.exact_div(g1), other.den.exact_div(g1))
        n2, d1 = (other.num, self.den) if g2.is_const() else (other.num.exact_div(g2), self.den.exact_div(g2))
        return RationalFn(n1 * n2, d1 * d2, normalized=False)

    __rmul__ = __mul__

    def inverse(self) -> "RationalFn":
        if self.is_zero():
            raise ZeroDenominatorError("inverse of zero")
        return RationalFn(self.den, self.num)

    def __truediv__(self, other):
        return self * as_rf(other).inverse()

    def __rtruediv__(self, other):
        return as_rf(other) * self.inverse()

    def __pow__(self, n: int):
        if n < 0:
            return self.inverse() ** (-n)
        return RationalFn(self.num ** n, self.den ** n, normalized=True)

    # calculus
    def derive(self, rule: Callable[[str], "RationalFn | None"]) -> "RationalFn":
        return derivation(self, rule)

    def diff(self, v: str) -> "RationalFn":
        return partial(self, v)

    def subs(self, mapping: Mapping[str, object]) -> "RationalFn":
        return substitute_rf(self, mapping)

    def evaluate(self, point: Mapping[str, object], fns: Mapping[str, object] | None = None):
        return eval_rf(self, point, fns or {})


def _canonical(num: Poly, den: Poly) -> tuple[Poly, Poly]:
    if den.is_zero():
        raise ZeroDenominatorError("denominator is the zero polynomial")
    if num.is_zero():
        return Poly(), Poly.const(1)
    if not den.is_const():
        g = poly_gcd(num, den)
        if not g.is_const():
            num, den = num.exact_div(g), den.exact_div(g)
    cn, pn = num.integer_content()
    cd, pd = den.integer_content()
    c = cn / cd
    return pn.scale(c.numerator), pd.scale(c.denominator)


ZERO_RF = RationalFn(Poly(), Poly.const(1), normalized=True)
ONE_RF = RationalFn(Poly.const(1), Poly.const(1), normalized=True)


def as_rf(x) -> RationalFn:
    if isinstance(x, RationalFn):
        return x
    if isinstance(x, (int, Fraction)):
        return RationalFn.const(x)
    if isinstance(x, str):
        return RationalFn.gen(x)
    if isinstance(x, Expr):
        return to_rf(x)
    raise TypeError(f"cannot convert {type(x).__name__} to RationalFn")


def atom(fn: Function, arg) -> RationalFn:
    """Generator for the formal application fn(arg)."""
    arg = as_rf(arg)
    key = f"{fn.name}({to_str(rf_to_expr(arg))})"
    with _ATOM_LOCK:
        if key not in _ATOMS:
            _ATOMS[key] = (fn, arg)
    return RationalFn.gen(key)


def to_rf(e: Expr) -> RationalFn:
    """Canonical rational-function form of an expression."""
    from .expr import Add, Div, Mul, Pow

    if isinstance(e, Num):
        return RationalFn.const(e.value)
    if isinstance(e, Sym):
        return RationalFn.gen(e.name)
    if isinstance(e, Add):
        # sum polynomial parts directly, combine fractions afterwards
        poly = Poly()
        rest = ZERO_RF
        for a in e.args:
            r = to_rf(a)
            if r.den == Poly.const(1):
                poly = poly + r.num
            else:
                rest = rest + r
        return rest + RationalFn(poly, Poly.const(1), normalized=True) if not rest.is_zero() \
            else RationalFn(poly)
    if isinstance(e, Mul):
        out = ONE_RF
        for a in e.args:
            out = out * to_rf(a)
        return out
    if isinstance(e, Pow):
        b = to_rf(e.base)
        if e.exp < 0 and b.is_zero():
            raise ZeroDenominatorError("zero raised to a negative power")
        return b ** e.exp
    if isinstance(e, Div):
        d = to_rf(e.den)
        if d.is_zero():
            raise ZeroDenominatorError(f"denominator {to_str(e.den)} normalizes to zero")
        return to_rf(e.num) / d
    if isinstance(e, Apply):
        return atom(e.fn, to_rf(e.arg))
    raise TypeError(type(e))


normalize = to_rf


def _gen_expr(key: str) -> Expr:
    if is_atom_key(key):
        fn, arg = atom_info(key)
        return Apply(fn, rf_to_expr(arg))
    return Sym(key)


def poly_to_expr(p: Poly) -> Expr:
    terms = []
    for m, c in p.sorted_terms():
        factors = [power(_gen_expr(k), e) for k, e in m]
        terms.append(mul(Num(c), *factors))
    return add(*terms)


def rf_to_expr(r: RationalFn) -> Expr:
    n = poly_to_expr(r.num)
    if r.den == Poly.const(1):
        return n
    return div(n, poly_to_expr(r.den))


# derivations

def derivation(r: RationalFn, rule: Callable[[str], RationalFn | None],
               _cache: dict | None = None) -> RationalFn:
    """Apply the derivation fixed by its values on generators.

    ``rule(key)`` gives D(key); for an atom key it may return ``None``, in which
    case the chain rule f'(arg) * D(arg) is used.
    """
    cache = {} if _cache is None else _cache

    def dgen(key: str) -> RationalFn:
        if key not in cache:
            v = rule(key)
            if v is None:
                if not is_atom_key(key):
                    raise UnboundSymbolError(f"derivation undefined on {key}")
                fn, arg = atom_info(key)
                da = derivation(arg, rule, cache)
                v = ZERO_RF if da.is_zero() else atom(fn.derivative(), arg) * da
            cache[key] = as_rf(v)
        return cache[key]

    def dpoly(p: Poly) -> RationalFn:
        out = ZERO_RF
        for g in sorted(p.gens()):
            dg = dgen(g)
            if dg.is_zero():
                continue
            out = out + RationalFn(p.diff_gen(g)) * dg
        return out

    dn = dpoly(r.num)
    if r.den.is_const():
        return dn * RationalFn.const(1 / r.den.const_value())
    dd = dpoly(r.den)
    den = RationalFn(r.den, normalized=True)
    num = RationalFn(r.num, normalized=False)
    return dn / den - num * dd / (den * den)


def partial(r: RationalFn, v: str) -> RationalFn:
    """Partial derivative with respect to the variable ``v``."""
    return derivation(r, lambda k: None if is_atom_key(k) else (ONE_RF if k == v else ZERO_RF))


def substitute_rf(r: RationalFn, mapping: Mapping[str, object]) -> RationalFn:
    """Replace generators (variables or atom keys); atoms are rebuilt on new args."""
    images = {k: as_rf(v) for k, v in mapping.items()}
    cache: dict[str, RationalFn] = {}

    def img(key: str) -> RationalFn:
        if key in images:
            return images[key]
        if key not in cache:
            if is_atom_key(key):
                fn, arg = atom_info(key)
                cache[key] = atom(fn, substitute_rf(arg, mapping))
            else:
                cache[key] = RationalFn.gen(key)
        return cache[key]

    num = r.num.map_gens(img, ONE_RF, RationalFn.const)
    den = r.den.map_gens(img, ONE_RF, RationalFn.const)
    return num / den


def bind_rf(r: RationalFn, bindings: Mapping[str, Lambda]) -> RationalFn:
    """Replace formal functions by concrete lambdas (derivatives follow symbolically)."""
    mapping = {}
    for key in r.atoms():
        fn, arg = atom_info(key)
        if fn.base in bindings:
            mapping[key] = None
    if not mapping:
        return r

    def img_atom(key: str) -> RationalFn:
        fn, arg = atom_info(key)
        arg_b = bind_rf(arg, bindings)
        if fn.base in bindings:
            lam = bindings[fn.base].derivative(fn.order)
            return to_rf(lam(rf_to_expr(arg_b)))
        return atom(fn, arg_b)

    images = {k: img_atom(k) for k in r.gens() if is_atom_key(k)}
    return substitute_rf(r, images)


# numerics

def _resolve_fn(fn: Function, fns: Mapping[str, object]):
    if fn.name in fns:
        f = fns[fn.name]
        if isinstance(f, Lambda):
            return _lambda_numeric(f, fns)
        return f
    if fn.base in fns:
        f = fns[fn.base]
        if isinstance(f, Lambda):
            return _lambda_numeric(f.derivative(fn.order), fns)
        if fn.order == 0:
            return f
    raise UnboundSymbolError(f"formal function {fn.name} is unbound")


def _lambda_numeric(lam: Lambda, fns):
    body = to_rf(lam.body)
    return lambda x: eval_rf(body, {lam.var: x}, fns)


def eval_rf(r: RationalFn, point: Mapping[str, object], fns: Mapping[str, object]):
    """Evaluate numerically; values may be floats, Fractions or numpy arrays."""
    cache: dict[str, object] = {}

    def val(key: str):
        if key in cache:
            return cache[key]
        if is_atom_key(key):
            fn, arg = atom_info(key)
            v = _resolve_fn(fn, fns)(eval_rf(arg, point, fns))
        else:
            if key not in point:
                raise UnboundSymbolError(f"variable {key} is unbound")
            v = point[key]
        cache[key] = v
        return v

    env = {k: val(k) for k in r.gens()}
    n = r.num.evaluate(env)
    d = r.den.evaluate(env)
    if isinstance(d, (int, float, Fraction)) and d == 0:
        raise ZeroDivisionError("denominator evaluates to zero")
    exact = (int, Fraction)
    if isinstance(n, exact) != isinstance(d, exact):
        n = float(n) if isinstance(n, exact) else n
        d = float(d) if isinstance(d, exact) else d
    return n / d


def eval_num(e, point: Mapping[str, object], fns: Mapping[str, object] | None = None) -> float:
    """Floating-point value of an expression at a point."""
    r = as_rf(e)
    point = {k: (float(v) if isinstance(v, (int, Fraction)) else v) for k, v in point.items()}
    return eval_rf(r, point, fns or {})


def compile_rf(e, variables: list[str], fns: Mapping[str, object] | None = None):
    """Vectorized evaluator ``f(*arrays)`` in the given variable order."""
    r = as_rf(e)
    fns = dict(fns or {})
    missing = r.variables() - set(variables)
    if missing:
        raise UnboundSymbolError(f"unbound variables {sorted(missing)}")

    def f(*vals):
        return eval_rf(r, dict(zip(variables, vals)), fns)

    return f


# zero testing

@dataclass(frozen=True)
class ZeroVerdict:
    zero: bool
    method: str  # "exact" or "probabilistic"

    def __bool__(self):
        return self.zero


def _polynomial_test_conclusive(r: RationalFn) -> bool:
    # atoms on bare variables are algebraically independent generators
    for key in r.atoms():
        _, arg = atom_info(key)
        if not (arg.is_poly() and len(arg.num.terms) == 1 and arg.num.total_degree() <= 1):
            return False
    return True


def _random_bindings(rng: random.Random, bases: set[str]) -> dict[str, Lambda]:
    out = {}
    for b in sorted(bases):
        coeffs = [Fraction(rng.randint(-9, 9), rng.randint(1, 5)) for _ in range(4)]
        s = Sym("_s")
        body = add(*(mul(Num(c), power(s, i)) for i, c in enumerate(coeffs)))
        out[b] = Lambda("_s", body)
    return out


def zero_test(e) -> ZeroVerdict:
    r = as_rf(e)
    if r.is_zero():
        return ZeroVerdict(True, "exact")
    if _polynomial_test_conclusive(r):
        return ZeroVerdict(False, "exact")
    rng = random.Random(SEED)
    bases = {atom_info(k)[0].base for k in r.atoms()}
    variables = sorted(r.variables())
    for _ in range(N_ZERO_POINTS):
        fns = _random_bindings(rng, bases)
        pt = {v: Fraction(rng.randint(-50, 50), rng.randint(1, 7)) for v in variables}
        try:
            val = eval_rf(bind_rf(r, fns), pt, {})
        except ZeroDivisionError:
            continue
        if abs(float(val)) >= ZERO_TOL:
            return ZeroVerdict(False, "probabilistic")
    return ZeroVerdict(True, "probabilistic")


def is_zero(e) -> bool:
    return zero_test(e).zero


def lambdify(var: str, body) -> Lambda:
    return Lambda(var, as_expr(body) if not isinstance(body, RationalFn) else rf_to_expr(body))
