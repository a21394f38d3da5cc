"""Sparse multivariate polynomials over the rationals.

Generators are identified by string keys (variable names, or the printed
form of a formal-function application such as ``tau(U)``).  A monomial is a
tuple of ``(key, exponent)`` pairs sorted by key; a polynomial maps monomials
to nonzero :class:`~fractions.Fraction` coefficients.

Terms are ordered graded-lexicographically, with generators compared by
their key (the alphabetically first key is the most significant).
"""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import gcd as igcd
from math import lcm as ilcm
from typing import Callable, Iterable, Mapping

Monomial = tuple[tuple[str, int], ...]

ONE_MONO: Monomial = ()


class NotDivisible(ArithmeticError):
    pass


@lru_cache(maxsize=None)
def _lexkey(key: str) -> tuple[int, ...]:
    # Reversed codepoints, sentinel 1 > any negative: smaller key sorts larger.
    return tuple(-ord(c) for c in key) + (1,)


def mono_order_key(m: Monomial):
    return (sum(e for _, e in m), tuple((_lexkey(k), e) for k, e in m))


def mono_mul(a: Monomial, b: Monomial) -> Monomial:
    if not a:
        return b
    if not b:
        return a
    d = dict(a)
    for k, e in b:
        d[k] = d.get(k, 0) + e
    return tuple(sorted((k, e) for k, e in d.items() if e))


def mono_div(a: Monomial, b: Monomial) -> Monomial | None:
    """a / b if b divides a, else None."""
    d = dict(a)
    for k, e in b:
        have = d.get(k, 0)
        if have < e:
            return None
        d[k] = have - e
    return tuple(sorted((k, e) for k, e in d.items() if e))


class Poly:
    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Monomial, Fraction] | None = None):
        self.terms: dict[Monomial, Fraction] = dict(terms) if terms else {}

    # construction
    @classmethod
    def const(cls, c) -> "Poly":
        c = Fraction(c)
        return cls({ONE_MONO: c} if c else None)

    @classmethod
    def gen(cls, key: str, exp: int = 1) -> "Poly":
        return cls({((key, exp),): Fraction(1)})

    # predicates / accessors
    def is_zero(self) -> bool:
        return not self.terms

    def is_const(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and ONE_MONO in self.terms)

    def const_value(self) -> Fraction:
        return self.terms.get(ONE_MONO, Fraction(0))

    def gens(self) -> set[str]:
        return {k for m in self.terms for k, _ in m}

    def degree(self, key: str) -> int:
        return max((e for m in self.terms for k, e in m if k == key), default=0)

    def total_degree(self) -> int:
        return max((sum(e for _, e in m) for m in self.terms), default=0)

    def leading(self) -> tuple[Monomial, Fraction]:
        m = max(self.terms, key=mono_order_key)
        return m, self.terms[m]

    def sorted_terms(self) -> list[tuple[Monomial, Fraction]]:
        return sorted(self.terms.items(), key=lambda t: mono_order_key(t[0]), reverse=True)

    def __eq__(self, other):
        if isinstance(other, Poly):
            return self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self == Poly.const(other)
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __repr__(self):
        return f"Poly({self.to_str()})"

    def to_str(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for m, c in self.sorted_terms():
            mono = "*".join(k if e == 1 else f"{k}^{e}" for k, e in m)
            parts.append(f"({c})*{mono}" if mono else f"({c})")
        return " + ".join(parts)

    # arithmetic
    def __neg__(self) -> "Poly":
        return Poly({m: -c for m, c in self.terms.items()})

    def __add__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            other = Poly.const(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            v = out.get(m, 0) + c
            if v:
                out[m] = v
            else:
                out.pop(m, None)
        return Poly(out)

    __radd__ = __add__

    def __sub__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            other = Poly.const(other)
        return self + (-other)

    def __rsub__(self, other) -> "Poly":
        return Poly.const(other) - self

    def scale(self, c) -> "Poly":
        c = Fraction(c)
        if not c:
            return Poly()
        return Poly({m: v * c for m, v in self.terms.items()})

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            return self.scale(other)
        if len(other.terms) == 1 and ONE_MONO in other.terms:
            return self.scale(other.terms[ONE_MONO])
        if len(self.terms) == 1 and ONE_MONO in self.terms:
            return other.scale(self.terms[ONE_MONO])
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = mono_mul(m1, m2)
                v = out.get(m, 0) + c1 * c2
                if v:
                    out[m] = v
                else:
                    out.pop(m, None)
        return Poly(out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Poly":
        if n < 0:
            raise ValueError("negative power of a polynomial")
        result, base = Poly.const(1), self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def mul_mono(self, mono: Monomial, c=1) -> "Poly":
        c = Fraction(c)
        return Poly({mono_mul(m, mono): v * c for m, v in self.terms.items()})

    # calculus
    def diff_gen(self, key: str) -> "Poly":
        out: dict[Monomial, Fraction] = {}
        for m, c in self.terms.items():
            d = dict(m)
            e = d.get(key, 0)
            if not e:
                continue
            if e == 1:
                del d[key]
            else:
                d[key] = e - 1
            nm = tuple(sorted(d.items()))
            out[nm] = out.get(nm, 0) + c * e
        return Poly({m: c for m, c in out.items() if c})

    # univariate views
    def coeffs_in(self, key: str) -> dict[int, "Poly"]:
        out: dict[int, dict] = {}
        for m, c in self.terms.items():
            e = 0
            rest = []
            for k, ee in m:
                if k == key:
                    e = ee
                else:
                    rest.append((k, ee))
            out.setdefault(e, {})[tuple(rest)] = c
        return {e: Poly(t) for e, t in out.items()}

    @staticmethod
    def from_coeffs(key: str, coeffs: Mapping[int, "Poly"]) -> "Poly":
        out = Poly()
        for e, p in coeffs.items():
            out = out + (p if e == 0 else p.mul_mono(((key, e),)))
        return out

    # substitution / evaluation
    def evaluate(self, env: Mapping[str, object]):
        exact = all(isinstance(env[k], (int, Fraction)) for k in self.gens())
        total = 0 if exact else 0.0
        for m, c in self.terms.items():
            v = c if exact else float(c)
            for k, e in m:
                v = v * env[k] ** e
            total = total + v
        return total

    def map_gens(self, f: Callable[[str], object], one, from_const: Callable):
        """Evaluate with generator images in an arbitrary ring."""
        cache: dict[str, object] = {}
        total = None
        for m, c in self.terms.items():
            term = from_const(c)
            for k, e in m:
                if k not in cache:
                    cache[k] = f(k)
                term = term * cache[k] ** e
            total = term if total is None else total + term
        return from_const(0) if total is None else total

    # content
    def integer_content(self) -> tuple[Fraction, "Poly"]:
        """Split p = c * q with q integer, coprime content, positive leading coeff."""
        if not self.terms:
            return Fraction(0), Poly()
        den = 1
        for c in self.terms.values():
            den = ilcm(den, c.denominator)
        num = 0
        for c in self.terms.values():
            num = igcd(num, int(c * den))
        c = Fraction(num, den)
        if self.leading()[1] < 0:
            c = -c
        return c, Poly({m: v / c for m, v in self.terms.items()})

    def exact_div(self, other: "Poly") -> "Poly":
        if other.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        if other.is_const():
            return self.scale(1 / other.const_value())
        lm_d, lc_d = other.leading()
        rem = Poly(self.terms)
        q: dict[Monomial, Fraction] = {}
        while rem.terms:
            lm_r, lc_r = rem.leading()
            t = mono_div(lm_r, lm_d)
            if t is None:
                raise NotDivisible
            c = lc_r / lc_d
            q[t] = q.get(t, 0) + c
            rem = rem - other.mul_mono(t, c)
        return Poly({m: c for m, c in q.items() if c})

    def divides(self, other: "Poly") -> bool:
        try:
            other.exact_div(self)
        except NotDivisible:
            return False
        return True

    def monomial_content(self) -> Monomial:
        """Largest monomial dividing every term."""
        it = iter(self.terms)
        try:
            first = dict(next(it))
        except StopIteration:
            return ONE_MONO
        for m in it:
            d = dict(m)
            for k in list(first):
                e = min(first[k], d.get(k, 0))
                if e:
                    first[k] = e
                else:
                    del first[k]
        return tuple(sorted(first.items()))


def _prem(a: Poly, b: Poly, x: str) -> Poly:
    """Pseudo-remainder of a by b as univariate polynomials in x."""
    db = b.degree(x)
    cb = b.coeffs_in(x)
    lcb = cb[db]
    r = a
    while not r.is_zero():
        dr = r.degree(x)
        if dr < db:
            break
        lcr = r.coeffs_in(x)[dr]
        r = r * lcb - (b * lcr).mul_mono(((x, dr - db),) if dr > db else ONE_MONO)
    return r


def content_in(p: Poly, x: str) -> Poly:
    g = Poly()
    for c in p.coeffs_in(x).values():
        g = poly_gcd(g, c)
        if g.is_const():
            return Poly.const(1)
    return g


def _primitive_in(p: Poly, x: str) -> Poly:
    c = content_in(p, x)
    return p if c.is_const() else p.exact_div(c)


def _normal(p: Poly) -> Poly:
    if p.is_zero():
        return p
    return p.integer_content()[1]


def poly_gcd(a: Poly, b: Poly) -> Poly:
    """Greatest common divisor, normalized to integer content 1 and positive lead.

    Recursive primitive-remainder-sequence algorithm: content in the main
    generator is handled by recursion on the remaining generators.
    """
    if a.is_zero():
        return _normal(b)
    if b.is_zero():
        return _normal(a)
    if a.is_const() or b.is_const():
        return Poly.const(1)
    if len(a.terms) == 1 or len(b.terms) == 1:
        ma, mb = a.monomial_content(), b.monomial_content()
        common = tuple((k, min(e, dict(mb).get(k, 0))) for k, e in ma if dict(mb).get(k, 0))
        return Poly({common: Fraction(1)})
    ga, gb = a.gens(), b.gens()
    shared = sorted(ga & gb)
    if not shared:
        return Poly.const(1)
    only_a = sorted(ga - gb)
    if only_a:
        return poly_gcd(content_in(a, only_a[0]), b)
    only_b = sorted(gb - ga)
    if only_b:
        return poly_gcd(a, content_in(b, only_b[0]))
    # quick exact-division checks
    if len(b.terms) <= len(a.terms) and b.divides(a):
        return _normal(b)
    if a.divides(b):
        return _normal(a)
    x = min(shared, key=lambda k: (max(a.degree(k), b.degree(k)), k))
    ca, cb = content_in(a, x), content_in(b, x)
    cont = poly_gcd(ca, cb)
    pa = a if ca.is_const() else a.exact_div(ca)
    pb = b if cb.is_const() else b.exact_div(cb)
    if pa.degree(x) < pb.degree(x):
        pa, pb = pb, pa
    while not pb.is_zero() and pb.degree(x) > 0:
        r = _prem(pa, pb, x)
        pa, pb = pb, (r if r.is_zero() else _primitive_in(_normal(r), x))
    g = _normal(pa) if pb.is_zero() else Poly.const(1)
    return _normal(cont * g)


def poly_lcm(a: Poly, b: Poly) -> Poly:
    g = poly_gcd(a, b)
    return _normal((a * b).exact_div(g))


def gcd_many(polys: Iterable[Poly]) -> Poly:
    g = Poly()
    for p in polys:
        g = poly_gcd(g, p)
        if g.is_const() and not g.is_zero():
            return Poly.const(1)
    return g
