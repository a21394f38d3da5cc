"""Derivation of the reduction equations for one-parameter characteristic families (n = 3).

A reduction u = U(R), v = V(R) with R^a_{t_j} = kappa_aj(R) R^a_{t_1} and
kappa_a = (1, mu_a, lambda_a) forces, for each a,

    sum_j kappa_aj A_j(U) (dU/dr_a, dV/dr_a) = 0.

One row gives dV/dr_a = W(lambda_a, U) dU/dr_a, the other then yields the
dispersion relation mu_a = D(lambda_a, U).  Compatibility of the diagonal system
gives d_b lambda_a = G(lambda_a, lambda_b, U) d_b U, and symmetry of
d_b d_a V gives d_a d_b U = H(lambda_a, lambda_b, U) d_a U d_b U.  Integrability
obstructions come from cross-differentiating these relations for three
distinct indices.
"""
from __future__ import annotations

import itertools
from fractions import Fraction
from math import gcd as igcd, lcm as ilcm
from dataclasses import dataclass, field

from .qls import QlsSpec
from .symkernel import (
    ONE_RF, ZERO_RF, Lambda, Poly, RationalFn, atom_info, bind_rf, derivation, is_atom_key,
    partial, pretty, rf_to_expr, substitute_rf, to_str, zero_test,
)
from .symkernel.poly import NotDivisible, gcd_many

INDICES = ("a", "b", "c")


class EliminationError(ValueError):
    """The ansatz relations do not have the supported elimination shape."""


def lam(i: str) -> str:
    return f"lambda_{i}"


def du(i: str) -> str:
    return f"U_{i}"


@dataclass
class ParamCharFamily:
    """A raw n=3 system on (u, v) with reduction momenta (1, mu, lambda)."""

    spec: QlsSpec
    main: str | None = None  # coordinate carried by U (default: first coordinate)
    aux: str | None = None   # auxiliary potential eliminated symbolically

    def __post_init__(self):
        if self.spec.n != 3 or self.spec.m != 2:
            raise EliminationError("the reduction engine handles n = 3 systems with two unknowns")
        self.main = self.main or self.spec.coords[0]
        self.aux = self.aux or self.spec.coords[1]

    def ansatz_rows(self) -> list[tuple[RationalFn, RationalFn]]:
        """(alpha_r, beta_r) with alpha_r U_a + beta_r V_a = 0, in symbols lambda, mu, U."""
        theta = [ONE_RF, RationalFn.gen("mu"), RationalFn.gen("lambda")]
        iu, iv = self.spec.coords.index(self.main), self.spec.coords.index(self.aux)
        ren = {self.main: RationalFn.gen("U")}
        rows = []
        for r in range(self.spec.k):
            al, be = ZERO_RF, ZERO_RF
            for j in range(3):
                Aj = self.spec.A[j][r]
                if Aj[iv].variables() - {self.main} or Aj[iu].variables() - {self.main}:
                    raise EliminationError("coefficients may depend only on the main coordinate")
                al = al + theta[j] * substitute_rf(Aj[iu], ren)
                be = be + theta[j] * substitute_rf(Aj[iv], ren)
            rows.append((al, be))
        return rows


@dataclass
class GtSystem:
    dispersion: RationalFn          # mu = D(lambda, U)
    w: RationalFn                   # V_a = W(lambda_a, U) U_a
    dlam: RationalFn                # d_b lambda_a in lambda_a, lambda_b, U, U_b
    d2u: RationalFn                 # d_a d_b U in lambda_a, lambda_b, U, U_a, U_b
    obstructions: list[RationalFn] = field(default_factory=list)
    raw_obstructions: list[RationalFn] = field(default_factory=list)
    cleared_factors: list[str] = field(default_factory=list)
    conditions: list[str] = field(default_factory=list)
    probabilistic: bool = False

    def G(self, i: str, j: str) -> RationalFn:
        """d_j lambda_i / d_j U."""
        return substitute_rf(self._g, {"lambda_1": RationalFn.gen(lam(i)),
                                       "lambda_2": RationalFn.gen(lam(j))})

    def H(self, i: str, j: str) -> RationalFn:
        """d_i d_j U / (d_i U d_j U)."""
        return substitute_rf(self._h, {"lambda_1": RationalFn.gen(lam(i)),
                                       "lambda_2": RationalFn.gen(lam(j))})

    def as_dict(self) -> dict:
        return {
            "dispersion": f"mu = {pretty(rf_to_expr(self.dispersion))}",
            "dlam": f"d_b lambda_a = {pretty(rf_to_expr(self.dlam))}",
            "d2u": f"d_a d_b U = {pretty(rf_to_expr(self.d2u))}",
            "obstructions": [pretty(rf_to_expr(o)) for o in self.obstructions],
            "obstructions_ascii": [to_str(rf_to_expr(o)) for o in self.obstructions],
            "cleared_factors": self.cleared_factors,
            "conditions": self.conditions,
            "probabilistic": self.probabilistic,
        }


def _dispersion(family: ParamCharFamily) -> tuple[RationalFn, RationalFn]:
    rows = family.ansatz_rows()
    pivots = [i for i, (_, be) in enumerate(rows) if not be.is_zero()]
    if not pivots:
        raise EliminationError("no ansatz row involves the auxiliary derivative")
    r = pivots[0]
    al_r, be_r = rows[r]
    W = -al_r / be_r
    disp = None
    for s, (al_s, be_s) in enumerate(rows):
        if s == r:
            continue
        P = al_s * be_r - be_s * al_r
        if P.is_zero():
            continue
        c1 = partial(P, "mu")
        if c1.is_zero() or not partial(c1, "mu").is_zero():
            raise EliminationError("dispersion relation is not linear in mu")
        mu_sol = -substitute_rf(P, {"mu": ZERO_RF}) / c1
        if disp is None:
            disp = mu_sol
        elif not (disp - mu_sol).is_zero():
            raise EliminationError("ansatz rows give inconsistent dispersion relations")
    if disp is None:
        raise EliminationError("ansatz rows do not determine mu")
    if not partial(W, "mu").is_zero():
        W = substitute_rf(W, {"mu": disp})
    return disp, W


def derive_reduction(family: ParamCharFamily, with_obstructions: bool = True) -> GtSystem:
    disp, W = _dispersion(family)
    l1, l2 = RationalFn.gen("lambda_1"), RationalFn.gen("lambda_2")
    D = lambda l: substitute_rf(disp, {"lambda": l})  # noqa: E731
    D_lam = substitute_rf(partial(disp, "lambda"), {"lambda": l1})
    D_U = substitute_rf(partial(disp, "U"), {"lambda": l1})
    # X = d_2 lambda_1 / d_2 U from d_2 mu_1 (l2 - l1) = d_2 lambda_1 (mu_2 - mu_1)
    pivot = D_lam * (l2 - l1) - (D(l2) - D(l1))
    if pivot.is_zero():
        raise EliminationError("compatibility condition does not determine d_b lambda_a")
    g = -D_U * (l2 - l1) / pivot
    W1 = substitute_rf(W, {"lambda": l1})
    W2 = substitute_rf(W, {"lambda": l2})
    Wl = lambda l: substitute_rf(partial(W, "lambda"), {"lambda": l})  # noqa: E731
    WU = lambda l: substitute_rf(partial(W, "U"), {"lambda": l})  # noqa: E731
    g21 = substitute_rf(g, {"lambda_1": l2, "lambda_2": l1})
    if (W1 - W2).is_zero():
        raise EliminationError("W does not depend on lambda: d_a d_b U is not determined")
    h = (Wl(l2) * g21 + WU(l2) - Wl(l1) * g - WU(l1)) / (W1 - W2)
    gt = GtSystem(disp, W, ZERO_RF, ZERO_RF)
    gt._g, gt._h = g, h
    gt.dlam = gt.G("a", "b") * RationalFn.gen(du("b"))
    gt.d2u = gt.H("a", "b") * RationalFn.gen(du("a")) * RationalFn.gen(du("b"))
    if with_obstructions:
        integrability_obstruction(gt)
    return gt


def _rule_for(gt: GtSystem, c: str):
    """Derivation d/dr_c on the generators lambda_i, U, U_i (i distinct from c)."""
    Uc = RationalFn.gen(du(c))

    def rule(key: str):
        if is_atom_key(key):
            return None
        if key == "U":
            return Uc
        if key.startswith("r_"):
            return ONE_RF if key[2:] == c else ZERO_RF
        if key.startswith("U_"):
            i = key[2:]
            if i == c:
                raise ValueError("second derivative d_c d_c U is not determined")
            return gt.H(i, c) * RationalFn.gen(key) * Uc
        if key.startswith("lambda_"):
            i = key[7:]
            if i == c:
                raise ValueError("d_c lambda_c is free")
            return gt.G(i, c) * Uc
        raise KeyError(key)

    return rule


def raw_obstructions(gt: GtSystem, idx: tuple[str, str, str] = INDICES) -> list[RationalFn]:
    a, b, c = idx
    Da, Db, Dc = (_rule_for(gt, i) for i in idx)
    Ua, Ub, Uc = (RationalFn.gen(du(i)) for i in idx)
    out = []
    # d_c (d_b lambda_a) = d_b (d_c lambda_a)
    out.append(derivation(gt.G(a, b) * Ub, Dc) - derivation(gt.G(a, c) * Uc, Db))
    # third derivatives of U in all orders
    third = [
        derivation(gt.H(a, b) * Ua * Ub, Dc),
        derivation(gt.H(a, c) * Ua * Uc, Db),
        derivation(gt.H(b, c) * Ub * Uc, Da),
    ]
    out.append(third[0] - third[1])
    out.append(third[0] - third[2])
    return out


def _strip(num: Poly, idx, record: list[str], where: str) -> Poly:
    """Remove monomial factors in U_i and powers of (lambda_i - lambda_j)."""
    mono = num.monomial_content()
    strip = tuple((g, e) for g, e in mono if g.startswith("U_"))
    if strip:
        num = num.exact_div(Poly({strip: 1}))
        record.append(f"{where}: " + "*".join(g if e == 1 else f"{g}^{e}" for g, e in strip))
    for i, j in itertools.combinations(idx, 2):
        L = Poly.gen(lam(i)) - Poly.gen(lam(j))
        e = 0
        while not num.is_const():
            try:
                num = num.exact_div(L)
            except NotDivisible:
                break
            e += 1
        if e:
            record.append(f"{where}: (lambda_{i} - lambda_{j})^{e}")
    return num


def _is_kinematic(g: str) -> bool:
    return g.startswith("lambda_") or g.startswith("U_")


def _condition_core(num: Poly) -> Poly:
    """Gcd of the coefficients of num viewed as a polynomial in lambda_i, U_i.

    The obstruction vanishes for all kinematic data iff every such coefficient
    (a function of U only) vanishes, i.e. iff this gcd does.  Constants keep
    their integer content so that an unconditional obstruction shows its value.
    """
    groups: dict[tuple, dict] = {}
    for mono, c in num.terms.items():
        kin = tuple((g, e) for g, e in mono if _is_kinematic(g))
        rest = tuple((g, e) for g, e in mono if not _is_kinematic(g))
        groups.setdefault(kin, {})[rest] = c
    coeffs = [Poly(t) for t in groups.values()]
    g = gcd_many(coeffs)
    if g.is_const():
        num_g, den_l = 0, 1
        for q in coeffs:
            cq, _ = q.integer_content()
            num_g, den_l = igcd(num_g, abs(cq.numerator)), ilcm(den_l, cq.denominator)
        return Poly.const(Fraction(num_g, den_l))
    return g.integer_content()[1]


def _atom_condition(core: Poly):
    """If core is c * f^(k)(U)^e for a formal-function atom, return that atom key."""
    if len(core.terms) != 1:
        return None
    (mono, _), = core.terms.items()
    if len(mono) == 1 and is_atom_key(mono[0][0]):
        return mono[0][0]
    return None


def integrability_obstruction(gt: GtSystem, idx: tuple[str, str, str] = INDICES) -> list[RationalFn]:
    raws = raw_obstructions(gt, idx)
    gt.raw_obstructions = raws
    cleared: list[str] = []
    cores: list[RationalFn] = []
    probabilistic = False
    for o in raws:
        v = zero_test(o)
        probabilistic |= v.method == "probabilistic"
        if v.zero:
            continue
        if not o.den.is_const():
            _strip(o.den, idx, cleared, "denominator")
        core = _strip(o.num, idx, cleared, "numerator")
        cores.append(RationalFn(_condition_core(core)))
    # reduce later conditions modulo earlier single-atom conditions
    reduced: list[RationalFn] = []
    vanish: dict[str, RationalFn] = {}
    conditions = []
    for core in cores:
        c = substitute_rf(core, vanish) if vanish else core
        if c.is_zero():
            continue
        if any(r == c for r in reduced):
            continue
        reduced.append(c)
        if c.is_const():
            # unconditional obstruction: nothing further can be imposed
            reduced, conditions = [c], [f"{pretty(rf_to_expr(c))} = 0 (impossible)"]
            break
        key = _atom_condition(c.num)
        if key is not None:
            fn, arg = atom_info(key)
            conditions.append(f"{pretty(rf_to_expr(RationalFn.gen(key)))} = 0")
            # f^(k) = 0 identically forces all higher derivatives to vanish
            for other in list(_atoms_of(cores)):
                ofn, oarg = atom_info(other)
                if ofn.base == fn.base and ofn.order >= fn.order and oarg == arg:
                    vanish[other] = ZERO_RF
        else:
            conditions.append(f"{pretty(rf_to_expr(c))} = 0")
    gt.obstructions = reduced
    gt.cleared_factors = sorted(set(cleared))
    gt.conditions = conditions
    gt.probabilistic = probabilistic
    return reduced


def _atoms_of(rfs) -> set[str]:
    out = set()
    for r in rfs:
        out |= r.atoms()
    return out


@dataclass
class Verdict:
    integrable: bool
    conditions: list[RationalFn]
    system: GtSystem
    probabilistic: bool = False

    @property
    def label(self) -> str:
        return "Integrable" if self.integrable else "Obstructed"

    def as_dict(self) -> dict:
        return {
            "verdict": self.label,
            "conditions": [pretty(rf_to_expr(c)) for c in self.conditions],
            "conditions_ascii": [to_str(rf_to_expr(c)) for c in self.conditions],
            "probabilistic": self.probabilistic,
            "checked_indices": "N = 3 (three distinct indices)",
        }


def bind_family(family: ParamCharFamily, bindings: dict[str, Lambda]) -> ParamCharFamily:
    """Replace formal functions in the coefficients by concrete lambdas."""
    from dataclasses import replace

    A = tuple(tuple(tuple(bind_rf(e, bindings) for e in row) for row in Aj) for Aj in family.spec.A)
    spec = replace(family.spec, A=A, bindings={}, _num_cache={})
    return ParamCharFamily(spec, family.main, family.aux)


def verdict(family: ParamCharFamily, bindings: dict[str, Lambda] | None = None) -> Verdict:
    """Integrable iff every cross-derivative obstruction vanishes identically."""
    if bindings:
        family = bind_family(family, bindings)
    gt = derive_reduction(family)
    return Verdict(not gt.obstructions, list(gt.obstructions), gt, gt.probabilistic)


def reduction_system(gt: GtSystem, N: int = 3, fns: dict | None = None):
    """The N-component diagonal system kappa_a = (1, D(lambda_a, U), lambda_a).

    Derivatives d/dr_i act on the generators lambda_j, U, U_j through the
    reduction equations; generators r_i are coordinate functions.
    """
    from .tsarev import DiagonalSystem

    idx = "abcdefgh"[:N]
    kappa = [[ONE_RF, substitute_rf(gt.dispersion, {"lambda": RationalFn.gen(lam(i))}),
              RationalFn.gen(lam(i))] for i in idx]
    variables = ["U"] + [lam(i) for i in idx] + [du(i) for i in idx] + [f"r_{i}" for i in idx]
    return DiagonalSystem(kappa, variables, rules=[_rule_for(gt, i) for i in idx],
                          fns=dict(fns or {}), name=f"reduction[N={N}]")
