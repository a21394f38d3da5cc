"""First-order quasilinear systems sum_j A_j(u) du/dt_j = 0 and their characteristic geometry.

A system is stored by its coefficient matrices (k x m each, one per independent
variable).  Systems built from a potential (types G, H, I) use ambient
coordinates p together with the constraints cutting out the state manifold;
the tangent space at p is the kernel of the constraint differential.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from .config import DEFAULT, Tolerances
from .symkernel import (
    ONE_RF, ZERO_RF, Expr, Poly, RationalFn, as_rf, eval_rf, partial, rf_to_expr,
)

DEFAULT_SEED = 0x48594452


class QlsError(ValueError):
    pass


class NotDetermined(QlsError):
    pass


class DegenerateSystem(QlsError):
    pass


class NoRealCharacteristic(QlsError):
    """No real characteristic covector found: the system is possibly elliptic at p."""


@dataclass(eq=False)
class QlsSpec:
    name: str
    indep: tuple[str, ...]
    coords: tuple[str, ...]
    A: tuple[tuple[tuple[RationalFn, ...], ...], ...]
    provenance: str = "raw"
    provenance_data: dict = field(default_factory=dict)
    functions: tuple[str, ...] = ()
    bindings: dict = field(default_factory=dict)
    constraints: tuple[RationalFn, ...] = ()
    well_posed: bool = False        # intrinsically determined (e.g. type G with m' = q)
    degenerate: bool = False
    _num_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if len(self.A) != self.n:
            raise QlsError(f"expected {self.n} coefficient matrices, got {len(self.A)}")
        k = len(self.A[0])
        for j, Aj in enumerate(self.A):
            if len(Aj) != k or any(len(row) != self.m for row in Aj):
                raise QlsError(f"A_{j + 1} is not {k}x{self.m}")
        allowed = set(self.coords)
        for Aj in self.A:
            for row in Aj:
                for e in row:
                    extra = e.variables() - allowed
                    if extra:
                        raise QlsError(f"coefficient depends on non-state symbols {sorted(extra)}")

    @property
    def determined(self) -> bool:
        """Square presentation: as many equations as unknowns."""
        return self.k == self.m

    @property
    def n(self) -> int:
        return len(self.indep)

    @property
    def m(self) -> int:
        return len(self.coords)

    @property
    def k(self) -> int:
        return len(self.A[0])

    @property
    def intrinsic_dim(self) -> int:
        return self.m - len(self.constraints)

    def point(self, p) -> dict:
        if isinstance(p, Mapping):
            return {c: float(p[c]) for c in self.coords}
        return dict(zip(self.coords, (float(v) for v in p)))

    def as_array(self, p) -> np.ndarray:
        if isinstance(p, Mapping):
            return np.array([float(p[c]) for c in self.coords])
        return np.asarray(p, dtype=float)

    def A_num(self, p) -> np.ndarray:
        """Numeric coefficient tensor of shape (n, k, m) at the state p."""
        pt = self.point(p)
        out = np.zeros((self.n, self.k, self.m))
        for j, Aj in enumerate(self.A):
            for r, row in enumerate(Aj):
                for c, e in enumerate(row):
                    if e.is_zero():
                        continue
                    if e.is_const():
                        out[j, r, c] = float(e.const_value())
                    else:
                        out[j, r, c] = float(eval_rf(e, pt, self.bindings))
        return out

    def symbol_matrix(self, p, xi) -> np.ndarray:
        """sum_j xi_j A_j(p), a k x m matrix."""
        return np.tensordot(np.asarray(xi, dtype=float), self.A_num(p), axes=1)

    def constraint_values(self, p) -> np.ndarray:
        pt = self.point(p)
        return np.array([float(eval_rf(c, pt, self.bindings)) for c in self.constraints])

    def constraint_jacobian(self, p) -> np.ndarray:
        if "grad" not in self._num_cache:
            self._num_cache["grad"] = [[partial(c, x) for x in self.coords] for c in self.constraints]
        pt = self.point(p)
        return np.array([[float(eval_rf(g, pt, self.bindings)) for g in row]
                         for row in self._num_cache["grad"]]).reshape(len(self.constraints), self.m)

    def tangent_basis(self, p, tol: float = 1e-10) -> np.ndarray:
        """Orthonormal basis (m x dim) of the tangent space of the state manifold at p."""
        if not self.constraints:
            return np.eye(self.m)
        return sla.null_space(self.constraint_jacobian(p), rcond=tol)

    def summary(self) -> dict:
        return {
            "name": self.name, "n": self.n, "m": self.m, "k": self.k,
            "intrinsic_dim": self.intrinsic_dim, "provenance": self.provenance,
            "determined": self.determined, "well_posed": self.well_posed, "degenerate": self.degenerate,
            "independent": list(self.indep), "coordinates": list(self.coords),
        }


# builders

def _rf_matrix(rows) -> tuple[tuple[RationalFn, ...], ...]:
    return tuple(tuple(as_rf(e) for e in row) for row in rows)


def build_raw(name: str, indep: Sequence[str], coords: Sequence[str], matrices, functions=(),
              bindings: dict | None = None) -> QlsSpec:
    A = tuple(_rf_matrix(M) for M in matrices)
    k = len(A[0]) if A else 0
    spec = QlsSpec(name, tuple(indep), tuple(coords), A, "raw", {}, tuple(functions),
                   dict(bindings or {}), (), well_posed=(k == len(coords)))
    if len(indep) < 3:
        raise QlsError("a quasilinear system needs at least 3 independent variables")
    return spec


def _check_rank(spec: QlsSpec, base_point, needed: int, what: str):
    if base_point is None:
        return
    J = spec.constraint_jacobian(base_point)
    s = np.linalg.svd(J, compute_uv=False) if J.size else np.zeros(0)
    rank = int(np.sum(s > 1e-10 * max(1.0, s.max() if s.size else 0.0)))
    if rank < needed:
        raise DegenerateSystem(f"{what}: constraint Jacobian has rank {rank} < {needed} at the base point")


def _independent_rows(rows: list[list[Fraction]]) -> list[int]:
    """Indices of a maximal linearly independent subset (exact elimination)."""
    basis: list[tuple[int, list[Fraction]]] = []
    keep = []
    for idx, row in enumerate(rows):
        v = list(row)
        for piv, b in basis:
            if v[piv]:
                f = v[piv] / b[piv]
                v = [x - f * y for x, y in zip(v, b)]
        nz = next((i for i, x in enumerate(v) if x), None)
        if nz is not None:
            basis.append((nz, v))
            keep.append(idx)
    return keep


def _curl_rows(n: int, m: int, slots: dict[tuple[int, int], int]):
    """Rows d_i p_(s,j) - d_j p_(s,i) = 0 for every potential s and i < j.

    ``slots`` maps (potential, t-index) to the coordinate column.
    """
    rows = []
    pots = sorted({s for s, _ in slots})
    for s in pots:
        for i, j in itertools.combinations(range(n), 2):
            row = [[ZERO_RF] * m for _ in range(n)]
            row[i][slots[(s, j)]] = ONE_RF
            row[j][slots[(s, i)]] = -ONE_RF
            rows.append(row)
    return rows


def _assemble(n: int, rows) -> tuple:
    # rows: list of per-equation [n][m] entries -> A_j matrices
    return tuple(tuple(tuple(r[j]) for r in rows) for j in range(n))


def build_type_g(indep: Sequence[str], potentials: Sequence[str], constraints: Sequence,
                 base_point=None, name: str = "typeG", functions=(), bindings=None) -> QlsSpec:
    """Curl-free V-valued first derivatives p_(s,j) = d w_s / d t_j constrained to {F_k = 0}.

    Coordinates are named ``{potential}_{t}``; equations are the curl conditions
    and sum_(s,j) dF_k/dp_(s,j) d_l p_(s,j) = 0 for every k and l.
    """
    n, q = len(indep), len(potentials)
    if n < 3:
        raise QlsError("a quasilinear system needs at least 3 independent variables")
    F = [as_rf(c) for c in constraints]
    if not F:
        raise QlsError("type G needs at least one constraint")
    if len(F) >= q * n:
        raise QlsError("too many constraints for the ambient space")
    coords = [f"{w}_{t}" for w in potentials for t in indep]
    m = len(coords)
    slots = {(s, j): s * n + j for s in range(q) for j in range(n)}
    rows = _curl_rows(n, m, slots)
    grads = [[partial(f, c) for c in coords] for f in F]
    for g in grads:
        for l in range(n):
            row = [[ZERO_RF] * m for _ in range(n)]
            row[l] = list(g)
            rows.append(row)
    spec = QlsSpec(name, tuple(indep), tuple(coords), _assemble(n, rows), "G",
                   {"potentials": list(potentials), "constraints": [str(f) for f in F]},
                   tuple(functions), dict(bindings or {}), tuple(F), well_posed=(len(F) == q))
    _check_rank(spec, base_point, len(F), "dependent constraints")
    return spec


def hessian_coords(n: int) -> list[str]:
    return [f"p{i + 1}{j + 1}" for i in range(n) for j in range(i, n)]


def build_type_h(indep: Sequence[str], F, base_point=None, name: str = "typeH", functions=(),
                 bindings=None) -> QlsSpec:
    """Second derivatives p_ij of a scalar potential constrained to the hypersurface {F = 0}."""
    n = len(indep)
    if n < 3:
        raise QlsError("a quasilinear system needs at least 3 independent variables")
    F = as_rf(F)
    coords = hessian_coords(n)
    m = len(coords)
    col = {}
    for i in range(n):
        for j in range(i, n):
            col[(i, j)] = col[(j, i)] = coords.index(f"p{i + 1}{j + 1}")
    # total symmetry of d_k p_ij: d_k p_ij - d_i p_kj = 0
    cand, vecs = [], []
    for (i, j) in sorted({(min(a, b), max(a, b)) for a in range(n) for b in range(n)}):
        for kk in range(n):
            for (a, b, c) in ((i, j, kk), (j, i, kk)):
                if c == a:
                    continue
                row = [[ZERO_RF] * m for _ in range(n)]
                vec = [Fraction(0)] * (n * m)
                row[c][col[(a, b)]] = ONE_RF
                row[a][col[(c, b)]] = row[a][col[(c, b)]] - ONE_RF
                vec[c * m + col[(a, b)]] += 1
                vec[a * m + col[(c, b)]] -= 1
                cand.append(row)
                vecs.append(vec)
    rows = [cand[i] for i in _independent_rows(vecs)]
    grad = [partial(F, c) for c in coords]
    if all(g.is_zero() for g in grad):
        raise DegenerateSystem("dF vanishes identically")
    for l in range(n):
        row = [[ZERO_RF] * m for _ in range(n)]
        row[l] = list(grad)
        rows.append(row)
    spec = QlsSpec(name, tuple(indep), tuple(coords), _assemble(n, rows), "H",
                   {"F": str(F)}, tuple(functions), dict(bindings or {}), (F,), well_posed=True)
    _check_rank(spec, base_point, 1, "degenerate dF")
    return spec


def build_type_i(indep: Sequence[str], coords: Sequence[str], Q, base_point=None,
                 name: str = "typeI", functions=(), bindings=None) -> QlsSpec:
    """First derivatives p_i = d w/d t_i with curl conditions and sum_ij F_ij(p) d_i p_j = 0."""
    n = len(indep)
    if n < 3:
        raise QlsError("a quasilinear system needs at least 3 independent variables")
    if len(coords) != n:
        raise QlsError("type I needs one coordinate per independent variable")
    Qrf = [[as_rf(Q[i][j]) for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(n):
            if Qrf[i][j] != Qrf[j][i]:
                raise QlsError("Q must be symmetric")
    if all(e.is_zero() for row in Qrf for e in row):
        raise DegenerateSystem("Q is identically zero")
    m = n
    rows = _curl_rows(n, m, {(0, j): j for j in range(n)})
    row = [[Qrf[i][j] for j in range(n)] for i in range(n)]
    rows.append(row)
    spec = QlsSpec(name, tuple(indep), tuple(coords), _assemble(n, rows), "I",
                   {"Q": [[str(e) for e in r] for r in Qrf]}, tuple(functions),
                   dict(bindings or {}), (), well_posed=True)
    if base_point is not None:
        Qn = quadric_matrix(spec, base_point)
        s = np.linalg.svd(Qn, compute_uv=False)
        spec.degenerate = bool(np.sum(s > 1e-10 * max(1.0, s[0])) <= 1)
    return spec


def quadric_matrix(spec: QlsSpec, p) -> np.ndarray:
    """The quadratic form on momenta whose zero set is the characteristic variety (types H, I)."""
    pt = spec.point(p)
    n = spec.n
    if spec.provenance == "I":
        # the last equation carries F_ij in A_i[-1][j]
        return np.array([[float(eval_rf(spec.A[i][-1][j], pt, spec.bindings)) for j in range(n)]
                         for i in range(n)])
    if spec.provenance == "H":
        F = spec.constraints[0]
        Q = np.zeros((n, n))
        for i in range(n):
            for j in range(i, n):
                g = float(eval_rf(partial(F, f"p{i + 1}{j + 1}"), pt, spec.bindings))
                if i == j:
                    Q[i, i] = g
                else:
                    Q[i, j] = Q[j, i] = g / 2
        return Q
    raise QlsError("quadric form only defined for type H and type I systems")


# characteristic polynomial

@dataclass
class CharPoly:
    poly: RationalFn
    momenta: tuple[str, ...]
    degree: int
    content: RationalFn

    def expr(self) -> Expr:
        return rf_to_expr(self.poly)

    def __str__(self):
        return str(self.poly)

    def evaluate(self, spec: QlsSpec, p, xi) -> float:
        pt = spec.point(p)
        pt.update({x: float(v) for x, v in zip(self.momenta, xi)})
        return float(eval_rf(self.poly, pt, spec.bindings))


def momentum_names(spec: QlsSpec) -> tuple[str, ...]:
    taken = set(spec.coords) | set(spec.indep)
    prefix = "xi"
    while any(f"{prefix}{j + 1}" in taken for j in range(spec.n)):
        prefix = "_" + prefix
    return tuple(f"{prefix}{j + 1}" for j in range(spec.n))


def _det(M: list[list[RationalFn]]) -> RationalFn:
    k = len(M)
    cache: dict[tuple[int, frozenset], RationalFn] = {}

    def rec(r: int, cols: frozenset) -> RationalFn:
        if r == k:
            return ONE_RF
        key = (r, cols)
        if key in cache:
            return cache[key]
        total = ZERO_RF
        free = sorted(set(range(k)) - cols)
        for pos, c in enumerate(free):
            e = M[r][c]
            if e.is_zero():
                continue
            term = e * rec(r + 1, cols | {c})
            total = total + term if pos % 2 == 0 else total - term
        cache[key] = total
        return total

    return rec(0, frozenset())


def char_polynomial(spec: QlsSpec) -> CharPoly:
    """det(sum_j xi_j A_j(u)) with the u-content divided out."""
    if spec.k != spec.m:
        raise NotDetermined(
            f"char_polynomial needs a square system (k={spec.k}, m={spec.m}); "
            "use rank_one_fiber / cochar_sample for numeric characteristic fibres")
    xi = momentum_names(spec)
    M = [[ZERO_RF] * spec.m for _ in range(spec.k)]
    for j in range(spec.n):
        x = RationalFn.gen(xi[j])
        for r in range(spec.k):
            for c in range(spec.m):
                if not spec.A[j][r][c].is_zero():
                    M[r][c] = M[r][c] + x * spec.A[j][r][c]
    d = _det(M)
    if d.is_zero():
        raise DegenerateSystem("characteristic determinant vanishes identically")
    # divide out the content with respect to the momenta
    num = d.num
    groups: dict[tuple, dict] = {}
    for mono, c in num.terms.items():
        xm = tuple((g, e) for g, e in mono if g in xi)
        rest = tuple((g, e) for g, e in mono if g not in xi)
        groups.setdefault(xm, {})[rest] = c
    from .symkernel.poly import gcd_many
    cont = gcd_many(Poly(t) for t in groups.values())
    core = RationalFn(num.exact_div(cont)) if not cont.is_const() else RationalFn(num)
    content = RationalFn(cont, d.den)
    deg = {sum(e for _, e in xm) for xm in groups}
    if len(deg) != 1:
        raise QlsError("characteristic polynomial is not homogeneous in the momenta")
    return CharPoly(core, xi, deg.pop(), content)


# numeric fibres

@dataclass
class RankOneSample:
    p: np.ndarray
    xi: np.ndarray
    Z: np.ndarray
    nulldim: int
    residual: float

    def as_dict(self) -> dict:
        return {"p": self.p.tolist(), "xi": self.xi.tolist(), "Z": self.Z.tolist(),
                "nulldim": self.nulldim, "residual": self.residual}


def _unit(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("zero vector")
    v = v / nv
    # fix the projective sign: first significant entry positive
    i = int(np.argmax(np.abs(v) > 1e-12 * np.abs(v).max()))
    return -v if v[i] < 0 else v


def proj_dist(a: np.ndarray, b: np.ndarray) -> float:
    a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def _nullspace(M: np.ndarray, rel: float) -> tuple[np.ndarray, np.ndarray]:
    U, s, Vt = np.linalg.svd(M)
    scale = s[0] if s.size and s[0] > 0 else 1.0
    rank = int(np.sum(s > rel * scale))
    return Vt[rank:].T, s


def char_indicator(spec: QlsSpec, p, xi) -> float:
    """sigma_min / sigma_max of the symbol matrix; zero exactly on characteristic covectors."""
    M = spec.symbol_matrix(p, xi)
    s = np.linalg.svd(M, compute_uv=False)
    if M.shape[0] < M.shape[1]:
        return 0.0
    return float(s[-1] / s[0]) if s[0] > 0 else 0.0


def rank_one_fiber(spec: QlsSpec, p, xi, tol: Tolerances = DEFAULT) -> list[RankOneSample]:
    """Orthonormal basis of {Z : xi (x) Z in E_p}, one sample per basis vector."""
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        raise ValueError("momentum must be nonzero")
    xi_u = xi / np.linalg.norm(xi)
    M = spec.symbol_matrix(p, xi_u)
    N, s = _nullspace(M, tol.rank_rel)
    scale = np.linalg.norm(M, 2) or 1.0
    out = []
    parr = spec.as_array(p)
    for c in range(N.shape[1]):
        Z = _unit(N[:, c]) if N.shape[1] == 1 else N[:, c]
        res = float(np.linalg.norm(M @ Z) / scale)
        assert res <= tol.rank_rel, "rank-one residual invariant violated"
        out.append(RankOneSample(parr, _unit(xi_u), Z, N.shape[1], res))
    return out


def momentum_for_direction(spec: QlsSpec, p, Z, tol: Tolerances = DEFAULT):
    """Solve sum_j xi_j A_j(p) Z = 0 for xi.

    Returns (xi, relative residual, nullspace dimension); xi is the best
    least-squares direction even when no exact solution exists.
    """
    Z = np.asarray(Z, dtype=float)
    if not np.any(Z):
        raise ValueError("direction must be nonzero")
    Z = Z / np.linalg.norm(Z)
    A = spec.A_num(p)
    B = np.stack([A[j] @ Z for j in range(spec.n)], axis=1)  # k x n
    _, s, Vt = np.linalg.svd(B)
    if not s.size or s[0] == 0:
        return _unit(np.ones(spec.n)), 0.0, spec.n
    xi = Vt[-1]
    res = float(np.linalg.norm(B @ xi) / s[0])
    nulldim = spec.n - int(np.sum(s > tol.membership * s[0]))
    return _unit(xi), res, nulldim


def _polish(spec: QlsSpec, p, xi0: np.ndarray, tol: Tolerances):
    """Gauss-Newton on M(xi) Z = 0 with normalizations xi.xi0 = 1, Z.Z0 = 1."""
    A = spec.A_num(p)
    n, k, m = A.shape
    xi = xi0 / np.linalg.norm(xi0)
    M = np.tensordot(xi, A, axes=1)
    Z = np.linalg.svd(M)[2][-1]
    xr, zr = xi.copy(), Z.copy()
    scale = np.linalg.norm(A.reshape(n, -1), axis=1).max() or 1.0
    for _ in range(tol.newton_maxit):
        M = np.tensordot(xi, A, axes=1)
        F = np.concatenate([M @ Z, [xi @ xr - 1.0, Z @ zr - 1.0]])
        if np.linalg.norm(F[:k]) / scale < tol.newton_tol and abs(F[k]) < 1e-12 and abs(F[k + 1]) < 1e-12:
            break
        J = np.zeros((k + 2, n + m))
        J[:k, :n] = np.stack([A[j] @ Z for j in range(n)], axis=1)
        J[:k, n:] = M
        J[k, :n] = xr
        J[k + 1, n:] = zr
        step = np.linalg.lstsq(J, -F, rcond=None)[0]
        xi = xi + step[:n]
        Z = Z + step[n:]
        if not np.all(np.isfinite(xi)) or np.linalg.norm(xi) > 1e8:
            return None
    return xi / np.linalg.norm(xi)


def cochar_sample(spec: QlsSpec, p, count: int, seed: int = DEFAULT_SEED,
                  tol: Tolerances = DEFAULT) -> list[RankOneSample]:
    """Sample characteristic covectors at p and their cocharacteristic directions.

    Roots are located along random pencils xi = a + s b (generalized eigenvalues of
    the compressed symbol pencil) and polished by Gauss-Newton; if the real
    characteristic variety is not met by pencils (e.g. isolated points), random
    Gauss-Newton starts are used.  Raises NoRealCharacteristic when nothing is found.
    """
    rng = np.random.default_rng(seed)
    A = spec.A_num(p)
    n, k, m = A.shape
    found: list[RankOneSample] = []
    if k < m:
        # underdetermined: every covector is characteristic
        while len(found) < count:
            xi = _unit(rng.standard_normal(n))
            fib = rank_one_fiber(spec, p, xi, tol)
            found.append(RankOneSample(fib[0].p, xi, _unit(fib[0].Z), fib[0].nulldim, fib[0].residual))
        return found
    P = np.eye(m) if k == m else rng.standard_normal((m, k))

    def accept(xi) -> bool:
        if xi is None:
            return False
        xi = _unit(xi)
        if char_indicator(spec, p, xi) > tol.rank_rel:
            return False
        if any(proj_dist(xi, f.xi) < tol.dedupe for f in found):
            return False
        fib = rank_one_fiber(spec, p, xi, tol)
        if not fib:
            return False
        # keep one representative Z per covector
        s = fib[0]
        found.append(RankOneSample(s.p, xi, _unit(s.Z), s.nulldim, s.residual))
        return True

    misses = 0
    while len(found) < count and misses < tol.pencil_retries:
        a, b = rng.standard_normal(n), rng.standard_normal(n)
        Ma, Mb = P @ np.tensordot(a, A, axes=1), P @ np.tensordot(b, A, axes=1)
        try:
            w = sla.eigvals(Ma, -Mb)
        except (np.linalg.LinAlgError, ValueError):
            misses += 1
            continue
        new = False
        for s in w:
            if not np.isfinite(s) or abs(s.imag) > 1e-8 * (1 + abs(s)):
                continue
            if accept(_polish(spec, p, a + s.real * b, tol)):
                new = True
                if len(found) >= count:
                    break
        misses = 0 if new else misses + 1
    misses = 0
    while len(found) < count and misses < tol.pencil_retries:
        if not accept(_polish(spec, p, rng.standard_normal(n), tol)):
            misses += 1
        else:
            misses = 0
    if not found:
        raise NoRealCharacteristic("no real characteristic covector found: possibly elliptic at p")
    return found


# sampling base points

def project_to_state(spec: QlsSpec, p, maxit: int = 50) -> np.ndarray:
    """Gauss-Newton projection onto the constraint set."""
    p = spec.as_array(p).copy()
    for _ in range(maxit):
        F = spec.constraint_values(p)
        if F.size == 0 or np.max(np.abs(F)) < 1e-14:
            return p
        J = spec.constraint_jacobian(p)
        p = p - np.linalg.lstsq(J, F, rcond=None)[0]
    if np.max(np.abs(spec.constraint_values(p))) > 1e-10:
        raise QlsError("could not project the point onto the state manifold")
    return p


def random_point(spec: QlsSpec, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    return project_to_state(spec, rng.uniform(-scale, scale, spec.m))


# compliancy probes

@dataclass
class ProbeResult:
    name: str
    status: str  # "pass" | "fail" | "unknown"
    residuals: dict
    detail: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "residuals": self.residuals,
                "detail": self.detail}


@dataclass
class ComplianceReport:
    p: list
    probes: list[ProbeResult]
    momentum_factor_rank: int
    samples: int

    @property
    def status(self) -> str:
        st = [pr.status for pr in self.probes]
        if "fail" in st:
            return "fail"
        return "pass" if all(s == "pass" for s in st) else "unknown"

    def probe(self, i: int) -> ProbeResult:
        return self.probes[i - 1]

    def as_dict(self) -> dict:
        return {"p": self.p, "status": self.status, "samples": self.samples,
                "momentum_factor_rank": self.momentum_factor_rank,
                "probes": [pr.as_dict() for pr in self.probes]}


def momentum_factor_space(samples: list[RankOneSample], T: np.ndarray, rel: float) -> np.ndarray:
    """Linear maps phi: T_pU -> t* with phi(Z_s) parallel to xi_s for every sample.

    Returns an array (r, n, d) of basis maps written in the tangent basis T (m x d).
    """
    n = samples[0].xi.size
    d = T.shape[1]
    blocks = []
    for s in samples:
        c = T.T @ s.Z
        xi = s.xi / np.linalg.norm(s.xi)
        Pperp = np.eye(n) - np.outer(xi, xi)
        # (Pperp phi c) as linear map of vec(phi) (row-major n x d)
        blocks.append(np.kron(Pperp, c[None, :]))
    Bm = np.vstack(blocks)
    N, _ = _nullspace(Bm, rel)
    return N.T.reshape(-1, n, d)


def compliancy_probe(spec: QlsSpec, p, seed: int = DEFAULT_SEED, tol: Tolerances = DEFAULT,
                     count: int | None = None) -> ComplianceReport:
    """Pointwise numeric probes of the four compliancy conditions at the state p."""
    p = spec.as_array(p)
    T = spec.tangent_basis(p)
    d = T.shape[1]
    n = spec.n
    count = count or (n * d + 8)
    try:
        samples = cochar_sample(spec, p, count, seed, tol)
    except NoRealCharacteristic as exc:
        probes = [ProbeResult(f"({i})", "unknown", {}, f"possibly elliptic: {exc}") for i in range(1, 5)]
        return ComplianceReport(p.tolist(), probes, -1, 0)

    # (1) bijectivity of the characteristic correspondence
    zdims = [s.nulldim for s in samples]
    xdims, xres = [], []
    for s in samples:
        _, r, nd = momentum_for_direction(spec, p, s.Z, tol)
        xdims.append(nd)
        xres.append(r)
    zsep = min((proj_dist(a.Z, b.Z) for a, b in itertools.combinations(samples, 2)), default=np.inf)
    ok1 = all(v == 1 for v in zdims) and all(v == 1 for v in xdims) and zsep > tol.dedupe
    pr1 = ProbeResult("(1) correspondence bijective", "pass" if ok1 else "fail",
                      {"max_Z_fibre_dim": max(zdims), "max_xi_fibre_dim": max(xdims),
                       "min_Z_separation": float(zsep), "max_membership_residual": float(max(xres))})

    # (2) spanning
    X = np.array([s.xi for s in samples])
    Zc = np.array([T.T @ s.Z for s in samples])
    sx = np.linalg.svd(X, compute_uv=False)
    sz = np.linalg.svd(Zc, compute_uv=False)
    rx = float(sx[n - 1] / sx[0]) if len(sx) >= n else 0.0
    rz = float(sz[d - 1] / sz[0]) if len(sz) >= d else 0.0
    ok2 = rx > tol.probe and rz > tol.probe
    pr2 = ProbeResult("(2) spanning", "pass" if ok2 else "fail",
                      {"xi_sigma_ratio": rx, "Z_sigma_ratio": rz})

    # (3) momentum-factor decomposition
    L = momentum_factor_space(samples, T, tol.probe)
    r = L.shape[0]
    if r:
        stacked = L.reshape(r * n, d)
        sv = np.linalg.svd(stacked, compute_uv=False)
        inj = float(sv[d - 1] / sv[0]) if len(sv) >= d else 0.0
    else:
        inj = 0.0
    ok3 = r >= 1 and inj > tol.probe
    detail3 = "" if ok3 else (
        "no linear map sends cocharacteristic directions to their momenta" if r == 0
        else "momentum-factor map is not injective")
    pr3 = ProbeResult("(3) tangent space factorizes through momenta", "pass" if ok3 else "fail",
                      {"rank": r, "injectivity_sigma_ratio": inj}, detail3)

    # (4) no decomposable 2-planes (can only be refuted)
    if r < 2:
        pr4 = ProbeResult("(4) no decomposable 2-planes", "pass", {"rank": r},
                          "vacuous: momentum factor has rank < 2")
    else:
        rng = np.random.default_rng(seed + 1)
        worst = np.inf
        for a, b in itertools.combinations(range(len(samples)), 2):
            if proj_dist(samples[a].Z, samples[b].Z) < 0.05:
                continue  # nearly parallel pairs are nearly decomposable for trivial reasons
            za, zb = T.T @ samples[a].Z, T.T @ samples[b].Z
            for _ in range(2):
                c = rng.standard_normal(2)
                Phi = np.einsum("rnd,d->nr", L, c[0] * za + c[1] * zb)
                sv = np.linalg.svd(Phi, compute_uv=False)
                worst = min(worst, float(sv[1] / sv[0]) if sv[0] > 0 else 0.0)
        found = worst < tol.probe
        pr4 = ProbeResult("(4) no decomposable 2-planes", "fail" if found else "unknown",
                          {"rank": r, "min_second_singular_ratio": worst},
                          "decomposable plane found" if found else
                          "no decomposable plane among sampled pairs; finite probe cannot certify")
    return ComplianceReport(p.tolist(), [pr1, pr2, pr3, pr4], r, len(samples))
