"""Nets on parameter domains: pre-net integrability, cocharacteristic membership,
conjugacy, and reconstruction of diagonal characteristic momenta from a net."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .config import DEFAULT, Tolerances
from .qls import QlsError, QlsSpec, char_indicator, char_polynomial, momentum_for_direction
from .symkernel import RationalFn, SymbolTable, compile_rf, parse, partial, substitute_rf, to_rf

# sampled-net conjugacy threshold sigma_3/sigma_1 < CONJUGACY_C * h^2; about 30x the
# constant (0.06) measured on the dKP reduction nets built by dkp_lab.gt_integrate
CONJUGACY_C = 2.0


class NetError(ValueError):
    pass


def r_vars(N: int) -> tuple[str, ...]:
    return tuple(f"r{a + 1}" for a in range(N))


def _sigma_ratio(M: np.ndarray) -> tuple[float, np.ndarray]:
    """sigma_3 / sigma_1 of a 3-column matrix (0 when fewer than 3 rows)."""
    s = np.linalg.svd(M, compute_uv=False)
    if s.size < 3 or s[0] == 0:
        return 0.0, s
    return float(s[2] / s[0]), s


# parametrized maps

@dataclass
class ParamMap:
    """r -> U(r) from an N-dimensional parameter domain into an m-dimensional state space.

    Either symbolic (``exprs`` in the variables r1..rN) or sampled on a tensor grid
    (``values`` of shape (*grid, m), with optional exact ``tangent_values`` of shape
    (N, *grid, m); finite differences are used otherwise).
    """
    N: int
    m: int
    exprs: tuple[RationalFn, ...] | None = None
    variables: tuple[str, ...] = ()
    fns: dict = field(default_factory=dict)
    axes: list[np.ndarray] | None = None
    values: np.ndarray | None = None
    tangent_values: np.ndarray | None = None

    # constructors

    @classmethod
    def symbolic(cls, exprs: Sequence, N: int | None = None, variables: Sequence[str] | None = None,
                 fns: Mapping | None = None, functions: Sequence[str] = ()) -> "ParamMap":
        if variables is None:
            if N is None:
                raise NetError("give N or the parameter names")
            variables = r_vars(N)
        variables = tuple(variables)
        if any(isinstance(e, str) for e in exprs):
            tab = SymbolTable()
            tab.declare_variables(*variables)
            if functions:
                tab.declare_functions(*functions)
            exprs = [to_rf(parse(e, tab)) if isinstance(e, str) else e for e in exprs]
        exprs = tuple(exprs)
        extra = set().union(*(e.variables() for e in exprs)) - set(variables)
        if extra:
            raise NetError(f"map depends on undeclared parameters {sorted(extra)}")
        return cls(len(variables), len(exprs), exprs, variables, dict(fns or {}))

    @classmethod
    def sampled(cls, axes: Sequence[np.ndarray], values: np.ndarray,
                tangents: np.ndarray | None = None) -> "ParamMap":
        axes = [np.asarray(a, float) for a in axes]
        values = np.asarray(values, float)
        N = len(axes)
        if values.shape[:N] != tuple(a.size for a in axes) or values.ndim != N + 1:
            raise NetError("sampled net values must have shape (*grid, m)")
        if tangents is not None and tangents.shape != (N,) + values.shape:
            raise NetError("tangents must have shape (N, *grid, m)")
        return cls(N, values.shape[-1], axes=axes, values=values, tangent_values=tangents)

    @classmethod
    def from_field(cls, fld, names: Sequence[str] = ("U", "V")) -> "ParamMap":
        """Net r -> (U, potentials...) of a reduction field, with its exact tangents."""
        return cls.sampled(fld.axes, fld.values(names), fld.tangents(names))

    @property
    def is_symbolic(self) -> bool:
        return self.exprs is not None

    @property
    def h(self) -> float:
        if self.is_symbolic:
            raise NetError("symbolic nets have no spacing")
        return max(float(a[1] - a[0]) for a in self.axes)

    # symbolic evaluation

    def _compiled(self, key: str):
        cache = self.__dict__.setdefault("_cache", {})
        if key not in cache:
            v = list(self.variables)
            if key == "U":
                cache[key] = [compile_rf(e, v, self.fns) for e in self.exprs]
            elif key == "dU":
                cache[key] = [[compile_rf(partial(e, x), v, self.fns) for e in self.exprs]
                              for x in self.variables]
            else:
                cache[key] = [[[compile_rf(partial(partial(e, x), y), v, self.fns) for e in self.exprs]
                               for y in self.variables] for x in self.variables]
        return cache[key]

    def value(self, r) -> np.ndarray:
        return np.array([float(f(*r)) for f in self._compiled("U")])

    def tangents(self, r) -> np.ndarray:
        """(N, m) matrix of d_a U at r."""
        return np.array([[float(f(*r)) for f in row] for row in self._compiled("dU")])

    def second(self, r) -> np.ndarray:
        """(N, N, m) array of d_a d_b U at r."""
        return np.array([[[float(f(*r)) for f in col] for col in row]
                         for row in self._compiled("d2U")])

    def on_grid(self, box: Sequence[tuple[float, float]], resolution: int) -> "ParamMap":
        """Sample a symbolic net on a tensor grid, keeping exact tangents."""
        if not self.is_symbolic:
            return self
        axes = [np.linspace(lo, hi, resolution + 1) for lo, hi in box]
        mesh = np.meshgrid(*axes, indexing="ij")
        shape = mesh[0].shape

        def ev(f):
            return np.broadcast_to(np.asarray(f(*mesh), float), shape)

        vals = np.stack([ev(f) for f in self._compiled("U")], -1)
        tang = np.stack([np.stack([ev(f) for f in row], -1) for row in self._compiled("dU")])
        return ParamMap.sampled(axes, vals, tang)

    def reparametrized(self, maps: Sequence) -> "ParamMap":
        """Compose with r_a -> rho_a(r_a) (symbolic nets)."""
        if not self.is_symbolic:
            raise NetError("reparametrization is defined for symbolic nets")
        tab = SymbolTable()
        tab.declare_variables(*self.variables)
        rho = {v: (to_rf(parse(m, tab)) if isinstance(m, str) else m)
               for v, m in zip(self.variables, maps)}
        return ParamMap(self.N, self.m, tuple(substitute_rf(e, rho) for e in self.exprs),
                        self.variables, dict(self.fns))

    # sampled evaluation

    def grid_tangents(self) -> np.ndarray:
        """(N, *grid, m) tangents: exact when supplied, else second-order differences."""
        if self.tangent_values is not None:
            return self.tangent_values
        return np.stack([np.gradient(self.values, self.axes[a], axis=a, edge_order=2)
                         for a in range(self.N)])

    def grid_second(self, a: int, b: int) -> np.ndarray:
        """d_b d_a U on the grid by central differences of the tangents."""
        return np.gradient(self.grid_tangents()[a], self.axes[b], axis=b, edge_order=2)

    def interior(self) -> list[tuple[int, ...]]:
        if self.values is None:
            raise NetError("symbolic net: give sample points")
        shape = self.values.shape[:-1]
        if any(s < 3 for s in shape):
            raise NetError("sampled net has no interior nodes")
        return list(itertools.product(*[range(1, s - 1) for s in shape]))


@dataclass
class PreNetFrame:
    """N vector fields on an open set of R^m, as m-vectors of expressions in ``coords``."""
    fields: tuple[tuple[RationalFn, ...], ...]
    coords: tuple[str, ...]
    fns: dict = field(default_factory=dict)

    @classmethod
    def from_strings(cls, fields: Sequence[Sequence[str]], coords: Sequence[str],
                     fns: Mapping | None = None, functions: Sequence[str] = ()) -> "PreNetFrame":
        tab = SymbolTable()
        tab.declare_variables(*coords)
        if functions:
            tab.declare_functions(*functions)
        rows = tuple(tuple(to_rf(parse(s, tab)) for s in X) for X in fields)
        if any(len(X) != len(coords) for X in rows):
            raise NetError("each vector field needs one component per coordinate")
        return cls(rows, tuple(coords), dict(fns or {}))

    @property
    def N(self) -> int:
        return len(self.fields)

    def bracket(self, a: int, b: int) -> tuple[RationalFn, ...]:
        X, Y = self.fields[a], self.fields[b]
        out = []
        for i in range(len(self.coords)):
            s = RationalFn.const(0)
            for j, x in enumerate(self.coords):
                s = s + X[j] * partial(Y[i], x) - Y[j] * partial(X[i], x)
            out.append(s)
        return tuple(out)

    def evaluate(self, vec: Sequence[RationalFn], p) -> np.ndarray:
        pt = dict(zip(self.coords, (float(v) for v in p)))
        return np.array([float(compile_rf(e, list(self.coords), self.fns)(*pt.values()))
                         for e in vec])


# pre-net integrability

@dataclass
class PairVerdict:
    pair: tuple[int, int]
    passed: bool
    worst: float
    witness: dict | None = None

    def as_dict(self) -> dict:
        return {"pair": [self.pair[0] + 1, self.pair[1] + 1], "passed": self.passed,
                "worst_sigma_ratio": self.worst, "witness": self.witness}


@dataclass
class PairsReport:
    passed: bool
    pairs: list[PairVerdict]
    threshold: float
    vacuous: bool = False

    def as_dict(self) -> dict:
        return {"passed": self.passed, "threshold": self.threshold, "vacuous": self.vacuous,
                "pairs": [p.as_dict() for p in self.pairs]}


def prenet_integrability_check(frame: PreNetFrame, samples: Sequence, tol: Tolerances = DEFAULT
                               ) -> PairsReport:
    """[X_a, X_b] in span{X_a, X_b} at every sample, for every pair a < b."""
    samples = [np.asarray(p, float) for p in samples]
    for p in samples:
        F = np.array([frame.evaluate(X, p) for X in frame.fields])
        s = np.linalg.svd(F, compute_uv=False)
        if s[0] == 0 or s[frame.N - 1] / s[0] < tol.prenet:
            raise NetError(f"frame is dependent at {p.tolist()}")
    out = []
    for a, b in itertools.combinations(range(frame.N), 2):
        br = frame.bracket(a, b)
        worst, wit = 0.0, None
        for p in samples:
            M = np.stack([frame.evaluate(br, p), frame.evaluate(frame.fields[a], p),
                          frame.evaluate(frame.fields[b], p)], axis=1)
            ratio, s = _sigma_ratio(M)
            if ratio >= worst:
                worst = ratio
                if ratio >= tol.prenet:
                    wit = {"sample": p.tolist(), "singular_values": s.tolist()}
        out.append(PairVerdict((a, b), worst < tol.prenet, worst, wit))
    return PairsReport(all(v.passed for v in out), out, tol.prenet, frame.N < 2)


# cocharacteristic membership

@dataclass
class DirectionMembership:
    direction: int
    passed: bool
    max_residual: float
    max_char_value: float
    max_nulldim: int
    xi: np.ndarray   # (samples, n) unit momenta

    def as_dict(self) -> dict:
        return {"direction": self.direction + 1, "passed": self.passed,
                "max_residual": self.max_residual, "max_char_value": self.max_char_value,
                "max_xi_fibre_dim": self.max_nulldim, "xi": self.xi.tolist()}


@dataclass
class MembershipReport:
    passed: bool
    directions: list[DirectionMembership]
    threshold: float
    char_test: str

    def as_dict(self) -> dict:
        return {"passed": self.passed, "threshold": self.threshold, "char_test": self.char_test,
                "directions": [d.as_dict() for d in self.directions]}


def _char_evaluator(spec: QlsSpec):
    """|CharPoly(xi)| for square systems, else the symbol-matrix indicator."""
    if spec.k == spec.m:
        try:
            cp = char_polynomial(spec)
            return "char_polynomial", lambda p, xi: abs(cp.evaluate(spec, p, xi))
        except QlsError:
            pass
    return "symbol_matrix_indicator", lambda p, xi: char_indicator(spec, p, xi)


def _net_points(net: ParamMap, samples):
    """(state points (S, m), tangents (S, N, m)) at the samples."""
    if net.is_symbolic:
        if samples is None:
            raise NetError("symbolic net: give sample points")
        pts = [np.asarray(r, float) for r in samples]
        return np.array([net.value(r) for r in pts]), np.array([net.tangents(r) for r in pts])
    idx = net.interior() if samples is None else [tuple(s) for s in samples]
    T = net.grid_tangents()
    P = np.array([net.values[i] for i in idx])
    Z = np.array([[T[(a,) + i] for a in range(net.N)] for i in idx])
    return P, Z


def cochar_membership(spec: QlsSpec, net: ParamMap, samples=None, tol: Tolerances = DEFAULT
                      ) -> MembershipReport:
    """For each net direction a, find xi with xi (x) d_aU in E_U at every sample."""
    if net.m != spec.m:
        raise NetError(f"net has {net.m} components, the system has {spec.m} coordinates")
    P, Z = _net_points(net, samples)
    how, char = _char_evaluator(spec)
    dirs = []
    for a in range(net.N):
        res, cv, nd, xis = [], [], [], []
        for p, z in zip(P, Z[:, a]):
            if not np.any(z):
                raise NetError(f"direction {a + 1} vanishes at U = {p.tolist()}")
            xi, r, d = momentum_for_direction(spec, p, z, tol)
            res.append(r)
            cv.append(char(p, xi))
            nd.append(d)
            xis.append(xi)
        mr = float(max(res))
        dirs.append(DirectionMembership(a, mr < tol.membership, mr, float(max(cv)), int(max(nd)),
                                        np.array(xis)))
    return MembershipReport(all(d.passed for d in dirs), dirs, tol.membership, how)


# conjugacy

def conjugacy_check(net: ParamMap, samples=None, tol: Tolerances = DEFAULT,
                    C: float = CONJUGACY_C) -> PairsReport:
    """d_a d_b U in span{d_a U, d_b U} for every a != b (numeric rank of three columns)."""
    if net.is_symbolic:
        if samples is None:
            raise NetError("symbolic net: give sample points")
        threshold = tol.conjugacy
        pts = [np.asarray(r, float) for r in samples]
        data = [(r.tolist(), net.tangents(r), net.second(r)) for r in pts]

        def cols(item, a, b):
            _, T, S = item
            return S[a, b], T[a], T[b]
    else:
        threshold = C * net.h ** 2
        idx = net.interior() if samples is None else [tuple(s) for s in samples]
        T = net.grid_tangents()
        S = {(a, b): net.grid_second(a, b) for a, b in itertools.combinations(range(net.N), 2)}
        data = [(list(i), i) for i in idx]

        def cols(item, a, b):
            i = item[1]
            return S[a, b][i], T[(a,) + i], T[(b,) + i]
    out = []
    for a, b in itertools.combinations(range(net.N), 2):
        worst, wit = 0.0, None
        for item in data:
            ratio, s = _sigma_ratio(np.stack(cols(item, a, b), axis=1))
            if ratio >= worst:
                worst = ratio
                if ratio >= threshold:
                    wit = {"sample": item[0], "singular_values": s.tolist()}
        out.append(PairVerdict((a, b), worst < threshold, worst, wit))
    return PairsReport(all(v.passed for v in out), out, threshold, net.N < 2 or net.m < 3)


# momenta reconstruction

@dataclass
class NetReduction:
    """Characteristic momenta reconstructed from a sampled net, in the gauge kappa_a1 = 1."""
    axes: list[np.ndarray]
    kappa: np.ndarray          # (N, *grid, n)
    gamma: np.ndarray          # (N, N, *interior) least-squares rotation coefficients
    deviation: np.ndarray      # (N, N) max j-dependence of d_b kappa_aj / (kappa_bj - kappa_aj)
    membership_residual: float
    min_gauge: float           # min |xi_a1| / |xi_a| over nodes
    min_separation: float      # min projective distance between kappa_a and kappa_b
    min_immersion: float       # min sigma_N / sigma_1 of the tangent frame
    max_fibre_dim: int = 1     # > 1: momenta not unique, kappa_a is the gauge-closest choice

    @property
    def max_deviation(self) -> float:
        return float(self.deviation.max())

    def as_dict(self) -> dict:
        return {"max_deviation": self.max_deviation, "deviation": self.deviation.tolist(),
                "membership_residual": self.membership_residual, "min_gauge": self.min_gauge,
                "min_separation": self.min_separation, "min_immersion": self.min_immersion,
                "max_fibre_dim": self.max_fibre_dim,
                "generic": self.min_gauge > 1e-8 and self.min_separation > 1e-6
                and self.min_immersion > 1e-8 and self.max_fibre_dim == 1}


def _gauge_choice(spec: QlsSpec, p, Z, tol: Tolerances) -> np.ndarray:
    """Projection of (1, 0, ..., 0) onto a multi-dimensional momentum fibre."""
    A = spec.A_num(p)
    B = np.stack([A[j] @ Z for j in range(spec.n)], axis=1)
    _, s, Vt = np.linalg.svd(B)
    rank = int(np.sum(s > tol.membership * s[0])) if s.size and s[0] > 0 else 0
    K = Vt[rank:]
    return K.T @ K[:, 0]


def net_to_reduction(spec: QlsSpec, net: ParamMap, tol: Tolerances = DEFAULT,
                     grid: tuple | None = None) -> NetReduction:
    """Reconstruct kappa_a(r) from the net and test d_b kappa_a parallel to kappa_b - kappa_a.

    The deviation at a node is the component of d_b kappa_a orthogonal to
    kappa_b - kappa_a, i.e. the failure of d_b kappa_aj / (kappa_bj - kappa_aj) to be
    independent of j.  Symbolic nets are sampled on ``grid = (box, resolution)``.
    """
    if net.is_symbolic:
        if grid is None:
            raise NetError("symbolic net: give grid=(box, resolution)")
        net = net.on_grid(*grid)
    if net.m != spec.m:
        raise NetError(f"net has {net.m} components, the system has {spec.m} coordinates")
    N, n = net.N, spec.n
    shape = net.values.shape[:-1]
    T = net.grid_tangents()
    kappa = np.zeros((N,) + shape + (n,))
    worst_res, min_gauge, min_imm, max_fibre = 0.0, np.inf, np.inf, 0
    for i in itertools.product(*[range(s) for s in shape]):
        p = net.values[i]
        frame = np.array([T[(a,) + i] for a in range(N)])
        sv = np.linalg.svd(frame, compute_uv=False)
        min_imm = min(min_imm, float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0)
        for a in range(N):
            xi, r, nd = momentum_for_direction(spec, p, frame[a], tol)
            if nd > 1:
                xi = _gauge_choice(spec, p, frame[a], tol)
            max_fibre = max(max_fibre, nd)
            worst_res = max(worst_res, r)
            g = abs(xi[0]) / np.linalg.norm(xi)
            min_gauge = min(min_gauge, g)
            if g < 1e-12:
                raise NetError(f"gauge failure: kappa_{a + 1},1 vanishes at node {i}")
            kappa[(a,) + i] = xi / xi[0]
    if worst_res >= tol.membership:
        raise NetError(f"net violates cocharacteristic membership (residual {worst_res:.3g})")
    inner = tuple(slice(1, -1) for _ in shape)
    dev = np.zeros((N, N))
    gamma = np.zeros((N, N) + tuple(s - 2 for s in shape))
    sep = np.inf
    for a, b in itertools.permutations(range(N), 2):
        dk = np.gradient(kappa[a], net.axes[b], axis=b)[inner]
        d = (kappa[b] - kappa[a])[inner]
        dd = np.einsum("...j,...j->...", d, d)
        g = np.einsum("...j,...j->...", dk, d) / dd
        gamma[a, b] = g
        dev[a, b] = float(np.abs(dk - g[..., None] * d).max())
        ua = kappa[a] / np.linalg.norm(kappa[a], axis=-1, keepdims=True)
        ub = kappa[b] / np.linalg.norm(kappa[b], axis=-1, keepdims=True)
        sep = min(sep, float(np.minimum(np.linalg.norm(ua - ub, axis=-1),
                                        np.linalg.norm(ua + ub, axis=-1)).min()))
    return NetReduction(net.axes, kappa, gamma, dev, float(worst_res), float(min_gauge),
                        float(sep), float(min_imm), max_fibre)


def compatibility_verdict(coarse: NetReduction, fine: NetReduction, exact: float = 1e-10,
                          min_ratio: float = 3.0) -> bool:
    """Deviation that is either negligible or decays under grid halving (ratio > 3, about h^2)."""
    d1, d2 = coarse.max_deviation, fine.max_deviation
    return bool(d2 < exact or (d1 > 0 and d1 / d2 > min_ratio))
