"""Semi-Hamiltonian verification of diagonal hydrodynamic systems and the generalized hodograph solver.

A diagonal system d_{t_j} R^a = kappa_aj(R) d_{t_1} R^a is held in the gauge
kappa_a1 = 1.  Rotation coefficients gamma_ab satisfy
d_b kappa_aj = gamma_ab (kappa_bj - kappa_aj) for every j, and the system is
semi-Hamiltonian when, for distinct a, b, c,

    d_c gamma_ab = d_b gamma_ac,
    d_b gamma_ac = gamma_ab gamma_bc + gamma_ac gamma_cb - gamma_ac gamma_ab.

Solutions are produced from an affine lift (kappa_a, c_a) by solving
sum_j kappa_aj(R) t_j + c_a(R) = 0 node by node.
"""
from __future__ import annotations

import csv
import itertools
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .config import DEFAULT, Tolerances
from .symkernel import (
    ONE_RF, ZERO_RF, RationalFn, compile_rf, derivation, eval_rf, is_atom_key, pretty,
    rf_to_expr, to_str, zero_test,
)

Rule = Callable[[str], "RationalFn | None"]


class DiagonalError(ValueError):
    pass


class DegenerateDiagonal(DiagonalError):
    """All compatibility denominators vanish identically for some pair."""


def r_names(N: int) -> list[str]:
    return [f"r{a + 1}" for a in range(N)]


def _coordinate_rule(var: str) -> Rule:
    return lambda k: None if is_atom_key(k) else (ONE_RF if k == var else ZERO_RF)


@dataclass
class DiagonalSystem:
    """kappa: N x n matrix of RationalFn; derivations default to d/dr_b.

    ``rules`` may replace the coordinate derivations (e.g. when kappa is written in
    generators whose r-derivatives are prescribed by reduction equations).
    ``fns`` binds formal functions for numeric evaluation.
    """

    kappa: list[list[RationalFn]]
    variables: list[str] | None = None
    gamma: list[list[RationalFn | None]] | None = None
    rules: list[Rule] | None = None
    fns: dict = field(default_factory=dict)
    name: str = "diagonal"

    def __post_init__(self):
        self.kappa = [[RationalFn.const(e) if isinstance(e, (int, float)) else e for e in row]
                      for row in self.kappa]
        if len({len(row) for row in self.kappa}) != 1:
            raise DiagonalError("kappa rows have different lengths")
        if self.variables is None:
            self.variables = r_names(self.N)
        if self.rules is None:
            if len(self.variables) != self.N:
                raise DiagonalError("one Riemann invariant per component is required")
            self.rules = [_coordinate_rule(v) for v in self.variables]
        # Tsarev gauge: kappa_a1 = 1
        for a, row in enumerate(self.kappa):
            if row[0] != ONE_RF:
                if zero_test(row[0]).zero:
                    raise DiagonalError(f"kappa_{a + 1},1 vanishes identically: gauge failure")
                self.kappa[a] = [e / row[0] for e in row]

    @property
    def N(self) -> int:
        return len(self.kappa)

    @property
    def n(self) -> int:
        return len(self.kappa[0])

    def d(self, b: int, r: RationalFn) -> RationalFn:
        return derivation(r, self.rules[b])

    def summary(self) -> dict:
        return {"name": self.name, "N": self.N, "n": self.n, "variables": list(self.variables),
                "kappa": [[to_str(rf_to_expr(e)) for e in row] for row in self.kappa]}


def uncoupled(kappa_fns: Sequence[Sequence[str]], name: str = "uncoupled") -> DiagonalSystem:
    """Convenience constructor from strings in r1..rN."""
    from .symkernel import SymbolTable, parse, to_rf

    N = len(kappa_fns)
    tab = SymbolTable()
    tab.declare_variables(*r_names(N))
    return DiagonalSystem([[to_rf(parse(s, tab)) for s in row] for row in kappa_fns], name=name)


# rotation coefficients

@dataclass
class GammaReport:
    gamma: list[list[RationalFn | None]]
    jstar: list[list[int | None]]
    residuals: dict  # (a, b, j) -> RationalFn
    consistent: bool
    probabilistic: bool = False

    def as_dict(self) -> dict:
        N = len(self.gamma)
        return {
            "consistent": self.consistent,
            "probabilistic": self.probabilistic,
            "gamma": {f"{a + 1},{b + 1}": pretty(rf_to_expr(self.gamma[a][b]))
                      for a in range(N) for b in range(N) if a != b},
            "nonzero_residuals": {f"{a + 1},{b + 1},j={j + 1}": pretty(rf_to_expr(r))
                                  for (a, b, j), r in self.residuals.items() if not r.is_zero()},
        }


def gamma_from_momenta(sys: DiagonalSystem) -> GammaReport:
    N, n = sys.N, sys.n
    gamma = [[None] * N for _ in range(N)]
    jstar = [[None] * N for _ in range(N)]
    residuals = {}
    consistent, prob = True, False
    for a, b in itertools.permutations(range(N), 2):
        js = next((j for j in range(1, n)
                   if not zero_test(sys.kappa[b][j] - sys.kappa[a][j]).zero), None)
        if js is None:
            raise DegenerateDiagonal(f"kappa_{a + 1} and kappa_{b + 1} coincide identically")
        dk = [sys.d(b, sys.kappa[a][j]) for j in range(n)]
        den = sys.kappa[b][js] - sys.kappa[a][js]
        gamma[a][b] = dk[js] / den
        jstar[a][b] = js
        for j in range(1, n):
            if j == js:
                continue
            res = dk[j] * den - dk[js] * (sys.kappa[b][j] - sys.kappa[a][j])
            v = zero_test(res)
            prob |= v.method == "probabilistic"
            residuals[(a, b, j)] = ZERO_RF if v.zero else res
            consistent &= v.zero
    return GammaReport(gamma, jstar, residuals, consistent, prob)


def check_gamma(sys: DiagonalSystem, gamma) -> dict:
    """Residuals d_b kappa_aj - gamma_ab (kappa_bj - kappa_aj) that do not vanish."""
    out = {}
    for a, b in itertools.permutations(range(sys.N), 2):
        for j in range(1, sys.n):
            res = sys.d(b, sys.kappa[a][j]) - gamma[a][b] * (sys.kappa[b][j] - sys.kappa[a][j])
            if not zero_test(res).zero:
                out[(a, b, j)] = res
    return out


@dataclass
class TsarevReport:
    passed: bool
    residuals: dict  # ((a, b, c), kind) -> RationalFn
    probabilistic: bool = False
    vacuous: bool = False

    def as_dict(self) -> dict:
        return {
            "verdict": "pass" if self.passed else "fail",
            "vacuous": self.vacuous,
            "probabilistic": self.probabilistic,
            "nonzero_residuals": {f"{k}({a + 1},{b + 1},{c + 1})": pretty(rf_to_expr(r))
                                  for ((a, b, c), k), r in self.residuals.items()},
        }


def tsarev_residuals(sys: DiagonalSystem, gamma) -> dict:
    """Both closure conditions for every ordered triple of distinct indices."""
    out = {}
    for a, b, c in itertools.permutations(range(sys.N), 3):
        g = gamma
        out[((a, b, c), "symmetry")] = sys.d(c, g[a][b]) - sys.d(b, g[a][c])
        out[((a, b, c), "closure")] = (sys.d(b, g[a][c]) - g[a][b] * g[b][c]
                                       - g[a][c] * g[c][b] + g[a][c] * g[a][b])
    return out


def semi_hamiltonian_check(sys: DiagonalSystem, gamma=None) -> TsarevReport:
    if gamma is None:
        gamma = sys.gamma if sys.gamma is not None else gamma_from_momenta(sys).gamma
    if sys.N < 3:
        return TsarevReport(True, {}, vacuous=True)
    bad, prob = {}, False
    for key, res in tsarev_residuals(sys, gamma).items():
        v = zero_test(res)
        prob |= v.method == "probabilistic"
        if not v.zero:
            bad[key] = res
    return TsarevReport(not bad, bad, prob)


def sample_residuals(residuals, variables: Sequence[str], fns: dict, points: int = 5,
                     seed: int = 0, low: float = -1.0, high: float = 1.0) -> float:
    """Max |residual| over random points (for numeric size estimates)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    gens = set()
    for r in residuals:
        gens |= r.variables()
    for _ in range(points):
        pt = {v: float(rng.uniform(low, high)) for v in sorted(gens | set(variables))}
        for r in residuals:
            worst = max(worst, abs(float(eval_rf(r, pt, fns))))
    return worst


# affine lifts and the hodograph solver

@dataclass
class AffineLift:
    """Constant parts c_a of the lifts (kappa_a, c_a)."""

    c: list[RationalFn]

    def check(self, sys: DiagonalSystem, gamma=None) -> dict:
        """Residuals d_b c_a - gamma_ab (c_b - c_a) for a != b (empty when valid)."""
        if gamma is None:
            gamma = gamma_from_momenta(sys).gamma
        out = {}
        for a, b in itertools.permutations(range(sys.N), 2):
            res = sys.d(b, self.c[a]) - gamma[a][b] * (self.c[b] - self.c[a])
            if not zero_test(res).zero:
                out[(a, b)] = res
        return out


FLAG_OK, FLAG_DIVERGED, FLAG_SINGULAR = 0, 1, 2


@dataclass
class HydroSolution:
    axes: list[np.ndarray]
    R: np.ndarray          # shape grid + (N,)
    flags: np.ndarray      # shape grid
    residual: np.ndarray   # shape grid, max-norm of the implicit equations
    iterations: np.ndarray

    @property
    def h(self) -> list[float]:
        return [float(ax[1] - ax[0]) for ax in self.axes]

    def stats(self) -> dict:
        ok = self.flags == FLAG_OK
        return {
            "nodes": int(self.flags.size),
            "flagged": int((~ok).sum()),
            "diverged": int((self.flags == FLAG_DIVERGED).sum()),
            "singular": int((self.flags == FLAG_SINGULAR).sum()),
            "max_implicit_residual": float(self.residual[ok].max()) if ok.any() else None,
            "max_newton_iterations": int(self.iterations.max()),
        }

    def to_csv(self, path: str, names: Sequence[str] | None = None) -> None:
        n = len(self.axes)
        names = list(names or [f"t{j + 1}" for j in range(n)])
        N = self.R.shape[-1]
        mesh = np.meshgrid(*self.axes, indexing="ij")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + [f"R{a + 1}" for a in range(N)] + ["flag"])
            cols = [m.ravel() for m in mesh] + [self.R[..., a].ravel() for a in range(N)]
            for i, flag in enumerate(self.flags.ravel()):
                w.writerow([format(c[i], ".17g") for c in cols] + [int(flag)])


class _Compiled:
    """Vectorized F(t, R) and dF/dR for the implicit hodograph equations."""

    def __init__(self, sys: DiagonalSystem, lift: AffineLift):
        if sys.variables != r_names(sys.N) and len(sys.variables) != sys.N:
            raise DiagonalError("the hodograph solver needs kappa written in the Riemann invariants")
        v = list(sys.variables)
        self.N, self.n = sys.N, sys.n
        comp = lambda e: compile_rf(e, v, sys.fns)  # noqa: E731
        self.k = [[comp(sys.kappa[a][j]) for j in range(sys.n)] for a in range(sys.N)]
        self.c = [comp(lift.c[a]) for a in range(sys.N)]
        self.dk = [[[comp(sys.d(b, sys.kappa[a][j])) for j in range(sys.n)] for b in range(sys.N)]
                   for a in range(sys.N)]
        self.dc = [[comp(sys.d(b, lift.c[a])) for b in range(sys.N)] for a in range(sys.N)]

    @staticmethod
    def _v(f, R, m):
        return np.broadcast_to(np.asarray(f(*R.T), dtype=float), (m,))

    def F(self, T, R):
        m = T.shape[0]
        out = np.empty((m, self.N))
        for a in range(self.N):
            acc = self._v(self.c[a], R, m).copy()
            for j in range(self.n):
                acc += self._v(self.k[a][j], R, m) * T[:, j]
            out[:, a] = acc
        return out

    def J(self, T, R):
        m = T.shape[0]
        out = np.empty((m, self.N, self.N))
        for a in range(self.N):
            for b in range(self.N):
                acc = self._v(self.dc[a][b], R, m).copy()
                for j in range(self.n):
                    acc += self._v(self.dk[a][b][j], R, m) * T[:, j]
                out[:, a, b] = acc
        return out


def _newton(cmp: _Compiled, T, R0, tol: Tolerances):
    """Batched Newton; each node is iterated independently of the others."""
    R = R0.copy()
    m = T.shape[0]
    flags = np.full(m, FLAG_DIVERGED, dtype=np.int8)
    its = np.zeros(m, dtype=np.int32)
    res = np.full(m, np.inf)
    active = np.ones(m, dtype=bool)
    for it in range(tol.newton_maxit + 1):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        F = cmp.F(T[idx], R[idx])
        r = np.max(np.abs(F), axis=1)
        res[idx] = r
        done = r < tol.newton_tol
        flags[idx[done]] = FLAG_OK
        its[idx[done]] = it
        active[idx[done]] = False
        idx, F = idx[~done], F[~done]
        if idx.size == 0 or it == tol.newton_maxit:
            its[idx] = it
            break
        J = cmp.J(T[idx], R[idx])
        s = np.linalg.svd(J, compute_uv=False)
        sing = ~(s[:, -1] > 1e-13 * np.maximum(s[:, 0], 1.0))
        if sing.any():
            flags[idx[sing]] = FLAG_SINGULAR
            its[idx[sing]] = it
            active[idx[sing]] = False
            idx, F, J = idx[~sing], F[~sing], J[~sing]
        if idx.size:
            R[idx] -= np.linalg.solve(J, F[..., None])[..., 0]
    # accept nodes whose residual reached the acceptance level even if not tol
    near = (flags == FLAG_DIVERGED) & (res < tol.hodograph_accept)
    flags[near] = FLAG_OK
    # breaking: dF/dR (nearly) singular at the converged root
    ok = np.nonzero(flags == FLAG_OK)[0]
    if ok.size:
        J = cmp.J(T[ok], R[ok])
        s = np.linalg.svd(J, compute_uv=False)
        brk = s[:, -1] < 1e-8 * np.maximum(s[:, 0], 1.0)
        flags[ok[brk]] = FLAG_SINGULAR
    return R, flags, res, its


def predecessor(idx: tuple[int, ...]) -> tuple[int, ...] | None:
    """Warm-start source: decrement the last nonzero index (a grid neighbour)."""
    for k in range(len(idx) - 1, -1, -1):
        if idx[k] > 0:
            return idx[:k] + (idx[k] - 1,) + (0,) * (len(idx) - k - 1)
    return None


def hodograph_solve(sys: DiagonalSystem, lift: AffineLift, box: Sequence[tuple[float, float]],
                    resolution: int | Sequence[int], seed_R, tol: Tolerances = DEFAULT,
                    threads: int = 1) -> HydroSolution:
    """Solve sum_j kappa_aj(R) t_j + c_a(R) = 0 on a grid (resolution = intervals per axis).

    Nodes are processed by anti-diagonal wavefronts; every node is warm-started
    from its fixed predecessor, so the result does not depend on ``threads``.
    """
    n = sys.n
    if len(box) != n:
        raise DiagonalError(f"box must have {n} intervals")
    res = [resolution] * n if np.isscalar(resolution) else list(resolution)
    axes = [np.linspace(lo, hi, r + 1) for (lo, hi), r in zip(box, res)]
    shape = tuple(r + 1 for r in res)
    N = sys.N
    cmp = _Compiled(sys, lift)
    R = np.full(shape + (N,), np.nan)
    flags = np.zeros(shape, dtype=np.int8)
    resid = np.zeros(shape)
    its = np.zeros(shape, dtype=np.int32)
    seed_R = np.asarray(seed_R, dtype=float).reshape(N)

    grid_idx = np.indices(shape).reshape(n, -1).T
    level = grid_idx.sum(axis=1)
    order = np.argsort(level, kind="stable")
    bounds = np.searchsorted(level[order], np.arange(level.max() + 2))
    # predecessor along the last nonzero axis, vectorized
    pred = grid_idx.copy()
    nz = grid_idx > 0
    last = np.where(nz.any(axis=1), n - 1 - np.argmax(nz[:, ::-1], axis=1), -1)
    rows = np.nonzero(last >= 0)[0]
    pred[rows, last[rows]] -= 1
    for r_ in rows:
        pred[r_, last[r_] + 1:] = 0

    flatR = R.reshape(-1, N)
    flat_flags = flags.reshape(-1)
    flat_res = resid.reshape(-1)
    flat_its = its.reshape(-1)
    lin_pred = np.ravel_multi_index(pred.T, shape)
    T_all = np.stack([ax[grid_idx[:, j]] for j, ax in enumerate(axes)], axis=1)

    def solve_chunk(nodes):
        if nodes.size == 0:
            return nodes, None
        start = np.empty((nodes.size, N))
        for i, node in enumerate(nodes):
            if level[node] == 0:
                start[i] = seed_R
            else:
                w = flatR[lin_pred[node]]
                start[i] = w if np.all(np.isfinite(w)) else seed_R
        return nodes, _newton(cmp, T_all[nodes], start, tol)

    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for L in range(len(bounds) - 1):
            nodes = order[bounds[L]:bounds[L + 1]]
            chunks = np.array_split(nodes, max(1, min(threads, nodes.size // 256 + 1)))
            results = pool.map(solve_chunk, chunks) if pool else map(solve_chunk, chunks)
            for nodes_c, out in results:
                if out is None:
                    continue
                Rc, fc, rc, ic = out
                flatR[nodes_c] = Rc
                flat_flags[nodes_c] = fc
                flat_res[nodes_c] = rc
                flat_its[nodes_c] = ic
    finally:
        if pool:
            pool.shutdown()
    return HydroSolution(axes, R, flags, resid, its)


# verification

@dataclass
class HydroVerification:
    max_residual: float
    mean_residual: float
    per_component: dict
    interior_nodes: int
    order: float | None = None
    refined_max_residual: float | None = None

    def as_dict(self) -> dict:
        return {"max_residual": self.max_residual, "mean_residual": self.mean_residual,
                "per_component": self.per_component, "interior_nodes": self.interior_nodes,
                "order": self.order, "refined_max_residual": self.refined_max_residual}


def _fd_residual(sys: DiagonalSystem, sol: HydroSolution):
    n, N = sys.n, sys.N
    shape = sol.flags.shape
    if any(s < 3 for s in shape):
        raise DiagonalError("too few interior nodes for central differences")
    inner = tuple(slice(1, -1) for _ in range(n))
    bad = sol.flags != FLAG_OK
    mask = np.ones(tuple(s - 2 for s in shape), dtype=bool)
    # exclude any node whose stencil touches a flagged node
    for j in range(n):
        for off in (-1, 0, 1):
            sl = tuple(slice(1 + off, s - 1 + off) if k == j else slice(1, -1)
                       for k, s in enumerate(shape))
            mask &= ~bad[sl]
    if not mask.any():
        raise DiagonalError("no interior node with an unflagged stencil")
    grads = []
    for j in range(n):
        hj = sol.h[j]
        lo = tuple(slice(0, -2) if k == j else slice(1, -1) for k in range(n))
        hi = tuple(slice(2, None) if k == j else slice(1, -1) for k in range(n))
        grads.append((sol.R[hi] - sol.R[lo]) / (2 * hj))
    Rin = sol.R[inner][mask]
    cmp = [[compile_rf(sys.kappa[a][j], list(sys.variables), sys.fns) for j in range(n)]
           for a in range(N)]
    per = {}
    worst, total, count = 0.0, 0.0, 0
    for a in range(N):
        for j in range(1, n):
            kap = np.broadcast_to(np.asarray(cmp[a][j](*Rin.T), dtype=float), (Rin.shape[0],))
            r = np.abs(grads[j][..., a][mask] - kap * grads[0][..., a][mask])
            per[f"{a + 1},{j + 1}"] = {"max": float(r.max()), "mean": float(r.mean())}
            worst = max(worst, float(r.max()))
            total += float(r.sum())
            count += r.size
    return worst, total / count, per, int(mask.sum())


def verify_hydro_solution(sys: DiagonalSystem, sol: HydroSolution,
                          refined: HydroSolution | None = None) -> HydroVerification:
    """FD residuals |d_j R^a - kappa_aj(R) d_1 R^a| over interior nodes (and the order vs ``refined``)."""
    mx, mean, per, cnt = _fd_residual(sys, sol)
    out = HydroVerification(mx, mean, per, cnt)
    if refined is not None:
        mx2, *_ = _fd_residual(sys, refined)
        out.refined_max_residual = mx2
        ratio = sol.h[0] / refined.h[0]
        out.order = float(np.log(mx / mx2) / np.log(ratio)) if mx2 > 0 and mx > 0 else None
    return out


def export_solution(sol: HydroSolution, verification: HydroVerification | None, directory: str,
                    stem: str = "hodograph") -> list[str]:
    os.makedirs(directory, exist_ok=True)
    csv_path = os.path.join(directory, f"{stem}.csv")
    sol.to_csv(csv_path)
    js = os.path.join(directory, f"{stem}.json")
    with open(js, "w") as fh:
        json.dump({"solution": sol.stats(),
                   "verification": verification.as_dict() if verification else None},
                  fh, indent=2, sort_keys=True)
    return [csv_path, js]
