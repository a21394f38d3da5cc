"""Numeric laboratory for the dKP family: reduction fields, simple waves, two-component solutions.

gt_integrate solves the Goursat problem for the reduction equations
    d_b lambda_a = G(lambda_a, lambda_b, U) d_b U,
    d_b d_a U   = H(lambda_a, lambda_b, U) d_a U d_b U        (a != b)
with lambda_a and U prescribed on the coordinate axes of r-space.  The field is
built by Picard iteration, each sweep integrating along a fixed ordering of the
coordinate directions; integrating along a different ordering measures path
independence, which is the numeric form of the integrability obstruction.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .catalog import gdkp, tau_binding
from .config import DEFAULT, Tolerances
from .gibbons_tsarev import GtSystem, ParamCharFamily, bind_family, derive_reduction
from .symkernel import RationalFn, SymbolTable, compile_rf, diff, parse, substitute_rf, to_rf
from .tsarev import FLAG_OK, AffineLift, DiagonalSystem, hodograph_solve


class LabError(ValueError):
    pass


class LambdaCollision(LabError):
    def __init__(self, node, r, a, b, gap):
        super().__init__(f"lambda_{a + 1} and lambda_{b + 1} collide (|gap| = {gap:.3g}) "
                         f"at node {tuple(int(i) for i in node)}, r = {np.round(r, 12).tolist()}")
        self.node, self.r, self.pair, self.gap = tuple(int(i) for i in node), r, (a, b), gap


class FieldRangeError(LabError):
    pass


def _unary(text: str, var: str):
    """Value and derivative callables of an expression in one variable."""
    tab = SymbolTable()
    tab.declare_variables(var)
    e = parse(text, tab)
    f = compile_rf(to_rf(e), [var])
    df = compile_rf(to_rf(diff(e, var)), [var])
    vec = lambda g: (lambda x: np.broadcast_to(np.asarray(g(np.asarray(x, float)), float),  # noqa: E731
                                               np.shape(x)).copy())
    return vec(f), vec(df)


def reduction_gt(tau: str = "s") -> GtSystem:
    """Reduction equations of the g-dKP family with tau bound to s -> tau."""
    return derive_reduction(bind_family(ParamCharFamily(gdkp()), tau_binding(tau)), False)


# Goursat integration of the reduction equations

@dataclass
class ReductionField:
    axes: list[np.ndarray]
    U: np.ndarray
    lam: np.ndarray          # (N, *grid)
    Ua: np.ndarray           # (N, *grid): d_a U
    potentials: dict         # name -> grid, with d_a P = w_P(lambda_a, U) d_a U
    path_residual: np.ndarray
    iterations: int
    picard_change: float
    tau: str

    @property
    def N(self) -> int:
        return self.lam.shape[0]

    @property
    def h(self) -> float:
        return float(self.axes[0][1] - self.axes[0][0])

    @property
    def max_path_residual(self) -> float:
        return float(self.path_residual.max())

    def summary(self) -> dict:
        return {"N": self.N, "tau": self.tau, "h": self.h, "nodes": int(self.U.size),
                "picard_iterations": self.iterations, "picard_change": self.picard_change,
                "max_path_residual": self.max_path_residual}

    def tangents(self, names=("U", "V")) -> np.ndarray:
        """d_a of the map r -> (names...), shape (N, *grid, len(names)), from the stored fields."""
        w = {"U": lambda a: np.ones_like(self.U)}
        for k in self.potentials:
            w[k] = lambda a, k=k: self._weights[k](self.lam[a], self.U)
        return np.stack([np.stack([w[nm](a) * self.Ua[a] for nm in names], -1)
                         for a in range(self.N)])

    def values(self, names=("U", "V")) -> np.ndarray:
        return np.stack([self.U if nm == "U" else self.potentials[nm] for nm in names], -1)


def _cumint(y: np.ndarray, x: np.ndarray, axis: int) -> np.ndarray:
    """Cumulative integral from x[0] with a not-a-knot cubic spline (4th order)."""
    return CubicSpline(x, y, axis=axis).antiderivative()(x)


def _integrate_ordered(base: np.ndarray, rhs: dict, order: Sequence[int], axes, shape):
    """Integrate d_d F = rhs[d] successively along ``order`` starting from ``base``.

    ``base`` has full extent on the dimensions already fixed and extent 1 on
    the rest; the integration along d uses rhs restricted to index 0 on the
    dimensions that come later in the ordering.
    """
    F = base
    later = list(order)
    for d in order:
        later.remove(d)
        sl = tuple(slice(0, 1) if k in later else slice(None) for k in range(len(shape)))
        src = rhs[d][sl]
        # F has extent 1 along d; restrict it to match the current slice, then add the integral
        F = F + _cumint(src, axes[d], d)
    return np.broadcast_to(F, shape).copy()


def gt_integrate(N: int, U_axis: Sequence[str], lam_axis: Sequence[str], box: float | Sequence[float],
                 resolution: int, tau: str = "s", gt: GtSystem | None = None,
                 tol: Tolerances = DEFAULT, orderings: tuple | None = None) -> ReductionField:
    """Build lambda_a, U (and the potentials V, W) on [0, L]^N from axis data given in s."""
    if N not in (2, 3):
        raise LabError("gt_integrate supports N = 2 or 3")
    if len(U_axis) != N or len(lam_axis) != N:
        raise LabError("one axis function per component is required")
    gt = gt or reduction_gt(tau)
    L = [float(box)] * N if np.isscalar(box) else [float(b) for b in box]
    axes = [np.linspace(0.0, Lk, resolution + 1) for Lk in L]
    shape = (resolution + 1,) * N
    var3 = ["lambda_1", "lambda_2", "U"]
    fg = compile_rf(gt._g, var3)
    fh = compile_rf(gt._h, var3)
    vec = lambda f, *a: np.broadcast_to(np.asarray(f(*a), float), a[0].shape)  # noqa: E731
    weights = {}
    for name, w in (("V", gt.w), ("W", gt.dispersion)):
        c = compile_rf(substitute_rf(w, {"lambda": RationalFn.gen("lambda_1")}), ["lambda_1", "U"])
        weights[name] = lambda l, u, c=c: vec(c, l, u)

    Uf = [_unary(t, "s") for t in U_axis]
    lf = [_unary(t, "s") for t in lam_axis]
    U0 = float(Uf[0][0](0.0))
    if any(abs(float(f(0.0)) - U0) > 1e-14 for f, _ in Uf):
        raise LabError("axis data for U disagree at the origin")

    def axis_shape(a, vals):
        s = [1] * N
        s[a] = resolution + 1
        return vals.reshape(s)

    lam_base = [axis_shape(a, lf[a][0](axes[a])) for a in range(N)]
    Ua_base = [axis_shape(a, Uf[a][1](axes[a])) for a in range(N)]
    others = [[b for b in range(N) if b != a] for a in range(N)]
    orderings = orderings or (lambda o: list(o), lambda o: list(reversed(o)))

    def check_collision(lam):
        for a, b in itertools.combinations(range(N), 2):
            gap = np.abs(lam[a] - lam[b])
            if gap.min() < tol.collision:
                node = np.unravel_index(np.argmin(gap), shape)
                raise LambdaCollision(node, np.array([axes[k][node[k]] for k in range(N)]),
                                      a, b, float(gap.min()))

    def sweep(lam, Ua, U, ordf):
        g = {(a, b): vec(fg, lam[a], lam[b], U) * Ua[b] for a in range(N) for b in others[a]}
        hh = {(a, b): vec(fh, lam[a], lam[b], U) * Ua[a] * Ua[b] for a in range(N) for b in others[a]}
        new_lam = np.stack([_integrate_ordered(lam_base[a], {b: g[a, b] for b in others[a]},
                                               ordf(others[a]), axes, shape) for a in range(N)])
        new_Ua = np.stack([_integrate_ordered(Ua_base[a], {b: hh[a, b] for b in others[a]},
                                              ordf(others[a]), axes, shape) for a in range(N)])
        base = np.full((1,) * N, U0)
        new_U = _integrate_ordered(base, {d: Ua[d] for d in range(N)}, ordf(list(range(N))),
                                   axes, shape)
        return new_lam, new_Ua, new_U

    def potential(lam, Ua, U, w, ordf):
        base = np.zeros((1,) * N)
        return _integrate_ordered(base, {d: w(lam[d], U) * Ua[d] for d in range(N)},
                                  ordf(list(range(N))), axes, shape)

    # initial guess: axis data extended constantly
    lam = np.stack([np.broadcast_to(lam_base[a], shape) for a in range(N)])
    Ua = np.stack([np.broadcast_to(Ua_base[a], shape) for a in range(N)])
    U = U0 + sum(np.broadcast_to(axis_shape(a, Uf[a][0](axes[a]) - U0), shape) for a in range(N))
    check_collision(lam)
    change, it, history = np.inf, 0, []
    for it in range(1, tol.picard_maxit + 1):
        nl, nU_a, nU = sweep(lam, Ua, U, orderings[0])
        check_collision(nl)
        scale = 1.0 + max(np.abs(nl).max(), np.abs(nU_a).max(), np.abs(nU).max())
        change = max(np.abs(nl - lam).max(), np.abs(nU_a - Ua).max(), np.abs(nU - U).max()) / scale
        lam, Ua, U = nl, nU_a, nU
        history.append(change)
        if change <= tol.picard_tol:
            break
        # rounding floor: no progress over the last few sweeps
        if len(history) > 4 and change >= 0.5 * min(history[:-3]) and change < 1e-12:
            break
    pots = {k: potential(lam, Ua, U, w, orderings[0]) for k, w in weights.items()}
    # path independence: rebuild with the other ordering from the converged fields
    al, aU_a, aU = sweep(lam, Ua, U, orderings[1])
    bl, bU_a, bU = sweep(lam, Ua, U, orderings[0])
    res = np.maximum.reduce([np.abs(al - bl).max(axis=0), np.abs(aU_a - bU_a).max(axis=0),
                             np.abs(aU - bU)])
    for k, w in weights.items():
        res = np.maximum(res, np.abs(potential(lam, Ua, U, w, orderings[1]) - pots[k]))
    fld = ReductionField(axes, U, lam, Ua, pots, res, it, float(change), tau)
    fld._weights = weights
    return fld


def path_independence_study(N: int, U_axis, lam_axis, box, resolutions: Sequence[int],
                            tau: str = "s", tol: Tolerances = DEFAULT) -> dict:
    gt = reduction_gt(tau)
    res = [gt_integrate(N, U_axis, lam_axis, box, r, tau, gt, tol).max_path_residual
           for r in resolutions]
    ratios = [res[i] / res[i + 1] for i in range(len(res) - 1)]
    orders = [float(np.log2(q)) if q > 0 else None for q in ratios]
    return {"N": N, "tau": tau, "resolutions": list(resolutions), "residuals": res,
            "ratios": ratios, "orders": orders}


# PDE solutions

@dataclass
class PdeSolutionGrid:
    axes: list[np.ndarray]   # t, x, y
    u: np.ndarray
    R: np.ndarray | None = None
    flags: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def h(self) -> list[float]:
        return [float(ax[1] - ax[0]) for ax in self.axes]

    def to_csv(self, path: str) -> None:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        N = 0 if self.R is None else self.R.shape[-1]
        flags = np.zeros(self.u.shape, int) if self.flags is None else self.flags
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "u"] + [f"R{a + 1}" for a in range(N)] + ["flag"])
            cols = [m.ravel() for m in mesh] + [self.u.ravel()]
            cols += [self.R[..., a].ravel() for a in range(N)]
            for i, fl in enumerate(flags.ravel()):
                w.writerow([format(c[i], ".17g") for c in cols] + [int(fl)])


def simple_wave_solve(lam: str = "R", G: str = "R", box=((0, 0.2),) * 3, resolution: int = 32,
                      tol: Tolerances = DEFAULT, threads: int = 1) -> PdeSolutionGrid:
    """u = R with G(R) = t + (lambda(R)^2 - R) x + lambda(R) y (dKP, tau = id)."""
    tab = SymbolTable()
    tab.declare_variables("R")
    ren = {"R": RationalFn.gen("r1")}
    l = substitute_rf(to_rf(parse(lam, tab)), ren)
    g = substitute_rf(to_rf(parse(G, tab)), ren)
    r1 = RationalFn.gen("r1")
    sys = DiagonalSystem([[RationalFn.const(1), l * l - r1, l]], name="simple_wave")
    seed = _solve_scalar(lambda R: float(compile_rf(g, ["r1"])(R)) - box[0][0], 0.0)
    sol = hodograph_solve(sys, AffineLift([-g]), box, resolution, [seed], tol, threads)
    return PdeSolutionGrid(sol.axes, sol.R[..., 0].copy(), sol.R.copy(), sol.flags.copy(),
                           {"solver": "hodograph", **sol.stats()})


def _solve_scalar(f: Callable[[float], float], x0: float) -> float:
    from scipy.optimize import brentq, newton

    try:
        return float(newton(f, x0, tol=1e-14, maxiter=100))
    except RuntimeError:
        return float(brentq(f, -10, 10))


class _FieldInterp:
    """Spline interpolation of U and lambda_a over the r-box of a 2-component field."""

    def __init__(self, fld: ReductionField):
        if fld.N != 2:
            raise LabError("two_component_solve needs a 2-component reduction field")
        x, y = fld.axes
        self.lo = np.array([x[0], y[0]])
        self.hi = np.array([x[-1], y[-1]])
        self.U = RectBivariateSpline(x, y, fld.U, kx=3, ky=3, s=0)
        self.lam = [RectBivariateSpline(x, y, fld.lam[a], kx=3, ky=3, s=0) for a in range(2)]

    def __call__(self, R):
        r1, r2 = R[..., 0], R[..., 1]
        if (r1 < self.lo[0] - 1e-12).any() or (r1 > self.hi[0] + 1e-12).any() or \
                (r2 < self.lo[1] - 1e-12).any() or (r2 > self.hi[1] + 1e-12).any():
            raise FieldRangeError("the solution left the r-box covered by the reduction field")
        U = self.U.ev(r1, r2)
        lam = np.stack([s.ev(r1, r2) for s in self.lam], -1)
        return U, lam


def _dt_upwind(R: np.ndarray, h: float, speed: np.ndarray) -> np.ndarray:
    """Third-order upwind-biased d/dt along axis 0 for R_s = speed * R_t.

    Nodes whose biased stencil would leave the t-line are frozen (zero
    derivative); they lie in the margin outside the output box's domain of
    dependence.
    """
    back = np.zeros_like(R)
    fwd = np.zeros_like(R)
    back[2:-1] = (2 * R[3:] + 3 * R[2:-1] - 6 * R[1:-2] + R[:-3]) / (6 * h)
    fwd[1:-2] = (-R[3:] + 6 * R[2:-1] - 3 * R[1:-2] - 2 * R[:-3]) / (6 * h)
    # R_s = speed R_t is advection with velocity -speed in t: upwind side is t+ when speed > 0
    return np.where(speed > 0, fwd, back)


def _march(R0: np.ndarray, ht: float, length: float, nsteps: int, speed_fn, cfl: float):
    """RK4 march of R_s = speed(R) R_t; returns states at the nsteps+1 output stations."""
    out = [R0]
    R = R0
    hs = length / nsteps if nsteps else 0.0
    substeps_used = 1
    for _ in range(nsteps):
        smax = float(np.abs(speed_fn(R)).max())
        k = max(1, int(np.ceil(hs * smax / (cfl * ht))))
        substeps_used = max(substeps_used, k)
        dt = hs / k
        for _ in range(k):
            f = lambda S: (lambda c: c * _dt_upwind(S, ht, c))(speed_fn(S))  # noqa: E731
            k1 = f(R)
            k2 = f(R + 0.5 * dt * k1)
            k3 = f(R + 0.5 * dt * k2)
            k4 = f(R + dt * k3)
            R = R + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(R)
    return out, substeps_used


def two_component_solve(fld: ReductionField, initial: Callable[[np.ndarray], np.ndarray],
                        box=((0, 0.2), (0, 0.2), (0, 0.2)), resolution: int = 32,
                        tol: Tolerances = DEFAULT, check_order: bool = True) -> PdeSolutionGrid:
    """March R^a_x = mu_a(R) R^a_t and R^a_y = lambda_a(R) R^a_t from R(t, 0, 0); u = U(R).

    The t-line is extended by a margin wider than the domain of influence of its
    ends, so the frozen end nodes never influence the output box.
    """
    interp = _FieldInterp(fld)
    (t0, t1), (x0, x1), (y0, y1) = box
    if x0 != 0 or y0 != 0:
        raise LabError("initial data live on x = y = 0; the box must start there")
    ht = (t1 - t0) / resolution
    probe_t = np.linspace(t0, t1, 4 * resolution + 1)
    U_probe, lam_probe = interp(_initial_states(initial, probe_t))
    smax = max(float((lam_probe ** 2 - U_probe[:, None]).__abs__().max()),
               float(np.abs(lam_probe).max()))
    margin = int(np.ceil(1.5 * smax * ((x1 - x0) + (y1 - y0)) / ht)) + 8
    tt = t0 + ht * np.arange(-margin, resolution + margin + 1)
    R0 = _initial_states(initial, tt)

    def mu_speed(R):
        U, lam = interp(R)
        return lam ** 2 - U[..., None]

    def lam_speed(R):
        return interp(R)[1]

    def run(first: str):
        if first == "x":
            line, s1 = _march(R0, ht, x1 - x0, resolution, mu_speed, tol.cfl)
            plane = np.stack(line, axis=1)  # (Nt, Nx, 2)
            vol, s2 = _march(plane, ht, y1 - y0, resolution, lam_speed, tol.cfl)
            R = np.stack(vol, axis=2)       # (Nt, Nx, Ny, 2)
        else:
            line, s1 = _march(R0, ht, y1 - y0, resolution, lam_speed, tol.cfl)
            plane = np.stack(line, axis=1)  # (Nt, Ny, 2)
            vol, s2 = _march(plane, ht, x1 - x0, resolution, mu_speed, tol.cfl)
            R = np.stack(vol, axis=1)       # (Nt, Nx, Ny, 2)
        return R[margin:margin + resolution + 1], max(s1, s2)

    R, sub = run("x")
    info = {"solver": "method of lines (upwind-3 in t, RK4 in x then y)",
            "max_substeps": sub, "cfl": tol.cfl, "t_margin_nodes": margin,
            "cfl_reduced": sub > 1}
    if check_order:
        R2, _ = run("y")
        info["marching_order_discrepancy"] = float(np.abs(R - R2).max())
    U, _ = interp(R)
    axes = [np.linspace(t0, t1, resolution + 1), np.linspace(x0, x1, resolution + 1),
            np.linspace(y0, y1, resolution + 1)]
    return PdeSolutionGrid(axes, U, R, np.zeros(U.shape, np.int8), info)


def _initial_states(initial, t: np.ndarray) -> np.ndarray:
    v = np.asarray(initial(t), dtype=float)
    if v.shape == (2, t.size):
        v = v.T
    if v.shape != (t.size, 2):
        raise LabError("initial data must return two Riemann invariants per t")
    return v


# residual of the second-order equation

@dataclass
class DkpResidual:
    max: float
    mean: float
    interior_nodes: int
    order: float | None = None
    refined_max: float | None = None

    def as_dict(self) -> dict:
        return {"max": self.max, "mean": self.mean, "interior_nodes": self.interior_nodes,
                "order": self.order, "refined_max": self.refined_max}


def _residual_field(sol: PdeSolutionGrid) -> np.ndarray:
    u = sol.u
    if any(s < 3 for s in u.shape):
        raise LabError("insufficient interior for central differences")
    ht, hx, hy = sol.h
    c = (slice(1, -1),) * 3

    def sh(dt=0, dx=0, dy=0):
        return u[1 + dt:u.shape[0] - 1 + dt, 1 + dx:u.shape[1] - 1 + dx, 1 + dy:u.shape[2] - 1 + dy]

    u_t = (sh(dt=1) - sh(dt=-1)) / (2 * ht)
    u_tt = (sh(dt=1) - 2 * u[c] + sh(dt=-1)) / ht ** 2
    u_yy = (sh(dy=1) - 2 * u[c] + sh(dy=-1)) / hy ** 2
    u_xt = (sh(dt=1, dx=1) - sh(dt=1, dx=-1) - sh(dt=-1, dx=1) + sh(dt=-1, dx=-1)) / (4 * ht * hx)
    r = u_xt + u_t ** 2 + u[c] * u_tt - u_yy
    if sol.flags is not None:
        bad = sol.flags != FLAG_OK
        mask = np.zeros(r.shape, bool)
        for dt, dx, dy in itertools.product((-1, 0, 1), repeat=3):
            mask |= bad[1 + dt:bad.shape[0] - 1 + dt, 1 + dx:bad.shape[1] - 1 + dx,
                        1 + dy:bad.shape[2] - 1 + dy]
        r = np.where(mask, np.nan, r)
    return r


def dkp_residual(sol: PdeSolutionGrid, refined: PdeSolutionGrid | None = None) -> DkpResidual:
    """Central-difference value of (u_x + u u_t)_t - u_yy over interior nodes."""
    r = np.abs(_residual_field(sol))
    out = DkpResidual(float(np.nanmax(r)), float(np.nanmean(r)), int(np.isfinite(r).sum()))
    if refined is not None:
        r2 = float(np.nanmax(np.abs(_residual_field(refined))))
        out.refined_max = r2
        ratio = sol.h[0] / refined.h[0]
        out.order = float(np.log(out.max / r2) / np.log(ratio)) if r2 > 0 and out.max > 0 else None
    return out


# shipped fixtures

AXIS_U2 = ("s", "s")
AXIS_LAM2 = ("1 + s", "-1 + s")
AXIS_U3 = ("s", "s", "s")
AXIS_LAM3 = ("1 + s", "-1 + s", "s/2")


def smooth_initial(t: np.ndarray) -> np.ndarray:
    s = 0.5 + 0.3 * np.sin(3 * t)
    return np.stack([0.1 * s, 0.1 * (1 - s)], -1)
