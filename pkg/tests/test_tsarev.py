import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hydronets.catalog import gdkp, tau_binding
from hydronets.gibbons_tsarev import ParamCharFamily, bind_family, derive_reduction, reduction_system
from hydronets.symkernel import RationalFn, SymbolTable, parse, to_rf
from hydronets.tsarev import (
    FLAG_OK, AffineLift, DegenerateDiagonal, DiagonalError, DiagonalSystem, gamma_from_momenta,
    hodograph_solve, predecessor, sample_residuals, semi_hamiltonian_check, tsarev_residuals,
    uncoupled, verify_hydro_solution,
)

R = [RationalFn.gen(f"r{i}") for i in (1, 2, 3)]


def rf(text, N=3):
    t = SymbolTable()
    t.declare_variables(*[f"r{i + 1}" for i in range(N)])
    return to_rf(parse(text, t))


def dkp_reduction(tau="s", N=3):
    gt = derive_reduction(bind_family(ParamCharFamily(gdkp()), tau_binding(tau)), False)
    return reduction_system(gt, N)


def simple_wave():
    return uncoupled([["1", "r1^2 - r1", "r1"]]), AffineLift([-R[0]])


# gamma_from_momenta

def test_uncoupled_gamma_zero():
    sys = uncoupled([["1", "r1", "r1^2"], ["1", "2*r2", "r2^3"], ["1", "-r3", "r3"]])
    rep = gamma_from_momenta(sys)
    assert rep.consistent
    assert all(rep.gamma[a][b].is_zero() for a in range(3) for b in range(3) if a != b)


def test_dkp_reduction_gamma_consistent():
    rep = gamma_from_momenta(dkp_reduction("s", 2))
    assert rep.consistent and all(r.is_zero() for r in rep.residuals.values())


def test_formal_tau_reduction_gamma_consistent():
    gt = derive_reduction(ParamCharFamily(gdkp()), False)
    assert gamma_from_momenta(reduction_system(gt, 2)).consistent


def test_perturbed_momentum_residual():
    sys = uncoupled([["1", "r1 + r2", "r1^2"], ["1", "r2", "r2^2"]])
    rep = gamma_from_momenta(sys)
    assert not rep.consistent
    assert any(not r.is_zero() for r in rep.residuals.values())


def test_degenerate_pair():
    sys = uncoupled([["1", "1", "2"], ["1", "1", "2"]])
    with pytest.raises(DegenerateDiagonal):
        gamma_from_momenta(sys)


def test_gauge_normalization():
    sys = DiagonalSystem([[R[0] + 1, (R[0] + 1) * R[0], R[0] ** 2 * (R[0] + 1)]])
    assert sys.kappa[0][0] == RationalFn.const(1) and sys.kappa[0][1] == R[0]
    with pytest.raises(DiagonalError):
        DiagonalSystem([[RationalFn.const(0), R[0], R[0]]])


# semi_hamiltonian_check

def test_uncoupled_passes():
    sys = uncoupled([["1", "r1"], ["1", "r2^2"], ["1", "-r3"]])
    assert semi_hamiltonian_check(sys).passed


def test_two_components_vacuous():
    rep = semi_hamiltonian_check(uncoupled([["1", "r1 + r2"], ["1", "r2 - r1"]]))
    assert rep.passed and rep.vacuous


def test_semi_hamiltonian_sum_example():
    sys = uncoupled([["1", "2*r1 + r2 + r3"], ["1", "r1 + 2*r2 + r3"], ["1", "r1 + r2 + 2*r3"]])
    assert semi_hamiltonian_check(sys).passed


NOT_SH = [["1", "r1*r2*r3 + r1"], ["1", "r1*r2*r3 + r2^2"], ["1", "r1*r2*r3 - r3"]]


def test_non_semi_hamiltonian_example():
    rep = semi_hamiltonian_check(uncoupled(NOT_SH))
    assert not rep.passed and rep.residuals


def test_dkp_reduction_semi_hamiltonian():
    assert semi_hamiltonian_check(dkp_reduction("s", 3)).passed


def test_obstructed_reduction_not_semi_hamiltonian():
    assert not semi_hamiltonian_check(dkp_reduction("s^2", 3)).passed


def test_epsilon_perturbation_linear():
    sys = dkp_reduction("s", 3)
    g = gamma_from_momenta(sys).gamma
    sizes = []
    eps_list = [1e-3, 1e-2, 1e-1]
    for eps in eps_list:
        gp = [row[:] for row in g]
        gp[0][1] = g[0][1] + RationalFn.const(eps) * RationalFn.gen("r_c")
        rep = semi_hamiltonian_check(sys, gp)
        assert not rep.passed
        sizes.append(sample_residuals(list(tsarev_residuals(sys, gp).values()), sys.variables,
                                      {}, points=5, seed=3))
    slope = np.polyfit(np.log(eps_list), np.log(sizes), 1)[0]
    assert abs(slope - 1.0) < 0.05


coef = st.integers(min_value=-3, max_value=3)


@settings(max_examples=15)
@given(st.lists(st.tuples(st.integers(1, 3), coef, coef, coef), min_size=3, max_size=3))
def test_gauge_covariance_of_verdict(fs):
    for rows, expected in [([["1", "2*r1 + r2 + r3"], ["1", "r1 + 2*r2 + r3"],
                             ["1", "r1 + r2 + 2*r3"]], True), (NOT_SH, False)]:
        base = uncoupled(rows)
        scaled = []
        for a, (k0, k1, k2, k3) in enumerate(fs):
            f = RationalFn.const(k0 * 7) + RationalFn.const(k1) * R[0] + RationalFn.const(k2) * R[1] \
                + RationalFn.const(k3) * R[2] ** 2
            scaled.append([f * e for e in base.kappa[a]])
        assert semi_hamiltonian_check(DiagonalSystem(scaled)).passed == expected


# hodograph

def test_predecessor_is_grid_neighbour():
    assert predecessor((0, 0, 0)) is None
    assert predecessor((2, 3, 1)) == (2, 3, 0)
    assert predecessor((2, 3, 0)) == (2, 2, 0)
    assert predecessor((2, 0, 0)) == (1, 0, 0)


def test_constant_kappa_exact():
    sys = uncoupled([["1", "2", "-1"], ["1", "-1", "3"]])
    lift = AffineLift([R[0], R[1]])
    assert lift.check(sys) == {}
    sol = hodograph_solve(sys, lift, [(0, 1)] * 3, 6, [0.0, 0.0])
    T = np.stack(np.meshgrid(*sol.axes, indexing="ij"), -1)
    exact = -np.stack([T @ np.array([1, 2, -1.0]), T @ np.array([1, -1, 3.0])], -1)
    assert np.abs(sol.R - exact).max() < 1e-12
    assert (sol.flags == FLAG_OK).all()
    assert verify_hydro_solution(sys, sol).max_residual < 1e-12


def _bisection(T):
    t, x, y = T[..., 0], T[..., 1], T[..., 2]
    F = lambda r: t + (r * r - r) * x + r * y - r  # noqa: E731
    lo, hi = -np.ones_like(t), np.ones_like(t)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        pos = F(mid) > 0  # F is decreasing in R on this box
        lo, hi = np.where(pos, mid, lo), np.where(pos, hi, mid)
    return 0.5 * (lo + hi)


@pytest.mark.invariant
def test_simple_wave_matches_bisection():
    sys, lift = simple_wave()
    sol = hodograph_solve(sys, lift, [(0, 0.2)] * 3, 24, [0.0])
    T = np.stack(np.meshgrid(*sol.axes, indexing="ij"), -1)
    assert (sol.flags == FLAG_OK).all()
    assert np.abs(sol.R[..., 0] - _bisection(T)).max() < 1e-10
    assert sol.residual.max() < 1e-10


def test_simple_wave_x_y_zero_plane():
    sys, lift = simple_wave()
    sol = hodograph_solve(sys, lift, [(0, 0.2)] * 3, 8, [0.0])
    assert np.abs(sol.R[:, 0, 0, 0] - sol.axes[0]).max() < 1e-13


@pytest.mark.invariant
def test_wave_breaking_flagged():
    sys, lift = simple_wave()
    sol = hodograph_solve(sys, lift, [(0, 1.0), (0, 4.0), (0, 1.0)], 8, [0.0])
    assert (sol.flags != FLAG_OK).any()
    assert sol.residual[sol.flags == FLAG_OK].max() < 1e-10


@pytest.mark.invariant
def test_simple_wave_second_order():
    sys, lift = simple_wave()
    coarse = hodograph_solve(sys, lift, [(0, 0.2)] * 3, 32, [0.0])
    fine = hodograph_solve(sys, lift, [(0, 0.2)] * 3, 64, [0.0])
    v = verify_hydro_solution(sys, coarse, fine)
    assert v.order >= 1.9


def test_flagged_node_stencil_excluded():
    sys, lift = simple_wave()
    sol = hodograph_solve(sys, lift, [(0, 0.2)] * 3, 8, [0.0])
    clean = verify_hydro_solution(sys, sol)
    sol.R[4, 4, 4] = 1e3
    sol.flags[4, 4, 4] = 1
    masked = verify_hydro_solution(sys, sol)
    assert masked.max_residual <= clean.max_residual
    assert masked.interior_nodes == clean.interior_nodes - 7


def test_threads_do_not_change_result():
    sys, lift = simple_wave()
    a = hodograph_solve(sys, lift, [(0, 0.2)] * 3, 10, [0.0], threads=1)
    b = hodograph_solve(sys, lift, [(0, 0.2)] * 3, 10, [0.0], threads=4)
    assert np.array_equal(a.R, b.R) and np.array_equal(a.flags, b.flags)


def test_csv_export(tmp_path):
    sys, lift = simple_wave()
    sol = hodograph_solve(sys, lift, [(0, 0.2)] * 3, 2, [0.0])
    p = tmp_path / "s.csv"
    sol.to_csv(str(p))
    lines = p.read_text().splitlines()
    assert lines[0] == "t1,t2,t3,R1,flag" and len(lines) == 28
