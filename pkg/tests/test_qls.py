from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hydronets.catalog import diagonal_linear, dkp_hessian, dkp_type_g, dkp_type_i, gdkp
from hydronets.qls import (
    DegenerateSystem, NotDetermined, QlsError, build_raw, build_type_g, build_type_h,
    build_type_i, char_indicator, char_polynomial, cochar_sample, compliancy_probe,
    hessian_coords, momentum_for_direction, proj_dist, quadric_matrix, random_point,
    rank_one_fiber,
)
from hydronets.symkernel import Poly, RationalFn, SymbolTable, parse, substitute_rf, to_rf


def rf(text, variables, functions=()):
    t = SymbolTable()
    t.declare_variables(*variables)
    if functions:
        t.declare_functions(*functions)
    return to_rf(parse(text, t))


def sym_from_vec(z):
    """Symmetric 3x3 matrix from (p11, p12, p13, p22, p23, p33)."""
    S = np.zeros((3, 3))
    for v, (i, j) in zip(z, [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]):
        S[i, j] = S[j, i] = v
    return S


# char_polynomial

@pytest.mark.invariant
def test_gdkp_char_polynomial_up_to_unit():
    cp = char_polynomial(gdkp())
    target = rf("xi1*xi2 + tau(u)*xi1^2 - xi3^2", ["u", "xi1", "xi2", "xi3"], ["tau"])
    mono = (("xi1", 1), ("xi2", 1))
    unit = cp.poly.num.terms[mono] / target.num.terms[mono]
    assert unit != 0
    assert (cp.poly - RationalFn.const(unit) * target).is_zero()
    assert cp.degree == 2


def test_decoupled_char_polynomial_is_product_of_linear_forms():
    cp = char_polynomial(diagonal_linear(((1, 2, -1), (2, -1, 3))))
    l1 = rf("xi1 + 2*xi2 - xi3", ["xi1", "xi2", "xi3"])
    l2 = rf("2*xi1 - xi2 + 3*xi3", ["xi1", "xi2", "xi3"])
    prod = l1 * l2
    unit = cp.poly.num.leading()[1] / prod.num.leading()[1]
    assert (cp.poly - RationalFn.const(unit) * prod).is_zero()


def test_char_polynomial_rejects_non_square():
    with pytest.raises(NotDetermined):
        char_polynomial(dkp_type_i())


def test_char_polynomial_identically_zero():
    spec = build_raw("zero", ["t", "x", "y"], ["u", "v"],
                     [[[1, 0], [0, 0]], [[0, 0], [0, 0]], [[0, 0], [0, 0]]])
    with pytest.raises(DegenerateSystem):
        char_polynomial(spec)


@given(st.fractions(min_value=-5, max_value=5).filter(lambda c: c != 0))
def test_char_polynomial_homogeneous(c):
    cp = char_polynomial(gdkp())
    scaled = substitute_rf(cp.poly, {x: RationalFn.const(c) * RationalFn.gen(x) for x in cp.momenta})
    assert (scaled - RationalFn.const(Fraction(c) ** cp.degree) * cp.poly).is_zero()


def test_dkp_hessian_conic_matches_quadric():
    spec = dkp_hessian()
    rng = np.random.default_rng(3)
    for _ in range(5):
        p = random_point(spec, rng)
        Q = quadric_matrix(spec, p)
        for _ in range(20):
            # a point on the conic Q(xi) = 0 along a random real line, and a point off it
            a, b = rng.standard_normal(3), rng.standard_normal(3)
            qa, qab, qb = a @ Q @ a, a @ Q @ b, b @ Q @ b
            disc = qab ** 2 - qa * qb
            if disc <= 0.1:
                continue
            s = (-qab + np.sqrt(disc)) / qb
            xi = a + s * b
            xi /= np.linalg.norm(xi)
            assert abs(xi @ Q @ xi) < 1e-9 * np.abs(Q).max()
            assert char_indicator(spec, p, xi) < 1e-9
            off = a / np.linalg.norm(a)
            if abs(off @ Q @ off) > 1e-2 * np.abs(Q).max():
                assert char_indicator(spec, p, off) > 1e-6


# rank_one_fiber

def test_gdkp_fiber_example():
    spec = gdkp("s")
    lam0, lam1, u = 1.0, 2.0, 0.0
    xi = np.array([lam0 ** 2, lam1 ** 2 - u * lam0 ** 2, lam0 * lam1])
    fib = rank_one_fiber(spec, [u, 0.3], xi)
    assert len(fib) == 1
    assert proj_dist(fib[0].Z, np.array([1.0, 2.0])) < 1e-12


def test_gdkp_fiber_noncharacteristic_empty():
    spec = gdkp("s")
    # tau(1) xi1^2 = 1 off the conic
    assert rank_one_fiber(spec, [1.0, 0.0], np.array([1.0, 0.0, 0.0])) == []


def test_gdkp_xi2_axis_is_characteristic():
    # xi = (0, 1, 0) satisfies xi1 xi2 + tau xi1^2 - xi3^2 = 0 for every tau
    fib = rank_one_fiber(gdkp("s"), [1.0, 0.0], np.array([0.0, 1.0, 0.0]))
    assert len(fib) == 1 and proj_dist(fib[0].Z, np.array([0.0, 1.0])) < 1e-12


def test_decoupled_fiber_is_coordinate_direction():
    spec = diagonal_linear(((1, 2, -1), (2, -1, 3)))
    xi = np.array([1.0, 0.0, 1.0])  # kernel of the first factor: xi1 + 2 xi2 - xi3 = 0
    fib = rank_one_fiber(spec, [0.0, 0.0], xi)
    assert len(fib) == 1 and proj_dist(fib[0].Z, np.array([1.0, 0.0])) < 1e-12


# cochar_sample

@pytest.mark.invariant
@pytest.mark.parametrize("seed", [0, 1, 7])
def test_gdkp_cochar_pairing(seed):
    spec = gdkp("s")
    p = [0.0, 0.0]
    samples = cochar_sample(spec, p, 8, seed=seed)
    assert len(samples) == 8
    for s in samples:
        lam0, lam1 = s.Z
        expected = np.array([lam0 ** 2, lam1 ** 2, lam0 * lam1])
        assert proj_dist(s.xi, expected) < 1e-9
        assert s.residual < 1e-9
        assert abs(np.linalg.norm(s.xi) - 1) < 1e-12 and abs(np.linalg.norm(s.Z) - 1) < 1e-12
        again = rank_one_fiber(spec, p, s.xi)
        assert len(again) == 1 and proj_dist(again[0].Z, s.Z) < 1e-8


def test_double_hyperplane_samples():
    spec = build_raw("double", ["t", "x", "y"], ["u", "v"],
                     [[[1, 0], [0, 1]], [[0, 0], [0, 0]], [[0, 0], [0, 0]]])
    cp = char_polynomial(spec)
    assert cp.poly == RationalFn(Poly.gen("xi1", 2))
    for s in cochar_sample(spec, [0.0, 0.0], 6):
        assert abs(s.xi[0]) < 1e-9


def test_dkp_hessian_cochar_on_veronese_cone():
    spec = dkp_hessian()
    p = random_point(spec, np.random.default_rng(11))
    samples = cochar_sample(spec, p, 12)
    assert len(samples) == 12
    for s in samples:
        sv = np.linalg.svd(sym_from_vec(s.Z), compute_uv=False)
        assert sv[1] / sv[0] < 1e-8
        assert s.residual < 1e-9


@pytest.mark.invariant
def test_rank_one_residual_invariant_on_all_catalog_specs():
    rng = np.random.default_rng(5)
    for spec in [gdkp("s"), dkp_hessian(), dkp_type_i(), dkp_type_g(), diagonal_linear()]:
        p = random_point(spec, rng)
        for s in cochar_sample(spec, p, 6):
            M = np.tensordot(s.xi, spec.A_num(p), axes=1)
            assert np.linalg.norm(M @ s.Z) <= 1e-9 * np.linalg.norm(M, 2)


def test_momentum_for_direction_gdkp():
    spec = gdkp("s")
    xi, res, nulldim = momentum_for_direction(spec, [0.5, 0.0], np.array([1.0, 3.0]))
    assert nulldim == 1 and res < 1e-12
    assert proj_dist(xi, np.array([1.0, 9.0 - 0.5, 3.0])) < 1e-12


# compliancy

def test_gdkp_probe3_fails():
    rep = compliancy_probe(gdkp("s"), [0.3, 0.0])
    assert rep.probe(3).status == "fail"
    assert rep.status == "fail"


@pytest.mark.parametrize("seed", range(5))
def test_dkp_hessian_probes_1_2_pass(seed):
    spec = dkp_hessian()
    p = random_point(spec, np.random.default_rng(100 + seed))
    rep = compliancy_probe(spec, p)
    assert rep.probe(1).status == "pass"
    assert rep.probe(2).status == "pass"
    assert rep.probe(3).status == "pass"


def test_diagonal_probe1_fibres():
    # every characteristic covector has a single direction, but each direction
    # is shared by a whole plane of covectors, so the correspondence is not injective
    rep = compliancy_probe(diagonal_linear(), [0.0, 0.0])
    res = rep.probe(1).residuals
    assert res["max_Z_fibre_dim"] == 1
    assert res["max_xi_fibre_dim"] == 2
    assert rep.probe(1).status == "fail"


def test_type_i_and_g_compliancy():
    rng = np.random.default_rng(2)
    for spec in [dkp_type_i(), dkp_type_g()]:
        rep = compliancy_probe(spec, random_point(spec, rng))
        assert [rep.probe(i).status for i in (1, 2, 3)] == ["pass"] * 3


# builders

def test_type_g_dkp_shape():
    spec = dkp_type_g()
    assert (spec.n, spec.m, spec.k) == (3, 6, 12) and spec.well_posed and not spec.determined
    assert spec.intrinsic_dim == 4


def test_type_g_requires_constraints():
    with pytest.raises(QlsError):
        build_type_g(["t", "x", "y"], ["w"], [])


def test_type_g_linear_constraint_constant_coefficients():
    coords = ["w_t", "w_x", "w_y"]
    spec = build_type_g(["t", "x", "y"], ["w"], [rf("w_x - 2*w_t + w_y", coords)])
    assert all(e.is_const() for Aj in spec.A for row in Aj for e in row)


def test_type_g_dependent_constraints_rejected():
    coords = ["w_t", "w_x", "w_y"]
    F = rf("w_x - w_t^2", coords)
    with pytest.raises(DegenerateSystem):
        build_type_g(["t", "x", "y"], ["w"], [F, RationalFn.const(2) * F], base_point=[1, 1, 0])


def test_type_h_dkp_shape():
    spec = dkp_hessian()
    assert (spec.n, spec.m, spec.k) == (3, 6, 11) and spec.intrinsic_dim == 5


def test_type_h_linear_and_coordinate_hyperplane():
    coords = hessian_coords(3)
    lin = build_type_h(["t", "x", "y"], rf("p12 - p33", coords))
    assert all(e.is_const() for Aj in lin.A for row in Aj for e in row)
    spec = build_type_h(["t", "x", "y"], rf("p11", coords), base_point=[0, 1, 2, 3, 4, 5])
    assert spec.provenance == "H"


def test_type_h_degenerate_df():
    coords = hessian_coords(3)
    with pytest.raises(DegenerateSystem):
        build_type_h(["t", "x", "y"], rf("p11^2", coords), base_point=[0, 1, 2, 3, 4, 5])


def test_type_i_pdkp_shape():
    spec = dkp_type_i()
    assert (spec.n, spec.m, spec.k) == (3, 3, 4)


def test_type_i_identity_is_linear():
    spec = build_type_i(["t", "x", "y"], ["f", "g", "h"], [[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    assert all(e.is_const() for Aj in spec.A for row in Aj for e in row)


def test_type_i_rank_one_flagged_double_hyperplane():
    v = np.array([1.0, 2.0, -1.0])
    Q = [[int(v[i] * v[j]) for j in range(3)] for i in range(3)]
    spec = build_type_i(["t", "x", "y"], ["f", "g", "h"], Q, base_point=[0, 0, 0])
    assert spec.degenerate
    # characteristic covectors are those with (v . xi)^2 = 0: a doubled plane
    xi_on = np.array([1.0, 0.0, 1.0])
    xi_off = np.array([1.0, 1.0, 0.0])
    assert char_indicator(spec, [0, 0, 0], xi_on) < 1e-12
    assert char_indicator(spec, [0, 0, 0], xi_off) > 1e-3
    Qn = quadric_matrix(spec, [0, 0, 0])
    assert np.linalg.matrix_rank(Qn) == 1


def test_type_i_zero_q_rejected():
    with pytest.raises(DegenerateSystem):
        build_type_i(["t", "x", "y"], ["f", "g", "h"], [[0] * 3] * 3)


def test_raw_rejects_explicit_dependence():
    with pytest.raises(QlsError):
        build_raw("bad", ["t", "x", "y"], ["u"], [[[rf("t", ["t"])]], [[1]], [[1]]])


def test_determined_flag_tracks_square_shape():
    for spec in [gdkp(), dkp_hessian(), dkp_type_i(), dkp_type_g(), diagonal_linear()]:
        assert spec.determined == (spec.k == spec.m)
