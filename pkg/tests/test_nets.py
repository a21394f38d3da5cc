import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hydronets.catalog import diagonal_linear, dkp_type_i, gdkp
from hydronets.dkp_lab import AXIS_LAM2, AXIS_U2, gt_integrate
from hydronets.nets import (
    NetError, ParamMap, PreNetFrame, cochar_membership, conjugacy_check, net_to_reduction,
    prenet_integrability_check,
)

COORDS3 = ["r1", "r2", "r3"]
PTS3 = [(0.1, 0.2, 0.3), (-0.5, 0.4, 1.0), (1.2, -0.7, 0.2)]
PTS2 = [(0.1, 0.25), (0.3, -0.2), (0.05, 0.4), (-0.3, 0.6)]

# type-I map with constant lambda = +-1 whose tangents are cocharacteristic but not conjugate
NON_CONJ = ["r1 + r2", "r1 + r2 - (r1 + r2)^2/2", "r1 - r2"]


@pytest.fixture(scope="module")
def field():
    return gt_integrate(2, AXIS_U2, AXIS_LAM2, 0.3, 16)


# pre-nets

def test_coordinate_frame_integrable():
    f = PreNetFrame.from_strings([["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]], COORDS3)
    assert prenet_integrability_check(f, PTS3).passed


def test_twisted_frame_fails_on_pair_12():
    f = PreNetFrame.from_strings([["1", "0", "0"], ["0", "1", "r1"], ["0", "0", "1"]], COORDS3)
    rep = prenet_integrability_check(f, PTS3)
    assert not rep.passed
    verdict = {p.pair: p for p in rep.pairs}
    assert not verdict[0, 1].passed and verdict[0, 2].passed and verdict[1, 2].passed
    # bracket is d_3, orthogonal to span{d_1, d_2 + r1 d_3}: sigma_3/sigma_1 is O(1)
    assert verdict[0, 1].worst > 0.1 and verdict[0, 1].witness is not None


def test_rescaled_coordinate_frame_integrable():
    f = PreNetFrame.from_strings([["1 + r2^2", "0", "0"], ["0", "r1^2 + 2", "0"],
                                  ["0", "0", "1/(1 + r1^2)"]], COORDS3)
    assert prenet_integrability_check(f, PTS3).passed


def test_dependent_frame_rejected():
    f = PreNetFrame.from_strings([["1", "0", "0"], ["2", "0", "0"]], COORDS3)
    with pytest.raises(NetError):
        prenet_integrability_check(f, PTS3)


# cocharacteristic membership

def test_gdkp_direction_momentum():
    # Z = (1, lambda) at u: xi proportional to (1, lambda^2 - tau(u), lambda)
    lam, u = 0.7, 0.3
    net = ParamMap.symbolic(["3/10 + r1", "7/10*r1 + r2"], 2)
    rep = cochar_membership(gdkp("s"), net, [(0.0, 0.0)])
    xi = rep.directions[0].xi[0]
    assert rep.directions[0].max_residual < 1e-9
    expected = np.array([1, lam ** 2 - u, lam])
    assert np.abs(xi / xi[0] - expected).max() < 1e-12
    assert rep.directions[0].max_char_value < 1e-9


def test_direction_10_at_tau_one():
    # u = 1, tau = id, Z = (1, 0): xi = (1, -1, 0), on the conic xi1 xi2 + xi1^2 - xi3^2
    net = ParamMap.symbolic(["1 + r1", "r2"], 2)
    xi = cochar_membership(gdkp("s"), net, [(0.0, 0.0)]).directions[0].xi[0]
    xi = xi / xi[0]
    assert np.abs(xi - [1, -1, 0]).max() < 1e-12
    assert abs(xi[0] * xi[1] + xi[0] ** 2 - xi[2] ** 2) < 1e-12


def test_zero_direction_rejected():
    with pytest.raises(NetError):
        cochar_membership(gdkp("s"), ParamMap.symbolic(["r1", "0"], 2), [(0.1, 0.1)])


@pytest.mark.invariant
def test_field_nets_are_cocharacteristic(field):
    for spec, names in ((gdkp("s"), ("U", "V")), (dkp_type_i(), ("U", "W", "V"))):
        rep = cochar_membership(spec, ParamMap.from_field(field, names))
        assert rep.passed
        assert max(d.max_residual for d in rep.directions) < 1e-8
        assert max(d.max_char_value for d in rep.directions) < 1e-9


def test_non_cocharacteristic_type_i_map():
    rep = cochar_membership(dkp_type_i(), ParamMap.symbolic(["r1", "r2", "r1*r2"], 2), PTS2)
    assert not rep.passed


# conjugacy

def test_conjugate_plane_map():
    rep = conjugacy_check(ParamMap.symbolic(["r1 + r2", "r1*r2"], 2), PTS2)
    assert rep.passed and rep.vacuous


def test_conjugate_zero_mixed_derivative():
    assert conjugacy_check(ParamMap.symbolic(["r1", "r2", "r1^2 + r2^2"], 2), PTS2).passed


def test_one_dimensional_net_vacuous():
    rep = conjugacy_check(ParamMap.symbolic(["r1", "r1^2", "r1^3"], 1), [(0.2,), (0.5,)])
    assert rep.passed and rep.vacuous


def test_non_conjugate_map_fails():
    rep = conjugacy_check(ParamMap.symbolic(NON_CONJ, 2), PTS2)
    assert not rep.passed and rep.pairs[0].witness


@pytest.mark.invariant
def test_field_net_conjugate(field):
    assert conjugacy_check(ParamMap.from_field(field, ("U", "W", "V"))).passed


# momenta reconstruction

def test_field_net_reduction_matches_closed_form(field):
    red = net_to_reduction(gdkp("s"), ParamMap.from_field(field))
    closed = -field.Ua[1] / (field.lam[1] - field.lam[0]) ** 2
    assert np.abs(red.gamma[0, 1] - closed[1:-1, 1:-1]).max() < 20 * field.h ** 2
    assert np.abs(red.kappa[0][..., 2] - field.lam[0]).max() < 1e-12
    assert red.as_dict()["generic"]


def test_deviation_second_order():
    devs = []
    for res in (16, 32):
        fld = gt_integrate(2, AXIS_U2, AXIS_LAM2, 0.3, res)
        devs.append(net_to_reduction(gdkp("s"), ParamMap.from_field(fld)).max_deviation)
    assert 3.5 < devs[0] / devs[1] < 4.5


def test_uncoupled_product_net_zero_deviation():
    net = ParamMap.symbolic(["r1^3 + r1", "2*r2 - r2^2"], 2)
    red = net_to_reduction(diagonal_linear(), net, grid=([(0.1, 0.4)] * 2, 8))
    assert red.max_deviation < 1e-13


def test_non_conjugate_map_fails_compatibility():
    red = net_to_reduction(dkp_type_i(), ParamMap.symbolic(NON_CONJ, 2), grid=([(0, 0.3)] * 2, 8))
    assert red.max_deviation > 0.1


def test_non_cocharacteristic_net_refused():
    with pytest.raises(NetError):
        net_to_reduction(dkp_type_i(), ParamMap.symbolic(["r1", "r2", "r1*r2"], 2),
                         grid=([(0.1, 0.3)] * 2, 4))


# reparametrization invariance

rho = st.tuples(st.integers(1, 3), st.integers(0, 2))


@settings(max_examples=10, deadline=None)
@given(rho, rho)
def test_verdicts_invariant_under_monotone_reparametrization(p1, p2):
    maps = [f"{p1[0]}*r1 + {p1[1]}*r1^3", f"{p2[0]}*r2 + {p2[1]}*r2^3"]
    pts = [(0.1, 0.2), (0.3, 0.05)]
    ti = dkp_type_i()
    for exprs in (NON_CONJ, ["r1", "r2", "r1^2 + r2^2"], ["r1", "r2", "r1*r2"]):
        net = ParamMap.symbolic(exprs, 2)
        rep = net.reparametrized(maps)
        # compare at corresponding points rho^{-1}: evaluate the original at rho(r)
        mapped = [(p1[0] * a + p1[1] * a ** 3, p2[0] * b + p2[1] * b ** 3) for a, b in pts]
        assert conjugacy_check(rep, pts).passed == conjugacy_check(net, mapped).passed
        assert cochar_membership(ti, rep, pts).passed == cochar_membership(ti, net, mapped).passed
