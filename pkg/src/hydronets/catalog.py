"""Ready-made quasilinear systems from the dKP family (used by tests, scripts and spec files)."""
from __future__ import annotations

from fractions import Fraction

from .qls import QlsSpec, build_raw, build_type_g, build_type_h, build_type_i, hessian_coords
from .symkernel import Lambda, SymbolTable, lambdify, parse, to_rf

INDEP = ("t", "x", "y")


def _table(variables, functions=()) -> SymbolTable:
    t = SymbolTable()
    t.declare_variables(*variables)
    if functions:
        t.declare_functions(*functions)
    return t


def tau_binding(body: str, var: str = "s") -> dict[str, Lambda]:
    """{'tau': s -> body} for use as a formal-function binding."""
    return {"tau": lambdify(var, parse(body, _table([var])))}


def gdkp(tau: str | None = None) -> QlsSpec:
    """u_y - v_t = 0, u_x + tau(u) u_t - v_y = 0 on (u, v); tau formal unless a body in s is given."""
    tab = _table(["u", "v"], ["tau"])
    P = lambda s: to_rf(parse(s, tab))  # noqa: E731
    A_t = [[P("0"), P("-1")], [P("tau(u)"), P("0")]]
    A_x = [[P("0"), P("0")], [P("1"), P("0")]]
    A_y = [[P("1"), P("0")], [P("0"), P("-1")]]
    bindings = tau_binding(tau) if tau is not None else {}
    spec = build_raw("gdkp" if tau is None else f"gdkp[tau={tau}]", INDEP, ["u", "v"],
                     [A_t, A_x, A_y], functions=["tau"], bindings=bindings)
    return spec


def dkp_hessian(base_point=None) -> QlsSpec:
    """phi_xt + phi_tt^2/2 = phi_yy as a hypersurface in the symmetric-matrix coordinates."""
    coords = hessian_coords(3)
    F = to_rf(parse("p12 + p11^2/2 - p33", _table(coords)))
    return build_type_h(INDEP, F, base_point, name="dkp_H")


def dkp_type_i(base_point=None) -> QlsSpec:
    """First derivatives (f, g, h) of w with w_xt + w_t w_tt = w_yy (so f_x + f f_t = h_y)."""
    tab = _table(["f", "g", "h"])
    half = Fraction(1, 2)
    Q = [[to_rf(parse("f", tab)), half, 0], [half, 0, 0], [0, 0, -1]]
    return build_type_i(INDEP, ["f", "g", "h"], Q, base_point, name="dkp_typeI")


def dkp_type_g(base_point=None) -> QlsSpec:
    """Potentials (w, v) with w_x + w_t^2/2 = v_y and v_t = w_y."""
    coords = [f"{w}_{t}" for w in ("w", "v") for t in INDEP]
    tab = _table(coords)
    F = [to_rf(parse("w_x + w_t^2/2 - v_y", tab)), to_rf(parse("v_t - w_y", tab))]
    return build_type_g(INDEP, ["w", "v"], F, base_point, name="dkp_typeG")


def diagonal_linear(coeffs=((1, 2, -1), (2, -1, 3))) -> QlsSpec:
    """Decoupled constant system sum_j c_aj d_tj u^a = 0 (one equation per unknown)."""
    m, n = len(coeffs), len(coeffs[0])
    mats = [[[Fraction(coeffs[a][j]) if a == b else 0 for b in range(m)] for a in range(m)]
            for j in range(n)]
    return build_raw("diagonal", INDEP, [f"u{a + 1}" for a in range(m)], mats)
