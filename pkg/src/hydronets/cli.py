"""Command-line front end: ``hydronets <subcommand> <spec-file> [flags]``.

Exit codes: 0 success/pass, 2 the mathematics says no (obstructed, failed check),
1 input or runtime error.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import time

import numpy as np

from .config import Tolerances
from .gibbons_tsarev import bind_family, derive_reduction, reduction_system, verdict
from .nets import (
    ParamMap, cochar_membership, compatibility_verdict, conjugacy_check, net_to_reduction,
)
from .qls import (
    NotDetermined, QlsError, char_indicator, char_polynomial, cochar_sample, compliancy_probe,
    momentum_for_direction, proj_dist, quadric_matrix, random_point, rank_one_fiber,
)
from .report import make_report, write_report
from .specfile import SpecFile, load_net_csv, load_spec
from .symkernel import SymbolTable, eval_rf, lambdify, parse, pretty, to_str
from .tsarev import (
    export_solution, gamma_from_momenta, hodograph_solve, semi_hamiltonian_check,
    verify_hydro_solution,
)

OK, NO, ERROR = 0, 2, 1
SUBCOMMANDS = ("parse-check", "charvar", "rankone-probe", "compliancy-probe", "gt-derive",
               "integrability-test", "tsarev-check", "hodograph", "net-check", "dkp-demo")


class CommandError(ValueError):
    pass


def _rng(sf: SpecFile) -> np.random.Generator:
    return np.random.default_rng(sf.settings.seed)


def _numeric_bindings(sf: SpecFile, rng: np.random.Generator) -> tuple[dict, dict]:
    """Bindings for numeric work: declared ones, plus random cubics for formal functions."""
    out = dict(sf.bindings)
    shown = {}
    for f in sf.system.functions:
        if f in out:
            continue
        c = [f"{int(rng.integers(-9, 10))}/{int(rng.integers(1, 6))}" for _ in range(4)]
        body = " + ".join(f"({ci})*s^{i}" for i, ci in enumerate(c))
        tab = SymbolTable()
        tab.declare_variables("s")
        out[f] = lambdify("s", parse(body, tab))
        shown[f] = f"s -> {body}"
    return out, shown


def _numeric_system(sf: SpecFile, rng):
    fns, shown = _numeric_bindings(sf, rng)
    spec = dataclasses.replace(sf.system, bindings=fns, _num_cache={}) if shown else sf.system
    return spec, fns, shown


def _points(sf: SpecFile, spec, rng, default: int) -> list[np.ndarray]:
    if sf.settings.base_point is not None and not sf.settings.samples:
        return [spec.as_array(sf.settings.base_point)]
    return [random_point(spec, rng) for _ in range(sf.settings.samples or default)]


# subcommands

def cmd_parse_check(sf: SpecFile) -> tuple[int, dict]:
    out = {"system": sf.system.summary(), "bindings": sorted(sf.bindings),
           "family": None, "diagonal": None, "net": None}
    if sf.family:
        out["family"] = {"main": sf.family.main, "aux": sf.family.aux}
    if sf.diagonal:
        d = sf.diagonal
        out["diagonal"] = {"reduction": d.reduction} if d.reduction else d.system.summary()
    if sf.net:
        out["net"] = {"parameters": sf.net.parameters, "map": sf.net.exprs, "csv": sf.net.csv}
    return OK, out


def cmd_charvar(sf: SpecFile) -> tuple[int, dict]:
    spec = sf.system
    out: dict = {"determined": spec.determined, "well_posed": spec.well_posed}
    try:
        cp = char_polynomial(spec)
        out.update(polynomial=to_str(cp.expr()), pretty=pretty(cp.expr()), degree=cp.degree,
                   momenta=list(cp.momenta), removed_content=str(cp.content))
    except NotDetermined as exc:
        out["polynomial"] = None
        out["note"] = str(exc)
    rng = _rng(sf)
    num, fns, shown = _numeric_system(sf, rng)
    if shown:
        out["numeric_bindings"] = shown
    p = _points(sf, num, rng, 1)[0]
    out["base_point"] = p.tolist()
    if spec.provenance in ("H", "I"):
        out["quadric_at_base_point"] = quadric_matrix(num, p).tolist()
    samples = cochar_sample(num, p, 6, sf.settings.seed, sf.settings.tol)
    out["samples"] = [{"xi": s.xi.tolist(), "Z": s.Z.tolist(),
                       "char_indicator": char_indicator(num, p, s.xi)} for s in samples]
    return OK, out


def cmd_rankone_probe(sf: SpecFile) -> tuple[int, dict]:
    tol = sf.settings.tol
    threshold = 1e-9
    rng = _rng(sf)
    spec, fns, shown = _numeric_system(sf, rng)
    count = sf.settings.samples or 8
    rows, worst = [], 0.0
    if sf.family is not None:
        # pairing of the one-parameter family: xi = (1, D(lambda, u), lambda) <-> Z = (1, W(lambda, u))
        gt = derive_reduction(bind_family(sf.family, fns), False)
        im, ia = spec.coords.index(sf.family.main), spec.coords.index(sf.family.aux)
        for _ in range(count):
            p = random_point(spec, rng)
            l0, l1 = rng.standard_normal(2)
            lam = l1 / l0
            pt = {"lambda": lam, "U": p[im]}
            xi = l0 ** 2 * np.array([1.0, float(eval_rf(gt.dispersion, pt, fns)), lam])
            Zexp = np.zeros(spec.m)
            Zexp[im], Zexp[ia] = l0, l0 * float(eval_rf(gt.w, pt, fns))
            fib = rank_one_fiber(spec, p, xi, tol)
            dist = min(proj_dist(s.Z, Zexp) for s in fib)
            back, res, _ = momentum_for_direction(spec, p, Zexp, tol)
            err = max(dist, fib[0].residual, res, proj_dist(back, xi))
            worst = max(worst, err)
            rows.append({"p": p.tolist(), "lambda0": l0, "lambda1": l1, "xi": xi.tolist(),
                         "Z": Zexp.tolist(), "fibre_dim": len(fib), "error": err})
        mode = "family pairing"
    else:
        for _ in range(count):
            p = random_point(spec, rng)
            for s in cochar_sample(spec, p, 2, int(rng.integers(2 ** 31)), tol):
                back, res, _ = momentum_for_direction(spec, p, s.Z, tol)
                err = max(s.residual, res, proj_dist(back, s.xi) if s.nulldim == 1 else 0.0)
                worst = max(worst, err)
                rows.append({"p": p.tolist(), "xi": s.xi.tolist(), "Z": s.Z.tolist(),
                             "fibre_dim": s.nulldim, "error": err})
        mode = "sampled rank-one pairs"
    out = {"mode": mode, "samples": rows, "max_error": worst, "threshold": threshold,
           "passed": worst < threshold}
    if shown:
        out["numeric_bindings"] = shown
    return (OK if worst < threshold else NO), out


def cmd_compliancy_probe(sf: SpecFile) -> tuple[int, dict]:
    rng = _rng(sf)
    spec, fns, shown = _numeric_system(sf, rng)
    points = _points(sf, spec, rng, 5)
    reports = [compliancy_probe(spec, p, sf.settings.seed + i, sf.settings.tol)
               for i, p in enumerate(points)]
    per_probe = {}
    for i in range(4):
        st = [r.probes[i].status for r in reports]
        per_probe[reports[0].probes[i].name] = "fail" if "fail" in st else (
            "pass" if all(s == "pass" for s in st) else "unknown")
    overall = "fail" if "fail" in per_probe.values() else (
        "pass" if all(v == "pass" for v in per_probe.values()) else "unknown")
    out = {"status": overall, "probes": per_probe, "points": [r.as_dict() for r in reports]}
    if shown:
        out["numeric_bindings"] = shown
    return (NO if overall == "fail" else OK), out


def _family(sf: SpecFile):
    if sf.family is None:
        raise CommandError("this command needs a [family] block")
    return sf.family


def cmd_gt_derive(sf: SpecFile) -> tuple[int, dict]:
    fam = _family(sf)
    if sf.bindings:
        fam = bind_family(fam, sf.bindings)
    return OK, derive_reduction(fam).as_dict()


def cmd_integrability_test(sf: SpecFile) -> tuple[int, dict]:
    v = verdict(_family(sf), sf.bindings or None)
    out = v.as_dict()
    out["obstructions"] = out["conditions"]
    out["derivation"] = v.system.as_dict()
    return (OK if v.integrable else NO), out


def _diagonal_system(sf: SpecFile):
    if sf.diagonal is None:
        raise CommandError("this command needs a [diagonal] block")
    if sf.diagonal.reduction:
        fam = _family(sf)
        if sf.bindings:
            fam = bind_family(fam, sf.bindings)
        return reduction_system(derive_reduction(fam, False), sf.diagonal.reduction)
    return sf.diagonal.system


def cmd_tsarev_check(sf: SpecFile) -> tuple[int, dict]:
    sysd = _diagonal_system(sf)
    g = gamma_from_momenta(sysd)
    rep = semi_hamiltonian_check(sysd, g.gamma)
    out = {"system": sysd.summary(), "gamma": g.as_dict(), "tsarev": rep.as_dict()}
    return (OK if rep.passed and g.consistent else NO), out


def cmd_hodograph(sf: SpecFile, csv_dir: str | None, threads: int) -> tuple[int, dict]:
    d = sf.diagonal
    if d is None or d.lift is None:
        raise CommandError("hodograph needs a [diagonal] block with lifts")
    st = sf.settings
    if st.box is None:
        raise CommandError("hodograph needs [settings] box")
    lift_res = d.lift.check(d.system)
    if lift_res:
        raise CommandError("the lifts do not satisfy the linear system for the affine parts")
    sol = hodograph_solve(d.system, d.lift, st.box, st.resolution, d.seed, st.tol, threads)
    fine = hodograph_solve(d.system, d.lift, st.box, 2 * st.resolution, d.seed, st.tol, threads) \
        if st.refine else None
    ver = verify_hydro_solution(d.system, sol, fine)
    out = {"solution": sol.stats(), "verification": ver.as_dict(),
           "accept_tolerance": st.tol.hodograph_accept}
    if csv_dir:
        out["files"] = [os.path.basename(f) for f in export_solution(sol, ver, csv_dir)]
    ok = sol.stats()["max_implicit_residual"] is not None and \
        sol.stats()["max_implicit_residual"] < st.tol.hodograph_accept
    return (OK if ok else NO), out


def _net_map(sf: SpecFile) -> ParamMap:
    nb = sf.net
    if nb.exprs is not None:
        params = nb.parameters or None
        return ParamMap.symbolic(nb.exprs, None if params else len(nb.exprs), params,
                                 sf.bindings, sf.system.functions)
    axes, vals = load_net_csv(nb.csv, len(nb.parameters))
    return ParamMap.sampled(axes, vals)


def cmd_net_check(sf: SpecFile) -> tuple[int, dict]:
    if sf.net is None:
        raise CommandError("net-check needs a [net] block")
    nb, st, tol = sf.net, sf.settings, sf.settings.tol
    net = _net_map(sf)
    rng = _rng(sf)
    samples = nb.samples
    if net.is_symbolic and samples is None:
        if st.box is None:
            raise CommandError("symbolic nets need [net] samples or [settings] box")
        samples = [[rng.uniform(lo, hi) for lo, hi in st.box[:net.N]] for _ in range(st.samples or 8)]
    mem = cochar_membership(sf.system, net, samples, tol)
    out = {"membership": mem.as_dict()}
    required = nb.conjugacy == "yes"
    if nb.conjugacy == "auto":
        p0 = net.value(samples[0]) if net.is_symbolic else net.values[net.interior()[0]]
        rank = compliancy_probe(sf.system, p0, st.seed, tol).momentum_factor_rank
        required = rank == 1
        out["momentum_factor_rank"] = rank
    conj = conjugacy_check(net, samples, tol)
    out["conjugacy"] = conj.as_dict()
    out["conjugacy_required"] = required
    ok = mem.passed and (conj.passed or not required)
    if mem.passed and (not net.is_symbolic or st.box is not None):
        res = nb.grid or st.resolution
        box = st.box[:net.N] if st.box else None
        red = net_to_reduction(sf.system, net, tol, (box, res) if net.is_symbolic else None)
        out["reduction"] = red.as_dict()
        if net.is_symbolic:
            red2 = net_to_reduction(sf.system, net, tol, (box, 2 * res))
            compatible = compatibility_verdict(red, red2)
            out["reduction"]["refined_max_deviation"] = red2.max_deviation
            out["reduction"]["compatible"] = compatible
            ok = ok and (compatible or not required)
    out["passed"] = bool(ok)
    return (OK if ok else NO), out


def cmd_dkp_demo(sf: SpecFile, csv_dir: str | None, threads: int) -> tuple[int, dict]:
    from .dkp_lab import (
        AXIS_LAM2, AXIS_LAM3, AXIS_U2, AXIS_U3, dkp_residual, gt_integrate,
        path_independence_study, simple_wave_solve, smooth_initial, two_component_solve,
    )

    demo, tol = sf.demo, sf.settings.tol
    tau = demo.get("tau", "s")
    box = float(demo.get("box", "0.3"))
    res2 = [int(v) for v in demo.get("resolutions", "16, 32, 64").split(",")]
    res3 = [int(v) for v in demo.get("stall_resolutions", "8, 16").split(",")]
    rtc = [int(v) for v in demo.get("two_component_resolutions", "16, 32").split(",")]
    rsw = [int(v) for v in demo.get("simple_wave_resolutions", "16, 32").split(",")]
    out = {"tau": tau}
    out["path_independence_N2"] = path_independence_study(2, AXIS_U2, AXIS_LAM2, box, res2, "s", tol)
    out["path_independence_N3"] = path_independence_study(3, AXIS_U3, AXIS_LAM3, box, res3, tau, tol)
    fld = gt_integrate(2, AXIS_U2, AXIS_LAM2, box, max(res2), "s", tol=tol)
    sols = [two_component_solve(fld, smooth_initial, resolution=r, tol=tol) for r in rtc]
    out["two_component"] = {"info": [s.info for s in sols],
                            "dkp_residual": dkp_residual(sols[0], sols[1]).as_dict()}
    sws = [simple_wave_solve(resolution=r, tol=tol, threads=threads) for r in rsw]
    out["simple_wave"] = {"info": [s.info for s in sws],
                          "dkp_residual": dkp_residual(sws[0], sws[1]).as_dict()}
    if csv_dir:
        os.makedirs(csv_dir, exist_ok=True)
        sols[-1].to_csv(os.path.join(csv_dir, "two_component.csv"))
        sws[-1].to_csv(os.path.join(csv_dir, "simple_wave.csv"))
        out["files"] = ["two_component.csv", "simple_wave.csv"]
    stall = out["path_independence_N3"]["ratios"][-1] < 1.2
    orders_ok = all(abs(x["dkp_residual"]["order"] - 2) <= 0.4
                    for x in (out["two_component"], out["simple_wave"]))
    out["obstruction_stall"] = bool(stall)
    out["second_order"] = bool(orders_ok)
    return (NO if stall or not orders_ok else OK), out


# driver

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("spec", help="spec file (.spec or .json mirror)")
    common.add_argument("--report", help="write the JSON report to this path")
    common.add_argument("--csv-dir", help="directory for CSV grid exports")
    common.add_argument("--threads", type=int, help="worker threads (default: machine parallelism)")
    common.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                        help="override a tolerance (repeatable)")
    common.add_argument("--seed", help="probe sampling seed (hex)")
    common.add_argument("--timing", action="store_true", default=None,
                        help="include wall-clock timings in the report")
    p = argparse.ArgumentParser(prog="hydronets",
                                description="Integrability tests for quasilinear systems via "
                                            "hydrodynamic reductions.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def _overrides(args) -> dict:
    tol = {}
    for item in args.tol:
        k, sep, v = item.partition("=")
        if not sep:
            raise CommandError(f"--tol expects NAME=VALUE, got {item!r}")
        tol[k.strip()] = v.strip()
    return {"tol": tol or None, "seed": int(args.seed, 16) if args.seed else None,
            "threads": args.threads, "csv_dir": args.csv_dir, "report": args.report,
            "timing": args.timing}


def run(argv: list[str] | None = None) -> tuple[int, dict]:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    sf = None
    report_path = args.report
    try:
        sf = load_spec(args.spec, _overrides(args))
        st = sf.settings
        report_path = st.report
        threads = st.threads or os.cpu_count() or 1
        handlers = {
            "parse-check": lambda: cmd_parse_check(sf),
            "charvar": lambda: cmd_charvar(sf),
            "rankone-probe": lambda: cmd_rankone_probe(sf),
            "compliancy-probe": lambda: cmd_compliancy_probe(sf),
            "gt-derive": lambda: cmd_gt_derive(sf),
            "integrability-test": lambda: cmd_integrability_test(sf),
            "tsarev-check": lambda: cmd_tsarev_check(sf),
            "hodograph": lambda: cmd_hodograph(sf, st.csv_dir, threads),
            "net-check": lambda: cmd_net_check(sf),
            "dkp-demo": lambda: cmd_dkp_demo(sf, st.csv_dir, threads),
        }
        code, result = handlers[args.command]()
        status = "pass" if code == OK else "fail"
    except FileNotFoundError as exc:
        code, status, result = ERROR, "error", {"error": f"file not found: {exc.filename}"}
    except (ValueError, KeyError, ZeroDivisionError, QlsError, OSError) as exc:
        code, status, result = ERROR, "error", {"error": f"{type(exc).__name__}: {exc}"}
    timing = None
    if sf is not None and sf.settings.timing:
        timing = {"wall_seconds": time.perf_counter() - t0}
    report = make_report(args.command, args.spec, sf.digest if sf else None, status, code, result,
                         sf.settings.as_dict() if sf else None,
                         sf.settings.tol.as_dict() if sf else Tolerances().as_dict(), timing)
    if report_path:
        write_report(report, report_path)
    return code, report


def _summary_line(report: dict) -> str:
    r = report["result"]
    cmd = report["command"]
    if report["status"] == "error":
        return f"error: {r['error']}"
    if cmd == "integrability-test":
        conds = ", ".join(r["conditions"]) or "none"
        return f"{r['verdict']} (conditions: {conds})"
    if cmd == "charvar" and r.get("polynomial"):
        return f"characteristic polynomial: {r['polynomial']}"
    if cmd == "compliancy-probe":
        return "compliancy: " + "; ".join(f"{k}: {v}" for k, v in r["probes"].items())
    return f"{cmd}: {report['status']}"


def main(argv: list[str] | None = None) -> int:
    code, report = run(argv)
    line = _summary_line(report)
    print(line, file=sys.stderr if code == ERROR else sys.stdout)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
