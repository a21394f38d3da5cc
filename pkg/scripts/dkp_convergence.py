"""Convergence tables for the dKP reduction lab: path independence and dKP residuals."""
import argparse

from hydronets.dkp_lab import (
    AXIS_LAM2, AXIS_LAM3, AXIS_U2, AXIS_U3, dkp_residual, gt_integrate, path_independence_study,
    simple_wave_solve, smooth_initial, two_component_solve,
)


def table(title, study):
    print(title)
    for i, (res, r) in enumerate(zip(study["resolutions"], study["residuals"])):
        extra = f"  ratio {study['ratios'][i - 1]:8.3f}  order {study['orders'][i - 1]:6.2f}" if i else ""
        print(f"  {res:4d} intervals  residual {r:.3e}{extra}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--box", type=float, default=0.3)
    ap.add_argument("--resolutions", type=int, nargs="+", default=[16, 32, 64])
    args = ap.parse_args()
    box, res = args.box, args.resolutions
    table("N=2, tau=s", path_independence_study(2, AXIS_U2, AXIS_LAM2, box, res))
    table("N=2, tau=s^2", path_independence_study(2, AXIS_U2, AXIS_LAM2, box, res, tau="s^2"))
    table("N=3, tau=s", path_independence_study(3, AXIS_U3, AXIS_LAM3, box, res[:2]))
    table("N=3, tau=s^2", path_independence_study(3, AXIS_U3, AXIS_LAM3, box, res[:2], tau="s^2"))
    fld = gt_integrate(2, AXIS_U2, AXIS_LAM2, box, max(res))
    sols = [two_component_solve(fld, smooth_initial, resolution=r) for r in (16, 32)]
    r = dkp_residual(sols[0], sols[1])
    print(f"two-component dKP residual {r.max:.3e} -> {r.refined_max:.3e}, order {r.order:.3f}")
    sws = [simple_wave_solve(resolution=r) for r in (16, 32)]
    r = dkp_residual(sws[0], sws[1])
    print(f"simple-wave dKP residual {r.max:.3e} -> {r.refined_max:.3e}, order {r.order:.3f}")


if __name__ == "__main__":
    main()
