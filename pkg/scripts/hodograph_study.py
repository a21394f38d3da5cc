"""Generalized hodograph solve of the N=1 simple wave with FD convergence orders."""
import argparse
import time

from hydronets.symkernel import RationalFn
from hydronets.tsarev import AffineLift, hodograph_solve, uncoupled, verify_hydro_solution


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--edge", type=float, default=0.2, help="box [0, edge]^3")
    ap.add_argument("--resolutions", type=int, nargs="+", default=[16, 32, 64, 128])
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    sys = uncoupled([["1", "r1^2 - r1", "r1"]])
    lift = AffineLift([-RationalFn.gen("r1")])
    prev = None
    for res in args.resolutions:
        t0 = time.perf_counter()
        sol = hodograph_solve(sys, lift, [(0, args.edge)] * 3, res, [0.0], threads=args.threads)
        dt = time.perf_counter() - t0
        line = f"{res:4d} intervals  implicit residual {sol.residual.max():.2e}  solve {dt:6.2f} s"
        if prev is not None:
            v = verify_hydro_solution(sys, prev, sol)
            line += f"  FD residual {v.max_residual:.3e}  order {v.order:.3f}"
        print(line)
        prev = sol


if __name__ == "__main__":
    main()
