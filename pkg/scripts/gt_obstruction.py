"""Integrability verdict of the generalized dKP family for a list of tau choices."""
import argparse

from hydronets.catalog import gdkp, tau_binding
from hydronets.gibbons_tsarev import ParamCharFamily, verdict


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("tau", nargs="*", default=["formal", "s", "2*s - 1", "3", "s^2", "s^3", "1/(1 + s)"],
                    help="bodies of tau(s); 'formal' keeps tau symbolic")
    args = ap.parse_args()
    fam = ParamCharFamily(gdkp())
    for body in args.tau:
        v = verdict(fam) if body == "formal" else verdict(fam, tau_binding(body))
        d = v.as_dict()
        print(f"tau(s) = {body:12s} {d['verdict']:11s} {', '.join(d['conditions'])}")


if __name__ == "__main__":
    main()
