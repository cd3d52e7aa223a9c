"""Sweep Lambda across the symmetry-breaking threshold and report the branch.

Writes one row per Lambda (see BRANCH_COLUMNS) and prints the empirical onset and
the onset extrapolated from the growth of the mode-1 amplitude.

    python3 scripts/branch_sweep.py --p 4 --mult 0.8:1.6:0.1 --preset fast --out branch.csv
"""
import argparse

from cknflow.cli import manifold_for, parse_range
from cknflow.closed_forms import lambda_fs
from cknflow.io import write_csv
from cknflow.minimize import BRANCH_COLUMNS, bifurcation_sweep
from cknflow.presets import PRESETS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--p", type=float, default=4.0)
    ap.add_argument("--mult", default="0.8:1.6:0.1", help="lo:hi:step in units of Lambda_FS")
    ap.add_argument("--preset", default="fast", choices=sorted(PRESETS))
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="branch.csv")
    args = ap.parse_args()

    M = manifold_for(args.d)
    pre = PRESETS[args.preset]
    lfs = lambda_fs(M, args.p)
    grid = [m * lfs for m in parse_range(args.mult)]
    res = bifurcation_sweep(args.p, M, grid, h=pre.min_h, n_ang=pre.min_n_ang, gtol=pre.min_gtol,
                            workers=args.workers)
    for pt in res.points:
        print(f"Lambda/Lambda_FS = {pt.Lam / lfs:5.2f}  mu/mu* - 1 = {pt.mu_num / pt.mu_star - 1:+.2e}  "
              f"sym = {pt.sym_fraction:.6f}  amp1 = {pt.mode1_amp:.3e}")
    write_csv(args.out, "branch", BRANCH_COLUMNS, [pt.row() for pt in res.points])
    fmt = lambda x: "none" if x is None else f"{x / lfs:.3f} Lambda_FS"
    print(f"onset (first broken point): {fmt(res.onset)}; extrapolated: {fmt(res.onset_extrapolated)}")


if __name__ == "__main__":
    main()
