"""Tabulate b_fs(a) and b_direct(a) for several dimensions in one long-format CSV.

    python3 scripts/phase_diagrams.py --dims 3 4 5 6 --samples 400 --out phase_diagrams.csv
"""
import argparse

import numpy as np

from cknflow.closed_forms import b_direct, b_fs
from cknflow.io import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=int, nargs="+", default=[3, 4, 5, 6])
    ap.add_argument("--a-min", type=float, default=-2.0)
    ap.add_argument("--samples", type=int, default=400)
    ap.add_argument("--out", default="phase_diagrams.csv")
    args = ap.parse_args()

    rows = []
    for d in args.dims:
        a_c = (d - 2) / 2
        for a in np.linspace(args.a_min, a_c, args.samples, endpoint=False):
            a = float(a)
            rows.append((d, a, b_fs(d, a), b_direct(d, a)))
        gap = max(r[3] - r[2] for r in rows if r[0] == d)
        print(f"d={d}: a in [{args.a_min}, {a_c}), max b_direct - b_fs = {gap:.4f}")
    path = write_csv(args.out, "phase_diagrams", ("d", "a", "b_fs", "b_direct"), rows)
    print(f"wrote {len(rows)} rows to {path}")


if __name__ == "__main__":
    main()
