"""Flow diagnostics across resolution presets (d=2, p=4, Lambda = Lambda_FS/2).

For each preset prints the Barenblatt Fisher information error, the mass drift,
the worst dissipation-identity error in units of its tolerance, and the runtime.

    python3 scripts/resolution_study.py --presets fast reference --tmax 1
"""
import argparse
import time

from cknflow.closed_forms import ManifoldData, barenblatt, eta, lambda_fs, mu_star, normalize_c_star, params_from_cylinder
from cknflow.flow import FlowConfig, run
from cknflow.grid import build_grid
from cknflow.presets import PRESETS


def study(name, tmax, M, p=4.0):
    pre = PRESETS[name]
    Lam = lambda_fs(M, p) / 2
    cfg = FlowConfig(d=2, p=p, Lam=Lam, grid=pre.flow_grid(), dt=pre.flow_dt, tmax=tmax)
    P = params_from_cylinder(2, p, Lam)
    g = build_grid(cfg.grid, P, M)
    u = barenblatt(1.0, g.r, P, normalize_c_star(P, M))[:, None]
    fisher_err = abs(g.fisher(u) / (eta(P) * mu_star(Lam, p, M.vol)) - 1)
    t0 = time.perf_counter()
    res = run(cfg, M)
    elapsed = time.perf_counter() - t0
    drift = abs(res.records[-1]["mass"] - res.records[0]["mass"])
    ratio = max(abs(e - q) / max(1e-4 * abs(q), 1e-6) for _, e, q in res.identity_errors)
    return fisher_err, drift, ratio, res.monotone, elapsed


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--presets", nargs="+", default=["fast", "reference"], choices=sorted(PRESETS))
    ap.add_argument("--tmax", type=float, default=1.0)
    args = ap.parse_args()
    M = ManifoldData.circle()
    print(f"{'preset':>10} {'N_s':>6} {'dt':>7} {'I[u*] rel':>10} {'mass':>9} {'identity':>9} {'mono':>5} {'sec':>6}")
    for name in args.presets:
        pre = PRESETS[name]
        err, drift, ratio, mono, sec = study(name, args.tmax, M)
        print(f"{name:>10} {pre.flow_n_s:>6} {pre.flow_dt:>7.0e} {err:>10.1e} {drift:>9.1e} {ratio:>9.3f} "
              f"{str(mono):>5} {sec:>6.1f}")


if __name__ == "__main__":
    main()
