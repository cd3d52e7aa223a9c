"""Command-line front end.

Every subcommand writes its artifacts into --out-dir together with config.json (the
RunConfig that reproduces the run) and MANIFEST.json (status, exit code, files).
Exit codes: 0 success, 1 scientific gate failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .closed_forms import (DomainError, RootFindingError, ManifoldData, derive_params, params_from_cylinder,
                           fs_constants, lambda_fs, alpha_fs, mu_r, mu_star, eta, b_fs, b_direct,
                           klt_closed_forms)
from .grid import ConfigError
from .io import write_csv, write_json, atomic_write_text, json_text, Svg
from .presets import get_preset, PRESETS

EXIT_OK, EXIT_GATE, EXIT_CONFIG = 0, 1, 2


class GateFailure(RuntimeError):
    """A scientific check did not pass; outputs are still written."""


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    preset: str = "reference"
    out_dir: str = "."
    format: str = "csv"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls(**json.loads(text))


def manifold_for(d: int) -> ManifoldData:
    if d < 2:
        raise DomainError("need d >= 2")
    return ManifoldData.circle() if d == 2 else ManifoldData.sphere(d)


def parse_range(text: str):
    """'lo:hi:step' -> inclusive grid (hi included when it lands on the grid)."""
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"range must look like lo:hi:step, got {text!r}") from None
    if not step > 0 or hi < lo:
        raise ConfigError(f"bad range {text!r}")
    k = int(math.floor((hi - lo) / step + 1e-9))
    return [lo + i * step for i in range(k + 1)]


def n_workers() -> int:
    raw = os.environ.get("CKN_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"CKN_THREADS must be an integer, got {raw!r}") from None
    return max(1, min(n, os.cpu_count() or 1))


class Outputs:
    """Collects written files for the manifest."""

    def __init__(self, out_dir: Path, fmt: str):
        self.dir = out_dir
        self.fmt = fmt
        self.files: list[str] = []

    def table(self, stem: str, schema: str, columns, rows, extra: Optional[dict] = None):
        rows = list(rows)
        if self.fmt == "csv":
            name = f"{stem}.csv"
            write_csv(self.dir / name, schema, columns, rows)
        else:
            name = f"{stem}_table.json"
            obj = {"schema": schema, "columns": list(columns), "rows": [list(r) for r in rows]}
            write_json(self.dir / name, obj)
        self.files.append(name)

    def json(self, name: str, obj: dict):
        write_json(self.dir / name, obj)
        self.files.append(name)

    def text(self, name: str, text: str):
        atomic_write_text(self.dir / name, text)
        self.files.append(name)


# ---------------------------------------------------------------------------
# subcommands


def cmd_constants(args, out: Outputs) -> dict:
    have_ab = args.a is not None or args.b is not None
    have_pl = args.p is not None or args.Lambda is not None
    if have_ab == have_pl:
        raise ConfigError("give either --a/--b or --p/--Lambda")
    if have_ab:
        if args.a is None or args.b is None:
            raise ConfigError("--a and --b go together")
        P = derive_params(args.d, args.a, args.b)
    else:
        if args.p is None or args.Lambda is None:
            raise ConfigError("--p and --Lambda go together")
        P = params_from_cylinder(args.d, args.p, args.Lambda)
    M = manifold_for(args.d)
    fs = fs_constants(args.d, P.n, M)
    rec = {
        "params": P.to_dict(),
        "manifold": M.to_dict(),
        "fs": fs.to_dict(),
        "mu_R": mu_r(P.Lam, P.p),
        "mu_star": mu_star(P.Lam, P.p, M.vol),
        "eta": eta(P),
        "Lambda_fs": lambda_fs(M, P.p),
        "alpha_fs": alpha_fs(M, p=P.p),
        "alpha": P.alpha,
        "n": P.n,
    }
    if have_ab and P.a < P.a_c:
        rec["b_fs"] = b_fs(args.d, P.a)
        rec["b_direct"] = b_direct(args.d, P.a)
    out.json("constants.json", rec)
    return rec


def _phase_svg(d, rows) -> str:
    a = np.array([r[0] for r in rows])
    bf = np.array([r[1] for r in rows])
    bd = np.array([r[2] for r in rows])
    bu = np.array([r[3] for r in rows])
    lo = float(min(a.min(), bf.min(), bd.min()))
    hi = float(bu.max())
    W, H, pad = 640, 480, 50

    def X(v):
        return pad + (v - a.min()) / (a.max() - a.min()) * (W - 2 * pad)

    def Y(v):
        return H - pad - (v - lo) / (hi - lo) * (H - 2 * pad)

    svg = Svg(W, H)
    # admissible strip a <= b <= a + 1
    svg.polygon([(X(x), Y(x)) for x in a] + [(X(x), Y(x + 1)) for x in a[::-1]], fill="#dddddd")
    # symmetry-breaking region a <= b < b_fs(a) where b_fs(a) > a
    sel = bf > a
    if np.count_nonzero(sel) >= 2:
        aa, ff = a[sel], bf[sel]
        svg.polygon([(X(x), Y(x)) for x in aa] + [(X(x), Y(y)) for x, y in zip(aa[::-1], ff[::-1])],
                    fill="#555555")
    svg.polyline([(X(x), Y(y)) for x, y in zip(a, bf)], stroke="black", width=2)
    svg.polyline([(X(x), Y(y)) for x, y in zip(a, bd)], stroke="black", width=1.5, dash="6,4")
    svg.polyline([(X(x), Y(y)) for x, y in zip(a, bu)], stroke="#444444", width=1)
    svg.line(pad, H - pad, W - pad, H - pad)
    svg.line(pad, pad, pad, H - pad)
    svg.text(W / 2, H - 12, "a")
    svg.text(12, H / 2, "b")
    svg.text(pad, 30, f"d = {d}: b_fs (solid), b_direct (dashed), b = a + 1")
    return svg.render()


def cmd_phase_diagram(args, out: Outputs) -> dict:
    a_c = (args.d - 2) / 2
    if args.samples < 2:
        raise ConfigError("need at least 2 samples")
    if not args.a_min < args.a_max <= a_c:
        raise ConfigError(f"need a_min < a_max <= a_c = {a_c}")
    # half-open [a_min, a_max) so that a_c itself is never sampled
    a = args.a_min + (args.a_max - args.a_min) * np.arange(args.samples) / args.samples
    rows = []
    for x in a:
        x = float(round(x, 12))
        rows.append((x, b_fs(args.d, x), b_direct(args.d, x), x + 1))
    bad = [r[0] for r in rows if r[2] < r[1] - 1e-12]
    out.table("phase_diagram", "phase_diagram", ("a", "b_fs", "b_direct", "b_upper"), rows)
    if args.svg:
        out.text("phase_diagram.svg", _phase_svg(args.d, rows))
    rec = {"d": args.d, "samples": len(rows), "ordering_violations": bad}
    if bad:
        raise GateFailure(f"b_direct < b_fs at a = {bad[:5]}")
    return rec


def cmd_stability(args, out: Outputs) -> dict:
    from .stability import mode_spectrum, fs_threshold_numeric

    pre = get_preset(args.preset)
    M = manifold_for(args.d)
    lams = parse_range(args.scan_lambda) if args.scan_lambda else []
    if args.Lambda is not None:
        lams.append(args.Lambda)
    if not lams:
        raise ConfigError("give --Lambda or --scan-lambda")
    rows, flags = [], []
    for L in lams:
        rep = mode_spectrum(L, args.p, M, args.k_max, h=pre.stab_h)
        rows.extend(rep.rows())
        flags.extend(f"Lambda={L!r}: {f}" for f in rep.flags)
    thr = fs_threshold_numeric(args.p, M, h=pre.stab_h)
    exact = lambda_fs(M, args.p)
    out.table("stability", "stability", ("Lambda", "p", "k", "lambda_k", "e_k"), rows)
    # sign change of e_1 along the scan, when the scan brackets it
    e1 = [(r[0], r[4]) for r in rows if r[2] == 1]
    crossing = None
    for (l0, v0), (l1, v1) in zip(e1, e1[1:]):
        if v0 > 0 >= v1:
            crossing = l0 - v0 * (l1 - l0) / (v1 - v0)
            break
    rec = {"d": args.d, "p": args.p, "threshold": thr, "Lambda_fs": exact,
           "threshold_rel_error": abs(thr - exact) / exact, "scan_crossing": crossing,
           "flags": flags, "manifold": M.to_dict()}
    out.json("stability.json", rec)
    return rec


def cmd_flow(args, out: Outputs) -> dict:
    from .flow import FlowConfig, run

    pre = get_preset(args.preset)
    M = manifold_for(args.d)
    Lam = args.Lambda if args.Lambda is not None else lambda_fs(M, args.p) / 2
    angular = "point"
    if args.bump_mode > 0:
        angular = "circle" if args.d == 2 else "axisym"
    cfg = FlowConfig(d=args.d, p=args.p, Lam=Lam, grid=pre.flow_grid(angular),
                     tmax=args.tmax, dt=args.dt or pre.flow_dt, bump_amp=args.bump_amp,
                     bump_mode=args.bump_mode, seed=args.seed,
                     record_every=args.record_every)
    P = params_from_cylinder(args.d, args.p, Lam)
    gate_on = P.alpha <= alpha_fs(M, p=args.p) * (1 + 1e-12)
    cfg.monotone_gate = False
    res = run(cfg, M)
    out.table("flow", "flow", res.COLUMNS, res.rows())
    last = res.records[-1]
    errs = [abs(e - p) / max(1e-4 * abs(e), 1e-6) for _, e, p in res.identity_errors]
    rec = {"config": cfg.to_dict(), "eta_mu_star": res.eta_mu_star, "c_star": res.c_star,
           "monotone": res.monotone, "max_increase": res.max_increase, "gate": gate_on,
           "terminal_fisher": last["fisher"],
           "terminal_rel_gap": (last["fisher"] - res.eta_mu_star) / res.eta_mu_star,
           "mass_drift": abs(last["mass"] - res.records[0]["mass"]),
           "identity_worst_ratio": max(errs) if errs else None}
    out.json("flow.json", rec)
    if gate_on and not res.monotone:
        raise GateFailure(f"Fisher information increased by {res.max_increase:.3e}")
    return rec


def cmd_minimize(args, out: Outputs) -> dict:
    from .minimize import minimize, MinimizeConfig, bifurcation_sweep, BRANCH_COLUMNS

    pre = get_preset(args.preset)
    M = manifold_for(args.d)
    lfs = lambda_fs(M, args.p)
    rec = {"d": args.d, "p": args.p, "Lambda_fs": lfs}
    if args.sweep:
        grid = [m * lfs for m in parse_range(args.sweep)]
        sw = bifurcation_sweep(args.p, M, grid, h=pre.min_h, n_ang=pre.min_n_ang, seed=args.seed,
                               gtol=pre.min_gtol, workers=n_workers())
        out.table("branch", "branch", BRANCH_COLUMNS, [pt.row() for pt in sw.points])
        rec.update(onset=sw.onset, onset_extrapolated=sw.onset_extrapolated,
                   onset_over_Lambda_fs=None if sw.onset is None else sw.onset / lfs,
                   margins=sw.margins)
    else:
        if (args.Lambda is None) == (args.Lambda_mult is None):
            raise ConfigError("give exactly one of --Lambda, --Lambda-mult (or --sweep)")
        Lam = args.Lambda if args.Lambda is not None else args.Lambda_mult * lfs
        cfg = MinimizeConfig(Lam, args.p, M, seed=args.seed, init=args.init, h=pre.min_h,
                             n_ang=pre.min_n_ang, gtol=pre.min_gtol)
        res = minimize(cfg)
        rec.update(Lambda=Lam, mu_estimate=res.mu_estimate, mu_star=res.problem.mu_star,
                   sym_fraction=res.symmetric_fraction, mode1_amp=res.mode1_amp,
                   el_residual=res.el_residual, iterations=res.iterations, converged=res.converged,
                   init=args.init)
        if args.snapshot:
            from .io import field_bytes
            from .io import atomic_write_bytes
            s = res.problem.s
            atomic_write_bytes(out.dir / "minimizer.bin", field_bytes(res.minimizer, s[0], s[-1]))
            out.files.append("minimizer.bin")
    out.json("minimize.json", rec)
    return rec


def cmd_klt(args, out: Outputs) -> dict:
    from .spectral import klt_curve, mustar_bracket, mu_threshold, build_mu_table, klt_check_1d, p_of_q

    pre = get_preset(args.preset)
    M = manifold_for(args.d)
    q = args.q
    if not q > max(1.0, args.d / 2):
        raise DomainError(f"need q > max(1, d/2) = {max(1.0, args.d / 2)}")
    mus = parse_range(args.mu)
    table = None
    if args.table_lambda:
        lfs = lambda_fs(M, p_of_q(q))
        table = build_mu_table(q, M, [m * lfs for m in parse_range(args.table_lambda)],
                               h=pre.min_h, n_ang=pre.min_n_ang)
    cur = klt_curve(q, M, mus, table)
    out.table("klt", "klt", ("mu", "lambda_of_mu", "regime"), cur.rows())
    K = klt_closed_forms(q)
    sat = klt_check_1d(K.v1, q)
    rec = {"q": q, "d": args.d, "mu1": K.mu1, "beta": K.beta, "mu_threshold": mu_threshold(q, M),
           "mustar_bracket": list(mustar_bracket(q, M)), "samples": len(cur.samples),
           "skipped": len(mus) - len(cur.samples),
           "v1_saturation": {"lhs": sat.lhs, "rhs": sat.rhs}}
    out.json("klt.json", rec)
    return rec


def _hardy_potential(kind: str, amp: float, width: float):
    if kind == "zero":
        return None
    if kind == "gaussian":
        if not (amp >= 0 and width > 0):
            raise ConfigError("gaussian potential needs amp >= 0 and width > 0")
        return lambda r: amp * np.exp(-0.5 * (np.log(r) / width) ** 2)
    raise ConfigError(f"unknown potential {kind!r}")


def cmd_hardy(args, out: Outputs) -> dict:
    from .spectral import hardy_gap, hardy_quadratic_form

    V = _hardy_potential(args.V, args.amp, args.width)
    cert = hardy_gap(V, args.q, args.d)
    rec = cert.to_dict()
    if V is not None:
        rec["test_function_form"] = hardy_quadratic_form(
            lambda r: np.exp(-r), lambda r: -np.exp(-r), V, cert.gap, args.d)
    out.json("hardy.json", rec)
    return rec


COMMANDS = {
    "constants": cmd_constants,
    "phase-diagram": cmd_phase_diagram,
    "stability": cmd_stability,
    "flow": cmd_flow,
    "minimize": cmd_minimize,
    "klt": cmd_klt,
    "hardy": cmd_hardy,
}


def build_parser() -> argparse.ArgumentParser:
    def globals_parser(top: bool):
        # subcommands repeat the global flags with suppressed defaults so that a value
        # given before the subcommand name is not overwritten
        g = argparse.ArgumentParser(add_help=False)
        dflt = (lambda v: v) if top else (lambda v: argparse.SUPPRESS)
        g.add_argument("--seed", type=int, default=dflt(0))
        g.add_argument("--preset", choices=sorted(PRESETS), default=dflt("reference"))
        g.add_argument("--out-dir", default=dflt("."))
        g.add_argument("--format", choices=("csv", "json"), default=dflt("csv"))
        return g

    common = globals_parser(False)
    ap = argparse.ArgumentParser(prog="cknflow", parents=[globals_parser(True)],
                                 description="Symmetry and symmetry breaking for CKN inequalities.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("constants", parents=[common], help="closed-form parameter bundle")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--a", type=float)
    s.add_argument("--b", type=float)
    s.add_argument("--p", type=float)
    s.add_argument("--Lambda", type=float)

    s = sub.add_parser("phase-diagram", parents=[common], help="b_fs and b_direct over a range of a")
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--a-min", type=float, default=-2.0)
    s.add_argument("--a-max", type=float, default=0.5)
    s.add_argument("--samples", type=int, default=200)
    s.add_argument("--svg", action="store_true")

    s = sub.add_parser("stability", parents=[common], help="angular-mode spectrum of the linearization")
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--p", type=float, default=4.0)
    s.add_argument("--Lambda", type=float)
    s.add_argument("--scan-lambda")
    s.add_argument("--k-max", type=int, default=2)

    s = sub.add_parser("flow", parents=[common], help="weighted fast diffusion run")
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--p", type=float, default=4.0)
    s.add_argument("--Lambda", type=float)
    s.add_argument("--tmax", type=float, default=1.0)
    s.add_argument("--dt", type=float)
    s.add_argument("--bump-amp", type=float, default=0.05)
    s.add_argument("--bump-mode", type=int, default=0)
    s.add_argument("--record-every", type=int, default=1)

    s = sub.add_parser("minimize", parents=[common], help="direct minimization of the quotient")
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--p", type=float, default=4.0)
    s.add_argument("--Lambda", type=float)
    s.add_argument("--Lambda-mult", type=float)
    s.add_argument("--init", choices=("symmetric", "mode1", "mode1-perturbed", "random"), default="mode1")
    s.add_argument("--sweep", help="lo:hi:step in units of Lambda_fs")
    s.add_argument("--snapshot", action="store_true", help="also dump the minimizer field")

    s = sub.add_parser("klt", parents=[common], help="Lambda(mu) curve and threshold bracket")
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--q", type=float, default=2.0)
    s.add_argument("--mu", default="0.5:10:0.5", help="lo:hi:step")
    s.add_argument("--table-lambda", help="lo:hi:step in units of Lambda_fs for the inverted branch")

    s = sub.add_parser("hardy", parents=[common], help="Hardy inequality with potential")
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--q", type=float, default=2.0)
    s.add_argument("--V", choices=("zero", "gaussian"), default="zero")
    s.add_argument("--amp", type=float, default=0.1)
    s.add_argument("--width", type=float, default=1.0)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    params = {k: v for k, v in vars(args).items()
              if k not in ("command", "seed", "preset", "out_dir", "format")}
    rc = RunConfig(args.command, params, args.seed, args.preset, args.out_dir, args.format)
    out_dir = Path(args.out_dir)
    out = Outputs(out_dir, args.format)
    np.random.seed(args.seed & 0xFFFFFFFF)
    status, code, message, summary = "ok", EXIT_OK, "", {}
    try:
        summary = COMMANDS[args.command](args, out)
    except GateFailure as e:
        status, code, message = "gate_failure", EXIT_GATE, str(e)
    except (DomainError, ConfigError, ValueError) as e:
        status, code, message = "config_error", EXIT_CONFIG, str(e)
    except RootFindingError as e:
        status, code, message = "numerical_failure", EXIT_GATE, str(e)
    except RuntimeError as e:
        status, code, message = "numerical_failure", EXIT_GATE, str(e)
    if code == EXIT_CONFIG and not out.files:
        print(f"error: {message}", file=sys.stderr)
        return code
    atomic_write_text(out_dir / "config.json", rc.to_json() + "\n")
    manifest = {"command": args.command, "status": status, "exit_code": code, "message": message,
                "files": sorted(out.files + ["config.json"]), "version": __version__}
    atomic_write_text(out_dir / "MANIFEST.json", json_text(manifest))
    if code:
        print(f"{status}: {message}", file=sys.stderr)
    elif summary:
        sys.stdout.write(json_text(summary))
    return code


if __name__ == "__main__":
    sys.exit(main())
