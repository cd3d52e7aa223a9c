"""Weighted fast diffusion u_t = L u^m on the truncated cylinder grid.

Time stepping is the theta-scheme (Crank-Nicolson by default) solved by Newton's
method with sparse LU.  The discrete L is the conservative flux form of the grid
module with no-flux ends, so the discrete mass sum(e^{ns} u) is invariant up to
the Newton tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .closed_forms import (ManifoldData, params_from_cylinder, normalize_c_star,
                           barenblatt, eta, mu_star, alpha_fs)
from .grid import GridConfig, CylinderGrid, build_grid, pressure_array


class FlowError(RuntimeError):
    pass


class MonotonicityError(FlowError):
    pass


@dataclass
class FlowState:
    u: np.ndarray
    t: float
    grid: CylinderGrid = field(repr=False)
    cached: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.min(self.u) > 0:
            raise FlowError("density must stay positive")


@dataclass
class FlowConfig:
    d: int = 2
    p: float = 4.0
    Lam: float = 1.0 / 6.0
    grid: GridConfig = field(default_factory=lambda: GridConfig(-8.0, 16.0, 2401, "point", 1))
    t0: float = 1.0          # Barenblatt scale of the initial datum
    tmax: float = 1.0
    dt: float = 2e-3
    theta: float = 0.5
    startup_steps: int = 2   # backward Euler steps damping stiff modes near s_min
    bump_amp: float = 0.05
    bump_mode: int = 0
    bump_center: float = 0.5
    bump_width: float = 1.0
    record_every: int = 1
    stride: int = 5
    monotone_gate: Optional[bool] = None
    monotone_slack: float = 1e-7
    newton_tol: float = 1e-12
    seed: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, dct):
        dct = dict(dct)
        dct["grid"] = GridConfig(**dct["grid"])
        return cls(**dct)


def _manifold_for(d: int) -> ManifoldData:
    return ManifoldData.circle() if d == 2 else ManifoldData.sphere(d)


class FlowSolver:
    def __init__(self, grid: CylinderGrid):
        self.grid = grid
        self.n = grid.n
        self.m = 1 - 1 / grid.n
        self.L = grid.L_matrix("noflux")
        self.N = grid.shape[0] * grid.shape[1]
        self.I = sp.identity(self.N, format="csc")

    def mass(self, u) -> float:
        return self.grid.mass(u)

    def step(self, state: FlowState, dt: float, theta: float = 0.5, tol: float = 1e-12,
             max_halvings: int = 20, _depth: int = 0) -> FlowState:
        """Advance by dt; a rejected step is retried as two half steps."""
        out = self._try_step(state, dt, theta, tol)
        if out is not None:
            return out
        if _depth >= max_halvings:
            raise FlowError(f"step rejected after {max_halvings} halvings at t = {state.t}; "
                            f"min u = {state.u.min():.3e}")
        half = self.step(state, dt / 2, theta, tol, max_halvings, _depth + 1)
        return self.step(half, dt / 2, theta, tol, max_halvings, _depth + 1)

    def _try_step(self, state, dt, theta, tol):
        m, L = self.m, self.L
        u0 = state.u.ravel()
        rhs0 = u0 + dt * (1 - theta) * (L @ u0 ** m) if theta < 1 else u0
        v = u0.copy()
        for _ in range(30):
            F = v - dt * theta * (L @ v ** m) - rhs0
            J = self.I - dt * theta * (L @ sp.diags(m * v ** (m - 1)))
            dv = splu(J.tocsc()).solve(-F)
            v = v + dv
            if not np.all(v > 0):
                return None
            if np.max(np.abs(dv) / v) < tol:
                break
        else:
            if np.max(np.abs(dv) / v) > 1e3 * tol:
                return None
        return FlowState(v.reshape(state.u.shape), state.t + dt, self.grid)

    def diagnostics(self, state: FlowState) -> dict:
        g, u = self.grid, state.u
        p = pressure_array(u, self.n)
        rec = {
            "t": state.t,
            "mass": g.mass(u),
            "fisher": g.fisher(u),
            "bigK": g.big_K(p, warn=False),
            "b_left": g.boundary_b(p, 0),
            "b_right": g.boundary_b(p, -1),
            "c_left": g.boundary_c(u, 0),
            "c_right": g.boundary_c(u, -1),
        }
        state.cached.update(rec)
        return rec


def initial_state(cfg: FlowConfig, grid: CylinderGrid, manifold: ManifoldData):
    P = grid.params
    cs = normalize_c_star(P, manifold)
    u = barenblatt(cfg.t0, grid.r, P, cs)[:, None] * np.ones(grid.shape)
    if cfg.bump_amp:
        env = np.exp(-0.5 * ((grid.s - cfg.bump_center) / cfg.bump_width) ** 2)
        y = grid.ang.harmonic(cfg.bump_mode) * math.sqrt(grid.ang.vol)
        u = u * np.exp(cfg.bump_amp * env[:, None] * y[None, :])
    u = u / grid.mass(u)
    return FlowState(u, 0.0, grid), cs


@dataclass
class FlowRun:
    config: FlowConfig
    records: list
    eta_mu_star: float
    c_star: float
    monotone: bool
    max_increase: float
    identity_errors: list

    COLUMNS = ("t", "mass", "fisher", "bigK", "b_left", "b_right", "dIdt_est")

    def rows(self):
        return [tuple(r.get(c, math.nan) for c in self.COLUMNS) for r in self.records]


def dissipation_rate(n: float, K: float) -> float:
    """-2 (n-1)^{n-1} K."""
    return -2 * (n - 1) ** (n - 1) * K


def run(cfg: FlowConfig, manifold: Optional[ManifoldData] = None, states: Optional[list] = None) -> FlowRun:
    manifold = manifold or _manifold_for(cfg.d)
    P = params_from_cylinder(cfg.d, cfg.p, cfg.Lam)
    grid = build_grid(cfg.grid, P, manifold)
    solver = FlowSolver(grid)
    state, cs = initial_state(cfg, grid, manifold)
    gate = cfg.monotone_gate
    if gate is None:
        gate = P.alpha <= alpha_fs(manifold, p=cfg.p) * (1 + 1e-12)
    nsteps = int(round(cfg.tmax / cfg.dt))
    recs = [solver.diagnostics(state)]
    if states is not None:
        states.append(state)
    for k in range(1, nsteps + 1):
        th = 1.0 if k <= cfg.startup_steps else cfg.theta
        state = solver.step(state, cfg.dt, th, cfg.newton_tol)
        if k % cfg.record_every == 0 or k == nsteps:
            recs.append(solver.diagnostics(state))
            if states is not None:
                states.append(state)
    # centered differences of I at the given stride (in records)
    st = cfg.stride
    errs = []
    for i in range(st, len(recs) - st):
        a, b = recs[i - st], recs[i + st]
        est = (b["fisher"] - a["fisher"]) / (b["t"] - a["t"])
        recs[i]["dIdt_est"] = est
        if i - st >= cfg.startup_steps:
            pred = dissipation_rate(grid.n, recs[i]["bigK"])
            errs.append((recs[i]["t"], est, pred))
    I0 = recs[0]["fisher"]
    incr = max((recs[i + 1]["fisher"] - recs[i]["fisher"] for i in range(len(recs) - 1)), default=0.0)
    monotone = incr <= cfg.monotone_slack * I0
    out = FlowRun(cfg, recs, eta(P) * mu_star(P.Lam, P.p, manifold.vol), cs, monotone, incr, errs)
    if gate and not monotone:
        raise MonotonicityError(f"Fisher information increased by {incr:.3e} > "
                                f"{cfg.monotone_slack:.1e} * I(0)")
    return out
