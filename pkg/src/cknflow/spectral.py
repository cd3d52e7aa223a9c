"""Keller-Lieb-Thirring estimates on cylinders and Hardy inequalities with potentials."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .closed_forms import (ManifoldData, DomainError, klt_closed_forms, lambda_fs, mu_r,
                           mu_star, fs_constants)
from .stability import schrodinger_ground


class BracketError(RuntimeError):
    pass


def p_of_q(q: float) -> float:
    return 2 * q / (q - 1)


def mu_threshold(q: float, manifold: ManifoldData) -> float:
    """vol^{1/q} mu_R(Lambda_FS): the symmetric branch ends here for spheres and circles."""
    p = p_of_q(q)
    return manifold.vol ** (1 / q) * mu_r(lambda_fs(manifold, p), p)


def mustar_bracket(q: float, manifold: ManifoldData, lambda_star: Optional[float] = None):
    """(lower, upper) bounds for the threshold mu_star, from its beta-th power."""
    K = klt_closed_forms(q)
    if lambda_star is None:
        n = 2 * q  # n = 2p/(p-2) with p = 2q/(q-1)
        lambda_star = fs_constants(manifold.dim + 1, n, manifold).lambda_star
    c = manifold.vol ** (2 / (2 * q - 1)) * K.mu1 ** K.beta
    lo = (c * lambda_star / (2 * (q - 1))) ** (1 / K.beta)
    hi = (c * manifold.lambda1 / (2 * q - 1)) ** (1 / K.beta)
    return lo, hi


@dataclass
class MuTable:
    """Samples (Lambda, mu(Lambda)) above the symmetric threshold, from direct minimization."""
    q: float
    manifold: ManifoldData
    Lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        order = np.argsort(self.mu)
        self.mu = np.asarray(self.mu, dtype=float)[order]
        self.Lam = np.asarray(self.Lam, dtype=float)[order]
        self._inv = PchipInterpolator(self.mu, self.Lam, extrapolate=False)

    def __call__(self, mu):
        return self._inv(mu)


def build_mu_table(q: float, manifold: ManifoldData, Lam_grid: Sequence[float], **minimize_kw) -> MuTable:
    from .minimize import minimize, MinimizeConfig, CylinderProblem

    p = p_of_q(q)
    lfs = lambda_fs(manifold, p)
    Ls, mus = [lfs], [mu_star(lfs, p, manifold.vol)]
    for L in Lam_grid:
        if L <= lfs:
            continue
        prob = CylinderProblem.build(L, p, manifold, h=minimize_kw.get("h", 0.05),
                                     n_ang=minimize_kw.get("n_ang", 16))
        res = minimize(MinimizeConfig(L, p, manifold, init="mode1", **minimize_kw), prob)
        Ls.append(L)
        mus.append(res.mu_estimate)
    return MuTable(q, manifold, np.array(Ls), np.array(mus))


def lambda_of_mu(mu: float, q: float, manifold: ManifoldData, table: Optional[MuTable] = None):
    """Returns (Lambda(mu), regime) with regime 'closed_form' or 'inverted'."""
    if not mu > 0:
        raise DomainError("need mu > 0")
    d = manifold.dim + 1
    if not q > max(1.0, d / 2):
        raise DomainError(f"need q > max(1, d/2), got {q}")
    K = klt_closed_forms(q)
    if mu <= mu_threshold(q, manifold) * (1 + 1e-14):
        return float(K.lambda_r(manifold.vol ** (-1 / q) * mu)), "closed_form"
    if table is None:
        raise BracketError(f"mu = {mu} is above the symmetric threshold and no table was given")
    if not table.mu[0] <= mu <= table.mu[-1]:
        raise BracketError(f"mu = {mu} outside the table range [{table.mu[0]}, {table.mu[-1]}]")
    return float(table(mu)), "inverted"


@dataclass
class KltCheck:
    lhs: float
    rhs: float
    ok: bool
    edge: bool


def lq_norm(s: np.ndarray, V: np.ndarray, q: float) -> float:
    h = s[1] - s[0]
    return float((np.sum(np.abs(V) ** q) * h) ** (1 / q))


def klt_check_1d(V, q: float, s: Optional[np.ndarray] = None, tol: float = 1e-6,
                 L: float = 40.0, h: float = 0.005) -> KltCheck:
    """Compare lambda_1[V] (minus the lowest eigenvalue of -d^2 - V) with Lambda_R(|V|_q).

    V is either an array sampled on s or a callable; callables are solved on two grids
    and Richardson-extrapolated.
    """
    K = klt_closed_forms(q)
    if callable(V):
        vals = []
        for hh in (h, h / 2):
            ss = np.arange(-L, L + hh / 2, hh)
            vals.append(schrodinger_ground(ss, V(ss), 0.0))
        e = (4 * vals[1].eigenvalue - vals[0].eigenvalue) / 3
        edge = vals[1].edge
        ss = np.arange(-L, L + h / 4, h / 2)
        Vs = V(ss)
    else:
        if s is None:
            raise ValueError("sampled V needs its s grid")
        g = schrodinger_ground(s, V, 0.0)
        e, edge, ss, Vs = g.eigenvalue, g.edge, s, np.asarray(V)
    if np.min(Vs) < 0:
        raise DomainError("V must be nonnegative")
    lhs = max(0.0, -e)
    rhs = float(K.lambda_r(lq_norm(ss, Vs, q)))
    return KltCheck(lhs, rhs, lhs <= rhs + tol, edge)


# ---------------------------------------------------------------------------
# Hardy inequality with potential


def hardy_mu(V: Callable, q: float, d: int, s_range=(-40.0, 40.0), h: float = 1e-3) -> float:
    """(int V^q |x|^{-d} dx)^{1/q} for radial V(r), integrated in s = log r."""
    s = np.arange(s_range[0], s_range[1] + h / 2, h)
    Vq = np.asarray(V(np.exp(s)), dtype=float) ** q
    from .closed_forms import sphere_volume
    val = sphere_volume(d) * np.sum(Vq) * h
    return float(val ** (1 / q))


@dataclass
class HardyCertificate:
    d: int
    q: float
    mu: float
    Lambda_of_mu: float
    regime: str
    gap: float

    def to_dict(self):
        return {"d": self.d, "q": self.q, "mu": self.mu, "Lambda_of_mu": self.Lambda_of_mu,
                "regime": self.regime, "gap": self.gap, "a_c_squared": ((self.d - 2) / 2) ** 2}


def hardy_gap(V: Optional[Callable], q: float, d: int, table: Optional[MuTable] = None) -> HardyCertificate:
    """a_c^2 - Lambda(mu): the coefficient of int |u|^2/|x|^2 left after absorbing V."""
    if d < 2:
        raise DomainError("only d >= 2 is supported")
    if not q > max(1.0, d / 2):
        raise DomainError(f"need q > max(1, d/2), got {q}")
    a_c2 = ((d - 2) / 2) ** 2
    if V is None:
        return HardyCertificate(d, q, 0.0, 0.0, "closed_form", a_c2)
    mu = hardy_mu(V, q, d)
    if mu == 0:
        return HardyCertificate(d, q, 0.0, 0.0, "closed_form", a_c2)
    lam, regime = lambda_of_mu(mu, q, ManifoldData.sphere(d), table)
    return HardyCertificate(d, q, mu, lam, regime, a_c2 - lam)


def hardy_quadratic_form(u: Callable, du: Callable, V: Callable, gap: float, d: int,
                         s_range=(-30.0, 8.0), h: float = 1e-3) -> float:
    """int |u'|^2 - V u^2/r^2 - gap u^2/r^2 over R^d for radial u (log-radial quadrature)."""
    from .closed_forms import sphere_volume
    s = np.arange(s_range[0], s_range[1] + h / 2, h)
    r = np.exp(s)
    ur, dur, Vr = u(r), du(r), V(r)
    dens = dur ** 2 * r ** d - (Vr + gap) * ur ** 2 * r ** (d - 2)
    return float(sphere_volume(d) * np.sum(dens) * h)


@dataclass
class KltCurve:
    q: float
    manifold: ManifoldData
    samples: list = field(default_factory=list)   # (mu, Lambda, regime)
    mu_star_threshold: tuple = (math.nan, math.nan)

    def rows(self):
        return list(self.samples)


def klt_curve(q: float, manifold: ManifoldData, mus: Sequence[float],
              table: Optional[MuTable] = None) -> KltCurve:
    lo, hi = mustar_bracket(q, manifold)
    cur = KltCurve(q, manifold, mu_star_threshold=(lo, hi))
    for mu in mus:
        try:
            lam, regime = lambda_of_mu(mu, q, manifold, table)
        except BracketError:
            continue
        cur.samples.append((float(mu), lam, regime))
    return cur
