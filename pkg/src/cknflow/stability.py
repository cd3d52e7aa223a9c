"""Linear stability of the symmetric profile through angular-mode decomposition.

Each angular mode k gives a one-dimensional Schrodinger operator
H_k = -d^2/ds^2 + lambda_k + Lambda - (p-1) phi^{p-2}, discretized by the
standard three-point Laplacian with Dirichlet truncation.  The lowest eigenvalue
is computed by LAPACK's Sturm-sequence bisection with inverse iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .closed_forms import ManifoldData, DomainError, phi_lambda, critical_exponent


@dataclass
class GroundState:
    eigenvalue: float
    eigenvector: np.ndarray
    s: np.ndarray
    edge: bool


@dataclass
class SpectralReport:
    Lam: float
    p: float
    manifold: ManifoldData
    modes: list = field(default_factory=list)   # (k, lambda_k, e_k)
    threshold: Optional[float] = None
    flags: list = field(default_factory=list)

    def rows(self):
        return [(self.Lam, self.p, k, lk, ek) for k, lk, ek in self.modes]


def sphere_mode_eigenvalue(k: int, d: int, length: float = 2 * math.pi) -> float:
    if k < 0 or d < 2:
        raise DomainError("need k >= 0 and d >= 2")
    if d == 2:
        return k * k * (2 * math.pi / length) ** 2
    return float(k * (k + d - 2))


def mode_eigenvalue(k: int, manifold: ManifoldData) -> float:
    """Angular eigenvalue lambda_k for spheres and circles; abstract M knows only k <= 1."""
    if manifold.dim == 1:
        return k * k * manifold.lambda1
    if manifold.is_sphere:
        return sphere_mode_eigenvalue(k, manifold.dim + 1)
    if k == 0:
        return 0.0
    if k == 1:
        return manifold.lambda1
    raise DomainError("abstract manifolds only carry lambda_0 = 0 and lambda_1")


def schrodinger_ground(s: np.ndarray, V: np.ndarray, shift: float = 0.0) -> GroundState:
    """Lowest eigenpair of -d^2/ds^2 + shift - V on a uniform grid (Dirichlet ends)."""
    s = np.asarray(s, dtype=float)
    V = np.asarray(V, dtype=float)
    if s.shape != V.shape or s.size < 3:
        raise ValueError("s and V must be matching 1-D arrays")
    h = s[1] - s[0]
    diag = 2.0 / h ** 2 + shift - V
    off = np.full(s.size - 1, -1.0 / h ** 2)
    w, v = eigh_tridiagonal(diag, off, select="i", select_range=(0, 0))
    vec = v[:, 0] / math.sqrt(h)
    if vec[np.argmax(np.abs(vec))] < 0:
        vec = -vec
    span = s[-1] - s[0]
    near = (s < s[0] + 0.1 * span) | (s > s[-1] - 0.1 * span)
    edge = bool(np.sum(vec[near] ** 2) * h > 0.01)
    return GroundState(float(w[0]), vec, s, edge)


def _domain(Lam: float, p: float, h: float):
    alpha = (p - 2) / 2 * math.sqrt(Lam)
    S = max(20.0, 40.0 / alpha)
    n = int(round(2 * S / h))
    return np.linspace(-S, S, n + 1)[1:-1]


def linearized_ground(Lam: float, p: float, shift: float = 0.0, h: float = 0.01,
                      richardson: bool = True):
    """Lowest eigenvalue of -d^2 + Lambda + shift - (p-1) phi^{p-2}; returns (value, edge flag)."""
    def solve(hh):
        s = _domain(Lam, p, hh)
        V = (p - 1) * phi_lambda(s, p, Lam) ** (p - 2)
        return schrodinger_ground(s, V, Lam + shift)
    g1 = solve(h)
    if not richardson:
        return g1.eigenvalue, g1.edge
    g2 = solve(h / 2)
    return (4 * g2.eigenvalue - g1.eigenvalue) / 3, g1.edge or g2.edge


def mode_spectrum(Lam: float, p: float, manifold: ManifoldData, k_max: int,
                  h: float = 0.01) -> SpectralReport:
    if not Lam > 0:
        raise DomainError("need Lambda > 0")
    if not 2 < p < critical_exponent(manifold.dim + 1):
        raise DomainError("p outside (2, 2*)")
    if k_max < 1:
        raise DomainError("need k_max >= 1")
    rep = SpectralReport(Lam, p, manifold)
    for k in range(k_max + 1):
        lk = mode_eigenvalue(k, manifold)
        # scale h with the profile width so the relative accuracy is uniform in Lambda
        e, edge = linearized_ground(Lam, p, lk, h=h / max(1.0, math.sqrt(Lam)))
        rep.modes.append((k, lk, e))
        if edge:
            rep.flags.append(f"edge-of-continuum in mode {k}")
    return rep


def analytic_mode_energy(Lam: float, p: float, lam_k: float) -> float:
    return lam_k - (p * p - 4) * Lam / 4


def fs_threshold_numeric(p: float, manifold: ManifoldData, h: float = 0.01,
                         rtol: float = 1e-9, max_iter: int = 100) -> float:
    """Root of Lambda -> e_1(Lambda) by a bracketed secant (Illinois) iteration."""
    lam1 = mode_eigenvalue(1, manifold)

    def e1(Lam):
        return linearized_ground(Lam, p, lam1, h=h / max(1.0, math.sqrt(Lam)))[0]

    lo, hi = 1e-3 * lam1, 1e-3 * lam1
    flo = e1(lo)
    if not flo > 0:
        raise RuntimeError(f"bracketing failed: e_1({lo}) = {flo} is not positive")
    fhi = flo
    for _ in range(60):
        hi *= 2.0
        fhi = e1(hi)
        if fhi < 0:
            break
        lo, flo = hi, fhi
    else:
        raise RuntimeError(f"bracketing failed: e_1 stays positive up to {hi}")
    side = 0
    x = hi
    for _ in range(max_iter):
        x = hi - fhi * (hi - lo) / (fhi - flo)
        fx = e1(x)
        if fx > 0:
            lo, flo = x, fx
            if side == 1:
                fhi /= 2
            side = 1
        else:
            hi, fhi = x, fx
            if side == -1:
                flo /= 2
            side = -1
        if hi - lo < rtol * x or fx == 0:
            break
    return x


@dataclass
class SecondVariation:
    Lam: float
    p: float
    coefficient: float
    predicted: float
    norm_pp: float
    raw: list


def second_variation_check(Lam: float, p: float, manifold: ManifoldData,
                           eps_list: Sequence[float] = (1e-3,), h: float = 0.02,
                           n_ang: int = 16, S: Optional[float] = None) -> SecondVariation:
    """Second difference of the discrete G along phi^{p/2} phi_1, Richardson in epsilon."""
    from .minimize import CylinderProblem

    if any(not 0 < e <= 0.1 for e in eps_list):
        raise DomainError("eps must lie in (0, 0.1]")
    prob = CylinderProblem.build(Lam, p, manifold, h=h, n_ang=n_ang, S=S)
    phi = np.repeat(phi_lambda(prob.s, p, Lam)[:, None], prob.shape[1], axis=1)
    y1 = prob.ang.harmonic(1)
    psi = phi ** (p / 2) * y1[None, :]
    G0 = prob.functional_G(phi)
    raw = []
    for eps in eps_list:
        vals = []
        for e in (eps, eps / 2):
            gp = prob.functional_G(phi + e * psi)
            gm = prob.functional_G(phi - e * psi)
            vals.append((gp + gm - 2 * G0) / (2 * e * e))
        raw.append((eps, vals[0], (4 * vals[1] - vals[0]) / 3))
    coef = raw[0][2]
    norm_pp = float(np.sum(phi_lambda(prob.s, p, Lam) ** p) * prob.h)
    lam1 = mode_eigenvalue(1, manifold)
    return SecondVariation(Lam, p, coef, norm_pp * (lam1 - (p * p - 4) * Lam / 4), norm_pp, raw)
