"""Direct minimization of the cylinder quotient and symmetry-breaking detection.

The quotient is
    R[phi] = (|d_s phi|^2 + |grad phi|^2 + Lambda |phi|^2) / |phi|_p^2
on a truncated cylinder [-S, S] x M with measure ds dv.  The descent direction is
the gradient preconditioned by A^{-1}, A = -d_s^2 - Delta + Lambda, which makes a
unit step coincide with the nonlinear inverse iteration phi <- A^{-1} phi^{p-1};
Armijo backtracking (with step doubling) keeps R monotonically decreasing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .closed_forms import ManifoldData, DomainError, mu_star, lambda_fs, critical_exponent
from .grid import PointAngular, CircleAngular, AxisymAngular


@dataclass
class CylinderProblem:
    Lam: float
    p: float
    manifold: ManifoldData
    s: np.ndarray
    ang: object

    @classmethod
    def build(cls, Lam: float, p: float, manifold: ManifoldData, h: float = 0.05,
              n_ang: int = 16, S: Optional[float] = None, angular: Optional[str] = None):
        if not Lam > 0:
            raise DomainError("need Lambda > 0")
        if not 2 < p < critical_exponent(manifold.dim + 1):
            raise DomainError("p outside (2, 2*)")
        if S is None:
            # the profile decays like e^{-sqrt(Lambda)|s|}; keep e^{-2 sqrt(Lambda) S} < 1e-14
            S = max(10.0, 16.0 / math.sqrt(Lam))
        ns = 2 * int(math.ceil(S / h)) + 1
        s = np.linspace(-S, S, ns)
        if angular is None:
            angular = "circle" if manifold.dim == 1 else ("axisym" if manifold.is_sphere else "point")
        if angular == "circle":
            ang = CircleAngular(n_ang, manifold.vol)
        elif angular == "axisym":
            ang = AxisymAngular(n_ang, manifold.dim + 1)
        elif angular == "point":
            ang = PointAngular(manifold.vol)
        else:
            raise DomainError(f"unknown angular kind {angular!r}")
        return cls(float(Lam), float(p), manifold, s, ang)

    def __post_init__(self):
        self.h = float(self.s[1] - self.s[0])
        self.shape = (self.s.size, self.ang.n)
        self.w = self.h * self.ang.weights[None, :]
        self.mu_star = mu_star(self.Lam, self.p, self.manifold.vol)
        self._factor()

    # -- discrete energy ------------------------------------------------------------

    def energy_parts(self, phi):
        h, W = self.h, self.ang.weights
        ds = float(np.sum(np.diff(phi, axis=0) ** 2 * W[None, :]) / h)
        grad = float(h * np.sum(self.ang.energy(phi, phi)))
        l2 = float(np.sum(self.w * phi * phi))
        lp = float(np.sum(self.w * np.abs(phi) ** self.p))
        return ds, grad, l2, lp

    def apply_A(self, phi):
        """Euler-Lagrange operator -d_s^2 - Delta + Lambda (natural boundary rows)."""
        h = self.h
        flux = np.diff(phi, axis=0) / h ** 2
        out = np.zeros_like(phi)
        out[:-1] -= flux
        out[1:] += flux
        return out - self.ang.lap(phi) + self.Lam * phi

    def rayleigh(self, phi) -> float:
        ds, grad, l2, lp = self.energy_parts(phi)
        if lp == 0:
            raise ValueError("zero field")
        return (ds + grad + self.Lam * l2) / lp ** (2 / self.p)

    def functional_G(self, phi) -> float:
        ds, grad, l2, lp = self.energy_parts(phi)
        return ds + grad + self.Lam * l2 - self.mu_star * lp ** (2 / self.p)

    def gradient(self, phi):
        """Gradient of R with respect to the nodal values (Euclidean)."""
        ds, grad, l2, lp = self.energy_parts(phi)
        E = ds + grad + self.Lam * l2
        N2 = lp ** (2 / self.p)
        dE = 2 * self.w * self.apply_A(phi)
        dN2 = 2 * lp ** (2 / self.p - 1) * self.w * np.abs(phi) ** (self.p - 2) * phi
        return (dE - E / N2 * dN2) / N2

    # -- preconditioner ---------------------------------------------------------------

    def _factor(self):
        W = self.ang.weights
        sq = np.sqrt(W)
        B = -(sq[:, None] * self.ang.lap_matrix / sq[None, :])
        B = 0.5 * (B + B.T)
        evals, Q = np.linalg.eigh(B)
        self._ang_evals = np.maximum(evals, 0.0)
        self._Q, self._sqW = Q, sq
        ns, h = self.s.size, self.h
        main = np.full(ns, 2.0 / h ** 2)
        main[0] = main[-1] = 1.0 / h ** 2
        off = np.full(ns - 1, -1.0 / h ** 2)
        blocks = [sp.diags([off, main + lam + self.Lam, off], [-1, 0, 1]) for lam in self._ang_evals]
        self._lu = splu(sp.block_diag(blocks, format="csc"))

    def to_modes(self, phi):
        return (phi * self._sqW[None, :]) @ self._Q

    def from_modes(self, c):
        return (c @ self._Q.T) / self._sqW[None, :]

    def solve_A(self, rhs):
        c = self.to_modes(rhs)
        sol = self._lu.solve(np.ascontiguousarray(c.T).ravel()).reshape(c.shape[1], c.shape[0]).T
        return self.from_modes(sol)

    # -- diagnostics ----------------------------------------------------------------

    def angular_mean(self, phi):
        return (phi @ self.ang.weights) / self.ang.vol

    def symmetric_fraction(self, phi) -> float:
        m = self.angular_mean(phi)
        return float(self.h * self.ang.vol * np.sum(m * m) / np.sum(self.w * phi * phi))

    def mode1_amplitude(self, phi) -> float:
        """L^2 norm of the lambda_1 angular component relative to |phi|."""
        c = self.to_modes(phi)
        lam1 = self.manifold.lambda1
        sel = np.abs(self._ang_evals - lam1) < 1e-6 * max(1.0, lam1)
        return float(math.sqrt(self.h * np.sum(c[:, sel] ** 2) / np.sum(self.w * phi * phi)))

    def el_residual(self, phi, rescale: bool = True) -> float:
        """L^2 norm of A phi - phi^{p-1} after scaling phi to solve the equation."""
        if rescale:
            ds, grad, l2, lp = self.energy_parts(phi)
            c = ((ds + grad + self.Lam * l2) / lp) ** (1 / (self.p - 2))
            phi = c * phi
        r = self.apply_A(phi) - np.abs(phi) ** (self.p - 2) * phi
        return float(math.sqrt(np.sum(self.w * r * r)))

    def l2norm(self, phi) -> float:
        return float(math.sqrt(np.sum(self.w * phi * phi)))

    def recentre(self, phi):
        """Shift by whole nodes so the |phi|^p-weighted mean of s sits at the nearest node to 0."""
        wts = np.sum(self.w * np.abs(phi) ** self.p, axis=1)
        sbar = float(np.sum(wts * self.s) / np.sum(wts))
        k = int(round(sbar / self.h))
        if k == 0:
            return phi
        out = np.zeros_like(phi)
        if k > 0:
            out[:-k] = phi[k:]
        else:
            out[-k:] = phi[:k]
        return out

    def normalize(self, phi):
        lp = float(np.sum(self.w * np.abs(phi) ** self.p))
        return phi / lp ** (1 / self.p)


# ---------------------------------------------------------------------------


@dataclass
class MinimizeConfig:
    Lam: float
    p: float
    manifold: ManifoldData
    seed: int = 0
    init: str = "symmetric"     # symmetric | mode1 | random
    h: float = 0.05
    n_ang: int = 16
    S: Optional[float] = None
    max_iters: int = 20000
    gtol: float = 1e-9
    el_tol: float = 1e-5
    restrict_symmetric: Optional[bool] = None   # default: True for init="symmetric"


@dataclass
class MinimizeResult:
    mu_estimate: float
    minimizer: np.ndarray
    symmetric_fraction: float
    el_residual: float
    iterations: int
    converged: bool
    mode1_amp: float = 0.0
    initial_quotient: float = math.nan
    problem: Optional[CylinderProblem] = field(default=None, repr=False)


def initial_guess(prob: CylinderProblem, init: str, seed: int = 0):
    rng = np.random.default_rng(seed)
    base = 1.0 / np.cosh(0.5 * math.sqrt(prob.Lam) * prob.s)
    phi = np.repeat(base[:, None], prob.shape[1], axis=1)
    if init == "symmetric":
        return phi
    if init in ("mode1", "mode1-perturbed"):
        if prob.ang.n == 1:
            raise DomainError("mode-1 perturbation needs an angular grid")
        y = prob.ang.harmonic(1) * math.sqrt(prob.ang.vol)
        return phi * (1 + 0.3 * y[None, :])
    if init == "random":
        g = np.zeros(prob.shape)
        env = np.exp(-0.5 * (prob.s / (2 / math.sqrt(prob.Lam))) ** 2)
        kmax = min(4, prob.ang.n)
        for k in range(kmax if prob.ang.n > 1 else 1):
            y = prob.ang.harmonic(k) * math.sqrt(prob.ang.vol)
            g += rng.uniform(-0.3, 0.3) * env[:, None] * y[None, :]
        return phi * np.exp(g)
    raise DomainError(f"unknown init {init!r}")


def minimize(config: MinimizeConfig, problem: Optional[CylinderProblem] = None,
             phi0: Optional[np.ndarray] = None) -> MinimizeResult:
    c = config
    prob = problem or CylinderProblem.build(c.Lam, c.p, c.manifold, h=c.h, n_ang=c.n_ang, S=c.S)
    sym = c.init == "symmetric" if c.restrict_symmetric is None else c.restrict_symmetric
    # the symmetric subspace is invariant for the exact iteration; projecting keeps
    # rounding from seeding the broken branch
    proj = (lambda f: np.repeat(prob.angular_mean(f)[:, None], prob.shape[1], axis=1)) if sym else (lambda f: f)
    phi = prob.normalize(proj(np.abs(phi0 if phi0 is not None else initial_guess(prob, c.init, c.seed))))
    R = prob.rayleigh(phi)
    R0 = R
    converged = False
    tau = 1.0
    it = 0
    for it in range(1, c.max_iters + 1):
        g = prob.gradient(phi)
        # preconditioned direction; with tau = 1 the update is R * A^{-1} phi^{p-1} - phi
        d = proj(-prob.solve_A(g / prob.w) / 2)
        slope = float(np.sum(g * d))
        gnorm = math.sqrt(max(-slope, 0.0))
        if gnorm < c.gtol:
            converged = True
            break
        tau = min(2 * tau, 8.0)
        while True:
            trial = prob.normalize(np.abs(phi + tau * d))
            Rt = prob.rayleigh(trial)
            if Rt <= R + 1e-4 * tau * slope or tau < 1e-8:
                break
            tau /= 2
        if Rt > R:
            # a decrease below the rounding level of R cannot be resolved by the search
            converged = -slope <= 100 * np.finfo(float).eps * abs(R)
            break
        phi, R = prob.recentre(trial), Rt
    res = prob.el_residual(phi)
    ok = converged and res < c.el_tol * prob.l2norm(phi) * (prob.rayleigh(phi) ** (1 / (c.p - 2)))
    return MinimizeResult(prob.rayleigh(phi), phi, prob.symmetric_fraction(phi), res, it, bool(ok),
                          prob.mode1_amplitude(phi) if prob.ang.n > 1 else 0.0, R0, prob)


def rayleigh_quotient(phi, problem: CylinderProblem) -> float:
    return problem.rayleigh(np.asarray(phi, dtype=float))


def functional_G(phi, problem: CylinderProblem) -> float:
    return problem.functional_G(np.asarray(phi, dtype=float))


def el_residual(phi, problem: CylinderProblem, rescale: bool = True) -> float:
    return problem.el_residual(np.asarray(phi, dtype=float), rescale)


# ---------------------------------------------------------------------------


@dataclass
class BranchPoint:
    Lam: float
    mu_num: float
    mu_star: float
    sym_fraction: float
    mode1_amp: float
    el_residual: float
    converged: bool

    def row(self):
        return (self.Lam, self.mu_num, self.mu_star, self.sym_fraction, self.mode1_amp,
                self.el_residual, self.converged)


BRANCH_COLUMNS = ["Lambda", "mu_num", "mu_star", "sym_fraction", "mode1_amp", "el_residual", "converged"]


@dataclass
class SweepResult:
    points: list
    onset: Optional[float]
    onset_extrapolated: Optional[float]
    margins: list


def _sweep_point(args):
    L, p, manifold, h, n_ang, seed, max_iters, gtol = args
    base = dict(Lam=L, p=p, manifold=manifold, seed=seed, h=h, n_ang=n_ang,
                max_iters=max_iters, gtol=gtol)
    prob = CylinderProblem.build(L, p, manifold, h=h, n_ang=n_ang)
    sym = minimize(MinimizeConfig(init="symmetric", **base), prob)
    brk = minimize(MinimizeConfig(init="mode1", **base), prob)
    best = brk if brk.mu_estimate < sym.mu_estimate else sym
    margin = 3 * abs(sym.mu_estimate - prob.mu_star)
    pt = BranchPoint(L, best.mu_estimate, prob.mu_star, best.symmetric_fraction,
                     best.mode1_amp, best.el_residual, best.converged)
    return pt, margin


def bifurcation_sweep(p: float, manifold: ManifoldData, Lam_grid: Sequence[float],
                      h: float = 0.05, n_ang: int = 16, seed: int = 0, max_iters: int = 20000,
                      gtol: float = 1e-9, workers: int = 1) -> SweepResult:
    lfs = lambda_fs(manifold, p)
    for L in Lam_grid:
        if not 0 < L < 4 * lfs:
            raise DomainError("Lambda grid must lie in (0, 4 Lambda_FS)")

    args = [(L, p, manifold, h, n_ang, seed, max_iters, gtol) for L in Lam_grid]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as ex:
            out = list(ex.map(_sweep_point, args))
    else:
        out = [_sweep_point(a) for a in args]
    points = [o[0] for o in out]
    margins = [o[1] for o in out]
    onset = None
    for pt, mg in zip(points, margins):
        if pt.mu_star - pt.mu_num > mg + 1e-8 * pt.mu_star:
            onset = pt.Lam
            break
    # amp^2 grows linearly past a pitchfork: extrapolate to zero from the broken points
    broken = [(pt.Lam, pt.mode1_amp ** 2) for pt in points if pt.mode1_amp > 1e-3]
    extrap = None
    if len(broken) >= 2:
        (l0, a0), (l1, a1) = broken[0], broken[1]
        if a1 != a0:
            extrap = l0 - a0 * (l1 - l0) / (a1 - a0)
    return SweepResult(points, onset, extrap, margins)
