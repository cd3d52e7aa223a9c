"""Closed-form constants, curves and profiles for the CKN problem.

Everything here is plain real arithmetic on floats (numpy is only used to
vectorize profile evaluation).  The Gamma function is computed internally by
a Lanczos approximation so that the sharp constants do not depend on the
platform's libm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate


class DomainError(ValueError):
    """Raised when parameters fall outside the admissible range."""


# ---------------------------------------------------------------------------
# Gamma function

# Lanczos coefficients, g = 607/128, 15 terms.
_LANCZOS_G = 607.0 / 128.0
_LANCZOS_C0 = 0.999999999999997092
_LANCZOS_COF = (
    57.1562356658629235, -59.5979603554754912, 14.1360979747417471,
    -0.491913816097620199, 0.339946499848118887e-4, 0.465236289270485756e-4,
    -0.983744753048795646e-4, 0.158088703224912494e-3, -0.210264441724104883e-3,
    0.217439618115212643e-3, -0.164318106536763890e-3, 0.844182239838527433e-4,
    -0.261908384015814087e-4, 0.368991826595316234e-5,
)
_SQRT_2PI = 2.5066282746310005


def lgamma(x: float) -> float:
    """log Gamma(x) for x > 0 (absolute error below 1e-13 on [0.5, 50])."""
    x = float(x)
    if not x > 0.0 or not math.isfinite(x):
        raise DomainError(f"lgamma needs x > 0, got {x}")
    if x < 0.5:
        # recursion keeps the series in its accurate range
        return lgamma(x + 1.0) - math.log(x)
    y = x
    tmp = x + _LANCZOS_G + 0.5
    tmp = (x + 0.5) * math.log(tmp) - tmp
    ser = _LANCZOS_C0
    for c in _LANCZOS_COF:
        y += 1.0
        ser += c / y
    return tmp + math.log(_SQRT_2PI * ser / x)


def gamma(x: float) -> float:
    return math.exp(lgamma(x))


def sphere_volume(d: int) -> float:
    """|S^{d-1}| = 2 pi^{d/2} / Gamma(d/2)."""
    return 2.0 * math.pi ** (d / 2.0) / gamma(d / 2.0)


# ---------------------------------------------------------------------------
# Parameter bundles


@dataclass(frozen=True)
class CknParams:
    d: int
    a: float
    b: float
    a_c: float
    p: float
    Lam: float
    alpha: float
    n: float
    m: float
    cylinder_only: bool = False

    def to_dict(self) -> dict:
        return {
            "d": self.d, "a": self.a, "b": self.b, "a_c": self.a_c, "p": self.p,
            "Lambda": self.Lam, "alpha": self.alpha, "n": self.n, "m": self.m,
            "cylinder_only": self.cylinder_only,
        }


def critical_exponent(d: int) -> float:
    return math.inf if d == 2 else 2.0 * d / (d - 2.0)


def derive_params(d: int, a: float, b: float) -> CknParams:
    """Parameters (p, Lambda, alpha, n, m) from the weights (a, b)."""
    if int(d) != d or d < 2:
        raise DomainError(f"need integer d >= 2, got {d}")
    d = int(d)
    a_c = (d - 2) / 2.0
    if not a < a_c:
        raise DomainError(f"need a < a_c = {a_c}, got a = {a}")
    if not (a <= b <= a + 1.0):
        raise DomainError(f"need a <= b <= a+1, got a = {a}, b = {b}")
    if b == a + 1.0:
        raise DomainError("b = a+1 gives p = 2 (n infinite); excluded")
    if b == a and (a < 0 or d == 2):
        raise DomainError("b = a with a < 0 (or d = 2): the constant is not achieved")
    p = 2.0 * d / (d - 2.0 + 2.0 * (b - a))
    Lam = (a_c - a) ** 2
    alpha = (1.0 + a - b) * (a_c - a) / (a_c - a + b)
    n = d / (1.0 + a - b)
    n_alt = 2.0 * p / (p - 2.0)
    if abs(n - n_alt) > 1e-12 * abs(n):
        raise AssertionError(f"inconsistent n: {n} vs {n_alt}")
    return CknParams(d, float(a), float(b), a_c, p, Lam, alpha, n, 1.0 - 1.0 / n)


def params_from_cylinder(d: int, p: float, Lam: float) -> CknParams:
    """Parameters from the cylinder pair (p, Lambda)."""
    if int(d) != d or d < 2:
        raise DomainError(f"need integer d >= 2, got {d}")
    d = int(d)
    if not (2.0 < p < critical_exponent(d)):
        raise DomainError(f"need 2 < p < {critical_exponent(d)}, got p = {p}")
    if not Lam > 0:
        raise DomainError(f"need Lambda > 0, got {Lam}")
    a_c = (d - 2) / 2.0
    sq = math.sqrt(Lam)
    alpha = (p - 2.0) / 2.0 * sq
    n = 2.0 * p / (p - 2.0)
    a = a_c - sq
    b = d / p - sq
    return CknParams(d, a, b, a_c, float(p), float(Lam), alpha, n, 1.0 - 1.0 / n,
                     cylinder_only=not sq < a_c + d / p)


# ---------------------------------------------------------------------------
# Manifolds


@dataclass(frozen=True)
class ManifoldData:
    dim: int
    lambda1: float
    kappa: float
    vol: float
    is_sphere: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError("manifold dimension must be >= 1")
        if not (self.lambda1 > 0 and self.vol > 0):
            raise DomainError("need lambda1 > 0 and vol > 0")
        if self.dim >= 2:
            d = self.dim + 1
            if (d - 1) / (d - 2) * self.kappa > self.lambda1 * (1 + 1e-12):
                raise DomainError("Lichnerowicz bound (d-1)/(d-2) kappa <= lambda1 violated")

    @property
    def d(self) -> int:
        return self.dim + 1

    @classmethod
    def sphere(cls, d: int) -> "ManifoldData":
        """The unit sphere S^{d-1}."""
        return cls(d - 1, float(d - 1), float(d - 2), sphere_volume(d), True)

    @classmethod
    def circle(cls, length: float = 2 * math.pi) -> "ManifoldData":
        lam1 = (2 * math.pi / length) ** 2
        return cls(1, lam1, 0.0, float(length), bool(length == 2 * math.pi))

    @classmethod
    def abstract(cls, dim: int, lambda1: float, kappa: float, vol: float) -> "ManifoldData":
        return cls(dim, float(lambda1), float(kappa), float(vol), False)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "lambda1": self.lambda1, "kappa": self.kappa,
                "vol": self.vol, "is_sphere": self.is_sphere}


# ---------------------------------------------------------------------------
# Felli-Schneider curve


def _check_a(d: int, a: float) -> float:
    if d < 2:
        raise DomainError("need d >= 2")
    a_c = (d - 2) / 2.0
    if not a < a_c:
        raise DomainError(f"need a < a_c = {a_c}, got {a}")
    return a_c


def b_fs(d: int, a: float) -> float:
    a_c = _check_a(d, a)
    x = a_c - a
    return d * x / (2.0 * math.sqrt(x * x + d - 1.0)) + a - a_c


def b_direct(d: int, a: float) -> float:
    a_c = _check_a(d, a)
    x2 = (a - a_c) ** 2
    return (d * (d - 1) + 4 * d * x2) / (6 * (d - 1) + 8 * x2) + a - a_c


def lambda_fs(manifold: ManifoldData, p: float) -> float:
    if not p > 2:
        raise DomainError("need p > 2")
    return 4.0 * manifold.lambda1 / (p * p - 4.0)


def alpha_fs(manifold: ManifoldData, p: Optional[float] = None, n: Optional[float] = None) -> float:
    """Felli-Schneider value of alpha; give either p or n."""
    if p is None:
        if n is None:
            raise ValueError("give p or n")
        p = 2.0 * n / (n - 2.0)
    return math.sqrt((p - 2.0) / (p + 2.0) * manifold.lambda1)


@dataclass(frozen=True)
class FsConstants:
    d: int
    n: float
    manifold: ManifoldData
    delta: float
    theta_star: float
    lambda_star: float
    lambda_0: float
    zeta_star: Optional[float]
    coeff_a: Optional[float]
    coeff_b: Optional[float]
    coeff_c: Optional[float]

    def lambda_theta(self, theta: float) -> float:
        M, d = self.manifold, self.d
        if d == 2:
            return self.delta * M.lambda1
        return (1 + self.delta * theta * (d - 1) / (d - 2)) * M.kappa + self.delta * (1 - theta) * M.lambda1

    def abc_at(self, theta: float) -> tuple[float, float, float]:
        """Quadratic-form coefficients (a, b, c) at a general theta (d >= 3)."""
        if self.d == 2:
            raise DomainError("coefficients undefined for d = 2")
        return _abc_general(self.d, self.n, theta)

    def to_dict(self) -> dict:
        return {"delta": self.delta, "theta_star": self.theta_star,
                "lambda_star": self.lambda_star, "lambda_0": self.lambda_0,
                "zeta_star": self.zeta_star, "coeff_a": self.coeff_a,
                "coeff_b": self.coeff_b, "coeff_c": self.coeff_c}


def _abc_general(d: int, n: float, theta: float) -> tuple[float, float, float]:
    delta = (n - d) / ((d - 1) * (n - 1))
    bm1 = 2.0 / (3.0 - n) - 1.0
    a = 1 + delta * theta * (d - 1) / (d - 2)
    b = bm1 * (1 - 2 * delta * (d - 1) / (d + 1))
    c = bm1 ** 2 * (1 + delta * (d - 1) / (d - 2)) + 2 * bm1 * delta * (d - 1) ** 2 / ((d + 1) * (d - 2))
    return a, b, c


def theta_star(d: int, n: float) -> float:
    if d == 2:
        return 0.0
    num = (d - 2) * (n - 1) * (3 * n + 1 - d * (3 * n + 5))
    den = (d + 1) * (d * (n * n - n - 4) - n * n + 3 * n + 2)
    return num / den


def fs_constants(d: int, n: float, manifold: ManifoldData) -> FsConstants:
    if d < 2:
        raise DomainError("need d >= 2")
    if not n > d:
        raise DomainError(f"need n > d, got n = {n}, d = {d}")
    delta = (n - d) / ((d - 1) * (n - 1))
    th = theta_star(d, n)
    M = manifold
    lam0 = (M.kappa if d > 2 else 0.0) + delta * M.lambda1
    if d == 2:
        a = b = c = zeta = None
        lam_star = delta * M.lambda1
    else:
        w = d * (n * n - n - 4) - (n * n - 3 * n - 2)
        a = (d - 1) * (d - 2) * (n + 1) ** 2 / ((d + 1) * w)
        b = -(n + 1) * (d - 1) / ((n - 3) * (d + 1))
        c = (d - 1) * w / ((d - 2) * (d + 1) * (n - 3) ** 2)
        zeta = -(d - 1) * (d * (3 * n + 5) - 3 * n - 1) / ((d - 2) * (d + 1) ** 2 * (n - 3) ** 2)
        lam_star = None
    out = FsConstants(d, float(n), M, delta, th, 0.0, lam0, zeta, a, b, c)
    if d > 2:
        if M.is_sphere:
            lam_star = (n - 2) / (n - 1) * (d - 1)
        else:
            lam_star = out.lambda_theta(th)
    return FsConstants(d, float(n), M, delta, th, lam_star, lam0, zeta, a, b, c)


# ---------------------------------------------------------------------------
# Symmetric profile and optimal constants


def _logcosh(x):
    x = np.abs(x)
    return x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0)


def phi_lambda(s, p: float, Lam: float):
    """Symmetric optimizer beta * cosh(alpha s)^{-2/(p-2)} (vectorized)."""
    if not (p > 2 and Lam > 0):
        raise DomainError("need p > 2 and Lambda > 0")
    alpha = (p - 2.0) / 2.0 * math.sqrt(Lam)
    logbeta = math.log(p * Lam / 2.0) / (p - 2.0)
    out = np.exp(logbeta - 2.0 / (p - 2.0) * _logcosh(alpha * np.asarray(s, dtype=float)))
    return float(out) if np.ndim(out) == 0 else out


def mu_r(Lam: float, p: float) -> float:
    if not (2 < p < math.inf and Lam > 0):
        raise DomainError("need 2 < p < inf and Lambda > 0")
    k = p / (p - 2.0)
    inner = 2.0 * math.sqrt(math.pi) * math.exp(lgamma(k) - lgamma((3 * p - 2) / (2 * (p - 2)))) / (p - 2.0)
    return p / 2.0 * Lam ** ((p + 2) / (2 * p)) * inner ** ((p - 2) / p)


def mu_star(Lam: float, p: float, vol: float) -> float:
    if not vol > 0:
        raise DomainError("need vol > 0")
    return vol ** (1.0 - 2.0 / p) * mu_r(Lam, p)


def eta(params: CknParams) -> float:
    n = params.n
    if not n > 2:
        raise DomainError("need n > 2")
    return 4.0 * ((n - 1) / (n - 2)) ** 2 * params.alpha ** (1.0 - 2.0 / params.p)


# ---------------------------------------------------------------------------
# Barenblatt profile


def barenblatt(t, r, params: CknParams, c_star: float):
    n, al = params.n, params.alpha
    r = np.asarray(r, dtype=float)
    out = t ** (-n) * (c_star + r * r / (2 * (n - 1) * al * al * t * t)) ** (-n)
    return float(out) if out.ndim == 0 else out


def barenblatt_pressure(t, r, params: CknParams, c_star: float):
    n, al = params.n, params.alpha
    r = np.asarray(r, dtype=float)
    out = (n - 1) * c_star * t + r * r / (2 * al * al * t)
    return float(out) if out.ndim == 0 else out


class RootFindingError(RuntimeError):
    pass


def _barenblatt_mass(c: float, params: CknParams, vol: float, t: float = 1.0) -> float:
    n, al = params.n, params.alpha
    k = 1.0 / (2 * (n - 1) * al * al * t * t)
    # substitute r = e^x, centred where the profile turns over
    x0 = 0.5 * math.log(c / k)

    def f(x):
        r = math.exp(x + x0)
        return t ** (-n) * (c + k * r * r) ** (-n) * r ** n

    # integrand decays like e^{-n|x|} with n > 2, so the tail beyond 40 is below 1e-30
    val, _ = integrate.quad(f, -40.0, 40.0, epsabs=0.0, epsrel=1e-13, limit=200)
    return vol * val


def normalize_c_star(params: CknParams, manifold: ManifoldData, tol: float = 1e-15) -> float:
    """c_star such that the Barenblatt profile has unit mass (bisection in log c)."""
    if not params.n > params.d:
        raise DomainError("need n > d")
    lo, hi = math.log(1e-8), math.log(1e8)
    f = lambda lc: _barenblatt_mass(math.exp(lc), params, manifold.vol) - 1.0
    flo, fhi = f(lo), f(hi)
    if not (flo > 0 > fhi):
        raise RootFindingError(f"bracket [1e-8, 1e8] does not enclose the root: "
                               f"mass-1 = {flo:.3e}, {fhi:.3e}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    else:
        raise RootFindingError(f"bisection stalled on [{math.exp(lo)}, {math.exp(hi)}]")
    return math.exp(0.5 * (lo + hi))


# ---------------------------------------------------------------------------
# One-dimensional Keller-Lieb-Thirring constants


@dataclass(frozen=True)
class KltConstants:
    q: float
    mu1: float
    beta: float

    def lambda_r(self, mu):
        return (self.q - 1.0) ** 2 * (np.asarray(mu, dtype=float) / self.mu1) ** self.beta

    def v1(self, s):
        c = np.cosh(np.asarray(s, dtype=float))
        return self.q * (self.q - 1.0) / (c * c)


def klt_closed_forms(q: float) -> KltConstants:
    if not q > 1:
        raise DomainError(f"need q > 1, got {q}")
    mu1 = q * (q - 1) * math.exp((0.5 * math.log(math.pi) + lgamma(q) - lgamma(q + 0.5)) / q)
    return KltConstants(float(q), mu1, 2 * q / (2 * q - 1))
