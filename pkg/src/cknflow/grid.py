"""Discrete cylinder (s = log r) x angular grid and the operators D, L, k, K.

Radial derivatives use second-order stencils fitted to be exact on the span of
{1, s, e^{2s}} (plus s^2 at the boundary), so that quadratic pressures a + b r^2
are differentiated without error.  L is assembled in flux form, which makes it
exactly self-adjoint for the weights e^{ns} ds dv and conservative under no-flux
truncation.  Angular operators are spectral: Fourier on the circle and
Gauss-Gegenbauer collocation for axisymmetric fields on S^{d-1}.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, asdict
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import circulant
from scipy.special import roots_jacobi, eval_gegenbauer

from .closed_forms import CknParams, ManifoldData, sphere_volume
from . import io as ckio


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# angular discretizations


class PointAngular:
    """Single node: radially symmetric fields only."""
    kind = "point"

    def __init__(self, vol: float):
        self.n = 1
        self.nodes = np.zeros(1)
        self.weights = np.array([float(vol)])
        self.vol = float(vol)
        self.lap_matrix = np.zeros((1, 1))

    def lap(self, f):
        return np.zeros_like(f)

    def grad_dot(self, f, g):
        return np.zeros(np.broadcast(f, g).shape)

    def energy(self, f, g):
        return np.zeros(np.broadcast(f, g).shape[:-1])

    def harmonic(self, k: int):
        if k != 0:
            raise ConfigError("single-point angular grid carries only mode 0")
        return np.full(1, 1.0 / math.sqrt(self.vol))

    def eigenvalue(self, k: int) -> float:
        return 0.0


class CircleAngular:
    """Uniform nodes on a circle of length L with Fourier differentiation."""
    kind = "circle"

    def __init__(self, n: int, length: float = 2 * math.pi):
        if n < 3:
            raise ConfigError("circle grid needs at least 3 nodes")
        self.n, self.length = n, float(length)
        self.nodes = np.arange(n) * self.length / n
        self.weights = np.full(n, self.length / n)
        self.vol = self.length
        self.d1 = self._fourier_d1(n) * (2 * math.pi / self.length)
        # symmetric circulant with symbol -k^2; the Nyquist mode keeps its full cost
        k = np.abs(np.fft.fftfreq(n, 1.0 / n))
        col = np.fft.ifft(-(k * 2 * math.pi / self.length) ** 2).real
        self.lap_matrix = circulant(col)
        # constants are annihilated exactly, not just to rounding
        self.lap_matrix -= np.diag(self.lap_matrix.sum(axis=1))

    @staticmethod
    def _fourier_d1(n):
        h = 2 * math.pi / n
        j = np.arange(n)
        diff = j[:, None] - j[None, :]
        D = np.zeros((n, n))
        off = diff != 0
        sign = np.where(diff % 2 == 0, 1.0, -1.0)
        if n % 2 == 0:
            D[off] = 0.5 * sign[off] / np.tan(diff[off] * h / 2)
        else:
            D[off] = 0.5 * sign[off] / np.sin(diff[off] * h / 2)
        return D

    def lap(self, f):
        return f @ self.lap_matrix.T

    def grad(self, f):
        return f @ self.d1.T

    def grad_dot(self, f, g):
        return self.grad(f) * self.grad(g)

    def energy(self, f, g):
        """-sum_j W_j f_j (lap g)_j along the last axis."""
        return -np.sum(self.weights * f * self.lap(g), axis=-1)

    def harmonic(self, k: int):
        """L^2-normalized cos(k w)."""
        c = np.cos(2 * math.pi * k * self.nodes / self.length)
        return c / math.sqrt(np.sum(self.weights * c * c))

    def eigenvalue(self, k: int) -> float:
        return (2 * math.pi * k / self.length) ** 2


class AxisymAngular:
    """Zonal functions on S^{d-1} sampled at Gauss-Gegenbauer nodes x = cos(theta)."""
    kind = "axisym"

    def __init__(self, n: int, d: int):
        if d < 3:
            raise ConfigError("axisymmetric grid needs d >= 3")
        if n < 3:
            raise ConfigError("axisymmetric grid needs at least 3 nodes")
        self.n, self.d = n, d
        g = (d - 3) / 2.0
        x, w = roots_jacobi(n, g, g)
        order = np.argsort(-x)  # theta increasing
        self.x = x[order]
        self.nodes = np.arccos(self.x)
        self.weights = w[order] * sphere_volume(d - 1)
        self.vol = sphere_volume(d)
        self.d1 = self._bary_d1(self.x)
        x_ = self.x[:, None]
        self.lap_matrix = (1 - x_ ** 2) * (self.d1 @ self.d1) - (d - 1) * x_ * self.d1
        self.lap_matrix -= np.diag(self.lap_matrix.sum(axis=1))

    @staticmethod
    def _bary_d1(x):
        diff = x[:, None] - x[None, :]
        np.fill_diagonal(diff, 1.0)
        logw = -np.sum(np.log(np.abs(diff)), axis=1)
        sgn = np.prod(np.sign(diff), axis=1)
        ratio = sgn[None, :] * sgn[:, None] * np.exp(logw[None, :] - logw[:, None])
        D = ratio / diff
        np.fill_diagonal(D, 0.0)
        np.fill_diagonal(D, -D.sum(axis=1))
        return D

    def lap(self, f):
        return f @ self.lap_matrix.T

    def grad_dot(self, f, g):
        return (1 - self.x ** 2) * (f @ self.d1.T) * (g @ self.d1.T)

    def energy(self, f, g):
        return -np.sum(self.weights * f * self.lap(g), axis=-1)

    def harmonic(self, k: int):
        """L^2-normalized zonal harmonic of degree k."""
        lam = (self.d - 2) / 2.0
        y = eval_gegenbauer(k, lam, self.x) if lam > 0 else np.cos(k * self.nodes)
        return y / math.sqrt(np.sum(self.weights * y * y))

    def eigenvalue(self, k: int) -> float:
        return k * (k + self.d - 2.0)


# ---------------------------------------------------------------------------
# fitted radial stencils


def _fit_weights(offsets, deriv: int, h: float, poly_deg: int) -> np.ndarray:
    """Weights c with sum c_k f(o_k h) = f^(deriv)(0) for f in {x^j, j<=poly_deg} + {e^{2x}}."""
    xs = np.asarray(offsets, dtype=float) * h
    rows, rhs = [], []
    for j in range(poly_deg + 1):
        rows.append(xs ** j)
        rhs.append(math.factorial(j) if j == deriv else 0.0)
    rows.append(np.exp(2 * xs))
    rhs.append(2.0 ** deriv)
    A = np.array(rows)
    return np.linalg.solve(A, np.array(rhs))


def _radial_matrices(ns: int, h: float):
    c1 = _fit_weights([-1, 0, 1], 1, h, 1)
    c2 = _fit_weights([-1, 0, 1], 2, h, 1)
    b1 = _fit_weights([0, 1, 2, 3], 1, h, 2)
    b2 = _fit_weights([0, 1, 2, 3], 2, h, 2)
    e1 = _fit_weights([0, -1, -2, -3], 1, h, 2)
    e2 = _fit_weights([0, -1, -2, -3], 2, h, 2)
    mats = []
    for c, b, e in ((c1, b1, e1), (c2, b2, e2)):
        M = sp.diags([np.full(ns - 1, c[0]), np.full(ns, c[1]), np.full(ns - 1, c[2])],
                     [-1, 0, 1], format="lil")
        M[0, :] = 0
        M[ns - 1, :] = 0
        M[0, 0:4] = b
        M[ns - 1, ns - 4:ns] = e[::-1]
        mats.append(M.tocsr())
    return mats


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class GridConfig:
    s_min: float = -20.0
    s_max: float = 20.0
    n_s: int = 512
    angular: str = "point"   # point | circle | axisym
    n_ang: int = 1
    truncation_tol: Optional[float] = None

    def to_dict(self):
        return asdict(self)


class CylinderGrid:
    def __init__(self, config: GridConfig, params: CknParams, manifold: Optional[ManifoldData] = None):
        c = config
        if c.n_s < 64:
            raise ConfigError(f"need n_s >= 64, got {c.n_s}")
        if not c.s_min < c.s_max:
            raise ConfigError("need s_min < s_max")
        if c.truncation_tol is not None:
            est = math.exp(-params.alpha * min(abs(c.s_min), abs(c.s_max)))
            if not est < c.truncation_tol:
                raise ConfigError(f"truncation estimate {est:.2e} exceeds {c.truncation_tol:.2e}")
        if manifold is None:
            manifold = ManifoldData.sphere(params.d)
        self.config, self.params, self.manifold = c, params, manifold
        if c.angular == "point":
            self.ang = PointAngular(manifold.vol)
        elif c.angular == "circle":
            if manifold.dim != 1:
                raise ConfigError("circle grid needs a one-dimensional manifold")
            self.ang = CircleAngular(c.n_ang, manifold.vol)
        elif c.angular == "axisym":
            if not manifold.is_sphere or manifold.dim < 2:
                raise ConfigError("axisymmetric grid needs a sphere S^{d-1} with d >= 3")
            self.ang = AxisymAngular(c.n_ang, manifold.dim + 1)
        else:
            raise ConfigError(f"unknown angular kind {c.angular!r}")
        self.s = np.linspace(c.s_min, c.s_max, c.n_s)
        self.h = self.s[1] - self.s[0]
        self.r = np.exp(self.s)
        self.shape = (c.n_s, self.ang.n)
        n = params.n
        self.alpha, self.n = params.alpha, n
        self.weights = (np.exp(n * self.s) * self.h)[:, None] * self.ang.weights[None, :]
        self.D1, self.D2 = _radial_matrices(c.n_s, self.h)
        self._e2 = np.exp(-2 * self.s)[:, None]

    # -- flux-form radial part of L ---------------------------------------------------

    @cached_property
    def _flux(self):
        s, h, n = self.s, self.h, self.n
        # scale so that e^{2s} is mapped to the exact constant 2n
        gam = 2 * n * h * h / (2 * (math.cosh((n + 2) * h / 2) - math.cosh((n - 2) * h / 2)))
        E = np.exp((n - 2) * (s[:-1] + h / 2)) * gam / h ** 2
        return E

    def radial_L_matrix(self, boundary: str = "noflux") -> sp.csr_matrix:
        """Radial part alpha^2 e^{-ns} d_s(e^{(n-2)s} d_s) as a sparse matrix."""
        ns, a2 = self.config.n_s, self.alpha ** 2
        E = self._flux
        w = np.exp(-self.n * self.s)
        lower = np.zeros(ns - 1)
        upper = np.zeros(ns - 1)
        diag = np.zeros(ns)
        upper[:] = E
        lower[:] = E
        diag[:-1] -= E
        diag[1:] -= E
        M = sp.diags([lower, diag, upper], [-1, 0, 1], format="lil")
        M = sp.diags(a2 * w) @ M.tocsr()
        if boundary == "noflux":
            return M.tocsr()
        if boundary != "onesided":
            raise ValueError(boundary)
        M = M.tolil()
        pw = self.D2 + (self.n - 2) * self.D1
        for i in (0, ns - 1):
            M[i, :] = a2 * math.exp(-2 * self.s[i]) * pw[i, :].toarray()
        return M.tocsr()

    @cached_property
    def _Lr_onesided(self):
        return self.radial_L_matrix("onesided")

    @cached_property
    def _Lr_noflux(self):
        return self.radial_L_matrix("noflux")

    def L(self, w, boundary: str = "onesided"):
        Lr = self._Lr_onesided if boundary == "onesided" else self._Lr_noflux
        return Lr @ w + self._e2 * self.ang.lap(w)

    def L_matrix(self, boundary: str = "noflux") -> sp.csr_matrix:
        """Full operator on the flattened (s-major) field."""
        Lr = self._Lr_onesided if boundary == "onesided" else self._Lr_noflux
        na = self.ang.n
        out = sp.kron(Lr, sp.identity(na))
        if na > 1:
            out = out + sp.kron(sp.diags(np.exp(-2 * self.s)), sp.csr_matrix(self.ang.lap_matrix))
        return out.tocsr()

    # -- derivatives ------------------------------------------------------------------

    def ds(self, f):
        return self.D1 @ f

    def dss(self, f):
        return self.D2 @ f

    def D_dot(self, f, g):
        """Pointwise D f . D g = e^{-2s}(alpha^2 f_s g_s + grad f . grad g)."""
        return self._e2 * (self.alpha ** 2 * self.ds(f) * self.ds(g) + self.ang.grad_dot(f, g))

    def integrate(self, f) -> float:
        return float(np.sum(self.weights * f))

    def inner(self, f, g) -> float:
        return self.integrate(f * g)

    def dirichlet(self, f, g) -> float:
        """Discrete int Df.Dg dmu matching the flux-form L (exact summation by parts)."""
        a2 = self.alpha ** 2
        E = self._flux * self.h  # e^{(n-2)s_{i+1/2}} gamma / h
        df, dg = np.diff(f, axis=0), np.diff(g, axis=0)
        rad = a2 * np.sum(E[:, None] * df * dg * self.ang.weights[None, :])
        ang = np.sum(np.exp((self.n - 2) * self.s) * self.h * self.ang.energy(f, g))
        return float(rad + ang)

    # -- functionals ------------------------------------------------------------------

    def k_pointwise(self, p):
        Dp2 = self.D_dot(p, p)
        Lp = self.L(p)
        return 0.5 * self.L(Dp2) - self.D_dot(p, Lp) - Lp * Lp / self.n

    def k_manifold(self, p):
        """k_M[p] applied row by row on the angular factor."""
        ang, n, a2 = self.ang, self.n, self.alpha ** 2
        g2 = ang.grad_dot(p, p)
        lp = ang.lap(p)
        return 0.5 * ang.lap(g2) - ang.grad_dot(p, lp) - lp * lp / (n - 1) - (n - 2) * a2 * g2

    def k_decomposed(self, p):
        n, a2 = self.n, self.alpha ** 2
        ps = self.ds(p)
        first = self.dss(p) - 2 * ps - self.ang.lap(p) / (a2 * (n - 1))
        e4 = self._e2 ** 2
        q = ps - p
        return e4 * (a2 * a2 * (1 - 1 / n) * first ** 2 + 2 * a2 * self.ang.grad_dot(q, q)
                     + self.k_manifold(p))

    def big_K(self, p, warn: bool = True) -> float:
        n = self.n
        K = self.integrate(self.k_pointwise(p) * p ** (1 - n))
        if warn:
            bl, br = self.boundary_b(p, 0), self.boundary_b(p, -1)
            if max(abs(bl), abs(br)) > 1e-6 * abs(K) and max(abs(bl), abs(br)) > 1e-300:
                warnings.warn(f"boundary terms b = ({bl:.2e}, {br:.2e}) not small against K = {K:.2e}",
                              stacklevel=2)
        return K

    def fisher(self, u) -> float:
        p = pressure_array(u, self.n)
        return self.integrate(u * self.D_dot(p, p))

    def mass(self, u) -> float:
        return self.integrate(u)

    def _index(self, where) -> int:
        if isinstance(where, (int, np.integer)):
            return int(where) % self.config.n_s
        r = float(where)
        i = int(np.argmin(np.abs(self.s - math.log(r))))
        if abs(self.s[i] - math.log(r)) > 1e-9 * max(1.0, abs(self.s[i])):
            raise ValueError(f"r = {r} is not a grid radius")
        return i

    def boundary_b(self, p, where) -> float:
        """b(r) at a grid radius (float r) or node index (int)."""
        i = self._index(where)
        n = self.n
        g = p ** (1 - n) * self.D_dot(p, p)
        integrand = self.ds(g)[i] - (2 / n) * p[i] ** (1 - n) * self.ds(p)[i] * self.L(p)[i]
        # r^{n-1} * d/dr = e^{(n-2)s} d/ds
        return float(math.exp((n - 2) * self.s[i]) * np.sum(self.ang.weights * integrand))

    def boundary_c(self, u, where) -> float:
        i = self._index(where)
        n, m = self.n, 1 - 1 / self.n
        p = pressure_array(u, n)
        s_i = self.s[i]
        ur = math.exp(-s_i) * self.ds(u)[i]
        q = math.exp(-s_i) * self.ds(p)  # p' as a field
        Dp = np.sqrt(np.maximum(self.D_dot(p, p)[i], 0))
        Dq = np.sqrt(np.maximum(self.D_dot(q, q)[i], 0))
        um = u[i] ** m
        integrand = np.abs(ur) * u[i] ** (m - 1) + um * Dp * Dq + um * Dp ** 2 * np.abs(q[i]) / p[i]
        return float(math.exp((n - 1) * s_i) * np.sum(self.ang.weights * integrand))


def build_grid(config: GridConfig, params: CknParams, manifold: Optional[ManifoldData] = None) -> CylinderGrid:
    return CylinderGrid(config, params, manifold)


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class Field:
    values: np.ndarray
    grid: CylinderGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            if v.shape == (self.grid.shape[0],):
                v = np.repeat(v[:, None], self.grid.shape[1], axis=1)
            else:
                raise ValueError(f"shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite entries")
        object.__setattr__(self, "values", v)

    def to_csv(self, path):
        g = self.grid
        rows = ((g.s[i], g.ang.nodes[j], self.values[i, j])
                for i in range(g.shape[0]) for j in range(g.shape[1]))
        return ckio.write_csv(path, "cknflow.field", ["s", "angle", "value"], rows)

    def to_bytes(self) -> bytes:
        c = self.grid.config
        return ckio.field_bytes(self.values, c.s_min, c.s_max)

    @classmethod
    def from_bytes(cls, data: bytes, grid: CylinderGrid) -> "Field":
        vals, s0, s1 = ckio.parse_field_bytes(data)
        if (s0, s1) != (grid.config.s_min, grid.config.s_max):
            raise ValueError("field file was written on a different grid")
        return cls(vals, grid)


class PressureField(Field):
    def __post_init__(self):
        super().__post_init__()
        if not np.min(self.values) > 0:
            raise ValueError("pressure must be strictly positive")


def pressure_array(u, n):
    return (n - 1) * u ** (-1.0 / n)


def density_array(p, n):
    return (p / (n - 1)) ** (-n)


def pressure_of_density(u: Field) -> PressureField:
    if not np.min(u.values) > 0:
        raise ValueError("density must be strictly positive")
    return PressureField(pressure_array(u.values, u.grid.n), u.grid)


def density_of_pressure(p: PressureField) -> Field:
    if not np.min(p.values) > 0:
        raise ValueError("pressure must be strictly positive")
    return Field(density_array(p.values, p.grid.n), p.grid)


def density_of_w(w: Field, p_exp: float) -> Field:
    """u = |w|^p."""
    return Field(np.abs(w.values) ** p_exp, w.grid)


def apply_L(w: Field, boundary: str = "onesided") -> Field:
    return Field(w.grid.L(w.values, boundary), w.grid)


def k_pointwise(p: PressureField) -> Field:
    return Field(p.grid.k_pointwise(p.values), p.grid)


def k_decomposed(p: PressureField) -> Field:
    return Field(p.grid.k_decomposed(p.values), p.grid)


def big_K(p: PressureField, warn: bool = True) -> float:
    return p.grid.big_K(p.values, warn=warn)


def boundary_b(p: PressureField, r) -> float:
    return p.grid.boundary_b(p.values, r)


def boundary_c(u: Field, r) -> float:
    return u.grid.boundary_c(u.values, r)


# ---------------------------------------------------------------------------
# random test pressures


def random_pressure(grid: CylinderGrid, rng: np.random.Generator, amp: float = 0.3,
                    n_modes: int = 4, quad=None, width=None, center=None) -> np.ndarray:
    """(a + b r^2) * exp(g) with g a Gaussian envelope in s times <= n_modes angular modes."""
    a, b = quad if quad is not None else (rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0))
    s = grid.s
    s0 = center if center is not None else rng.uniform(-1.0, 1.0)
    w = width if width is not None else rng.uniform(0.8, 1.5)
    env = np.exp(-0.5 * ((s - s0) / w) ** 2)
    kmax = n_modes if grid.ang.n > 1 else 1
    g = np.zeros(grid.shape)
    for k in range(kmax):
        c = rng.uniform(-amp, amp)
        if grid.ang.kind == "circle" and k > 0 and rng.random() < 0.5:
            y = np.sin(2 * math.pi * k * grid.ang.nodes / grid.ang.length)
            y = y / math.sqrt(np.sum(grid.ang.weights * y * y))
        else:
            y = grid.ang.harmonic(k)
        g += c * math.sqrt(grid.ang.vol) * env[:, None] * y[None, :]
    base = a + b * np.exp(2 * s)
    return base[:, None] * np.exp(g)
