import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cknflow.closed_forms import ManifoldData, DomainError, phi_lambda, lambda_fs
from cknflow.stability import (sphere_mode_eigenvalue, mode_eigenvalue, schrodinger_ground, linearized_ground,
                               mode_spectrum, analytic_mode_energy, fs_threshold_numeric,
                               second_variation_check)

S2 = ManifoldData.sphere(3)
CIRCLE = ManifoldData.circle()


def _grid(S, h):
    n = int(round(2 * S / h))
    return np.linspace(-S, S, n + 1)[1:-1]


class TestModeEigenvalues:
    @pytest.mark.parametrize("k,d,expected", [(1, 3, 2), (0, 3, 0), (2, 3, 6), (0, 7, 0), (3, 4, 15)])
    def test_sphere(self, k, d, expected):
        assert sphere_mode_eigenvalue(k, d) == expected

    def test_circle(self):
        assert sphere_mode_eigenvalue(3, 2) == pytest.approx(9.0)
        assert sphere_mode_eigenvalue(2, 2, length=math.pi) == pytest.approx(16.0)
        assert mode_eigenvalue(2, CIRCLE) == pytest.approx(4.0)

    def test_abstract(self):
        M = ManifoldData.abstract(dim=2, lambda1=5.0, kappa=0.0, vol=1.0)
        assert mode_eigenvalue(1, M) == 5.0
        with pytest.raises(DomainError):
            mode_eigenvalue(2, M)

    def test_domain(self):
        with pytest.raises(DomainError):
            sphere_mode_eigenvalue(-1, 3)
        with pytest.raises(DomainError):
            sphere_mode_eigenvalue(1, 1)


class TestSchrodinger:
    def test_poschl_teller(self):
        # exact ground state of -d^2 - 2 sech^2 is -1 with eigenfunction sech
        vals = []
        for h in (0.004, 0.002):
            s = _grid(20, h)
            vals.append(schrodinger_ground(s, 2 / np.cosh(s) ** 2).eigenvalue)
        assert abs(vals[1] + 1) < 1e-6
        assert abs((4 * vals[1] - vals[0]) / 3 + 1) < 1e-9
        g = schrodinger_ground(_grid(20, 0.01), 2 / np.cosh(_grid(20, 0.01)) ** 2)
        assert not g.edge
        ref = 1 / np.cosh(g.s)
        ref /= math.sqrt(np.sum(ref ** 2) * (g.s[1] - g.s[0]))
        assert np.max(np.abs(g.eigenvector - ref)) < 1e-4

    def test_linearization_ground(self):
        s = _grid(20, 0.002)
        V = 3 * phi_lambda(s, 4.0, 1.0) ** 2
        assert schrodinger_ground(s, V, 1.0).eigenvalue == pytest.approx(-3, abs=1e-5)

    def test_free_box(self):
        s = np.linspace(-10, 10, 2001)
        h = s[1] - s[0]
        g = schrodinger_ground(s, np.zeros_like(s), 1.0)
        width = (s.size + 1) * h
        # discrete Dirichlet bottom, which tends to 1 + (pi/width)^2
        exact = 1 + 4 / h ** 2 * math.sin(math.pi * h / (2 * width)) ** 2
        assert g.eigenvalue == pytest.approx(exact, rel=1e-10)
        assert g.edge

    def test_normalized(self):
        s = _grid(15, 0.01)
        g = schrodinger_ground(s, 2 / np.cosh(s) ** 2)
        assert np.sum(g.eigenvector ** 2) * 0.01 == pytest.approx(1.0, rel=1e-12)
        assert g.eigenvector.max() > 0

    def test_bad_input(self):
        with pytest.raises(ValueError):
            schrodinger_ground(np.zeros(5), np.zeros(4))

    def test_second_order(self):
        errs = []
        for h in (0.02, 0.01):
            s = _grid(20, h)
            errs.append(abs(schrodinger_ground(s, 2 / np.cosh(s) ** 2).eigenvalue + 1))
        assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.05)


class TestLinearization:
    def test_translation_zero_mode(self):
        # d/ds phi is a zero-energy state of H_0 = -d^2 + Lambda - (p-1) phi^{p-2}
        p, Lam, h = 4.0, 1.0, 5e-4
        alpha = (p - 2) / 2 * math.sqrt(Lam)
        s = np.arange(-20, 20 + h / 2, h)
        phi = phi_lambda(s, p, Lam)
        dphi = -2 * alpha / (p - 2) * np.tanh(alpha * s) * phi
        H = (-(dphi[2:] - 2 * dphi[1:-1] + dphi[:-2]) / h ** 2
             + (Lam - (p - 1) * phi[1:-1] ** (p - 2)) * dphi[1:-1])
        assert math.sqrt(np.sum(H ** 2) * h) < 1e-6

    @pytest.mark.parametrize("p,Lam", [(4.0, 1.0), (3.0, 0.5), (6.0, 2.0)])
    def test_ground_eigenvector(self, p, Lam):
        s = _grid(max(20.0, 40 / ((p - 2) / 2 * math.sqrt(Lam))), 0.01)
        V = (p - 1) * phi_lambda(s, p, Lam) ** (p - 2)
        g = schrodinger_ground(s, V, Lam)
        ref = phi_lambda(s, p, Lam) ** (p / 2)
        cos = np.dot(g.eigenvector, ref) / (np.linalg.norm(g.eigenvector) * np.linalg.norm(ref))
        assert cos > 1 - 1e-8

    def test_spectrum_example(self):
        rep = mode_spectrum(1.0, 4.0, S2, 2)
        es = [e for _, _, e in rep.modes]
        assert es == pytest.approx([-3.0, -1.0, 3.0], abs=1e-5)
        assert [lk for _, lk, _ in rep.modes] == [0.0, 2.0, 6.0]
        assert rep.rows()[1] == (1.0, 4.0, 1, 2.0, es[1])
        assert not rep.flags

    def test_threshold_example(self):
        rep = mode_spectrum(2 / 3, 4.0, S2, 1)
        assert abs(rep.modes[1][2]) < 1e-6

    @given(st.floats(0.05, 5.0), st.sampled_from([3.0, 4.0, 5.0]))
    @settings(max_examples=15)
    def test_analytic_agreement(self, Lam, p):
        rep = mode_spectrum(Lam, p, S2, 2)
        for k, lk, e in rep.modes:
            assert e == pytest.approx(analytic_mode_energy(Lam, p, lk), abs=1e-4)
        es = [e for _, _, e in rep.modes]
        assert es[0] < 0
        assert all(a < b for a, b in zip(es, es[1:]))

    @pytest.mark.parametrize("M,p", [(S2, 4.0), (CIRCLE, 6.0)])
    def test_monotone_in_lambda(self, M, p):
        Ls = np.linspace(0.05, 3.0, 20) * lambda_fs(M, p)
        for k in (1, 2):
            lk = mode_eigenvalue(k, M)
            es = [linearized_ground(L, p, lk, h=0.01 / max(1, math.sqrt(L)))[0] for L in Ls]
            assert np.all(np.diff(es) < 0)

    @given(st.floats(0.05, 3.0).filter(lambda x: abs(x - 1) > 1e-3), st.sampled_from(["sphere", "circle"]))
    @settings(max_examples=20)
    def test_sign_invariant(self, mult, which):
        M, p = (S2, 4.0) if which == "sphere" else (CIRCLE, 6.0)
        Lfs = lambda_fs(M, p)
        Lam = mult * Lfs
        if abs(Lam - Lfs) <= 1e-3:
            return
        e1 = mode_spectrum(Lam, p, M, 1).modes[1][2]
        assert np.sign(e1) == np.sign(Lfs - Lam)

    def test_domain(self):
        with pytest.raises(DomainError):
            mode_spectrum(0.0, 4.0, S2, 1)
        with pytest.raises(DomainError):
            mode_spectrum(1.0, 6.0, S2, 1)
        with pytest.raises(DomainError):
            mode_spectrum(1.0, 4.0, S2, 0)


class TestThreshold:
    @pytest.mark.parametrize("p,M,expected", [
        (4.0, S2, 2 / 3),
        (6.0, CIRCLE, 1 / 8),
        (4.0, ManifoldData.abstract(dim=2, lambda1=5.0, kappa=0.0, vol=1.0), 5 / 3),
    ])
    def test_examples(self, p, M, expected):
        assert fs_threshold_numeric(p, M) == pytest.approx(expected, rel=1e-4)

    def test_matches_closed_form(self):
        for p in (2.5, 3.0, 5.0):
            assert fs_threshold_numeric(p, S2) == pytest.approx(lambda_fs(S2, p), rel=1e-6)


class TestSecondVariation:
    def test_below(self):
        Lfs = lambda_fs(CIRCLE, 4.0)
        rep = second_variation_check(Lfs / 2, 4.0, CIRCLE)
        assert rep.coefficient > 0
        assert rep.coefficient == pytest.approx(rep.predicted, rel=0.02)

    def test_at_threshold(self):
        Lfs = lambda_fs(CIRCLE, 4.0)
        rep = second_variation_check(Lfs, 4.0, CIRCLE)
        assert abs(rep.coefficient) < 1e-3 * rep.norm_pp * CIRCLE.lambda1

    def test_above(self):
        Lfs = lambda_fs(CIRCLE, 4.0)
        rep = second_variation_check(2 * Lfs, 4.0, CIRCLE)
        assert rep.coefficient < 0
        assert rep.coefficient == pytest.approx(rep.predicted, rel=0.02)

    def test_eps_domain(self):
        with pytest.raises(DomainError):
            second_variation_check(0.1, 4.0, CIRCLE, eps_list=(0.5,))
