import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from dilutelab.disorder import DisorderSpec, sample_potential
from dilutelab.errors import DivergenceError, PreconditionError, SingularityError, ValidationError
from dilutelab.green import (GreenQuery, combes_thomas_check, delta_rate, fit_profile, fm_criterion_sum,
                             fractional_moment, green, localization_length_fit, moment_profile)
from dilutelab.lattice import Box, assemble_dirichlet, laplacian
from helpers import kernels

LAP = laplacian(1)
BERN = DisorderSpec.bernoulli(0.3)


def query(box, m, n, energy=0.5, eps=0.1, kernel=LAP, spec=BERN, **kw):
    return GreenQuery(box, kernel, spec, energy, eps, m, n, **kw)


class TestEntry:
    def test_single_site(self):
        box = Box.centered(1, 0)
        g = green(query(box, (0,), (0,), energy=0.5, eps=0.2), np.array([0.7]))
        assert g == pytest.approx(1 / (2 + 0.7 - 0.5 - 0.2j))

    @given(kernels(), st.integers(0, 2**31), st.floats(-1, 5), st.floats(1e-3, 2))
    def test_dense_inverse(self, kernel, seed, e, eps):
        box = Box.centered(1, 5)
        v = np.random.default_rng(seed).random(box.size)
        inv = np.linalg.inv(assemble_dirichlet(kernel, box).matrix + np.diag(v) - (e + 1j * eps) * np.eye(box.size))
        m, n = (-2,), (3,)
        g = green(query(box, m, n, e, eps, kernel), v)
        assert g == pytest.approx(inv[box.index(n), box.index(m)], rel=1e-9, abs=1e-12)

    @given(kernels(d=2), st.integers(0, 2**31))
    def test_dense_inverse_2d(self, kernel, seed):
        box = Box.centered(2, 2)
        v = np.random.default_rng(seed).random(box.shape)
        z = 0.3 + 0.05j
        inv = np.linalg.inv(assemble_dirichlet(kernel, box).matrix + np.diag(v.ravel()) - z * np.eye(box.size))
        m, n = (0, 0), (1, -2)
        g = green(query(box, m, n, 0.3, 0.05, kernel), v)
        assert g == pytest.approx(inv[box.index(n), box.index(m)], rel=1e-9, abs=1e-12)

    @given(kernels(), st.integers(0, 2**31))
    def test_reciprocity(self, kernel, seed):
        # (H - z)^-1 with H Hermitian: G_mn(z) = conj(G_nm(conj z))
        box = Box.centered(1, 6)
        v = np.random.default_rng(seed).random(box.size)
        a = green(query(box, (1,), (-4,), 0.7, 0.3, kernel), v)
        b = green(query(box, (-4,), (1,), 0.7, -0.3, kernel), v)
        assert a == pytest.approx(np.conj(b), rel=1e-9, abs=1e-12)

    def test_real_symmetric(self):
        box = Box.centered(1, 10)
        v = sample_potential(BERN, box, 3).values
        a = green(query(box, (2,), (-5,)), v)
        b = green(query(box, (-5,), (2,)), v)
        assert a == pytest.approx(b, rel=1e-12)

    @given(st.integers(0, 2**31), st.floats(-2, 6), st.floats(1e-4, 1.0))
    def test_bounded_by_inverse_eps(self, seed, e, eps):
        box = Box.centered(1, 8)
        v = np.random.default_rng(seed).random(box.size)
        for n in [(0,), (3,), (-8,)]:
            assert abs(green(query(box, (0,), n, e, eps), v)) <= 1 / eps * (1 + 1e-12)

    def test_singular_energy_refused(self):
        box = Box.centered(1, 0)
        with pytest.raises(SingularityError) as err:
            green(query(box, (0,), (0,), energy=2.0, eps=0.0), np.array([0.0]))
        assert err.value.gap == pytest.approx(0.0, abs=1e-12)

    def test_below_spectrum_needs_no_gap_check(self):
        box = Box.centered(1, 3)
        g = green(query(box, (0,), (0,), energy=-1.0, eps=0.0), np.zeros(box.size))
        assert g.real > 0 and g.imag == 0

    def test_validation(self):
        box = Box.centered(1, 3)
        with pytest.raises(ValidationError):
            query(box, (0,), (0,), s=1.0)
        with pytest.raises(ValidationError):
            query(box, (0,), (9,))
        holder_spec = DisorderSpec.uniform_dilute(0.2)
        with pytest.raises(ValidationError):
            query(box, (0,), (0,), spec=holder_spec, s=0.5)
        query(box, (0,), (0,), spec=holder_spec, s=0.5, override=True)
        query(box, (0,), (0,), spec=holder_spec, s=0.2)


class TestMoments:
    def test_huge_eps(self):
        box = Box.centered(1, 4)
        est = fractional_moment(query(box, (0,), (0,), eps=1e6), 20, 0)
        assert est.mean == pytest.approx(1e-3, rel=1e-4)

    def test_single_site_uniform_quadrature(self):
        rho, s, e, eps = 0.2, 0.5, 2.1, 0.05
        spec = DisorderSpec.uniform_dilute(rho)
        box = Box.centered(1, 0)
        f = lambda w: abs(1 / (2 + w - e - 1j * eps)) ** s / (2 * rho)
        exact = integrate.quad(f, 0, 2 * rho, points=[e - 2], limit=200)[0]
        est = fractional_moment(query(box, (0,), (0,), e, eps, spec=spec, s=s, override=True), 20000, 1)
        assert abs(est.mean - exact) <= 2.5 * est.ci

    def test_apriori_ratio_stable(self):
        # E|G_00|^s rho^s for a single uniform site inside the band tends to 2^-s / (1 - s)
        s, box = 0.5, Box.centered(1, 0)
        ratios = []
        for rho in (0.3, 0.2, 0.1):
            spec = DisorderSpec.uniform_dilute(rho)
            est = fractional_moment(query(box, (0,), (0,), 2.0, 1e-6, spec=spec, s=s, override=True), 20000, 2)
            ratios.append(est.ratio)
        assert np.ptp(ratios) <= 0.05 * np.mean(ratios)
        assert np.mean(ratios) == pytest.approx(2 ** -s / (1 - s), rel=0.05)

    def test_single_site_monotone_in_eps(self):
        box = Box.centered(1, 0)
        means = [fractional_moment(query(box, (0,), (0,), 2.1, eps), 50, 8).mean for eps in (1e-4, 1e-2, 1, 10)]
        assert all(b <= a for a, b in zip(means, means[1:]))

    def test_profile_shares_realizations(self):
        box = Box.centered(1, 20)
        a = moment_profile(LAP, BERN, box, 0.2, 1e-2, 0.5, [0, 5, 10], 40, 3)
        b = moment_profile(LAP, BERN, box, 0.2, 1e-2, 0.5, [0, 5, 10], 40, 3)
        assert np.array_equal(a.per_replica, b.per_replica)
        with pytest.raises(ValidationError):
            moment_profile(LAP, BERN, box, 0.2, 1e-2, 0.5, [0, 21], 4, 3)


class TestDecay:
    @pytest.mark.parametrize("energy", [-0.5, -2.0])
    def test_combes_thomas_free(self, energy):
        # the free resolvent decays at rate arccosh(1 - E/2) for E < 0
        fit = combes_thomas_check(LAP, DisorderSpec.bernoulli(0.0), None, energy, range(2, 12), 2, 0)
        exact = math.acosh(1 - energy / 2)
        assert fit.rate == pytest.approx(exact, rel=0.1)
        assert fit.r2 > 0.999

    def test_combes_thomas_dilute_below_spectrum(self):
        fit = combes_thomas_check(LAP, BERN, None, -20.0, range(1, 6), 30, 0)
        assert fit.r2 > 0.999 and fit.rate >= math.acosh(1 + 20 / 2) - 1e-9

    def test_precondition_refused(self):
        with pytest.raises(PreconditionError):
            combes_thomas_check(LAP, BERN, Box.centered(1, 20), 0.5, range(1, 8), 5, 0)

    def test_localization_matches_combes_thomas_far_below(self):
        s, e = 0.5, -3.0
        ct = combes_thomas_check(LAP, BERN, None, e, range(1, 9), 100, 6)
        loc = localization_length_fit(LAP, BERN, e, s, range(1, 9), 100, 6, eps=1e-9)
        assert loc.rate / s == pytest.approx(ct.rate, rel=0.05)

    def test_fit_needs_four_points(self):
        d = np.arange(6)
        est = np.array([1, 0.5, 0.25, 1e-3, 1e-3, 1e-3])
        ci = np.array([0, 0, 0, 1, 1, 1])
        with pytest.raises(PreconditionError):
            fit_profile(d, est, ci)
        fit, used = fit_profile(d[:4], [1, 0.5, 0.25, 0.125], [0, 0, 0, 0])
        assert fit.slope == pytest.approx(-math.log(2)) and used.all()

    def test_eps_sweep_consistent(self):
        spec = DisorderSpec.smoothed_bernoulli(0.3)
        rates = []
        for eps in (1e-2, 1e-3, 1e-4):
            fit = localization_length_fit(LAP, spec, 0.005, 0.5, range(2, 14), 300, 4, eps=eps, alpha=2.0)
            rates.append((fit.rate, fit.slope_stderr))
        # realizations are shared, so rates at small eps agree well within the fit error
        for (r1, e1), (r2, e2) in zip(rates[1:], rates[2:]):
            assert abs(r1 - r2) <= 3 * math.hypot(e1, e2)
        assert all(r > 0 for r, _ in rates)

    def test_delta_rate(self):
        assert delta_rate(0.5, 2.0, 0.21) == pytest.approx(0.2)
        with pytest.raises(ValidationError):
            delta_rate(0.5, 2.0, 0.3)


class TestCriterionSum:
    @staticmethod
    def ones(m, n):
        return np.ones(len(m))

    def test_zero_moment(self):
        res = fm_criterion_sum(2, 1, lambda m, n: np.zeros(len(m)), 0.1, 0.5, 0.1, 1.0, 1.0)
        assert res.value == 0 and res.satisfied

    def test_closed_form_line(self):
        # L = 1 in d = 1: inner {-1, 0, 1}, outer |n| >= 2, moment 1
        c, delta, D, rho, s = 1.3, 0.4, 2.0, 0.2, 0.5
        a = delta / D
        q = math.exp(a - c)
        raw = 2 * (1 + 2 * math.cosh(c)) * math.exp(2 * (a - c)) / (1 - q)
        res = fm_criterion_sum(1, 1, self.ones, rho, s, delta, D, c)
        assert res.raw_sum == pytest.approx(raw, rel=1e-12)
        assert res.value == pytest.approx(D * rho ** -s * raw, rel=1e-12)

    def test_geometric_stub(self):
        # moment e^{-2c|m-n|}: sum_m sum_{|n|>L} e^{-3c|n-m| + a|n|} in closed form
        c, delta, D, L, rho, s = 0.8, 0.5, 1.5, 3, 0.2, 0.5
        a = delta / D
        q = math.exp(a - 3 * c)
        inner = sum(math.exp(3 * c * m) for m in range(-L, L + 1))
        raw = 2 * inner * q ** (L + 1) / (1 - q)
        res = fm_criterion_sum(L, 1, lambda m, n: np.exp(-2 * c * np.abs(m - n).sum(axis=1)),
                               rho, s, delta, D, c)
        assert res.raw_sum == pytest.approx(raw, rel=1e-12)
        assert res.value == pytest.approx(D * L ** 2 * rho ** -s * raw, rel=1e-12)

    def test_brute_force_2d(self):
        c, delta, D, L = 1.5, 0.3, 1.0, 1
        mom = lambda m, n: np.exp(-0.5 * np.abs(m - n).sum(axis=1))
        res = fm_criterion_sum(L, 2, mom, 0.5, 0.5, delta, D, c)
        ax = np.arange(-40, 41)
        nn = np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
        nn = nn[np.abs(nn).max(axis=1) > L]
        total = 0.0
        for m in np.stack(np.meshgrid(*[np.arange(-L, L + 1)] * 2, indexing="ij"), -1).reshape(-1, 2):
            r = np.abs(nn - m).sum(axis=1)
            total += np.sum(np.exp(-c * r - 0.5 * r + delta * np.abs(nn).sum(axis=1) / D))
        assert res.raw_sum == pytest.approx(total, rel=1e-10)

    def test_divergence(self):
        with pytest.raises(DivergenceError):
            fm_criterion_sum(1, 1, self.ones, 0.2, 0.5, 2.0, 1.0, 1.5)

    @given(st.floats(0.0, 0.9), st.floats(0.0, 0.9))
    def test_monotone_in_delta(self, d1, d2):
        lo, hi = sorted((d1, d2))
        a = fm_criterion_sum(1, 1, self.ones, 0.2, 0.5, lo, 1.0, 1.0)
        b = fm_criterion_sum(1, 1, self.ones, 0.2, 0.5, hi, 1.0, 1.0)
        assert a.value <= b.value * (1 + 1e-12)

    @given(st.floats(0.6, 3.0), st.floats(0.6, 3.0))
    def test_monotone_in_c(self, c1, c2):
        lo, hi = sorted((c1, c2))
        a = fm_criterion_sum(2, 1, self.ones, 0.2, 0.5, 0.5, 1.0, lo)
        b = fm_criterion_sum(2, 1, self.ones, 0.2, 0.5, 0.5, 1.0, hi)
        assert b.value <= a.value * (1 + 1e-12)

    @given(st.floats(0.1, 5), st.floats(0.1, 5))
    def test_monotone_in_prefactor_constant(self, d1, d2):
        lo, hi = sorted((d1, d2))
        a = fm_criterion_sum(1, 1, self.ones, 0.2, 0.5, 0.0, lo, 1.0)
        b = fm_criterion_sum(1, 1, self.ones, 0.2, 0.5, 0.0, hi, 1.0)
        assert a.value <= b.value * (1 + 1e-12)

    def test_monotone_in_xi_degree_and_stub(self):
        vals = [fm_criterion_sum(1, 1, self.ones, 0.2, 0.5, 0.1, 1.0, 1.0, k).value for k in range(4)]
        assert vals == sorted(vals)
        small = fm_criterion_sum(1, 1, lambda m, n: 0.5 * np.ones(len(m)), 0.2, 0.5, 0.1, 1.0, 1.0)
        assert small.value == pytest.approx(0.5 * vals[1], rel=1e-9)

    def test_validation(self):
        with pytest.raises(ValidationError):
            fm_criterion_sum(1, 1, self.ones, 0.2, 0.5, 0.1, 0.0, 1.0)
