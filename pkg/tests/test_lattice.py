import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dilutelab.errors import CapacityError, DegeneracyError, SymmetryError, ValidationError
from dilutelab.lattice import (Box, HoppingKernel, assemble_dirichlet, find_symbol_minima,
                               laplacian, load_kernel, save_kernel, symbol_eval)
from helpers import kernels, random_kernel


def brute_assemble(kernel, box):
    sites = [tuple(s) for s in box.sites()]
    m = np.zeros((len(sites), len(sites)), dtype=complex)
    for i, x in enumerate(sites):
        for j, y in enumerate(sites):
            m[i, j] = kernel[tuple(a - b for a, b in zip(x, y))]
    return m


class TestSymbol:
    def test_laplacian_band_edges(self):
        k = laplacian(1)
        assert symbol_eval(k, 0.0) == pytest.approx(0.0, abs=1e-15)
        assert symbol_eval(k, np.pi) == pytest.approx(4.0)

    def test_matches_direct_fourier_sum(self):
        rng = np.random.default_rng(5)
        # five coefficients: h_0, h_{+-1}, h_{+-2}
        h0, h1, h2 = rng.normal(), rng.normal() + 1j * rng.normal(), rng.normal() + 1j * rng.normal()
        k = HoppingKernel({0: h0, 1: h1, -1: np.conj(h1), 2: h2, -2: np.conj(h2)}, normalize=False)
        th = 0.7
        direct = sum(v * np.exp(1j * m * th) for m, v in
                     [(0, h0), (1, h1), (-1, np.conj(h1)), (2, h2), (-2, np.conj(h2))])
        assert symbol_eval(k, th) == pytest.approx(direct.real, abs=1e-13)

    def test_non_hermitian_rejected(self):
        with pytest.raises(SymmetryError):
            HoppingKernel({0: 1.0, 1: -1.0, -1: -0.5})
        k = HoppingKernel({0: 1.0, 1: -1.0, -1: -0.5}, validate=False, normalize=False)
        with pytest.raises(SymmetryError):
            symbol_eval(k, 0.3)

    def test_trivial_kernel_rejected(self):
        with pytest.raises(ValidationError):
            HoppingKernel({0: 1.0})

    def test_decay_certificate(self):
        k = laplacian(1)
        c = k.decay
        for off, v in k.coefficients.items():
            assert abs(v) <= np.exp(-c * np.linalg.norm(off)) / c * (1 + 1e-9)
        with pytest.raises(ValidationError):
            HoppingKernel({0: 2.0, 1: -1.0, -1: -1.0}, decay=5.0)

    def test_normalization_shift(self):
        k = HoppingKernel({0: 3.0, 1: -1.0, -1: -1.0})
        assert k.energy_shift == pytest.approx(1.0)
        assert symbol_eval(k, 0.0) == pytest.approx(0.0, abs=1e-12)

    @given(kernels(), st.floats(-np.pi, np.pi))
    def test_symbol_is_real_on_grid(self, k, th):
        z = k.symbol_complex(th)
        assert abs(np.imag(z)) <= 1e-12 * k.l1_norm


class TestAssembly:
    def test_three_site_laplacian(self):
        m = assemble_dirichlet(laplacian(1), Box.centered(1, 1)).matrix
        np.testing.assert_array_equal(m, [[2, -1, 0], [-1, 2, -1], [0, -1, 2]])

    @given(kernels())
    def test_single_site(self, k):
        m = assemble_dirichlet(k, Box.centered(1, 0)).matrix
        assert m.shape == (1, 1) and m[0, 0] == k[0]

    def test_2d_matches_brute_force(self):
        k, box = laplacian(2), Box.centered(2, 1)
        m = assemble_dirichlet(k, box).matrix
        np.testing.assert_allclose(np.linalg.eigvalsh(m), np.linalg.eigvalsh(brute_assemble(k, box)), atol=1e-12)

    @given(kernels(d=2))
    def test_2d_random_matches_brute_force(self, k):
        box = Box((1, -2), 2)
        np.testing.assert_array_equal(assemble_dirichlet(k, box).matrix, brute_assemble(k, box))

    @given(kernels())
    def test_exactly_hermitian(self, k):
        m = assemble_dirichlet(k, Box.centered(1, 6)).matrix
        assert np.array_equal(m, m.conj().T)

    @given(kernels())
    def test_min_eigenvalue_crude_bound(self, k):
        lam = np.linalg.eigvalsh(assemble_dirichlet(k, Box.centered(1, 8)).matrix)[0]
        th = np.linspace(-np.pi, np.pi, 2001)
        off = sum(abs(v) for o, v in k.coefficients.items() if any(o))
        assert lam >= k.symbol(th).min() - off - 1e-12

    @pytest.mark.parametrize("n", [1, 3, 17, 101])
    def test_laplacian_eigenvalues(self, n):
        m = assemble_dirichlet(laplacian(1), Box.centered(1, (n - 1) // 2)).matrix
        kk = np.arange(1, n + 1)
        np.testing.assert_allclose(np.linalg.eigvalsh(m), 2 - 2 * np.cos(kk * np.pi / (n + 1)), atol=1e-10)

    def test_capacity(self):
        with pytest.raises(CapacityError):
            assemble_dirichlet(laplacian(2), Box.centered(2, 60), memory_budget=1024)

    def test_box_geometry(self):
        b = Box((1, 2), 2)
        assert b.size == 25 and len(b.sites()) == 25
        assert b.index((1, 2)) == 12 and b.contains((3, 0)) and not b.contains((4, 2))


class TestMinima:
    def test_laplacian_1d(self):
        m = find_symbol_minima(laplacian(1))
        assert len(m.points) == 1
        assert m.points[0][0] == pytest.approx(0.0, abs=1e-6)
        assert m.hessians[0][0, 0] == pytest.approx(2.0, rel=1e-5)

    def test_laplacian_2d(self):
        m = find_symbol_minima(laplacian(2), resolution=32)
        assert len(m.points) == 1
        np.testing.assert_allclose(m.points[0], 0, atol=1e-6)
        np.testing.assert_allclose(m.hessians[0], 2 * np.eye(2), atol=1e-5)

    def test_double_well(self):
        # h = 2 - 2cos(2 theta): h'' = 8 cos(2 theta) = 8 at both minima
        m = find_symbol_minima(HoppingKernel({0: 2.0, 2: -1.0, -2: -1.0}))
        pts = sorted(abs(p[0]) for p in m.points)
        assert pts == pytest.approx([0.0, np.pi], abs=1e-6)
        for h in m.hessians:
            assert h[0, 0] == pytest.approx(8.0, rel=1e-5)

    def test_quadratic_constant(self):
        m = find_symbol_minima(laplacian(1), resolution=128)
        th = np.linspace(-np.pi, np.pi, 999)
        assert np.all(laplacian(1).symbol(th) >= m.quadratic_constant * th ** 2 - 1e-12)
        assert 0 < m.quadratic_constant <= 1.0

    def test_degenerate_minimum(self):
        # 6 - 8cos + 2cos2 = (2 - 2cos)^2 has a quartic bottom
        k = HoppingKernel({0: 6.0, 1: -4.0, -1: -4.0, 2: 1.0, -2: 1.0})
        with pytest.raises(DegeneracyError):
            find_symbol_minima(k)

    def test_low_resolution_refused(self):
        with pytest.raises(ValidationError):
            find_symbol_minima(laplacian(1), resolution=4)


def test_kernel_file_round_trip(tmp_path):
    k = HoppingKernel({(0, 0): 4.0, (1, 0): -1.0, (-1, 0): -1.0, (0, 1): -1 + 0.5j, (0, -1): -1 - 0.5j})
    p = tmp_path / "k.json"
    save_kernel(k, p)
    data = json.loads(p.read_text())
    assert data["dimension"] == 2 and {"offset", "re", "im"} <= set(data["terms"][0])
    k2 = load_kernel(p)
    th = np.random.default_rng(0).uniform(-np.pi, np.pi, (20, 2))
    np.testing.assert_allclose(k2.symbol(th), k.symbol(th), atol=1e-12)
