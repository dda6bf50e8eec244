"""Quantitative acceptance checks. Each test prints one PASS/FAIL line; run with ``-s`` to see them."""
import filecmp
import math
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from dilutelab.continuum import ContinuumModel, box_bump, continuum_lifschitz_scan, ground_state, sample_poisson_cloud
from dilutelab.disorder import DisorderSpec
from dilutelab.experiment import ExperimentConfig, run, sweep
from dilutelab.floquet import assemble_floquet, fiber_kinetic, sandwich_check
from dilutelab.green import combes_thomas_check, fit_profile, moment_profile
from dilutelab.lattice import Box, FiniteOperator, assemble_dirichlet, laplacian
from dilutelab.scales import (block_means, build_scale_plan, chernoff_bound, coarse_grain, exact_bernoulli_tail,
                              fourier_localized)
from dilutelab.spectra import count_below, estimate_ids, free_ids_1d, lifschitz_scan
from dilutelab._stats import line_fit

LAP = laplacian(1)
CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def report(n, ok, detail, t0):
    print(f"\ncriterion {n:2d}: {'PASS' if ok else 'FAIL'} ({time.perf_counter() - t0:.1f} s) {detail}")
    return ok


def test_c01_oracle_eigenvalues():
    t0 = time.perf_counter()
    # Dirichlet truncation to 200 consecutive sites is the leading block of the 201-site matrix
    m = assemble_dirichlet(LAP, Box.centered(1, 100)).matrix[:200, :200]
    k = np.arange(1, 201)
    err = np.max(np.abs(np.linalg.eigvalsh(m) - np.sort(2 - 2 * np.cos(k * np.pi / 201))))
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(50):
        n = int(rng.integers(2, 501))
        bw = int(rng.integers(1, 6))
        a = np.zeros((n, n), dtype=complex)
        for j in range(1, bw + 1):
            v = rng.normal(size=n - j) + 1j * rng.normal(size=n - j)
            a += np.diag(v, j) + np.diag(v.conj(), -j)
        a += np.diag(rng.normal(size=n) * 3)
        e = float(rng.uniform(-5, 5))
        op = FiniteOperator(a)
        mismatches += count_below(op, e, method="eig") != count_below(op, e, method="inertia")
    ok = err <= 1e-10 and mismatches == 0 and time.perf_counter() - t0 < 10
    assert report(1, ok, f"max eig error {err:.1e}, count mismatches {mismatches}/50", t0)


def test_c02_free_ids():
    t0 = time.perf_counter()
    es = np.linspace(0, 4, 21)
    curve = estimate_ids(LAP, DisorderSpec.bernoulli(0.0), Box.centered(1, 1000), es, 1, 0)
    err = float(np.max(np.abs(curve.values - free_ids_1d(es))))
    ok = err <= 2e-3 and time.perf_counter() - t0 < 30
    assert report(2, ok, f"max |N_hat - arccos(1-E/2)/pi| = {err:.2e}", t0)


def test_c03_floquet_consistency():
    t0 = time.perf_counter()
    N, rng = 6, np.random.default_rng(3)
    spec = DisorderSpec.smoothed_bernoulli(0.3)
    basis_err = 0.0
    for _ in range(3):
        w = spec.sample(rng, (13,))
        th = rng.uniform(-np.pi / 13, np.pi / 13, 1)
        a = assemble_floquet(LAP, w, th, N, "momentum").eigenvalues()
        b = assemble_floquet(LAP, w, th, N, "position").eigenvalues()
        basis_err = max(basis_err, float(np.max(np.abs(a - b))))
    th = np.array([0.137])
    free = assemble_floquet(LAP, np.zeros(13), th, N, "momentum").eigenvalues()
    exact = np.sort(2 - 2 * np.cos(th[0] + 2 * np.pi * np.arange(13) / 13))
    free_err = float(np.max(np.abs(free - exact)))
    ok = basis_err <= 1e-9 and free_err <= 1e-12 and time.perf_counter() - t0 < 5
    assert np.allclose(np.sort(fiber_kinetic(LAP, th, N)), exact, atol=1e-14)
    assert report(3, ok, f"basis gap {basis_err:.1e}, free fiber error {free_err:.1e}", t0)


def test_c04_sandwich():
    t0 = time.perf_counter()
    spec = DisorderSpec.bernoulli(0.3)
    e, nu, N = 0.5, 0.05, 41
    curve = estimate_ids(LAP, spec, Box.centered(1, 1000), [e], 500, 11)
    s = sandwich_check(LAP, spec, e, nu, N, curve, resolution=3, replicas=500, seed=12)
    ok = s.holds and time.perf_counter() - t0 < 300
    detail = (f"estimate {s.estimate:.4f} +- {s.estimate_ci:.4f} in "
              f"[{s.lower:.4f} - {s.lower_ci:.4f}, {s.upper:.4f} + {s.upper_ci:.4f}], tail {s.tail:.1e}")
    assert report(4, ok, detail, t0)


def test_c05_lifschitz_trend():
    t0 = time.perf_counter()
    spec = DisorderSpec.smoothed_bernoulli(0.3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit = lifschitz_scan(LAP, spec, [0.3, 0.25, 0.2, 0.15], 4.5, total_sites=10**6, seed=5)
    pts = "; ".join(f"rho={p.rho}: {'<=' if p.upper_bound_only else ''}{p.estimate:.2e}"
                    f"{'' if p.upper_bound_only else f' +- {p.ci:.1e}'} ({p.hits} hits)" for p in fit.points)
    slope_ok = fit.n_fit >= 2 and fit.slope > 0
    ok = fit.decreasing and fit.ci_separated and slope_ok and time.perf_counter() - t0 < 1800
    assert report(5, ok, f"{pts}; fit slope {fit.slope:.3g} over {fit.n_fit} points", t0)


def test_c06_combes_thomas():
    t0 = time.perf_counter()
    exact = math.acosh(1.25)
    fit = combes_thomas_check(LAP, DisorderSpec.bernoulli(0.0), None, -0.5, range(2, 16), 2, 0)
    rel = abs(fit.rate - exact) / exact
    ok = rel <= 0.1 and time.perf_counter() - t0 < 60
    assert report(6, ok, f"rate {fit.rate:.6f} vs arccosh(1.25) = {exact:.6f} (rel {rel:.1e})", t0)


def test_c07_fractional_moment_decay():
    t0 = time.perf_counter()
    spec = DisorderSpec.uniform_dilute(0.1)
    dist = np.arange(0, 31)
    box = Box.centered(1, 60)
    profiles = {eps: moment_profile(LAP, spec, box, 0.0, eps, 0.2, dist, 2000, 7) for eps in (1e-1, 1e-3, 1e-6)}
    p = profiles[1e-3]
    fit, used = fit_profile(p.distances, p.mean, p.ci)
    # eps-independence: every pair of eps profiles agrees within the summed CIs at every distance
    excess = {(a, b): float(np.max(np.abs(pa.mean - pb.mean) - (pa.ci + pb.ci)))
              for a, pa in profiles.items() for b, pb in profiles.items() if a > b}
    spread_ok = all(v <= 0 for v in excess.values())
    ok = fit.r2 >= 0.95 and fit.slope < 0 and spread_ok and time.perf_counter() - t0 < 600
    pairs = ", ".join(f"{a:g}/{b:g}: {v:+.1e}" for (a, b), v in excess.items())
    assert report(7, ok, f"R2 {fit.r2:.4f}, slope {fit.slope:.4f}, excess over CI by eps pair {pairs}", t0)


def test_c08_large_deviation():
    t0 = time.perf_counter()
    spec = DisorderSpec.bernoulli(0.2)
    exact = exact_bernoulli_tail(100, 0.2, 0.1)
    means = block_means(spec, 100, 10**5, 8)
    freq = float(np.mean(means <= 0.1 + 1e-12))
    sigma = math.sqrt(exact * (1 - exact) / 10**5)
    bound = chernoff_bound(spec, 100, 0.1).bound
    cs = [-chernoff_bound(spec, R, 0.1).log_bound / (R * 0.2) for R in (100, 1000, 10000)]
    stable = np.ptp(cs) <= 1e-6 * np.mean(cs)
    ok = abs(freq - exact) <= 3 * sigma and bound >= exact and stable and time.perf_counter() - t0 < 120
    detail = (f"MC {freq:.5f} vs exact {exact:.5f} (3 sigma {3 * sigma:.1e}); bound {bound:.4f}; "
              f"c = {cs[0]:.5f}, {cs[1]:.5f}, {cs[2]:.5f}")
    assert report(8, ok, detail, t0)


def test_c09_scale_plans():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    bad = 0
    for _ in range(20):
        d = int(rng.integers(1, 4))
        rho = float(rng.uniform(1e-3, 0.2))
        alpha_p = float(rng.uniform(2.0, 6.0))
        alpha = alpha_p + float(rng.uniform(0.2, 4.0))
        gamma = float(rng.uniform(0.2, 2.0))
        p = build_scale_plan(rho, alpha, alpha_p, gamma, d)
        bad += not (p.identity_holds() and p.K < p.Kp and p.Lp < p.L)
    ok = bad == 0 and time.perf_counter() - t0 < 1
    assert report(9, ok, f"{20 - bad}/20 plans satisfy the identity and nesting", t0)


def test_c10_coarse_graining():
    t0 = time.perf_counter()
    K, b, rng = 2, 5, np.random.default_rng(10)
    cs, norm_err = [], 0.0
    for ratio in (3, 9, 27):
        kp = ratio * K
        n = (2 * kp + 1) * b
        errs = []
        for _ in range(20):
            a = fourier_localized(n, K, 1, rng)
            g = coarse_grain(a, block_half_side=(b - 1) // 2)
            norm_err = max(norm_err, abs(np.linalg.norm(g) - np.linalg.norm(a)))
            errs.append(np.linalg.norm(a - g))
        cs.append(max(errs) * kp / K)
    ok = max(cs) / min(cs) < 2 and norm_err <= 1e-12 and time.perf_counter() - t0 < 10
    assert report(10, ok, f"C = {', '.join(f'{c:.3f}' for c in cs)}; norm error {norm_err:.1e}", t0)


def test_c11_continuum():
    t0 = time.perf_counter()
    ell, meshes = 4.0, [0.2, 0.1, 0.05, 0.025]
    errs = [abs(ground_state(ContinuumModel(1, ell, h)) - math.pi ** 2 / ell ** 2) for h in meshes]
    order = line_fit(np.log(meshes), np.log(errs)).slope
    k0 = np.array([sample_poisson_cloud(0.5, [0], [4], 11, r).count == 0 for r in range(10**4)])
    p0 = math.exp(-2)
    pmf_ok = abs(k0.mean() - p0) <= 3 * math.sqrt(p0 * (1 - p0) / 10**4)
    model = ContinuumModel(1, 10.0, 0.25, "poisson", 0.3, box_bump(1.0, 1.0))
    fit = continuum_lifschitz_scan(model, [0.3, 0.2, 0.1], 4.5, total_volume=1e5, seed=11)
    pts = "; ".join(f"rho={p.rho}: {'<=' if p.upper_bound_only else ''}{p.estimate:.2e} ({p.hits} hits)"
                    for p in fit.points)
    ok = order >= 1.8 and pmf_ok and fit.decreasing and fit.ci_separated and time.perf_counter() - t0 < 1800
    detail = f"order {order:.3f}; P(k=0) {k0.mean():.4f} vs {p0:.4f}; tail {pts}"
    assert report(11, ok, detail, t0)


def test_c12_determinism(tmp_path):
    t0 = time.perf_counter()
    same = []
    for path in sorted(CONFIGS.glob("*.json")):
        if path.name == "kernel_nnn.json":
            continue
        cfg = ExperimentConfig.load(path)
        outs = []
        for t in (1, 8):
            c = ExperimentConfig.from_dict({**cfg.to_dict(), "threads": t})
            out = tmp_path / f"{path.stem}-{t}"
            if path.name == "sweep_lifschitz.json":
                recs = sweep(c, {"rho": [0.5, 0.4]}, out, seed_mode="shared")
                outs.append([r.directory / "rows.csv" for r in recs])
            else:
                outs.append([run(c, out).directory / "rows.csv"])
        same.append(all(filecmp.cmp(a, b, shallow=False) for a, b in zip(*outs)))
    ok = all(same)
    assert report(12, ok, f"{sum(same)}/{len(same)} shipped configs byte-identical at 1 and 8 threads", t0)
