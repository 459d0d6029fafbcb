"""Moments, norms, entropy slack, the Poisson solve, the modified entropy
and its certified constants, and the time-series estimators."""
import math
from dataclasses import replace

import numpy as np
import pytest

from kinetic_ap_lab import (BGK, CellDistribution, DiagnosticsError,
                            DiagnosticsRecord, EntropyTracker, PoissonSolver,
                            SchemeConfig, SchemeSystem, build_spatial_mesh,
                            compute_eta_admissible, decompose, dx_grad,
                            entropy_slack, entropy_slack_states,
                            estimate_oscillation_period, fit_decay_rate,
                            gaussian_bgk, gaussian_fp, init_state, macro_norm,
                            modified_entropy, moments, moments_from_state,
                            poisson_solve, reconstruct, state_mass,
                            state_norms, torus_poincare_constant,
                            weighted_norm)
from conftest import make_phase_mesh, random_distribution


# ----------------------------------------------------------- moments

def test_moments_match_plain_loops():
    mesh = make_phase_mesh(N=5, L=3, v_star=2.0)
    M = gaussian_bgk(mesh.v)
    f = random_distribution(mesh, M, seed=1)
    eps = 0.4
    got = moments(f, eps)
    v, dv = mesh.v.centers, mesh.v.widths
    for i in range(5):
        rho = sum(f.values[i, j] * dv[j] for j in range(6))
        J = sum(v[j] * f.values[i, j] * dv[j] for j in range(6)) / eps
        S = sum((v[j] ** 2 - M.m2) * f.values[i, j] * dv[j]
                for j in range(6))
        assert got.rho[i] == pytest.approx(rho, rel=1e-13)
        assert got.J[i] == pytest.approx(J, rel=1e-13, abs=1e-15)
        assert got.S[i] == pytest.approx(S, rel=1e-13, abs=1e-15)


def test_moments_from_state_agree_with_literal():
    mesh = make_phase_mesh(N=5, L=3, v_star=2.0)
    M = gaussian_fp(mesh.v)
    f = random_distribution(mesh, M, seed=2)
    eps = 0.3
    s = decompose(f, eps)
    lit = moments(f, eps)
    st = moments_from_state(s, eps)
    np.testing.assert_allclose(st.rho, lit.rho, rtol=1e-12)
    np.testing.assert_allclose(st.J, lit.J, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(st.S, lit.S, rtol=1e-10, atol=1e-12)


def test_literal_moments_reject_eps_zero():
    mesh = make_phase_mesh()
    M = gaussian_bgk(mesh.v)
    with pytest.raises(DiagnosticsError):
        moments(random_distribution(mesh, M), 0.0)


def test_state_moments_finite_at_eps_zero():
    mesh = make_phase_mesh()
    M = gaussian_bgk(mesh.v)
    cfg = SchemeConfig(epsilon=0.0, dt=0.1, collision=BGK)
    s = init_state(random_distribution(mesh, M, seed=3), cfg)
    got = moments_from_state(s, 0.0)
    assert np.all(np.isfinite(got.J))
    np.testing.assert_array_equal(got.S, 0.0)


# -------------------------------------------------------------- norms

def test_weighted_norm_matches_plain_loops():
    mesh = make_phase_mesh(N=5, L=2, v_star=1.5)
    M = gaussian_bgk(mesh.v)
    f = random_distribution(mesh, M, seed=5)
    acc = 0.0
    for i in range(5):
        for j in range(4):
            acc += (f.values[i, j] ** 2 / M.cell_values[j]
                    * mesh.x.widths[i] * mesh.v.widths[j])
    assert weighted_norm(f) == pytest.approx(math.sqrt(acc), rel=1e-13)


def test_macro_norm_matches_plain_loops():
    mesh = build_spatial_mesh(2.0, 7)
    rho = np.arange(1.0, 8.0)
    acc = sum(rho[i] ** 2 * mesh.widths[i] for i in range(7))
    assert macro_norm(rho, mesh) == pytest.approx(math.sqrt(acc), rel=1e-14)


def test_state_norms_pythagorean_split():
    # with h mean-free the equilibrium distance splits orthogonally into
    # the macro and micro parts
    mesh = make_phase_mesh(N=7, L=3, v_star=2.0)
    M = gaussian_fp(mesh.v)
    eps = 0.6
    s = decompose(random_distribution(mesh, M, seed=6), eps)
    norms = state_norms(s, eps)
    assert norms.norm_to_eq ** 2 == pytest.approx(
        norms.rho_dev ** 2 + eps ** 2 * norms.h_weighted ** 2, rel=1e-12)
    assert norms.norm_local == pytest.approx(eps * norms.h_weighted,
                                             rel=1e-14)

    # and norm_to_eq is the gamma-weighted distance to (mu_f / R) M
    f = reconstruct(s, eps)
    shift = f.values - s.mean_density * M.cell_values[None, :]
    dev = CellDistribution(values=shift, mesh=mesh, maxwellian=M)
    assert norms.norm_to_eq == pytest.approx(weighted_norm(dev), rel=1e-12)


def test_state_mass_matches_reconstruction():
    mesh = make_phase_mesh()
    M = gaussian_bgk(mesh.v)
    eps = 0.25
    s = decompose(random_distribution(mesh, M, seed=7), eps)
    assert state_mass(s, eps) == pytest.approx(reconstruct(s, eps).mass(),
                                               rel=1e-13)


# ------------------------------------------------------ entropy slack

def test_entropy_slack_paths_agree_and_are_nonpositive():
    mesh = make_phase_mesh(N=5, L=2, v_star=1.5)
    M = gaussian_bgk(mesh.v)
    eps, dt = 0.5, 0.1
    cfg = SchemeConfig(epsilon=eps, dt=dt, collision=BGK)
    sys = SchemeSystem(cfg, mesh, M)
    s_old = init_state(random_distribution(mesh, M, seed=8), cfg)
    s_new = sys.step(s_old)
    f_old, f_new = reconstruct(s_old, eps), reconstruct(s_new, eps)

    lit = entropy_slack(f_old, f_new, eps, dt)
    stt = entropy_slack_states(s_old, s_new, eps, dt)
    scale = weighted_norm(f_old) ** 2
    assert abs(lit - stt) <= 1e-10 * scale
    assert stt <= 1e-12 * scale


def test_entropy_slack_eps_zero_is_norm_decrement():
    mesh = make_phase_mesh()
    M = gaussian_bgk(mesh.v)
    f_old = random_distribution(mesh, M, seed=9)
    f_new = CellDistribution(values=0.5 * f_old.values, mesh=mesh,
                             maxwellian=M)
    dt = 0.2
    expected = (weighted_norm(f_new) ** 2 - weighted_norm(f_old) ** 2) \
        / (2.0 * dt)
    assert entropy_slack(f_old, f_new, 0.0, dt) == pytest.approx(
        expected, rel=1e-13)


# ------------------------------------------------------------ Poisson

def test_dx_grad_cosine_mode():
    N = 9
    mesh = build_spatial_mesh(1.0, N)
    dx = 1.0 / N
    for k in (1, 2):
        rho = np.cos(2.0 * np.pi * k * mesh.centers)
        expected = -np.sin(2.0 * np.pi * k * mesh.centers) \
            * np.sin(2.0 * np.pi * k * dx) / dx
        np.testing.assert_allclose(dx_grad(rho, mesh), expected, atol=1e-13)


def test_poisson_defining_equation_and_mean():
    mesh = build_spatial_mesh(1.0, 11)
    rng = np.random.default_rng(10)
    rho = rng.standard_normal(11)
    rho -= float(mesh.widths @ rho) / mesh.length
    sol = poisson_solve(rho, mesh)
    resid = -(np.roll(sol.grad, -1) - np.roll(sol.grad, 1)) / 2.0 \
        - mesh.widths * rho
    assert np.max(np.abs(resid)) <= 1e-11 * max(1.0, np.max(np.abs(rho)))
    assert abs(float(mesh.widths @ sol.phi)) <= 1e-12
    np.testing.assert_allclose(sol.grad, dx_grad(sol.phi, mesh), rtol=0,
                               atol=0)
    assert sol.projected_mean == 0.0


def test_poisson_fourier_mode():
    # on a uniform grid the solve inverts the squared centered-gradient
    # symbol: phi = rho (dx / sin(2 pi k dx))^2 for the k-th cosine mode
    N = 11
    mesh = build_spatial_mesh(1.0, N)
    dx = 1.0 / N
    for k in (1, 3):
        rho = np.cos(2.0 * np.pi * k * mesh.centers)
        expected = rho * (dx / np.sin(2.0 * np.pi * k * dx)) ** 2
        sol = poisson_solve(rho, mesh)
        np.testing.assert_allclose(sol.phi, expected, rtol=1e-10,
                                   atol=1e-12)


def test_poisson_projects_nonzero_mean():
    mesh = build_spatial_mesh(1.0, 9)
    rho = np.cos(2.0 * np.pi * mesh.centers) + 2.0
    sol = poisson_solve(rho, mesh)
    ref = poisson_solve(rho - 2.0, mesh)
    np.testing.assert_allclose(sol.phi, ref.phi, rtol=1e-11, atol=1e-13)
    assert sol.projected_mean == pytest.approx(2.0, rel=1e-12)


def test_poisson_rejects_even_cell_count():
    import kinetic_ap_lab as kal
    mesh = kal.SpatialMesh(length=1.0, edges=np.linspace(0.0, 1.0, 5),
                           centers=np.array([0.125, 0.375, 0.625, 0.875]),
                           widths=np.full(4, 0.25))
    with pytest.raises(DiagnosticsError, match="odd"):
        PoissonSolver(mesh)


# ------------------------------------------------- certified constants

def test_torus_poincare_constant_frozen():
    mesh = build_spatial_mesh(1.0, 51)
    assert torus_poincare_constant(mesh) == pytest.approx(
        0.31851128205606005, rel=1e-14)
    # doubling the torus doubles the constant at fixed cell count
    mesh2 = build_spatial_mesh(2.0, 51)
    assert torus_poincare_constant(mesh2) == pytest.approx(
        2.0 * 0.31851128205606005, rel=1e-13)


def test_certificate_constants_consistent_and_frozen():
    vmesh = make_phase_mesh(N=51, L=20, v_star=8.0).v
    xmesh = build_spatial_mesh(1.0, 51)
    C_P = torus_poincare_constant(xmesh)
    for M, eta_ref, beta_ref, c_ref in (
            (gaussian_fp(vmesh), 0.12350846651995857, 0.1139962894320318,
             1.2123129090773),
            (gaussian_bgk(vmesh), 0.1249270617566961, 0.11374495711218363,
             1.2134534579242515)):
        cfg = compute_eta_admissible(M, C_P, 0.1)
        assert 0.0 < cfg.eta < min(cfg.eta1, cfg.eta2)
        assert cfg.eta1 == pytest.approx(1.0 / (2.0 * math.sqrt(M.m2)),
                                         rel=1e-14)
        assert cfg.kappa == pytest.approx(2.0 * cfg.K_eta / cfg.K2,
                                          rel=1e-14)
        assert cfg.beta == pytest.approx(
            math.log(1.0 + cfg.dt_max * cfg.kappa) / cfg.dt_max, rel=1e-14)
        assert cfg.beta > 0 and cfg.big_c >= 1.0
        assert cfg.eta == pytest.approx(eta_ref, rel=1e-12)
        assert cfg.beta == pytest.approx(beta_ref, rel=1e-12)
        assert cfg.big_c == pytest.approx(c_ref, rel=1e-12)


# ------------------------------------------------- modified entropy

def test_modified_entropy_reduces_to_half_norm_without_micro_part():
    mesh = make_phase_mesh(N=9, L=2, v_star=1.5)
    M = gaussian_bgk(mesh.v)
    cfg = SchemeConfig(epsilon=0.0, dt=0.1, collision=BGK)
    s = init_state(random_distribution(mesh, M, seed=11), cfg)
    ecfg = compute_eta_admissible(M, torus_poincare_constant(mesh.x), 0.1)
    H = modified_entropy(s, s, ecfg, 1.0, 0.1)
    norms = state_norms(s, 1.0)
    assert H == pytest.approx(0.5 * norms.norm_to_eq ** 2, rel=1e-13)


def test_modified_entropy_memory_term():
    mesh = make_phase_mesh(N=9, L=2, v_star=1.5)
    M = gaussian_bgk(mesh.v)
    cfg = SchemeConfig(epsilon=0.0, dt=0.1, collision=BGK)
    s = init_state(random_distribution(mesh, M, seed=12), cfg)
    s_prev = init_state(random_distribution(mesh, M, seed=13), cfg)
    ecfg = compute_eta_admissible(M, torus_poincare_constant(mesh.x), 0.1)
    eps, dt = 0.8, 0.1
    base = modified_entropy(s, s, ecfg, eps, dt)
    shifted = modified_entropy(s, s_prev, ecfg, eps, dt)
    g = poisson_solve(s.lam, mesh.x).grad
    g_prev = poisson_solve(s_prev.lam, mesh.x).grad
    memory = 0.5 * float(mesh.x.widths @ (g - g_prev) ** 2) / dt
    assert shifted - base == pytest.approx(ecfg.eta * eps ** 2 * memory,
                                           rel=1e-11)


def test_modified_entropy_rejects_inadmissible_eta():
    mesh = make_phase_mesh(N=9, L=2, v_star=1.5)
    M = gaussian_bgk(mesh.v)
    ecfg = compute_eta_admissible(M, torus_poincare_constant(mesh.x), 0.1)
    bad = replace(ecfg, eta=ecfg.eta1 + ecfg.eta2)
    cfg = SchemeConfig(epsilon=0.0, dt=0.1, collision=BGK)
    s = init_state(random_distribution(mesh, M, seed=14), cfg)
    with pytest.raises(DiagnosticsError, match="admissible"):
        modified_entropy(s, s, bad, 1.0, 0.1)
    with pytest.raises(DiagnosticsError, match="admissible"):
        EntropyTracker(bad, mesh, 1.0, 0.1)


def test_entropy_tracker_streams_the_functional():
    mesh = make_phase_mesh(N=9, L=4, v_star=3.0)
    M = gaussian_bgk(mesh.v)
    eps, dt = 1.0, 0.1
    cfg = SchemeConfig(epsilon=eps, dt=dt, collision=BGK)
    sys = SchemeSystem(cfg, mesh, M)
    ecfg = compute_eta_admissible(M, torus_poincare_constant(mesh.x), dt)
    tracker = EntropyTracker(ecfg, mesh, eps, dt)

    s = init_state(random_distribution(mesh, M, seed=2), cfg)
    assert tracker.update(s) is None
    prev_s = s
    prev_H = None
    for _ in range(30):
        s = sys.step(s)
        H = tracker.update(s)
        assert H == pytest.approx(
            modified_entropy(s, prev_s, ecfg, eps, dt), rel=1e-12)
        if prev_H is not None:
            assert H <= prev_H * (1.0 + 1e-12)
        prev_s, prev_H = s, H


# ------------------------------------------------- series estimators

def test_fit_decay_rate_exact_exponential():
    t = np.linspace(0.0, 5.0, 251)
    fit = fit_decay_rate(t, 3.0 * np.exp(-2.0 * t))
    assert fit.rate == pytest.approx(-2.0, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_decay_rate_explicit_window():
    # two regimes; the window must isolate the second one
    t = np.linspace(0.0, 6.0, 601)
    y = np.where(t < 2.0, np.exp(-0.5 * t), np.exp(-1.0) * np.exp(-3.0 * (t - 2.0)))
    fit = fit_decay_rate(t, y, window=(3.0, 6.0))
    assert fit.rate == pytest.approx(-3.0, abs=1e-9)
    assert fit.window == (3.0, 6.0)
    assert fit.n_points == np.count_nonzero((t >= 3.0) & (t <= 6.0))


def test_fit_decay_rate_ignores_huge_transient():
    # an initial spike 10 orders above the asymptotic branch must not
    # drag the usable-sample floor with it
    t = np.linspace(0.0, 10.0, 1001)
    y = np.exp(-1.0 * t) * 1e-8
    y[:20] = 100.0
    fit = fit_decay_rate(t, y)
    assert fit.rate == pytest.approx(-1.0, abs=1e-6)


def test_fit_decay_rate_needs_positive_samples():
    t = np.linspace(0.0, 1.0, 50)
    with pytest.raises(DiagnosticsError):
        fit_decay_rate(t, np.zeros(50))


def test_oscillation_period_decaying_cosine():
    # maxima of e^{-t} cos(2 pi t / T) stay spaced exactly T apart
    t = np.arange(0.0, 15.0, 0.1)
    y = np.exp(-t) * np.cos(2.0 * np.pi * t / 4.33)
    est = estimate_oscillation_period(t, y)
    assert abs(est.period - 4.33) <= 0.05
    assert len(est.maxima_times) >= 3


def test_oscillation_period_norm_like_series():
    # a norm-like signal |cos| e^{-kt} peaks twice per rotation
    t = np.arange(0.0, 20.0, 0.05)
    y = np.exp(-0.3 * t) * np.abs(np.cos(2.0 * np.pi * t / 5.0))
    est = estimate_oscillation_period(t, y, floor_rel=1e-12)
    assert est.period == pytest.approx(2.5, abs=0.03)


def test_oscillation_period_offset_cosine():
    t = np.arange(0.0, 30.0, 0.02)
    y = (1.5 + np.cos(2.0 * np.pi * t / 3.7)) * np.exp(-0.1 * t)
    est = estimate_oscillation_period(t, y, floor_rel=1e-12)
    assert est.period == pytest.approx(3.7, rel=1e-2)


def test_oscillation_period_requires_three_maxima():
    t = np.linspace(0.0, 5.0, 200)
    with pytest.raises(DiagnosticsError, match="maxima"):
        estimate_oscillation_period(t, np.exp(-t))


def test_oscillation_floor_drops_buried_peaks():
    t = np.arange(0.0, 40.0, 0.05)
    y = np.exp(-0.5 * t) * (1.5 + np.cos(2.0 * np.pi * t / 4.0))
    est = estimate_oscillation_period(t, y, floor_rel=1e-4)
    assert np.all(np.interp(est.maxima_times, t, y) >= 1e-4 * np.max(y))
    assert est.period == pytest.approx(4.0, rel=2e-2)


def test_diagnostics_record_fields_match():
    assert DiagnosticsRecord.FIELDS == tuple(
        DiagnosticsRecord.__dataclass_fields__)
