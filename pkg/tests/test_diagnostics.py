"""Diagnostics: energy ledgers, interface extraction, vacuum geometry, balances."""

import numpy as np
import pytest

from viscoflux.diagnostics import (
    annulus_check_from_run,
    annulus_plateau_max_density,
    annulus_velocity_check,
    decay_comparison,
    detect_jumps,
    energy_report,
    extract_sides,
    interface_report,
    interface_work,
    lambda_jump_decay,
    manufactured_interface_state,
    particle_ode_residual,
    particle_residual_from_run,
    two_fluid_energy_balance,
    vacuum_overhang_cells,
    vacuum_report,
)
from viscoflux.errors import DomainError
from viscoflux.material import MaterialLaw
from viscoflux.radial import RadialGrid, RunResult, Scenario, divergence_cells, run
from viscoflux.scenarios import annulus_scenario, bump_scenario, canonical_law, jump_scenario, static_scenario

CANON = canonical_law()


def small_run(scenario, snapshot_every=50):
    return run(scenario, snapshot_every=snapshot_every)


def fabricated_result(scenario, times, rho, v):
    times = np.asarray(times, dtype=float)
    rho = np.asarray(rho, dtype=float)
    v = np.asarray(v, dtype=float)
    return RunResult(
        scenario=scenario,
        times=times,
        rho=rho,
        v=v,
        dt_at_snapshots=np.full(times.size, 1e-3),
        steps=0,
        clip_count=0,
        rho_min=float(rho.min()),
        rho_max=float(rho.max()),
        dt_min=1e-3,
        dt_max=1e-3,
        boundary_activity=0.0,
        partial=False,
    )


# -- energy ----------------------------------------------------------------------


def test_energy_report_static_is_flat():
    res = small_run(static_scenario(n_cells=64, T=0.05))
    rep = energy_report(res)
    assert np.all(rep.dissipation == 0.0)
    assert rep.max_residual == 0.0
    assert rep.growth_ratio == 1.0
    assert not rep.compact


def test_energy_report_bump_dissipates_within_budget():
    res = small_run(bump_scenario(n_cells=128, T=0.1))
    rep = energy_report(res)
    assert rep.energy[0] > 0
    assert np.all(rep.dissipation >= 0.0)
    # E + accumulated D must stay close to E(0); generous at this resolution
    assert rep.growth_ratio <= 1.02
    assert rep.max_residual < 1e-3 * rep.energy[0]


# -- interface detection and extraction -------------------------------------------


def piecewise_linear_profile(grid, r0=2.0, width_cells=2):
    """Linear on each side of a ramp of width_cells cells around r0."""
    r = grid.centers
    left = 2.0 + 0.1 * (r - r0)
    right = 1.0 + 0.05 * (r - r0)
    w = width_cells * grid.dr / 2.0
    t = np.clip((r - (r0 - w)) / (2.0 * w), 0.0, 1.0)
    return left * (1.0 - t) + right * t


def test_detect_jumps_finds_the_ramp():
    grid = RadialGrid(4.0, 256)
    rho = piecewise_linear_profile(grid)
    zones = detect_jumps(grid, rho)
    assert len(zones) == 1
    z = zones[0]
    assert abs(z.position - 2.0) <= 2 * grid.dr
    assert not z.near_edge


def test_detect_jumps_smooth_profile_returns_nothing():
    grid = RadialGrid(4.0, 128)
    rho = 1.0 + 0.3 * np.exp(-((grid.centers - 2.0) ** 2))
    assert detect_jumps(grid, rho) == []


def test_detection_is_resolution_free_for_smeared_interface():
    # The same physical transition (tanh of width 0.03) must be detected with
    # its full extent at every resolution; a per-face difference threshold
    # would truncate or lose it as dr shrinks, and extraction would then
    # sample inside the transition instead of the one-sided plateaus.
    for n in (256, 1024):
        grid = RadialGrid(4.0, n)
        r = grid.centers
        rho = 1.5 - 0.5 * np.tanh((r - 2.0) / 0.03)
        zones = [z for z in detect_jumps(grid, rho) if not z.near_edge]
        assert len(zones) == 1
        z = zones[0]
        width = (z.cell_right - z.cell_left) * grid.dr
        assert 0.05 < width < 0.4
        left, right = extract_sides(grid, rho, z)
        assert abs(left - 2.0) < 0.05
        assert abs(right - 1.0) < 0.05


def test_extraction_exact_for_piecewise_linear():
    grid = RadialGrid(4.0, 256)
    rho = piecewise_linear_profile(grid)
    zone = detect_jumps(grid, rho)[0]
    left, right = extract_sides(grid, rho, zone)
    r0 = zone.position
    assert left == pytest.approx(2.0 + 0.1 * (r0 - 2.0), abs=1e-12)
    assert right == pytest.approx(1.0 + 0.05 * (r0 - 2.0), abs=1e-12)


def test_extraction_refuses_near_edge_zone():
    grid = RadialGrid(4.0, 64)
    rho = np.where(grid.centers < 3 * grid.dr, 2.0, 1.0)
    zones = detect_jumps(grid, rho)
    assert zones and zones[0].near_edge
    with pytest.raises(DomainError):
        extract_sides(grid, rho, zones[0])


def test_manufactured_interface_has_uniform_discrete_divergence():
    grid = RadialGrid(4.0, 256)
    rho, v, s_out = manufactured_interface_state(CANON, grid, 2.0, 2.0, 1.0, s_inner=0.5)
    s = divergence_cells(grid, v)
    inner = grid.centers < 2.0
    assert np.max(np.abs(s[inner] - 0.5)) < 1e-12
    assert np.max(np.abs(s[~inner] - s_out)) < 1e-12


def test_manufactured_interface_is_flux_continuous():
    grid = RadialGrid(4.0, 512)
    rho, v, _ = manufactured_interface_state(CANON, grid, 2.0, 2.0, 1.0, s_inner=0.5)
    rep = interface_report(CANON, grid, rho, v, p_far=CANON.pressure(CANON.rho_tilde))
    assert rep.rh_residual <= 1e-12
    assert rep.rho_left == pytest.approx(2.0, abs=1e-12)
    assert rep.rho_right == pytest.approx(1.0, abs=1e-12)
    # Lambda(2) - Lambda(1) for the canonical law: 2 ln 2 + 3/2
    assert rep.lambda_jump == pytest.approx(2 * np.log(2) + 1.5, rel=1e-12)
    assert rep.pressure_jump == pytest.approx(3.0, abs=1e-12)


# -- jump decay --------------------------------------------------------------------


def frozen_pair_history(law, f_of_t, rho_plus0, rho_minus0, t1=0.5, n=501):
    """Integrate d Lambda(rho±)/dt = -(P(rho±) - P_far) - f(t) with fine RK4.

    Both sides feel the same forcing, so the jump obeys d[Lambda]/dt = -[P]
    exactly; this is the clean synthetic input for decay_comparison.
    """
    p_far = float(law.pressure(law.rho_tilde))

    def drho(t, rho):
        dlam = 2.0 * law.mu / rho + law.c_lam * rho ** (law.beta - 1.0)
        return (-(law.pressure(rho) - p_far) - f_of_t(t)) / dlam

    times = np.linspace(0.0, t1, n)
    out = np.empty((n, 2))
    y = np.array([rho_plus0, rho_minus0], dtype=float)
    out[0] = y
    for i in range(n - 1):
        t, h = times[i], times[i + 1] - times[i]
        for _ in range(4):  # 4 substeps per snapshot interval
            hh = h / 4.0
            k1 = drho(t, y)
            k2 = drho(t + hh / 2, y + hh / 2 * k1)
            k3 = drho(t + hh / 2, y + hh / 2 * k2)
            k4 = drho(t + hh, y + hh * k3)
            y = y + hh / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += hh
        out[i + 1] = y
    return times, out


def test_decay_comparison_exact_on_frozen_pair():
    law = CANON
    times, rho = frozen_pair_history(law, lambda t: 0.3 * np.sin(t), 2.0, 1.2)
    lam = law.big_lambda(rho[:, 0]) - law.big_lambda(rho[:, 1])
    pj = law.pressure(rho[:, 0]) - law.pressure(rho[:, 1])
    rep = decay_comparison(times, lam, pj)
    assert rep.max_rel_dev < 1e-6
    assert np.all(np.diff(np.abs(rep.measured)) < 0)  # the jump really decays


def test_decay_comparison_rejects_vanishing_jump():
    with pytest.raises(DomainError):
        decay_comparison([0.0, 0.1], [1.0, 0.0], [1.0, 1.0])


def test_lambda_jump_decay_on_evolved_interface():
    res = run(jump_scenario(n_cells=256, T=0.05), snapshot_every=400)
    rep = lambda_jump_decay(res)
    assert not rep.truncated
    assert rep.measured[0] > rep.measured[-1] > 0  # decay, no sign flip
    assert rep.max_rel_dev < 0.05


# -- vacuum geometry ---------------------------------------------------------------


def test_vacuum_report_on_annulus_run():
    res = run(annulus_scenario(n_cells=64, r_max=8.0, T=0.01, delta=1e-4), snapshot_every=100)
    rep = vacuum_report(res)
    assert rep.eps_vac == pytest.approx(1e-3)
    assert np.all(rep.measure > 0)
    assert rep.contained
    assert rep.r_inner[0] > 1.0 - 3 * res.grid.dr
    assert rep.r_outer[0] < 2.0 + 3 * res.grid.dr
    assert rep.density_ratio >= 1.0
    assert np.all(np.isfinite(rep.l4_distance))


def test_vacuum_report_without_vacuum():
    res = small_run(static_scenario(n_cells=64, T=0.02))
    rep = vacuum_report(res)
    assert np.all(rep.measure == 0.0)
    assert rep.contained
    assert np.all(np.isnan(rep.r_inner))


def annulus_profile(grid, delta, lo=2.0, hi=5.0, ramp=0.25):
    """Floor value on [lo+ramp, hi-ramp], far-field 1.0 outside, linear ramps."""
    r = grid.centers
    rho = np.ones_like(r)
    inside = (r >= lo + ramp) & (r <= hi - ramp)
    rho[inside] = delta
    left = (r > lo) & (r < lo + ramp)
    rho[left] = 1.0 + (delta - 1.0) * (r[left] - lo) / ramp
    right = (r > hi - ramp) & (r < hi)
    rho[right] = delta + (1.0 - delta) * (r[right] - (hi - ramp)) / ramp
    return rho


def wide_annulus_scenario(n_cells=128):
    return Scenario(
        law=CANON,
        grid=RadialGrid(8.0, n_cells),
        rho0=lambda r: np.ones_like(r),
        T=0.1,
        delta_floor=1e-2,
        mollifier_width=0.25,
    )


def test_plateau_max_skips_the_ramp_and_sees_interior_structure():
    sc = wide_annulus_scenario()
    grid = sc.grid
    rho = annulus_profile(grid, sc.delta_floor)
    # a single interior cell sits above the floor but below the flag threshold;
    # the plateau max must report it, not the ramp values near the edges
    k_mid = int(np.argmin(np.abs(grid.centers - 3.5)))
    rho[k_mid] = 1.5e-2
    res = fabricated_result(sc, [0.0, 0.1], [rho, rho], np.zeros((2, grid.n_cells + 1)))
    assert annulus_plateau_max_density(res) == pytest.approx(1.5e-2, abs=1e-15)


def test_plateau_max_refuses_annulus_narrower_than_the_margin():
    sc = wide_annulus_scenario()
    grid = sc.grid
    # detected run barely wider than one margin: no interior survives the shrink
    rho = annulus_profile(grid, sc.delta_floor, lo=2.0, hi=2.9)
    res = fabricated_result(sc, [0.0, 0.1], [rho, rho], np.zeros((2, grid.n_cells + 1)))
    with pytest.raises(DomainError):
        annulus_plateau_max_density(res)


def test_overhang_zero_when_flags_and_interfaces_both_stand_still():
    sc = wide_annulus_scenario()
    grid = sc.grid
    rho = annulus_profile(grid, sc.delta_floor)
    res = fabricated_result(sc, [0.0, 0.1], [rho, rho], np.zeros((2, grid.n_cells + 1)))
    assert vacuum_overhang_cells(res) == 0.0


def test_overhang_measures_escaped_flags_in_cell_units():
    sc = wide_annulus_scenario()
    grid = sc.grid
    rho0 = annulus_profile(grid, sc.delta_floor)
    eps = 10.0 * sc.delta_floor
    hi = int(np.nonzero(rho0 < eps)[0][-1])
    # two extra cells drop below the flag threshold while v = 0 keeps the
    # tracked interfaces in place: the outermost flagged center then sits
    # 1.5 dr beyond the initial outer face
    rho1 = rho0.copy()
    rho1[hi + 1] = sc.delta_floor
    rho1[hi + 2] = sc.delta_floor
    res = fabricated_result(sc, [0.0, 0.1], [rho0, rho1], np.zeros((2, grid.n_cells + 1)))
    assert vacuum_overhang_cells(res) == pytest.approx(1.5, abs=1e-12)


def test_overhang_needs_an_initial_vacuum():
    sc = wide_annulus_scenario()
    grid = sc.grid
    rho = np.ones(grid.n_cells)
    res = fabricated_result(sc, [0.0, 0.1], [rho, rho], np.zeros((2, grid.n_cells + 1)))
    with pytest.raises(DomainError):
        vacuum_overhang_cells(res)


def test_plateau_and_overhang_on_a_short_floored_run():
    res = run(annulus_scenario(n_cells=256, r_max=8.0, T=0.02, delta=1e-2), snapshot_every=200)
    plateau = annulus_plateau_max_density(res)
    # the plateau tracks the floor scale, an order of magnitude under the flag
    # threshold 10 delta
    assert 1e-3 < plateau < 3e-2
    assert vacuum_overhang_cells(res) < 2.0


def test_annulus_fit_recovers_exact_profile():
    # v = -r + 2/r on the annulus 1 < r < 2: alpha = -1, beta = 2, and the
    # edge identity gives 2 alpha = 2(a v_a - b v_b)/(a^2 - b^2) = -2.
    grid = RadialGrid(4.0, 128)
    rho = np.where((grid.centers > 1.0) & (grid.centers < 2.0), 1e-6, 1.0)
    v = np.zeros(grid.n_cells + 1)
    band = (grid.faces >= 1.0) & (grid.faces <= 2.0)
    v[band] = -grid.faces[band] + 2.0 / grid.faces[band]
    fit = annulus_velocity_check(grid, rho, v, eps_vac=1e-5)
    assert not fit.skipped
    assert fit.a == pytest.approx(1.0) and fit.b == pytest.approx(2.0)
    assert fit.v_a == pytest.approx(1.0) and fit.v_b == pytest.approx(-1.0)
    assert fit.alpha == pytest.approx(-1.0, abs=1e-10)
    assert fit.beta == pytest.approx(2.0, abs=1e-10)
    assert fit.rms < 1e-12
    assert fit.two_alpha == pytest.approx(-2.0, abs=1e-10)
    assert fit.rhs_identity == pytest.approx(-2.0, abs=1e-12)
    assert fit.rel_gap < 1e-9


def test_annulus_fit_skips_thin_annulus():
    grid = RadialGrid(4.0, 64)
    rho = np.where((grid.centers > 1.0) & (grid.centers < 1.2), 1e-6, 1.0)
    fit = annulus_velocity_check(grid, rho, np.zeros(65), eps_vac=1e-5)
    assert fit.skipped
    assert "interior faces" in fit.note


def test_annulus_fit_from_short_run():
    res = run(annulus_scenario(n_cells=256, r_max=8.0, T=0.02, delta=1e-2), snapshot_every=2000)
    fit = annulus_check_from_run(res)
    assert not fit.skipped
    assert fit.rms_rel < 0.05
    assert fit.rel_gap < 0.05


# -- moving-boundary energy balance ------------------------------------------------


def test_interface_work_hand_value():
    # a=1, b=2, v(a)=1, v(b)=-1, mu=1: alpha=-1, F_vac=4*mu*alpha=-4, work=-4.
    assert interface_work(1.0, 1.0, 2.0, 1.0, -1.0) == pytest.approx(-4.0, abs=1e-14)


def test_two_fluid_balance_on_annulus_run():
    # Donor-cell entropy production at the interface ramps scales like
    # dr / ramp width, so the gap shrinks with resolution: measured 0.091
    # here (n=256, 8 ramp cells) and 0.037 at n=1024 over the full window.
    res = run(annulus_scenario(n_cells=256, r_max=8.0, T=0.05, delta=1e-2), snapshot_every=400)
    rep = two_fluid_energy_balance(res)
    assert not rep.truncated
    assert rep.scale > 0
    assert rep.max_gap_rel < 0.10
    # interfaces barely move over this window
    assert abs(rep.a_track[-1] - rep.a_track[0]) < 0.2


# -- particle-form momentum --------------------------------------------------------


def test_particle_ode_residual_synthetic_path():
    # rho(t) prescribed, F defined to balance the identity exactly; the only
    # residual left is the centred-difference error, way below 10*dt.
    law = CANON
    dt = 1e-3
    times = np.arange(0.0, 0.5 + dt / 2, dt)
    rho = 1.0 + 0.3 * np.sin(times)
    dlam_dt = (2.0 * law.mu / rho + law.c_lam * rho ** (law.beta - 1.0)) * 0.3 * np.cos(times)
    p_dev = law.pressure(rho) - law.pressure(law.rho_tilde)
    f = -dlam_dt - p_dev
    res = particle_ode_residual(law, times, rho, f)
    assert np.max(np.abs(res)) < 10.0 * dt


def test_particle_ode_residual_rejects_vacuum_path():
    with pytest.raises(DomainError):
        particle_ode_residual(CANON, [0, 1e-3, 2e-3], [1.0, 0.0, 1.0], [0.0, 0.0, 0.0])


def test_particle_residual_from_bump_run():
    res = run(bump_scenario(n_cells=128, T=0.1), snapshot_every=20)
    rep = particle_residual_from_run(res, [1.0, 2.0])
    assert not rep.truncated
    assert np.isfinite(rep.l2)
    assert rep.l2 < 1.0  # the identity holds approximately at modest resolution


def test_particle_residual_truncates_at_vacuum():
    law = canonical_law()
    grid = RadialGrid(4.0, 32)
    scen = Scenario(law=law, grid=grid, rho0=lambda r: np.ones_like(r), T=0.4, mollifier_width=0.0)
    times = np.linspace(0.0, 0.4, 5)
    rho = np.ones((5, 32))
    rho[4, :] = 1e-13  # the last snapshot collapses to vacuum
    v = np.zeros((5, 33))
    fake = fabricated_result(scen, times, rho, v)
    rep = particle_residual_from_run(fake, [1.0])
    assert rep.truncated
    assert "vacuum" in rep.note
    assert rep.times[-1] < 0.4
