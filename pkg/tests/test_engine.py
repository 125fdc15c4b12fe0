"""Unit tests for initialization, the run loop, diagnostics, and stability."""

import numpy as np
import pytest

from piclab.domain import ELECTRON, GridSpec, ParticleEnsemble, SimConfig
from piclab.engine import (
    default_ensemble,
    init_two_stream,
    init_uniform_2d,
    load_ensemble,
    run,
    save_ensemble,
    stability_check,
)


def grid1d(ng=32, length=2 * np.pi):
    return GridSpec(dim=1, ng=ng, length=length)


def grid2d(ng=16, length=2 * np.pi):
    return GridSpec(dim=2, ng=ng, length=length)


def small_1d_config(**kw):
    base = dict(model="electrostatic-1d", ng=32, particles=400, steps=50, seed=7, v0=0.2)
    base.update(kw)
    return SimConfig(**base).validate()


def small_2d_config(**kw):
    base = dict(model="magnetized-2d", ng=16, particles=200, steps=20, seed=9,
                v0=0.3, length=16.0, dt=0.2)
    base.update(kw)
    return SimConfig(**base).validate()


# -- initialization -----------------------------------------------------------


def test_two_stream_symmetric_beams():
    ens = init_two_stream(4, grid1d(), drift_speed=0.5, perturbation=0.0, seed=1)
    np.testing.assert_array_equal(ens.velocities, [0.5, 0.5, -0.5, -0.5])
    assert np.mean(ens.velocities) == 0.0


def test_two_stream_deterministic():
    a = init_two_stream(100, grid1d(), 0.2, 1e-3, seed=42)
    b = init_two_stream(100, grid1d(), 0.2, 1e-3, seed=42)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.velocities, b.velocities)


def test_two_stream_odd_count_rejected():
    with pytest.raises(ValueError, match="even"):
        init_two_stream(5, grid1d(), 0.2, 0.0, seed=1)


def test_two_stream_positions_wrapped():
    ens = init_two_stream(1000, grid1d(), 0.2, 0.1, seed=3)
    assert np.all(ens.positions >= 0.0) and np.all(ens.positions < 2 * np.pi)


def test_uniform_2d_deterministic():
    a = init_uniform_2d(64, grid2d(), seed=5, drift_speed=0.1)
    b = init_uniform_2d(64, grid2d(), seed=5, drift_speed=0.1)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.velocities, b.velocities)


def test_uniform_2d_mean_position_statistics():
    # sample mean of uniforms should sit within 3 sigma of the center
    count = 10_000
    length = 2 * np.pi
    ens = init_uniform_2d(count, grid2d(length=length), seed=11)
    sigma = length / np.sqrt(12.0) / np.sqrt(count)
    for axis in range(2):
        assert abs(np.mean(ens.positions[:, axis]) - length / 2) < 3 * sigma


def test_uniform_2d_beam_recipe_per_axis():
    ens = init_uniform_2d(4, grid2d(), seed=2, drift_speed=0.7)
    np.testing.assert_array_equal(ens.velocities[:2], [[0.7, 0.7], [0.7, 0.7]])
    np.testing.assert_array_equal(ens.velocities[2:], [[-0.7, -0.7], [-0.7, -0.7]])


def test_ensemble_store_roundtrip_1d(tmp_path):
    path = tmp_path / "ic.csv"
    ens = init_two_stream(100, grid1d(), 0.2, 1e-3, seed=8, store_path=path)
    assert path.exists()
    again = load_ensemble(path, ELECTRON)
    assert np.array_equal(again.positions, ens.positions)
    assert np.array_equal(again.velocities, ens.velocities)
    # a second init call must reload the stored file, not regenerate
    third = init_two_stream(100, grid1d(), 0.2, 1e-3, seed=999, store_path=path)
    assert np.array_equal(third.positions, ens.positions)


def test_ensemble_store_roundtrip_2d(tmp_path):
    path = tmp_path / "ic2.csv"
    ens = init_uniform_2d(50, grid2d(), seed=8, drift_speed=0.4, store_path=path)
    again = load_ensemble(path, ELECTRON)
    assert np.array_equal(again.positions, ens.positions)
    assert np.array_equal(again.velocities, ens.velocities)


def test_save_load_csv_schema(tmp_path):
    path = tmp_path / "state.csv"
    ens = ParticleEnsemble(np.array([[1.0, 2.0]]), np.array([[0.1, -0.2]]), ELECTRON)
    save_ensemble(ens, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "particle_index,x,y,vx,vy"
    assert lines[1] == "0,1.0,2.0,0.1,-0.2"


# -- run loop -----------------------------------------------------------------


def test_run_equilibrium_stays_at_rest():
    # neutral node-aligned lattice: uniform density, zero field, no motion
    # (up to the 1e-16-level noise the mean-subtraction roundoff injects)
    cfg = small_1d_config(particles=32, steps=10)
    grid = cfg.grid()
    ens = ParticleEnsemble(grid.nodes().copy(), np.zeros(32), ELECTRON)
    final, diag, _ = run(cfg, ensemble=ens)
    np.testing.assert_array_equal(final.positions, grid.nodes())
    np.testing.assert_allclose(final.velocities, np.zeros(32), atol=1e-12)
    assert max(diag.kinetic) < 1e-28
    assert max(diag.field_energy) < 1e-28
    assert len(set(diag.charge)) == 1


def test_run_single_particle_larmor_circle():
    # the paired deposit/gather field exerts no self-force, so one particle
    # in a uniform Bz follows the analytic gyro-circle
    cfg = small_2d_config(particles=1, steps=40, pusher="cyclotronic", dt=0.25,
                          b_field=1.0)
    x0 = np.array([[8.0, 8.0]])
    v0 = np.array([[0.3, 0.0]])
    ens = ParticleEnsemble(x0.copy(), v0.copy(), ELECTRON)
    final, _, _ = run(cfg, ensemble=ens)
    omega = ELECTRON.charge * cfg.b_field / ELECTRON.mass
    t = cfg.steps * cfg.dt
    c, s = np.cos(omega * t), np.sin(omega * t)
    vx0, vy0 = v0[0]
    expected_x = x0[0] + np.array(
        [(vy0 - vy0 * c + vx0 * s) / omega, (-vx0 + vx0 * c + vy0 * s) / omega]
    )
    np.testing.assert_allclose(final.positions[0], expected_x, atol=1e-10)


def test_run_charge_constant():
    cfg = small_1d_config(steps=100)
    _, diag, _ = run(cfg)
    charges = np.array(diag.charge)
    assert np.max(np.
abs(charges - charges[0])) <= 1e-12 * abs(charges[0])


def test_run_momentum_conserved_without_field_filter():
    cfg = small_1d_config(steps=200)
    ens = default_ensemble(cfg)
    _, diag, _ = run(cfg, ensemble=ens)
    momenta = np.array([m[0] for m in diag.momentum])
    scale = ELECTRON.mass * np.sum(np.abs(ens.velocities))
    assert np.max(np.abs(momenta - momenta[0])) <= 1e-10 * scale


def test_run_two_stream_field_energy_grows():
    # linear-phase oracle: log field energy climbs before saturation
    cfg = small_1d_config(particles=2000, ng=32, steps=160, seed=12, v0=3.0,
                          perturbation=1e-3)
    _, diag, _ = run(cfg)
    fe = np.array(diag.field_energy)
    log_fe = np.array(diag.log_field_energy)
    window = log_fe[: 120]
    slope = np.polyfit(np.arange(window.size), window, 1)[0]
    assert slope > 0.0
    assert np.max(fe) > 100.0 * fe[0]


def test_run_deterministic_diagnostics(tmp_path):
    cfg = small_1d_config(steps=30)
    _, diag_a, _ = run(cfg)
    _, diag_b, _ = run(cfg)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    diag_a.to_csv(a)
    diag_b.to_csv(b)
    assert a.read_bytes() == b.read_bytes()


def test_run_does_not_mutate_input_ensemble():
    cfg = small_1d_config(steps=5)
    ens = default_ensemble(cfg)
    snapshot = ens.positions.copy()
    run(cfg, ensemble=ens)
    assert np.array_equal(ens.positions, snapshot)


def test_run_rejects_dimension_mismatch():
    cfg = small_1d_config()
    ens = ParticleEnsemble(np.zeros((4, 2)), np.zeros((4, 2)), ELECTRON)
    with pytest.raises(ValueError, match="dimension"):
        run(cfg, ensemble=ens)


def test_run_boris_total_energy_drift_not_worse_than_euler():
    # comparative invariant on the two-stream problem at equal dt, measured
    # through saturation; at this step size the second-order splitting holds
    # the total energy visibly tighter
    base = dict(particles=1000, ng=32, steps=400, seed=4, v0=1.0, perturbation=1e-3)
    cfg_boris = small_1d_config(pusher="boris-es", **base)
    cfg_boris.dt = 0.5 / cfg_boris.omega_pe()
    cfg_euler = cfg_boris.replace(pusher="euler")
    ens = default_ensemble(cfg_boris)

    def drift(cfg):
        _, diag, _ = run(cfg, ensemble=ens.copy())
        total = np.array(diag.total)
        return abs(total[-1] / total[0] - 1.0)

    assert drift(cfg_boris) <= drift(cfg_euler)


def test_run_frozen_field_mode():
    cfg = small_2d_config(particles=1, steps=10, frozen_field=True, pusher="boris-em")
    ens = ParticleEnsemble(np.array([[1.0, 1.0]]), np.array([[0.1, 0.0]]), ELECTRON)
    final, diag, _ = run(cfg, ensemble=ens)
    assert all(f == 0.0 for f in diag.field_energy)
    assert all(c == ELECTRON.charge for c in diag.charge)
    assert not np.array_equal(final.velocities, ens.velocities)


def test_run_boris_filter_zero_passes_matches_plain():
    base = dict(particles=400, steps=25, seed=21)
    cfg_plain = small_1d_config(pusher="boris-es", **base)
    cfg_filter = small_1d_config(pusher="boris-filter", filter_passes=0, **base)
    ens = default_ensemble(cfg_plain)
    final_a, _, _ = run(cfg_plain, ensemble=ens.copy())
    final_b, _, _ = run(cfg_filter, ensemble=ens.copy())
    assert np.array_equal(final_a.positions, final_b.positions)
    assert np.array_equal(final_a.velocities, final_b.velocities)


def test_run_predictor_corrector_static_field_matches_plain():
    # a node-aligned neutral lattice keeps the field identically zero, so the
    # averaged-field corrector changes nothing
    cfg = small_1d_config(particles=32, steps=10)
    grid = cfg.grid()
    ens = ParticleEnsemble(grid.nodes().copy(), np.full(32, 0.3), ELECTRON)
    plain, _, _ = run(cfg, ensemble=ens.copy())
    corrected, _, _ = run(cfg, ensemble=ens.copy(), predictor_corrector=True)
    np.testing.assert_allclose(plain.positions, corrected.positions, atol=1e-14)


def test_run_predictor_corrector_two_stream_stays_finite():
    cfg = small_1d_config(steps=50)
    _, diag, _ = run(cfg, predictor_corrector=True)
    assert np.all(np.isfinite(diag.total))


def test_diagnostics_csv_headers():
    cfg1 = small_1d_config(steps=3)
    _, diag1, _ = run(cfg1)
    assert diag1.header() == "step,time,kinetic,field,total,momentum_x,charge"
    cfg2 = small_2d_config(steps=3)
    _, diag2, _ = run(cfg2)
    assert diag2.header() == "step,time,kinetic,field,total,momentum_x,momentum_y,charge"
    assert len(diag2.step) == 3


# -- stability ----------------------------------------------------------------


def test_stability_langmuir_pass():
    cfg = small_1d_config(dt=0.2 / small_1d_config().omega_pe())
    report = stability_check(cfg)
    assert report.langmuir.status == "pass"
    assert report.all_applicable_pass


def test_stability_langmuir_fail():
    cfg = small_1d_config(dt=2.5 / small_1d_config().omega_pe())
    report = stability_check(cfg)
    assert report.langmuir.status == "fail"
    assert "Langmuir" in report.render()
    assert not report.all_applicable_pass


def test_stability_cold_beam_debye_not_applicable():
    report = stability_check(small_1d_config())
    assert report.debye.status == "n/a"
    assert "not applicable" in report.debye.detail


def test_stability_debye_with_thermal_speed():
    cfg = small_1d_config()
    hot = stability_check(cfg, thermal_speed=100.0)
    assert hot.debye.status == "pass"
    cold = stability_check(cfg, thermal_speed=1e-6)
    assert cold.debye.status == "fail"


def test_stability_cfl_reporting():
    cfg = small_1d_config(dt=1.0, theta=0.5)
    report = stability_check(cfg)
    assert report.cfl.status == "n/a"
    assert "implicit" in report.cfl.detail
    explicit = stability_check(small_1d_config(dt=100.0, theta=0.0))
    assert explicit.cfl.status == "fail"
    none_configured = stability_check(small_1d_config(dt=1.0))
    assert none_configured.cfl.status == "n/a"
