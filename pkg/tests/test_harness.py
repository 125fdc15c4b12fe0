"""Unit tests for error norms, references, tableaus, and the benchmark."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from piclab.domain import ELECTRON, GridSpec, ParticleEnsemble, SimConfig
from piclab.engine import default_ensemble
from piclab.harness import (
    ReferenceNotConverged,
    build_tableau,
    bench_to_csv,
    conv_rate,
    err_l2,
    err_max,
    make_reference,
    reference_certificate,
    runtime_bench,
)

LENGTH = 2 * np.pi


def frozen_1p_config(**kw):
    base = dict(model="magnetized-2d", particles=1, ng=8, steps=10, seed=3,
                dt=0.2, b_field=1.0, frozen_field=True, v0=0.2)
    base.update(kw)
    return SimConfig(**base).validate()


# -- norms --------------------------------------------------------------------


def test_err_max_identical():
    pos = np.array([0.1, 2.0, 5.0])
    assert err_max(pos, pos, LENGTH) == 0.0


def test_err_max_single_displacement():
    a = np.array([1.0, 2.0])
    b = np.array([1.0, 2.3])
    assert err_max(a, b, LENGTH) == pytest.approx(0.3)


def test_err_max_minimal_image():
    # oracle: brute force over both image choices
    eps = 0.05
    a = np.array([0.0])
    b = np.array([LENGTH - eps])
    naive = abs(a[0] - b[0])
    wrapped = LENGTH - naive
    assert err_max(a, b, LENGTH) == pytest.approx(min(naive, wrapped))
    assert err_max(a, b, LENGTH) == pytest.approx(eps)


def test_err_max_2d_euclidean():
    a = np.array([[0.0, 0.0]])
    b = np.array([[0.3, 0.4]])
    assert err_max(a, b, LENGTH) == pytest.approx(0.5)


def test_err_max_count_mismatch():
    with pytest.raises(ValueError, match="shapes"):
        err_max(np.zeros(3), np.zeros(4), LENGTH)


def test_err_l2_identical():
    pos = np.array([0.5, 1.5])
    assert err_l2(pos, pos, 0.1, LENGTH) == 0.0


def test_err_l2_single_particle_unit_weight():
    assert err_l2(np.array([1.0]), np.array([1.25]), 1.0, LENGTH) == pytest.approx(0.25)


def test_err_l2_two_particles_half_weight():
    # sqrt(0.5 * 2 * delta^2) = delta
    delta = 0.2
    a = np.array([1.0, 3.0])
    b = a + delta
    assert err_l2(a, b, 0.5, LENGTH) == pytest.approx(delta)


def test_err_l2_bounded_by_err_max():
    rng = np.random.default_rng(0)
    count, dx = 50, 0.3
    a = rng.random((count, 2)) * LENGTH
    b = rng.random((count, 2)) * LENGTH
    assert err_l2(a, b, dx, LENGTH) <= math.sqrt(count * dx) * err_max(a, b, LENGTH) + 1e-12


def test_norm_axioms():
    rng = np.random.default_rng(5)
    a, b, c = (rng.random(40) * LENGTH for _ in range(3))
    # symmetry
    assert err_max(a, b, LENGTH) == pytest.approx(err_max(b, a, LENGTH))
    assert err_l2(a, b, 0.2, LENGTH) == pytest.approx(err_l2(b, a, 0.2, LENGTH))
    # zero iff identical modulo the period
    assert err_max(a, a + LENGTH, LENGTH) < 1e-12
    # triangle inequality
    assert err_max(a, c, LENGTH) <= err_max(a, b, LENGTH) + err_max(b, c, LENGTH) + 1e-12


def test_conv_rate_examples():
    assert conv_rate(1.0, 0.5) == pytest.approx(1.0)
    assert conv_rate(1.0, 0.25) == pytest.approx(2.0)
    assert conv_rate(1.0, 1.0) == pytest.approx(0.0)
    assert math.isnan(conv_rate(0.0, 0.5))
    assert math.isnan(conv_rate(0.5, 0.0))
    assert math.isnan(conv_rate(0.5, -1.0))


@given(
    st.floats(min_value=1e-12, max_value=1e3),
    st.floats(min_value=1e-12, max_value=1e3),
    st.floats(min_value=1e-6, max_value=1e6),
)
def test_conv_rate_scaling_invariant(e_coarse, e_fine, scale):
    base = conv_rate(e_coarse, e_fine)
    scaled = conv_rate(scale * e_coarse, scale * e_fine)
    assert scaled == pytest.approx(base, abs=1e-9)


# -- reference protocol ---------------------------------------------------------


def test_make_reference_free_streaming_exact():
    # a neutral node-aligned lattice moving rigidly feels no field, so any
    # step size integrates it exactly and the certificate is trivially met
    cfg = SimConfig(model="electrostatic-1d", particles=32, ng=32, steps=8,
                    dt=0.05, seed=1).validate()
    grid = cfg.grid()
    ens = ParticleEnsemble(grid.nodes().copy(), np.full(32, 0.3), ELECTRON)
    reference = make_reference(cfg, fine_divisor=4, ensemble=ens)
    analytic = (grid.nodes() + 0.3 * cfg.steps * cfg.dt) % grid.length
    assert err_max(reference.positions, analytic, grid.length) < 1e-12
    assert reference.certificate.passed


def test_certificate_gap_shrinks_with_divisor():
    cfg = frozen_1p_config(steps=8)
    ens = default_ensemble(cfg)
    gaps = []
    for divisor in (8, 16, 32):
        _, cert = reference_certificate(cfg, divisor, ensemble=ens)
        gaps.append(cert.gap)
    assert gaps[0] > gaps[1] > gaps[2]
    # first-order reference: the gap scales roughly linearly with the step
    assert gaps[1] / gaps[0] == pytest.approx(0.5, abs=0.2)


def test_certificate_gap_tracks_ode_oracle():
    # cross-check the fine reference against an adaptive ODE solve
    cfg = frozen_1p_config(steps=8)
    ens = default_ensemble(cfg)
    omega = ELECTRON.charge * cfg.b_field / ELECTRON.mass
    qm = ELECTRON.charge_over_mass

    def rhs(_, y):
        x, v = y[:2], y[2:]
        acc = qm * np.array([np.sin(x[0]), 0.0]) + omega * np.array([v[1], -v[0]])
        return np.concatenate([v, acc])

    y0 = np.concatenate([ens.positions[0], ens.velocities[0]])
    total = cfg.steps * cfg.dt
    sol = solve_ivp(rhs, (0.0, total), y0, method="DOP853", rtol=1e-12, atol=1e-13)
    exact = sol.y[:2, -1] % cfg.length
    for divisor, bound in ((16, None), (32, None)):
        positions, cert = reference_certificate(cfg, divisor, ensemble=ens)
        ode_err = err_max(positions, exact[None, :], cfg.length)
        # the self-difference gap and the true error shrink together
        assert ode_err < 4.0 * cert.gap
        assert cert.gap < 4.0 * ode_err


def test_make_reference_raises_when_divisor_too_small():
    # a second-order method at the base step out-resolves a dt/1 "reference"
    cfg = frozen_1p_config(steps=8, pusher="boris-em")
    with pytest.raises(ReferenceNotConverged, match="increase fine_divisor"):
        make_reference(cfg, fine_divisor=1)


# -- tableau ---------------------------------------------------------------------


def test_tableau_self_consistency_corner():
    # the finest cell of the reference method coincides with the reference run
    cfg = frozen_1p_config(steps=8, pusher="euler", fine_divisor=8)
    ens = default_ensemble(cfg)
    tableau = build_tableau(cfg, "euler", dt_levels=4, ensemble=ens)
    assert tableau.errors[-1, -1] == 0.0
    assert tableau.errors.shape == (1, 4)


def test_tableau_frozen_field_orders():
    # dt and divisor chosen so the coarsest level is asymptotic for the
    # first-order scheme while the reference offset stays below the
    # second-order schemes' finest-level errors
    cfg = frozen_1p_config(steps=8, dt=0.3, fine_divisor=4096)
    ens = default_ensemble(cfg)
    reference = make_reference(cfg.replace(pusher="euler"), ensemble=ens)
    rates = {}
    for method in ("euler", "boris-em", "cyclotronic"):
        tableau = build_tableau(cfg, method, dt_levels=4, reference=reference, ensemble=ens)
        rates[method] = tableau.summary_rate()
        # errors shrink monotonically along the step axis (5% slack)
        errs = tableau.errors[0]
        assert np.all(errs[1:] <= errs[:-1] * 1.05)
    assert rates["euler"] == pytest.approx(1.0, abs=0.3)
    assert rates["boris-em"] == pytest.approx(2.0, abs=0.3)
    assert rates["cyclotronic"] == pytest.approx(2.0, abs=0.3)


def test_tableau_csv_schema(tmp_path):
    cfg = frozen_1p_config(steps=4, fine_divisor=16)
    tableau = build_tableau(cfg, "boris-em", dt_levels=3)
    path = tmp_path / "tableau.csv"
    tableau.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "dx_level,dt_level,error,rate_dt,rate_dx"
    assert len(lines) == 1 + 3


def test_tableau_l2_norm_option():
    cfg = frozen_1p_config(steps=4, fine_divisor=16)
    tableau = build_tableau(cfg, "boris-em", norm="l2", dt_levels=2)
    assert tableau.norm == "l2"
    assert np.all(tableau.errors >= 0.0)


def test_tableau_rejects_bad_shape():
    from piclab.harness import ConvergenceTableau

    with pytest.raises(ValueError, match="non-negative"):
        ConvergenceTableau("euler", "max", [8], [1, 2], np.array([[1.0, -2.0]]))


# -- runtime benchmark ------------------------------------------------------------


def bench_config():
    return SimConfig(model="magnetized-2d", particles=200, ng=8, steps=3,
                     dt=0.05, seed=1, length=8.0).validate()


def test_bench_rows_sorted_and_complete():
    rows = runtime_bench(bench_config(), ["euler", "boris-em"], [16, 8], steps=2)
    assert len(rows) == 4
    assert [(r.method, r.ng) for r in rows] == [
        ("boris-em", 8), ("boris-em", 16), ("euler", 8), ("euler", 16)
    ]
    assert all(r.median_seconds >= 0.0 for r in rows)


def test_bench_grid_growth_costs_time():
    rows = runtime_bench(bench_config(), ["boris-em"], [8, 256], steps=4)
    small = next(r for r in rows if r.ng == 8)
    large = next(r for r in rows if r.ng == 256)
    assert large.median_seconds > small.median_seconds


def test_bench_zero_steps_overhead_floor():
    rows = runtime_bench(bench_config(), ["euler"], [8], steps=0)
    assert rows[0].median_seconds < 0.05


def test_bench_csv_schema(tmp_path):
    rows = runtime_bench(bench_config(), ["euler"], [8], steps=1)
    path = tmp_path / "bench.csv"
    bench_to_csv(rows, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "method,NG,dt,steps,median_seconds"
    assert lines[1].startswith("euler,8,")
