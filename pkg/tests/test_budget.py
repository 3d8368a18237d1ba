from dataclasses import replace

import numpy as np
import pytest

from rydsim.budget import (EXCLUSION_MECHANISMS, MonteCarloReport,
                           adiabatic_trace, decay_floor, exclusion_table,
                           monte_carlo_error, optimize_gate,
                           sweep_temperature_power)
from rydsim.noise import MechanismMask, bell_test_error


def test_optimized_error_sits_at_decay_floor(current_opt):
    assert abs(current_opt.error - current_opt.decay_floor) <= 2e-4
    assert current_opt.error > 0.0


def test_optimizer_restart_stability(current_params, current_opt):
    res2 = optimize_gate(current_params, seed=1)
    assert abs(res2.error - current_opt.error) < 1e-5


def test_projected_optimum(projected_opt):
    assert abs(projected_opt.error - projected_opt.decay_floor) <= 2e-4
    # shorter pulse at the higher projected Rabi rate
    assert projected_opt.gate.duration < 0.6e-6


def test_monte_carlo_all_off_equals_noiseless(current_params, current_opt):
    # no sampling spread: every shot reproduces the single noiseless error of
    # the all-mechanisms-off system (decay bits included in the mask)
    from rydsim.noise import NoiseSample
    gate = current_opt.gate
    mask = MechanismMask.all_off()
    rep = monte_carlo_error(current_params, gate, mask,
                            shots=100, seed=3, keep_errors=True)
    noiseless = bell_test_error(gate, current_params, NoiseSample.nominal(mask))
    assert rep.std_error == 0.0
    assert np.all(rep.errors == rep.errors[0])
    assert rep.mean_error == pytest.approx(max(noiseless, 0.0), abs=1e-12)


def test_monte_carlo_shot_errors_bounded(current_params, current_opt):
    rep = monte_carlo_error(current_params, current_opt.gate, shots=300,
                            seed=9, keep_errors=True)
    assert np.all(rep.errors >= 0.0) and np.all(rep.errors <= 1.0)
    assert 0.0 < rep.mean_error < 1.0
    assert rep.integration_failures == 0


def test_monte_carlo_deterministic(current_params, current_opt):
    r1 = monte_carlo_error(current_params, current_opt.gate, shots=200, seed=4)
    r2 = monte_carlo_error(current_params, current_opt.gate, shots=200, seed=4)
    assert r1.mean_error == r2.mean_error
    assert r1.std_error == r2.std_error


def test_monte_carlo_requires_min_shots(current_params, current_opt):
    with pytest.raises(ValueError):
        monte_carlo_error(current_params, current_opt.gate, shots=50, seed=0)


def test_doppler_error_linear_in_temperature(current_params, current_opt):
    temps = np.array([1.0, 5.0, 10.0, 15.0, 20.0])
    mask = MechanismMask.only("atom_velocity")
    errs = []
    for t in temps:
        local = replace(current_params, atom_temperature_uk=float(t))
        rep = monte_carlo_error(local, current_opt.gate, mask, shots=800,
                                seed=12)
        errs.append(rep.mean_error)
    coef = np.polyfit(temps, errs, 1)
    resid = np.array(errs) - np.polyval(coef, temps)
    r2 = 1.0 - np.sum(resid ** 2) / np.sum((errs - np.mean(errs)) ** 2)
    assert r2 > 0.99
    assert coef[0] > 0.0


def test_exclusion_linear_sum_identity(current_params, current_opt):
    rep = exclusion_table(current_params, current_opt.gate, shots=150, seed=6)
    assert len(rep.rows) == len(EXCLUSION_MECHANISMS) == 14
    assert rep.linear_sum == pytest.approx(
        sum(r.contribution for r in rep.rows), abs=1e-15)
    assert rep.quadrature_sum == pytest.approx(
        np.sqrt(sum(r.contribution ** 2 for r in rep.rows)), abs=1e-15)


def test_exclusion_rows_reproducible_across_seeds(current_params, current_opt):
    """Re-evaluated rows under a fresh seed agree within 3 combined sigma."""
    gate = current_opt.gate
    r1 = exclusion_table(current_params, gate, shots=1500, seed=21)
    r2 = exclusion_table(current_params, gate, shots=1500, seed=22)
    by_name_1 = {r.mechanism: r for r in r1.rows}
    by_name_2 = {r.mechanism: r for r in r2.rows}
    for name in ("Doppler (atom velocity)", "pulse energy fluctuation (blue)",
                 "blockade fluctuation (localization)"):
        a, b = by_name_1[name], by_name_2[name]
        sigma = np.hypot(a.std_error, b.std_error)
        assert abs(a.contribution - b.contribution) <= 3.0 * max(sigma, 1e-9)


def test_sweep_all_off_is_flat(current_params, current_opt):
    grid = sweep_temperature_power(
        current_params, current_opt.gate, [2.0, 8.0], [2.8, 10.0],
        shots=100, seed=2, mask=MechanismMask.all_off())
    assert np.ptp(grid.errors) <= 1e-12


def test_sweep_single_point(current_params, current_opt):
    grid = sweep_temperature_power(current_params, current_opt.gate,
                                   [4.0], [2.8], shots=120, seed=2)
    assert grid.errors.shape == (1, 1)


def test_adiabatic_trace_curve_shapes(current_params, current_opt):
    powers = np.array([2.8, 7.0, 16.0, 40.0])
    tr = adiabatic_trace(current_params, current_opt.gate, powers,
                         shots=600, seed=15)
    # T follows the cooling law anchored at the configured operating point
    assert tr.temperatures_uk[0] == pytest.approx(4.0, abs=1e-9)
    assert np.allclose(tr.temperatures_uk,
                       4.0 * np.sqrt(powers / 2.8), rtol=1e-12)
    # with velocity frozen, only localization errors remain, which shrink as
    # the traps stiffen at higher power
    assert tr.error_velocity_frozen[-1] < tr.error_velocity_frozen[0]
    # with position frozen, Doppler errors grow with temperature (power)
    assert tr.error_position_frozen[-1] > tr.error_position_frozen[0]


def test_worker_cap_does_not_change_results(current_params, current_opt,
                                            monkeypatch):
    r1 = monte_carlo_error(current_params, current_opt.gate, shots=200,
                           seed=5, chunk=64)
    monkeypatch.setenv("RYDSIM_THREADS", "1")
    r2 = monte_carlo_error(current_params, current_opt.gate, shots=200,
                           seed=5, chunk=64)
    assert r1.mean_error == r2.mean_error
    assert r1.std_error == r2.std_error


def test_report_dict_round_trips(current_params, current_opt):
    rep = monte_carlo_error(current_params, current_opt.gate, shots=100, seed=1)
    doc = rep.as_dict()
    assert doc["shots"] == 100 and doc["seed"] == 1
    assert set(doc["mask"]) == set(MechanismMask().as_dict())
