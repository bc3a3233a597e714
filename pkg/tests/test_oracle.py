import math
from dataclasses import replace

import numpy as np
import pytest

from equikin.errors import InputError, IntegrationDivergenceError
from equikin.oracle import (TrotParameters, builtin_scenario, relative_error, roundtrip_check,
                            scenario_from_config, simulate_forward, synth_trot, trot_scenario,
                            truth_balance)
from equikin.oracle.roundtrip import dense, result_balance
from equikin.pipeline import analyze_trial

WORK_ENERGY_SCENARIOS = ("single_pendulum", "double_pendulum", "static_stance", "prescribed_3d",
                         "synth_trot")


# --- forward model ---------------------------------------------------------------

def test_hanging_pendulum_stays_put():
    sc = replace(builtin_scenario("single_pendulum"), initial_flexion={}, duration=0.5)
    truth = simulate_forward(sc)
    for st in truth.motion.segments.values():
        assert np.abs(st.com - st.com[0]).max() < 1e-12


def test_small_swing_period():
    sc = builtin_scenario("single_pendulum")
    truth = simulate_forward(sc)
    q = truth.motion.joints[sc.chain.joint_names[0]].angles[:, 1]
    t = truth.times
    idx = np.flatnonzero((q[:-1] > 0) & (q[1:] <= 0))
    crossings = t[idx] + q[idx] / (q[idx] - q[idx + 1]) * (t[idx + 1] - t[idx])
    seg = sc.chain.segments[0]
    d = np.linalg.norm(seg.com_offset)
    expected = 2 * math.pi * math.sqrt((seg.inertia[1, 1] + seg.mass * d * d)
                                       / (seg.mass * sc.gravity * d))
    assert np.diff(crossings).mean() == pytest.approx(expected, rel=0.01)


def test_unforced_double_pendulum_conserves_energy():
    sc = replace(builtin_scenario("double_pendulum"), torques={})
    truth = simulate_forward(sc)
    e = truth.energy
    scale = np.ptp(truth.potential)
    assert np.abs(e - e[0]).max() / scale < 1e-6


def test_oversized_step_diverges():
    sc = replace(builtin_scenario("double_pendulum"), dt=0.25, sample_rate=4.0)
    with pytest.raises(IntegrationDivergenceError):
        simulate_forward(sc)


def test_step_must_divide_sample_interval():
    sc = replace(builtin_scenario("double_pendulum"), dt=0.003)
    with pytest.raises(InputError, match="whole number"):
        simulate_forward(sc)


# --- statics and forward-inverse roundtrips -------------------------------------------

def test_double_pendulum_roundtrip(double_pendulum_roundtrip):
    m = double_pendulum_roundtrip
    assert m.max_torque_error < 1e-3
    assert m.max_force_error < 1e-3
    assert m.max_power_error < 1e-3
    assert m.max_fit_residual < 1e-12
    assert m.elapsed_s < 10.0


@pytest.mark.parametrize("name", ["single_pendulum", "prescribed_3d"])
def test_other_roundtrips(name):
    m = roundtrip_check(builtin_scenario(name))
    assert max(m.max_torque_error, m.max_force_error, m.max_power_error) < 1e-3


def test_static_stance_contact_loads():
    m = roundtrip_check(builtin_scenario("static_stance"))
    for joint in m.truth.scenario.chain.joint_names:
        np.testing.assert_allclose(m.result.loads[joint].force, m.truth.loads[joint].force,
                                   rtol=0, atol=1e-9 * m.truth.scenario.chain.body_mass)
        np.testing.assert_allclose(m.result.loads[joint].moment, m.truth.loads[joint].moment,
                                   rtol=0, atol=1e-9 * m.truth.scenario.chain.body_mass)


@pytest.mark.parametrize("name", WORK_ENERGY_SCENARIOS)
def test_work_energy_theorem(name):
    m = roundtrip_check(dense(builtin_scenario(name)))
    assert truth_balance(m.truth).relative < 1e-3
    assert result_balance(m.result).relative < 1e-3


def test_marker_noise_on_trot_stays_below_ten_percent():
    sc = trot_scenario(TrotParameters(noise_sigma=1e-3, seed=3))
    m = roundtrip_check(sc, trim=12)
    assert m.max_torque_error < 0.10


def test_relative_error_floor():
    assert relative_error([1e-9], [0.0]) == pytest.approx(1e-9)
    assert relative_error([1e-9], [0.0], floor=1e-3) == pytest.approx(1e-6)
    assert relative_error([1.1, 2.0], [1.0, 2.0]) == pytest.approx(0.05)


# --- scenario documents -------------------------------------------------------------

def test_scenario_from_mapping():
    sc = scenario_from_config({"name": "knee_bend", "chain": "forelimb4", "duration": 0.5,
                               "sample_rate": 100,
                               "angles": {"carpus": {"flexion": {"sines": [[20, 2, 0]]}}}})
    truth = simulate_forward(sc)
    beta = np.degrees(truth.motion.joints["carpus"].angles[:, 1])
    np.testing.assert_allclose(beta, 20 * np.sin(4 * np.pi * truth.times), atol=1e-9)


@pytest.mark.parametrize("config, match", [
    ({"name": "x", "chain": "forelimb4", "duration": 1.0, "colour": "red", "angles": {}},
     "unknown"),
    ({"name": "x", "chain": "forelimb4", "duration": -1.0, "angles": {}}, "duration"),
    ({"name": "x", "chain": "forelimb4", "duration": 1.0, "angles": {"knee": {}}}, "knee"),
])
def test_bad_scenarios_rejected(config, match):
    with pytest.raises(InputError, match=match):
        scenario_from_config(config)


def test_unknown_builtin():
    with pytest.raises(InputError):
        builtin_scenario("gallop")


# --- trot --------------------------------------------------------------------------

def test_trot_stance_share_and_peak(trot_bundle, trot_result):
    assert 100 * trot_result.phases.stance_fraction == pytest.approx(43.5, abs=1.5)
    peak = trot_bundle.grf.force[:, 2].max() / trot_bundle.chain.body_mass
    assert peak == pytest.approx(9.44, rel=0.01)


def test_trot_contact_forces_dominate_in_stance(trot_result):
    r = trot_result
    mask = r.phases.stance_mask(r.times)
    for joint in r.chain.joint_names:
        f = np.linalg.norm(r.loads[joint].force, axis=1)
        assert f[mask].max() >= 5 * f[~mask].max()


def test_trot_is_reproducible():
    a, b = synth_trot(), synth_trot()
    np.testing.assert_array_equal(a.markers.positions, b.markers.positions)
    np.testing.assert_array_equal(a.grf.force, b.grf.force)


def test_trot_noise_depends_on_seed():
    a = synth_trot(TrotParameters(noise_sigma=1e-3, seed=1))
    b = synth_trot(TrotParameters(noise_sigma=1e-3, seed=2))
    assert not np.array_equal(a.markers.positions, b.markers.positions)


def test_motionless_limb_does_no_swing_work():
    bundle = synth_trot(TrotParameters(joint_amplitude=0.0))
    r = analyze_trial(bundle.markers, bundle.grf, bundle.chain)
    swing = ~r.phases.stance_mask(r.times)
    for joint in r.chain.joint_names:
        assert np.abs(np.degrees(r.states[joint].angles)).max() < 1e-6
        assert np.abs(r.power[joint].total[swing]).max() < 1e-6
        assert abs(r.energy.entry(joint, "swing").net) < 1e-9


@pytest.mark.parametrize("field, value", [("stance_fraction", 1.2), ("stride", 0.0),
                                          ("peak_grf", 0.1), ("joint_amplitude", -1.0)])
def test_invalid_trot_parameters(field, value):
    with pytest.raises(InputError):
        TrotParameters(**{field: value})
