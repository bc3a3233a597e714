import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import read_fixture, reference_energy_table
from equikin.dynamics import JointLoadTrack, NetJointLoadSeries, PhaseEvents
from equikin.energetics import (EnergySummary, JointPower, JointPowerSeries, NormalizedSeries,
                                aggregate, energy_fractions, extrema, integrate_energy,
                                integrate_window, joint_power, phase_normalize, time_normalize)
from equikin.errors import AlignmentError
from equikin.kinematics import JointStateSeries, JointTrack
from equikin.model import AnatomicalConvention


def _single_joint(moment, force, omega, velocity, translations=True):
    n = len(moment)
    z = np.zeros((n, 3))
    times = np.arange(n) / 100.0
    load = JointLoadTrack(np.asarray(moment, float), np.asarray(force, float), z, z, z)
    loads = NetJointLoadSeries(times, {"elbow": load}, 10.0, np.zeros(n, bool), z, z, np.zeros(n),
                               "elbow")
    track = JointTrack(z, z, z, z, z, z, np.asarray(omega, float), np.asarray(velocity, float), z,
                       np.ones(n, bool), translations)
    states = JointStateSeries(times, {"elbow": track}, AnatomicalConvention.for_joints(["elbow"]))
    return loads, states


# --- power ----------------------------------------------------------------------

@pytest.mark.parametrize("w, expected", [(2.0, 6.0), (-2.0, -6.0)])
def test_moment_times_angular_velocity(w, expected):
    n = 5
    moment = np.tile([0.0, 3.0, 0.0], (n, 1))
    omega = np.tile([0.0, w, 0.0], (n, 1))
    loads, states = _single_joint(moment, np.zeros((n, 3)), omega, np.zeros((n, 3)))
    p = joint_power(loads, states)["elbow"]
    np.testing.assert_allclose(p.rotational[:, 1], expected)
    np.testing.assert_allclose(p.total, expected)


def test_translation_power_per_axis():
    n = 4
    force = np.tile([10.0, -4.0, 200.0], (n, 1))
    vel = np.tile([0.01, 0.5, -0.002], (n, 1))
    loads, states = _single_joint(np.zeros((n, 3)), force, np.zeros((n, 3)), vel)
    p = joint_power(loads, states)["elbow"]
    np.testing.assert_allclose(p.translational[0], [0.1, -2.0, -0.4])


def test_disabled_translations_contribute_no_power():
    n = 4
    loads, states = _single_joint(np.zeros((n, 3)), np.full((n, 3), 100.0), np.zeros((n, 3)),
                                  np.full((n, 3), 1.0), translations=False)
    assert not joint_power(loads, states)["elbow"].translational.any()


def test_power_on_misaligned_frames_rejected():
    loads, states = _single_joint(*(np.zeros((5, 3)),) * 4)
    states.times = states.times + 0.5
    with pytest.raises(AlignmentError):
        joint_power(loads, states)


def test_trot_carpus_translation_power_is_zero(trot_result):
    assert not trot_result.power["carpus"].translational.any()


# --- work ----------------------------------------------------------------------

def test_constant_power_work():
    t = np.linspace(0.0, 1.0, 101)
    e = integrate_window(t, np.full_like(t, 6.0), 0.0, 0.5)
    assert e.generated == pytest.approx(3.0, rel=1e-12)
    assert e.absorbed == 0.0


def test_sine_power_splits_evenly():
    t = np.linspace(0.0, 1.0, 20001)
    e = integrate_window(t, np.sin(2 * np.pi * t), 0.0, 1.0)
    assert e.generated == pytest.approx(1 / np.pi, rel=1e-6)
    assert e.absorbed == pytest.approx(-1 / np.pi, rel=1e-6)
    assert e.net == pytest.approx(0.0, abs=1e-12)


def test_zero_power_gives_zero_work():
    t = np.linspace(0.0, 1.0, 11)
    e = integrate_window(t, np.zeros_like(t), 0.2, 0.7)
    assert (e.generated, e.absorbed) == (0.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 0.95))
def test_adjacent_windows_add_up(split):
    t = np.linspace(0.0, 1.0, 57)
    p = np.sin(7 * t) + 0.3 * np.cos(19 * t)
    whole = integrate_window(t, p, 0.0, 1.0)
    a = integrate_window(t, p, 0.0, split)
    b = integrate_window(t, p, split, 1.0)
    assert a.net + b.net == pytest.approx(whole.net, abs=1e-12)


def test_reversed_window_rejected():
    with pytest.raises(ValueError):
        integrate_window([0.0, 1.0], [1.0, 1.0], 0.8, 0.2)


def test_phase_work_is_mass_normalized():
    t = np.arange(101) / 100.0
    power = JointPowerSeries(t, {"elbow": JointPower(np.tile([0.0, 20.0, 0.0], (101, 1)),
                                                     np.zeros((101, 3)))}, body_mass=10.0)
    phases = PhaseEvents(0.0, 0.0, 0.4, 1.01)
    s = integrate_energy(power, phases)
    assert s.entry("elbow", "stance").generated == pytest.approx(0.8)
    assert s.entry("elbow", "swing").generated == pytest.approx(1.2)
    assert s.entry("elbow", "stance", "translation").generated == 0.0


# --- fractions ------------------------------------------------------------------

def test_summary_net_is_generated_plus_absorbed():
    summary = EnergySummary.from_table(reference_energy_table())
    for joint in summary.joints:
        for phase in ("stance", "swing"):
            e = summary.entry(joint, phase)
            assert e.net == e.generated + e.absorbed
    elbow = summary.entry("elbow", "stance")
    assert elbow.net == pytest.approx(0.9171, abs=1e-4)


def test_reference_rows_satisfy_net_identity():
    # 1e-12 absorbs binary representation of the 4-decimal inputs
    for row in read_fixture("joint_energy_reference.csv"):
        for phase in ("stance", "swing"):
            gen, absb = float(row[f"{phase}_generated"]), float(row[f"{phase}_absorbed"])
            assert gen + absb == pytest.approx(float(row[f"{phase}_net"]), abs=1e-4 + 1e-12)


def test_fractions_match_reference_shares():
    table = energy_fractions(EnergySummary.from_table(reference_energy_table()))
    for row in read_fixture("combined_shares_reference.csv"):
        for column in ("stance_generated", "swing_generated", "stance_absorbed", "swing_absorbed"):
            phase, category = column.split("_")
            if row["row"] == "stride":
                got = table.phase_share[(category, phase)]
            else:
                got = table.joint_share[(category, phase, row["row"])]
            assert got == pytest.approx(float(row[column]), abs=1.0), (row["row"], column)


def test_single_joint_takes_everything():
    table = energy_fractions(EnergySummary.from_table({"elbow": {"stance": (2.0, -1.0),
                                                                 "swing": (0.5, -0.5)}}))
    assert table.joint_share[("generated", "stance", "elbow")] == 100.0
    assert table.phase_share[("generated", "stance")] == pytest.approx(80.0)


def test_zero_total_share_is_undefined():
    table = energy_fractions(EnergySummary.from_table({"elbow": {"stance": (0.0, 0.0),
                                                                 "swing": (1.0, 0.0)}}))
    assert table.joint_share[("generated", "stance", "elbow")] is None
    assert table.phase_share[("absorbed", "stance")] is None
    assert table.phase_share[("generated", "swing")] == 100.0


def test_fractions_invariant_to_common_scaling():
    ref = reference_energy_table()
    scaled = {j: {ph: (3.7 * g, 3.7 * a) for ph, (g, a) in v.items()} for j, v in ref.items()}
    a = energy_fractions(EnergySummary.from_table(ref))
    b = energy_fractions(EnergySummary.from_table(scaled))
    for key, value in a.joint_share.items():
        assert b.joint_share[key] == pytest.approx(value, rel=1e-12)


# --- normalization ----------------------------------------------------------------

def test_ramp_normalizes_exactly():
    t = np.linspace(0.2, 0.9, 60)
    s = time_normalize(3.0 * t - 1.0, t)
    np.testing.assert_allclose(s.values, 3.0 * np.linspace(0.2, 0.9, 101) - 1.0, atol=1e-12)
    assert s.percent[0] == 0.0 and s.percent[-1] == 100.0


@pytest.mark.parametrize("n", [37, 85, 240])
def test_endpoints_preserved_exactly(n, rng):
    y = rng.normal(size=n)
    s = time_normalize(y)
    assert s.values[0] == y[0] and s.values[-1] == y[-1]


def test_sine_resampled_accurately():
    t = np.linspace(0.0, 1.0, 85)
    s = time_normalize(np.sin(2 * np.pi * t), t)
    assert np.abs(s.values - np.sin(2 * np.pi * np.linspace(0, 1, 101))).max() < 1e-3


def test_integral_preserved():
    t = np.linspace(0.0, 0.7, 85)
    y = 1.0 + np.sin(2 * np.pi * t / 0.7) ** 2
    s = time_normalize(y, t)
    before = np.trapezoid(y, t) / 0.7
    after = np.trapezoid(s.values, s.percent) / 100.0
    assert after == pytest.approx(before, rel=5e-3)


def test_boundary_index_placement():
    t = np.linspace(0.0, 1.0, 50)
    assert time_normalize(t, t, phase_boundary=0.43).boundary_index == 43


def test_too_few_samples_rejected():
    with pytest.raises(ValueError):
        time_normalize([1.0, 2.0, 3.0])


def test_phase_window_resampling():
    t = np.arange(120) / 120.0
    s = phase_normalize(t ** 2, t, 0.25, 0.75, 11)
    np.testing.assert_allclose(s.values, np.linspace(0.25, 0.75, 11) ** 2, atol=1e-6)
    with pytest.raises(AlignmentError):
        phase_normalize(t, t, 0.5, 1.5)


# --- statistics -----------------------------------------------------------------

def test_mean_and_sample_sd():
    agg = aggregate([np.array([1.0]), np.array([3.0])])
    assert agg.mean[0] == 2.0 and agg.sd[0] == pytest.approx(np.sqrt(2.0))
    assert agg.n == 2 and not agg.single_trial


def test_single_trial_flagged_with_zero_sd():
    agg = aggregate([np.arange(5.0)])
    assert agg.single_trial and not np.any(agg.sd)


def test_sd_converges_for_many_draws(rng):
    draws = [rng.normal(2.0, 0.5, size=3) for _ in range(1000)]
    agg = aggregate(draws)
    np.testing.assert_allclose(agg.mean, 2.0, atol=0.05)
    np.testing.assert_allclose(agg.sd, 0.5, rtol=0.06)


def test_aggregate_rejects_mismatched_grids():
    with pytest.raises(AlignmentError):
        aggregate([np.zeros(101), np.zeros(51)])
    with pytest.raises(ValueError):
        aggregate([])


# --- extrema ------------------------------------------------------------------------

def test_extrema_of_reference_moment_curve():
    rows = read_fixture("elbow_flexion_moment_stance.csv")
    pct = np.array([float(r["percent_stance"]) for r in rows])
    values = np.array([float(r["moment_flex_ext_N_m_per_kg"]) for r in rows])
    e = extrema(NormalizedSeries(pct, values))
    assert e.maximum == pytest.approx(0.8597, abs=1e-4)
    assert e.max_percent == pytest.approx(78.0, abs=1.0)
    assert e.minimum == pytest.approx(-0.6863, abs=1e-4)
    assert e.min_percent == pytest.approx(14.0, abs=1.0)


def test_constant_series_ties_resolve_to_start():
    e = extrema(NormalizedSeries(np.linspace(0, 100, 101), np.full(101, 2.5)))
    assert e.maximum == e.minimum == 2.5
    assert e.max_percent == e.min_percent == 0.0


def test_negative_sine_extrema():
    pct = np.linspace(0, 100, 101)
    e = extrema(NormalizedSeries(pct, -np.sin(2 * np.pi * pct / 100)))
    assert (e.max_percent, e.min_percent) == (75.0, 25.0)
    assert e.maximum == pytest.approx(1.0) and e.minimum == pytest.approx(-1.0)


def test_phase_restricted_extrema():
    pct = np.linspace(0, 100, 101)
    s = NormalizedSeries(pct, np.sin(2 * np.pi * pct / 100), boundary_index=40)
    stance = extrema(s, "stance")
    swing = extrema(s, "swing")
    assert stance.max_index == 25 and stance.max_percent == pytest.approx(62.5)
    assert swing.min_index == 75
    with pytest.raises(ValueError):
        extrema(NormalizedSeries(pct, pct), "stance")
