"""Forward-inverse roundtrip metrics and the work-energy balance."""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from ..dynamics import SegmentSpatialState
from ..model import LimbChain
from ..pipeline import AnalysisOptions, TrialResult, analyze_trial
from .motion import mechanical_energy
from .scenario import GroundTruth, SyntheticScenario, simulate_forward


EDGE_FRAMES = 2
# Error floors and the work-energy floor as fractions of the chain's weight,
# weight x length, and so on.
ERROR_FLOOR = 1e-2
ENERGY_FLOOR = 1e-6


def relative_error(estimate, truth, mask=None, floor: float = 0.0) -> float:
    """``max|estimate - truth| / max(max|truth|, floor)`` pooled over all components.

    ``floor`` keeps the ratio meaningful when the true signal is (numerically)
    zero; with a zero floor and zero truth the absolute error is returned.
    """
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(truth, dtype=float)
    if mask is not None:
        est, ref = est[mask], ref[mask]
    err = float(np.max(np.abs(est - ref))) if est.size else 0.0
    scale = max(float(np.max(np.abs(ref))) if ref.size else 0.0, floor)
    return err / scale if scale > 0 else err


@dataclass(frozen=True)
class WorkEnergyBalance:
    """Integrated power against the change in mechanical energy (J)."""

    work: float
    delta_energy: float
    scale: float

    @property
    def residual(self) -> float:
        return self.work - self.delta_energy

    @property
    def relative(self) -> float:
        return abs(self.residual) / self.scale if self.scale > 0 else abs(self.residual)


def work_energy_balance(chain: LimbChain, times, spatial: SegmentSpatialState, joint_power_total,
                        boundary_force, boundary_moment, boundary_center, grf_force, grf_cop,
                        grf_free_moment=None, gravity: float = 9.81) -> WorkEnergyBalance:
    """Sum of joint power, power delivered by the parent segment and GRF power, integrated.

    The parent delivers ``F . v_parent(center) + M . omega_parent`` at the
    first joint; the ground delivers ``F . v_hoof(cop) + T_z omega_hoof_z``.
    The scale is the largest of the gross work done by all terms, the
    range of kinetic energy (so a conservative swing with no net work is
    still measured against the energy it exchanges) and a floor of 1e-6 of
    the chain's weight times its length (so a motionless chain is not
    measured against rounding noise).
    """
    t = np.asarray(times, dtype=float)
    parent = spatial[chain.parent.name]
    hoof = spatial[chain.segments[-1].name]
    p_joint = np.asarray(joint_power_total, dtype=float)
    p_parent = (np.einsum("ni,ni->n", boundary_force, parent.point_velocity(boundary_center))
                + np.einsum("ni,ni->n", boundary_moment, parent.omega))
    cop = np.nan_to_num(np.asarray(grf_cop, dtype=float))
    p_ground = np.einsum("ni,ni->n", grf_force, hoof.point_velocity(cop))
    if grf_free_moment is not None:
        p_ground = p_ground + np.asarray(grf_free_moment) * hoof.omega[:, 2]
    kinetic, potential = mechanical_energy(chain, spatial, gravity)
    energy = kinetic + potential
    work = float(np.trapezoid(p_joint + p_parent + p_ground, t))
    gross = float(np.trapezoid(np.abs(p_joint) + np.abs(p_parent) + np.abs(p_ground), t))
    weight_length = (sum(s.mass for s in chain.segments) * gravity
                     * sum(s.length for s in chain.segments))
    scale = max(gross, float(kinetic.max() - kinetic.min()), ENERGY_FLOOR * weight_length)
    return WorkEnergyBalance(work, float(energy[-1] - energy[0]), scale)


def truth_balance(truth: GroundTruth) -> WorkEnergyBalance:
    chain = truth.scenario.chain
    first = chain.joints[0].name
    total = sum(p.total for p in truth.power.values())
    return work_energy_balance(chain, truth.times, truth.motion.spatial(), total,
                               truth.loads[first].force_lab, truth.loads[first].moment_lab,
                               truth.motion.centers[first], truth.grf_force, truth.grf_cop,
                               truth.grf_free_moment, truth.scenario.gravity)


def result_balance(result: TrialResult) -> WorkEnergyBalance:
    loads = result.loads
    total = sum(result.power[j].total for j in result.chain.joint_names)
    first = loads[loads.first_joint]
    return work_energy_balance(result.chain, result.times, result.spatial, total, first.force_lab,
                               first.moment_lab, first.center, loads.grf_force, loads.grf_cop,
                               loads.grf_free_moment, result.options.gravity)


@dataclass
class RoundtripMetrics:
    """Worst relative errors of recovered quantities against ground truth.

    Per-joint values pool the three axes (and, for power, rotational and
    translational channels); ``frames`` is the number of frames compared.
    """

    scenario: str
    seed: int
    noise_sigma: float
    frames: int
    torque: dict[str, float]
    force: dict[str, float]
    power: dict[str, float]
    max_fit_residual: float
    work_energy: WorkEnergyBalance
    truth_work_energy: WorkEnergyBalance
    elapsed_s: float
    result: TrialResult | None = field(default=None, repr=False)
    truth: GroundTruth | None = field(default=None, repr=False)

    @property
    def max_torque_error(self) -> float:
        return max(self.torque.values())

    @property
    def max_force_error(self) -> float:
        return max(self.force.values())

    @property
    def max_power_error(self) -> float:
        return max(self.power.values())

    def as_dict(self) -> dict:
        return {"scenario": self.scenario, "seed": self.seed, "noise_sigma_m": self.noise_sigma,
                "frames": self.frames, "torque": self.torque, "force": self.force,
                "power": self.power, "max_fit_residual_m": self.max_fit_residual,
                "work_energy_relative": self.work_energy.relative,
                "truth_work_energy_relative": self.truth_work_energy.relative,
                "elapsed_s": self.elapsed_s}


def default_roundtrip_options(scenario: SyntheticScenario) -> AnalysisOptions:
    """No smoothing for noise-free data; standard cutoffs otherwise."""
    if scenario.noise_sigma == 0:
        return AnalysisOptions(cutoff_kin=None, cutoff_grf=None)
    return AnalysisOptions()


def roundtrip_check(scenario: SyntheticScenario, options: AnalysisOptions | None = None,
                    trim: int = EDGE_FRAMES, truth: GroundTruth | None = None) -> RoundtripMetrics:
    """Simulate, run the full inverse pipeline on the synthetic files, compare.

    ``trim`` frames at each end are left out of the error metrics: there
    the one-sided differences, applied twice for accelerations, are only
    first-order accurate.  The work-energy balance always spans the whole
    record.  Errors are relative to the peak true value, floored at 1 % of
    the chain's weight times its length (moments; powers additionally times
    sqrt(g/L)) or of its weight (forces), so that a quantity that is truly
    zero is not divided by rounding noise.
    """
    start = _time.perf_counter()
    truth = truth or simulate_forward(scenario)
    options = options or default_roundtrip_options(scenario)
    result = analyze_trial(truth.markers, truth.grf, scenario.chain, options,
                           trial_id=scenario.name, require_contact=False)
    n = len(truth.times)
    mask = np.zeros(n, dtype=bool)
    mask[trim:n - trim] = True
    chain = scenario.chain
    weight = chain.total_mass * scenario.gravity
    length = sum(s.length for s in chain.segments)
    floors = (ERROR_FLOOR * weight * length, ERROR_FLOOR * weight,
              ERROR_FLOOR * weight * length * np.sqrt(max(scenario.gravity, 1e-9) / length))
    torque, force, power = {}, {}, {}
    for joint in chain.joint_names:
        est, ref = result.loads[joint], truth.loads[joint]
        torque[joint] = relative_error(est.moment, ref.moment, mask, floors[0])
        force[joint] = relative_error(est.force, ref.force, mask, floors[1])
        p_est, p_ref = result.power[joint], truth.power[joint]
        power[joint] = relative_error(np.hstack([p_est.rotational, p_est.translational]),
                                      np.hstack([p_ref.rotational, p_ref.translational]), mask,
                                      floors[2])
    fit = max(float(track.residual.max()) for track in result.poses.tracks.values())
    elapsed = _time.perf_counter() - start
    return RoundtripMetrics(scenario.name, scenario.seed, scenario.noise_sigma, int(mask.sum()),
                            torque, force, power, fit, result_balance(result),
                            truth_balance(truth), elapsed, result, truth)


def dense(scenario: SyntheticScenario, rate: float = 1000.0) -> SyntheticScenario:
    """The same scenario sampled at ``rate`` with noise removed."""
    return replace(scenario, sample_rate=rate, noise_sigma=0.0)
