"""End-to-end analysis of trials and their aggregation into report tables."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (GRAVITY, GrfSeries, NetJointLoadSeries, PhaseEvents, SegmentSpatialState,
                       contact_threshold, detect_stance, inverse_dynamics, resample_grf,
                       segment_spatial_states)
from .energetics import (PHASES, ROTATION_AXES, TRANSLATION_AXES, VARIANTS, Aggregate,
                         EnergyEntry, EnergySummary, ExtremaRow, FractionTable, JointPowerSeries,
                         NormalizedSeries, aggregate, energy_fractions, extrema_rows,
                         integrate_energy, joint_power, phase_normalize, time_normalize)
from .errors import AlignmentError, NoContactError
from .kinematics import (Calibration, JointStateSeries, MarkerFrameSeries, SegmentPoseSeries,
                         check_uniform, fit_segment_poses, joint_states)
from .model import LimbChain

logger = logging.getLogger(__name__)

GROUND = "ground"
GRF_AXES = ("forward", "transverse", "vertical")

# Quantity -> (axis names in storage order x, y, z; column order used in tables).
QUANTITIES = {
    "angle": (ROTATION_AXES, (1, 0, 2)),
    "moment": (ROTATION_AXES, (1, 0, 2)),
    "force": (TRANSLATION_AXES, (2, 1, 0)),
    "power_rotation": (ROTATION_AXES, (1, 0, 2)),
    "power_translation": (TRANSLATION_AXES, (2, 1, 0)),
}
UNITS = {"angle": "deg", "moment": "N.m/kg", "force": "N/kg", "power_rotation": "W/kg",
         "power_translation": "W/kg", "grf": "N/kg"}
EXTREMA_QUANTITIES = ("moment", "force", "power_rotation", "power_translation")


@dataclass(frozen=True)
class AnalysisOptions:
    cutoff_kin: float | None = 10.0
    cutoff_grf: float | None = 50.0
    contact_fraction: float = 0.02
    grid_points: int = 101
    decomposition: str = "cardan"
    max_gap: int = 5
    gravity: float = GRAVITY

    def __post_init__(self):
        if self.grid_points < 2:
            raise ValueError("grid_points must be at least 2")
        if self.contact_fraction < 0:
            raise ValueError("contact_fraction must be non-negative")


@dataclass
class TrialResult:
    trial_id: str
    chain: LimbChain
    options: AnalysisOptions
    poses: SegmentPoseSeries
    states: JointStateSeries
    spatial: SegmentSpatialState
    grf: GrfSeries  # aligned with the kinematic frames
    phases: PhaseEvents
    loads: NetJointLoadSeries
    power: JointPowerSeries
    energy: EnergySummary

    @property
    def times(self) -> np.ndarray:
        return self.states.times

    def series(self, joint: str, quantity: str) -> np.ndarray:
        """Per-frame values of a reported quantity, mass-normalized, ``(n, 3)``."""
        if joint == GROUND:
            if quantity != "grf":
                raise KeyError(quantity)
            return self.grf.force * self.loads.contact[:, None] / self.chain.body_mass
        if quantity == "angle":
            return np.rad2deg(self.states[joint].angles)
        if quantity == "moment":
            return self.loads.normalized_moment(joint)
        if quantity == "force":
            return self.loads.normalized_force(joint)
        if quantity == "power_rotation":
            return self.power.normalized(joint).rotational
        if quantity == "power_translation":
            return self.power.normalized(joint).translational
        raise KeyError(quantity)

    def stride_curve(self, joint: str, quantity: str) -> NormalizedSeries:
        t = self.times
        return time_normalize(self.series(joint, quantity), t, self.options.grid_points,
                              phase_boundary=min(self.phases.stance_end, t[-1]))

    def phase_window(self, phase: str) -> tuple[float, float]:
        t = self.times
        end = min(self.phases.stride_end, t[-1])
        if phase == "stance":
            return self.phases.stance_start, min(self.phases.stance_end, end)
        return min(self.phases.stance_end, end), end

    def phase_curve(self, joint: str, quantity: str, phase: str) -> NormalizedSeries | None:
        start, end = self.phase_window(phase)
        if not end > start:
            return None
        return phase_normalize(self.series(joint, quantity), self.times, start, end,
                               self.options.grid_points)


def analyze_trial(markers: MarkerFrameSeries, grf: GrfSeries, chain: LimbChain,
                  options: AnalysisOptions | None = None, trial_id: str = "trial",
                  calibration: Calibration | None = None, phases: PhaseEvents | None = None,
                  require_contact: bool = True) -> TrialResult:
    """Markers and force-plate data of one stride to loads, powers and work.

    Stance is detected on the raw force-plate signal unless ``phases`` is
    given.  With ``require_contact=False`` a trial without ground contact is
    analyzed as pure swing.
    """
    options = options or AnalysisOptions()
    times = markers.times
    check_uniform(times)
    poses = fit_segment_poses(markers, chain, options.max_gap)
    states = joint_states(chain, poses, calibration, options.cutoff_kin, options.decomposition)
    spatial = segment_spatial_states(chain, poses, options.cutoff_kin)
    threshold = contact_threshold(chain.body_mass, options.contact_fraction)
    if phases is None:
        try:
            phases = detect_stance(grf, threshold)
        except NoContactError:
            if require_contact:
                raise
            t0 = float(times[0])
            end = float(times[-1] + (times[1] - times[0]))
            phases = PhaseEvents(t0, t0, t0, end)
    aligned = resample_grf(grf, times, options.cutoff_grf, threshold)
    loads = inverse_dynamics(chain, spatial, aligned, options.gravity, threshold)
    power = joint_power(loads, states)
    energy = integrate_energy(power, phases)
    return TrialResult(trial_id, chain, options, poses, states, spatial, aligned, phases, loads,
                       power, energy)


@dataclass
class AnalysisReport:
    """Across-trial means and standard deviations in report-ready form."""

    joints: tuple[str, ...]
    trial_ids: tuple[str, ...]
    grid_points: int
    percent: np.ndarray
    boundary_index: int
    stance_fraction: Aggregate
    curves: dict[tuple[str, str], Aggregate]
    extrema: dict[str, list[ExtremaRow]]
    energy: dict[str, EnergySummary]
    energy_sd: dict[str, EnergySummary]
    fractions: dict[str, tuple[FractionTable, FractionTable]] = field(default_factory=dict)
    axis_energy: dict[tuple[str, str, str, str], tuple[EnergyEntry, EnergyEntry]] = field(
        default_factory=dict)


def _mean_summary(summaries: list[EnergySummary], variant: str):
    joints = summaries[0].joints
    mean, sd = {}, {}
    for joint in joints:
        for phase in PHASES:
            gen = aggregate([s.entry(joint, phase, variant).generated for s in summaries])
            absb = aggregate([s.entry(joint, phase, variant).absorbed for s in summaries])
            mean[(variant, joint, phase)] = EnergyEntry(gen.mean, absb.mean)
            sd[(variant, joint, phase)] = EnergyEntry(gen.sd, absb.sd)
    body = summaries[0].body_mass
    return EnergySummary(joints, body, mean), EnergySummary(joints, body, sd)


def _mean_fractions(tables: list[FractionTable]) -> tuple[FractionTable, FractionTable]:
    first = tables[0]

    def fold(key, attr):
        values = [getattr(t, attr)[key] for t in tables]
        if any(v is None for v in values):
            return None, None
        agg = aggregate(values)
        return agg.mean, agg.sd

    mean_p, sd_p, mean_j, sd_j = {}, {}, {}, {}
    for key in first.phase_share:
        mean_p[key], sd_p[key] = fold(key, "phase_share")
    for key in first.joint_share:
        mean_j[key], sd_j[key] = fold(key, "joint_share")
    return (FractionTable(first.variant, first.joints, mean_p, mean_j),
            FractionTable(first.variant, first.joints, sd_p, sd_j))


def summarize(results: list[TrialResult]) -> AnalysisReport:
    """Aggregate trials that share a chain layout and analysis options."""
    if not results:
        raise ValueError("summarize needs at least one trial")
    joints = tuple(results[0].chain.joint_names)
    if any(tuple(r.chain.joint_names) != joints for r in results):
        raise AlignmentError("trials use different joint lists")
    n_points = results[0].options.grid_points
    if any(r.options.grid_points != n_points for r in results):
        raise AlignmentError("trials use different grid sizes")

    stance = aggregate([r.phases.stance_fraction for r in results])
    boundary = int(np.clip(np.rint(stance.mean * (n_points - 1)), 0, n_points - 1))
    curves = {}
    targets = [(j, q) for j in joints for q in QUANTITIES] + [(GROUND, "grf")]
    for joint, quantity in targets:
        curves[(joint, quantity)] = aggregate([r.stride_curve(joint, quantity) for r in results])

    extrema: dict[str, list[ExtremaRow]] = {q: [] for q in EXTREMA_QUANTITIES + ("grf",)}
    for joint, quantity in targets:
        if quantity not in extrema:
            continue
        axes, order = QUANTITIES.get(quantity, (GRF_AXES, (2, 1, 0)))
        for phase in PHASES:
            curves_ph = [r.phase_curve(joint, quantity, phase) for r in results]
            curves_ph = [c for c in curves_ph if c is not None]
            if not curves_ph:
                continue
            agg = aggregate(curves_ph)
            mean = NormalizedSeries(curves_ph[0].percent, agg.mean[:, order])
            extrema[quantity].extend(extrema_rows(quantity, joint, [axes[k] for k in order],
                                                  phase, mean, np.asarray(agg.sd)[:, order]))

    energy, energy_sd, fractions = {}, {}, {}
    summaries = [r.energy for r in results]
    for variant in VARIANTS:
        energy[variant], energy_sd[variant] = _mean_summary(summaries, variant)
        if joints:
            fractions[variant] = _mean_fractions([energy_fractions(s, variant) for s in summaries])
    axis_energy = {}
    for key in summaries[0].axis_entries:
        gen = aggregate([s.axis_entries[key].generated for s in summaries])
        absb = aggregate([s.axis_entries[key].absorbed for s in summaries])
        axis_energy[key] = (EnergyEntry(gen.mean, absb.mean), EnergyEntry(gen.sd, absb.sd))

    percent = np.linspace(0.0, 100.0, n_points)
    return AnalysisReport(joints, tuple(r.trial_id for r in results), n_points, percent, boundary,
                          stance, curves, extrema, energy, energy_sd, fractions, axis_energy)
