"""Joint power, phase-partitioned work, time normalization and summary statistics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .dynamics import NetJointLoadSeries, PhaseEvents
from .errors import AlignmentError, InputError
from .kinematics import JointStateSeries

logger = logging.getLogger(__name__)

# Component order of every 3-vector below is (x, y, z) on the distal axes.
ROTATION_AXES = ("add_abd", "flex_ext", "int_ext")
TRANSLATION_AXES = ("cranial_caudal", "medio_lateral", "prox_dist")
PHASES = ("stance", "swing")
VARIANTS = ("rotation", "translation", "combined")
CATEGORIES = ("generated", "absorbed")


@dataclass
class JointPower:
    rotational: np.ndarray  # W, (n, 3)
    translational: np.ndarray  # W, (n, 3)

    @property
    def total(self) -> np.ndarray:
        return self.rotational.sum(axis=1) + self.translational.sum(axis=1)


@dataclass
class JointPowerSeries:
    times: np.ndarray
    joints: dict[str, JointPower]
    body_mass: float

    def __getitem__(self, joint: str) -> JointPower:
        return self.joints[joint]

    def normalized(self, joint: str) -> JointPower:
        p = self.joints[joint]
        return JointPower(p.rotational / self.body_mass, p.translational / self.body_mass)

    def variant(self, joint: str, variant: str) -> np.ndarray:
        p = self.joints[joint]
        if variant == "rotation":
            return p.rotational.sum(axis=1)
        if variant == "translation":
            return p.translational.sum(axis=1)
        if variant == "combined":
            return p.total
        raise ValueError(f"unknown variant {variant!r}")


def joint_power(loads: NetJointLoadSeries, states: JointStateSeries) -> JointPowerSeries:
    """Per-axis products of joint loads with the matching relative velocities.

    Positive power means the joint moment (or force) acts in the direction
    of the relative motion, i.e. energy generation.
    """
    if len(loads.times) != len(states.times) or not np.allclose(loads.times, states.times,
                                                                rtol=0, atol=1e-9):
        raise AlignmentError("loads and joint states are not aligned")
    out = {}
    for name, load in loads.joints.items():
        st = states[name]
        rot = load.moment * st.angular_velocity
        if st.translations_enabled:
            trans = load.force * st.linear_velocity
        else:
            trans = np.zeros_like(rot)
        out[name] = JointPower(rot, trans)
    return JointPowerSeries(np.asarray(loads.times, dtype=float), out, loads.body_mass)


# ---------------------------------------------------------------------------
# Work
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyEntry:
    generated: float
    absorbed: float

    @property
    def net(self) -> float:
        return self.generated + self.absorbed


def power_channels(power) -> tuple[np.ndarray, np.ndarray]:
    """Split signed power into its generation (>= 0) and absorption (<= 0) parts."""
    p = np.asarray(power, dtype=float)
    return np.maximum(p, 0.0), np.minimum(p, 0.0)


def integrate_window(times, power, start: float, end: float) -> EnergyEntry:
    """Trapezoidal work of the positive and negative parts of ``power``.

    The window edges are added to the sample grid by linear interpolation, so
    windows sharing an edge add up to the work over their union.
    """
    t = np.asarray(times, dtype=float)
    p = np.asarray(power, dtype=float)
    if end < start:
        raise ValueError("window end precedes its start")
    inside = (t > start) & (t < end)
    grid = np.concatenate([[start], t[inside], [end]])
    positive, negative = power_channels(np.interp(grid, t, p))
    gen = np.trapezoid(positive, grid)
    absb = np.trapezoid(negative, grid)
    return EnergyEntry(float(gen), float(absb))


@dataclass
class EnergySummary:
    """Generated / absorbed work per joint and phase, in J/kg.

    ``entries`` is keyed by ``(variant, joint, phase)``; ``axis_entries`` by
    ``(joint, kind, axis, phase)`` with kind ``"rotation"`` or ``"translation"``.
    """

    joints: tuple[str, ...]
    body_mass: float
    entries: dict[tuple[str, str, str], EnergyEntry]
    axis_entries: dict[tuple[str, str, str, str], EnergyEntry] = field(default_factory=dict)

    def entry(self, joint: str, phase: str, variant: str = "combined") -> EnergyEntry:
        return self.entries[(variant, joint, phase)]

    def total(self, phase: str, variant: str = "combined") -> EnergyEntry:
        rows = [self.entries[(variant, j, phase)] for j in self.joints]
        return EnergyEntry(sum(r.generated for r in rows), sum(r.absorbed for r in rows))

    @classmethod
    def from_table(cls, table: Mapping[str, Mapping[str, tuple[float, float]]],
                   variant: str = "combined", body_mass: float = 1.0) -> "EnergySummary":
        """Build from ``{joint: {phase: (generated, absorbed)}}`` values in J/kg."""
        entries = {}
        for joint, phases in table.items():
            for phase in PHASES:
                gen, absb = phases[phase]
                entries[(variant, joint, phase)] = EnergyEntry(float(gen), float(absb))
        return cls(tuple(table), body_mass, entries)


def integrate_energy(power: JointPowerSeries, phases: PhaseEvents, times=None,
                     normalize: bool = True) -> EnergySummary:
    """Integrate power over the stance and swing windows of one stride."""
    t = np.asarray(power.times if times is None else times, dtype=float)
    start, boundary = phases.stance_start, phases.stance_end
    end = min(phases.stride_end, t[-1])
    tol = 1e-9
    # The last frame stands for the interval after it, so a stance that
    # lasts to the end of the record ends at the last frame.
    if end < boundary <= end + (t[-1] - t[-2]) + tol:
        boundary = end
    if start < t[0] - tol or boundary > end + tol or start > boundary:
        raise InputError(f"phase boundaries ({start:g}, {boundary:g}) fall outside "
                         f"the sampled span [{t[0]:g}, {t[-1]:g}] s")
    if (t < start - tol).any():
        logger.warning("%d frames precede stance onset and are excluded from work",
                       int((t < start - tol).sum()))
    windows = {"stance": (start, boundary), "swing": (boundary, end)}
    scale = 1.0 / power.body_mass if normalize else 1.0

    def work(series, window):
        e = integrate_window(t, series, *window)
        return EnergyEntry(e.generated * scale, e.absorbed * scale)

    entries, axis_entries = {}, {}
    for joint, p in power.joints.items():
        for phase, window in windows.items():
            for variant in VARIANTS:
                entries[(variant, joint, phase)] = work(power.variant(joint, variant), window)
            for k, axis in enumerate(ROTATION_AXES):
                axis_entries[(joint, "rotation", axis, phase)] = work(p.rotational[:, k], window)
            for k, axis in enumerate(TRANSLATION_AXES):
                axis_entries[(joint, "translation", axis, phase)] = work(p.translational[:, k], window)
    return EnergySummary(tuple(power.joints), power.body_mass if normalize else 1.0,
                         entries, axis_entries)


@dataclass
class FractionTable:
    """Percentage shares; ``None`` marks a share whose category total is zero.

    ``phase_share[(category, phase)]`` is the phase's share of the stride total;
    ``joint_share[(category, phase, joint)]`` is the joint's share within a phase.
    """

    variant: str
    joints: tuple[str, ...]
    phase_share: dict[tuple[str, str], float | None]
    joint_share: dict[tuple[str, str, str], float | None]


def _share(part: float, whole: float) -> float | None:
    if whole == 0:
        return None
    return 100.0 * part / whole


def energy_fractions(summary: EnergySummary, variant: str = "combined") -> FractionTable:
    phase_share, joint_share = {}, {}
    for category in CATEGORIES:
        totals = {ph: getattr(summary.total(ph, variant), category) for ph in PHASES}
        stride = sum(totals.values())
        for phase in PHASES:
            phase_share[(category, phase)] = _share(totals[phase], stride)
            for joint in summary.joints:
                value = getattr(summary.entry(joint, phase, variant), category)
                joint_share[(category, phase, joint)] = _share(value, totals[phase])
    return FractionTable(variant, summary.joints, phase_share, joint_share)


# ---------------------------------------------------------------------------
# Time normalization and statistics
# ---------------------------------------------------------------------------

@dataclass
class NormalizedSeries:
    percent: np.ndarray
    values: np.ndarray
    boundary_index: int | None = None


def time_normalize(values, times=None, n_points: int = 101, phase_boundary: float | None = None
                   ) -> NormalizedSeries:
    """Resample onto a uniform percent grid with a natural cubic spline.

    ``values`` is sampled along axis 0.  ``phase_boundary`` (a time, or a
    sample position when ``times`` is None) is mapped to the nearest grid index.
    """
    y = np.asarray(values, dtype=float)
    if len(y) < 4:
        raise ValueError("time normalization needs at least 4 samples")
    x = np.arange(len(y), dtype=float) if times is None else np.asarray(times, dtype=float)
    if len(x) != len(y):
        raise AlignmentError("times and values differ in length")
    u = (x - x[0]) / (x[-1] - x[0])
    grid = np.linspace(0.0, 1.0, n_points)
    out = CubicSpline(u, y, axis=0, bc_type="natural")(grid)
    out[0] = y[0]
    out[-1] = y[-1]
    boundary = None
    if phase_boundary is not None:
        frac = (phase_boundary - x[0]) / (x[-1] - x[0])
        boundary = int(np.clip(np.rint(frac * (n_points - 1)), 0, n_points - 1))
    return NormalizedSeries(grid * 100.0, out, boundary)


def phase_normalize(values, times, start: float, end: float, n_points: int = 101
                    ) -> NormalizedSeries:
    """Resample the window ``[start, end]`` of a sampled series onto a percent grid.

    The spline runs through every sample of the series, so window edges that
    fall between frames are interpolated rather than clipped.
    """
    y = np.asarray(values, dtype=float)
    t = np.asarray(times, dtype=float)
    if len(y) < 4:
        raise ValueError("time normalization needs at least 4 samples")
    if not end > start:
        raise ValueError("empty phase window")
    if start < t[0] - 1e-9 or end > t[-1] + 1e-9:
        raise AlignmentError("phase window extends beyond the sampled span")
    grid = np.linspace(start, end, n_points)
    out = CubicSpline(t, y, axis=0, bc_type="natural")(np.clip(grid, t[0], t[-1]))
    return NormalizedSeries(np.linspace(0.0, 100.0, n_points), out, None)


@dataclass
class Aggregate:
    mean: np.ndarray | float
    sd: np.ndarray | float
    n: int
    single_trial: bool


def aggregate(trials: Sequence) -> Aggregate:
    """Mean and sample standard deviation (n - 1) across trials."""
    if len(trials) == 0:
        raise ValueError("aggregate needs at least one trial")
    arrays = [np.asarray(t.values if isinstance(t, NormalizedSeries) else t, dtype=float)
              for t in trials]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise AlignmentError("trials do not share a grid")
    stack = np.stack(arrays)
    mean = stack.mean(axis=0)
    if len(arrays) == 1:
        sd = np.zeros_like(mean)
    else:
        sd = stack.std(axis=0, ddof=1)
    if mean.ndim == 0:
        mean, sd = float(mean), float(sd)
    return Aggregate(mean, sd, len(arrays), len(arrays) == 1)


@dataclass(frozen=True)
class Extremum:
    maximum: float
    max_percent: float
    max_index: int
    minimum: float
    min_percent: float
    min_index: int


def extrema(series: NormalizedSeries, phase: str | None = None) -> Extremum:
    """Maximum and minimum of a 1-D normalized series within a phase window.

    ``phase`` is ``"stance"`` (start to boundary), ``"swing"`` (boundary to
    end) or None for the whole series.  Locations are percentages of the
    window; ties resolve to the earliest sample.
    """
    v = np.asarray(series.values, dtype=float)
    if v.ndim != 1:
        raise ValueError("extrema expects a 1-D series")
    lo, hi = 0, len(v) - 1
    if phase in ("stance", "swing"):
        if series.boundary_index is None:
            raise ValueError("series has no phase boundary")
        if phase == "stance":
            hi = series.boundary_index
        else:
            lo = series.boundary_index
    elif phase is not None:
        raise ValueError(f"unknown phase {phase!r}")
    window = v[lo:hi + 1]
    if len(window) == 0:
        raise ValueError("empty phase window")
    span = max(hi - lo, 1)
    imax, imin = int(np.argmax(window)), int(np.argmin(window))
    return Extremum(float(window[imax]), 100.0 * imax / span, lo + imax,
                    float(window[imin]), 100.0 * imin / span, lo + imin)


@dataclass(frozen=True)
class ExtremaRow:
    quantity: str
    joint: str
    axis: str
    phase: str
    maximum: float
    max_sd: float
    max_percent: float
    minimum: float
    min_sd: float
    min_percent: float


def extrema_rows(quantity: str, joint: str, axes: Iterable[str], phase: str,
                 mean: NormalizedSeries, sd: np.ndarray) -> list[ExtremaRow]:
    """Extrema of each column of a mean curve, with the across-trial s.d. there."""
    rows = []
    sd = np.asarray(sd, dtype=float)
    for k, axis in enumerate(axes):
        col = NormalizedSeries(mean.percent, mean.values[:, k], mean.boundary_index)
        e = extrema(col)
        rows.append(ExtremaRow(quantity, joint, axis, phase, e.maximum, float(sd[e.max_index, k]),
                               e.max_percent, e.minimum, float(sd[e.min_index, k]), e.min_percent))
    return rows
