"""Segment spatial kinematics and the distal-to-proximal Newton-Euler solution.

Loads are those applied *to the distal segment by the proximal one* at the
joint center.  They are reported on the distal segment's anatomical axes
(moment components carry the anatomical rotation signs, so elbow flexion
moments are positive when they act to flex the elbow) and also in the lab
frame for diagnostics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, InputError, MultipleContactError, NoContactError
from .kinematics import SegmentPoseSeries, check_uniform, differentiate, low_pass_filter
from .model import LimbChain

logger = logging.getLogger(__name__)

GRAVITY = 9.81
DEFAULT_CONTACT_FRACTION = 0.02  # of body weight


def contact_threshold(body_mass: float, fraction: float = DEFAULT_CONTACT_FRACTION) -> float:
    return fraction * body_mass * GRAVITY


@dataclass
class GrfSeries:
    """Ground reaction force on the limb, lab frame (x forward, y left, z up).

    COP samples that are not meaningful are NaN with ``cop_valid`` False.
    ``clamped`` marks rows whose negative vertical force was set to zero.
    """

    times: np.ndarray
    force: np.ndarray
    cop: np.ndarray
    free_moment: np.ndarray | None = None
    cop_valid: np.ndarray | None = None
    clamped: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.force = np.asarray(self.force, dtype=float)
        self.cop = np.asarray(self.cop, dtype=float)
        n = len(self.times)
        if self.force.shape != (n, 3) or self.cop.shape != (n, 3):
            raise AlignmentError("GRF arrays do not match the time base")
        if self.cop_valid is None:
            self.cop_valid = np.isfinite(self.cop).all(axis=1)
        if self.clamped is None:
            self.clamped = np.zeros(n, dtype=bool)
        if self.free_moment is not None:
            self.free_moment = np.asarray(self.free_moment, dtype=float)

    @property
    def sample_rate(self) -> float:
        return 1.0 / check_uniform(self.times)

    @property
    def vertical(self) -> np.ndarray:
        return self.force[:, 2]


@dataclass
class SegmentState:
    rotation: np.ndarray
    origin: np.ndarray
    com: np.ndarray
    com_velocity: np.ndarray
    com_acceleration: np.ndarray
    omega: np.ndarray
    omega_dot: np.ndarray

    def point_velocity(self, point: np.ndarray) -> np.ndarray:
        """Velocity of the body-fixed material point currently at ``point`` (lab)."""
        return self.com_velocity + np.cross(self.omega, point - self.com)


@dataclass
class SegmentSpatialState:
    times: np.ndarray
    segments: dict[str, SegmentState]

    def __getitem__(self, name: str) -> SegmentState:
        return self.segments[name]


def _orthonormalize(r: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(r)
    d = np.sign(np.linalg.det(u @ vt))
    u[..., :, 2] *= d[..., None]
    return u @ vt


def segment_spatial_states(chain: LimbChain, poses: SegmentPoseSeries,
                           filter_cutoff: float | None = 10.0) -> SegmentSpatialState:
    """COM and angular kinematics of every tracked segment in the lab frame.

    Rotation entries and origins are low-pass filtered (rotations are then
    projected back onto SO(3)); velocities come from differentiating the
    filtered COM path and ``dR/dt R^T``.
    """
    times = np.asarray(poses.times, dtype=float)
    dt = check_uniform(times)
    rate = 1.0 / dt
    out = {}
    for name in chain.tracked_segments:
        track = poses[name]
        com_offset = np.zeros(3) if name == chain.parent.name else chain.segment(name).com_offset
        rot = low_pass_filter(track.rotation, filter_cutoff, rate)
        if filter_cutoff is not None:
            rot = _orthonormalize(rot)
        origin = low_pass_filter(track.translation, filter_cutoff, rate)
        com = np.einsum("nij,j->ni", rot, com_offset) + origin
        vel = differentiate(com, dt)
        acc = differentiate(vel, dt)
        w = differentiate(rot, dt) @ np.swapaxes(rot, -1, -2)
        omega = 0.5 * np.stack([w[:, 2, 1] - w[:, 1, 2], w[:, 0, 2] - w[:, 2, 0],
                                w[:, 1, 0] - w[:, 0, 1]], axis=-1)
        omega_dot = differentiate(omega, dt)
        out[name] = SegmentState(rot, origin, com, vel, acc, omega, omega_dot)
    return SegmentSpatialState(times, out)


@dataclass
class JointLoadTrack:
    moment: np.ndarray  # N·m, distal anatomical axes
    force: np.ndarray  # N, distal anatomical axes
    moment_lab: np.ndarray
    force_lab: np.ndarray
    center: np.ndarray  # joint center, lab frame


@dataclass
class NetJointLoadSeries:
    times: np.ndarray
    joints: dict[str, JointLoadTrack]
    body_mass: float
    contact: np.ndarray
    grf_force: np.ndarray  # force actually applied (zero outside contact)
    grf_cop: np.ndarray
    grf_free_moment: np.ndarray
    first_joint: str

    def __getitem__(self, joint: str) -> JointLoadTrack:
        return self.joints[joint]

    @property
    def boundary_force(self) -> np.ndarray:
        """Lab-frame force the modeled chain receives from its parent segment."""
        return self.joints[self.first_joint].force_lab

    @property
    def boundary_moment(self) -> np.ndarray:
        return self.joints[self.first_joint].moment_lab

    def normalized_moment(self, joint: str) -> np.ndarray:
        return self.joints[joint].moment / self.body_mass

    def normalized_force(self, joint: str) -> np.ndarray:
        return self.joints[joint].force / self.body_mass


def inverse_dynamics(chain: LimbChain, spatial: SegmentSpatialState, grf: GrfSeries,
                     gravity: float = GRAVITY, threshold: float | None = None
                     ) -> NetJointLoadSeries:
    """Recursive Newton-Euler solution from the hoof up to the elbow.

    ``grf`` must share the kinematic time base (see :func:`resample_grf`).
    GRF samples whose vertical force does not exceed ``threshold`` (default
    2 % of body weight) are ignored entirely.
    """
    times = np.asarray(spatial.times, dtype=float)
    if len(grf.times) != len(times) or not np.allclose(grf.times, times, rtol=0, atol=1e-9):
        raise AlignmentError("GRF is not aligned with the kinematic frames")
    if threshold is None:
        threshold = contact_threshold(chain.body_mass)
    contact = grf.force[:, 2] > threshold
    missing = contact & ~grf.cop_valid
    if missing.any():
        raise InputError(f"COP missing during stance at t = {times[np.flatnonzero(missing)[0]]:.6g} s")

    n = len(times)
    g_vec = np.array([0.0, 0.0, -gravity])
    f_ext = np.where(contact[:, None], grf.force, 0.0)
    cop = np.where(contact[:, None], np.nan_to_num(grf.cop), 0.0)
    tz = np.zeros(n) if grf.free_moment is None else np.where(contact, grf.free_moment, 0.0)
    m_ext = np.stack([np.zeros(n), np.zeros(n), tz], axis=-1)

    f_child = np.zeros((n, 3))
    m_child = np.zeros((n, 3))
    p_child = None
    tracks = {}
    for idx in range(len(chain.joints) - 1, -1, -1):
        joint = chain.joints[idx]
        seg = chain.segments[idx]
        st = spatial[seg.name]
        rot = st.rotation
        inertia = rot @ seg.inertia @ np.swapaxes(rot, -1, -2)
        p = np.einsum("nij,j->ni", rot, joint.center_offset) + st.origin
        c = st.com

        distal_end = idx == len(chain.joints) - 1
        force = seg.mass * (st.com_acceleration - g_vec) + f_child
        if distal_end:
            force = force - f_ext
        iw = np.einsum("nij,nj->ni", inertia, st.omega)
        moment = (np.einsum("nij,nj->ni", inertia, st.omega_dot) + np.cross(st.omega, iw)
                  - np.cross(p - c, force) + m_child)
        if p_child is not None:
            moment = moment + np.cross(p_child - c, f_child)
        if distal_end:
            moment = moment - m_ext - np.cross(cop - c, f_ext)

        signs = chain.convention.rotation_sign_vector(joint.name)
        rt = np.swapaxes(rot, -1, -2)
        tracks[joint.name] = JointLoadTrack(
            moment=np.einsum("nij,nj->ni", rt, moment) * signs,
            force=np.einsum("nij,nj->ni", rt, force),
            moment_lab=moment, force_lab=force, center=p)
        f_child, m_child, p_child = force, moment, p

    ordered = {j.name: tracks[j.name] for j in chain.joints}
    return NetJointLoadSeries(times, ordered, chain.body_mass, contact, f_ext, cop,
                              m_ext[:, 2], chain.joints[0].name)


def resample_grf(grf: GrfSeries, target_times, cutoff: float | None = 50.0,
                 threshold: float = 0.0) -> GrfSeries:
    """Low-pass the force channels and linearly interpolate onto ``target_times``.

    COP is interpolated from valid raw samples only and is flagged invalid
    wherever the resampled vertical force does not exceed ``threshold``.
    """
    target = np.asarray(target_times, dtype=float)
    t0, t1 = grf.times[0], grf.times[-1]
    if target.min() < t0 - 1e-9 or target.max() > t1 + 1e-9:
        raise AlignmentError(f"target times [{target.min():g}, {target.max():g}] s fall outside "
                             f"the GRF span [{t0:g}, {t1:g}] s")
    rate = grf.sample_rate
    use_cutoff = cutoff if cutoff is not None and cutoff < 0.5 * rate else None
    force = low_pass_filter(grf.force, use_cutoff, rate)
    out_force = np.stack([np.interp(target, grf.times, force[:, k]) for k in range(3)], axis=-1)
    raw_cop = np.where(grf.cop_valid[:, None], grf.cop, np.nan)
    out_cop = np.stack([np.interp(target, grf.times, raw_cop[:, k]) for k in range(3)], axis=-1)
    cop_valid = np.isfinite(out_cop).all(axis=1) & (out_force[:, 2] > threshold)
    out_cop[~cop_valid] = np.nan
    free = None
    if grf.free_moment is not None:
        free = np.interp(target, grf.times, low_pass_filter(grf.free_moment, use_cutoff, rate))
    clamped = np.interp(target, grf.times, grf.clamped.astype(float)) > 0
    return GrfSeries(target.copy(), out_force, out_cop, free, cop_valid, clamped)


@dataclass(frozen=True)
class PhaseEvents:
    stride_start: float
    stance_start: float
    stance_end: float
    stride_end: float

    @property
    def stance_fraction(self) -> float:
        return (self.stance_end - self.stance_start) / (self.stride_end - self.stride_start)

    def stance_mask(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        return (t >= self.stance_start - 1e-12) & (t < self.stance_end - 1e-12)


def detect_stance(grf: GrfSeries, threshold: float) -> PhaseEvents:
    """Single contact episode where vertical force exceeds ``threshold`` (N).

    The trial window is taken as one stride; each sample represents the
    interval that follows it.
    """
    dt = check_uniform(grf.times)
    above = grf.force[:, 2] > threshold
    if not above.any():
        raise NoContactError(f"vertical force never exceeds {threshold:g} N")
    idx = np.flatnonzero(above)
    if (np.diff(idx) > 1).any():
        raise MultipleContactError("more than one contact episode in the trial window")
    return PhaseEvents(float(grf.times[0]), float(grf.times[idx[0]]),
                       float(grf.times[idx[-1]] + dt), float(grf.times[-1] + dt))
