"""Exact chain kinematics from joint-coordinate trajectories, and ground-truth loads.

Nothing here reuses the inverse pipeline: positions, velocities and
accelerations are propagated analytically down the chain, and joint loads
are obtained from whole-subtree momentum balance rather than from a
segment-by-segment recursion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dynamics import GRAVITY, SegmentSpatialState, SegmentState
from ..energetics import JointPower
from ..kinematics import MarkerFrameSeries, _rx, _ry, _rz
from ..model import LimbChain

_X = np.array([1.0, 0.0, 0.0])
_Y = np.array([0.0, 1.0, 0.0])
_Z = np.array([0.0, 0.0, 1.0])


def _mv(r, v):
    return np.einsum("nij,nj->ni", r, v)


def _mtv(r, v):
    return np.einsum("nji,nj->ni", r, v)


def cardan_kinematics(rh, rh_rate, rh_acc):
    """Rotation, angular velocity and angular acceleration of a y-x-z Cardan joint.

    Inputs hold right-hand angles about (x, y, z) and their first two
    derivatives, shape ``(n, 3)``.  The angular velocity and acceleration
    of the rotated frame relative to the fixed one are returned expressed in
    the *fixed* frame.
    """
    a, b, g = rh[:, 0], rh[:, 1], rh[:, 2]
    da, db, dg = rh_rate[:, 0], rh_rate[:, 1], rh_rate[:, 2]
    dda, ddb, ddg = rh_acc[:, 0], rh_acc[:, 1], rh_acc[:, 2]
    ry = _ry(b)
    ryx = ry @ _rx(a)
    rot = ryx @ _rz(g)
    e1 = np.broadcast_to(_Y, rh.shape)
    e2 = _mv(ry, np.broadcast_to(_X, rh.shape))
    e3 = _mv(ryx, np.broadcast_to(_Z, rh.shape))
    w1 = db[:, None] * e1
    w12 = w1 + da[:, None] * e2
    omega = w12 + dg[:, None] * e3
    omega_dot = (ddb[:, None] * e1 + dda[:, None] * e2 + ddg[:, None] * e3
                 + da[:, None] * np.cross(w1, e2) + dg[:, None] * np.cross(w12, e3))
    return rot, omega, omega_dot


@dataclass
class JointTrajectory:
    """Right-hand Cardan angles and proximal-frame translations with derivatives."""

    angles: np.ndarray
    rates: np.ndarray
    accelerations: np.ndarray
    translations: np.ndarray
    translation_velocity: np.ndarray
    translation_acceleration: np.ndarray

    @classmethod
    def rotation_only(cls, angles, rates, accelerations) -> "JointTrajectory":
        z = np.zeros_like(np.asarray(angles, dtype=float))
        return cls(np.asarray(angles, dtype=float), np.asarray(rates, dtype=float),
                   np.asarray(accelerations, dtype=float), z, z.copy(), z.copy())


@dataclass
class ParentTrajectory:
    """Pose of the chain's parent segment with exact derivatives (lab frame)."""

    rotation: np.ndarray
    omega: np.ndarray
    omega_dot: np.ndarray
    origin: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray

    @classmethod
    def fixed(cls, n: int, origin, rotation=None) -> "ParentTrajectory":
        rot = np.broadcast_to(np.eye(3) if rotation is None else rotation, (n, 3, 3)).copy()
        z = np.zeros((n, 3))
        return cls(rot, z, z.copy(), np.broadcast_to(origin, (n, 3)).astype(float), z.copy(), z.copy())

    @classmethod
    def from_cardan(cls, rh, rh_rate, rh_acc, origin, velocity, acceleration) -> "ParentTrajectory":
        rot, omega, omega_dot = cardan_kinematics(rh, rh_rate, rh_acc)
        return cls(rot, omega, omega_dot, np.asarray(origin, float), np.asarray(velocity, float),
                   np.asarray(acceleration, float))


@dataclass
class TrueMotion:
    """Exact motion of every tracked segment plus joint-level relative motion.

    ``relative_omega`` and ``relative_velocity`` are on the distal axes
    (right-hand components), the quantities that enter joint power.
    """

    times: np.ndarray
    segments: dict[str, SegmentState]
    centers: dict[str, np.ndarray]
    relative_omega: dict[str, np.ndarray]
    relative_velocity: dict[str, np.ndarray]
    joints: dict[str, JointTrajectory]

    def spatial(self) -> SegmentSpatialState:
        return SegmentSpatialState(self.times, self.segments)


def _point_kinematics(origin, vel, acc, omega, omega_dot, offset):
    vel_p = vel + np.cross(omega, offset)
    acc_p = acc + np.cross(omega_dot, offset) + np.cross(omega, np.cross(omega, offset))
    return vel_p, acc_p


def chain_motion(chain: LimbChain, times, parent: ParentTrajectory,
                 joints: dict[str, JointTrajectory]) -> TrueMotion:
    """Propagate exact kinematics from the parent down the chain.

    Each joint's zero posture has the distal frame parallel to the proximal
    one with the joint center at the proximal segment's distal end.
    """
    times = np.asarray(times, dtype=float)
    rot_p, om_p, omd_p = parent.rotation, parent.omega, parent.omega_dot
    org_p, vel_p, acc_p = parent.origin, parent.velocity, parent.acceleration
    segments = {chain.parent.name: SegmentState(rot_p, org_p, org_p, vel_p, acc_p, om_p, omd_p)}
    centers, rel_omega, rel_vel = {}, {}, {}
    proximal_length = chain.parent.distal_point
    for joint, seg in zip(chain.joints, chain.segments):
        jt = joints[joint.name]
        rel_rot, w_rel, wd_rel = cardan_kinematics(jt.angles, jt.rates, jt.accelerations)
        rot = rot_p @ rel_rot
        w_rel_lab = _mv(rot_p, w_rel)
        omega = om_p + w_rel_lab
        omega_dot = omd_p + _mv(rot_p, wd_rel) + np.cross(om_p, w_rel_lab)

        r = _mv(rot_p, proximal_length + jt.translations)
        sdot = _mv(rot_p, jt.translation_velocity)
        center = org_p + r
        v_c, a_c = _point_kinematics(org_p, vel_p, acc_p, om_p, omd_p, r)
        v_c = v_c + sdot
        a_c = a_c + 2.0 * np.cross(om_p, sdot) + _mv(rot_p, jt.translation_acceleration)

        to_origin = -_mv(rot, np.broadcast_to(joint.center_offset, center.shape))
        origin = center + to_origin
        v_o, a_o = _point_kinematics(center, v_c, a_c, omega, omega_dot, to_origin)
        to_com = _mv(rot, np.broadcast_to(seg.com_offset, center.shape)) + to_origin
        com = center + to_com
        v_m, a_m = _point_kinematics(center, v_c, a_c, omega, omega_dot, to_com)

        segments[seg.name] = SegmentState(rot, origin, com, v_m, a_m, omega, omega_dot)
        centers[joint.name] = center
        rel_omega[joint.name] = _mtv(rel_rot, w_rel)
        rel_vel[joint.name] = _mtv(rel_rot, jt.translation_velocity)
        rot_p, om_p, omd_p, org_p, vel_p, acc_p = rot, omega, omega_dot, origin, v_o, a_o
        proximal_length = seg.distal_point
    return TrueMotion(times, segments, centers, rel_omega, rel_vel, dict(joints))


@dataclass
class TrueLoad:
    force: np.ndarray  # distal anatomical axes
    moment: np.ndarray
    force_lab: np.ndarray
    moment_lab: np.ndarray


def subtree_loads(chain: LimbChain, motion: TrueMotion, grf_force=None, cop=None,
                  free_moment=None, gravity: float = GRAVITY) -> dict[str, TrueLoad]:
    """Load applied to each joint's distal subtree, from momentum balance of the subtree.

    ``grf_force`` and ``cop`` (lab, ``(n, 3)``) act on the last segment;
    pass zeros (or None) outside contact.
    """
    n = len(motion.times)
    g = np.array([0.0, 0.0, -gravity])
    f_ext = np.zeros((n, 3)) if grf_force is None else np.asarray(grf_force, dtype=float)
    cop = np.zeros((n, 3)) if cop is None else np.asarray(cop, dtype=float)
    m_ext = np.zeros((n, 3))
    if free_moment is not None:
        m_ext[:, 2] = free_moment

    out = {}
    for k, joint in enumerate(chain.joints):
        p = motion.centers[joint.name]
        force = -f_ext.copy()
        moment = -np.cross(cop - p, f_ext) - m_ext
        for seg in chain.segments[k:]:
            st = motion.segments[seg.name]
            inertia = st.rotation @ seg.inertia @ np.swapaxes(st.rotation, -1, -2)
            lin = seg.mass * (st.com_acceleration - g)
            force = force + lin
            moment = (moment + _mv(inertia, st.omega_dot)
                      + np.cross(st.omega, _mv(inertia, st.omega))
                      + np.cross(st.com - p, lin))
        rot = motion.segments[joint.distal_segment].rotation
        signs = chain.convention.rotation_sign_vector(joint.name)
        out[joint.name] = TrueLoad(_mtv(rot, force), _mtv(rot, moment) * signs, force, moment)
    return out


def true_power(chain: LimbChain, motion: TrueMotion, loads: dict[str, TrueLoad]
               ) -> dict[str, JointPower]:
    out = {}
    for joint in chain.joints:
        signs = chain.convention.rotation_sign_vector(joint.name)
        load = loads[joint.name]
        rot = load.moment * (motion.relative_omega[joint.name] * signs)
        trans = load.force * motion.relative_velocity[joint.name]
        if not joint.translations_enabled:
            trans = np.zeros_like(trans)
        out[joint.name] = JointPower(rot, trans)
    return out


def mechanical_energy(chain: LimbChain, spatial: SegmentSpatialState, gravity: float = GRAVITY
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Kinetic and potential energy of the modeled segments (J)."""
    kinetic = 0.0
    potential = 0.0
    for seg in chain.segments:
        st = spatial[seg.name]
        inertia = st.rotation @ seg.inertia @ np.swapaxes(st.rotation, -1, -2)
        kinetic = (kinetic + 0.5 * seg.mass * np.sum(st.com_velocity ** 2, axis=1)
                   + 0.5 * np.einsum("ni,ni->n", st.omega, _mv(inertia, st.omega)))
        potential = potential + seg.mass * gravity * st.com[:, 2]
    return np.asarray(kinetic), np.asarray(potential)


def synthesize_markers(chain: LimbChain, motion: TrueMotion, sigma: float = 0.0,
                       rng: np.random.Generator | None = None) -> MarkerFrameSeries:
    """Marker positions from the exact segment poses, with optional Gaussian jitter."""
    labels, blocks = [], []
    for name in chain.tracked_segments:
        marker_labels, template = chain.marker_template(name)
        st = motion.segments[name]
        blocks.append(np.einsum("nij,kj->nki", st.rotation, template) + st.origin[:, None, :])
        labels.extend(f"{name}:{lab}" for lab in marker_labels)
    positions = np.concatenate(blocks, axis=1)
    if sigma > 0:
        rng = rng or np.random.default_rng(0)
        positions = positions + rng.normal(0.0, sigma, positions.shape)
    valid = np.ones(positions.shape[:2], dtype=bool)
    return MarkerFrameSeries(motion.times.copy(), tuple(labels), positions, valid)
