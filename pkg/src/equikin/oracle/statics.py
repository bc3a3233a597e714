"""Motionless chains with closed-form joint loads."""

from __future__ import annotations

import math

import numpy as np

from ..dynamics import GRAVITY, GrfSeries, NetJointLoadSeries, inverse_dynamics
from ..model import LimbChain, build_chain
from .motion import JointTrajectory, ParentTrajectory, TrueMotion, chain_motion
from .scenario import pendulum_chain_config, standing_height


def static_motion(chain: LimbChain, flexion: dict[str, float] | None = None, frames: int = 5,
                  rate: float = 100.0) -> TrueMotion:
    """Chain held still with right-hand rotations (rad) about each joint's y axis."""
    flexion = flexion or {}
    times = np.arange(frames) / rate
    zeros = np.zeros((frames, 3))
    joints = {}
    for name in chain.joint_names:
        angles = zeros.copy()
        angles[:, 1] = flexion.get(name, 0.0)
        joints[name] = JointTrajectory.rotation_only(angles, zeros, zeros)
    parent = ParentTrajectory.fixed(frames, [0.0, 0.0, standing_height(chain)])
    return chain_motion(chain, times, parent, joints)


def no_contact(times) -> GrfSeries:
    zeros = np.zeros((len(times), 3))
    return GrfSeries(np.asarray(times, dtype=float), zeros, np.full_like(zeros, np.nan))


def horizontal_rod(mass: float = 2.0, length: float = 1.0, gravity: float = GRAVITY
                   ) -> tuple[LimbChain, NetJointLoadSeries]:
    """A uniform rod held horizontal at its proximal end by a fixed support.

    The support must provide ``m g L / 2`` about the medio-lateral axis and
    ``m g`` upward.
    """
    chain = build_chain(pendulum_chain_config((length,), (mass,)))
    motion = static_motion(chain, {chain.joint_names[0]: 0.5 * math.pi})
    loads = inverse_dynamics(chain, motion.spatial(), no_contact(motion.times), gravity)
    return chain, loads


def loaded_weightless_chain(force, cop, links: int = 3, flexion=(0.4, -0.7, 0.3)
                            ) -> tuple[LimbChain, TrueMotion, NetJointLoadSeries]:
    """A bent chain without gravity, held still against a ground force at ``cop``.

    With no gravity and no motion the segment masses do no work in the
    equations, so every joint carries ``-force`` and the moment
    ``-(cop - center) x force``.
    """
    lengths = (1.0, 0.8, 0.6, 0.5, 0.4)[:links]
    masses = (2.0, 1.5, 1.0, 0.8, 0.5)[:links]
    chain = build_chain(pendulum_chain_config(lengths, masses))
    motion = static_motion(chain, dict(zip(chain.joint_names, flexion)))
    n = len(motion.times)
    f = np.tile(np.asarray(force, dtype=float), (n, 1))
    p = np.tile(np.asarray(cop, dtype=float), (n, 1))
    grf = GrfSeries(motion.times, f, p)
    loads = inverse_dynamics(chain, motion.spatial(), grf, gravity=0.0, threshold=0.0)
    return chain, motion, loads
