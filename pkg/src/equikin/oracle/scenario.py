"""Synthetic scenarios and their exact forward simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from ..dynamics import GRAVITY, GrfSeries
from ..energetics import JointPower
from ..errors import InputError
from ..io import TrialBundle
from ..kinematics import MarkerFrameSeries
from ..model import JOINT_NAMES, LimbChain, build_chain, default_chain_config
from .forward import PlanarChain, integrate_planar
from .motion import (JointTrajectory, ParentTrajectory, TrueLoad, TrueMotion, chain_motion,
                     mechanical_energy, subtree_loads, synthesize_markers, true_power)
from .profiles import ZERO, Profile, profile_from_config

ROTATION_KEYS = ("adduction", "flexion", "rotation")  # anatomical alpha, beta, gamma


# ---------------------------------------------------------------------------
# Chains used by the built-in scenarios
# ---------------------------------------------------------------------------

def _link_markers(length: float) -> dict[str, list[float]]:
    return {"m1": [0.04, 0.0, -0.25 * length], "m2": [-0.03, 0.03, -0.5 * length],
            "m3": [0.0, -0.04, -0.75 * length]}


def pendulum_chain_config(lengths=(1.0, 0.8), masses=(2.0, 1.5), radius: float = 0.02) -> dict:
    """Slender uniform links hanging from a fixed base."""
    if len(lengths) != len(masses) or not 1 <= len(lengths) <= len(JOINT_NAMES):
        raise InputError("pendulum needs matching lengths and masses for 1-5 links")
    segments, joints = [], []
    previous = "base"
    for k, (length, mass) in enumerate(zip(lengths, masses)):
        name = f"link{k + 1}"
        rod = mass * length ** 2 / 12.0
        segments.append({"name": name, "length": float(length), "mass": float(mass),
                         "com_offset": [0.0, 0.0, -0.5 * length],
                         "inertia": [rod, rod, 0.5 * mass * radius ** 2],
                         "markers": _link_markers(length)})
        joints.append({"name": JOINT_NAMES[k], "proximal": previous, "distal": name})
        previous = name
    return {"body_mass": float(sum(masses)), "length_unit": "m",
            "parent": {"name": "base", "length": 0.1, "markers": _link_markers(0.1)},
            "segments": segments, "joints": joints}


def _chain_from_spec(spec: Any) -> LimbChain:
    if spec is None or spec == "forelimb4":
        return build_chain(default_chain_config(4))
    if spec == "forelimb5":
        return build_chain(default_chain_config(5))
    if isinstance(spec, str) and spec.startswith("pendulum"):
        n = int(spec[len("pendulum"):] or 2)
        lengths = (1.0, 0.8, 0.6, 0.5, 0.4)[:n]
        masses = (2.0, 1.5, 1.0, 0.8, 0.5)[:n]
        return build_chain(pendulum_chain_config(lengths, masses))
    if isinstance(spec, Mapping):
        return build_chain(spec)
    raise InputError(f"unknown chain reference {spec!r}")


# ---------------------------------------------------------------------------
# Scripts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JointProfiles:
    """Anatomical joint angles (rad) and proximal-frame translations (m)."""

    angles: tuple[Profile, Profile, Profile] = (ZERO, ZERO, ZERO)
    translations: tuple[Profile, Profile, Profile] = (ZERO, ZERO, ZERO)

    def trajectory(self, times, signs) -> JointTrajectory:
        ang = [p.evaluate(times) for p in self.angles]
        tr = [p.evaluate(times) for p in self.translations]
        signs = np.asarray(signs, dtype=float)
        stack = lambda parts, d: np.stack([p[d] for p in parts], axis=-1)
        return JointTrajectory(stack(ang, 0) * signs, stack(ang, 1) * signs, stack(ang, 2) * signs,
                               stack(tr, 0), stack(tr, 1), stack(tr, 2))


@dataclass(frozen=True)
class ParentProfiles:
    """Parent pose: right-hand Cardan angles (rad) and origin (m) in the lab frame.

    ``origin`` of None places the parent so that the standing chain's
    distal end touches the ground plane z = 0.
    """

    angles: tuple[Profile, Profile, Profile] = (ZERO, ZERO, ZERO)
    origin: tuple[Profile, Profile, Profile] | None = None

    def trajectory(self, chain: LimbChain, times) -> ParentTrajectory:
        origin = self.origin or (ZERO, ZERO, Profile(offset=standing_height(chain)))
        ang = [p.evaluate(times) for p in self.angles]
        org = [p.evaluate(times) for p in origin]
        stack = lambda parts, d: np.stack([p[d] for p in parts], axis=-1)
        return ParentTrajectory.from_cardan(stack(ang, 0), stack(ang, 1), stack(ang, 2),
                                            stack(org, 0), stack(org, 1), stack(org, 2))

    @property
    def is_static(self) -> bool:
        profiles = list(self.angles) + list(self.origin or ())
        return all(p.slope == 0 and not p.sines and not p.bumps for p in profiles)


def standing_height(chain: LimbChain) -> float:
    return chain.parent.length + sum(s.length for s in chain.segments)


@dataclass(frozen=True)
class ForceScript:
    """Scripted ground reaction force acting on the chain's last segment.

    ``force`` components are in N per kg of body mass along lab x, y, z.
    ``cop`` is ``"hoof"`` (the distal end of the last segment, moving with
    it) or a fixed lab point.  ``window`` restricts the force to an interval;
    with ``shape="half_sine"`` each component is additionally multiplied by
    ``sin(pi * (t - t0) / (t1 - t0))``.
    """

    force: tuple[Profile, Profile, Profile] = (ZERO, ZERO, ZERO)
    cop: str | tuple[float, float, float] = "hoof"
    free_moment: Profile = ZERO
    window: tuple[float, float] | None = None
    shape: str = "profile"

    def evaluate(self, chain: LimbChain, motion: TrueMotion):
        t = motion.times
        mass = chain.body_mass
        force = np.stack([p.evaluate(t)[0] for p in self.force], axis=-1) * mass
        free = self.free_moment.evaluate(t)[0] * mass
        gate = np.ones(len(t))
        if self.window is not None:
            t0, t1 = self.window
            inside = (t >= t0) & (t <= t1)
            gate = inside.astype(float)
            if self.shape == "half_sine":
                gate = gate * np.sin(np.pi * np.clip((t - t0) / (t1 - t0), 0.0, 1.0))
        force = force * gate[:, None]
        free = free * gate
        if isinstance(self.cop, str):
            last = chain.segments[-1]
            st = motion.segments[last.name]
            cop = np.einsum("nij,j->ni", st.rotation, last.distal_point) + st.origin
        else:
            cop = np.broadcast_to(np.asarray(self.cop, dtype=float), force.shape).copy()
        return force, cop, free


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------

@dataclass
class SyntheticScenario:
    """A chain plus either joint torques or joint angles, and the outside world.

    Torque-driven scenarios integrate a sagittal hinge chain hanging from a
    fixed parent; torques and initial angles are anatomical flexion values.
    Angle-driven scenarios prescribe the full 6-DoF joint motion and the
    parent's motion analytically.
    """

    chain: LimbChain
    duration: float
    name: str = "scenario"
    dt: float = 1e-4
    sample_rate: float = 1000.0
    grf_rate: float = 1000.0
    noise_sigma: float = 0.0
    seed: int = 0
    gravity: float = GRAVITY
    torques: dict[str, Profile] | None = None
    initial_flexion: dict[str, float] = field(default_factory=dict)
    initial_flexion_rate: dict[str, float] = field(default_factory=dict)
    angles: dict[str, JointProfiles] | None = None
    parent: ParentProfiles = field(default_factory=ParentProfiles)
    grf: ForceScript | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if (self.torques is None) == (self.angles is None):
            raise InputError("a scenario prescribes exactly one of joint torques or joint angles")
        if not self.duration > 0:
            raise InputError("duration must be positive")
        if not self.dt > 0:
            raise InputError("integration step must be positive")
        if self.sample_rate <= 0 or self.grf_rate <= 0:
            raise InputError("sample rates must be positive")
        if self.noise_sigma < 0:
            raise InputError("noise sigma must be non-negative")
        names = set(self.chain.joint_names)
        for mapping in (self.torques, self.angles, self.initial_flexion, self.initial_flexion_rate):
            unknown = set(mapping or ()) - names
            if unknown:
                raise InputError(f"scenario references unknown joints {sorted(unknown)}")
        if self.torques is not None:
            if self.grf is not None:
                raise InputError("torque-driven scenarios take no ground reaction force")
            if not self.parent.is_static:
                raise InputError("torque-driven scenarios need a static parent")

    @property
    def torque_driven(self) -> bool:
        return self.torques is not None


def _samples(duration: float, rate: float) -> np.ndarray:
    n = int(math.ceil(duration * rate - 1e-9))
    return np.arange(max(n, 4)) / rate


@dataclass
class GroundTruth:
    """Exact answers for a simulated scenario, sampled at the marker rate."""

    scenario: SyntheticScenario
    times: np.ndarray
    motion: TrueMotion
    loads: dict[str, TrueLoad]
    power: dict[str, JointPower]
    markers: MarkerFrameSeries
    grf: GrfSeries  # at the force-plate rate
    grf_force: np.ndarray  # applied force at the marker times
    grf_cop: np.ndarray
    grf_free_moment: np.ndarray
    kinetic: np.ndarray
    potential: np.ndarray
    applied_torque: dict[str, np.ndarray] | None = None

    @property
    def energy(self) -> np.ndarray:
        return self.kinetic + self.potential

    def bundle(self, trial_id: str | None = None) -> TrialBundle:
        meta = dict(self.scenario.metadata)
        meta.update({"scenario": self.scenario.name, "seed": int(self.scenario.seed),
                     "noise_sigma_m": float(self.scenario.noise_sigma)})
        return TrialBundle(trial_id or self.scenario.name, self.markers, self.grf,
                           self.scenario.chain, meta)


def _torque_driven_motion(sc: SyntheticScenario, times: np.ndarray):
    chain = sc.chain
    origin = np.array([0.0, 0.0, standing_height(chain)])
    if sc.parent.origin is not None:
        origin = np.array([p.offset for p in sc.parent.origin])
    system = PlanarChain(chain, origin, sc.gravity)
    signs = [chain.convention.rotation_sign_vector(j)[1] for j in chain.joint_names]
    torques = [(sc.torques or {}).get(j, ZERO) for j in chain.joint_names]
    # right-hand torque about y from the anatomical flexion moment
    def torque(t):
        return [s * p.value(t) for s, p in zip(signs, torques)]
    q0 = [s * sc.initial_flexion.get(j, 0.0) for s, j in zip(signs, chain.joint_names)]
    qd0 = [s * sc.initial_flexion_rate.get(j, 0.0) for s, j in zip(signs, chain.joint_names)]
    ratio = 1.0 / (sc.sample_rate * sc.dt)
    every = int(round(ratio))
    if every < 1 or abs(ratio - every) > 1e-6 * ratio:
        raise InputError("the sample interval must be a whole number of integration steps")
    traj = integrate_planar(system, torque, q0, qd0, sc.dt, len(times), every)
    joints = {}
    for k, name in enumerate(chain.joint_names):
        z = np.zeros((len(times), 3))
        ang, rate, acc = z.copy(), z.copy(), z.copy()
        ang[:, 1], rate[:, 1], acc[:, 1] = traj.q[:, k], traj.qd[:, k], traj.qdd[:, k]
        joints[name] = JointTrajectory.rotation_only(ang, rate, acc)
    parent = ParentTrajectory.fixed(len(times), origin)
    motion = chain_motion(chain, times, parent, joints)
    applied = {name: signs[k] * traj.tau[:, k] for k, name in enumerate(chain.joint_names)}
    return motion, applied


def _prescribed_motion(sc: SyntheticScenario, times: np.ndarray) -> TrueMotion:
    chain = sc.chain
    joints = {}
    for name in chain.joint_names:
        profiles = (sc.angles or {}).get(name, JointProfiles())
        joints[name] = profiles.trajectory(times, chain.convention.rotation_sign_vector(name))
    return chain_motion(chain, times, sc.parent.trajectory(chain, times), joints)


def simulate_forward(scenario: SyntheticScenario) -> GroundTruth:
    """Exact motion, markers, force-plate record, joint loads and powers."""
    sc = scenario
    chain = sc.chain
    times = _samples(sc.duration, sc.sample_rate)
    applied = None
    if sc.torque_driven:
        motion, applied = _torque_driven_motion(sc, times)
        grf_times = _samples(sc.duration, sc.grf_rate)
        zeros = np.zeros((len(grf_times), 3))
        grf = GrfSeries(grf_times, zeros, np.full_like(zeros, np.nan), None)
        n = len(times)
        f_kin, cop_kin, free_kin = np.zeros((n, 3)), np.zeros((n, 3)), np.zeros(n)
    else:
        motion = _prescribed_motion(sc, times)
        script = sc.grf or ForceScript()
        f_kin, cop_kin, free_kin = script.evaluate(chain, motion)
        grf_times = _samples(sc.duration, sc.grf_rate)
        plate_motion = _prescribed_motion(sc, grf_times)
        f_plate, cop_plate, free_plate = script.evaluate(chain, plate_motion)
        has_free = not script.free_moment.is_zero
        grf = GrfSeries(grf_times, f_plate, cop_plate, free_plate if has_free else None)

    loads = subtree_loads(chain, motion, f_kin, cop_kin, free_kin, sc.gravity)
    power = true_power(chain, motion, loads)
    rng = np.random.default_rng(sc.seed)
    markers = synthesize_markers(chain, motion, sc.noise_sigma, rng)
    kinetic, potential = mechanical_energy(chain, motion.spatial(), sc.gravity)
    return GroundTruth(sc, times, motion, loads, power, markers, grf, f_kin, cop_kin, free_kin,
                       kinetic, potential, applied)


# ---------------------------------------------------------------------------
# Scenario documents
# ---------------------------------------------------------------------------

def _profile_triple(spec, what: str, scale: float = 1.0) -> tuple[Profile, Profile, Profile]:
    if spec is None:
        return (ZERO, ZERO, ZERO)
    if not isinstance(spec, (list, tuple)) or len(spec) != 3:
        raise InputError(f"{what}: expected three profiles (x, y, z)")
    return tuple(profile_from_config(s).scaled(scale) for s in spec)


def scenario_from_config(config: Mapping[str, Any]) -> SyntheticScenario:
    """Build a scenario from its document form.

    Angles in documents are degrees and anatomical (flexion positive);
    torques are anatomical flexion moments in N·m.
    """
    if not isinstance(config, Mapping):
        raise InputError("scenario document must be a mapping")
    if config.get("kind") == "synth_trot":
        from .trot import TrotParameters, trot_scenario
        params = {k: v for k, v in config.items() if k not in ("kind", "name", "chain")}
        try:
            parameters = TrotParameters(**params)
        except TypeError as exc:
            raise InputError(f"invalid trot parameters: {exc}") from None
        chain = _chain_from_spec(config["chain"]) if "chain" in config else None
        return trot_scenario(parameters, chain=chain)
    known = {"name", "chain", "duration", "dt", "sample_rate", "grf_rate", "noise_sigma", "seed",
             "gravity", "torques", "initial_flexion_deg", "initial_flexion_rate", "angles",
             "parent", "grf", "metadata", "kind"}
    unknown = set(config) - known
    if unknown:
        raise InputError(f"unknown scenario keys: {sorted(unknown)}")
    deg = math.pi / 180.0
    chain = _chain_from_spec(config.get("chain"))
    torques = angles = None
    if "torques" in config:
        torques = {str(k): profile_from_config(v) for k, v in (config["torques"] or {}).items()}
    if "angles" in config:
        angles = {}
        for joint, spec in (config["angles"] or {}).items():
            spec = spec or {}
            rot = tuple(profile_from_config(spec.get(k)).scaled(deg) for k in ROTATION_KEYS)
            angles[str(joint)] = JointProfiles(rot, _profile_triple(spec.get("translation"),
                                                                    f"{joint} translation"))
    parent_cfg = config.get("parent") or {}
    parent = ParentProfiles(_profile_triple(parent_cfg.get("angles_deg"), "parent angles", deg),
                            _profile_triple(parent_cfg["origin"], "parent origin")
                            if "origin" in parent_cfg else None)
    grf = None
    if config.get("grf") is not None:
        g = config["grf"]
        cop = g.get("cop", "hoof")
        grf = ForceScript(_profile_triple(g.get("force"), "grf force"),
                          cop if isinstance(cop, str) else tuple(float(v) for v in cop),
                          profile_from_config(g.get("free_moment")),
                          tuple(g["window"]) if g.get("window") is not None else None,
                          str(g.get("shape", "profile")))
    try:
        return SyntheticScenario(
            chain=chain, duration=float(config["duration"]), name=str(config.get("name", "scenario")),
            dt=float(config.get("dt", 1e-4)), sample_rate=float(config.get("sample_rate", 1000.0)),
            grf_rate=float(config.get("grf_rate", 1000.0)),
            noise_sigma=float(config.get("noise_sigma", 0.0)), seed=int(config.get("seed", 0)),
            gravity=float(config.get("gravity", GRAVITY)), torques=torques,
            initial_flexion={str(k): float(v) * deg
                             for k, v in (config.get("initial_flexion_deg") or {}).items()},
            initial_flexion_rate={str(k): float(v)
                                  for k, v in (config.get("initial_flexion_rate") or {}).items()},
            angles=angles, parent=parent, grf=grf, metadata=dict(config.get("metadata") or {}))
    except KeyError as exc:
        raise InputError(f"scenario is missing {exc.args[0]!r}") from None


def load_scenario(path: str | Path) -> SyntheticScenario:
    path = Path(path)
    try:
        config = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    return scenario_from_config(config)


BUILTIN_SCENARIOS = ("single_pendulum", "double_pendulum", "static_stance", "prescribed_3d",
                     "synth_trot")


def builtin_scenario(name: str, **overrides) -> SyntheticScenario:
    """One of the shipped scenario documents, with optional top-level overrides."""
    if name not in BUILTIN_SCENARIOS:
        raise InputError(f"unknown scenario {name!r}; choose from {BUILTIN_SCENARIOS}")
    text = resources.files("equikin.data").joinpath(f"scenarios/{name}.yaml").read_text("utf-8")
    config = yaml.safe_load(text)
    config.update(overrides)
    return scenario_from_config(config)
