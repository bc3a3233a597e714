"""Trot-like synthetic stride for qualitative checks of the whole pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.optimize import brentq

from ..dynamics import DEFAULT_CONTACT_FRACTION, GRAVITY
from ..errors import InputError
from ..io import TrialBundle
from ..model import LimbChain, default_chain
from .profiles import ZERO, Bump, Profile
from .scenario import (ForceScript, JointProfiles, ParentProfiles, SyntheticScenario,
                       simulate_forward, standing_height)

_DEG = math.pi / 180.0

# Flexion (deg) as (amplitude, center as fraction of stride, kappa); adduction
# and axial rotation get small first-harmonic sines.  Periodic over the stride.
_FLEXION = {
    "elbow": ((-8.0, 0.22, 3.0), (30.0, 0.62, 3.0)),
    "carpus": ((-4.0, 0.20, 3.0), (45.0, 0.66, 4.0)),
    "fetlock": ((-25.0, 0.22, 3.0), (30.0, 0.70, 4.0)),
    "pastern": ((-5.0, 0.22, 3.0), (8.0, 0.72, 4.0)),
    "coffin": ((-8.0, 0.25, 3.0), (12.0, 0.75, 4.0)),
}
_ADDUCTION_DEG = 2.0
_ROTATION_DEG = 3.0
_TRANSLATION_M = 0.002


@dataclass(frozen=True)
class TrotParameters:
    stride: float = 0.706  # s
    stance_fraction: float = 0.435
    speed: float = 3.13  # m/s
    peak_grf: float = 9.44  # N/kg, vertical
    body_mass: float = 433.0
    joint_amplitude: float = 1.0  # scales every joint and humerus excursion
    forward_ratio: float = 0.08  # peak braking/propulsive force over peak vertical
    transverse_ratio: float = 0.03
    sample_rate: float = 120.0
    grf_rate: float = 1000.0
    noise_sigma: float = 0.0
    seed: int = 0
    contact_fraction: float = DEFAULT_CONTACT_FRACTION

    def __post_init__(self):
        for name in ("stride", "speed", "peak_grf", "body_mass", "sample_rate", "grf_rate"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        if not 0 < self.stance_fraction < 1:
            raise InputError("stance_fraction must lie in (0, 1)")
        if self.joint_amplitude < 0 or self.noise_sigma < 0:
            raise InputError("amplitudes and noise must be non-negative")
        if self.peak_grf <= self.contact_fraction * GRAVITY:
            raise InputError("peak vertical force does not exceed the contact threshold")


def _contact_window(p: TrotParameters) -> tuple[float, float]:
    """Half-sine support whose above-threshold part spans exactly the stance.

    The upward crossing sits half a force-plate sample before t = 0, so the
    first plate sample already counts as contact.
    """
    stance = p.stance_fraction * p.stride
    edge = math.asin(p.contact_fraction * GRAVITY / p.peak_grf) / math.pi
    support = stance / (1.0 - 2.0 * edge)
    t0 = -0.5 / p.grf_rate - edge * support
    return t0, t0 + support


def _pitch_amplitude(p: TrotParameters, length: float) -> float:
    """Humerus pitch amplitude that brings the hoof back to its touchdown x at lift-off."""
    travel = p.speed * p.stance_fraction * p.stride
    c = math.cos(2.0 * math.pi * p.stance_fraction)
    target = min(travel / length, 1.9)
    f = lambda a: math.sin(a) + math.sin(-a * c) - target
    return brentq(f, 0.0, 1.5)


def trot_scenario(params: TrotParameters | None = None, chain: LimbChain | None = None
                  ) -> SyntheticScenario:
    p = params or TrotParameters()
    chain = chain or default_chain(4, p.body_mass)
    k = p.joint_amplitude
    f1 = 1.0 / p.stride
    angles = {}
    for j, name in enumerate(chain.joint_names):
        bumps = tuple(Bump(k * a * _DEG, c * p.stride, p.stride, kappa)
                      for a, c, kappa in _FLEXION.get(name, ()))
        flexion = Profile(offset=-sum(b.amplitude * math.exp(-2.0 * b.kappa) for b in bumps),
                          bumps=bumps)
        adduction = Profile(sines=((k * _ADDUCTION_DEG * _DEG, f1, 0.3 * j),))
        rotation = Profile(sines=((k * _ROTATION_DEG * _DEG, f1, 1.1 + 0.5 * j),))
        translations = (ZERO, ZERO, ZERO)
        if chain.joints[j].translations_enabled:
            translations = (Profile(sines=((k * _TRANSLATION_M, f1, 0.4),)), ZERO,
                            Profile(sines=((k * 0.5 * _TRANSLATION_M, 2 * f1, 0.0),)))
        angles[name] = JointProfiles((adduction, flexion, rotation), translations)

    height = standing_height(chain)
    pitch = k * _pitch_amplitude(p, height)
    # -A cos(2 pi t / stride): hoof ahead of the shoulder at touchdown.
    parent = ParentProfiles(
        angles=(ZERO, Profile(sines=((-pitch, f1, 0.5 * math.pi),)), ZERO),
        origin=(Profile(slope=p.speed), ZERO, Profile(offset=height)))

    t0, t1 = _contact_window(p)
    support = t1 - t0
    # Gated by sin(pi s); cos(pi s) turns the forward channel into a
    # braking-then-propulsion pattern -sin(2 pi s) / 2, hence the factor 2.
    forward = Profile(sines=((-2.0 * p.forward_ratio * p.peak_grf, 0.5 / support,
                              0.5 * math.pi - math.pi * t0 / support),))
    grf = ForceScript(force=(forward, Profile(offset=p.transverse_ratio * p.peak_grf),
                             Profile(offset=p.peak_grf)),
                      cop="hoof", window=(t0, t1), shape="half_sine")
    meta = {"speed_m_s": p.speed, "stride_s": p.stride, "stance_fraction": p.stance_fraction,
            "peak_grf_n_kg": p.peak_grf}
    return SyntheticScenario(chain=chain, duration=p.stride, name="synth_trot", dt=1.0 / p.grf_rate,
                             sample_rate=p.sample_rate, grf_rate=p.grf_rate,
                             noise_sigma=p.noise_sigma, seed=p.seed, angles=angles,
                             parent=parent, grf=grf, metadata=meta)


def synth_trot(params: TrotParameters | None = None, chain: LimbChain | None = None,
               trial_id: str = "synth_trot") -> TrialBundle:
    """Trot-like trial bundle: 120 Hz markers and a 1000 Hz force-plate record."""
    return simulate_forward(trot_scenario(params, chain)).bundle(trial_id)
