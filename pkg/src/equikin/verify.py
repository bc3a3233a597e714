"""Built-in verification suite behind ``equikin verify``.

Each check is a function returning ``(passed, detail)``.  Checks run
independently, so a failure in one never hides the others.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.spatial.transform import Rotation

from .energetics import EnergySummary, energy_fractions
from .kinematics import compose_rotation, decompose_rotation, differentiate, fit_rigid_transform
from .model import ConventionRow, convention_mismatches, default_chain, reference_convention_rows

# Energy per joint and phase (J/kg) as (generated, absorbed) used by the
# fraction check below.
REFERENCE_ENERGY = {
    "elbow": {"stance": (1.3325, -0.4154), "swing": (0.1234, -0.5207)},
    "carpus": {"stance": (0.0698, -0.0351), "swing": (0.0974, -0.0071)},
    "fetlock": {"stance": (0.2266, -0.1664), "swing": (0.0171, -0.0021)},
    "pastern": {"stance": (0.0214, -0.0207), "swing": (0.0008, -0.0005)},
    "coffin": {"stance": (0.0414, -0.0425), "swing": (0.0010, -0.0007)},
}
# Expected combined shares (%) for the table above.
REFERENCE_SHARES = {("joint", "generated", "stance", "elbow"): 79.0,
                    ("phase", "generated", "stance"): 88.0,
                    ("phase", "absorbed", "stance"): 56.0}

ROUNDTRIP_TOL = 1e-3
WORK_ENERGY_TOL = 1e-3


@dataclass
class Outcome:
    name: str
    passed: bool
    detail: str


# ---------------------------------------------------------------------------
# Conventions and kinematics
# ---------------------------------------------------------------------------

def flip_first_sign(rows) -> tuple[ConventionRow, ...]:
    """Test mode: the reference table with one sign reversed."""
    rows = list(rows)
    rows[0] = replace(rows[0], sign=-rows[0].sign)
    return tuple(rows)


def check_convention(inject: str | None = None):
    rows = reference_convention_rows()
    if inject == "sign-flip":
        rows = flip_first_sign(rows)
    problems = convention_mismatches(default_chain(5).convention, rows)
    if problems:
        return False, f"{len(problems)} mismatching rows, first: {problems[0]}"
    return True, f"{len(rows)} rows match"


def check_rigid_fit(inject=None):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(200):
        template = rng.normal(scale=0.05, size=(4, 3))
        rot = Rotation.random(random_state=rng).as_matrix()
        shift = rng.normal(scale=0.5, size=3)
        fit = fit_rigid_transform(template, template @ rot.T + shift)
        worst = max(worst, float(fit.residual))
    return worst < 1e-12, f"max residual {worst:.2e} m"


def check_rotation_roundtrip(inject=None):
    rng = np.random.default_rng(12)
    rot = Rotation.random(10_000, random_state=rng).as_matrix()
    angles, _ = decompose_rotation(rot)
    err = float(np.abs(compose_rotation(angles) - rot).max())
    return err < 1e-10, f"max matrix error {err:.2e} over 10000 rotations"


def check_differentiation(inject=None):
    rate = 120.0
    t = np.arange(0, 2.0 + 0.5 / rate, 1.0 / rate)
    d = differentiate(np.sin(2 * np.pi * t), 1.0 / rate)
    err = float(np.abs(d - 2 * np.pi * np.cos(2 * np.pi * t)).max() / (2 * np.pi))
    return err < 1e-3, f"relative error {err:.2e}"


# ---------------------------------------------------------------------------
# Statics and forward simulation
# ---------------------------------------------------------------------------

def check_rod(inject=None):
    from .oracle.statics import horizontal_rod

    chain, loads = horizontal_rod(2.0, 1.0)
    track = loads[chain.joint_names[0]]
    moment = float(np.abs(track.moment_lab[:, 1]).max())
    force = float(track.force_lab[:, 2].max())
    err = max(abs(moment - 9.81) / 9.81, abs(force - 19.62) / 19.62)
    return err < 1e-9, f"moment {moment:.12g} N.m, force {force:.12g} N"


def check_weightless_chain(inject=None):
    from .oracle.statics import loaded_weightless_chain

    force, cop = np.array([30.0, -12.0, 400.0]), np.array([0.3, 0.05, 0.0])
    chain, _, loads = loaded_weightless_chain(force, cop)
    err = 0.0
    for joint in chain.joint_names:
        t = loads[joint]
        lever = np.cross(cop - t.center, force)
        err = max(err, float(np.abs(t.force_lab + force).max()) / np.linalg.norm(force),
                  float(np.abs(t.moment_lab + lever).max() / np.abs(lever).max()))
    return err < 1e-9, f"max relative deviation {err:.2e}"


def check_stationary(inject=None):
    from .oracle.scenario import builtin_scenario, simulate_forward

    sc = replace(builtin_scenario("single_pendulum"), gravity=0.0, initial_flexion={},
                 duration=0.5)
    truth = simulate_forward(sc)
    moved = max(float(np.abs(s.com - s.com[0]).max()) for s in truth.motion.segments.values())
    return moved == 0.0, f"max displacement {moved:.1e} m"


def check_pendulum_period(inject=None):
    from .oracle.scenario import builtin_scenario, simulate_forward

    sc = builtin_scenario("single_pendulum")
    truth = simulate_forward(sc)
    name = sc.chain.joint_names[0]
    q = truth.motion.joints[name].angles[:, 1]
    t = truth.times
    # downward zero crossings, linearly interpolated
    idx = np.flatnonzero((q[:-1] > 0) & (q[1:] <= 0))
    crossings = t[idx] + q[idx] / (q[idx] - q[idx + 1]) * (t[idx + 1] - t[idx])
    period = float(np.diff(crossings).mean())
    seg = sc.chain.segments[0]
    d = float(np.linalg.norm(seg.com_offset))
    inertia = seg.inertia[1, 1] + seg.mass * d * d
    expected = 2 * math.pi * math.sqrt(inertia / (seg.mass * sc.gravity * d))
    err = abs(period - expected) / expected
    return err < 0.01, f"period {period:.5f} s vs small-angle {expected:.5f} s ({100 * err:.2f} %)"


def check_energy_conservation(inject=None):
    from .oracle.scenario import builtin_scenario, simulate_forward

    sc = replace(builtin_scenario("double_pendulum"), torques={})
    truth = simulate_forward(sc)
    energy = truth.kinetic + truth.potential
    scale = float(np.abs(truth.potential - truth.potential.min()).max())
    drift = float(np.abs(energy - energy[0]).max()) / scale
    return drift < 1e-6, f"relative drift {drift:.2e} over {sc.duration:g} s"


# ---------------------------------------------------------------------------
# Roundtrips and the work-energy theorem
# ---------------------------------------------------------------------------

def _roundtrip(name: str):
    def check(inject=None):
        from .oracle.roundtrip import roundtrip_check
        from .oracle.scenario import builtin_scenario

        m = roundtrip_check(builtin_scenario(name))
        worst = max(m.max_torque_error, m.max_force_error, m.max_power_error)
        detail = (f"torque {m.max_torque_error:.1e}, force {m.max_force_error:.1e}, "
                  f"power {m.max_power_error:.1e}, {m.elapsed_s:.1f} s")
        return worst < ROUNDTRIP_TOL, detail
    return check


def _work_energy(name: str):
    def check(inject=None):
        from .oracle.roundtrip import dense, result_balance, roundtrip_check, truth_balance
        from .oracle.scenario import builtin_scenario

        sc = dense(builtin_scenario(name))
        m = roundtrip_check(sc)
        truth, recovered = truth_balance(m.truth), result_balance(m.result)
        worst = max(truth.relative, recovered.relative)
        return worst < WORK_ENERGY_TOL, (f"truth {truth.relative:.1e}, "
                                         f"recovered {recovered.relative:.1e}")
    return check


# ---------------------------------------------------------------------------
# Energetics and the trot profile
# ---------------------------------------------------------------------------

def check_energy_shares(inject=None):
    table = energy_fractions(EnergySummary.from_table(REFERENCE_ENERGY))
    got = {("joint", "generated", "stance", "elbow"):
           table.joint_share[("generated", "stance", "elbow")],
           ("phase", "generated", "stance"): table.phase_share[("generated", "stance")],
           ("phase", "absorbed", "stance"): table.phase_share[("absorbed", "stance")]}
    err = max(abs(got[k] - v) for k, v in REFERENCE_SHARES.items())
    return err <= 1.0, ", ".join(f"{v:.2f} %" for v in got.values())


def check_trot(inject=None):
    from .oracle.trot import TrotParameters, synth_trot
    from .pipeline import analyze_trial

    p = TrotParameters()
    bundle = synth_trot(p)
    r = analyze_trial(bundle.markers, bundle.grf, bundle.chain)
    stance = 100 * r.phases.stance_fraction
    peak = float(bundle.grf.force[:, 2].max() / bundle.chain.body_mass)
    mask = r.phases.stance_mask(r.times)
    ratios = []
    for joint in r.chain.joint_names:
        f = np.linalg.norm(r.loads[joint].force, axis=1)
        ratios.append(f[mask].max() / f[~mask].max())
    ok = (abs(stance - 100 * p.stance_fraction) <= 1.5
          and abs(peak - p.peak_grf) <= 0.01 * p.peak_grf and min(ratios) >= 5.0)
    return ok, (f"stance {stance:.2f} %, GRF peak {peak:.4f} N/kg, "
                f"min stance/swing contact force {min(ratios):.1f}")


CHECKS: dict[str, Callable] = {
    "convention.sign_table": check_convention,
    "kinematics.rigid_fit": check_rigid_fit,
    "kinematics.rotation_roundtrip": check_rotation_roundtrip,
    "kinematics.differentiation": check_differentiation,
    "statics.horizontal_rod": check_rod,
    "statics.weightless_chain": check_weightless_chain,
    "forward.stationary": check_stationary,
    "forward.pendulum_period": check_pendulum_period,
    "forward.energy_conservation": check_energy_conservation,
    "roundtrip.double_pendulum": _roundtrip("double_pendulum"),
    "roundtrip.prescribed_3d": _roundtrip("prescribed_3d"),
    "roundtrip.static_stance": _roundtrip("static_stance"),
    "work_energy.single_pendulum": _work_energy("single_pendulum"),
    "work_energy.double_pendulum": _work_energy("double_pendulum"),
    "work_energy.static_stance": _work_energy("static_stance"),
    "work_energy.prescribed_3d": _work_energy("prescribed_3d"),
    "work_energy.synth_trot": _work_energy("synth_trot"),
    "energetics.phase_shares": check_energy_shares,
    "trot.shape": check_trot,
}


def run_checks(names=None, inject: str | None = None) -> list[Outcome]:
    outcomes = []
    for name in names if names is not None else CHECKS:
        try:
            passed, detail = CHECKS[name](inject)
        except Exception as exc:  # a crashing check is a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        outcomes.append(Outcome(name, bool(passed), detail))
    return outcomes
