"""Synthetic ground truth for verifying the inverse pipeline."""

from .profiles import Bump, Profile, profile_from_config
from .roundtrip import (RoundtripMetrics, WorkEnergyBalance, relative_error, result_balance,
                        roundtrip_check, truth_balance, work_energy_balance)
from .scenario import (BUILTIN_SCENARIOS, ForceScript, GroundTruth, JointProfiles, ParentProfiles,
                       SyntheticScenario, builtin_scenario, load_scenario, pendulum_chain_config,
                       scenario_from_config, simulate_forward)
from .trot import TrotParameters, synth_trot, trot_scenario

__all__ = [
    "Bump", "Profile", "profile_from_config", "RoundtripMetrics", "WorkEnergyBalance",
    "relative_error", "result_balance", "roundtrip_check", "truth_balance",
    "work_energy_balance", "BUILTIN_SCENARIOS", "ForceScript", "GroundTruth", "JointProfiles",
    "ParentProfiles", "SyntheticScenario", "builtin_scenario", "load_scenario",
    "pendulum_chain_config", "scenario_from_config", "simulate_forward", "TrotParameters",
    "synth_trot", "trot_scenario",
]
