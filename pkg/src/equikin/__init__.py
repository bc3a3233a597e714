"""Three-dimensional inverse dynamics and mechanical energetics of a limb chain.

Marker trajectories and force-plate records go in; joint moments, joint
contact forces, joint powers and stance/swing work come out.
"""

from .dynamics import GrfSeries, detect_stance, inverse_dynamics, resample_grf
from .energetics import energy_fractions, integrate_energy, joint_power, time_normalize
from .kinematics import fit_rigid_transform, fit_segment_poses, joint_states
from .model import LimbChain, build_chain, default_chain, load_chain
from .pipeline import AnalysisOptions, analyze_trial, summarize

__version__ = "0.1.0"

__all__ = [
    "GrfSeries", "detect_stance", "inverse_dynamics", "resample_grf", "energy_fractions",
    "integrate_energy", "joint_power", "time_normalize", "fit_rigid_transform",
    "fit_segment_poses", "joint_states", "LimbChain", "build_chain", "default_chain",
    "load_chain", "AnalysisOptions", "analyze_trial", "summarize",
]
