"""Teach a small humanoid to seat a teddy bear on an unknown chair.

The package imagines a sitting pose by dropping a simulated agent onto the
chair, walks the robot to a goal pose (asking a human to turn the chair
when needed) and plans a quasi-static whole-body motion that puts the bear
down.
"""

from .agent import AgentModel, default_agent
from .assistance import HumanPolicy, Instruction, assistance_loop, required_rotation
from .chairs import ChairGenParams, generate_chair
from .geometry import Mesh, Obb, PlanarPose, RigidTransform, compute_obb, load_mesh
from .imagination import NoSittingFound, SittingPose, imagine
from .nav import Arena, Footprint, NavParams, compute_goal, default_arena, plan_se2
from .pipeline import PipelineConfig, TrialConfig, TrialResult, run_bench, run_trial
from .sam import SamConfig, SamVerdict, classify
from .sim import SimParams, settle
from .wholebody import SeatingProblem, default_chain, goal_config, plan_seating_trajectory

__version__ = "0.1.0"

__all__ = ["AgentModel", "Arena", "ChairGenParams", "Footprint", "HumanPolicy", "Instruction", "Mesh",
           "NavParams", "NoSittingFound", "Obb", "PipelineConfig", "PlanarPose", "RigidTransform",
           "SamConfig", "SamVerdict", "SeatingProblem", "SimParams", "SittingPose", "TrialConfig",
           "TrialResult", "assistance_loop", "classify", "compute_goal", "compute_obb",
           "default_agent", "default_arena", "default_chain", "generate_chair", "goal_config", "imagine",
           "load_mesh", "plan_se2", "plan_seating_trajectory", "required_rotation", "run_bench", "run_trial",
           "settle"]
