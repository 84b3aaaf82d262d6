"""graspgen: learn, execute and score dexterous grasping trajectories."""

from .assets import toy_hand, two_link_arm
from .errors import (
    DegenerateRotation,
    DimensionMismatch,
    GradientError,
    GraspgenError,
    InfeasibleSpec,
    PlanningFailure,
    RolloutDiverged,
    SolverDivergence,
    StageError,
    TrainingAborted,
    ValidationError,
)
from .formats import (
    Demonstration,
    Trajectory,
    load_demonstrations,
    load_hand_model,
    load_report,
    load_trajectory,
    save_demonstrations,
    save_report,
    save_trajectory,
)
from .harness import batch_filter, cost_of_success, evaluate, format_cost
from .kinematics import (
    HandModel,
    actuator_to_pose,
    fk,
    fk_actuator,
    fk_jacobian,
    pose_to_actuator,
)
from .metrics import compare_methods, linear_resample, resample_polyline, smoothness
from .model import (
    LossWeights,
    ModelConfig,
    TrainConfig,
    load_model,
    sample_single,
    sample_trajectories,
    save_model,
    train,
)
from .pipeline import PipelineConfig, StageToggles, run_pipeline
from .retarget import RetargetConfig, retarget_trajectory

__version__ = "0.1.0"

__all__ = [
    "Demonstration",
    "DegenerateRotation",
    "DimensionMismatch",
    "GradientError",
    "GraspgenError",
    "HandModel",
    "InfeasibleSpec",
    "LossWeights",
    "ModelConfig",
    "PipelineConfig",
    "PlanningFailure",
    "RetargetConfig",
    "RolloutDiverged",
    "SolverDivergence",
    "StageError",
    "StageToggles",
    "TrainConfig",
    "Trajectory",
    "TrainingAborted",
    "ValidationError",
    "actuator_to_pose",
    "batch_filter",
    "compare_methods",
    "cost_of_success",
    "evaluate",
    "fk",
    "fk_actuator",
    "fk_jacobian",
    "format_cost",
    "linear_resample",
    "load_demonstrations",
    "load_hand_model",
    "load_model",
    "load_report",
    "load_trajectory",
    "pose_to_actuator",
    "resample_polyline",
    "retarget_trajectory",
    "run_pipeline",
    "sample_single",
    "sample_trajectories",
    "save_demonstrations",
    "save_model",
    "save_report",
    "save_trajectory",
    "smoothness",
    "toy_hand",
    "train",
    "two_link_arm",
    "__version__",
]
