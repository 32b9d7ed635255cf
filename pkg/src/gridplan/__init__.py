"""Recurrent-convolutional planning and model learning on 2-D gridworlds.

Value iteration, Bayes-filter belief propagation and QMDP action selection are
all written as convolutions, element-wise products and poolings over
``nd x nd`` grids, so transition models and rewards can be learnt by
gradient descent through them.
"""

from gridplan.grid import (
    GridDims,
    State,
    Trajectory,
    Environment,
    EnvironmentSpec,
    InvariantError,
    make_environment,
    step,
    observe,
    generate_trajectory,
    one_hot_belief,
)
from gridplan.planner import (
    ViResult,
    flip_transition,
    conv_value_update,
    naive_value_update,
    value_iterate,
    greedy_policy,
    benchmark_iteration,
)
from gridplan.belief import (
    TotalMassZero,
    motion_update,
    correction_update,
    propagate,
)
from gridplan.transition import (
    BpTrainConfig,
    BpTrainReport,
    bp_step_gradient,
    train_transition,
    naive_count,
    weighted_count,
    transition_error,
)
from gridplan.reward import (
    QmdpTrainConfig,
    QmdpTrainReport,
    ReplaySample,
    qmdp_values,
    action_distribution,
    cross_entropy,
    reward_gradient_step,
    train_reward,
)
from gridplan.metrics import EvalReport, evaluate, policy_evaluation

__version__ = "0.1.0"

__all__ = [
    "GridDims",
    "State",
    "Trajectory",
    "Environment",
    "EnvironmentSpec",
    "InvariantError",
    "make_environment",
    "step",
    "observe",
    "generate_trajectory",
    "one_hot_belief",
    "ViResult",
    "flip_transition",
    "conv_value_update",
    "naive_value_update",
    "value_iterate",
    "greedy_policy",
    "benchmark_iteration",
    "TotalMassZero",
    "motion_update",
    "correction_update",
    "propagate",
    "BpTrainConfig",
    "BpTrainReport",
    "bp_step_gradient",
    "train_transition",
    "naive_count",
    "weighted_count",
    "transition_error",
    "QmdpTrainConfig",
    "QmdpTrainReport",
    "ReplaySample",
    "qmdp_values",
    "action_distribution",
    "cross_entropy",
    "reward_gradient_step",
    "train_reward",
    "EvalReport",
    "evaluate",
    "policy_evaluation",
]
