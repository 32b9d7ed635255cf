"""QMDP action selection and reward learning from expert demonstrations.

Belief-space Q-values are the Frobenius inner product of the belief with each
action plane of the MDP Q-function; a softmax over them gives the action
distribution. The cross-entropy gradient w.r.t. Q(a, s) is
``(y[a] - y_target[a]) * b(s)`` and is routed to the reward, after which the
Q-function is replanned by value iteration.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from gridplan.belief import TotalMassZero, correction_update, propagate
from gridplan.grid import GridDims, Trajectory, one_hot_belief
from gridplan.planner import value_iterate

log = logging.getLogger(__name__)

QMDP_SCHEDULES = ("rmsprop", "linear-decay")


@dataclass(frozen=True)
class QmdpTrainConfig:
    schedule: str = "linear-decay"
    alpha0: float = 0.3
    rmsprop_rho: float = 0.9
    rmsprop_eps: float = 1e-8
    replay: str = "used"
    replay_capacity: Optional[int] = None  # None keeps every sample
    feedback: str = "delayed"
    epochs: int = 10
    vi_epsilon: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.schedule not in QMDP_SCHEDULES:
            raise ValueError(f"schedule must be one of {QMDP_SCHEDULES}, got {self.schedule!r}")
        if self.alpha0 < 0:
            raise ValueError("alpha0 must be non-negative")
        if self.replay not in ("none", "used"):
            raise ValueError(f"replay must be 'none' or 'used', got {self.replay!r}")
        if self.replay == "used" and self.replay_capacity is not None and self.replay_capacity < 1:
            raise ValueError("replay_capacity must be >= 1")
        if self.feedback not in ("immediate", "delayed"):
            raise ValueError(f"feedback must be 'immediate' or 'delayed', got {self.feedback!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.rmsprop_rho < 1.0:
            raise ValueError("rmsprop_rho must lie in (0, 1)")


class ReplaySample(NamedTuple):
    belief: np.ndarray
    target_action: int


@dataclass
class QmdpTrainReport:
    learnt_reward: np.ndarray
    final_q: np.ndarray
    policy: np.ndarray
    loss_curve: List[tuple] = field(default_factory=list)  # (step, cross_entropy, replans)
    replans: int = 0
    resets: int = 0


class ReplayBuffer:
    """Fixed-capacity buffer sampled uniformly with replacement."""

    def __init__(self, capacity: Optional[int] = None):
        self.samples = deque(maxlen=capacity)

    def __len__(self):
        return len(self.samples)

    def add(self, sample: ReplaySample):
        self.samples.append(sample)

    def sample(self, rng: np.random.Generator) -> ReplaySample:
        if not self.samples:
            raise IndexError("sampling from an empty replay buffer")
        return self.samples[int(rng.integers(len(self.samples)))]


def qmdp_values(q: np.ndarray, b: np.ndarray) -> np.ndarray:
    q, b = np.asarray(q, float), np.asarray(b, float)
    if q.shape[1:] != b.shape:
        raise ValueError(f"Q planes {q.shape[1:]} and belief {b.shape} differ in shape")
    return np.tensordot(q, b, axes=([1, 2], [0, 1]))


def action_distribution(qb: np.ndarray) -> np.ndarray:
    qb = np.asarray(qb, float)
    e = np.exp(qb - qb.max())
    return e / e.sum()


def cross_entropy(y: np.ndarray, target) -> float:
    """``-ln y[target]``; ``target`` is an index or a one-hot vector."""
    k = int(np.argmax(target)) if np.ndim(target) else int(target)
    return float(-np.log(y[k]))


def one_hot_action(a: int, na: int) -> np.ndarray:
    y = np.zeros(na)
    y[a] = 1.0
    return y


def q_gradient(y: np.ndarray, y_target: np.ndarray, b: np.ndarray) -> np.ndarray:
    """d(cross-entropy)/dQ(a, s) through the inner product and softmax stages."""
    return (np.asarray(y) - np.asarray(y_target))[:, None, None] * np.asarray(b)[None]


def reward_gradient_step(R, y, y_target, b, alpha: float) -> np.ndarray:
    return np.asarray(R, float) - alpha * q_gradient(y, y_target, b)


def initial_belief(O: np.ndarray, z, nd: int) -> np.ndarray:
    """Posterior after the first observation from a uniform prior."""
    return correction_update(np.full((nd, nd), 1.0 / (nd * nd)), O, z)


def filtered_beliefs(traj: Trajectory, T: np.ndarray, O: np.ndarray, nd: int):
    """Bayes-filter beliefs ``b_t`` after each observation; returns ``(beliefs, resets)``."""
    beliefs = [initial_belief(O, traj.observation(0), nd)]
    resets = 0
    for t in range(1, len(traj)):
        z = traj.observation(t)
        try:
            beliefs.append(propagate(beliefs[-1], int(traj.actions[t - 1]), z, T, O))
        except TotalMassZero:
            resets += 1
            beliefs.append(one_hot_belief(z, nd))
    return beliefs, resets


def expert_samples(trajectories: Sequence[Trajectory], T: np.ndarray, O: np.ndarray, nd: int):
    """Per-trajectory lists of ``(belief, expert action)`` samples, and the belief reset count."""
    per_traj, resets = [], 0
    for traj in trajectories:
        if not traj.has_expert:
            raise ValueError("reward learning needs expert actions on every trajectory step")
        beliefs, r = filtered_beliefs(traj, T, O, nd)
        resets += r
        per_traj.append([ReplaySample(b, int(a)) for b, a in zip(beliefs, traj.expert_actions)])
    return per_traj, resets


def observed_samples(trajectories: Sequence[Trajectory], nd: int):
    """Per-trajectory samples that treat each observation as the true state."""
    return [[ReplaySample(one_hot_belief(tr.observation(t), nd), int(tr.expert_actions[t]))
             for t in range(len(tr))] for tr in trajectories]


def train_reward(
    expert_trajectories: Sequence[Trajectory],
    T_model: np.ndarray,
    O: np.ndarray,
    dims: GridDims,
    cfg: QmdpTrainConfig,
) -> QmdpTrainReport:
    if not expert_trajectories:
        raise ValueError("no expert trajectories")
    rng = np.random.default_rng(cfg.seed)
    na, nd = dims.na, dims.nd
    per_traj, resets = expert_samples(expert_trajectories, T_model, O, nd)
    samples = [s for traj in per_traj for s in traj]
    ends = set(np.cumsum([len(t) for t in per_traj]) - 1)
    replan_every = max(1, round(len(samples) / len(per_traj)))

    buffer = ReplayBuffer(cfg.replay_capacity if cfg.replay == "used" else None)
    for s in samples:
        buffer.add(s)

    R = np.zeros((na, nd, nd))
    sq_avg = np.zeros_like(R)
    vi = value_iterate(T_model, R, dims.gamma, cfg.vi_epsilon)
    report = QmdpTrainReport(R, vi.q, vi.policy, resets=resets)
    total = cfg.epochs * len(samples)
    step_no = 0
    for _ in range(cfg.epochs):
        for k in range(len(samples)):
            sample = buffer.sample(rng) if cfg.replay == "used" else samples[k]
            y = action_distribution(qmdp_values(vi.q, sample.belief))
            y_target = one_hot_action(sample.target_action, na)
            grad = q_gradient(y, y_target, sample.belief)
            if cfg.schedule == "linear-decay":
                R -= cfg.alpha0 * max(0.0, 1.0 - step_no / total) * grad
            else:
                sq_avg = cfg.rmsprop_rho * sq_avg + (1.0 - cfg.rmsprop_rho) * grad ** 2
                R -= cfg.alpha0 * grad / (np.sqrt(sq_avg) + cfg.rmsprop_eps)

            if cfg.feedback == "immediate":
                replan = True
            elif cfg.replay == "used":
                replan = (k + 1) % replan_every == 0
            else:
                replan = k in ends
            if replan:
                vi = value_iterate(T_model, R, dims.gamma, cfg.vi_epsilon, v0=vi.v)
                report.replans += 1
            report.loss_curve.append((step_no, cross_entropy(y, sample.target_action), report.replans))
            step_no += 1

    final = value_iterate(T_model, R, dims.gamma, 1e-4)
    report.learnt_reward = R
    report.final_q = final.q
    report.policy = final.policy
    return report


def counting_reward(per_traj_samples, dims: GridDims) -> np.ndarray:
    """Belief-weighted frequency of each expert action per state.

    With one-hot beliefs this is the empirical expert policy at observed states;
    unvisited states get zero reward.
    """
    counts = np.zeros((dims.na, dims.nd, dims.nd))
    for traj in per_traj_samples:
        for b, a in traj:
            counts[a] += b
    mass = counts.sum(axis=0)
    return np.divide(counts, mass, out=np.zeros_like(counts), where=mass > 0)
