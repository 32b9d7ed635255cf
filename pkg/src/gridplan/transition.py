"""Learning transition filters by backpropagating through belief propagation.

Also holds the two counting baselines and the transition error metric.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np

from gridplan.belief import (
    TotalMassZero,
    correct,
    correction_update,
    motion_update,
    observation_mask,
    propagate,
)
from gridplan.grid import GridDims, Trajectory, is_delta_kernel, one_hot_belief

log = logging.getLogger(__name__)

RECURRENCES = ("target", "output")
BP_SCHEDULES = ("rmsprop", "linear-decay", "filter-wise-decay")
OBSERVATION_STAGES = ("identity", "mask")


@dataclass(frozen=True)
class BpTrainConfig:
    recurrence: str = "target"
    schedule: str = "filter-wise-decay"
    alpha0: float = 0.5
    rmsprop_rho: float = 0.9
    rmsprop_eps: float = 1e-8
    decay: float = 1.0
    epochs: int = 1
    seed: int = 0
    observation_stage: str = "identity"

    def __post_init__(self):
        if self.observation_stage not in OBSERVATION_STAGES:
            raise ValueError(f"observation_stage must be one of {OBSERVATION_STAGES}")
        if self.recurrence not in RECURRENCES:
            raise ValueError(f"recurrence must be one of {RECURRENCES}, got {self.recurrence!r}")
        if self.schedule not in BP_SCHEDULES:
            raise ValueError(f"schedule must be one of {BP_SCHEDULES}, got {self.schedule!r}")
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if not 0.0 < self.rmsprop_rho < 1.0:
            raise ValueError("rmsprop_rho must lie in (0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class BpTrainReport:
    learnt: np.ndarray
    loss_curve: List[tuple] = field(default_factory=list)  # (step, loss, action, alpha)
    transition_error: Optional[float] = None
    resets: int = 0


class BpStep(NamedTuple):
    grad: np.ndarray
    loss: float
    prediction: np.ndarray


def init_transition(na: int, w: int, rng: np.random.Generator) -> np.ndarray:
    nt = 2 * w + 1
    filters = rng.uniform(0.0, 1.0, size=(na, nt, nt))
    return filters / filters.sum(axis=(1, 2), keepdims=True)


def prediction_mask(O: Optional[np.ndarray], z: Sequence[int], nd: int) -> np.ndarray:
    """Element-wise product stage used for the training prediction.

    ``O=None`` makes the stage the identity. A delta kernel is treated the same
    way: it would snap every prediction onto the target and leave nothing to learn.
    """
    if O is None or is_delta_kernel(O):
        return np.ones((nd, nd))
    return observation_mask(O, z, nd)


def bp_step_gradient(b_in, a: int, z, b_target, T, O) -> BpStep:
    """Squared-error loss of one belief-propagation step and its gradient w.r.t. filter ``a``.

    The normalizer is held at its forward-pass value, so the gradient is the
    observation-masked error signal correlated against the input belief.
    """
    b_in = np.asarray(b_in, float)
    nd = b_in.shape[0]
    nt = T.shape[1]
    w = nt // 2
    mask = prediction_mask(O, z, nd)
    pred, eta = correct(motion_update(b_in, T, a), mask)
    diff = np.asarray(b_target, float) - pred
    loss = float(np.sum(diff * diff))
    err = -2.0 * eta * diff * mask
    padded = np.pad(b_in, w)
    grad = np.empty((nt, nt))
    for m in range(nt):
        r0 = 2 * w - m
        for n in range(nt):
            c0 = 2 * w - n
            grad[m, n] = np.sum(err * padded[r0:r0 + nd, c0:c0 + nd])
    return BpStep(grad, loss, pred)


def project_filter(filt: np.ndarray) -> np.ndarray:
    """Clip to [0, 1] and renormalize; an all-zero result becomes uniform."""
    out = np.clip(np.asarray(filt, float), 0.0, 1.0)
    total = out.sum()
    if total > 0.0:
        return out / total
    return np.full_like(out, 1.0 / out.size)


def transition_error(learnt: np.ndarray, truth: np.ndarray) -> float:
    learnt, truth = np.asarray(learnt, float), np.asarray(truth, float)
    if learnt.shape != truth.shape:
        raise ValueError(f"transition models differ in shape: {learnt.shape} vs {truth.shape}")
    return float(np.sum((learnt - truth) ** 2))


def _transitions(trajectories: Sequence[Trajectory]):
    """Yield ``(trajectory_index, t, z_prev, action, z_next)`` for consecutive records."""
    for k, traj in enumerate(trajectories):
        for t in range(1, len(traj)):
            yield k, t, traj.observation(t - 1), int(traj.actions[t - 1]), traj.observation(t)


def train_transition(
    trajectories: Sequence[Trajectory],
    O: np.ndarray,
    dims: GridDims,
    cfg: BpTrainConfig,
    truth: Optional[np.ndarray] = None,
    on_update: Optional[Callable[[int, int, np.ndarray], None]] = None,
) -> BpTrainReport:
    """Online training of the filter bank from action/observation sequences.

    Only the executed action's filter is updated at each step, followed by a
    projection back onto valid distributions. ``on_update(step, action, T)`` is
    called after every update.
    """
    if not trajectories:
        raise ValueError("no trajectories to train on")
    rng = np.random.default_rng(cfg.seed)
    T = init_transition(dims.na, dims.w, rng)
    nd = dims.nd
    total_steps = cfg.epochs * sum(len(t) - 1 for t in trajectories)
    updates = np.zeros(dims.na, dtype=np.int64)
    sq_avg = np.zeros_like(T)
    report = BpTrainReport(T)
    stage_O = O if cfg.observation_stage == "mask" else None
    step_no = 0
    for _ in range(cfg.epochs):
        prev_k = -1
        belief = None
        for k, t, z_prev, a, z in _transitions(trajectories):
            if k != prev_k:
                belief = one_hot_belief(z_prev, nd)
                prev_k = k
            b_in = one_hot_belief(z_prev, nd) if cfg.recurrence == "target" else belief
            target = one_hot_belief(z, nd)
            try:
                g = bp_step_gradient(b_in, a, z, target, T, stage_O)
            except TotalMassZero:
                report.resets += 1
                log.debug("belief reset at trajectory %d step %d", k, t)
                belief = target
                step_no += 1
                continue

            if cfg.schedule == "filter-wise-decay":
                alpha = cfg.alpha0 / (1.0 + cfg.decay * updates[a])
                delta = alpha * g.grad
            elif cfg.schedule == "linear-decay":
                alpha = cfg.alpha0 * max(0.0, 1.0 - step_no / total_steps)
                delta = alpha * g.grad
            else:
                alpha = cfg.alpha0
                sq_avg[a] = cfg.rmsprop_rho * sq_avg[a] + (1.0 - cfg.rmsprop_rho) * g.grad ** 2
                delta = alpha * g.grad / (np.sqrt(sq_avg[a]) + cfg.rmsprop_eps)
            T[a] = project_filter(T[a] - delta)
            updates[a] += 1
            report.loss_curve.append((step_no, g.loss, a, float(alpha)))
            belief = g.prediction
            if on_update is not None:
                on_update(step_no, a, T)
            step_no += 1

    report.learnt = T
    if truth is not None:
        report.transition_error = transition_error(T, truth)
    return report


# -- counting baselines ----------------------------------------------------------


def normalize_counts(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, float)
    sums = counts.sum(axis=(1, 2), keepdims=True)
    uniform = np.full_like(counts, 1.0 / (counts.shape[1] * counts.shape[2]))
    return np.where(sums > 0, counts / np.where(sums > 0, sums, 1.0), uniform)


def displacement_counts(trajectories: Sequence[Trajectory], dims: GridDims) -> np.ndarray:
    """Raw counts of observed displacements per action; shards merge by addition."""
    w = dims.w
    counts = np.zeros((dims.na, dims.nt, dims.nt))
    for _, _, z_prev, a, z in _transitions(trajectories):
        du, dv = z[0] - z_prev[0], z[1] - z_prev[1]
        if abs(du) <= w and abs(dv) <= w:
            counts[a, du + w, dv + w] += 1.0
    return counts


def naive_count(trajectories: Sequence[Trajectory], dims: GridDims) -> np.ndarray:
    """Treat observations as true states and count displacements."""
    if not trajectories:
        raise ValueError("no trajectories to count")
    return normalize_counts(displacement_counts(trajectories, dims))


def weighted_count(trajectories: Sequence[Trajectory], O: np.ndarray, dims: GridDims):
    """Count displacements weighted by belief mass.

    The belief is filtered with the running count estimate. Each step adds, for
    every displacement ``d``, the belief mass at ``z_next - d``.
    """
    if not trajectories:
        raise ValueError("no trajectories to count")
    nd, w, nt = dims.nd, dims.w, dims.nt
    counts = np.zeros((dims.na, nt, nt))
    estimate = normalize_counts(counts)
    uniform = np.full((nd, nd), 1.0 / (nd * nd))
    prev_k = -1
    belief = None
    for k, _, z_prev, a, z in _transitions(trajectories):
        if k != prev_k:
            belief = correction_update(uniform, O, z_prev)
            prev_k = k
        padded = np.pad(belief, w)
        # window[m, n] = belief[z - (m - w), z - (n - w)]
        window = padded[z[0]:z[0] + nt, z[1]:z[1] + nt][::-1, ::-1]
        counts[a] += window
        estimate[a] = normalize_counts(counts[a:a + 1])[0]
        try:
            belief = propagate(belief, a, z, estimate, O)
        except TotalMassZero:
            belief = one_hot_belief(z, nd)
    return normalize_counts(counts)
