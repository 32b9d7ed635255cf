"""Evaluation of replanned policies against the ground-truth model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from gridplan.planner import default_max_iter, flip_transition, same_conv

EXCLUDE_TOL = 1e-9
EVAL_FIELDS = ("replanning_accuracy_pct", "expected_reward_increase_pct", "states_excluded")


@dataclass
class EvalReport:
    replanning_accuracy_pct: float
    expected_reward_increase_pct: float
    states_excluded: int

    def csv_row(self) -> str:
        return f"{self.replanning_accuracy_pct!r},{self.expected_reward_increase_pct!r},{self.states_excluded}"

    def summary(self) -> str:
        return (
            f"replanning accuracy {self.replanning_accuracy_pct:.3f} %, "
            f"expected reward increase {self.expected_reward_increase_pct:+.3f} % "
            f"({self.states_excluded} states excluded)"
        )


def replanning_accuracy(learnt: np.ndarray, reference: np.ndarray) -> float:
    learnt, reference = np.asarray(learnt), np.asarray(reference)
    if learnt.shape != reference.shape:
        raise ValueError(f"policies differ in shape: {learnt.shape} vs {reference.shape}")
    return 100.0 * float(np.count_nonzero(learnt == reference)) / learnt.size


def policy_evaluation(
    policy: np.ndarray,
    T_true: np.ndarray,
    R_true: np.ndarray,
    gamma: float,
    epsilon: float = 1e-4,
    max_iter: Optional[int] = None,
) -> np.ndarray:
    """Value of a fixed policy under the true model, by iterating its Bellman backup from zero."""
    policy = np.asarray(policy, dtype=np.int64)
    if max_iter is None:
        max_iter = 100 * default_max_iter(gamma)
    T_flipped = flip_transition(T_true)
    rows, cols = np.indices(policy.shape)
    r_pi = np.asarray(R_true, float)[policy, rows, cols]
    v = np.zeros(policy.shape)
    for _ in range(max_iter):
        v_next = r_pi + gamma * same_conv(v, T_flipped)[policy, rows, cols]
        residual = np.max(np.abs(v_next - v))
        v = v_next
        if residual < epsilon:
            break
    return v


def expected_reward_increase(v_learnt: np.ndarray, v_orig: np.ndarray):
    """Mean relative change of state values, in percent.

    States whose original value is within 1e-9 of zero are left out; returns
    ``(percent, states_excluded)``.
    """
    v_learnt, v_orig = np.asarray(v_learnt, float), np.asarray(v_orig, float)
    if v_learnt.shape != v_orig.shape:
        raise ValueError(f"value functions differ in shape: {v_learnt.shape} vs {v_orig.shape}")
    keep = np.abs(v_orig) >= EXCLUDE_TOL
    if not keep.any():
        raise ValueError("every state has a near-zero original value; the relative change is undefined")
    rel = (v_learnt[keep] - v_orig[keep]) / v_orig[keep]
    return 100.0 * float(np.mean(rel)), int(np.count_nonzero(~keep))


def evaluate(learnt_policy, reference_policy, T_true, R_true, gamma, epsilon: float = 1e-4) -> EvalReport:
    v_learnt = policy_evaluation(learnt_policy, T_true, R_true, gamma, epsilon)
    v_orig = policy_evaluation(reference_policy, T_true, R_true, gamma, epsilon)
    increase, excluded = expected_reward_increase(v_learnt, v_orig)
    return EvalReport(replanning_accuracy(learnt_policy, reference_policy), increase, excluded)
