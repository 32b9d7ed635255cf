"""Desk-scale experiment harness shared by the ordering tests.

Runs are cached per seed so the module tests and the acceptance suite reuse
them within one pytest session.
"""

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Dict

from gridplan.grid import (
    DESK_REWARDS,
    EnvironmentSpec,
    GridDims,
    generate_trajectory,
    make_environment,
    parse_reward_placements,
    seeded_rng,
)
from gridplan.metrics import EvalReport, evaluate
from gridplan.planner import value_iterate
from gridplan.reward import QmdpTrainConfig, counting_reward, expert_samples, observed_samples, train_reward
from gridplan.transition import BpTrainConfig, naive_count, train_transition, transition_error, weighted_count

SEEDS = (1, 2, 3)
DIMS = GridDims()  # nd=20, na=9, w=1, h=1, gamma=0.95
N_TRAJ, TRAJ_LEN = 80, 100  # 7920 transitions
N_EXPERT, EXPERT_LEN = 20, 30


def desk_env(obs_noise=0.1):
    return make_environment(DIMS, EnvironmentSpec(obs_noise=obs_noise, rewards=parse_reward_placements(DESK_REWARDS)))


def random_data(env, seed):
    rng = seeded_rng(seed, "transition-data")
    return [generate_trajectory(env, None, TRAJ_LEN, rng) for _ in range(N_TRAJ)]


@dataclass
class ModelResult:
    error: float
    report: EvalReport


def _score_transition(env, reference, learnt):
    policy = value_iterate(learnt, env.reward, DIMS.gamma).policy
    return ModelResult(transition_error(learnt, env.transition),
                       evaluate(policy, reference, env.transition, env.reward, DIMS.gamma))


@lru_cache(maxsize=None)
def transition_conditions(seed) -> Dict[str, ModelResult]:
    """Transition-learning conditions on one seed's partially and fully observable data."""
    out = {}
    for prefix, noise in (("", 0.1), ("fo-", 0.0)):
        env = desk_env(noise)
        reference = value_iterate(env.transition, env.reward, DIMS.gamma).policy
        data = random_data(env, seed)
        base = BpTrainConfig(seed=seed)
        runs = {"bp": base, "bp-output": replace(base, recurrence="output"),
                "bp-rmsprop": replace(base, schedule="rmsprop"),
                "bp-linear": replace(base, schedule="linear-decay")}
        if prefix:
            runs = {"bp": base}
        for name, cfg in runs.items():
            learnt = train_transition(data, env.observation, DIMS, cfg).learnt
            out[prefix + name] = _score_transition(env, reference, learnt)
        out[prefix + "naive"] = _score_transition(env, reference, naive_count(data, DIMS))
        out[prefix + "weighted"] = _score_transition(env, reference, weighted_count(data, env.observation, DIMS))
    return out


@lru_cache(maxsize=None)
def learnt_transition(seed):
    env = desk_env()
    return train_transition(random_data(env, seed), env.observation, DIMS, BpTrainConfig(seed=seed)).learnt


@lru_cache(maxsize=None)
def reward_conditions(seed) -> Dict[str, EvalReport]:
    """Reward-learning conditions with the BP-learnt transition model."""
    env = desk_env()
    ref = value_iterate(env.transition, env.reward, DIMS.gamma).policy
    rng = seeded_rng(seed, "expert-data")
    experts = [generate_trajectory(env, ref, EXPERT_LEN, rng) for _ in range(N_EXPERT)]
    T_bp = learnt_transition(seed)

    def score(policy):
        return evaluate(policy, ref, env.transition, env.reward, DIMS.gamma)

    base = QmdpTrainConfig(seed=seed)
    out = {"known-reward": score(value_iterate(T_bp, env.reward, DIMS.gamma).policy)}
    for name, cfg in {"qmdp": base, "rmsprop": replace(base, schedule="rmsprop"),
                      "no-replay": replace(base, replay="none"),
                      "immediate": replace(base, feedback="immediate")}.items():
        out[name] = score(train_reward(experts, T_bp, env.observation, DIMS, cfg).policy)

    data = random_data(env, seed)
    T_naive = naive_count(data, DIMS)
    one_hot = observed_samples(experts, DIMS.nd)
    out["naive-count"] = score(value_iterate(T_naive, counting_reward(one_hot, DIMS), DIMS.gamma).policy)
    T_weighted = weighted_count(data, env.observation, DIMS)
    filtered, _ = expert_samples(experts, T_weighted, env.observation, DIMS.nd)
    out["weighted-count"] = score(value_iterate(T_weighted, counting_reward(filtered, DIMS), DIMS.gamma).policy)
    return out


def holds_for(predicate, results) -> int:
    return sum(bool(predicate(r)) for r in results)


def as_row(results: dict) -> str:
    parts = []
    for name, r in results.items():
        if isinstance(r, ModelResult):
            parts.append(f"{name}: err {r.error:.4f} acc {r.report.replanning_accuracy_pct:.2f}")
        else:
            parts.append(f"{name}: acc {r.replanning_accuracy_pct:.2f} eri {r.expected_reward_increase_pct:+.3f}")
    return "; ".join(parts)
