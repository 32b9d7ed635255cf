"""Gridworld domain types and the ground-truth simulator.

Array conventions used throughout the package:

* transition model: ``(na, nt, nt)`` array, ``T[a, u + w, v + w]`` is the
  probability of displacement ``(drow=u, dcol=v)`` under action ``a``.
  Row 0 is the top of the grid.
* reward / Q function: ``(na, nd, nd)``; value function and belief: ``(nd, nd)``.
* observation kernel: ``(no, no)``, entry ``[du + h, dv + h]`` is the
  probability of observing offset ``(du, dv)`` from the true state.
* policy: ``(nd, nd)`` integer array of action indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

FILTER_TOL = 1e-9
BELIEF_TOL = 1e-12

# (drow, dcol) of each action for the compass presets, keyed by action count.
COMPASS_ACTIONS = {
    4: [(-1, 0), (1, 0), (0, 1), (0, -1)],
    5: [(-1, 0), (1, 0), (0, 1), (0, -1), (0, 0)],
    8: [(-1, 0), (1, 0), (0, 1), (0, -1), (-1, 1), (-1, -1), (1, 1), (1, -1)],
    9: [(-1, 0), (1, 0), (0, 1), (0, -1), (-1, 1), (-1, -1), (1, 1), (1, -1), (0, 0)],
}
ACTION_NAMES = {
    (-1, 0): "N", (1, 0): "S", (0, 1): "E", (0, -1): "W",
    (-1, 1): "NE", (-1, -1): "NW", (1, 1): "SE", (1, -1): "SW", (0, 0): "stay",
}
PRESETS = ("deterministic-compass", "noisy-compass", "random-seeded")

# One goal cell plus a small cost on diagonal moves. Without the cost, about a
# quarter of the states have near-tied best actions and replanning accuracy
# mostly measures tie-breaking noise.
DESK_REWARDS = "14:15:all:1.0,*:*:4:-0.1,*:*:5:-0.1,*:*:6:-0.1,*:*:7:-0.1"


class InvariantError(ValueError):
    """A model, belief or policy violates its probability/shape invariants."""


@dataclass(frozen=True)
class GridDims:
    nd: int = 20
    na: int = 9
    w: int = 1
    h: int = 1
    gamma: float = 0.95

    def __post_init__(self):
        for name in ("nd", "na"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.w < 0 or self.h < 0:
            raise ValueError("w and h must be non-negative")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.nt > self.nd or self.no > self.nd:
            raise ValueError(
                f"filter sizes nt={self.nt}, no={self.no} exceed grid side nd={self.nd}"
            )

    @property
    def nt(self) -> int:
        return 2 * self.w + 1

    @property
    def no(self) -> int:
        return 2 * self.h + 1

    @property
    def n_states(self) -> int:
        return self.nd * self.nd


class State(NamedTuple):
    i: int
    j: int


def _clamp(s: Sequence[int], nd: int) -> State:
    return State(min(max(int(s[0]), 0), nd - 1), min(max(int(s[1]), 0), nd - 1))


@dataclass
class Trajectory:
    """Time-ordered ``(action, observation[, expert_action])`` records.

    Record ``t`` holds the observation ``z_t`` received in state ``s_t`` and the
    action ``a_t`` executed from that state.
    """

    actions: np.ndarray
    observations: np.ndarray
    expert_actions: Optional[np.ndarray] = None

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=np.int64).reshape(-1)
        self.observations = np.asarray(self.observations, dtype=np.int64).reshape(-1, 2)
        if len(self.actions) == 0:
            raise ValueError("trajectory must contain at least one step")
        if len(self.observations) != len(self.actions):
            raise ValueError("actions and observations differ in length")
        if self.expert_actions is not None:
            self.expert_actions = np.asarray(self.expert_actions, dtype=np.int64).reshape(-1)
            if len(self.expert_actions) != len(self.actions):
                raise ValueError("expert_actions must be present for every step or none")

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def has_expert(self) -> bool:
        return self.expert_actions is not None

    def observation(self, t: int) -> State:
        return State(int(self.observations[t, 0]), int(self.observations[t, 1]))

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        if self.has_expert != other.has_expert:
            return False
        same = np.array_equal(self.actions, other.actions) and np.array_equal(
            self.observations, other.observations
        )
        if self.has_expert:
            same = same and np.array_equal(self.expert_actions, other.expert_actions)
        return same


@dataclass(frozen=True)
class RewardPlacement:
    state: State  # a None coordinate covers the whole row/column
    action: Optional[int]  # None means every action
    value: float


@dataclass(frozen=True)
class EnvironmentSpec:
    preset: str = "noisy-compass"
    slip: float = 0.2
    obs_noise: float = 0.1
    rewards: tuple = ()
    seed: int = 0


@dataclass
class Environment:
    dims: GridDims
    transition: np.ndarray
    reward: np.ndarray
    observation: np.ndarray
    spec: EnvironmentSpec = field(default_factory=EnvironmentSpec)


# -- invariant checks --------------------------------------------------------


def check_transition(filters: np.ndarray, na: Optional[int] = None, nt: Optional[int] = None):
    filters = np.asarray(filters, dtype=float)
    if filters.ndim != 3 or filters.shape[1] != filters.shape[2] or filters.shape[1] % 2 == 0:
        raise InvariantError(f"transition model must be (na, nt, nt) with odd nt, got {filters.shape}")
    if na is not None and filters.shape[0] != na:
        raise InvariantError(f"expected {na} transition filters, got {filters.shape[0]}")
    if nt is not None and filters.shape[1] != nt:
        raise InvariantError(f"expected filter side {nt}, got {filters.shape[1]}")
    if not np.all(np.isfinite(filters)) or filters.min() < 0.0 or filters.max() > 1.0:
        raise InvariantError("transition entries must lie in [0, 1]")
    sums = filters.sum(axis=(1, 2))
    bad = np.flatnonzero(np.abs(sums - 1.0) > FILTER_TOL)
    if bad.size:
        raise InvariantError(f"filter for action {bad[0]} sums to {float(sums[bad[0]])!r}, not 1")
    return filters


def check_observation(kernel: np.ndarray):
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or kernel.shape[0] % 2 == 0:
        raise InvariantError(f"observation kernel must be square with odd side, got {kernel.shape}")
    if not np.all(np.isfinite(kernel)) or kernel.min() < 0.0 or kernel.max() > 1.0:
        raise InvariantError("observation kernel entries must lie in [0, 1]")
    if abs(kernel.sum() - 1.0) > FILTER_TOL:
        raise InvariantError(f"observation kernel sums to {float(kernel.sum())!r}, not 1")
    return kernel


def check_belief(b: np.ndarray):
    b = np.asarray(b, dtype=float)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise InvariantError(f"belief must be a square grid, got {b.shape}")
    if not np.all(np.isfinite(b)) or b.min() < 0.0:
        raise InvariantError("belief entries must be non-negative")
    if abs(b.sum() - 1.0) > BELIEF_TOL:
        raise InvariantError(f"belief sums to {float(b.sum())!r}, not 1")
    return b


def check_policy(policy: np.ndarray, na: int):
    policy = np.asarray(policy)
    if policy.ndim != 2 or policy.shape[0] != policy.shape[1]:
        raise InvariantError(f"policy must be a square grid, got {policy.shape}")
    if policy.min() < 0 or policy.max() >= na:
        raise InvariantError(f"policy contains action indices outside [0, {na})")
    return policy.astype(np.int64)


def is_delta_kernel(kernel: np.ndarray) -> bool:
    """True when the observation kernel reports the true state with certainty."""
    kernel = np.asarray(kernel)
    c = kernel.shape[0] // 2
    return kernel[c, c] == 1.0


# -- environment construction --------------------------------------------------


def compass_displacements(na: int) -> list:
    try:
        return COMPASS_ACTIONS[na]
    except KeyError:
        raise ValueError(
            f"compass presets support na in {sorted(COMPASS_ACTIONS)}, got {na}"
        ) from None


def compass_filters(na: int, w: int, slip: float = 0.0) -> np.ndarray:
    """Filter bank moving one cell in each compass direction.

    The intended displacement keeps ``1 - slip``; the slip mass is split evenly
    over the 4-connected neighbours of the intended cell that fit in the window.
    """
    if w < 1:
        raise ValueError("compass presets need w >= 1")
    if not 0.0 <= slip <= 1.0:
        raise ValueError(f"slip must lie in [0, 1], got {slip}")
    nt = 2 * w + 1
    filters = np.zeros((na, nt, nt))
    for a, (du, dv) in enumerate(compass_displacements(na)):
        filters[a, du + w, dv + w] = 1.0 - slip
        lateral = [
            (du + x, dv + y)
            for x, y in ((-1, 0), (1, 0), (0, -1), (0, 1))
            if abs(du + x) <= w and abs(dv + y) <= w
        ]
        for u, v in lateral:
            filters[a, u + w, v + w] += slip / len(lateral)
    return filters


def observation_kernel(h: int, noise: float) -> np.ndarray:
    """Kernel with ``1 - noise`` on the true state and the rest spread uniformly."""
    no = 2 * h + 1
    kernel = np.zeros((no, no))
    if h == 0 or noise == 0.0:
        kernel[h, h] = 1.0
        return kernel
    if not 0.0 <= noise <= 1.0:
        raise ValueError(f"observation noise must lie in [0, 1], got {noise}")
    kernel[:] = noise / (no * no - 1)
    kernel[h, h] = 1.0 - noise
    return kernel


def parse_reward_placements(text: str) -> tuple:
    """Parse ``"i:j:action:value, ..."``.

    ``action`` may be ``all``; ``i`` or ``j`` may be ``*`` to cover every row or
    column.
    """
    placements = []
    for item in filter(None, (p.strip() for p in text.split(","))):
        parts = [p.strip() for p in item.split(":")]
        if len(parts) != 4:
            raise ValueError(f"reward placement {item!r} is not i:j:action:value")
        i, j, action, value = parts
        placements.append(RewardPlacement(
            State(None if i == "*" else int(i), None if j == "*" else int(j)),
            None if action == "all" else int(action),
            float(value),
        ))
    return tuple(placements)


def format_reward_placements(placements) -> str:
    def fmt(x, wildcard):
        return wildcard if x is None else str(x)
    return ", ".join(
        f"{fmt(p.state.i, '*')}:{fmt(p.state.j, '*')}:{fmt(p.action, 'all')}:{p.value!r}"
        for p in placements
    )


def make_environment(dims: GridDims, spec: EnvironmentSpec) -> Environment:
    if spec.preset == "deterministic-compass":
        transition = compass_filters(dims.na, dims.w, 0.0)
    elif spec.preset == "noisy-compass":
        transition = compass_filters(dims.na, dims.w, spec.slip)
    elif spec.preset == "random-seeded":
        rng = np.random.default_rng(spec.seed)
        transition = rng.uniform(0.0, 1.0, size=(dims.na, dims.nt, dims.nt))
        transition /= transition.sum(axis=(1, 2), keepdims=True)
    else:
        raise ValueError(f"unknown environment preset {spec.preset!r}; expected one of {PRESETS}")

    reward = np.zeros((dims.na, dims.nd, dims.nd))
    for p in spec.rewards:
        i, j = p.state
        if any(x is not None and not 0 <= x < dims.nd for x in (i, j)):
            raise ValueError(f"reward placement at {tuple(p.state)} is outside the {dims.nd}x{dims.nd} grid")
        rows = slice(None) if i is None else i
        cols = slice(None) if j is None else j
        if p.action is None:
            reward[:, rows, cols] += p.value
        elif 0 <= p.action < dims.na:
            reward[p.action, rows, cols] += p.value
        else:
            raise ValueError(f"reward placement action {p.action} outside [0, {dims.na})")

    kernel = observation_kernel(dims.h, spec.obs_noise)
    check_transition(transition)
    check_observation(kernel)
    return Environment(dims, transition, reward, kernel, spec)


# -- simulation ----------------------------------------------------------------


def _sample_offset(kernel: np.ndarray, rng: np.random.Generator) -> tuple:
    r = kernel.shape[-1] // 2
    k = rng.choice(kernel.size, p=kernel.ravel())
    m, n = divmod(int(k), kernel.shape[-1])
    return m - r, n - r


def step(T: np.ndarray, s: Sequence[int], a: int, rng: np.random.Generator, nd: int) -> State:
    """Sample a successor of ``s`` under action ``a``.

    Displacements leaving the grid are clamped onto the nearest boundary cell.
    """
    du, dv = _sample_offset(T[a], rng)
    return _clamp((s[0] + du, s[1] + dv), nd)


def observe(O: np.ndarray, s: Sequence[int], rng: np.random.Generator, nd: int) -> State:
    du, dv = _sample_offset(O, rng)
    return _clamp((s[0] + du, s[1] + dv), nd)


def generate_trajectory(
    env: Environment,
    policy: Optional[np.ndarray],
    length: int,
    rng: np.random.Generator,
    start: Optional[Sequence[int]] = None,
) -> Trajectory:
    """Roll out the true dynamics and observation model.

    With ``policy=None`` actions are uniform random and no expert actions are
    recorded; otherwise the policy acts on the true state and its choices are
    recorded as expert actions.
    """
    if length < 1:
        raise ValueError("trajectory length must be >= 1")
    nd, na = env.dims.nd, env.dims.na
    if start is None:
        s = State(int(rng.integers(nd)), int(rng.integers(nd)))
    else:
        s = _clamp(start, nd)
    actions = np.empty(length, dtype=np.int64)
    obs = np.empty((length, 2), dtype=np.int64)
    for t in range(length):
        obs[t] = observe(env.observation, s, rng, nd)
        a = int(rng.integers(na)) if policy is None else int(policy[s])
        actions[t] = a
        s = step(env.transition, s, a, rng, nd)
    return Trajectory(actions, obs, None if policy is None else actions.copy())


def one_hot_belief(s: Sequence[int], nd) -> np.ndarray:
    nd = nd.nd if isinstance(nd, GridDims) else int(nd)
    i, j = int(s[0]), int(s[1])
    if not (0 <= i < nd and 0 <= j < nd):
        raise ValueError(f"state {(i, j)} outside the {nd}x{nd} grid")
    b = np.zeros((nd, nd))
    b[i, j] = 1.0
    return b


def seeded_rng(seed: int, component: str) -> np.random.Generator:
    """Generator for one named component, derived deterministically from a root seed."""
    key = sum(ord(c) * 31 ** k for k, c in enumerate(component)) % (2 ** 32)
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))
