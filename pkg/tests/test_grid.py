import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridplan.grid import (
    COMPASS_ACTIONS,
    DESK_REWARDS,
    EnvironmentSpec,
    GridDims,
    InvariantError,
    State,
    Trajectory,
    check_belief,
    check_observation,
    check_transition,
    compass_filters,
    generate_trajectory,
    make_environment,
    observation_kernel,
    observe,
    one_hot_belief,
    parse_reward_placements,
    format_reward_placements,
    seeded_rng,
    step,
)
from gridplan.planner import value_iterate


class TestGridDims:
    def test_derived_sizes(self):
        d = GridDims(nd=10, na=5, w=2, h=1)
        assert (d.nt, d.no, d.n_states) == (5, 3, 100)

    @pytest.mark.parametrize("kwargs", [
        dict(nd=0), dict(na=0), dict(w=-1), dict(h=-1), dict(gamma=1.0), dict(gamma=-0.1),
        dict(nd=2, w=1), dict(nd=4, h=2),
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            GridDims(**kwargs)


class TestEnvironment:
    def test_deterministic_compass_is_delta(self):
        dims = GridDims(nd=6, na=5, w=1)
        env = make_environment(dims, EnvironmentSpec("deterministic-compass"))
        for a, (du, dv) in enumerate(COMPASS_ACTIONS[5]):
            expected = np.zeros((3, 3))
            expected[du + 1, dv + 1] = 1.0
            np.testing.assert_array_equal(env.transition[a], expected)

    def test_noisy_compass_split(self):
        T = compass_filters(5, 1, 0.2)
        stay = T[4]
        assert stay[1, 1] == pytest.approx(0.8)
        for cell in [(0, 1), (2, 1), (1, 0), (1, 2)]:
            assert stay[cell] == pytest.approx(0.05)
        np.testing.assert_allclose(T.sum(axis=(1, 2)), 1.0, atol=1e-12)

    def test_random_seeded_reproducible(self):
        dims = GridDims(nd=8)
        a = make_environment(dims, EnvironmentSpec("random-seeded", seed=7))
        b = make_environment(dims, EnvironmentSpec("random-seeded", seed=7))
        np.testing.assert_array_equal(a.transition, b.transition)
        check_transition(a.transition, dims.na, dims.nt)

    def test_errors(self):
        dims = GridDims(nd=6)
        with pytest.raises(ValueError, match="preset"):
            make_environment(dims, EnvironmentSpec("teleport"))
        with pytest.raises(ValueError, match="outside"):
            make_environment(dims, EnvironmentSpec(rewards=parse_reward_placements("9:0:all:1")))

    def test_reward_placements(self):
        placements = parse_reward_placements(DESK_REWARDS)
        assert parse_reward_placements(format_reward_placements(placements)) == placements
        env = make_environment(GridDims(), EnvironmentSpec(rewards=placements))
        assert env.reward[0, 14, 15] == 1.0
        assert env.reward[4, 14, 15] == pytest.approx(0.9)
        assert env.reward[5, 0, 0] == -0.1
        assert env.reward[8, 0, 0] == 0.0

    def test_observation_kernel(self):
        O = observation_kernel(1, 0.1)
        assert O[1, 1] == pytest.approx(0.9)
        assert O[0, 0] == pytest.approx(0.0125)
        check_observation(O)
        np.testing.assert_array_equal(observation_kernel(0, 0.3), [[1.0]])


class TestSimulator:
    def test_identity_filter_stays(self):
        T = np.zeros((1, 3, 3))
        T[0, 1, 1] = 1.0
        rng = np.random.default_rng(0)
        assert step(T, (3, 3), 0, rng, 6) == State(3, 3)

    def test_move_east(self):
        T = compass_filters(5, 1, 0.0)
        assert step(T, (3, 3), 2, np.random.default_rng(0), 6) == State(3, 4)

    def test_step_frequencies(self):
        T = compass_filters(9, 1, 0.2)
        rng = np.random.default_rng(1)
        counts = np.zeros((3, 3))
        n = 100_000
        for _ in range(n):
            s = step(T, (5, 5), 4, rng, 10)
            counts[s.i - 4, s.j - 4] += 1
        np.testing.assert_allclose(counts / n, T[4], atol=0.01)

    def test_uniform_observation_frequencies(self):
        O = np.full((3, 3), 1 / 9)
        rng = np.random.default_rng(2)
        counts = np.zeros((3, 3))
        n = 100_000
        for _ in range(n):
            z = observe(O, (4, 4), rng, 9)
            counts[z.i - 3, z.j - 3] += 1
        np.testing.assert_allclose(counts / n, 1 / 9, atol=0.01)

    def test_delta_observation(self):
        O = observation_kernel(1, 0.0)
        rng = np.random.default_rng(3)
        assert all(observe(O, (2, 5), rng, 8) == (2, 5) for _ in range(50))

    @given(st.integers(0, 1), st.integers(0, 1), st.integers(0, 2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_corners_in_bounds(self, ci, cj, seed):
        nd = 5
        s = (ci * (nd - 1), cj * (nd - 1))
        rng = np.random.default_rng(seed)
        T = compass_filters(9, 2, 0.5)
        O = np.full((5, 5), 1 / 25)
        for a in range(9):
            assert all(0 <= x < nd for x in step(T, s, a, rng, nd))
        assert all(0 <= x < nd for x in observe(O, s, rng, nd))

    def test_single_step_random_trajectory(self):
        env = make_environment(GridDims(nd=5), EnvironmentSpec())
        tr = generate_trajectory(env, None, 1, np.random.default_rng(0))
        assert len(tr) == 1 and not tr.has_expert

    def test_greedy_reaches_goal(self):
        dims = GridDims(nd=7, na=5, gamma=0.9)
        spec = EnvironmentSpec("deterministic-compass", obs_noise=0.0,
                               rewards=parse_reward_placements("5:1:4:1.0"))
        env = make_environment(dims, spec)
        policy = value_iterate(env.transition, env.reward, dims.gamma).policy
        start = (0, 6)
        manhattan = abs(5 - 0) + abs(1 - 6)
        tr = generate_trajectory(env, policy, manhattan + 1, np.random.default_rng(0), start=start)
        assert tr.observation(manhattan) == (5, 1)
        np.testing.assert_array_equal(tr.actions, tr.expert_actions)

    def test_trajectory_determinism(self):
        env = make_environment(GridDims(nd=8), EnvironmentSpec())
        a = generate_trajectory(env, None, 30, seeded_rng(4, "x"))
        b = generate_trajectory(env, None, 30, seeded_rng(4, "x"))
        assert a == b
        assert a != generate_trajectory(env, None, 30, seeded_rng(4, "y"))

    def test_trajectory_validation(self):
        with pytest.raises(ValueError):
            Trajectory([], np.zeros((0, 2)))
        with pytest.raises(ValueError):
            Trajectory([0, 1], [[0, 0], [0, 1]], expert_actions=[0])


class TestBeliefsAndChecks:
    def test_one_hot(self):
        b = one_hot_belief((0, 0), 3)
        assert b[0, 0] == 1.0 and b.sum() == 1.0
        c = one_hot_belief((2, 1), 3)
        assert np.count_nonzero(b != c) == 2

    def test_one_hot_out_of_bounds(self):
        with pytest.raises(ValueError):
            one_hot_belief((3, 0), 3)

    def test_checks_reject(self):
        with pytest.raises(InvariantError):
            check_transition(np.full((1, 3, 3), 0.2))
        with pytest.raises(InvariantError):
            check_belief(np.full((2, 2), 0.3))
        with pytest.raises(InvariantError):
            check_observation(np.ones((2, 2)) / 4)
