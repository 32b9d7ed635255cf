import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridplan.grid import EnvironmentSpec, GridDims, InvariantError, Trajectory, generate_trajectory, make_environment
from gridplan.io import (
    ModelFormatError,
    format_model,
    format_trajectories,
    load_model,
    parse_model,
    parse_trajectories,
    save_model,
)

import oracles


class TestModelFormat:
    @pytest.mark.parametrize("kind,shape", [
        ("transition", (3, 3, 3)), ("reward", (2, 4, 4)), ("q", (2, 4, 4)),
        ("value", (4, 4)), ("observation", (3, 3)), ("belief", (4, 4)),
    ])
    def test_round_trip(self, kind, shape, tmp_path):
        rng = np.random.default_rng(0)
        if kind == "transition":
            data = oracles.random_filters(rng, 3, 3)
        elif kind == "observation":
            data = oracles.random_kernel(rng, 3)
        elif kind == "belief":
            data = oracles.random_belief(rng, 4)
        else:
            data = rng.normal(size=shape)
        save_model(tmp_path / "m.txt", kind, data, nd=4, na=shape[0] if len(shape) == 3 else 2, nt=3)
        model = load_model(tmp_path / "m.txt", expect=kind)
        np.testing.assert_array_equal(model.data, data)
        assert model.kind == kind

    def test_policy_round_trip(self):
        p = np.random.default_rng(1).integers(0, 9, size=(5, 5))
        text = format_model("policy", p, nd=5, na=9, nt=3)
        assert text.splitlines()[0] == "gridplan-model v1 kind=policy nd=5 na=9 nt=3"
        np.testing.assert_array_equal(parse_model(text).data, p)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_float_round_trip_exact(self, seed):
        data = np.random.default_rng(seed).normal(size=(2, 3, 3)) * 1e3
        np.testing.assert_array_equal(parse_model(format_model("q", data)).data, data)

    def test_header_fields(self):
        text = format_model("transition", np.full((2, 3, 3), 1 / 9), nd=20)
        assert text.startswith("gridplan-model v1 kind=transition nd=20 na=2 nt=3\n")
        assert text.count("\n\n") == 1

    @pytest.mark.parametrize("text,line", [
        ("", 1),
        ("gridplan-model v2 kind=value nd=2 na=1 nt=3\n1 2\n3 4\n", 1),
        ("gridplan-model v1 kind=value nd=2 na=1 nt=3\n1 x\n3 4\n", 2),
        ("gridplan-model v1 kind=value nd=2 na=1 nt=3\n1 2\n3 4 5\n", 3),
        ("gridplan-model v1 kind=value nd=3 na=1 nt=3\n1 2\n3 4\n", 3),
        ("gridplan-model v1 kind=reward nd=2 na=2 nt=3\n1 2\n3 4\n", 3),
        ("gridplan-model v1 kind=value nd=two na=1 nt=3\n1 2\n3 4\n", 1),
    ])
    def test_format_errors_name_line(self, text, line):
        with pytest.raises(ModelFormatError, match=f"<model>:{line}:"):
            parse_model(text)

    def test_invariant_errors(self):
        bad = format_model("transition", np.full((1, 3, 3), 0.2))
        with pytest.raises(InvariantError):
            parse_model(bad)
        with pytest.raises(InvariantError):
            parse_model(format_model("policy", np.full((2, 2), 9), na=9))
        with pytest.raises(InvariantError):
            parse_model(format_model("belief", np.full((2, 2), 0.3)))

    def test_kind_mismatch(self, tmp_path):
        save_model(tmp_path / "v.txt", "value", np.zeros((3, 3)))
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / "v.txt", expect="policy")


class TestTrajectoryCsv:
    def test_round_trip(self):
        env = make_environment(GridDims(nd=6), EnvironmentSpec())
        rng = np.random.default_rng(0)
        trajs = [generate_trajectory(env, None, n, rng) for n in (1, 5, 3)]
        assert parse_trajectories(format_trajectories(trajs)) == trajs

    def test_round_trip_expert(self):
        trajs = [Trajectory([1, 2], [[0, 0], [1, 1]], expert_actions=[1, 2])]
        text = format_trajectories(trajs)
        assert text.splitlines()[0] == "t,action,obs_i,obs_j,expert_action"
        assert parse_trajectories(text) == trajs

    def test_errors(self):
        with pytest.raises(ModelFormatError, match=":1:"):
            parse_trajectories("a,b\n")
        with pytest.raises(ModelFormatError, match=":3:"):
            parse_trajectories("t,action,obs_i,obs_j\n0,1,2,3\n2,1,2,3\n")
        with pytest.raises(ModelFormatError, match=":2:"):
            parse_trajectories("t,action,obs_i,obs_j\n0,1,2\n")
        with pytest.raises(ValueError):
            format_trajectories([Trajectory([0], [[0, 0]], [0]), Trajectory([0], [[0, 0]])])
