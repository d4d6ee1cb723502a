"""Config-block builders shared by the CLI and the service."""

import numpy as np
import pytest

from anydiff import ParameterError, TransitionKind, make_linear_schedule
from anydiff.configio import (
    build_condition,
    build_kind,
    build_operator,
    build_plan,
    build_prior,
    build_schedule,
    condition_config,
    default_config,
    kind_config,
    load_config,
    plan_config,
    prior_config,
)
from anydiff.nested import make_plan


@pytest.fixture(scope="module")
def sched():
    return make_linear_schedule(1000)


def test_prior_round_trip():
    cfg = {
        "components": [
            {"weight": 0.25, "mean": [1.0, 2.0], "cov": 0.5, "label": 0},
            {"weight": 0.75, "mean": [-1.0, 0.0],
             "cov": [[1.0, 0.2], [0.2, 0.8]], "label": 1},
        ]
    }
    prior = build_prior(cfg)
    assert prior.n_components == 2 and prior.dim == 2
    assert np.array_equal(prior.covs[0], 0.5 * np.eye(2))
    again = build_prior(prior_config(prior))
    assert np.array_equal(again.weights, prior.weights)
    assert np.array_equal(again.means, prior.means)
    assert np.array_equal(again.covs, prior.covs)
    assert np.array_equal(again.labels, prior.labels)


def test_prior_cov_forms_and_defaults():
    prior = build_prior(
        {"components": [{"mean": [0.0, 0.0], "cov": [2.0, 3.0]},
                        {"mean": [1.0, 1.0]}]}
    )
    assert np.array_equal(prior.covs[0], np.diag([2.0, 3.0]))
    assert np.array_equal(prior.covs[1], np.eye(2))  # cov defaults to identity
    assert np.allclose(prior.weights, [0.5, 0.5])  # equal weights by default
    assert prior.labels is None


def test_prior_validation():
    with pytest.raises(ParameterError):
        build_prior({"components": []})
    with pytest.raises(ParameterError):
        build_prior("not a mapping")
    with pytest.raises(ParameterError):
        build_prior({"components": [{"mean": [0.0]}, {"mean": [0.0, 1.0]}]})
    with pytest.raises(ParameterError):  # labels all or none
        build_prior(
            {"components": [{"mean": [0.0], "label": 1}, {"mean": [1.0]}]}
        )
    with pytest.raises(ParameterError):
        build_prior({"components": [{"mean": [0.0], "cov": [1.0, 2.0]}]})


def test_kind_aliases():
    assert build_kind("ddim") == TransitionKind("ddim", 0.0)
    assert build_kind("dpmpp2s").variant == "dpm_solver_pp_2s"
    assert build_kind({"variant": "ddim", "eta": 0.7}).eta == 0.7
    round_trip = build_kind(kind_config(TransitionKind("ddpm", 0.0)))
    assert round_trip == TransitionKind("ddpm", 0.0)
    with pytest.raises(ParameterError):
        build_kind("euler")


def test_condition_blocks():
    assert build_condition(None).kind == "unconditional"
    cond = build_condition({"kind": "guided", "label": 2, "scale": 1.5})
    assert cond.label == 2 and cond.scale == 1.5
    assert build_condition(condition_config(cond)) == cond
    plain = condition_config(build_condition({"kind": "class", "label": 1}))
    assert "scale" not in plain


def test_plan_outer_steps_path(sched):
    cfg = {
        "outer_steps": 4,
        "inner_steps": 15,
        "outer": {"variant": "ddim", "eta": 0.0},
        "inner": {"variant": "ddim", "eta": 0.85},
    }
    plan = build_plan(cfg, sched)
    ref = make_plan(sched, 4, 15)
    assert np.array_equal(plan.outer_grid, ref.outer_grid)
    assert plan.inner_steps == ref.inner_steps
    assert plan.outer_kind == ref.outer_kind
    assert plan.inner_kind == ref.inner_kind


def test_plan_outer_grid_path(sched):
    cfg = {
        "outer_grid": [1000, 500, 0],
        "inner_steps": [59, 1],
        "condition": [
            {"kind": "class", "label": 0},
            {"kind": "unconditional"},
        ],
        "terminal_alpha_bar": 1.0,
    }
    plan = build_plan(cfg, sched)
    assert plan.outer_grid.tolist() == [1000, 500, 0]
    assert plan.inner_steps == (59, 1)
    assert plan.condition_schedule[0].kind == "class"
    assert plan.condition_schedule[1].kind == "unconditional"
    assert plan.terminal_alpha_bar == 1.0


def test_plan_config_round_trip(sched):
    plan = make_plan(sched, 3, 7, inner_kind=TransitionKind("ddim", 0.5))
    again = build_plan(plan_config(plan), sched)
    assert np.array_equal(again.outer_grid, plan.outer_grid)
    assert again.inner_steps == plan.inner_steps
    assert again.inner_kind == plan.inner_kind
    assert again.condition_schedule == plan.condition_schedule
    assert again.terminal_alpha_bar is None


def test_operator_blocks():
    assert build_operator({"kind": "identity"}, 3).shape == (3, 3)
    mask = build_operator({"kind": "mask", "keep": [1]}, 2)
    assert np.array_equal(mask.matrix, [[0.0, 1.0]])
    pool = build_operator({"kind": "average_pool", "factor": 2}, 4)
    assert pool.shape == (2, 4)
    custom = build_operator({"kind": "custom", "matrix": [[1.0, -1.0]]}, 2)
    assert np.array_equal(custom.matrix, [[1.0, -1.0]])
    with pytest.raises(ParameterError):
        build_operator({"kind": "mask"}, 2)
    with pytest.raises(ParameterError):
        build_operator({"kind": "custom"}, 2)
    with pytest.raises(ParameterError):
        build_operator({"kind": "blur"}, 2)


def test_schedule_block():
    sched = build_schedule({"kind": "linear", "T": 50, "beta_min": 1e-3,
                            "beta_max": 0.05})
    assert sched.T == 50 and sched.beta[1] == pytest.approx(1e-3)
    assert build_schedule({}).T == 1000  # defaults


def test_load_config(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("seed: 3\nruns: 10\n", encoding="utf-8")
    assert load_config(str(path)) == {"seed": 3, "runs": 10}
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [unclosed\n", encoding="utf-8")
    with pytest.raises(ParameterError):
        load_config(str(bad))
    scalar = tmp_path / "scalar.yaml"
    scalar.write_text("42\n", encoding="utf-8")
    with pytest.raises(ParameterError):
        load_config(str(scalar))
    empty = tmp_path / "empty.yaml"
    empty.write_text("", encoding="utf-8")
    assert load_config(str(empty)) == {}


def test_default_config_builds(sched):
    cfg = default_config()
    prior = build_prior(cfg["prior"])
    schedule = build_schedule(cfg["schedule"])
    plan = build_plan(cfg["plan"], schedule)
    assert prior.n_components == 4 and prior.label_set() == [0, 1, 2, 3]
    assert schedule.T == 1000
    assert plan.total_inner_steps == 60
