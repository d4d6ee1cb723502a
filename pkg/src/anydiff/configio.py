"""Plain-dict config blocks for every engine object.

The CLI reads these blocks from YAML files and the HTTP service from JSON
bodies; both funnel through the builders here so the two front ends accept
the same vocabulary.  Builders raise ParameterError on malformed input,
which the CLI maps to exit code 2 and the service to HTTP 400.
"""

from __future__ import annotations

import numpy as np
import yaml

from .denoiser import Condition, GmmPrior, UNCONDITIONAL
from .errors import ParameterError
from .inverse import (
    LinearOperator,
    average_pool_operator,
    identity_operator,
    mask_operator,
    operator_from_matrix,
)
from .nested import NestedPlan, make_plan
from .schedule import NoiseSchedule, schedule_from_config
from .transition import TransitionKind

# short CLI spellings for the transition variants
KIND_ALIASES = {
    "ddim": "ddim",
    "ddpm": "ddpm",
    "dpmpp2s": "dpm_solver_pp_2s",
    "dpm_solver_pp_2s": "dpm_solver_pp_2s",
}


def _require_dict(cfg, name: str) -> dict:
    if not isinstance(cfg, dict):
        raise ParameterError(f"{name} block must be a mapping, got {type(cfg).__name__}")
    return cfg


def _component_cov(raw, dim: int) -> np.ndarray:
    cov = np.asarray(raw, dtype=float)
    if cov.ndim == 0:
        return float(cov) * np.eye(dim)
    if cov.ndim == 1:
        if cov.size != dim:
            raise ParameterError(f"diagonal cov needs {dim} entries, got {cov.size}")
        return np.diag(cov)
    if cov.shape != (dim, dim):
        raise ParameterError(f"cov must be {dim}x{dim}, got {cov.shape}")
    return cov


def build_prior(cfg: dict) -> GmmPrior:
    """Mixture from a components list.

    Each component is {weight, mean, cov, label?}; cov may be a scalar
    (isotropic), a vector (diagonal) or a full matrix.  Labels must be
    given on all components or on none.
    """
    cfg = _require_dict(cfg, "prior")
    comps = cfg.get("components")
    if not comps:
        raise ParameterError("prior needs a non-empty components list")
    means = [np.atleast_1d(np.asarray(c.get("mean"), dtype=float)) for c in comps]
    dim = means[0].size
    for m in means:
        if m.shape != (dim,):
            raise ParameterError("all component means must share one dimension")
    weights = np.array([float(c.get("weight", 1.0 / len(comps))) for c in comps])
    covs = np.stack([_component_cov(c.get("cov", 1.0), dim) for c in comps])
    labelled = [c for c in comps if c.get("label") is not None]
    if labelled and len(labelled) != len(comps):
        raise ParameterError("either every component carries a label or none does")
    labels = (
        np.array([int(c["label"]) for c in comps]) if labelled else None
    )
    return GmmPrior(weights, np.stack(means), covs, labels)


def prior_config(prior: GmmPrior) -> dict:
    comps = []
    for k in range(prior.n_components):
        c = {
            "weight": float(prior.weights[k]),
            "mean": prior.means[k].tolist(),
            "cov": prior.covs[k].tolist(),
        }
        if prior.labels is not None:
            c["label"] = int(prior.labels[k])
        comps.append(c)
    return {"components": comps}


def build_schedule(cfg: dict) -> NoiseSchedule:
    return schedule_from_config(_require_dict(cfg, "schedule"))


def build_kind(cfg) -> TransitionKind:
    """TransitionKind from a name or a {variant, eta} mapping."""
    if isinstance(cfg, str):
        cfg = {"variant": cfg}
    cfg = _require_dict(cfg, "transition kind")
    name = str(cfg.get("variant", "ddim"))
    if name not in KIND_ALIASES:
        raise ParameterError(
            f"unknown transition variant {name!r}; expected one of "
            f"{sorted(set(KIND_ALIASES))}"
        )
    return TransitionKind(KIND_ALIASES[name], float(cfg.get("eta", 0.0)))


def kind_config(kind: TransitionKind) -> dict:
    return {"variant": kind.variant, "eta": float(kind.eta)}


def build_condition(cfg) -> Condition:
    if cfg is None:
        return UNCONDITIONAL
    cfg = _require_dict(cfg, "condition")
    kind = str(cfg.get("kind", "unconditional"))
    label = cfg.get("label")
    return Condition(
        kind,
        None if label is None else int(label),
        float(cfg.get("scale", 1.0)),
    )


def condition_config(cond: Condition) -> dict:
    out = {"kind": cond.kind}
    if cond.label is not None:
        out["label"] = int(cond.label)
    if cond.kind == "guided":
        out["scale"] = float(cond.scale)
    return out


def build_plan(cfg: dict, schedule: NoiseSchedule) -> NestedPlan:
    """Nested plan block.

    Either outer_steps (uniform grid over the schedule horizon) or an
    explicit outer_grid; inner_steps is a scalar or one entry per outer
    transition; condition likewise a single block or a list.
    """
    cfg = _require_dict(cfg, "plan")
    inner_steps = cfg.get("inner_steps", 1)
    outer_kind = build_kind(cfg.get("outer", {"variant": "ddim", "eta": 0.0}))
    inner_kind = build_kind(cfg.get("inner", {"variant": "ddim", "eta": 0.85}))
    cond_cfg = cfg.get("condition")
    if isinstance(cond_cfg, list):
        conds = tuple(build_condition(c) for c in cond_cfg)
    else:
        conds = (build_condition(cond_cfg),)
    terminal = cfg.get("terminal_alpha_bar")
    terminal = None if terminal is None else float(terminal)
    if "outer_grid" in cfg:
        grid = np.asarray(cfg["outer_grid"], dtype=int)
        steps = tuple(int(v) for v in np.atleast_1d(inner_steps))
        return NestedPlan(grid, steps, outer_kind, inner_kind, conds, terminal)
    if len(conds) != 1:
        plan = make_plan(
            schedule,
            int(cfg.get("outer_steps", 1)),
            inner_steps,
            outer_kind,
            inner_kind,
            terminal_alpha_bar=terminal,
        )
        return plan.with_conditions(conds)
    return make_plan(
        schedule,
        int(cfg.get("outer_steps", 1)),
        inner_steps,
        outer_kind,
        inner_kind,
        condition=conds[0],
        terminal_alpha_bar=terminal,
    )


def plan_config(plan: NestedPlan) -> dict:
    return {
        "outer_grid": [int(t) for t in plan.outer_grid],
        "inner_steps": list(plan.inner_steps),
        "outer": kind_config(plan.outer_kind),
        "inner": kind_config(plan.inner_kind),
        "condition": [condition_config(c) for c in plan.condition_schedule],
        "terminal_alpha_bar": plan.terminal_alpha_bar,
    }


def build_operator(cfg: dict, dim: int) -> LinearOperator:
    cfg = _require_dict(cfg, "operator")
    kind = str(cfg.get("kind", "identity"))
    if kind == "identity":
        return identity_operator(dim)
    if kind == "mask":
        keep = cfg.get("keep")
        if keep is None:
            raise ParameterError("mask operator needs a keep index list")
        return mask_operator(dim, [int(i) for i in keep])
    if kind == "average_pool":
        return average_pool_operator(dim, int(cfg.get("factor", 2)))
    if kind == "custom":
        matrix = cfg.get("matrix")
        if matrix is None:
            raise ParameterError("custom operator needs an explicit matrix")
        return operator_from_matrix(np.asarray(matrix, dtype=float))
    raise ParameterError(f"unknown operator kind {kind!r}")


def load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ParameterError(f"could not parse config {path}: {exc}") from exc
    if cfg is None:
        cfg = {}
    return _require_dict(cfg, "config file")


def default_config() -> dict:
    """Self-contained demo setup: a labelled four-mode mixture in the
    plane, the standard linear schedule, and a 4x15 nested plan."""
    comps = []
    for label, (mx, my) in enumerate([(3, 3), (-3, 3), (-3, -3), (3, -3)]):
        comps.append(
            {
                "weight": 0.25,
                "mean": [float(mx), float(my)],
                "cov": 0.25,
                "label": label,
            }
        )
    return {
        "prior": {"components": comps},
        "schedule": {"kind": "linear", "T": 1000,
                     "beta_min": 1.0e-4, "beta_max": 0.02},
        "plan": {
            "outer_steps": 4,
            "inner_steps": 15,
            "outer": {"variant": "ddim", "eta": 0.0},
            "inner": {"variant": "ddim", "eta": 0.85},
        },
        "runs": 200,
        "eval_every": 5,
        "seed": 0,
    }
