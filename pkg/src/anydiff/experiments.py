"""Population experiment harness.

Every kernel and denoiser in this package broadcasts over leading axes, so
a population of independent runs executes as one batched trajectory: the
state is (n_runs, dim), each draw is a matching batch, and the runs stay
statistically independent.  The batched trace is split back into per-run
Traces afterwards, which keeps the metrics layer per-run as documented.
"""

from __future__ import annotations

import numpy as np

from .denoiser import GmmPrior
from .errors import ParameterError
from .metrics import (
    anytime_curve,
    auc,
    fit_gaussian,
    frechet_distance,
    prior_moments,
)
from .nested import NestedPlan, nested_sample
from .sampler import SamplerConfig, Trace, TraceEntry, sample
from .schedule import NoiseSchedule


def split_trace(batched: Trace, n_runs: int) -> list[Trace]:
    """Per-run views of a batched trace."""
    out = []
    for i in range(n_runs):
        entries = [TraceEntry(e.nfe, e.t, e.x0_hat[i]) for e in batched.entries]
        out.append(Trace(entries, batched.final[i], batched.total_nfe))
    return out


def sample_population(
    prior: GmmPrior,
    schedule: NoiseSchedule,
    config: SamplerConfig,
    n_runs: int,
    rng: np.random.Generator,
) -> list[Trace]:
    if n_runs < 1:
        raise ParameterError(f"n_runs must be >= 1, got {n_runs}")
    x = rng.standard_normal((n_runs, prior.dim))
    return split_trace(sample(prior, schedule, config, rng, x_init=x), n_runs)


def nested_population(
    prior: GmmPrior,
    schedule: NoiseSchedule,
    plan: NestedPlan,
    n_runs: int,
    rng: np.random.Generator,
    denoise_override=None,
) -> list[Trace]:
    if n_runs < 1:
        raise ParameterError(f"n_runs must be >= 1, got {n_runs}")
    x = rng.standard_normal((n_runs, prior.dim))
    batched = nested_sample(
        prior, schedule, plan, rng, x_init=x, denoise_override=denoise_override
    )
    return split_trace(batched, n_runs)


def ratio_sweep(
    prior: GmmPrior,
    schedule: NoiseSchedule,
    budget: int,
    outer_counts,
    n_runs: int,
    eval_every: int,
    rng: np.random.Generator,
    plan_template: NestedPlan | None = None,
):
    """Equal-NFE sweep over outer/inner splits of a fixed budget.

    Returns (rows, curves): one {outer, inner, auc, final_fd} record and
    one anytime curve per split, in the order given.  Splits must divide
    the budget evenly.
    """
    reference = prior_moments(prior)
    rows, curves = [], []
    for outer in outer_counts:
        outer = int(outer)
        if outer < 1 or budget % outer != 0:
            raise ParameterError(
                f"outer count {outer} does not divide the budget {budget}"
            )
        inner = budget // outer
        from .nested import make_plan  # local import keeps module load light

        if plan_template is None:
            plan = make_plan(schedule, outer, inner)
        else:
            from dataclasses import replace
            from .schedule import uniform_grid

            plan = replace(
                plan_template,
                outer_grid=uniform_grid(schedule.T, outer),
                inner_steps=(inner,),
                condition_schedule=(plan_template.condition_schedule[0],),
            )
        traces = nested_population(prior, schedule, plan, n_runs, rng)
        curve = anytime_curve(traces, reference, eval_every)
        finals = np.stack([tr.final for tr in traces])
        rows.append(
            {
                "outer": outer,
                "inner": inner,
                "auc": auc(curve),
                "final_fd": frechet_distance(fit_gaussian(finals), reference),
            }
        )
        curves.append(curve)
    return rows, curves
