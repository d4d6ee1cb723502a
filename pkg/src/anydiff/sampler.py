"""Plain reverse-diffusion runs over a timestep grid.

ReverseProcess executes one reverse pass step by step so that callers can
interleave work between transitions (nested plans pause at boundaries,
sessions stream partial progress).  sample() wraps it into the one-shot
entry point returning a Trace.

State may be a single point (dim,) or a batch (n, dim); every kernel and
denoiser broadcasts over leading axes, which is how population experiments
run thousands of trajectories in lockstep.

Draw order is part of the contract: one standard normal for the start
state (when not supplied), then at most one per transition, skipped
whenever the step is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .denoiser import Condition, GmmPrior, UNCONDITIONAL, make_denoiser
from .errors import NoPredictionError, ParameterError
from .schedule import NoiseSchedule, validate_grid
from .transition import TransitionKind, apply_transition, dpm_pp_2s_step


@dataclass
class SamplerConfig:
    grid: np.ndarray
    kind: TransitionKind = TransitionKind("ddim", 0.0)
    condition: Condition = UNCONDITIONAL
    record_intermediates: bool = True
    terminal_alpha_bar: float | None = None  # optional abar override at grid end

    def __post_init__(self):
        if self.terminal_alpha_bar is not None and not (
            0.0 <= self.terminal_alpha_bar <= 1.0
        ):
            raise ParameterError("terminal_alpha_bar must lie in [0, 1]")


@dataclass
class TraceEntry:
    """One denoiser output: cumulative evaluation count, the timestep the
    denoiser was queried at, and its prediction."""

    nfe: int
    t: int
    x0_hat: np.ndarray


@dataclass
class Trace:
    entries: list[TraceEntry] = field(default_factory=list)
    final: np.ndarray | None = None
    total_nfe: int = 0


def intermediate_prediction(trace: Trace, budget: int) -> np.ndarray:
    """Latest recorded prediction affordable within an evaluation budget."""
    if not trace.entries:
        raise NoPredictionError("trace has no recorded predictions")
    if budget < trace.entries[0].nfe:
        raise NoPredictionError(
            f"budget {budget} is below the first recorded prediction "
            f"(nfe {trace.entries[0].nfe})"
        )
    best = trace.entries[0]
    for entry in trace.entries:
        if entry.nfe > budget:
            break
        best = entry
    return best.x0_hat


class ReverseProcess:
    """Stepwise executor of one reverse pass.

    Each step() consumes one grid transition and returns the list of
    (t, x0_hat) denoiser evaluations it performed, in call order (the
    second-order kernel performs two away from degenerate cases).
    """

    def __init__(
        self,
        schedule: NoiseSchedule,
        grid: np.ndarray,
        kind: TransitionKind,
        denoise,
        x: np.ndarray,
        rng: np.random.Generator,
        terminal_alpha_bar: float | None = None,
    ):
        self.schedule = schedule
        self.grid = validate_grid(grid, schedule.T)
        self.kind = kind
        self.denoise = denoise
        self.x = np.asarray(x, dtype=float)
        self.rng = rng
        self.terminal_alpha_bar = terminal_alpha_bar
        self.steps_done = 0

    @property
    def steps_total(self) -> int:
        return len(self.grid) - 1

    @property
    def finished(self) -> bool:
        return self.steps_done >= self.steps_total

    def step(self) -> list[tuple[int, np.ndarray]]:
        if self.finished:
            raise ParameterError("reverse process already finished")
        t = int(self.grid[self.steps_done])
        t_next = int(self.grid[self.steps_done + 1])
        override = (
            self.terminal_alpha_bar
            if self.steps_done + 1 == self.steps_total
            else None
        )
        if self.kind.variant == "dpm_solver_pp_2s":
            calls: list[tuple[int, np.ndarray]] = []

            def recording(tt, xx):
                out = self.denoise(tt, xx)
                calls.append((int(tt), np.array(out, dtype=float)))
                return out

            self.x, _ = dpm_pp_2s_step(
                self.schedule, t, t_next, self.x, recording, self.rng,
                alpha_bar_next=override,
            )
        else:
            x0_hat = np.asarray(self.denoise(t, self.x), dtype=float)
            calls = [(t, x0_hat.copy())]
            self.x = apply_transition(
                self.schedule, self.kind, t, t_next, self.x, x0_hat, self.rng,
                alpha_bar_next=override,
            )
        self.steps_done += 1
        return calls


def sample(
    prior: GmmPrior,
    schedule: NoiseSchedule,
    config: SamplerConfig,
    rng: np.random.Generator,
    x_init: np.ndarray | None = None,
) -> Trace:
    """Run one reverse pass from noise (or x_init) down the config grid."""
    if x_init is None:
        x = rng.standard_normal(prior.dim)
    else:
        x = np.asarray(x_init, dtype=float)
        if x.shape[-1] != prior.dim:
            raise ParameterError(
                f"x_init trailing dim {x.shape[-1]} != prior dim {prior.dim}"
            )
    denoise = make_denoiser(prior, schedule, config.condition)
    process = ReverseProcess(
        schedule, config.grid, config.kind, denoise, x, rng,
        terminal_alpha_bar=config.terminal_alpha_bar,
    )
    trace = Trace()
    while not process.finished:
        for t, x0_hat in process.step():
            trace.total_nfe += 1
            if config.record_intermediates:
                trace.entries.append(TraceEntry(trace.total_nfe, t, x0_hat))
    trace.final = process.x
    return trace
