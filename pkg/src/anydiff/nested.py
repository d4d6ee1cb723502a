"""Nested refinement: an outer reverse process whose per-step generator is
itself a full inner reverse process.

Each outer transition t -> t' runs a complete inner pass from t down to 0,
takes the inner terminal output as the prediction x0_hat, and feeds it into
the outer kernel.  Extremes collapse onto plain runs bit for bit: one outer
step with n inner steps is the n-step plain run, and k outer steps with one
inner step each is the k-step plain run, because the noise draw order
coincides exactly.

Anytime semantics: the trace keeps every prediction of the first inner
pass (so the earliest budgets already resolve to something) and afterwards
only the boundary predictions, whose quality jumps at each outer step.

AnytimeSession wraps the same loop into an interactive state machine with
parallel branches for the steering service: advance one inner pass (or a
stride of inner steps), watch per-branch previews, adopt one branch's state
everywhere, or swap the condition for the remaining outer steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .denoiser import Condition, GmmPrior, UNCONDITIONAL, make_denoiser
from .errors import NoPredictionError, ParameterError, StateError
from .sampler import ReverseProcess, Trace, TraceEntry
from .schedule import NoiseSchedule, uniform_grid, validate_grid
from .transition import TransitionKind, apply_transition

DEFAULT_OUTER = TransitionKind("ddim", 0.0)
DEFAULT_INNER = TransitionKind("ddim", 0.85)


@dataclass(frozen=True)
class NestedPlan:
    """Outer grid plus per-outer-transition inner budgets and conditions.

    A single inner budget or condition is broadcast across all outer
    transitions.  The second-order kernel is inner-only: outer kernels
    consume a precomputed prediction, so they must be ddim or ddpm.
    """

    outer_grid: np.ndarray
    inner_steps: tuple[int, ...]
    outer_kind: TransitionKind = DEFAULT_OUTER
    inner_kind: TransitionKind = DEFAULT_INNER
    condition_schedule: tuple[Condition, ...] = ()
    terminal_alpha_bar: float | None = None

    def __post_init__(self):
        grid = np.asarray(self.outer_grid)
        steps = tuple(int(n) for n in np.atleast_1d(self.inner_steps))
        n_trans = len(grid) - 1
        if len(steps) == 1 and n_trans > 1:
            steps = steps * n_trans
        if len(steps) != n_trans:
            raise ParameterError(
                f"{n_trans} outer transitions need {n_trans} inner budgets, "
                f"got {len(steps)}"
            )
        conds = tuple(self.condition_schedule)
        if not conds:
            conds = (UNCONDITIONAL,) * n_trans
        elif len(conds) == 1 and n_trans > 1:
            conds = conds * n_trans
        if len(conds) != n_trans:
            raise ParameterError(
                f"condition schedule must have {n_trans} entries, got {len(conds)}"
            )
        if self.outer_kind.variant == "dpm_solver_pp_2s":
            raise ParameterError(
                "outer transitions consume a precomputed prediction; the "
                "second-order kernel cannot be an outer kind"
            )
        for i, (start, n) in enumerate(zip(grid[:-1], steps)):
            if n < 1:
                raise ParameterError(f"inner budget {n} at outer step {i} (< 1)")
            if n > start:
                raise ParameterError(
                    f"inner budget {n} exceeds the {start} timesteps available "
                    f"at outer step {i}"
                )
            if self.inner_kind.variant == "ddpm" and n != start:
                raise ParameterError(
                    "ddpm inner passes need unit strides: inner budget must "
                    f"equal the outer start timestep ({start}), got {n}"
                )
        if self.outer_kind.variant == "ddpm" and np.any(np.diff(grid) != -1):
            raise ParameterError("ddpm outer kind needs a unit-stride outer grid")
        if self.terminal_alpha_bar is not None and not (
            0.0 <= self.terminal_alpha_bar <= 1.0
        ):
            raise ParameterError("terminal_alpha_bar must lie in [0, 1]")
        object.__setattr__(self, "outer_grid", grid)
        object.__setattr__(self, "inner_steps", steps)
        object.__setattr__(self, "condition_schedule", conds)

    @property
    def n_outer(self) -> int:
        return len(self.outer_grid) - 1

    @property
    def total_inner_steps(self) -> int:
        return sum(self.inner_steps)

    @property
    def ratio(self) -> float:
        """Outer transitions over mean inner budget; small -> plain-like."""
        return self.n_outer / (self.total_inner_steps / self.n_outer)

    def with_conditions(self, conds) -> "NestedPlan":
        return replace(self, condition_schedule=tuple(conds))


def make_plan(
    schedule: NoiseSchedule,
    outer_steps: int,
    inner_steps,
    outer_kind: TransitionKind = DEFAULT_OUTER,
    inner_kind: TransitionKind = DEFAULT_INNER,
    condition: Condition = UNCONDITIONAL,
    terminal_alpha_bar: float | None = None,
) -> NestedPlan:
    """Uniform outer grid over the full schedule horizon."""
    grid = uniform_grid(schedule.T, int(outer_steps))
    steps = tuple(int(v) for v in np.atleast_1d(inner_steps))
    return NestedPlan(
        grid,
        steps,
        outer_kind,
        inner_kind,
        (condition,),
        terminal_alpha_bar,
    )


def _inner_grid(plan: NestedPlan, i: int) -> np.ndarray:
    return uniform_grid(int(plan.outer_grid[i]), plan.inner_steps[i])


def nested_sample(
    prior: GmmPrior,
    schedule: NoiseSchedule,
    plan: NestedPlan,
    rng: np.random.Generator,
    x_init: np.ndarray | None = None,
    denoise_override=None,
) -> Trace:
    """Run a full nested plan and return its anytime trace.

    denoise_override, when given, replaces every inner denoiser call (the
    hook measurement-conditioned sampling uses); the plan's condition
    schedule is ignored in that case.
    """
    validate_grid(plan.outer_grid, schedule.T)
    if x_init is None:
        x = rng.standard_normal(prior.dim)
    else:
        x = np.asarray(x_init, dtype=float)
    trace = Trace()
    for i in range(plan.n_outer):
        t = int(plan.outer_grid[i])
        t_next = int(plan.outer_grid[i + 1])
        if denoise_override is not None:
            denoise = denoise_override
        else:
            denoise = make_denoiser(prior, schedule, plan.condition_schedule[i])
        inner = ReverseProcess(
            schedule, _inner_grid(plan, i), plan.inner_kind, denoise, x, rng,
            terminal_alpha_bar=plan.terminal_alpha_bar,
        )
        last_t = t
        while not inner.finished:
            for call_t, x0_hat in inner.step():
                trace.total_nfe += 1
                last_t = call_t
                if i == 0:
                    trace.entries.append(TraceEntry(trace.total_nfe, call_t, x0_hat))
        x0_boundary = inner.x
        if i > 0:
            trace.entries.append(
                TraceEntry(trace.total_nfe, last_t, np.array(x0_boundary))
            )
        x = apply_transition(
            schedule, plan.outer_kind, t, t_next, x, x0_boundary, rng,
            alpha_bar_next=(plan.terminal_alpha_bar if i + 1 == plan.n_outer else None),
        )
    trace.final = x
    return trace


@dataclass
class PredictionEvent:
    """One denoiser output inside a session.  nfe is the session-level
    cumulative count at emission, so events are strictly ordered by it."""

    nfe: int
    branch: int
    outer_step: int
    t: int
    x0_hat: np.ndarray
    boundary: bool


@dataclass
class _Branch:
    x: np.ndarray
    rng: np.random.Generator
    inner: ReverseProcess | None = None
    latest: np.ndarray | None = None


@dataclass
class AnytimeSession:
    """Branching nested run with explicit phases.

    awaiting_inner     the current inner pass still has steps to run
    at_outer_boundary  all branches sit just after an outer transition;
                       select and edit_condition are legal only here
    finished           every outer transition is consumed
    """

    prior: GmmPrior
    schedule: NoiseSchedule
    plan: NestedPlan
    branches: list[_Branch]
    conditions: list[Condition]
    outer_index: int = 0
    nfe_count: int = 0
    phase: str = "awaiting_inner"
    events: list[PredictionEvent] = field(default_factory=list)

    @property
    def n_branches(self) -> int:
        return len(self.branches)


def session_create(
    prior: GmmPrior,
    schedule: NoiseSchedule,
    plan: NestedPlan,
    n_branches: int = 1,
    seed: int = 0,
) -> AnytimeSession:
    """Fresh session: one independent stream per branch, start states drawn
    branch by branch, nothing executed yet."""
    if n_branches < 1:
        raise ParameterError(f"need at least one branch, got {n_branches}")
    validate_grid(plan.outer_grid, schedule.T)
    for cond in plan.condition_schedule:
        if cond.kind != "unconditional":
            prior.restricted(cond.label)  # fail fast on unknown labels
    streams = [
        np.random.default_rng(s)
        for s in np.random.SeedSequence(seed).spawn(n_branches)
    ]
    branches = [_Branch(x=s.standard_normal(prior.dim), rng=s) for s in streams]
    return AnytimeSession(
        prior=prior,
        schedule=schedule,
        plan=plan,
        branches=branches,
        conditions=list(plan.condition_schedule),
    )


def _ensure_inner(session: AnytimeSession, branch: _Branch):
    if branch.inner is None:
        i = session.outer_index
        branch.inner = ReverseProcess(
            session.schedule,
            _inner_grid(session.plan, i),
            session.plan.inner_kind,
            make_denoiser(session.prior, session.schedule, session.conditions[i]),
            branch.x,
            branch.rng,
            terminal_alpha_bar=session.plan.terminal_alpha_bar,
        )


def session_advance(
    session: AnytimeSession, stride: int | None = None
) -> list[PredictionEvent]:
    """Advance all branches by one full inner pass plus the outer
    transition, or by `stride` inner steps (capped at the boundary).
    Returns the events emitted by this call.

    Event policy: during the first outer step every denoiser call emits an
    event, the last one flagged as the boundary; later outer steps emit
    only their boundary events.  Branches execute in index order, each on
    its own random stream.
    """
    if session.phase == "finished":
        raise StateError("session is finished; nothing to advance")
    if stride is not None and stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    plan = session.plan
    i = session.outer_index
    t = int(plan.outer_grid[i])
    t_next = int(plan.outer_grid[i + 1])
    emitted: list[PredictionEvent] = []
    for b, branch in enumerate(session.branches):
        _ensure_inner(session, branch)
        inner = branch.inner
        remaining = inner.steps_total - inner.steps_done
        take = remaining if stride is None else min(stride, remaining)
        for _ in range(take):
            calls = inner.step()
            for j, (call_t, x0_hat) in enumerate(calls):
                session.nfe_count += 1
                boundary = inner.finished and j == len(calls) - 1
                if i == 0 or boundary:
                    branch.latest = np.array(x0_hat)
                    emitted.append(
                        PredictionEvent(
                            session.nfe_count, b, i, call_t,
                            np.array(x0_hat), boundary,
                        )
                    )
        if inner.finished:
            branch.x = apply_transition(
                session.schedule, plan.outer_kind, t, t_next,
                branch.x, inner.x, branch.rng,
                alpha_bar_next=(
                    plan.terminal_alpha_bar if i + 1 == plan.n_outer else None
                ),
            )
            branch.inner = None
    if session.branches[0].inner is None:  # all branches share the grid shape
        session.outer_index += 1
        session.phase = (
            "finished" if session.outer_index == plan.n_outer else "at_outer_boundary"
        )
    else:
        session.phase = "awaiting_inner"
    session.events.extend(emitted)
    return emitted


def session_select(session: AnytimeSession, branch_index: int) -> AnytimeSession:
    """Adopt one branch everywhere: its post-transition state and preview
    are copied into every branch.  Streams stay per-branch, so the next
    inner passes diverge again."""
    if session.phase != "at_outer_boundary":
        raise StateError(f"select requires at_outer_boundary, phase is {session.phase}")
    if not (0 <= branch_index < session.n_branches):
        raise ParameterError(
            f"branch index {branch_index} outside 0..{session.n_branches - 1}"
        )
    chosen = session.branches[branch_index]
    for branch in session.branches:
        if branch is chosen:
            continue
        branch.x = np.array(chosen.x)
        branch.latest = None if chosen.latest is None else np.array(chosen.latest)
    return session


def session_edit_condition(
    session: AnytimeSession, new_condition: Condition
) -> AnytimeSession:
    """Replace the condition for every remaining outer transition."""
    if session.phase != "at_outer_boundary":
        raise StateError(
            f"condition edits require at_outer_boundary, phase is {session.phase}"
        )
    if new_condition.kind != "unconditional":
        session.prior.restricted(new_condition.label)
    for i in range(session.outer_index, session.plan.n_outer):
        session.conditions[i] = new_condition
    return session


def anytime_result(session: AnytimeSession, branch: int = 0) -> np.ndarray:
    """Best prediction so far: the in-flight inner preview during the first
    outer step, the latest boundary prediction afterwards."""
    if not (0 <= branch < session.n_branches):
        raise ParameterError(f"branch index {branch} outside 0..{session.n_branches - 1}")
    latest = session.branches[branch].latest
    if session.nfe_count == 0 or latest is None:
        raise NoPredictionError("no denoiser call has happened yet")
    return np.array(latest)
