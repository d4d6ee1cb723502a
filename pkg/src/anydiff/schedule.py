"""Variance-preserving noise schedules and timestep grids.

The forward process is

    x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps,    eps ~ N(0, I)

with abar_t = prod_{u<=t} (1 - beta_u).  Arrays are indexed by integer
timestep 0..T; abar_0 == 1 exactly and abar is strictly decreasing.
beta[0] is a placeholder zero so that beta[t] lines up with abar_t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

DEFAULT_BETA_MIN = 1e-4
DEFAULT_BETA_MAX = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Discrete VP schedule: per-step beta and the running product abar."""

    kind: str
    T: int
    beta: np.ndarray       # shape (T+1,), beta[0] == 0.0 unused
    alpha_bar: np.ndarray  # shape (T+1,), alpha_bar[0] == 1.0
    beta_min: float | None = None
    beta_max: float | None = None

    def __post_init__(self):
        if self.T < 1:
            raise ParameterError(f"schedule needs T >= 1, got {self.T}")
        beta = np.asarray(self.beta, dtype=float)
        abar = np.asarray(self.alpha_bar, dtype=float)
        if beta.shape != (self.T + 1,) or abar.shape != (self.T + 1,):
            raise ParameterError("beta and alpha_bar must have shape (T+1,)")
        if beta[0] != 0.0:
            raise ParameterError("beta[0] is a placeholder and must be 0")
        if np.any(beta[1:] <= 0.0) or np.any(beta[1:] >= 1.0):
            raise ParameterError("beta[1:] must lie strictly inside (0, 1)")
        if abar[0] != 1.0:
            raise ParameterError("alpha_bar[0] must be exactly 1")
        if np.any(np.diff(abar) >= 0.0):
            raise ParameterError("alpha_bar must be strictly decreasing")
        if abar[-1] <= 0.0:
            raise ParameterError("alpha_bar must stay positive")
        # the defining recurrence, allowing only rounding-level slack
        recon = abar[:-1] * (1.0 - beta[1:])
        if not np.allclose(recon, abar[1:], rtol=1e-12, atol=0.0):
            raise ParameterError("alpha_bar[t] != alpha_bar[t-1] * (1 - beta[t])")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha_bar", abar)

    def config(self) -> dict:
        """Key/value block sufficient to rebuild the schedule."""
        if self.kind == "linear":
            return {
                "kind": "linear",
                "T": self.T,
                "beta_min": float(self.beta_min),
                "beta_max": float(self.beta_max),
            }
        if self.kind == "cosine":
            return {"kind": "cosine", "T": self.T}
        raise ParameterError(f"schedule kind {self.kind!r} has no config form")


def schedule_from_config(cfg: dict) -> NoiseSchedule:
    kind = cfg.get("kind", "linear")
    T = int(cfg.get("T", 1000))
    if kind == "linear":
        return make_linear_schedule(
            T,
            beta_min=float(cfg.get("beta_min", DEFAULT_BETA_MIN)),
            beta_max=float(cfg.get("beta_max", DEFAULT_BETA_MAX)),
        )
    if kind == "cosine":
        return make_cosine_schedule(T)
    raise ParameterError(f"unknown schedule kind {kind!r}")


def make_linear_schedule(
    T: int,
    beta_min: float = DEFAULT_BETA_MIN,
    beta_max: float = DEFAULT_BETA_MAX,
) -> NoiseSchedule:
    """beta rises linearly from beta_min at t=1 to beta_max at t=T."""
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ParameterError(
            f"need 0 < beta_min <= beta_max < 1, got ({beta_min}, {beta_max})"
        )
    beta = np.zeros(T + 1)
    beta[1:] = np.linspace(beta_min, beta_max, T)
    abar = np.ones(T + 1)
    abar[1:] = np.cumprod(1.0 - beta[1:])
    return NoiseSchedule("linear", T, beta, abar, beta_min, beta_max)


def make_cosine_schedule(T: int, offset: float = 0.008) -> NoiseSchedule:
    """Squared-cosine abar profile with the usual small offset.

    abar is first shaped as cos^2 and then rebuilt from per-step betas
    clipped into (0, 0.999] so the running-product recurrence holds
    exactly even where the raw profile would hit zero.
    """
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    t = np.arange(T + 1, dtype=float)
    f = np.cos((t / T + offset) / (1.0 + offset) * np.pi / 2.0) ** 2
    raw = f / f[0]
    beta = np.zeros(T + 1)
    beta[1:] = np.clip(1.0 - raw[1:] / raw[:-1], None, 0.999)
    abar = np.ones(T + 1)
    abar[1:] = np.cumprod(1.0 - beta[1:])
    return NoiseSchedule("cosine", T, beta, abar)


def uniform_grid(start: int, n_steps: int) -> np.ndarray:
    """Strictly decreasing integer grid from start to 0 in n_steps steps.

    The start..0 span is split by largest remainder, so gaps differ by at
    most one; the larger gaps are placed first (at larger t).
    """
    if n_steps < 1:
        raise ParameterError(f"n_steps must be >= 1, got {n_steps}")
    if start < n_steps:
        raise ParameterError(
            f"cannot place {n_steps} steps on a span of {start} timesteps"
        )
    base, extra = divmod(start, n_steps)
    gaps = np.full(n_steps, base, dtype=np.int64)
    gaps[:extra] += 1
    grid = np.empty(n_steps + 1, dtype=np.int64)
    grid[0] = start
    np.cumsum(gaps, out=grid[1:])
    grid[1:] = start - grid[1:]
    return grid


def validate_grid(grid: np.ndarray, T: int) -> np.ndarray:
    """Check a timestep grid against a schedule horizon and return it as ints."""
    g = np.asarray(grid)
    if g.ndim != 1 or g.size < 2:
        raise ParameterError("grid must be a 1-d sequence with >= 2 entries")
    if not np.issubdtype(g.dtype, np.integer):
        if not np.all(g == np.floor(g)):
            raise ParameterError("grid entries must be integers")
        g = g.astype(np.int64)
    if g[0] > T or g[0] < 1:
        raise ParameterError(f"grid must start within 1..{T}, got {g[0]}")
    if g[-1] != 0:
        raise ParameterError(f"grid must end at 0, got {g[-1]}")
    if np.any(np.diff(g) >= 0):
        raise ParameterError("grid must be strictly decreasing")
    return g
