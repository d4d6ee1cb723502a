"""Reverse-process transition kernels.

Three families move x_t to x_{t'} (t' < t) given a prediction x0_hat:

  ddpm      ancestral posterior step, unit strides only (t' = t - 1)
  ddim      generalized step with stochasticity knob eta in [0, inf)
  dpm_pp_2s second-order data-prediction exponential integrator; it asks
            the denoiser itself for a midpoint evaluation, so callers hand
            it the denoise callback instead of a precomputed x0_hat

Noise discipline: a kernel draws exactly one standard normal per step and
only when its noise coefficient is nonzero, so deterministic configurations
consume nothing from the stream.  This is what makes single-inner and
single-outer nested plans collapse onto plain runs bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .schedule import NoiseSchedule

_VARIANTS = ("ddpm", "ddim", "dpm_solver_pp_2s")


@dataclass(frozen=True)
class TransitionKind:
    """Kernel selector.  eta is only meaningful for ddim."""

    variant: str = "ddim"
    eta: float = 0.0

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ParameterError(
                f"unknown transition variant {self.variant!r}; pick from {_VARIANTS}"
            )
        if not np.isfinite(self.eta) or self.eta < 0.0:
            raise ParameterError(f"eta must be finite and >= 0, got {self.eta}")


def _check_pair(schedule: NoiseSchedule, t: int, t_next: int):
    if not (0 <= t_next < t <= schedule.T):
        raise ParameterError(
            f"need 0 <= t_next < t <= {schedule.T}, got t={t}, t_next={t_next}"
        )


def ddim_sigma(schedule: NoiseSchedule, t: int, t_next: int, eta: float,
               alpha_bar_next: float | None = None) -> float:
    """sigma_t(eta) = eta sqrt((1-abar')/(1-abar)) sqrt(1 - abar/abar').

    At eta = 1 and a unit stride this equals the ddpm posterior standard
    deviation sqrt(beta_tilde); at eta = 0 the step is deterministic.
    """
    _check_pair(schedule, t, t_next)
    ab = float(schedule.alpha_bar[t])
    ab_n = float(schedule.alpha_bar[t_next]) if alpha_bar_next is None else float(alpha_bar_next)
    if ab >= 1.0:
        raise ParameterError("abar_t == 1: eps direction undefined at the source step")
    if ab_n >= 1.0:
        return 0.0
    return eta * np.sqrt((1.0 - ab_n) / (1.0 - ab)) * np.sqrt(1.0 - ab / ab_n)


def ddim_step(
    schedule: NoiseSchedule,
    t: int,
    t_next: int,
    x_t: np.ndarray,
    x0_hat: np.ndarray,
    eta: float,
    rng: np.random.Generator,
    alpha_bar_next: float | None = None,
) -> np.ndarray:
    """x_{t'} = sqrt(abar') x0_hat + sqrt(1 - abar' - sigma^2) eps_hat + sigma z
    with eps_hat = (x_t - sqrt(abar) x0_hat) / sqrt(1 - abar).

    When abar' == 1 the step returns x0_hat exactly and draws nothing.
    alpha_bar_next, when given, overrides the schedule's abar at t_next
    (the optional zero-terminal variant).
    """
    _check_pair(schedule, t, t_next)
    x_t = np.asarray(x_t, dtype=float)
    x0_hat = np.asarray(x0_hat, dtype=float)
    ab = float(schedule.alpha_bar[t])
    ab_n = float(schedule.alpha_bar[t_next]) if alpha_bar_next is None else float(alpha_bar_next)
    if not (0.0 <= ab_n <= 1.0):
        raise ParameterError(f"alpha_bar_next must lie in [0, 1], got {ab_n}")
    if ab_n == 1.0:
        return x0_hat.copy()
    if ab >= 1.0:
        raise ParameterError("abar_t == 1 at a non-terminal step: eps_hat undefined")
    sigma = ddim_sigma(schedule, t, t_next, eta, alpha_bar_next=ab_n)
    resid = 1.0 - ab_n - sigma * sigma
    if resid < 0.0:
        if resid < -1e-12:
            raise ParameterError(
                f"eta={eta} makes sigma^2 exceed 1 - abar' at t={t}->{t_next}"
            )
        resid = 0.0
    eps_hat = (x_t - np.sqrt(ab) * x0_hat) / np.sqrt(1.0 - ab)
    out = np.sqrt(ab_n) * x0_hat + np.sqrt(resid) * eps_hat
    if sigma > 0.0:
        out = out + sigma * rng.standard_normal(x_t.shape)
    return out


def ddpm_moments(schedule: NoiseSchedule, t: int) -> tuple[float, float, float]:
    """(coef_x0, coef_xt, variance) of the ancestral posterior q(x_{t-1}|x_t, x0):

        mean = sqrt(abar_{t-1}) beta_t / (1-abar_t) * x0
             + sqrt(alpha_t) (1-abar_{t-1}) / (1-abar_t) * x_t
        var  = (1 - abar_{t-1}) beta_t / (1 - abar_t)
    """
    if not (1 <= t <= schedule.T):
        raise ParameterError(f"ddpm needs 1 <= t <= {schedule.T}, got {t}")
    ab, ab_p = float(schedule.alpha_bar[t]), float(schedule.alpha_bar[t - 1])
    beta = float(schedule.beta[t])
    c0 = np.sqrt(ab_p) * beta / (1.0 - ab)
    c1 = np.sqrt(1.0 - beta) * (1.0 - ab_p) / (1.0 - ab)
    var = (1.0 - ab_p) * beta / (1.0 - ab)
    return c0, c1, var


def ddpm_step(
    schedule: NoiseSchedule,
    t: int,
    x_t: np.ndarray,
    x0_hat: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """One ancestral step t -> t-1.  At t = 1 the posterior collapses
    (variance 0, mean x0_hat), so the step returns x0_hat and draws nothing."""
    x_t = np.asarray(x_t, dtype=float)
    x0_hat = np.asarray(x0_hat, dtype=float)
    if t == 1:
        return x0_hat.copy()
    c0, c1, var = ddpm_moments(schedule, t)
    return c0 * x0_hat + c1 * x_t + np.sqrt(var) * rng.standard_normal(x_t.shape)


def _log_snr_half(alpha_bar: np.ndarray | float):
    return 0.5 * np.log(alpha_bar / (1.0 - alpha_bar))


def dpm_pp_2s_step(
    schedule: NoiseSchedule,
    t: int,
    t_next: int,
    x_t: np.ndarray,
    denoise,
    rng: np.random.Generator,
    alpha_bar_next: float | None = None,
) -> tuple[np.ndarray, int]:
    """Single-step second-order data-prediction update.

    In lambda = log(sqrt(abar)/sqrt(1-abar)) coordinates, with h the
    lambda stride, the update evaluates the denoiser at t and at the grid
    timestep s closest to the lambda midpoint:

        u      = (sig_s/sig_t) x - alf_s (e^{-r h} - 1) d_t,  r = (lam_s-lam_t)/h
        D      = (1 - 1/(2r)) d_t + 1/(2r) denoise(s, u)
        x_next = (sig_n/sig_t) x - alf_n (e^{-h} - 1) D

    Returns (x_next, evaluations_used).  Degenerate cases: a midpoint that
    rounds onto an endpoint degrades to the first-order update (one
    evaluation), and abar' == 1 returns denoise(t, x_t) directly.
    """
    _check_pair(schedule, t, t_next)
    x_t = np.asarray(x_t, dtype=float)
    ab_t = float(schedule.alpha_bar[t])
    ab_n = float(schedule.alpha_bar[t_next]) if alpha_bar_next is None else float(alpha_bar_next)
    if ab_n == 1.0:
        return np.asarray(denoise(t, x_t), dtype=float).copy(), 1
    if ab_t >= 1.0:
        raise ParameterError("abar_t == 1 at a non-terminal step")
    lam_t, lam_n = _log_snr_half(ab_t), _log_snr_half(ab_n)
    h = lam_n - lam_t
    alf_n, sig_n = np.sqrt(ab_n), np.sqrt(1.0 - ab_n)
    sig_t = np.sqrt(1.0 - ab_t)
    d_t = np.asarray(denoise(t, x_t), dtype=float)
    cand = np.arange(t_next, t + 1)
    lam_cand = _log_snr_half(schedule.alpha_bar[cand])
    s = int(cand[np.argmin(np.abs(lam_cand - (lam_t + 0.5 * h)))])
    if s == t or s == t_next:
        return (sig_n / sig_t) * x_t - alf_n * np.expm1(-h) * d_t, 1
    ab_s = float(schedule.alpha_bar[s])
    lam_s = _log_snr_half(ab_s)
    r = (lam_s - lam_t) / h
    alf_s, sig_s = np.sqrt(ab_s), np.sqrt(1.0 - ab_s)
    u = (sig_s / sig_t) * x_t - alf_s * np.expm1(-r * h) * d_t
    d_s = np.asarray(denoise(s, u), dtype=float)
    D = (1.0 - 0.5 / r) * d_t + (0.5 / r) * d_s
    return (sig_n / sig_t) * x_t - alf_n * np.expm1(-h) * D, 2


def apply_transition(
    schedule: NoiseSchedule,
    kind: TransitionKind,
    t: int,
    t_next: int,
    x_t: np.ndarray,
    x0_hat: np.ndarray,
    rng: np.random.Generator,
    alpha_bar_next: float | None = None,
) -> np.ndarray:
    """Dispatch for the plain kernels (those taking a precomputed x0_hat)."""
    if kind.variant == "ddim":
        return ddim_step(
            schedule, t, t_next, x_t, x0_hat, kind.eta, rng,
            alpha_bar_next=alpha_bar_next,
        )
    if kind.variant == "ddpm":
        if t_next != t - 1:
            raise ParameterError(
                f"ddpm takes unit strides only, got t={t} -> t_next={t_next}"
            )
        if alpha_bar_next is not None:
            raise ParameterError("terminal alpha_bar override is unsupported for ddpm")
        return ddpm_step(schedule, t, x_t, x0_hat, rng)
    raise ParameterError(
        f"{kind.variant} requires the denoiser itself; use dpm_pp_2s_step"
    )
