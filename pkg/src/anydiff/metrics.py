"""Population quality metrics: Gaussian-fit Frechet distance, anytime
log-distance curves over evaluation budgets, their step-function AUC, and
prediction-consistency curves.

Curve/AUC conventions, stated once: a curve holds (nfe, value) points with
strictly increasing integer nfe and a domain_end.  As a function of the
integer budget n in [1, domain_end], the curve is a step function taking
value_i for the largest nfe_i <= n and, before the first point, the first
value retroactively.  auc() is the plain sum of that step function over
the integer budgets, so a constant c over [1, N] integrates to c*N.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoiser import GmmPrior
from .errors import ParameterError
from .sampler import Trace, intermediate_prediction

_CLAMP_TOL = 1e-10


@dataclass(frozen=True)
class GaussianFit:
    """First two moments; n is the sample count (None for exact moments)."""

    mean: np.ndarray
    cov: np.ndarray
    n: int | None = None

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.asarray(self.cov, dtype=float)
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise ParameterError(f"cov shape {cov.shape} does not match dim {d}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-10):
            raise ParameterError("cov must be symmetric within 1e-10")
        if self.n is not None and self.n < d + 1:
            raise ParameterError(f"need at least dim+1 samples, got n={self.n}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", (cov + cov.T) / 2.0)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def fit_gaussian(samples: np.ndarray) -> GaussianFit:
    """Sample mean and unbiased covariance, symmetrized."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ParameterError("samples must be an (n, dim) array")
    n, d = x.shape
    if n < d + 1:
        raise ParameterError(f"need at least dim+1 = {d + 1} samples, got {n}")
    mean = x.mean(axis=0)
    dev = x - mean
    cov = dev.T @ dev / (n - 1)
    return GaussianFit(mean, (cov + cov.T) / 2.0, n)


def prior_moments(prior: GmmPrior) -> GaussianFit:
    """Exact mixture moments, for use as a reference fit."""
    mean = prior.weights @ prior.means
    second = np.einsum(
        "k,kde->de",
        prior.weights,
        prior.covs + prior.means[:, :, None] * prior.means[:, None, :],
    )
    cov = second - np.outer(mean, mean)
    return GaussianFit(mean, (cov + cov.T) / 2.0, None)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root by eigendecomposition, eigenvalues clamped
    at zero; distinctly negative eigenvalues are a caller error."""
    w, V = np.linalg.eigh(mat)
    tol = _CLAMP_TOL * max(1.0, float(np.abs(w).max(initial=0.0)))
    if w.min(initial=0.0) < -tol:
        raise ParameterError(f"matrix is not PSD: min eigenvalue {w.min()}")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def frechet_distance(a: GaussianFit, b: GaussianFit) -> float:
    """|mu_a - mu_b|^2 + tr(C_a + C_b - 2 (C_a^{1/2} C_b C_a^{1/2})^{1/2})."""
    if a.dim != b.dim:
        raise ParameterError(f"dimension mismatch: {a.dim} vs {b.dim}")
    root_a = _psd_sqrt(a.cov)
    inner = root_a @ b.cov @ root_a
    w = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    tol = _CLAMP_TOL * max(1.0, float(np.abs(w).max(initial=0.0)))
    if w.min(initial=0.0) < -tol:
        raise ParameterError(f"cross term is not PSD: min eigenvalue {w.min()}")
    cross = np.sqrt(np.clip(w, 0.0, None)).sum()
    diff = a.mean - b.mean
    return float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * cross)


@dataclass(frozen=True)
class AnytimeCurve:
    """(nfe, value) points, strictly increasing in nfe, over [1, domain_end]."""

    points: tuple
    domain_end: int

    def __post_init__(self):
        pts = tuple((int(n), float(v)) for n, v in self.points)
        if not pts:
            raise ParameterError("curve needs at least one point")
        nfes = [n for n, _ in pts]
        if any(n < 1 for n in nfes):
            raise ParameterError("curve nfes must be >= 1")
        if any(b <= a for a, b in zip(nfes, nfes[1:])):
            raise ParameterError("curve nfes must be strictly increasing")
        if self.domain_end < nfes[-1]:
            raise ParameterError(
                f"domain_end {self.domain_end} precedes last point {nfes[-1]}"
            )
        object.__setattr__(self, "points", pts)


def value_at(curve: AnytimeCurve, n: int) -> float:
    """Step-function lookup with first-value extension before the first point."""
    if not (1 <= n <= curve.domain_end):
        raise ParameterError(f"budget {n} outside [1, {curve.domain_end}]")
    out = curve.points[0][1]
    for nfe, v in curve.points:
        if nfe > n:
            break
        out = v
    return out


def auc(curve: AnytimeCurve) -> float:
    """Sum of the step function over the integer budgets 1..domain_end."""
    pts = curve.points
    total = pts[0][1] * (pts[0][0] - 1)
    for (n_cur, v_cur), (n_nxt, _) in zip(pts, pts[1:]):
        total += v_cur * (n_nxt - n_cur)
    total += pts[-1][1] * (curve.domain_end - pts[-1][0] + 1)
    return float(total)


def anytime_curve(
    traces: list[Trace], data_fit: GaussianFit, eval_every: int
) -> AnytimeCurve:
    """Population log Frechet distance to data_fit at budget multiples of
    eval_every.  All traces must share one total NFE budget; a budget below
    eval_every yields the single terminal point."""
    if eval_every < 1:
        raise ParameterError(f"eval_every must be >= 1, got {eval_every}")
    if not traces:
        raise ParameterError("need at least one trace")
    budget = traces[0].total_nfe
    for tr in traces:
        if tr.total_nfe != budget:
            raise ParameterError(
                f"traces disagree on budget: {tr.total_nfe} vs {budget}"
            )
    grid = list(range(eval_every, budget + 1, eval_every)) or [budget]
    points = []
    for n in grid:
        fit = fit_gaussian(
            np.stack([intermediate_prediction(tr, n) for tr in traces])
        )
        # a perfect fit gives distance 0 and the point legitimately sits
        # at -inf on the log scale
        with np.errstate(divide="ignore"):
            points.append((n, float(np.log(frechet_distance(fit, data_fit)))))
    return AnytimeCurve(tuple(points), budget)


def consistency_curve(trace: Trace) -> AnytimeCurve:
    """Mean-squared distance of each recorded prediction to the final sample."""
    if len(trace.entries) < 2:
        raise ParameterError("need at least two recorded predictions")
    points = tuple(
        (e.nfe, float(np.mean((e.x0_hat - trace.final) ** 2)))
        for e in trace.entries
    )
    return AnytimeCurve(points, trace.total_nfe)


def curve_rows(curve: AnytimeCurve) -> str:
    """Delimited text form with the header line nfe,value."""
    lines = ["nfe,value"]
    lines.extend(f"{n},{format(v, '.17g')}" for n, v in curve.points)
    return "\n".join(lines) + "\n"
