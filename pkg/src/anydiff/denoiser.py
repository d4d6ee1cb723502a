"""Exact Bayes denoisers for Gaussian-mixture priors.

With x_t = a x_0 + sqrt(v) eps, where a = sqrt(abar_t) and v = 1 - abar_t,
and a prior p(x_0) = sum_k w_k N(mu_k, Sigma_k), everything is closed form:

    p(x_t)           = sum_k w_k N(x_t; a mu_k, S_k),   S_k = a^2 Sigma_k + v I
    r_k(x_t)         = w_k N(x_t; a mu_k, S_k) / p(x_t)
    E[x_0 | x_t, k]  = mu_k + a Sigma_k S_k^{-1} (x_t - a mu_k)
    Cov[x_0| x_t, k] = Sigma_k - a^2 Sigma_k S_k^{-1} Sigma_k
    E[x_0 | x_t]     = sum_k r_k E[x_0 | x_t, k]

Responsibilities r_k are accumulated in log space with max subtraction.
All entry points accept a single point (dim,) or a batch (..., dim) and
vectorize over the leading axes.

Measurement conditioning appends linear observations y = H x_0 + sigma_y z
to the same joint-Gaussian calculation after reducing H to full row rank
through its SVD, which keeps sigma_y = 0 well posed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ParameterError
from .schedule import NoiseSchedule

_LOG_2PI = float(np.log(2.0 * np.pi))
_SVD_CUTOFF = 1e-12


@dataclass(frozen=True)
class GmmPrior:
    """Gaussian-mixture data prior, optionally with integer class labels."""

    weights: np.ndarray  # (K,)
    means: np.ndarray    # (K, dim)
    covs: np.ndarray     # (K, dim, dim)
    labels: np.ndarray | None = None  # (K,) ints

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        cov = np.asarray(self.covs, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ParameterError("weights must be a non-empty 1-d array")
        K = w.size
        if mu.ndim != 2 or mu.shape[0] != K:
            raise ParameterError("means must have shape (K, dim)")
        dim = mu.shape[1]
        if cov.shape != (K, dim, dim):
            raise ParameterError("covs must have shape (K, dim, dim)")
        if np.any(w <= 0.0):
            raise ParameterError("weights must be strictly positive")
        if abs(w.sum() - 1.0) > 1e-8:
            raise ParameterError(f"weights must sum to 1, got {w.sum()!r}")
        w = w / w.sum()
        if not np.allclose(cov, np.swapaxes(cov, -1, -2), rtol=0.0, atol=1e-12):
            raise ParameterError("covariances must be symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ParameterError("covariances must be positive definite") from None
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (K,):
                raise ParameterError("labels must have shape (K,)")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", cov)
        object.__setattr__(self, "labels", labels)

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def label_set(self) -> list[int]:
        if self.labels is None:
            return []
        return sorted(int(v) for v in np.unique(self.labels))

    def restricted(self, label: int) -> "GmmPrior":
        """The prior conditioned on a class label, weights renormalized."""
        if self.labels is None:
            raise ParameterError("prior has no labels to condition on")
        mask = self.labels == int(label)
        if not mask.any():
            raise ParameterError(f"label {label} not present in prior")
        w = self.weights[mask]
        return GmmPrior(w / w.sum(), self.means[mask], self.covs[mask], self.labels[mask])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n exact draws from the mixture: component index, then Gaussian."""
        idx = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        chol = np.linalg.cholesky(self.covs)
        return self.means[idx] + np.einsum("nij,nj->ni", chol[idx], z)


@dataclass(frozen=True)
class Condition:
    """Sampling condition: unconditional, a hard class, or guided mixing.

    kind "class" restricts the prior to components carrying the label.
    kind "guided" blends the unconditional and class predictions in
    eps space with guidance scale `scale` (1 recovers "class", 0 the
    unconditional output).
    """

    kind: str = "unconditional"
    label: int | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("unconditional", "class", "guided"):
            raise ParameterError(f"unknown condition kind {self.kind!r}")
        if self.kind != "unconditional" and self.label is None:
            raise ParameterError(f"condition kind {self.kind!r} requires a label")
        if not np.isfinite(self.scale):
            raise ParameterError("guidance scale must be finite")


UNCONDITIONAL = Condition()


def class_condition(label: int) -> Condition:
    return Condition("class", int(label))


def guided_condition(label: int, scale: float) -> Condition:
    return Condition("guided", int(label), float(scale))


@dataclass(frozen=True)
class DenoiserOutput:
    """Full posterior summary at one (t, x_t): mixture mean, per-point
    responsibilities, per-component means, and shared component covariances."""

    x0_hat: np.ndarray            # (..., dim)
    x0_var: np.ndarray            # (..., dim) diagonal of the mixture covariance
    responsibilities: np.ndarray  # (..., K)
    component_means: np.ndarray   # (..., K, dim)
    component_covs: np.ndarray    # (K, dim, dim)


def _coeffs(schedule: NoiseSchedule, t: int) -> tuple[float, float]:
    t = int(t)
    if t < 0 or t > schedule.T:
        raise ParameterError(f"timestep {t} outside 0..{schedule.T}")
    ab = float(schedule.alpha_bar[t])
    return np.sqrt(ab), 1.0 - ab


def _posterior_parts(prior: GmmPrior, a: float, v: float, x: np.ndarray):
    """log responsibilities (..., K), component means (..., K, dim),
    component covariances (K, dim, dim) for x_t = a x0 + sqrt(v) eps."""
    d = prior.dim
    eye = np.eye(d)
    S = a * a * prior.covs + v * eye                    # (K, d, d)
    diff = x[..., None, :] - a * prior.means            # (..., K, d)
    Sinv_diff = np.linalg.solve(S, diff[..., None])[..., 0]
    maha = np.einsum("...kd,...kd->...k", diff, Sinv_diff)
    _, logdet = np.linalg.slogdet(S)                    # (K,)
    log_r = np.log(prior.weights) - 0.5 * (maha + logdet + d * _LOG_2PI)
    log_r = log_r - logsumexp(log_r, axis=-1, keepdims=True)
    means = prior.means + a * np.einsum("kde,...ke->...kd", prior.covs, Sinv_diff)
    covs = prior.covs - a * a * np.einsum(
        "kde,kef->kdf", prior.covs, np.linalg.solve(S, prior.covs)
    )
    return log_r, means, covs


def posterior_stats(
    prior: GmmPrior, schedule: NoiseSchedule, t: int, x: np.ndarray
) -> DenoiserOutput:
    """Exact posterior summary of x_0 given x_t (unconditional)."""
    x = np.asarray(x, dtype=float)
    a, v = _coeffs(schedule, t)
    if v == 0.0:
        K = prior.n_components
        resp = np.broadcast_to(prior.weights, x.shape[:-1] + (K,)).copy()
        means = np.broadcast_to(
            x[..., None, :], x.shape[:-1] + (K, x.shape[-1])
        ).copy()
        return DenoiserOutput(
            x0_hat=x.copy(),
            x0_var=np.zeros_like(x),
            responsibilities=resp,
            component_means=means,
            component_covs=np.zeros_like(prior.covs),
        )
    log_r, means, covs = _posterior_parts(prior, a, v, x)
    r = np.exp(log_r)
    mean = np.einsum("...k,...kd->...d", r, means)
    dev = means - mean[..., None, :]
    var = np.einsum("...k,kdd->...d", r, covs) + np.einsum(
        "...k,...kd->...d", r, dev * dev
    )
    return DenoiserOutput(mean, var, r, means, covs)


def posterior_mean(
    prior: GmmPrior, schedule: NoiseSchedule, t: int, x: np.ndarray
) -> np.ndarray:
    """E[x_0 | x_t], the MMSE denoiser.  At abar == 1 this is x itself."""
    x = np.asarray(x, dtype=float)
    a, v = _coeffs(schedule, t)
    if v == 0.0:
        return x.copy()
    log_r, means, _ = _posterior_parts(prior, a, v, x)
    return np.einsum("...k,...kd->...d", np.exp(log_r), means)


def posterior_sample(
    prior: GmmPrior,
    schedule: NoiseSchedule,
    t: int,
    x: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """One exact draw from p(x_0 | x_t): responsibility-weighted component
    choice (one uniform), then the component's conditional Gaussian (one
    normal vector).  Batches draw in the same two stages."""
    x = np.asarray(x, dtype=float)
    a, v = _coeffs(schedule, t)
    if v == 0.0:
        return x.copy()
    log_r, means, covs = _posterior_parts(prior, a, v, x)
    r = np.exp(log_r)
    cum = np.cumsum(r, axis=-1)
    u = rng.random(x.shape[:-1])
    idx = np.minimum(
        (u[..., None] > cum).sum(axis=-1), prior.n_components - 1
    )
    chol = np.linalg.cholesky(covs)
    z = rng.standard_normal(x.shape)
    picked_mean = np.take_along_axis(
        means, idx[..., None, None].repeat(prior.dim, -1), axis=-2
    )[..., 0, :]
    return picked_mean + np.einsum("...de,...e->...d", chol[idx], z)


def conditional_posterior_mean(
    prior: GmmPrior,
    schedule: NoiseSchedule,
    t: int,
    x: np.ndarray,
    condition: Condition,
) -> np.ndarray:
    """Posterior mean under a sampling condition.

    "class" conditions on the label by restricting the mixture.  "guided"
    converts both the unconditional and the class means to eps space,

        eps_hat = (x_t - a x0_hat) / sqrt(v),

    extrapolates eps_u + scale (eps_c - eps_u), and maps back.  scale = 1
    reduces to the class output and scale = 0 to the unconditional one.
    """
    if condition.kind == "unconditional":
        return posterior_mean(prior, schedule, t, x)
    restricted = prior.restricted(condition.label)
    if condition.kind == "class":
        return posterior_mean(restricted, schedule, t, x)
    x = np.asarray(x, dtype=float)
    a, v = _coeffs(schedule, t)
    if v == 0.0:
        return x.copy()
    m_u = posterior_mean(prior, schedule, t, x)
    m_c = posterior_mean(restricted, schedule, t, x)
    sv = np.sqrt(v)
    eps_u = (x - a * m_u) / sv
    eps_c = (x - a * m_c) / sv
    eps = eps_u + condition.scale * (eps_c - eps_u)
    return (x - sv * eps) / a


def _reduced_observation(op, y: np.ndarray):
    """Project (H, y) onto H's row space: rows H_r of full row rank and
    the matching coordinates y_r.  Rank can be zero."""
    if hasattr(op, "svd"):
        U, s, Vt = op.svd
    else:
        H = np.asarray(op, dtype=float)
        if H.ndim != 2:
            raise ParameterError("operator matrix must be 2-d")
        U, s, Vt = np.linalg.svd(H, full_matrices=False)
    keep = s > _SVD_CUTOFF
    r = int(keep.sum())
    y = np.asarray(y, dtype=float)
    if U.shape[0] != y.shape[-1]:
        raise ParameterError(
            f"observation has {y.shape[-1]} entries, operator expects {U.shape[0]}"
        )
    H_r = s[keep, None] * Vt[keep]
    y_r = y @ U[:, keep]
    return H_r, y_r, r


def measurement_posterior_mean(
    prior: GmmPrior,
    op,
    y: np.ndarray,
    sigma_y: float,
    schedule: NoiseSchedule,
    t: int,
    x: np.ndarray,
) -> np.ndarray:
    """E[x_0 | x_t, y] for y = H x_0 + sigma_y z.

    x_t and y are stacked into one joint Gaussian observation of x_0 with
    block noise diag(v I, sigma_y^2 I); responsibilities come from the
    joint evidence.  H is first reduced to full row rank, so sigma_y = 0
    stays well posed, and a rank-zero H falls back to posterior_mean.
    """
    if sigma_y < 0.0 or not np.isfinite(sigma_y):
        raise ParameterError(f"sigma_y must be finite and >= 0, got {sigma_y}")
    H_r, y_r, r = _reduced_observation(op, y)
    if r == 0:
        return posterior_mean(prior, schedule, t, x)
    x = np.asarray(x, dtype=float)
    a, v = _coeffs(schedule, t)
    if v == 0.0:
        return x.copy()
    d = prior.dim
    if H_r.shape[1] != d:
        raise ParameterError(
            f"operator acts on dim {H_r.shape[1]}, prior has dim {d}"
        )
    M = np.concatenate([a * np.eye(d), H_r], axis=0)          # (d+r, d)
    noise = np.concatenate([np.full(d, v), np.full(r, sigma_y**2)])
    S = np.einsum("od,kde,pe->kop", M, prior.covs, M) + np.diag(noise)
    obs = np.concatenate(
        [x, np.broadcast_to(y_r, x.shape[:-1] + (r,))], axis=-1
    )
    diff = obs[..., None, :] - prior.means @ M.T              # (..., K, d+r)
    Sinv_diff = np.linalg.solve(S, diff[..., None])[..., 0]
    maha = np.einsum("...ko,...ko->...k", diff, Sinv_diff)
    _, logdet = np.linalg.slogdet(S)
    log_r = np.log(prior.weights) - 0.5 * (maha + logdet + (d + r) * _LOG_2PI)
    log_r = log_r - logsumexp(log_r, axis=-1, keepdims=True)
    gain = np.einsum("kde,oe->kdo", prior.covs, M)            # (K, d, d+r)
    means = prior.means + np.einsum("kdo,...ko->...kd", gain, Sinv_diff)
    return np.einsum("...k,...kd->...d", np.exp(log_r), means)


def make_denoiser(prior: GmmPrior, schedule: NoiseSchedule, condition: Condition):
    """Callable (t, x) -> x0_hat used by reverse processes."""
    if condition.kind == "unconditional":
        return lambda t, x: posterior_mean(prior, schedule, t, x)
    prior.restricted(condition.label)  # validate the label once, up front
    return lambda t, x: conditional_posterior_mean(prior, schedule, t, x, condition)


def make_measurement_denoiser(prior: GmmPrior, schedule: NoiseSchedule, problem):
    """Callable (t, x) -> E[x0 | x_t, y] for a linear inverse problem."""
    op, y, sigma_y = problem.operator, problem.y, problem.sigma_y
    return lambda t, x: measurement_posterior_mean(
        prior, op, y, sigma_y, schedule, t, x
    )
