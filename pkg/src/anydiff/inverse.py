"""Linear inverse problems solved by measurement-conditioned nested runs.

A degradation y = H x_0 + sigma_y z with a known linear operator H keeps
the Gaussian-mixture posterior closed form, so the inner denoiser can
condition on the measurement exactly; the nested loop itself is unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoiser import GmmPrior, make_measurement_denoiser
from .errors import ParameterError
from .nested import NestedPlan, nested_sample
from .sampler import Trace
from .schedule import NoiseSchedule

_OPERATOR_KINDS = ("mask", "average_pool", "identity", "custom")


@dataclass(frozen=True)
class LinearOperator:
    """Real m x dim matrix with its SVD cached at construction."""

    matrix: np.ndarray
    kind: str = "custom"
    svd: tuple = None  # set in __post_init__

    def __post_init__(self):
        H = np.asarray(self.matrix, dtype=float)
        if H.ndim != 2 or H.size == 0:
            raise ParameterError("operator matrix must be a non-empty 2-d array")
        if self.kind not in _OPERATOR_KINDS:
            raise ParameterError(f"unknown operator kind {self.kind!r}")
        U, s, Vt = np.linalg.svd(H, full_matrices=False)
        object.__setattr__(self, "matrix", H)
        object.__setattr__(self, "svd", (U, s, Vt))

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def rank(self) -> int:
        return int((self.svd[1] > 1e-12).sum())


def operator_from_matrix(matrix: np.ndarray, kind: str = "custom") -> LinearOperator:
    return LinearOperator(np.asarray(matrix, dtype=float), kind)


def identity_operator(dim: int) -> LinearOperator:
    return LinearOperator(np.eye(dim), "identity")


def mask_operator(dim: int, keep) -> LinearOperator:
    """Keep the listed coordinates, in the order given."""
    keep = np.atleast_1d(np.asarray(keep, dtype=np.int64))
    if keep.size == 0:
        raise ParameterError("mask must keep at least one coordinate")
    if np.any(keep < 0) or np.any(keep >= dim):
        raise ParameterError(f"mask indices must lie in 0..{dim - 1}")
    if np.unique(keep).size != keep.size:
        raise ParameterError("mask indices must be distinct")
    H = np.zeros((keep.size, dim))
    H[np.arange(keep.size), keep] = 1.0
    return LinearOperator(H, "mask")


def average_pool_operator(dim: int, factor: int) -> LinearOperator:
    """Average non-overlapping blocks of `factor` consecutive coordinates."""
    if factor < 1 or dim % factor != 0:
        raise ParameterError(
            f"pool factor must divide the dimension, got dim={dim}, factor={factor}"
        )
    m = dim // factor
    H = np.zeros((m, dim))
    for i in range(m):
        H[i, i * factor : (i + 1) * factor] = 1.0 / factor
    return LinearOperator(H, "average_pool")


@dataclass(frozen=True)
class InverseProblem:
    operator: LinearOperator
    y: np.ndarray
    sigma_y: float

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if y.shape != (self.operator.shape[0],):
            raise ParameterError(
                f"y has shape {y.shape}, operator produces {self.operator.shape[0]} values"
            )
        if self.sigma_y < 0.0 or not np.isfinite(self.sigma_y):
            raise ParameterError(f"sigma_y must be finite and >= 0, got {self.sigma_y}")
        object.__setattr__(self, "y", y)


def degrade(
    op: LinearOperator, sigma_y: float, x0: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """y = H x0 + sigma_y z.  Draws nothing when sigma_y == 0."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[-1] != op.shape[1]:
        raise ParameterError(
            f"x0 trailing dim {x0.shape[-1]} != operator input dim {op.shape[1]}"
        )
    y = x0 @ op.matrix.T
    if sigma_y > 0.0:
        y = y + sigma_y * rng.standard_normal(y.shape)
    elif sigma_y < 0.0:
        raise ParameterError(f"sigma_y must be >= 0, got {sigma_y}")
    return y


def nested_inverse_sample(
    prior: GmmPrior,
    schedule: NoiseSchedule,
    plan: NestedPlan,
    problem: InverseProblem,
    rng: np.random.Generator,
    x_init: np.ndarray | None = None,
) -> Trace:
    """Nested run whose every inner denoiser call conditions on y.

    A rank-zero operator carries no information, so the measurement
    denoiser falls back to the unconditional posterior mean and the run
    reproduces plain nested sampling bit for bit.
    """
    if problem.operator.shape[1] != prior.dim:
        raise ParameterError(
            f"operator input dim {problem.operator.shape[1]} != prior dim {prior.dim}"
        )
    denoise = make_measurement_denoiser(prior, schedule, problem)
    return nested_sample(
        prior, schedule, plan, rng, x_init=x_init, denoise_override=denoise
    )


def psnr(x: np.ndarray, ref: np.ndarray, peak: float = 1.0) -> float:
    """10 log10(peak^2 / mse); +inf when the arrays coincide."""
    x = np.asarray(x, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if x.shape != ref.shape:
        raise ParameterError(f"shape mismatch {x.shape} vs {ref.shape}")
    if peak <= 0.0:
        raise ParameterError(f"peak must be positive, got {peak}")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))
