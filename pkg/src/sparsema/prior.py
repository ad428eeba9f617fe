"""Sparsity prior: truncated product of scaled Student t(3) densities.

The prior on ``lambda in R^M`` has unnormalized density

    prod_j (tau^2 + lambda_j^2)^(-2) * exp(-w * huber(alpha * lambda_j))

restricted to the l1 ball of radius ``R``.  ``alpha = 0`` gives the plain
sparsity prior; ``alpha > 0`` is the Huber-modified variant used to make the
Langevin diffusion geometrically ergodic.  Normalizing constants are never
computed: every estimator downstream is a ratio.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PriorConfig",
    "PriorSamplingError",
    "huber",
    "huber_grad",
    "log_density_unnorm",
    "grad_log_density",
    "sample",
    "sample_counting",
    "tail_mass_bound",
    "MAX_ATTEMPTS_PER_SAMPLE",
]

MAX_ATTEMPTS_PER_SAMPLE = 1_000_000


class PriorSamplingError(RuntimeError):
    """Rejection sampling of the truncated prior did not terminate."""


@dataclass(frozen=True)
class PriorConfig:
    """Parameters of the sparsity prior.

    Attributes:
        tau: prior scale (> 0).
        radius: l1-ball radius R (> 0).
        dim: number of coefficients M (>= 1).
        alpha: Huber scale; 0 selects the plain prior.
    """

    tau: float
    radius: float
    dim: int
    alpha: float = 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")

    @property
    def admits_soi(self) -> bool:
        """True when ``R > 2 M tau`` (needed by the sparsity oracle inequality)."""
        return self.dim >= 2 and self.radius > 2 * self.dim * self.tau

    def with_alpha(self, alpha: float) -> "PriorConfig":
        return PriorConfig(self.tau, self.radius, self.dim, alpha)


def huber(t):
    """Huber function ``t^2`` on ``|t| <= 1`` and ``2|t| - 1`` outside."""
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    out = np.where(a <= 1.0, t * t, 2.0 * a - 1.0)
    return out if out.ndim else float(out)


def huber_grad(t):
    """Derivative of :func:`huber`: ``2t`` inside, ``2 sign(t)`` outside."""
    t = np.asarray(t, dtype=float)
    out = np.where(np.abs(t) <= 1.0, 2.0 * t, 2.0 * np.sign(t))
    return out if out.ndim else float(out)


def _check_dim(lam, cfg: PriorConfig) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1] != cfg.dim:
        raise ValueError(f"expected {cfg.dim} coefficients, got shape {lam.shape}")
    return lam


def log_density_unnorm(lam, cfg: PriorConfig, huber_weight: float = 1.0):
    """Unnormalized log prior density; ``-inf`` outside the l1 ball.

    ``lam`` may be a single vector or a stack of vectors along the last axis.
    ``huber_weight`` multiplies the Huber term (1 for the modified prior, 2
    for the convention of the Langevin potential).
    """
    lam = _check_dim(lam, cfg)
    val = -np.sum(2.0 * np.log(cfg.tau**2 + lam**2), axis=-1)
    if cfg.alpha > 0:
        val = val - huber_weight * np.sum(huber(cfg.alpha * lam), axis=-1)
    inside = np.sum(np.abs(lam), axis=-1) <= cfg.radius
    out = np.where(inside, val, -np.inf)
    return out if out.ndim else float(out)


def grad_log_density(lam, cfg: PriorConfig, huber_weight: float = 1.0) -> np.ndarray:
    """Gradient of :func:`log_density_unnorm` in the interior of the ball."""
    lam = _check_dim(lam, cfg)
    if np.any(np.sum(np.abs(lam), axis=-1) >= cfg.radius):
        raise ValueError("gradient is defined only strictly inside the l1 ball")
    return _prior_grad_unchecked(lam, cfg.tau, cfg.alpha, huber_weight)


def _prior_grad_unchecked(lam, tau, alpha, huber_weight):
    g = -4.0 * lam / (tau**2 + lam**2)
    if alpha > 0:
        g = g - huber_weight * alpha * huber_grad(alpha * lam)
    return g


def sample(cfg: PriorConfig, rng: np.random.Generator, size: int | None = None,
           max_attempts_per_sample: int = MAX_ATTEMPTS_PER_SAMPLE) -> np.ndarray:
    """Exact draws from the plain prior (``alpha == 0``).

    Coordinates are ``tau * T / sqrt(3)`` with ``T ~ t(3)``; whole vectors are
    rejected until they fall in the l1 ball.  Returns shape ``(dim,)`` when
    ``size`` is None, else ``(size, dim)``.
    """
    draws, _ = sample_counting(cfg, rng, 1 if size is None else int(size),
                               max_attempts_per_sample)
    return draws[0] if size is None else draws


def sample_counting(cfg: PriorConfig, rng: np.random.Generator, size: int,
                    max_attempts_per_sample: int = MAX_ATTEMPTS_PER_SAMPLE):
    """Like :func:`sample` but also returns the number of attempted vectors."""
    if cfg.alpha != 0:
        raise ValueError("exact sampling is only available for alpha = 0")
    scale = cfg.tau / np.sqrt(3.0)
    cap = max_attempts_per_sample * max(size, 1)
    out = np.empty((size, cfg.dim))
    filled = attempts = 0
    while filled < size:
        if attempts >= cap:
            raise PriorSamplingError(
                f"accepted {filled}/{size} draws after {attempts} attempts; "
                f"radius {cfg.radius} is too small for dim*tau = {cfg.dim * cfg.tau}")
        batch = min(max(2 * (size - filled), 1024), cap - attempts)
        draws = scale * rng.standard_t(3, size=(batch, cfg.dim))
        attempts += batch
        ok = draws[np.sum(np.abs(draws), axis=1) <= cfg.radius]
        take = min(len(ok), size - filled)
        out[filled:filled + take] = ok[:take]
        filled += take
    return out, attempts


def tail_mass_bound(M: int, s: float) -> float:
    """Chebyshev bound ``M / (s - M)^2`` on ``P(sum_j |U_j| >= s)``.

    ``U_j`` are iid with density ``2 / (pi (1 + u^2)^2)``.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if not s > M:
        raise ValueError(f"bound requires s > M (got s={s}, M={M})")
    return M / (s - M) ** 2
