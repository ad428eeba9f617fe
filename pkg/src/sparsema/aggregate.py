"""Exact mirror-averaging (MA) and exponentially weighted (EWA) aggregates.

The MA coefficient vector is the average over stages ``m = 0..n`` of the
posterior means

    lambda_m = E_pi[lambda exp(-S_m(lambda)/beta)] / E_pi[exp(-S_m(lambda)/beta)]

where ``S_m`` is the cumulative Q-loss over the first ``m`` observations
(``S_0 = 0``).  Two independent routes compute these ratios at small
dimension: tensor-grid quadrature over the l1 ball (M <= 2) and
self-normalized weighting of exact prior draws (M <= 8).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import prior as _prior
from .models import Dataset, Dictionary, LossModel, q_matrix
from .prior import PriorConfig

__all__ = [
    "AggregateResult",
    "AggregationError",
    "cumulative_q",
    "cumulative_q_matrix",
    "ma_exact",
    "ewa_exact",
    "predict",
    "QUADRATURE_MAX_DIM",
    "REJECTION_MAX_DIM",
]

QUADRATURE_MAX_DIM = 2
REJECTION_MAX_DIM = 8
_CHUNK = 20_000


class AggregationError(RuntimeError):
    """The posterior weights degenerated or the method cannot be applied."""


@dataclass
class AggregateResult:
    """Aggregated coefficients plus per-stage diagnostics.

    ``diagnostics`` always holds ``stage_means`` (shape (n+1, M)); exact
    methods add ``ess`` per stage and ``ball_occupancy``, the Langevin route
    adds the per-stage in-ball fraction of the chains.
    """

    lambda_hat: np.ndarray
    method: str
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        diag = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.diagnostics.items()}
        return {"lambda_hat": self.lambda_hat.tolist(), "method": self.method,
                "diagnostics": diag}


def cumulative_q(data: Dataset, model: LossModel, dictionary: Dictionary, lam, m: int,
                 smoothed: bool = False) -> float:
    """``sum_{i <= m} Q(z_i, f_lambda)``; zero for ``m = 0``."""
    if not 0 <= m <= data.n:
        raise ValueError(f"stage m={m} outside [0, {data.n}]")
    if m == 0:
        return 0.0
    return float(q_matrix(model, data.head(m), lam, dictionary, smoothed).sum())


def cumulative_q_matrix(data: Dataset, model: LossModel, dictionary: Dictionary, lams,
                        smoothed: bool = False) -> np.ndarray:
    """Cumulative losses for all stages: shape (S, n+1), column 0 is zero."""
    lams = np.atleast_2d(lams)
    F = dictionary.evaluate(data.X)
    out = np.zeros((len(lams), data.n + 1))
    for start in range(0, len(lams), _CHUNK):
        block = q_matrix(model, data, lams[start:start + _CHUNK], dictionary, smoothed, F)
        np.cumsum(block, axis=1, out=out[start:start + _CHUNK, 1:])
    return out


def predict(dictionary: Dictionary, lambda_hat, x) -> np.ndarray:
    """``f_lambda(x) = sum_j lambda_j phi_j(x)`` for each row of ``x``."""
    return dictionary.evaluate(x) @ np.asarray(lambda_hat, dtype=float)


def _quadrature_nodes(cfg: PriorConfig, grid_size: int):
    axis = np.linspace(-cfg.radius, cfg.radius, grid_size)
    w1 = np.full(grid_size, axis[1] - axis[0])
    w1[[0, -1]] *= 0.5
    if cfg.dim == 1:
        nodes, w = axis[:, None], w1
    else:
        a, b = np.meshgrid(axis, axis, indexing="ij")
        nodes = np.column_stack([a.ravel(), b.ravel()])
        w = np.outer(w1, w1).ravel()
    # tolerance keeps boundary nodes of scaled grids consistently inside
    inside = np.abs(nodes).sum(axis=1) <= cfg.radius * (1 + 1e-9)
    nodes, w = nodes[inside], w[inside]
    logw = np.log(w) - np.sum(2.0 * np.log(cfg.tau**2 + nodes**2), axis=1)
    return nodes, logw, float(inside.mean())


def _stage_weights(log_base: np.ndarray, cumq: np.ndarray, beta: float) -> np.ndarray:
    """Normalized weights per stage, shape (S, n+1), columns sum to one."""
    with np.errstate(over="ignore"):
        logw = log_base[:, None] - cumq / beta
    top = np.max(logw, axis=0)
    if not np.all(np.isfinite(top)):
        bad = int(np.flatnonzero(~np.isfinite(top))[0])
        raise AggregationError(f"all weights vanished at stage m={bad}; beta too small?")
    w = np.exp(logw - top)
    w /= w.sum(axis=0)
    return w


def _stage_posterior(data, model, dictionary, cfg, beta, method, budget, rng, grid_size,
                     stages):
    if cfg.alpha != 0:
        raise AggregationError("exact aggregation needs the plain prior (alpha = 0)")
    if not beta > 0:
        raise ValueError("beta must be positive")
    t0 = time.perf_counter()
    if method == "quadrature":
        if cfg.dim > QUADRATURE_MAX_DIM:
            raise AggregationError(f"quadrature supports M <= {QUADRATURE_MAX_DIM}")
        nodes, log_base, occupancy = _quadrature_nodes(cfg, grid_size)
    elif method == "rejection":
        if cfg.dim > REJECTION_MAX_DIM:
            raise AggregationError(f"rejection supports M <= {REJECTION_MAX_DIM}")
        if rng is None:
            raise ValueError("rejection sampling needs a random generator")
        nodes, attempts = _prior.sample_counting(cfg, rng, int(budget))
        log_base = np.zeros(len(nodes))
        occupancy = len(nodes) / attempts
    else:
        raise ValueError(f"unknown exact method {method!r}")
    cumq = cumulative_q_matrix(data, model, dictionary, nodes)[:, stages]
    w = _stage_weights(log_base, cumq, beta)
    means = w.T @ nodes
    diag = {
        "stage_means": means,
        "ess": 1.0 / np.sum(w**2, axis=0),
        "ball_occupancy": occupancy,
        "weight_sums": w.sum(axis=0),
    }
    if method == "rejection":
        # delta-method standard error of the stage-averaged ratio estimator
        S = len(nodes)
        wt = S * w
        infl = (nodes * wt.sum(axis=1)[:, None] - wt @ means) / len(stages)
        diag["standard_error"] = infl.std(axis=0, ddof=1) / np.sqrt(S)
    else:
        diag["standard_error"] = np.zeros(cfg.dim)
    diag["wall_time"] = time.perf_counter() - t0
    return means, diag


def _check_dims(data, dictionary, cfg):
    if dictionary.M != cfg.dim:
        raise ValueError(f"dictionary has {dictionary.M} functions, prior dim is {cfg.dim}")


def ma_exact(data: Dataset, model: LossModel, dictionary: Dictionary, prior: PriorConfig,
             beta: float, method: str = "rejection", budget: int = 100_000,
             rng: np.random.Generator | None = None, grid_size: int = 401) -> AggregateResult:
    """Mirror-averaging aggregate by quadrature or prior-sample reweighting.

    ``budget`` is the number of prior draws for ``method="rejection"``;
    ``grid_size`` the nodes per axis for ``method="quadrature"``.  All stages
    share one pool of nodes so the stage average is a single weighted sum.
    """
    _check_dims(data, dictionary, prior)
    stages = np.arange(data.n + 1)
    means, diag = _stage_posterior(data, model, dictionary, prior, beta, method, budget,
                                   rng, grid_size, stages)
    return AggregateResult(means.mean(axis=0), method, diag)


def ewa_exact(data: Dataset, model: LossModel, dictionary: Dictionary, prior: PriorConfig,
              beta: float, method: str = "rejection", budget: int = 100_000,
              rng: np.random.Generator | None = None, grid_size: int = 401) -> AggregateResult:
    """Non-averaged aggregate: the posterior mean after all ``n`` observations."""
    _check_dims(data, dictionary, prior)
    means, diag = _stage_posterior(data, model, dictionary, prior, beta, method, budget,
                                   rng, grid_size, np.array([data.n]))
    return AggregateResult(means[0], method, diag)
