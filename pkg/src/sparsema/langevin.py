"""Langevin Monte Carlo for the stage posterior means.

Stage ``m`` targets ``p_m(lambda) ~ exp(V_m(lambda))`` restricted to the l1
ball, with

    V_m(lambda) = -S_m(lambda) / beta - sum_j 2 {log(tau^2 + lambda_j^2) + w huber(alpha lambda_j)}

(``w = 2`` by default, ``S_m`` the cumulative Q-loss).  The chain is the
unadjusted Euler scheme ``L_{k+1} = L_k + h grad V(L_k) + sqrt(2h) W_k`` from
``L_0 = 0``; the stage mean is the ratio of the in-ball time average of
``L_k`` to the in-ball occupancy.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numba
import numpy as np

from .aggregate import AggregateResult, cumulative_q
from .models import Dataset, Dictionary, LossModel, k_eps_grad, phi_functions
from .prior import PriorConfig, _prior_grad_unchecked, huber

__all__ = [
    "LangevinConfig",
    "LangevinError",
    "StagePotential",
    "potential",
    "grad_potential",
    "run_chain",
    "ratio_estimate",
    "run_stage_chains",
    "ma_langevin",
    "ewa_langevin",
    "default_step",
]

HUBER_WEIGHT = 2.0
_CHUNK = 256
_LOSS_IDS = {"phi-squared": 0, "phi-truncated": 1, "phi-boosting": 2, "phi-logit": 3,
             "hinge": 4}
_HINGE_LINEAR = 5


class LangevinError(RuntimeError):
    """A chain diverged or never visited the l1 ball."""


def default_step(tau: float) -> float:
    """``min(1e-3, tau^2 / 10)``: explicit Euler needs h below the prior curvature ``~ 1/tau^2``."""
    return min(1e-3, tau**2 / 10.0)


@dataclass(frozen=True)
class LangevinConfig:
    """Euler-chain settings.

    ``h=None`` selects :func:`default_step` from the prior scale.  ``burn_in``
    is the fraction of the ``[T/h]`` steps discarded.  Stage chains are
    seeded from ``seed`` by stage index; ``max_chains_parallel`` bounds how
    many stage chains advance together (memory only, results do not change).
    """

    total_time: float
    h: float | None = None
    burn_in: float = 0.2
    seed: int = 0
    max_chains_parallel: int | None = None
    dump_path: str | None = None

    def __post_init__(self):
        if self.h is not None and not self.h > 0:
            raise ValueError("h must be positive")
        if not 0 <= self.burn_in < 1:
            raise ValueError("burn_in must lie in [0, 1)")
        if not self.total_time > 0:
            raise ValueError("total_time must be positive")
        if self.h is not None and self.n_steps(self.h) < 10:
            raise ValueError("need at least 10 Euler steps")

    def step(self, tau: float | None = None) -> float:
        if self.h is not None:
            return self.h
        if tau is None:
            raise ValueError("h is unset and no prior scale was given")
        return default_step(tau)

    def n_steps(self, h: float) -> int:
        # guard against T/h landing a hair below an integer
        return int(np.floor(self.total_time / h + 1e-9))


# --------------------------------------------------------------------------
# potentials
# --------------------------------------------------------------------------

def _prior_potential(lams, prior: PriorConfig, huber_weight: float):
    val = -np.sum(2.0 * np.log(prior.tau**2 + lams**2), axis=-1)
    if prior.alpha > 0:
        val = val - huber_weight * np.sum(huber(prior.alpha * lams), axis=-1)
    return val


def potential(lam, data: Dataset, model: LossModel, dictionary: Dictionary, beta: float,
              prior: PriorConfig, m: int, huber_weight: float = HUBER_WEIGHT) -> float:
    """``V_m(lambda)``; the hinge uses its ``K_eps`` smoothing."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (prior.dim,):
        raise ValueError(f"expected {prior.dim} coefficients, got {lam.shape}")
    smooth = model.kind == "hinge"
    lik = cumulative_q(data, model, dictionary, lam, m, smoothed=smooth)
    return float(-lik / beta + _prior_potential(lam, prior, huber_weight))


class StagePotential:
    """Vectorized ``V_m`` and its gradient for a batch of stages.

    Sufficient statistics are accumulated once: cumulative Gram matrices for
    regression, cumulative feature sums for density, and the raw feature
    matrix for the classification losses.
    """

    def __init__(self, data: Dataset, model: LossModel, dictionary: Dictionary,
                 beta: float, prior: PriorConfig, stages, huber_weight: float = HUBER_WEIGHT,
                 hinge_linear: bool = False):
        if dictionary.M != prior.dim:
            raise ValueError("dictionary size and prior dimension differ")
        if not beta > 0:
            raise ValueError("beta must be positive")
        self.model, self.prior, self.beta = model, prior, float(beta)
        self.huber_weight = huber_weight
        self.stages = np.atleast_1d(np.asarray(stages, dtype=np.int64))
        if np.any(self.stages < 0) or np.any(self.stages > data.n):
            raise ValueError("stage index out of range")
        self.kind = model.kind
        self.hinge_linear = bool(hinge_linear)
        if self.hinge_linear and self.kind != "hinge":
            raise ValueError("the linear shortcut applies to the hinge only")
        F = dictionary.evaluate(data.X)
        self.F = np.ascontiguousarray(F)
        M = prior.dim
        if self.kind == "reg-squared":
            y = data.y
            outer = np.einsum("ni,nj->nij", F, F)
            G = np.concatenate([np.zeros((1, M, M)), np.cumsum(outer, axis=0)])
            b = np.concatenate([np.zeros((1, M)), np.cumsum(F * y[:, None], axis=0)])
            c = np.concatenate([[0.0], np.cumsum(y**2)])
            self._G, self._b, self._c = G[self.stages], b[self.stages], c[self.stages]
        elif self.kind == "density-L2":
            if dictionary.gram is None:
                raise ValueError("density-L2 needs the Gram matrix")
            self._gram = dictionary.gram
            s = np.concatenate([np.zeros((1, M)), np.cumsum(F, axis=0)])
            self._s = s[self.stages]
        else:
            if data.y is None:
                raise ValueError("classification needs labels")
            self.y = np.ascontiguousarray(data.y)
            self._mask = np.arange(data.n)[None, :] < self.stages[:, None]
            self._a = np.concatenate([np.zeros((1, M)),
                                      np.cumsum(F * self.y[:, None], axis=0)])[self.stages]

    @property
    def is_affine(self) -> bool:
        return self.kind in ("reg-squared", "density-L2")

    def affine_terms(self):
        """``(A, c)`` with likelihood gradient ``A_s lambda + c_s`` per stage."""
        if self.kind == "reg-squared":
            return -2.0 / self.beta * self._G, 2.0 / self.beta * self._b
        if self.kind == "density-L2":
            A = -2.0 / self.beta * self.stages[:, None, None] * self._gram[None]
            return A, 2.0 / self.beta * self._s
        raise ValueError("not an affine-gradient model")

    def _check(self, lams):
        lams = np.asarray(lams, dtype=float)
        if lams.shape != (len(self.stages), self.prior.dim):
            raise ValueError(f"expected shape {(len(self.stages), self.prior.dim)}, got {lams.shape}")
        return lams

    def value(self, lams) -> np.ndarray:
        lams = self._check(lams)
        if self.kind == "reg-squared":
            cum = (np.einsum("si,sij,sj->s", lams, self._G, lams)
                   - 2 * np.einsum("si,si->s", self._b, lams) + self._c)
        elif self.kind == "density-L2":
            cum = (self.stages * np.einsum("si,ij,sj->s", lams, self._gram, lams)
                   - 2 * np.einsum("si,si->s", self._s, lams))
        else:
            margin = self.y[None, :] * (lams @ self.F.T)
            if self.kind == "hinge":
                from .models import k_eps
                q = k_eps(1.0 - margin, self.model.eps)
            else:
                q = phi_functions(self.kind)[0](-margin)
            cum = np.sum(q * self._mask, axis=1)
        return -cum / self.beta + _prior_potential(lams, self.prior, self.huber_weight)

    def grad(self, lams) -> np.ndarray:
        lams = self._check(lams)
        if self.is_affine:
            A, c = self.affine_terms()
            g = np.einsum("sij,sj->si", A, lams) + c
        else:
            margin = self.y[None, :] * (lams @ self.F.T)
            if self.kind == "hinge":
                if self.hinge_linear:
                    d = (margin < 1.0).astype(float)
                else:
                    d = k_eps_grad(1.0 - margin, self.model.eps)
            else:
                d = phi_functions(self.kind)[1](-margin)
            g = ((d * self._mask) * self.y[None, :]) @ self.F / self.beta
            if self.hinge_linear:
                inside = np.abs(lams).sum(axis=1) <= self.prior.radius
                g[inside] = self._a[inside] / self.beta
        return g + _prior_grad_unchecked(lams, self.prior.tau, self.prior.alpha,
                                         self.huber_weight)


def grad_potential(lam, data: Dataset, model: LossModel, dictionary: Dictionary, beta: float,
                   prior: PriorConfig, m: int, huber_weight: float = HUBER_WEIGHT) -> np.ndarray:
    """Analytic gradient of :func:`potential` at one stage."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (prior.dim,):
        raise ValueError(f"expected {prior.dim} coefficients, got {lam.shape}")
    sp = StagePotential(data, model, dictionary, beta, prior, [m], huber_weight)
    return sp.grad(lam[None, :])[0]


# --------------------------------------------------------------------------
# generic chain and estimator
# --------------------------------------------------------------------------

def run_chain(grad, cfg: LangevinConfig, dim: int, rng: np.random.Generator,
              x0=None, h: float | None = None) -> np.ndarray:
    """Euler chain for an arbitrary drift ``grad(x)``; returns all ``[T/h]`` states.

    ``x0`` may be a stack of starting points (shape (S, dim)), in which case
    the chains share the drift function and get independent noise.
    """
    h = cfg.step() if h is None else h
    K = cfg.n_steps(h)
    if K < 10:
        raise ValueError("need at least 10 Euler steps")
    x = np.zeros(dim) if x0 is None else np.array(x0, dtype=float)
    states = np.empty((K,) + x.shape)
    sq = np.sqrt(2.0 * h)
    for start in range(0, K, _CHUNK):
        noise = rng.standard_normal((min(_CHUNK, K - start),) + x.shape)
        for k in range(len(noise)):
            states[start + k] = x
            with np.errstate(over="ignore", invalid="ignore"):
                x = x + h * grad(x) + sq * noise[k]
            if not np.all(np.isfinite(x)):
                raise LangevinError(f"non-finite state at step {start + k + 1}; reduce h")
    return states


def ratio_estimate(states, R: float, burn_in: float = 0.0):
    """Ball-restricted time average over occupancy, and the occupancy itself."""
    states = np.asarray(states, dtype=float)
    if not 0 <= burn_in < 1:
        raise ValueError("burn_in must lie in [0, 1)")
    kept = states[int(np.floor(burn_in * len(states))):]
    inside = np.abs(kept).sum(axis=-1) <= R
    occ = inside.mean(axis=0)
    if np.any(occ == 0):
        raise LangevinError("no post-burn-in state inside the l1 ball")
    avg = np.sum(kept * inside[..., None], axis=0) / len(kept)
    return avg / occ[..., None], occ


# --------------------------------------------------------------------------
# compiled Euler kernels over a batch of stage chains
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _prior_drift(lj, tau2, alpha, hw):
    g = -4.0 * lj / (tau2 + lj * lj)
    if alpha > 0.0:
        t = alpha * lj
        if abs(t) <= 1.0:
            g -= hw * alpha * 2.0 * t
        else:
            g -= hw * alpha * 2.0 * np.sign(t)
    return g


@numba.njit(cache=True)
def _affine_chunk(L, A, c, tau2, alpha, hw, h, noise, R, count_from, k0, sumL, cnt):
    S, M = L.shape
    g = np.empty(M)
    for k in range(noise.shape[0]):
        record = k0 + k >= count_from
        for s in range(S):
            if record:
                l1 = 0.0
                for j in range(M):
                    l1 += abs(L[s, j])
                if l1 <= R:
                    cnt[s] += 1
                    for j in range(M):
                        sumL[s, j] += L[s, j]
            for j in range(M):
                acc = c[s, j]
                for i in range(M):
                    acc += A[s, j, i] * L[s, i]
                g[j] = acc + _prior_drift(L[s, j], tau2, alpha, hw)
            for j in range(M):
                v = L[s, j] + h * g[j] + noise[k, s, j]
                if not np.isfinite(v):
                    return k0 + k + 1, s
                L[s, j] = v
    return -1, -1


@numba.njit(cache=True)
def _margin_chunk(L, F, y, mstage, loss_id, eps, inv_beta, a_lin, tau2, alpha, hw, h,
                  noise, R, count_from, k0, sumL, cnt):
    S, M = L.shape
    g = np.empty(M)
    for k in range(noise.shape[0]):
        record = k0 + k >= count_from
        for s in range(S):
            l1 = 0.0
            for j in range(M):
                l1 += abs(L[s, j])
            inside = l1 <= R
            if record and inside:
                cnt[s] += 1
                for j in range(M):
                    sumL[s, j] += L[s, j]
            if loss_id == 5 and inside:
                for j in range(M):
                    g[j] = a_lin[s, j] * inv_beta
            else:
                for j in range(M):
                    g[j] = 0.0
                for i in range(mstage[s]):
                    f = 0.0
                    for j in range(M):
                        f += F[i, j] * L[s, j]
                    u = -y[i] * f
                    if loss_id == 0:
                        d = 2.0 * (1.0 + u)
                    elif loss_id == 1:
                        d = 2.0 * max(1.0 + u, 0.0)
                    elif loss_id == 2:
                        d = np.exp(u)
                    elif loss_id == 3:
                        if u >= 0:
                            d = 1.0 / (1.0 + np.exp(-u))
                        else:
                            e = np.exp(u)
                            d = e / (1.0 + e)
                    elif loss_id == 4:
                        z = 1.0 + u
                        d = z / np.sqrt(eps * eps + z * z) if z > 0 else 0.0
                    else:
                        d = 1.0 if 1.0 + u > 0 else 0.0
                    coef = inv_beta * y[i] * d
                    if coef != 0.0:
                        for j in range(M):
                            g[j] += coef * F[i, j]
            for j in range(M):
                g[j] += _prior_drift(L[s, j], tau2, alpha, hw)
            for j in range(M):
                v = L[s, j] + h * g[j] + noise[k, s, j]
                if not np.isfinite(v):
                    return k0 + k + 1, s
                L[s, j] = v
    return -1, -1


def _stage_rngs(seed: int, stages) -> list[np.random.Generator]:
    root = np.random.SeedSequence(seed)
    return [np.random.default_rng(np.random.SeedSequence(root.entropy, spawn_key=(int(m),)))
            for m in stages]


def run_stage_chains(sp: StagePotential, cfg: LangevinConfig, rngs=None):
    """Run one Euler chain per stage of ``sp`` and return ``(means, occupancy, n_steps, h)``.

    Each chain draws its noise from its own generator, so results do not
    depend on how stages are batched.
    """
    prior = sp.prior
    h = cfg.step(prior.tau)
    K = cfg.n_steps(h)
    if K < 10:
        raise ValueError("need at least 10 Euler steps")
    count_from = int(np.floor(cfg.burn_in * K))
    S, M = len(sp.stages), prior.dim
    rngs = _stage_rngs(cfg.seed, sp.stages) if rngs is None else rngs
    batch = cfg.max_chains_parallel or S
    means = np.empty((S, M))
    occ = np.empty(S)
    sq = np.sqrt(2.0 * h)
    tau2 = prior.tau**2
    dump = [] if cfg.dump_path else None
    if sp.is_affine:
        A_all, c_all = sp.affine_terms()
    else:
        loss_id = _HINGE_LINEAR if sp.hinge_linear else _LOSS_IDS[sp.kind]
    for b0 in range(0, S, batch):
        idx = slice(b0, min(b0 + batch, S))
        nb = idx.stop - idx.start
        L = np.zeros((nb, M))
        sumL = np.zeros((nb, M))
        cnt = np.zeros(nb, dtype=np.int64)
        if sp.is_affine:
            A, c = np.ascontiguousarray(A_all[idx]), np.ascontiguousarray(c_all[idx])
        else:
            mstage = np.ascontiguousarray(sp.stages[idx])
            a_lin = np.ascontiguousarray(sp._a[idx])
        for k0 in range(0, K, _CHUNK):
            steps = min(_CHUNK, K - k0)
            noise = np.stack([rngs[b0 + s].standard_normal((steps, M)) for s in range(nb)],
                             axis=1)
            noise *= sq
            if dump is not None:
                dump.append(_trajectory_rows(L, k0, b0, prior.radius))
            if sp.is_affine:
                bad, bad_s = _affine_chunk(L, A, c, tau2, prior.alpha, sp.huber_weight, h,
                                           noise, prior.radius, count_from, k0, sumL, cnt)
            else:
                bad, bad_s = _margin_chunk(L, sp.F, sp.y, mstage, loss_id, sp.model.eps,
                                           1.0 / sp.beta, a_lin, tau2, prior.alpha,
                                           sp.huber_weight, h, noise, prior.radius,
                                           count_from, k0, sumL, cnt)
            if bad >= 0:
                raise LangevinError(f"stage m={int(sp.stages[b0 + bad_s])}: non-finite state "
                                    f"at step {bad}; reduce h (currently {h:g})")
        kept = K - count_from
        if np.any(cnt == 0):
            s = int(np.flatnonzero(cnt == 0)[0])
            raise LangevinError(f"stage m={int(sp.stages[b0 + s])}: chain never entered "
                                f"the l1 ball after burn-in")
        means[idx] = sumL / cnt[:, None]
        occ[idx] = cnt / kept
    if dump is not None:
        _write_dump(cfg.dump_path, dump, M)
    return means, occ, K, h


def _trajectory_rows(L, k0, b0, R):
    # start-of-chunk states only; a full dump would multiply memory by the chunk length
    inside = np.abs(L).sum(axis=1) <= R
    return [(k0, b0 + s, int(inside[s]), *L[s]) for s in range(len(L))]


def _write_dump(path, chunks, M):
    rows = [r for chunk in chunks for r in chunk]
    header = "step,chain,in_ball," + ",".join(f"l{j}" for j in range(M))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for step, chain, inside, *coords in rows:
            fh.write(f"{step},{chain},{inside}," + ",".join(repr(float(v)) for v in coords))
            fh.write("\n")


def _hinge_linear_default(model, dictionary, prior):
    return model.kind == "hinge" and prior.radius * dictionary.sup_bound <= 1.0


def _langevin(data, model, dictionary, prior, beta, cfg, stages, hinge_linear):
    if hinge_linear is None:
        hinge_linear = _hinge_linear_default(model, dictionary, prior)
    t0 = time.perf_counter()
    sp = StagePotential(data, model, dictionary, beta, prior, stages,
                        hinge_linear=hinge_linear)
    means, occ, K, h = run_stage_chains(sp, cfg)
    diag = {"stage_means": means, "ball_occupancy": occ, "n_steps": K, "h": h,
            "total_time": cfg.total_time, "hinge_linear": bool(hinge_linear),
            "wall_time": time.perf_counter() - t0}
    return means, diag


def ma_langevin(data: Dataset, model: LossModel, dictionary: Dictionary, prior: PriorConfig,
                beta: float, cfg: LangevinConfig,
                hinge_linear: bool | None = None) -> AggregateResult:
    """Mirror-averaging aggregate with one Langevin chain per stage ``m = 0..n``.

    For the hinge with ``R * sup|phi| <= 1`` the in-ball drift is the exact,
    linear hinge drift (``hinge_linear``); otherwise the hinge is smoothed.
    """
    means, diag = _langevin(data, model, dictionary, prior, beta, cfg,
                            np.arange(data.n + 1), hinge_linear)
    return AggregateResult(means.mean(axis=0), "langevin", diag)


def ewa_langevin(data: Dataset, model: LossModel, dictionary: Dictionary, prior: PriorConfig,
                 beta: float, cfg: LangevinConfig,
                 hinge_linear: bool | None = None) -> AggregateResult:
    """Single full-sample chain: the non-averaged aggregate."""
    means, diag = _langevin(data, model, dictionary, prior, beta, cfg,
                            np.array([data.n]), hinge_linear)
    return AggregateResult(means[0], "langevin", diag)
