"""Tuning rules for (tau, beta, R) and evaluable sparsity oracle bounds."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .models import PhiSpec, _canonical_kind, phi_registry

__all__ = [
    "TuningInputs",
    "choose_tau",
    "choose_beta",
    "density_beta_grid",
    "data_driven_R",
    "soi_bound",
    "classif_bound",
]


@dataclass(frozen=True)
class TuningInputs:
    """Quantities the tuning rules and bounds draw on; unused ones may stay None."""

    n: int
    M: int
    R: float
    beta: float | None = None
    trace_gram: float | None = None
    sigma2: float | None = None
    L: float | None = None
    L_phi: float | None = None
    M_star: int | None = None

    def with_beta(self, beta: float) -> "TuningInputs":
        return replace(self, beta=beta)


def _positive(**kw):
    for name, v in kw.items():
        if v is None or not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


def choose_tau(inputs: TuningInputs, use_trace: bool = False) -> float:
    """``min(sqrt(beta / (M n)), R / (4M))``; with ``use_trace`` M is replaced
    by ``tr(Gram)`` inside the square root, which makes the aggregate invariant
    to an overall rescaling of the dictionary."""
    _positive(beta=inputs.beta, M=inputs.M, n=inputs.n, R=inputs.R)
    size = inputs.M
    if use_trace:
        _positive(trace_gram=inputs.trace_gram)
        size = inputs.trace_gram
    return float(min(np.sqrt(inputs.beta) / np.sqrt(size * inputs.n),
                     inputs.R / (4 * inputs.M)))


def density_beta_grid(R: float, L: float, num: int = 10_000,
                      upper: float | None = None) -> float:
    """Smallest beta on a log grid with
    ``(beta - 2R^2) exp(-4R(L + sqrt L)/beta) >= 2L + 4RL``."""
    _positive(R=R, L=L)
    upper = 1e6 * max(L, 1.0) if upper is None else upper
    betas = np.geomspace(2 * R**2, upper, num)[1:]
    lhs = (betas - 2 * R**2) * np.exp(-4 * R * (L + np.sqrt(L)) / betas)
    ok = np.flatnonzero(lhs >= 2 * L + 4 * R * L)
    if ok.size == 0:
        raise ValueError(f"no beta <= {upper:g} satisfies the density condition")
    return float(betas[ok[0]])


def choose_beta(kind: str, inputs: TuningInputs, *, sup_dev: float | None = None,
                noise_b: float = np.inf, density_shortcut: bool | None = None) -> float:
    """Temperature for each model family.

    * ``reg-squared``: ``2 sigma^2 + 2 (R L_phi + 1)^2`` (signal bounded by 1);
      with ``sup_dev`` (a bound on ``sup ||f_lambda - f||_inf``) the general
      rule ``max(2 sigma^2 + 2 sup_dev^2, 4 R L_phi / b)`` is used instead.
    * ``density-L2``: ``12 L`` (R = 1) or ``23 L`` (R = 2) when ``L >= 2``,
      otherwise the log-grid solution of the density condition.
      ``density_shortcut=True`` insists on the closed form, ``False`` forces
      the grid.
    * smooth phi-losses: ``beta_phi`` from :func:`phi_registry`.
    * ``hinge``: ``(1 + R L_phi) sqrt(n / M_star)``.
    """
    kind = _canonical_kind(kind)
    R = inputs.R
    if kind == "reg-squared":
        if inputs.sigma2 is None or inputs.sigma2 < 0:
            raise ValueError("regression beta needs sigma2 >= 0")
        _positive(L_phi=inputs.L_phi)
        if sup_dev is None:
            return float(2 * inputs.sigma2 + 2 * (R * inputs.L_phi + 1) ** 2)
        tail = 0.0 if np.isinf(noise_b) else 4 * R * inputs.L_phi / noise_b
        return float(max(2 * inputs.sigma2 + 2 * sup_dev**2, tail))
    if kind == "density-L2":
        _positive(L=inputs.L, R=R)
        closed = {1.0: 12.0, 2.0: 23.0}.get(float(R))
        if density_shortcut:
            if closed is None or inputs.L < 2:
                raise ValueError("closed-form density beta needs R in {1, 2} and L >= 2")
            return closed * inputs.L
        if density_shortcut is None and closed is not None and inputs.L >= 2:
            return closed * inputs.L
        return density_beta_grid(R, inputs.L)
    if kind == "hinge":
        _positive(L_phi=inputs.L_phi, n=inputs.n, M_star=inputs.M_star)
        return float((1 + R * inputs.L_phi) * np.sqrt(inputs.n / inputs.M_star))
    return phi_registry(kind, R, inputs.L_phi).beta_phi


def data_driven_R(responses, sigma2: float, M_star_hat: int) -> float:
    """``4 [ (M*/n) sum_i (Y_i^2 - sigma^2) ]_+^{1/2}``."""
    y = np.asarray(responses, dtype=float)
    if y.size < 1:
        raise ValueError("need at least one response")
    inner = M_star_hat / y.size * np.sum(y**2 - sigma2)
    return float(4.0 * np.sqrt(max(inner, 0.0)))


def _log_term(lambda_star, tau):
    return float(np.sum(np.log1p(np.abs(lambda_star) / tau)))


def _check_admissible(lambda_star, inputs: TuningInputs, tau: float):
    _positive(tau=tau, R=inputs.R, beta=inputs.beta)
    if inputs.M < 2:
        raise ValueError("oracle bounds need M >= 2")
    lam = np.asarray(lambda_star, dtype=float)
    if lam.shape != (inputs.M,):
        raise ValueError(f"lambda_star must have shape ({inputs.M},)")
    if not inputs.R > 2 * inputs.M * tau:
        raise ValueError(f"need R > 2 M tau ({inputs.R} vs {2 * inputs.M * tau})")
    slack = inputs.R - 2 * inputs.M * tau
    if np.abs(lam).sum() > slack * (1 + 1e-12):
        raise ValueError(f"||lambda*||_1 = {np.abs(lam).sum():.6g} exceeds R - 2 M tau = {slack:.6g}")
    return lam


def soi_bound(oracle_loss: float, lambda_star, inputs: TuningInputs, tau: float,
              form: str = "full") -> float:
    """Right-hand side of the sparsity oracle inequality at ``lambda_star``.

    ``form="full"`` uses ``sum_j log(1 + |lambda*_j| / tau)``; ``"l0"`` uses
    ``||lambda*||_0 log(1 + R / tau)``.  Residual: ``4 tau^2 tr(Gram) + beta/(n+1)``.
    """
    lam = _check_admissible(lambda_star, inputs, tau)
    _positive(trace_gram=inputs.trace_gram)
    beta, n = inputs.beta, inputs.n
    if form == "full":
        main = _log_term(lam, tau)
    elif form in ("l0", "l0-corollary"):
        main = np.count_nonzero(lam) * np.log1p(inputs.R / tau)
    else:
        raise ValueError(f"unknown form {form!r}")
    return float(oracle_loss + 4 * beta / (n + 1) * main
                 + 4 * tau**2 * inputs.trace_gram + beta / (n + 1))


def classif_bound(oracle_loss: float, lambda_star, inputs: TuningInputs, tau: float,
                  phi_spec: PhiSpec | None, phi_norms, *, linear_hinge: bool = False) -> float:
    """Oracle bound for classification.

    For a smooth loss (``phi_spec`` given) the residual is
    ``C_phi tau^2 sum_j ||phi_j||^2 + beta/(n+1)``.  For the hinge
    (``phi_spec=None``) it adds ``2(1+R L)^2 exp((1+R L)/beta) / beta`` and the
    residual ``4 tau L sqrt(M) + beta/(n+1)``; ``linear_hinge`` drops the
    ``4 tau L sqrt(M)`` part, valid when every ``f_lambda`` in the ball is
    bounded by 1 (binary dictionary, ``R L <= 1``).
    """
    lam = _check_admissible(lambda_star, inputs, tau)
    beta, n = inputs.beta, inputs.n
    main = oracle_loss + 4 * beta / (n + 1) * _log_term(lam, tau) + beta / (n + 1)
    if phi_spec is not None:
        return float(main + phi_spec.c_phi * tau**2 * float(np.sum(phi_norms)))
    _positive(L_phi=inputs.L_phi)
    rl = 1 + inputs.R * inputs.L_phi
    extra = 2 * rl**2 * np.exp(rl / beta) / beta
    if not linear_hinge:
        extra += 4 * tau * inputs.L_phi * np.sqrt(inputs.M)
    return float(main + extra)
