"""Invariant suites behind ``sparsema verify``.

Each suite runs with fixed seeds and returns a list of :class:`Check` rows.
The comparison targets are independent of the code under test wherever
possible: central finite differences, a quadrature oracle, closed-form
Ornstein-Uhlenbeck moments and a Chebyshev tail bound.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import prior as _prior
from .aggregate import ma_exact
from .langevin import LangevinConfig, grad_potential, ma_langevin, potential, run_chain
from .models import (Dataset, Dictionary, LossModel, QuadratureGrid, coordinate_dictionary,
                     q_grad, q_value, stump_dictionary, trigonometric_dictionary)
from .prior import PriorConfig
from .tuning import TuningInputs, choose_beta, choose_tau, classif_bound, soi_bound

__all__ = ["Check", "SUITES", "run_suite", "central_difference", "format_table",
           "two_oracle_problem"]


@dataclass
class Check:
    suite: str
    check: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


def central_difference(f, x, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        hj = step * max(1.0, abs(x[j]))
        e[j] = hj
        g[j] = (f(x + e) - f(x - e)) / (2 * hj)
    return g


def _rel_err(analytic, numeric) -> float:
    # relative to the gradient scale, floored at 1 so that near-zero gradients
    # are compared absolutely
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1.0))


# --------------------------------------------------------------------------
# gradients
# --------------------------------------------------------------------------

GRAD_TOL = 1e-6
_KINDS = ("reg-squared", "density-L2", "phi-squared", "phi-truncated", "phi-boosting",
          "phi-logit", "hinge")


def _random_ball_point(rng, cfg, fill=0.8):
    v = rng.standard_normal(cfg.dim)
    return v / np.abs(v).sum() * cfg.radius * fill * rng.uniform(0.05, 1.0)


def _problem(kind, rng, n=15, M=4):
    if kind == "density-L2":
        d = trigonometric_dictionary(M, QuadratureGrid.uniform_unit_interval(256))
        return Dataset(rng.uniform(size=(n, 1))), d
    if kind == "reg-squared":
        return Dataset(rng.uniform(-1, 1, (n, M)), rng.standard_normal(n)), coordinate_dictionary(M)
    X = rng.uniform(-1, 1, (n, M))
    y = rng.choice([-1.0, 1.0], n)
    if kind == "hinge":
        return Dataset(X, y), stump_dictionary(M)
    return Dataset(X, y), coordinate_dictionary(M)


def suite_gradients(points: int = 100, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    for alpha, w in ((0.0, 1.0), (0.7, 1.0), (0.7, 2.0)):
        cfg = PriorConfig(0.3, 2.0, 4, alpha)
        worst = 0.0
        for _ in range(points):
            lam = _random_ball_point(rng, cfg)
            g = _prior.grad_log_density(lam, cfg, huber_weight=w)
            fd = central_difference(lambda v: _prior.log_density_unnorm(v, cfg, w), lam)
            worst = max(worst, _rel_err(g, fd))
        out.append(Check("gradients", f"grad_log_density[alpha={alpha},w={w}]",
                         worst <= GRAD_TOL, worst, GRAD_TOL))
    for kind in _KINDS:
        model = LossModel(kind)
        data, d = _problem(kind, rng)
        worst = 0.0
        for _ in range(points):
            i = rng.integers(data.n)
            z = data.X[i] if kind == "density-L2" else (data.X[i], data.y[i])
            lam = rng.uniform(-1, 1, d.M)
            g = q_grad(model, z, lam, d)
            fd = central_difference(lambda v: q_value(model, z, v, d, smoothed=True), lam)
            worst = max(worst, _rel_err(g, fd))
        out.append(Check("gradients", f"q_grad[{kind}]", worst <= GRAD_TOL, worst, GRAD_TOL))
    for kind in _KINDS:
        model = LossModel(kind)
        data, d = _problem(kind, rng)
        cfg = PriorConfig(0.2, 1.5, d.M, 0.5)
        worst = 0.0
        for _ in range(points):
            m = int(rng.integers(data.n + 1))
            lam = _random_ball_point(rng, cfg, fill=1.5)
            g = grad_potential(lam, data, model, d, 3.0, cfg, m)
            fd = central_difference(lambda v: potential(v, data, model, d, 3.0, cfg, m), lam)
            worst = max(worst, _rel_err(g, fd))
        out.append(Check("gradients", f"grad_potential[{kind}]", worst <= GRAD_TOL, worst,
                         GRAD_TOL))
    return out


# --------------------------------------------------------------------------
# exact and Langevin oracles
# --------------------------------------------------------------------------

def two_oracle_problem(M: int, seed: int = 0, n: int = 20, sigma: float = 0.5, R: float = 2.0):
    """Small sparse regression used for oracle comparisons: ``lambda* = e_1``."""
    rng = np.random.default_rng(seed)
    X = rng.choice([-1.0, 1.0], size=(n, M))
    lam_star = np.zeros(M)
    lam_star[0] = 1.0
    y = X @ lam_star + sigma * rng.standard_normal(n)
    d = Dictionary("coordinate", M, 1.0, gram=np.eye(M))
    inputs = TuningInputs(n=n, M=M, R=R, trace_gram=float(M), sigma2=sigma**2, L_phi=1.0)
    beta = choose_beta("reg-squared", inputs)
    tau = choose_tau(inputs.with_beta(beta), use_trace=True)
    return Dataset(X, y), d, PriorConfig(tau, R, M), beta


def suite_oracles(seed: int = 0, langevin: bool = True, total_time: float = 200.0,
                  h: float = 1e-4) -> list[Check]:
    out = []
    model = LossModel("reg-squared")
    for M, grid in ((1, 4001), (2, 801)):
        data, d, cfg, beta = two_oracle_problem(M, seed)
        quad = ma_exact(data, model, d, cfg, beta, method="quadrature", grid_size=grid)
        rej = ma_exact(data, model, d, cfg, beta, method="rejection", budget=100_000,
                       rng=np.random.default_rng(seed + 1))
        se = rej.diagnostics["standard_error"]
        z = float(np.max(np.abs(quad.lambda_hat - rej.lambda_hat) / se))
        out.append(Check("oracles", f"quadrature_vs_rejection[M={M}]", z <= 3.0, z, 3.0,
                         f"quad={np.round(quad.lambda_hat, 5).tolist()} "
                         f"rej={np.round(rej.lambda_hat, 5).tolist()}"))
        if langevin:
            lres = ma_langevin(data, model, d, cfg, beta,
                               LangevinConfig(total_time=total_time, h=h, seed=seed + 2))
            tol = np.maximum(0.05 * np.abs(quad.lambda_hat), 0.01)
            ratio = float(np.max(np.abs(lres.lambda_hat - quad.lambda_hat) / tol))
            out.append(Check("oracles", f"langevin_vs_quadrature[M={M}]", ratio <= 1.0, ratio,
                             1.0, f"langevin={np.round(lres.lambda_hat, 5).tolist()}"))
    return out


# --------------------------------------------------------------------------
# bound identities
# --------------------------------------------------------------------------

def suite_bounds(seed: int = 0, draws: int = 200) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    worst_gap = -np.inf
    worst_trace = -np.inf
    monotone = True
    for _ in range(draws):
        M = int(rng.integers(2, 30))
        n = int(rng.integers(1, 500))
        R = rng.uniform(0.5, 5.0)
        beta = rng.uniform(0.5, 50.0)
        tr = rng.uniform(0.5, 2.0) * M
        inputs = TuningInputs(n=n, M=M, R=R, beta=beta, trace_gram=tr)
        tau = choose_tau(inputs, use_trace=True)
        lam = np.zeros(M)
        k = int(rng.integers(0, M + 1))
        lam[rng.choice(M, k, replace=False)] = rng.standard_normal(k)
        slack = R - 2 * M * tau
        if np.abs(lam).sum() > slack:
            lam *= slack / np.abs(lam).sum() * rng.uniform(0, 1)
        full = soi_bound(0.1, lam, inputs, tau, "full")
        l0 = soi_bound(0.1, lam, inputs, tau, "l0")
        worst_gap = max(worst_gap, full - l0)
        worst_trace = max(worst_trace, 4 * tau**2 * tr - 4 * beta / n)
        bigger = soi_bound(0.1, lam, inputs.with_beta(2 * beta), tau, "full")
        monotone &= bigger >= full
    out.append(Check("bounds", "full_form_le_l0_form", worst_gap <= 1e-12, worst_gap, 1e-12))
    out.append(Check("bounds", "trace_residual_le_4beta_over_n", worst_trace <= 1e-12,
                     worst_trace, 1e-12))
    out.append(Check("bounds", "nondecreasing_in_beta", bool(monotone), float(monotone), 1.0))
    # hinge excess bound decays like n^{-1/2} under the (1 + R L) sqrt(n / M*) temperature
    ns = np.array([1e2, 1e4, 1e6])
    excess = []
    for n in ns:
        inp = TuningInputs(n=int(n), M=10, R=1.0, L_phi=1.0, M_star=2)
        beta = choose_beta("hinge", inp)
        inp = inp.with_beta(beta)
        tau = 1e-9
        excess.append(classif_bound(0.0, np.zeros(10), inp, tau, None, None))
    slope = float(np.polyfit(np.log(ns), np.log(excess), 1)[0])
    out.append(Check("bounds", "hinge_rate_slope", abs(slope + 0.5) <= 0.05, slope, -0.5))
    return out


# --------------------------------------------------------------------------
# prior tails
# --------------------------------------------------------------------------

def suite_tails(draws: int = 100_000, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    for M in (1, 2, 3):
        # an effectively untruncated unit-scale prior: coordinates are the U_j
        cfg = PriorConfig(1.0, 1e12, M)
        s1 = np.abs(_prior.sample(cfg, rng, draws)).sum(axis=1)
        worst = -np.inf
        for s in range(2 * M + 1, 5 * M + 1):
            p = np.mean(s1 >= s)
            se = np.sqrt(max(p * (1 - p), 1.0 / draws) / draws)
            worst = max(worst, (p - _prior.tail_mass_bound(M, s)) / se)
        out.append(Check("tails", f"tail_bound[M={M}]", worst <= 3.0, worst, 3.0,
                         "max z-score of MC tail above the bound"))
    # truncated second moment of U against quadrature (U^2 itself has infinite variance)
    c = 10.0
    u = _prior.sample(PriorConfig(1.0, 1e12, 1), rng, draws)[:, 0]
    vals = np.where(np.abs(u) <= c, u**2, 0.0)
    exact = integrate.quad(lambda x: x**2 * 2 / (np.pi * (1 + x**2) ** 2), -c, c)[0]
    z = float(abs(vals.mean() - exact) / (vals.std() / np.sqrt(draws)))
    out.append(Check("tails", "truncated_second_moment", z <= 3.0, z, 3.0))
    return out


# --------------------------------------------------------------------------
# scale invariance
# --------------------------------------------------------------------------

def suite_scale(s: float = 3.0, seed: int = 0) -> list[Check]:
    data, d, cfg, beta = two_oracle_problem(2, seed)
    model = LossModel("reg-squared")
    base = ma_exact(data, model, d, cfg, beta, method="quadrature", grid_size=401)
    ds = Dictionary("coordinate", 2, s, scale=np.full(2, s), gram=s * s * np.eye(2))
    R = cfg.radius / s
    inputs = TuningInputs(n=data.n, M=2, R=R, trace_gram=float(np.trace(ds.gram)),
                          sigma2=0.25, L_phi=ds.sup_bound)
    beta_s = choose_beta("reg-squared", inputs)
    tau_s = choose_tau(inputs.with_beta(beta_s), use_trace=True)
    scaled = ma_exact(data, model, ds, PriorConfig(tau_s, R, 2), beta_s, method="quadrature",
                      grid_size=401)
    err = float(np.max(np.abs(scaled.lambda_hat - base.lambda_hat / s)))
    return [Check("scale", f"quadrature_scaling[s={s}]", err <= 1e-8, err, 1e-8),
            Check("scale", "tau_scaling", abs(tau_s - cfg.tau / s) <= 1e-12,
                  abs(tau_s - cfg.tau / s), 1e-12)]


# --------------------------------------------------------------------------
# Euler calibration
# --------------------------------------------------------------------------

def suite_euler(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    # Ornstein-Uhlenbeck: V = -|x|^2 / 2, stationary variance 1 (2 / (2 - h) for Euler)
    cfg = LangevinConfig(total_time=1000.0, h=1e-3)
    states = run_chain(lambda x: -x, cfg, 1, rng, x0=np.zeros((8, 1)))
    kept = states[len(states) // 5:]
    var = float(kept.var())
    out.append(Check("euler", "ou_stationary_variance", abs(var - 1) <= 0.1, var, 1.0))
    # zero drift: Var(L_k) = 2 h k
    cfg = LangevinConfig(total_time=0.1, h=1e-3)
    states = run_chain(lambda x: np.zeros_like(x), cfg, 10, rng, x0=np.zeros((1000, 10)))
    k = len(states) - 1
    ratio = float(states[k].var() / (2 * cfg.h * k))
    out.append(Check("euler", "random_walk_variance", abs(ratio - 1) <= 0.05, ratio, 1.0))
    return out


SUITES = {
    "gradients": suite_gradients,
    "oracles": suite_oracles,
    "bounds": suite_bounds,
    "tails": suite_tails,
    "scale": suite_scale,
    "euler": suite_euler,
}


def run_suite(name: str) -> list[Check]:
    if name == "all":
        return [c for fn in SUITES.values() for c in fn()]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
    return SUITES[name]()


def format_table(checks: list[Check]) -> str:
    lines = ["suite\tcheck\tstatus\tvalue\ttolerance\tdetail"]
    for c in checks:
        lines.append(f"{c.suite}\t{c.check}\t{'PASS' if c.passed else 'FAIL'}\t"
                     f"{c.value:.6g}\t{c.tolerance:.6g}\t{c.detail}")
    return "\n".join(lines)


def timed(name: str):
    t0 = time.perf_counter()
    checks = run_suite(name)
    return checks, time.perf_counter() - t0
