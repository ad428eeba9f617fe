"""Synthetic generators, experiment runner and report emission.

An experiment draws ``replications`` independent datasets, resolves the
tuning parameters (explicitly given or ``"auto"``), fits the aggregate,
evaluates its population risk on fresh data and compares it with the oracle
bound evaluated at the generating coefficient vector.
"""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .aggregate import AggregateResult, AggregationError, ewa_exact, ma_exact
from .langevin import LangevinConfig, LangevinError, default_step, ewa_langevin, ma_langevin
from .models import (Dataset, Dictionary, LossModel, QuadratureGrid, Truth, _canonical_kind,
                     coordinate_dictionary, phi_registry, risk, stump_dictionary,
                     trigonometric_dictionary)
from .prior import PriorConfig, PriorSamplingError
from .tuning import (TuningInputs, choose_beta, choose_tau, classif_bound, data_driven_R,
                     soi_bound)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "Report",
    "gen_sparse_regression",
    "gen_density",
    "gen_classification",
    "sparse_vector",
    "resolve_tuning",
    "fit",
    "run_experiment",
]

DENSITY_GRID = 4096
_CDF_GRID = 1 << 16
_DENSITY_RETRIES = 1000


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------

def sparse_vector(M: int, M_star: int, l1_norm: float, rng: np.random.Generator,
                  candidates=None) -> np.ndarray:
    """``M_star`` nonzeros at uniformly chosen positions, random signs, equal
    magnitudes ``l1_norm / M_star``."""
    if M_star > M:
        raise ValueError(f"M_star={M_star} exceeds M={M}")
    lam = np.zeros(M)
    if M_star == 0:
        return lam
    pool = np.arange(M) if candidates is None else np.asarray(candidates)
    idx = rng.choice(pool, size=M_star, replace=False)
    lam[idx] = rng.choice([-1.0, 1.0], size=M_star) * (l1_norm / M_star)
    return lam


def gen_sparse_regression(n: int, M: int, M_star: int, sigma: float, design: str = "rademacher",
                          rng: np.random.Generator | None = None, l1_norm: float = 1.0):
    """Linear model ``Y = X^T lambda* + sigma xi`` with a coordinate dictionary.

    Design coordinates are iid Rademacher or uniform on [-1, 1].
    """
    rng = np.random.default_rng() if rng is None else rng
    if M_star > M:
        raise ValueError(f"M_star={M_star} exceeds M={M}")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    lam = sparse_vector(M, M_star, l1_norm, rng)
    X = _design(design, n, M, rng)
    y = X @ lam + sigma * rng.standard_normal(n)
    truth = Truth("regression", lambda x, lam=lam: np.asarray(x)[:, :M] @ lam, lam)
    return Dataset(X, y), coordinate_dictionary(M), truth


def _design(design, n, M, rng):
    if design == "rademacher":
        return rng.choice([-1.0, 1.0], size=(n, M))
    if design == "uniform":
        return rng.uniform(-1.0, 1.0, size=(n, M))
    raise ValueError(f"unknown design {design!r}")


def gen_density(n: int, M: int, M_star: int, rng: np.random.Generator | None = None,
                coef: float = 0.1, grid: QuadratureGrid | None = None):
    """Density ``1 + sum of M_star trigonometric terms`` on [0, 1].

    Non-constant terms get magnitude ``coef`` and random signs; draws are
    repeated until the density is non-negative on a fine grid.  Samples come
    from inverse-CDF interpolation.  The returned ``lambda*`` includes the
    coefficient 1 on the constant function.
    """
    rng = np.random.default_rng() if rng is None else rng
    if M_star > M - 1:
        raise ValueError(f"M_star={M_star} exceeds the {M - 1} non-constant functions")
    dictionary = trigonometric_dictionary(M, grid)
    xs = (np.arange(_CDF_GRID) + 0.5) / _CDF_GRID
    Fx = dictionary.evaluate(xs)
    for _ in range(_DENSITY_RETRIES):
        lam = sparse_vector(M, M_star, coef * M_star, rng, candidates=np.arange(1, M))
        lam[0] = 1.0
        dens = Fx @ lam
        if dens.min() >= 0:
            break
    else:
        raise ValueError("could not draw a non-negative density; lower coef")
    cdf = np.concatenate([[0.0], np.cumsum(dens) / dens.sum()])
    edges = np.arange(_CDF_GRID + 1) / _CDF_GRID
    X = np.interp(rng.uniform(size=n), cdf, edges)
    truth = Truth("density", lambda x, lam=lam: dictionary.evaluate(x) @ lam, lam)
    return Dataset(X[:, None]), dictionary, truth


def gen_classification(n: int, M: int, M_star: int, rng: np.random.Generator | None = None,
                       l1_norm: float = 0.5):
    """Binary labels with ``eta(x) = clip(f_lambda*(x), -1, 1)`` over sign stumps."""
    rng = np.random.default_rng() if rng is None else rng
    if M_star > M:
        raise ValueError(f"M_star={M_star} exceeds M={M}")
    if l1_norm > 1:
        raise ValueError("||lambda*||_1 must not exceed 1")
    dictionary = stump_dictionary(M)
    lam = sparse_vector(M, M_star, l1_norm, rng)
    X = rng.uniform(-1.0, 1.0, size=(n, M))
    eta = np.clip(dictionary.evaluate(X) @ lam, -1.0, 1.0)
    y = np.where(rng.uniform(size=n) < 0.5 * (1.0 + eta), 1.0, -1.0)
    truth = Truth("classification",
                  lambda x, lam=lam: np.clip(dictionary.evaluate(x) @ lam, -1.0, 1.0), lam)
    return Dataset(X, y), dictionary, truth


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

_DEFAULT_R = {"density": 3.0, "classification": 1.0}


@dataclass
class ExperimentConfig:
    """Everything a simulation needs.

    ``R``, ``beta`` and ``tau`` may be numbers or ``"auto"``.  For regression
    ``R="auto"`` is the data-driven radius; for the other families it falls
    back to a fixed default (3 for density, 1 for classification).
    ``l1_norm`` (regression and classification truths) defaults to 1 and 0.5
    respectively, which keeps ``lambda*`` admissible for the oracle bound.
    ``langevin_steps`` fixes the number of Euler steps (``T = steps * h``)
    unless ``total_time`` is given.
    """

    model: str = "reg-squared"
    n: int = 100
    M: int = 50
    M_star: int = 3
    sigma: float = 0.5
    design: str = "rademacher"
    l1_norm: float | None = None
    coef: float = 0.1
    R: float | str = "auto"
    beta: float | str = "auto"
    tau: float | str = "auto"
    alpha: float = 0.0
    M_star_hat: int | None = None
    method: str = "langevin"
    aggregate: str = "ma"
    budget: int = 100_000
    grid_size: int = 401
    langevin_steps: int = 5000
    total_time: float | None = None
    h: float | None = None
    burn_in: float = 0.2
    replications: int = 10
    seed: int = 0
    eval_size: int = 10_000
    bound_form: str = "full"
    out_dir: str | None = None

    def __post_init__(self):
        try:
            self.model = _canonical_kind(self.model)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.model == "misclassification":
            raise ConfigError("misclassification cannot be aggregated")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.n < 0 or self.M < 1 or not 0 <= self.M_star <= self.M:
            raise ConfigError("need n >= 0, M >= 1 and 0 <= M_star <= M")
        if self.method not in ("quadrature", "rejection", "langevin"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.aggregate not in ("ma", "ewa"):
            raise ConfigError("aggregate must be 'ma' or 'ewa'")
        for name in ("R", "beta", "tau"):
            v = getattr(self, name)
            if isinstance(v, str) and v != "auto":
                raise ConfigError(f"{name} must be a number or 'auto'")
            if not isinstance(v, str) and not v > 0:
                raise ConfigError(f"{name} must be positive")
        if self.model == "reg-squared" and self.sigma < 0:
            raise ConfigError("sigma must be non-negative")
        if self.l1_norm is None:
            self.l1_norm = 0.5 if self.family == "classification" else 1.0
        if self.method in ("quadrature", "rejection") and self.alpha != 0:
            raise ConfigError("exact methods need alpha = 0")

    @property
    def family(self) -> str:
        if self.model == "reg-squared":
            return "regression"
        if self.model == "density-L2":
            return "density"
        return "classification"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# tuning, fitting and risk for one replication
# --------------------------------------------------------------------------

def _normalized_regression_dictionary(cfg: ExperimentConfig, dictionary: Dictionary):
    # coordinates are independent, centred, with E x_j^2 = 1 (Rademacher) or 1/3 (uniform)
    if cfg.design == "uniform":
        s = np.sqrt(3.0)
        return Dictionary("coordinate", cfg.M, s, scale=np.full(cfg.M, s), gram=np.eye(cfg.M))
    return Dictionary("coordinate", cfg.M, 1.0, gram=np.eye(cfg.M))


def resolve_tuning(cfg: ExperimentConfig, data: Dataset, dictionary: Dictionary):
    """Return ``(prior, beta, inputs)`` following the auto rules."""
    fam = cfg.family
    if fam == "regression":
        if cfg.R == "auto":
            R = data_driven_R(data.y, cfg.sigma**2, cfg.M_star_hat or max(cfg.M_star, 1))
        else:
            R = float(cfg.R)
    else:
        R = _DEFAULT_R[fam] if cfg.R == "auto" else float(cfg.R)
    if not R > 0:
        raise ValueError("resolved radius R is zero (responses smaller than the noise level)")
    trace = float(np.trace(dictionary.gram)) if dictionary.gram is not None else float(cfg.M)
    inputs = TuningInputs(n=data.n, M=cfg.M, R=R, trace_gram=trace, sigma2=cfg.sigma**2,
                          L=dictionary.sup_bound, L_phi=dictionary.sup_bound,
                          M_star=max(cfg.M_star, 1))
    beta = choose_beta(cfg.model, inputs) if cfg.beta == "auto" else float(cfg.beta)
    inputs = inputs.with_beta(beta)
    if cfg.tau == "auto":
        # the trace variant coincides with the plain rule for unit-norm dictionaries
        tau = choose_tau(inputs, use_trace=(fam == "regression"))
    else:
        tau = float(cfg.tau)
    prior = PriorConfig(tau, R, cfg.M, cfg.alpha)
    return prior, beta, inputs


def fit(data: Dataset, model: LossModel, dictionary: Dictionary, prior: PriorConfig,
        beta: float, method: str = "langevin", aggregate: str = "ma", seed: int = 0,
        budget: int = 100_000, grid_size: int = 401, langevin_steps: int = 5000,
        total_time: float | None = None, h: float | None = None,
        burn_in: float = 0.2) -> AggregateResult:
    """Fit the MA (or EWA) aggregate with the requested computation route."""
    if method == "langevin":
        step = h if h is not None else default_step(prior.tau)
        T = total_time if total_time is not None else langevin_steps * step
        lcfg = LangevinConfig(total_time=T, h=step, burn_in=burn_in, seed=seed)
        fn = ma_langevin if aggregate == "ma" else ewa_langevin
        return fn(data, model, dictionary, prior, beta, lcfg)
    fn = ma_exact if aggregate == "ma" else ewa_exact
    return fn(data, model, dictionary, prior, beta, method=method, budget=budget,
              rng=np.random.default_rng(seed), grid_size=grid_size)


def _generate(cfg: ExperimentConfig, rng):
    if cfg.family == "regression":
        return gen_sparse_regression(cfg.n, cfg.M, cfg.M_star, cfg.sigma, cfg.design, rng,
                                     cfg.l1_norm)
    if cfg.family == "density":
        return gen_density(cfg.n, cfg.M, cfg.M_star, rng, cfg.coef)
    return gen_classification(cfg.n, cfg.M, cfg.M_star, rng, cfg.l1_norm)


def _scalar_risk(model, lam, truth, eval_data, dictionary):
    r = risk(model, lam, truth, eval_data, dictionary)
    return r if isinstance(r, float) else r["excess_phi"]


def _bound(cfg, model, truth, eval_data, dictionary, prior, inputs):
    """Bound at the generating vector, or at its shrinkage onto the admissible set."""
    lam = truth.lambda_star
    slack = prior.radius - 2 * cfg.M * prior.tau
    l1 = float(np.abs(lam).sum())
    if cfg.M < 2 or slack <= 0:
        return float("nan"), float("nan"), float("nan")
    scale = 1.0 if l1 <= slack else slack / l1
    witness = lam * scale
    oracle = _scalar_risk(model, witness, truth, eval_data, dictionary)
    if cfg.family == "classification":
        if model.kind == "hinge":
            linear = prior.radius * dictionary.sup_bound <= 1.0
            b = classif_bound(oracle, witness, inputs, prior.tau, None, None,
                              linear_hinge=linear)
        else:
            spec = phi_registry(model.kind, prior.radius, dictionary.sup_bound)
            b = classif_bound(oracle, witness, inputs, prior.tau, spec, np.ones(cfg.M))
    else:
        b = soi_bound(oracle, witness, inputs, prior.tau, form=cfg.bound_form)
    return b, oracle, scale


_ROW_FIELDS = ["replication", "status", "risk", "excess_misclassification",
               "misclassification", "bound", "oracle_loss", "witness_scale", "beta", "tau",
               "R", "lambda_hat_l1", "min_occupancy", "error"]


def _replicate(cfg: ExperimentConfig, r: int, seq: np.random.SeedSequence) -> dict:
    data_ss, eval_ss, chain_ss = seq.spawn(3)
    row = {k: "" for k in _ROW_FIELDS}
    row["replication"] = r
    try:
        data, dictionary, truth = _generate(cfg, np.random.default_rng(data_ss))
        if cfg.family == "regression":
            dictionary = _normalized_regression_dictionary(cfg, dictionary)
        model = LossModel(cfg.model)
        prior, beta, inputs = resolve_tuning(cfg, data, dictionary)
        res = fit(data, model, dictionary, prior, beta, cfg.method, cfg.aggregate,
                  seed=int(chain_ss.generate_state(1)[0]), budget=cfg.budget,
                  grid_size=cfg.grid_size, langevin_steps=cfg.langevin_steps,
                  total_time=cfg.total_time, h=cfg.h, burn_in=cfg.burn_in)
        if cfg.family == "density":
            eval_data = QuadratureGrid.uniform_unit_interval(DENSITY_GRID)
        else:
            eval_rng = np.random.default_rng(eval_ss)
            eval_data = Dataset(_design("rademacher" if cfg.family == "regression"
                                        and cfg.design == "rademacher" else "uniform",
                                        cfg.eval_size, cfg.M, eval_rng))
        rk = risk(model, res.lambda_hat, truth, eval_data, dictionary)
        if isinstance(rk, dict):
            row["risk"] = rk["excess_phi"]
            row["excess_misclassification"] = rk["excess_misclassification"]
            row["misclassification"] = rk["misclassification"]
        else:
            row["risk"] = rk
        bound, oracle, scale = _bound(cfg, model, truth, eval_data, dictionary, prior, inputs)
        occ = res.diagnostics.get("ball_occupancy")
        row.update(status="ok", bound=bound, oracle_loss=oracle, witness_scale=scale,
                   beta=beta, tau=prior.tau, R=prior.radius,
                   lambda_hat_l1=float(np.abs(res.lambda_hat).sum()),
                   min_occupancy=float(np.min(occ)) if occ is not None else "")
    except (ValueError, AggregationError, LangevinError, PriorSamplingError) as exc:
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return row


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class Report:
    """Per-replication rows plus summary statistics and the resolved config."""

    config: dict
    rows: list[dict]
    summary: dict = field(default_factory=dict)

    @classmethod
    def build(cls, cfg: ExperimentConfig, rows: list[dict], wall_time: float) -> "Report":
        ok = [r for r in rows if r["status"] == "ok"]
        risks = np.array([r["risk"] for r in ok], dtype=float)
        bounds = np.array([r["bound"] for r in ok], dtype=float)
        summary = {
            "replications": len(rows),
            "succeeded": len(ok),
            "failed": len(rows) - len(ok),
            "mean_risk": float(risks.mean()) if len(ok) else float("nan"),
            "se_risk": float(risks.std(ddof=1) / np.sqrt(len(ok))) if len(ok) > 1 else 0.0,
        }
        finite = np.isfinite(bounds)
        summary["bound_excluded"] = int(np.sum(~finite))
        if finite.any():
            summary["mean_bound"] = float(bounds[finite].mean())
            summary["bound_satisfied"] = bool(
                summary["mean_risk"] + 3 * summary["se_risk"] <= summary["mean_bound"])
            summary["per_replication_bound_rate"] = float(np.mean(risks[finite] <= bounds[finite]))
        else:
            summary["mean_bound"] = float("nan")
            summary["bound_satisfied"] = None
        summary["wall_time"] = wall_time
        return cls(cfg.to_dict(), rows, summary)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_ROW_FIELDS)
        for r in self.rows:
            w.writerow([_fmt(r[k]) for k in _ROW_FIELDS])
        return buf.getvalue()

    def check_consistency(self, tol: float = 1e-12) -> None:
        risks = [float(r["risk"]) for r in self.rows if r["status"] == "ok"]
        if risks and abs(np.mean(risks) - self.summary["mean_risk"]) > tol:
            raise AssertionError("summary mean risk disagrees with the rows")

    def to_json(self) -> str:
        return json.dumps({"config": self.config, "summary": self.summary}, indent=2,
                          sort_keys=True)

    def write(self, out_dir) -> tuple[Path, Path]:
        self.check_consistency()
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / "replications.csv", out / "summary.json"
        csv_path.write_text(self.csv_text())
        json_path.write_text(self.to_json())
        return csv_path, json_path

    @property
    def all_failed(self) -> bool:
        return self.summary["succeeded"] == 0


def run_experiment(cfg: ExperimentConfig, progress=None) -> Report:
    """Run all replications; failed ones are recorded, not raised.

    Replication ``r`` uses the ``r``-th child of ``SeedSequence(cfg.seed)``,
    so any subset of replications can be re-run on its own.
    """
    t0 = time.perf_counter()
    rows = []
    for r, seq in enumerate(np.random.SeedSequence(cfg.seed).spawn(cfg.replications)):
        rows.append(_replicate(cfg, r, seq))
        if progress is not None:
            progress(rows[-1])
    report = Report.build(cfg, rows, time.perf_counter() - t0)
    if cfg.out_dir:
        report.write(cfg.out_dir)
    return report
