"""Datasets, dictionaries and per-model Q-functions.

Every model supplies a per-observation loss surrogate ``Q(z, g)`` whose
expectation equals the model's loss up to a term independent of ``g``:

* ``reg-squared``   -- ``(y - g(x))^2`` (regression, L2(P_X) loss)
* ``density-L2``    -- ``||g||^2_{mu,2} - 2 g(x)`` (integrated squared error)
* ``phi-*``         -- ``Phi(-y g(x))`` for the convex classification losses
* ``hinge``         -- ``max(1 - y g(x), 0)``

Candidates are linear: ``g = f_lambda = sum_j lambda_j phi_j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import expit, xlogy

__all__ = [
    "MODEL_KINDS",
    "SMOOTH_PHI_KINDS",
    "Dataset",
    "Dictionary",
    "QuadratureGrid",
    "LossModel",
    "PhiSpec",
    "Truth",
    "phi_registry",
    "phi_functions",
    "k_eps",
    "k_eps_grad",
    "q_matrix",
    "q_value",
    "q_grad",
    "normalize_dictionary",
    "phi_minimizer",
    "bayes_phi_risk",
    "risk",
    "coordinate_dictionary",
    "trigonometric_dictionary",
    "stump_dictionary",
]

SMOOTH_PHI_KINDS = ("phi-squared", "phi-truncated", "phi-boosting", "phi-logit")
MODEL_KINDS = ("reg-squared", "density-L2") + SMOOTH_PHI_KINDS + ("hinge",)
CLASSIFICATION_KINDS = SMOOTH_PHI_KINDS + ("hinge",)

_PHI_ALIASES = {
    "squared": "phi-squared",
    "truncated": "phi-truncated",
    "truncated-squared": "phi-truncated",
    "boosting": "phi-boosting",
    "logit": "phi-logit",
    "logit-boosting": "phi-logit",
}


def _canonical_kind(kind: str) -> str:
    kind = _PHI_ALIASES.get(kind, kind)
    if kind not in MODEL_KINDS and kind != "misclassification":
        raise ValueError(f"unknown model kind {kind!r}")
    return kind


# --------------------------------------------------------------------------
# data containers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """``n`` observations: covariates ``X`` of shape (n, d), optional responses."""

    X: np.ndarray
    y: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        object.__setattr__(self, "X", X)
        if self.y is not None:
            y = np.asarray(self.y, dtype=float).ravel()
            if len(y) != len(X):
                raise ValueError(f"{len(y)} responses for {len(X)} covariate rows")
            object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return len(self.X)

    def head(self, m: int) -> "Dataset":
        return Dataset(self.X[:m], None if self.y is None else self.y[:m])

    def to_csv(self, path) -> None:
        cols = [f"x{j}" for j in range(self.X.shape[1])]
        table = self.X
        if self.y is not None:
            cols.append("y")
            table = np.column_stack([self.X, self.y])
        np.savetxt(path, table, delimiter=",", header=",".join(cols), comments="",
                   fmt="%.17g")

    @classmethod
    def from_csv(cls, path, has_response: bool = True) -> "Dataset":
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if has_response:
            return cls(table[:, :-1], table[:, -1])
        return cls(table)


@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes and weights representing a reference measure ``mu``."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float).ravel())

    @classmethod
    def uniform_unit_interval(cls, size: int = 4096) -> "QuadratureGrid":
        # periodic rectangle rule: exact for trigonometric polynomials of degree < size
        return cls(np.arange(size) / size, np.full(size, 1.0 / size))


def _coordinate_features(X, M):
    X = X[:, :M]
    return np.where(np.abs(X) <= 1.0, X, 0.0)


def _trig_features(X, M):
    x = X[:, 0]
    out = np.empty((len(x), M))
    out[:, 0] = 1.0
    for j in range(1, M):
        k = (j + 1) // 2
        fn = np.cos if j % 2 else np.sin
        out[:, j] = np.sqrt(2.0) * fn(2 * np.pi * k * x)
    return out


def _stump_features(X, M):
    return np.where(X[:, :M] >= 0, 1.0, -1.0)


_FAMILIES: dict[str, Callable[[np.ndarray, int], np.ndarray]] = {
    "coordinate": _coordinate_features,
    "trigonometric": _trig_features,
    "stumps": _stump_features,
}


@dataclass(frozen=True)
class Dictionary:
    """A finite dictionary ``{phi_j}`` of ``M`` functions.

    Built-in families are ``coordinate`` (``phi_j(x) = x_j`` on ``[-1, 1]``),
    ``trigonometric`` (orthonormal Fourier basis on ``[0, 1]``) and ``stumps``
    (``sign(x_j)``).  ``family="custom"`` takes a vectorized ``func(X, M)``.
    ``scale`` multiplies the columns (set by :func:`normalize_dictionary`).
    """

    family: str
    M: int
    sup_bound: float
    scale: np.ndarray | None = None
    gram: np.ndarray | None = None
    func: Callable[[np.ndarray, int], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.family != "custom" and self.family not in _FAMILIES:
            raise ValueError(f"unknown dictionary family {self.family!r}")
        if self.family == "custom" and self.func is None:
            raise ValueError("custom dictionaries need func")
        if self.gram is not None:
            g = np.asarray(self.gram, dtype=float)
            if g.shape != (self.M, self.M):
                raise ValueError(f"gram must be {self.M}x{self.M}")
            if not np.allclose(g, g.T, atol=1e-10):
                raise ValueError("gram must be symmetric")
            object.__setattr__(self, "gram", 0.5 * (g + g.T))

    def evaluate(self, X) -> np.ndarray:
        """Feature matrix of shape (n, M)."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        base = self.func if self.family == "custom" else _FAMILIES[self.family]
        F = base(X, self.M)
        if self.scale is not None:
            F = F * self.scale
        return F

    def with_gram(self, points, weights=None) -> "Dictionary":
        """Attach the Gram matrix under the empirical (or weighted) measure."""
        F = self.evaluate(points)
        w = np.full(len(F), 1.0 / len(F)) if weights is None else np.asarray(weights)
        return replace(self, gram=(F * w[:, None]).T @ F)

    def describe(self) -> dict:
        return {"family": self.family, "M": self.M, "sup_bound": self.sup_bound,
                "scale": None if self.scale is None else self.scale.tolist()}


def coordinate_dictionary(M: int) -> Dictionary:
    return Dictionary("coordinate", M, 1.0)


def trigonometric_dictionary(M: int, grid: QuadratureGrid | None = None) -> Dictionary:
    d = Dictionary("trigonometric", M, np.sqrt(2.0) if M > 1 else 1.0)
    grid = grid or QuadratureGrid.uniform_unit_interval()
    return d.with_gram(grid.points, grid.weights)


def stump_dictionary(M: int) -> Dictionary:
    return Dictionary("stumps", M, 1.0)


def normalize_dictionary(dictionary: Dictionary, points, weights=None) -> Dictionary:
    """Rescale each ``phi_j`` to unit L2 norm under the reference measure.

    ``points`` is a reference sample (uniform weights) or quadrature nodes with
    ``weights``.  The result carries the Gram matrix of the rescaled family,
    which has unit diagonal.
    """
    F = dictionary.evaluate(points)
    w = np.full(len(F), 1.0 / len(F)) if weights is None else np.asarray(weights, float)
    norms = np.sqrt(w @ (F * F))
    if np.any(norms <= 0):
        bad = np.flatnonzero(norms <= 0).tolist()
        raise ValueError(f"dictionary columns {bad} have zero empirical norm")
    base_scale = np.ones(dictionary.M) if dictionary.scale is None else dictionary.scale
    out = replace(dictionary, scale=base_scale / norms,
                  sup_bound=dictionary.sup_bound / float(norms.min()), gram=None)
    Fn = F / norms
    gram = (Fn * w[:, None]).T @ Fn
    return replace(out, gram=gram)


# --------------------------------------------------------------------------
# classification losses
# --------------------------------------------------------------------------

class PhiSpec(NamedTuple):
    """Convex loss ``phi`` with its derivatives and constants ``beta_phi``, ``c_phi``."""

    kind: str
    phi: Callable
    dphi: Callable
    d2phi: Callable
    beta_phi: float
    c_phi: float


def _softplus(u):
    return np.logaddexp(0.0, u)


_PHI = {
    "phi-squared": (lambda u: (1.0 + u) ** 2,
                    lambda u: 2.0 * (1.0 + u),
                    lambda u: 2.0 * np.ones_like(u)),
    "phi-truncated": (lambda u: np.maximum(1.0 + u, 0.0) ** 2,
                      lambda u: 2.0 * np.maximum(1.0 + u, 0.0),
                      lambda u: 2.0 * (1.0 + u > 0)),
    "phi-boosting": (np.exp, np.exp, np.exp),
    "phi-logit": (_softplus, expit, lambda u: expit(u) * expit(-u)),
    "hinge": (lambda u: np.maximum(1.0 + u, 0.0),
              lambda u: (1.0 + u > 0).astype(float),
              lambda u: np.zeros_like(u)),
}


def phi_functions(kind: str):
    """``(phi, dphi, d2phi)`` for a classification kind (hinge included)."""
    return _PHI[_canonical_kind(kind)]


def phi_registry(kind: str, R: float, L_phi: float) -> PhiSpec:
    """Loss function and its constants for ``R * L_phi`` (Table of smooth losses)."""
    kind = _canonical_kind(kind)
    if kind not in SMOOTH_PHI_KINDS:
        raise ValueError(f"{kind!r} has no finite beta_phi; only smooth phi-losses qualify")
    if R < 0 or L_phi < 0:
        raise ValueError("R and L_phi must be non-negative")
    rl = R * L_phi
    if kind in ("phi-squared", "phi-truncated"):
        beta, c = 2.0 * (1.0 + rl) ** 2, 8.0
    elif kind == "phi-boosting":
        beta, c = np.exp(rl), 4.0 * np.exp(rl)
    else:
        beta, c = np.exp(rl), 4.0
    return PhiSpec(kind, *_PHI[kind], float(beta), float(c))


def k_eps(z, eps: float):
    """Smooth positive part ``(sqrt(eps^2 + z^2) - eps) 1(z > 0)``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    z = np.asarray(z, dtype=float)
    out = np.where(z > 0, np.hypot(eps, z) - eps, 0.0)
    return out if out.ndim else float(out)


def k_eps_grad(z, eps: float):
    z = np.asarray(z, dtype=float)
    out = np.where(z > 0, z / np.hypot(eps, z), 0.0)
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# Q-functions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LossModel:
    """Model kind plus its constants.

    ``eps`` is the hinge smoothing level used for gradients (Langevin drift);
    reported hinge risks always use the exact hinge.
    """

    kind: str
    eps: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "kind", _canonical_kind(self.kind))
        if self.kind == "misclassification":
            raise ValueError("misclassification loss cannot be aggregated")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def is_classification(self) -> bool:
        return self.kind in CLASSIFICATION_KINDS


def _require(model: LossModel, data: Dataset, dictionary: Dictionary):
    if model.kind == "density-L2":
        if dictionary.gram is None:
            raise ValueError("density-L2 needs the dictionary Gram matrix under mu")
    elif data.y is None:
        raise ValueError(f"{model.kind} needs responses/labels")
    if model.is_classification and not np.all(np.isin(data.y, (-1.0, 1.0))):
        raise ValueError("classification labels must be in {-1, +1}")


def q_matrix(model: LossModel, data: Dataset, lams, dictionary: Dictionary,
             smoothed: bool = False, features: np.ndarray | None = None) -> np.ndarray:
    """``Q(z_i, f_lambda_s)`` for a stack of coefficient vectors.

    ``lams`` has shape (S, M); the result has shape (S, n).  ``smoothed``
    replaces the hinge by its ``K_eps`` smoothing.  ``features`` may pass a
    precomputed ``dictionary.evaluate(data.X)``.
    """
    _require(model, data, dictionary)
    lams = np.atleast_2d(np.asarray(lams, dtype=float))
    F = dictionary.evaluate(data.X) if features is None else features
    G = lams @ F.T
    kind = model.kind
    if kind == "reg-squared":
        return (data.y[None, :] - G) ** 2
    if kind == "density-L2":
        quad = np.einsum("si,ij,sj->s", lams, dictionary.gram, lams)
        return quad[:, None] - 2.0 * G
    margin = data.y[None, :] * G
    if kind == "hinge":
        if smoothed:
            return k_eps(1.0 - margin, model.eps)
        return np.maximum(1.0 - margin, 0.0)
    phi = _PHI[kind][0]
    return phi(-margin)


def _single(z, model):
    if model.kind == "density-L2":
        x = z[0] if isinstance(z, tuple) else z
        return Dataset(np.atleast_2d(np.asarray(x, float)))
    x, y = z
    return Dataset(np.atleast_2d(np.asarray(x, float)), np.atleast_1d(float(y)))


def q_value(model: LossModel, z, lam, dictionary: Dictionary, smoothed: bool = False) -> float:
    """``Q(z, f_lambda)`` for one observation ``z = (x, y)`` (or ``x`` for density)."""
    return float(q_matrix(model, _single(z, model), lam, dictionary, smoothed)[0, 0])


def q_grad(model: LossModel, z, lam, dictionary: Dictionary) -> np.ndarray:
    """Analytic gradient of ``Q(z, f_lambda)`` in ``lambda``.

    The hinge uses the ``K_eps`` smoothed surrogate.
    """
    data = _single(z, model)
    _require(model, data, dictionary)
    lam = np.asarray(lam, dtype=float)
    phi_x = dictionary.evaluate(data.X)[0]
    g = float(phi_x @ lam)
    if model.kind == "reg-squared":
        return -2.0 * (data.y[0] - g) * phi_x
    if model.kind == "density-L2":
        return 2.0 * dictionary.gram @ lam - 2.0 * phi_x
    y = data.y[0]
    if model.kind == "hinge":
        return -y * k_eps_grad(1.0 - y * g, model.eps) * phi_x
    return -y * _PHI[model.kind][1](-y * g) * phi_x


# --------------------------------------------------------------------------
# ground truth and risks
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Truth:
    """Data-generating truth.

    ``fn`` is the regression function, the density, or ``eta(x) = E[Y | X=x]``
    depending on ``kind`` ('regression' | 'density' | 'classification').
    ``lambda_star`` is the generating coefficient vector when there is one.
    """

    kind: str
    fn: Callable[[np.ndarray], np.ndarray]
    lambda_star: np.ndarray | None = None


def phi_minimizer(kind: str, eta):
    """Pointwise minimizer ``f_phi`` of the conditional phi-risk."""
    kind = _canonical_kind(kind)
    eta = np.asarray(eta, dtype=float)
    if kind in ("phi-squared", "phi-truncated"):
        return eta
    with np.errstate(divide="ignore"):
        logodds = np.log1p(eta) - np.log1p(-eta)
    if kind == "phi-boosting":
        return 0.5 * logodds
    if kind == "phi-logit":
        return logodds
    if kind == "hinge":
        return np.where(eta > 0, 1.0, -1.0)
    raise ValueError(f"no phi minimizer for {kind!r}")


def bayes_phi_risk(kind: str, eta):
    """Minimal conditional phi-risk ``min_u [phi(-u)(1+eta) + phi(u)(1-eta)] / 2``."""
    kind = _canonical_kind(kind)
    eta = np.asarray(eta, dtype=float)
    if kind in ("phi-squared", "phi-truncated"):
        return 1.0 - eta**2
    if kind == "phi-boosting":
        return np.sqrt(np.clip(1.0 - eta**2, 0.0, None))
    if kind == "phi-logit":
        p = 0.5 * (1.0 + eta)
        return -xlogy(p, p) - xlogy(1.0 - p, 1.0 - p)
    if kind == "hinge":
        return 1.0 - np.abs(eta)
    raise ValueError(f"no phi-risk for {kind!r}")


def conditional_phi_risk(kind: str, g, eta):
    phi = phi_functions(kind)[0]
    return 0.5 * (phi(-g) * (1.0 + eta) + phi(g) * (1.0 - eta))


def risk(model: LossModel, lambda_hat, truth: Truth, eval_data, dictionary: Dictionary):
    """Population loss of ``f_lambda_hat``.

    Regression: Monte-Carlo ``||f_hat - f||^2`` over ``eval_data.X``.
    Density: integrated squared error on a :class:`QuadratureGrid`.
    Classification: a dict with the excess phi-risk (exact hinge for the
    hinge model), the excess misclassification risk and the misclassification
    rate; ties ``f_hat(x) = 0`` count as a fair coin.
    """
    lam = np.asarray(lambda_hat, dtype=float)
    if isinstance(eval_data, QuadratureGrid):
        pts, w = eval_data.points, eval_data.weights
    else:
        pts = eval_data.X
        w = None
    if len(pts) == 0:
        raise ValueError("empty evaluation data")
    fhat = dictionary.evaluate(pts) @ lam
    if model.kind == "reg-squared":
        diff2 = (fhat - truth.fn(pts)) ** 2
        return float(diff2.mean() if w is None else w @ diff2)
    if model.kind == "density-L2":
        diff2 = (fhat - truth.fn(pts)) ** 2
        return float(diff2.mean() if w is None else w @ diff2)
    eta = truth.fn(pts)
    excess_phi = conditional_phi_risk(model.kind, fhat, eta) - bayes_phi_risk(model.kind, eta)
    pred = np.sign(fhat)
    bayes = np.where(eta > 0, 1.0, -1.0)
    mismatch = np.where(pred == 0, 0.5, (pred != bayes).astype(float))
    err = np.where(pred == 0, 0.5, 0.5 * (1.0 - pred * eta))
    avg = (lambda a: a.mean()) if w is None else (lambda a: w @ a)
    return {
        "excess_phi": float(avg(excess_phi)),
        "excess_misclassification": float(avg(mismatch * np.abs(eta))),
        "misclassification": float(avg(err)),
    }
