import numpy as np
import pytest
from scipy.optimize import brentq

from sparsema.models import phi_registry
from sparsema.tuning import (TuningInputs, choose_beta, choose_tau, classif_bound,
                             data_driven_R, density_beta_grid, soi_bound)


def test_choose_tau_examples():
    assert choose_tau(TuningInputs(n=100, M=4, R=1.0, beta=1.0)) == pytest.approx(0.05)
    assert choose_tau(TuningInputs(n=100, M=4, R=0.1, beta=1.0)) == pytest.approx(0.00625)
    inp = TuningInputs(n=37, M=6, R=2.0, beta=3.3, trace_gram=6.0)
    assert choose_tau(inp, use_trace=True) == choose_tau(inp)
    with pytest.raises(ValueError):
        choose_tau(TuningInputs(n=0, M=4, R=1.0, beta=1.0))
    with pytest.raises(ValueError):
        choose_tau(TuningInputs(n=10, M=4, R=1.0, beta=1.0), use_trace=True)


def test_choose_beta_examples():
    assert choose_beta("reg-squared", TuningInputs(n=10, M=2, R=1.0, sigma2=1.0,
                                                   L_phi=1.0)) == pytest.approx(10.0)
    assert choose_beta("density-L2", TuningInputs(n=10, M=2, R=1.0, L=2.0)) == 24.0
    assert choose_beta("density-L2", TuningInputs(n=10, M=2, R=2.0, L=3.0)) == 69.0
    assert choose_beta("hinge", TuningInputs(n=100, M=5, R=1.0, L_phi=1.0,
                                             M_star=4)) == pytest.approx(10.0)
    assert choose_beta("logit", TuningInputs(n=10, M=2, R=1.0, L_phi=1.0)) == pytest.approx(np.e)
    with pytest.raises(ValueError):
        choose_beta("density-L2", TuningInputs(n=10, M=2, R=1.0, L=1.5), density_shortcut=True)


def test_general_regression_beta():
    inp = TuningInputs(n=10, M=2, R=1.0, sigma2=0.5, L_phi=1.0)
    assert choose_beta("reg-squared", inp, sup_dev=0.5) == pytest.approx(1.5)
    assert choose_beta("reg-squared", inp, sup_dev=0.5, noise_b=0.5) == pytest.approx(8.0)


def _density_condition(R, L):
    return lambda b: (b - 2 * R**2) * np.exp(-4 * R * (L + np.sqrt(L)) / b) - (2 * L + 4 * R * L)


@pytest.mark.parametrize("R, L, root", [
    # roots of the condition found independently with brentq, frozen here
    (3.0, np.sqrt(2.0), 53.5011014511603),
    (1.0, 2.0, 23.47190014724116),
    (2.0, 2.0, 44.79792620140524),
    (2.0, np.sqrt(2.0), 34.06439592571509),
])
def test_density_grid_matches_root(R, L, root):
    assert brentq(_density_condition(R, L), 2 * R**2 + 1e-9, 1e6) == pytest.approx(root, rel=1e-10)
    b = density_beta_grid(R, L)
    ratio = (1e6 * max(L, 1.0) / (2 * R**2)) ** (1 / 9999)
    assert root <= b <= root * ratio * (1 + 1e-12)
    assert _density_condition(R, L)(b) >= 0


def test_density_shortcuts_satisfy_condition():
    for R, c in ((1.0, 12.0), (2.0, 23.0)):
        for L in (2.0, 3.0, 10.0):
            assert _density_condition(R, L)(c * L) >= 0


def test_density_grid_no_solution():
    with pytest.raises(ValueError):
        density_beta_grid(1.0, 2.0, upper=5.0)


def test_data_driven_R_examples():
    assert data_driven_R(np.ones(4), 0.0, 1) == pytest.approx(4.0)
    assert data_driven_R(np.ones(4), 1.0, 1) == 0.0
    assert data_driven_R(np.full(4, 0.5), 1.0, 3) == 0.0


def test_soi_bound_examples():
    inp = TuningInputs(n=50, M=3, R=2.0, beta=1.5, trace_gram=3.0)
    tau = 0.1
    assert soi_bound(0.2, np.zeros(3), inp, tau) == pytest.approx(0.2 + 4 * tau**2 * 3 + 1.5 / 51)
    inp = TuningInputs(n=0, M=2, R=1.0, beta=1.0, trace_gram=2.0)
    lam = np.array([0.1 * (np.e - 1), 0.0])
    assert soi_bound(0.0, lam, inp, 0.1) == pytest.approx(5.08)
    with pytest.raises(ValueError):
        soi_bound(0.0, np.array([0.7, 0.0]), inp, 0.1)
    with pytest.raises(ValueError):
        soi_bound(0.0, np.zeros(2), inp, 0.3)


def test_full_form_below_l0_form(rng):
    for _ in range(200):
        M = int(rng.integers(2, 20))
        inp = TuningInputs(n=int(rng.integers(1, 300)), M=M, R=3.0,
                           beta=float(rng.uniform(0.5, 20)), trace_gram=float(M))
        tau = choose_tau(inp)
        lam = rng.standard_normal(M) * (rng.uniform(size=M) < 0.3)
        lam *= (3.0 - 2 * M * tau) * rng.uniform() / max(np.abs(lam).sum(), 1e-12)
        assert soi_bound(0.0, lam, inp, tau) <= soi_bound(0.0, lam, inp, tau, "l0") + 1e-12


def test_trace_tau_keeps_residual_small(rng):
    for _ in range(100):
        M = int(rng.integers(2, 50))
        inp = TuningInputs(n=int(rng.integers(1, 1000)), M=M, R=float(rng.uniform(0.1, 10)),
                           beta=float(rng.uniform(0.1, 100)),
                           trace_gram=float(M * rng.uniform(0.2, 5)))
        tau = choose_tau(inp, use_trace=True)
        assert 4 * tau**2 * inp.trace_gram <= 4 * inp.beta / inp.n * (1 + 1e-12)


def test_bound_invariant_under_scaling():
    s = 3.0
    inp = TuningInputs(n=40, M=4, R=2.0, beta=5.0, trace_gram=4.0)
    inp_s = TuningInputs(n=40, M=4, R=2.0 / s, beta=5.0, trace_gram=4.0 * s * s)
    tau, tau_s = choose_tau(inp, use_trace=True), choose_tau(inp_s, use_trace=True)
    assert tau_s == pytest.approx(tau / s, rel=1e-14)
    lam = np.array([0.3, -0.2, 0.0, 0.0])
    assert soi_bound(0.1, lam / s, inp_s, tau_s) == pytest.approx(soi_bound(0.1, lam, inp, tau),
                                                                  rel=1e-12)


def test_classif_bound_forms():
    inp = TuningInputs(n=99, M=4, R=1.0, beta=np.e, L_phi=1.0)
    spec = phi_registry("logit", 1.0, 1.0)
    b = classif_bound(0.1, np.zeros(4), inp, 0.05, spec, np.ones(4))
    assert b == pytest.approx(0.1 + 4 * 0.05**2 * 4 + np.e / 100)
    hinge = TuningInputs(n=99, M=4, R=1.0, beta=10.0, L_phi=1.0)
    full = classif_bound(0.0, np.zeros(4), hinge, 0.05, None, None)
    lin = classif_bound(0.0, np.zeros(4), hinge, 0.05, None, None, linear_hinge=True)
    assert full - lin == pytest.approx(4 * 0.05 * 2)
    assert lin == pytest.approx(10 / 100 + 2 * 4 * np.exp(0.2) / 10)


def test_hinge_bound_rate():
    ns = np.array([1e2, 1e4, 1e6])
    vals = []
    for n in ns:
        inp = TuningInputs(n=int(n), M=10, R=1.0, L_phi=1.0, M_star=2)
        inp = inp.with_beta(choose_beta("hinge", inp))
        vals.append(classif_bound(0.0, np.zeros(10), inp, 1e-9, None, None))
    slope = np.polyfit(np.log(ns), np.log(vals), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.05)


def test_hinge_bound_diverges_in_beta():
    vals = [classif_bound(0.0, np.zeros(3), TuningInputs(n=10, M=3, R=1.0, beta=b, L_phi=1.0),
                          0.01, None, None) for b in (1e2, 1e4, 1e6)]
    assert vals[0] < vals[1] < vals[2]
