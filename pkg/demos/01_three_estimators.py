"""Compare the three ways of computing the mirror-averaging aggregate at M = 2.

Quadrature is exact up to grid error, rejection sampling is unbiased with a
reported standard error, and the Langevin chain is the only method that scales
to large M.  On a small problem all three should agree.
"""
import numpy as np

from sparsema import LangevinConfig, LossModel, PriorConfig, ma_exact, ma_langevin
from sparsema.harness import gen_sparse_regression
from sparsema.models import coordinate_dictionary

rng = np.random.default_rng(0)
data, _, truth = gen_sparse_regression(20, 2, 1, 0.5, "rademacher", rng)
model = LossModel("reg-squared")
dictionary = coordinate_dictionary(2)
prior = PriorConfig(tau=0.25, radius=2.0, dim=2)
beta = 18.5

quad = ma_exact(data, model, dictionary, prior, beta, method="quadrature", grid_size=801)
rej = ma_exact(data, model, dictionary, prior, beta, method="rejection", budget=100_000,
               rng=np.random.default_rng(1))
lang = ma_langevin(data, model, dictionary, prior, beta,
                   LangevinConfig(total_time=200.0, h=1e-4, seed=2))

print("generating lambda* :", truth.lambda_star)
print("quadrature         :", quad.lambda_hat)
print("rejection          :", rej.lambda_hat, "+/-", rej.diagnostics["standard_error"])
print("langevin           :", lang.lambda_hat,
      f"({lang.diagnostics['n_steps']} steps, {lang.diagnostics['wall_time']:.1f}s)")
