from __future__ import annotations

import numpy as np
import pytest

from nowcastkit import dfm, linear, synth, trees


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Touch every jitted kernel once so runtime checks measure warm code."""
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3))
    y = X @ np.array([1.0, 0.5, -1.0]) + rng.normal(size=40)
    trees.fit_rf(X, y, n_trees=2, mtry=2, seed=0)
    Z = (X - X.mean(axis=0)) / X.std(axis=0)
    linear.fit_lasso(Z, y, 0.1)
    ssm = dfm.StateSpace(
        transition=np.array([[0.6, 0.1], [0.0, 0.5]]),
        innov_cov=np.eye(2),
        loadings=rng.normal(size=(3, 2)),
        obs_cov=np.eye(3) * 0.5,
        init_mean=np.zeros(2),
        init_cov=np.eye(2),
    )
    Y = rng.normal(size=(6, 3))
    Y[2, 1] = np.nan
    dfm.kalman_smoother(ssm, Y)


@pytest.fixture(scope="session")
def economy():
    """One simulated dataset shared by the heavier integration tests."""
    return synth.gen_factor_panel(synth.SynthSpec(n_years=8), seed=7)
