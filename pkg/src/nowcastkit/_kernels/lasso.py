"""Cyclic coordinate descent for the lasso.

Objective: (1/2n) * ||y - X b||^2 + lam * ||b||_1, intercept handled by the
caller (y arrives centered).  Each coordinate update is the closed-form
soft-threshold step on the partial residual.
"""
from __future__ import annotations

import numpy as np

from ._backend import jit


@jit
def cd_lasso(X, y, lam, beta, max_sweeps, tol):
    """Sweep coordinates until the largest coefficient change drops below tol.

    ``beta`` is updated in place (usable for warm starts).  Returns
    (n_sweeps, converged).
    """
    n, p = X.shape
    colsq = np.empty(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += X[i, j] * X[i, j]
        colsq[j] = s / n
    r = y - X @ beta
    for sweep in range(max_sweeps):
        maxd = 0.0
        for j in range(p):
            cj = colsq[j]
            if cj <= 0.0:
                continue
            bj = beta[j]
            rho = 0.0
            for i in range(n):
                rho += X[i, j] * r[i]
            rho = rho / n + cj * bj
            if rho > lam:
                nb = (rho - lam) / cj
            elif rho < -lam:
                nb = (rho + lam) / cj
            else:
                nb = 0.0
            if nb != bj:
                dlt = nb - bj
                beta[j] = nb
                for i in range(n):
                    r[i] -= dlt * X[i, j]
                ad = dlt if dlt >= 0.0 else -dlt
                if ad > maxd:
                    maxd = ad
        if maxd < tol:
            return sweep + 1, True
    return max_sweeps, False
