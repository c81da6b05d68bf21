"""Mixed-frequency GDP nowcasting toolkit.

Submodules
----------
series    core time-series types, transforms, and the vintage calendar
impute    autoregressive tail filling and iterative random-forest head imputation
trees     regression trees, random forests, gradient boosting (from scratch)
linear    OLS and lasso bridge regressions with BIC variable selection
dfm       dynamic factor model with EM and a missing-data Kalman smoother
bvar      mixed-frequency Bayesian VAR with a Minnesota prior and Gibbs sampling
combine   nowcast combination schemes (mean, median, inverse-MAE, inverse-rank)
evaluate  pseudo-real-time monthly and daily evaluation harnesses
txnindex  transaction-level consumption / investment index construction
synth     synthetic economies and synthetic transaction ledgers
cli       command-line entry points
"""

__version__ = "0.1.0"
