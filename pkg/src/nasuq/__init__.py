"""Ensembles of Gaussian neural networks found by aging evolution with
Bayesian hyperparameter optimisation, with aleatoric/epistemic uncertainty
decomposition and sea-surface-temperature task tooling."""

__version__ = "0.1.0"
