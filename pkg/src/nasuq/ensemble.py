"""Top-K ensembles and the aleatoric/epistemic variance decomposition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NasuqError


class InsufficientModels(NasuqError, ValueError):
    pass


@dataclass(frozen=True)
class UncertaintyDecomposition:
    """Ensemble mean plus the two variance components (target units squared).

    ``estimator`` is ``"sample"`` when the epistemic part uses ``1/(K-1)`` and
    ``"population"`` when it uses ``1/K`` (the exact mixture variance).
    """

    mean: np.ndarray
    aleatoric: np.ndarray
    epistemic: np.ndarray
    estimator: str

    @property
    def total(self):
        return self.aleatoric + self.epistemic


def select_top_k(records, k):
    """The ``k`` successful records with the lowest validation NLL (ties: lower id)."""
    ok = [r for r in records if r.ok and np.isfinite(r.valid_nll)]
    if k < 1:
        raise DomainError("k must be at least 1")
    if len(ok) < k:
        raise InsufficientModels(f"need {k} successful models, catalog has {len(ok)}")
    return sorted(ok, key=lambda r: (r.valid_nll, r.id))[:k]


def _stack(predictions):
    means = np.stack([np.asarray(p.mean, dtype=np.float64) for p in predictions])
    vars_ = np.stack([np.asarray(p.var, dtype=np.float64) for p in predictions])
    return means, vars_


def decompose(predictions, estimator="sample"):
    """Mixture mean, mean member variance, and spread of member means.

    ``predictions`` is a sequence of objects with ``mean`` and ``var`` arrays
    of equal shape (one per ensemble member).
    """
    k = len(predictions)
    if estimator == "sample":
        if k < 2:
            raise DomainError("the sample (K-1) estimator needs at least two members")
        ddof = 1
    elif estimator == "population":
        if k < 1:
            raise DomainError("need at least one member")
        ddof = 0
    else:
        raise DomainError(f"unknown estimator {estimator!r}")
    means, vars_ = _stack(predictions)
    mu = means.mean(axis=0)
    aleatoric = vars_.mean(axis=0)
    epistemic = np.sum((means - mu) ** 2, axis=0) / (k - ddof)
    return UncertaintyDecomposition(mu, aleatoric, epistemic, estimator)


def decompose_sample(predictions):
    return decompose(predictions, "sample")


def decompose_population(predictions):
    return decompose(predictions, "population")


def project_uncertainty_physical(modal_var, modes, mode="quadrature"):
    """Standard deviation field induced by per-mode coefficient variances.

    ``modal_var`` has shape ``(M,)`` or ``(..., M)``; ``modes`` is ``(N, M)``.
    ``"quadrature"`` treats modes as independent,
    ``sqrt(sum_j var_j v_j(x)^2)``; ``"abs"`` is the alternative reading
    ``|sum_j sd_j v_j(x)|``.
    """
    modal_var = np.asarray(modal_var, dtype=np.float64)
    modes = np.asarray(modes, dtype=np.float64)
    if modal_var.shape[-1] != modes.shape[1]:
        raise DomainError(f"{modal_var.shape[-1]} modal variances for {modes.shape[1]} modes")
    if np.any(modal_var < 0):
        raise DomainError("modal variances must be nonnegative")
    if mode == "quadrature":
        return np.sqrt(modal_var @ (modes * modes).T)
    if mode == "abs":
        return np.abs(np.sqrt(modal_var) @ modes.T)
    raise DomainError(f"unknown projection mode {mode!r}")


def member_spread_physical(member_fields, ddof=1):
    """Pointwise variance across member mean fields (members on axis 0)."""
    f = np.asarray(member_fields, dtype=np.float64)
    if f.shape[0] < ddof + 1:
        raise DomainError("not enough members for the requested estimator")
    return f.var(axis=0, ddof=ddof)
