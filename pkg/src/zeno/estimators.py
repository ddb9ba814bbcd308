"""Monte-Carlo control estimators over a batch of perturbed particles.

All three estimators map (perturbations, rewards) to a control vector in
noise space.  The linearized form is the advantage-weighted mean of the raw
perturbations; the exponential forms are importance-weighted means whose
weights are a softmax of rewards at temperature lam.  Centering rewards
before exponentiation changes nothing because the weight normalization
cancels any common factor; both exponential variants therefore return the
same vector and are kept as distinct entry points only so callers can state
intent.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ContractError

__all__ = [
    "ParticleBatch",
    "linearized_control",
    "exponential_control",
    "centered_exponential_control",
]


@dataclass(frozen=True)
class ParticleBatch:
    """Perturbations (N, d) with the rewards (N,) earned by the particles."""

    perturbations: np.ndarray
    rewards: np.ndarray

    def __post_init__(self) -> None:
        eps = np.asarray(self.perturbations, dtype=np.float64)
        r = np.asarray(self.rewards, dtype=np.float64)
        if eps.ndim != 2 or eps.shape[0] < 2:
            raise ContractError(
                f"perturbations must be (N, d) with N >= 2, got shape {eps.shape}"
            )
        if r.shape != (eps.shape[0],):
            raise ContractError(
                f"rewards must have shape ({eps.shape[0]},), got {r.shape}"
            )
        if not np.all(np.isfinite(eps)):
            raise ContractError("perturbations must be finite")
        if not np.all(np.isfinite(r)):
            raise ContractError("rewards must be finite")
        object.__setattr__(self, "perturbations", eps)
        object.__setattr__(self, "rewards", r)

    @property
    def size(self) -> int:
        return self.perturbations.shape[0]

    @property
    def dim(self) -> int:
        return self.perturbations.shape[1]


def _weighted_mean(weights: np.ndarray, eps: np.ndarray, denom: np.ndarray) -> np.ndarray:
    # Explicit multiply-and-sum keeps the reduction order identical whether
    # the inputs carry extra leading axes or not.
    return (weights[..., None] * eps).sum(axis=-2) / denom

def _linearized(eps: np.ndarray, rewards: np.ndarray) -> np.ndarray:
    # Advantage-weighted mean over the particle axis; divisor is N, not N-1.
    adv = rewards - rewards.mean(axis=-1, keepdims=True)
    return _weighted_mean(adv, eps, np.float64(eps.shape[-2]))

def _exponential(eps: np.ndarray, rewards: np.ndarray, lam: float) -> np.ndarray:
    # Max-subtraction keeps the exponentials in range; the ratio is unchanged.
    shifted = (rewards - rewards.max(axis=-1, keepdims=True)) / lam
    w = np.exp(shifted)
    return _weighted_mean(w, eps, w.sum(axis=-1, keepdims=True))


def linearized_control(batch: ParticleBatch) -> np.ndarray:
    """Advantage-weighted perturbation mean: sum((r - rbar) * eps) / N."""
    return _linearized(batch.perturbations, batch.rewards)


def exponential_control(batch: ParticleBatch, lam: float) -> np.ndarray:
    """Softmax-weighted perturbation mean at temperature lam."""
    _check_lam(lam)
    return _exponential(batch.perturbations, batch.rewards, lam)


def centered_exponential_control(batch: ParticleBatch, lam: float) -> np.ndarray:
    """Exponential control on mean-centered rewards.

    Identical to exponential_control by the ratio identity; centering only
    shifts every log-weight by the same constant.
    """
    _check_lam(lam)
    centered = batch.rewards - batch.rewards.mean()
    return _exponential(batch.perturbations, centered, lam)


def _check_lam(lam: float) -> None:
    if not (isinstance(lam, (int, float)) and lam > 0.0 and np.isfinite(lam)):
        raise ContractError(f"lam must be a positive finite real, got {lam}")
