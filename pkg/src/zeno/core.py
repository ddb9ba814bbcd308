"""Core types and primitive operations shared by every optimizer in the package.

Noise vectors are plain 1-D float64 numpy arrays.  Generators and rewards are
wrapped callables with declared dimensions so that shape and finiteness
violations surface immediately instead of corrupting a run.
"""
from __future__ import annotations

import enum
import math
import dataclasses
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

__all__ = [
    "ZenoError",
    "ConfigError",
    "ContractError",
    "NumericsError",
    "EstimatorKind",
    "ZenoConfig",
    "Generator",
    "Reward",
    "IterationRecord",
    "RunTrace",
    "sample_standard_gaussian",
    "renormalize_to_sqrt_d",
    "split_rng",
]


class ZenoError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(ZenoError):
    """Invalid configuration value or unknown configuration key."""


class ContractError(ZenoError):
    """A generator or reward violated its declared contract."""


class NumericsError(ZenoError):
    """A numerical invariant was violated (zero norms, non-finite states)."""


class EstimatorKind(enum.Enum):
    LINEARIZED = "linearized"
    EXPONENTIAL = "exponential"
    CENTERED_EXPONENTIAL = "centered-exponential"

    @classmethod
    def from_name(cls, name: str) -> "EstimatorKind":
        for kind in cls:
            if kind.value == name:
                return kind
        valid = ", ".join(k.value for k in cls)
        raise ConfigError(f"unknown estimator {name!r}; expected one of: {valid}")


@dataclass(frozen=True)
class ZenoConfig:
    """Hyperparameters for the noise-space optimizer.

    beta is the per-step mixing rate of the proposal chain, eta the control
    step size, lam the temperature used by the exponential-family estimators.
    """

    beta: float = 0.01
    eta: float = 1.5
    particles: int = 16
    iterations: int = 200
    estimator: EstimatorKind = EstimatorKind.LINEARIZED
    lam: float = 1.0
    seed: int = 0
    renormalize: bool = True

    def __post_init__(self) -> None:
        if not (isinstance(self.beta, (int, float)) and 0.0 < self.beta < 1.0):
            raise ConfigError(f"beta must lie strictly inside (0, 1), got {self.beta}")
        if not (isinstance(self.eta, (int, float)) and math.isfinite(self.eta)):
            raise ConfigError(f"eta must be a finite real, got {self.eta}")
        if not (isinstance(self.particles, int) and self.particles >= 2):
            raise ConfigError(f"particles must be an integer >= 2, got {self.particles}")
        if not (isinstance(self.iterations, int) and self.iterations >= 1):
            raise ConfigError(f"iterations must be an integer >= 1, got {self.iterations}")
        if not isinstance(self.estimator, EstimatorKind):
            raise ConfigError(f"estimator must be an EstimatorKind, got {self.estimator!r}")
        if not (isinstance(self.lam, (int, float)) and self.lam > 0.0 and math.isfinite(self.lam)):
            raise ConfigError(f"lam must be a positive finite real, got {self.lam}")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ConfigError(f"seed must be an integer in [0, 2**64), got {self.seed}")
        if not isinstance(self.renormalize, bool):
            raise ConfigError(f"renormalize must be a bool, got {self.renormalize!r}")

    def replace(self, **changes) -> "ZenoConfig":
        """Copy with the given fields swapped out; validation reruns."""
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Generator:
    """Deterministic map from noise space to sample space.

    fn must be vectorized over leading axes: input (..., input_dim) maps to
    output (..., output_dim).  Determinism is part of the contract; the
    optimizer may evaluate the same noise twice and expects equal results.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    input_dim: int
    output_dim: int
    name: str = "generator"

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1:] != (self.input_dim,):
            raise ContractError(
                f"{self.name}: expected trailing dimension {self.input_dim}, "
                f"got input of shape {z.shape}"
            )
        out = np.asarray(self.fn(z), dtype=np.float64)
        expected = z.shape[:-1] + (self.output_dim,)
        if out.shape != expected:
            raise ContractError(
                f"{self.name}: expected output shape {expected}, got {out.shape}"
            )
        return out


@dataclass(frozen=True)
class Reward:
    """Scalar reward on sample space, vectorized over leading axes.

    Non-finite rewards abort the run; they are never clamped or skipped.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "reward"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        r = np.asarray(self.fn(np.asarray(x, dtype=np.float64)), dtype=np.float64)
        if r.shape != np.asarray(x).shape[:-1]:
            raise ContractError(
                f"{self.name}: expected scalar output per row, got shape {r.shape} "
                f"for input of shape {np.asarray(x).shape}"
            )
        if not np.all(np.isfinite(r)):
            bad = np.argwhere(~np.isfinite(np.atleast_1d(r)))[:4].ravel().tolist()
            raise ContractError(
                f"{self.name}: non-finite reward at flat indices {bad}; "
                "rewards must be finite reals"
            )
        return r


@dataclass
class IterationRecord:
    """Per-iteration telemetry of an optimizer run."""

    iteration: int
    rewards: np.ndarray
    mean_reward: float
    control_norm: float
    noise_norm: float
    best_so_far: float
    update_norm: float
    # Frame-set runs only: counts of per-residue interventions this step.
    clipped_translations: int | None = None
    clipped_rotations: int | None = None
    reorthonormalized: int | None = None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "iteration": self.iteration,
            "rewards": np.asarray(self.rewards).tolist(),
            "mean_reward": self.mean_reward,
            "control_norm": self.control_norm,
            "noise_norm": self.noise_norm,
            "best_so_far": self.best_so_far,
            "update_norm": self.update_norm,
        }
        if self.clipped_translations is not None:
            d["clipped_translations"] = self.clipped_translations
            d["clipped_rotations"] = self.clipped_rotations
            d["reorthonormalized"] = self.reorthonormalized
        return d


@dataclass
class RunTrace:
    """Full record of one optimizer run.

    best_* track the highest-reward candidate over every evaluated state
    (initial state, all particles, all chain states); ties resolve to the
    earliest evaluation.  final_noise is the last chain state, which is the
    sample-generating state for distribution-level comparisons.
    """

    seed: int
    records: list[IterationRecord] = field(default_factory=list)
    best_noise: Any = None
    best_reward: float = -math.inf
    best_index: int = -1
    final_noise: Any = None
    final_sample: Any = None
    final_reward: float = math.nan
    mean_update_norm: float = math.nan
    noise_path: Any = None

    def to_dict(self) -> dict[str, Any]:
        out = {
            "seed": self.seed,
            "records": [rec.to_dict() for rec in self.records],
            "best_noise": _tolist(self.best_noise),
            "best_reward": self.best_reward,
            "best_index": self.best_index,
            "final_noise": _tolist(self.final_noise),
            "final_sample": _tolist(self.final_sample),
            "final_reward": self.final_reward,
            "mean_update_norm": self.mean_update_norm,
        }
        if self.noise_path is not None:
            out["noise_path"] = _tolist(self.noise_path)
        return out


def _tolist(x: Any) -> Any:
    if isinstance(x, np.ndarray):
        return x.tolist()
    if hasattr(x, "to_dict"):
        return x.to_dict()
    return x


def sample_standard_gaussian(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one standard-normal vector of length dim."""
    if dim < 1:
        raise ConfigError(f"dim must be a positive integer, got {dim}")
    return rng.standard_normal(dim)


def renormalize_to_sqrt_d(z: np.ndarray) -> np.ndarray:
    """Rescale z onto the sphere of radius sqrt(d), preserving direction.

    Vectorized over leading axes.  A zero or non-finite row has no direction
    to preserve and raises NumericsError.
    """
    z = np.asarray(z, dtype=np.float64)
    d = z.shape[-1]
    norm = np.linalg.norm(z, axis=-1, keepdims=True)
    if not np.all(np.isfinite(norm)) or np.any(norm == 0.0):
        raise NumericsError("cannot renormalize a zero or non-finite vector")
    return z * (np.sqrt(d) / norm)


def split_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent reproducible stream, a pure function of (seed, *stream).

    Streams with distinct component tuples are statistically independent, so
    per-particle draws can be generated in any evaluation order (or in
    parallel) without changing results.
    """
    if not (isinstance(seed, (int, np.integer)) and 0 <= seed < 2**64):
        raise ConfigError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    for s in stream:
        if not isinstance(s, (int, np.integer)) or s < 0:
            raise ConfigError(f"stream components must be non-negative integers, got {s!r}")
    entropy = (int(seed),) + tuple(int(s) for s in stream)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
