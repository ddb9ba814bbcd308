"""Analytic 2D Gaussian-mixture playground.

A small world with a known score field, a deterministic flow generator,
and piecewise-constant per-mode rewards. Because every ingredient is
analytic, the reward-tilted target distribution over modes can be
estimated by brute force and used as an oracle for end-to-end checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, ContractError, Generator, NumericsError, Reward, split_rng

__all__ = [
    "GmmWorld",
    "ModeDistribution",
    "default_world",
    "make_circle_world",
    "gmm_log_density",
    "gmm_score",
    "flow_generate",
    "nearest_mode_index",
    "mode_reward",
    "tilted_target_distribution",
    "empirical_mode_distribution",
    "uncontrolled_mode_distribution",
    "voronoi_mass_distribution",
    "discrete_kl",
    "flow_generator",
    "mode_reward_fn",
    "DEFAULT_TARGET",
    "DEFAULT_BASIN_MASSES",
    "DEFAULT_LAM",
    "DEFAULT_FLOW_STEPS",
    "DEFAULT_FLOW_STEP_SIZE",
]

# The default world is built so that its reward-tilted mode distribution
# equals DEFAULT_TARGET exactly: mode means are placed on the circle so
# the isotropic basin masses are DEFAULT_BASIN_MASSES, and each mode's
# reward is lam * log(target_k / basin_mass_k). Tilting the basin masses
# by exp(reward/lam) then lands on the target row by construction.
DEFAULT_TARGET = (0.139, 0.673, 0.188)
DEFAULT_BASIN_MASSES = (0.24, 0.42, 0.34)
DEFAULT_LAM = 0.15
DEFAULT_RADIUS = 4.0
DEFAULT_SIGMA = 0.5
DEFAULT_FLOW_STEPS = 200
DEFAULT_FLOW_STEP_SIZE = 0.05

_WEIGHT_TOL = 1e-12
_SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class ModeDistribution:
    """Probability vector over the world's modes."""

    probabilities: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probabilities, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 1:
            raise ContractError("probabilities must be a nonempty 1-D vector")
        if not np.all(np.isfinite(probs)):
            raise ContractError("probabilities must be finite")
        if np.any(probs < -_SIMPLEX_TOL):
            raise ContractError("probabilities must be nonnegative")
        if abs(float(probs.sum()) - 1.0) > _SIMPLEX_TOL:
            raise ContractError(
                f"probabilities must sum to 1 within {_SIMPLEX_TOL}, got {probs.sum()!r}"
            )
        probs = np.clip(probs, 0.0, None)
        probs.flags.writeable = False
        object.__setattr__(self, "probabilities", probs)

    @property
    def size(self) -> int:
        return int(self.probabilities.size)

    def to_list(self) -> list[float]:
        return [float(p) for p in self.probabilities]


@dataclass(frozen=True)
class GmmWorld:
    """Isotropic Gaussian mixture in the plane with per-mode rewards.

    Means must stay pairwise separated by at least 6 sigma so that the
    flow's basins coincide with nearest-mean cells; single-mode worlds
    are allowed for closed-form checks.
    """

    means: np.ndarray
    weights: np.ndarray
    sigma: float
    mode_rewards: np.ndarray
    lam: float = 1.0

    def __post_init__(self) -> None:
        means = np.asarray(self.means, dtype=np.float64)
        if means.ndim != 2 or means.shape[1] != 2 or means.shape[0] < 1:
            raise ContractError("means must have shape (K, 2) with K >= 1")
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.shape != (means.shape[0],):
            raise ContractError("weights must have shape (K,)")
        if np.any(weights <= 0.0):
            raise ContractError("weights must be positive")
        if abs(float(weights.sum()) - 1.0) > _WEIGHT_TOL:
            raise ContractError(f"weights must sum to 1 within {_WEIGHT_TOL}")
        rewards = np.asarray(self.mode_rewards, dtype=np.float64)
        if rewards.shape != (means.shape[0],):
            raise ContractError("mode_rewards must have shape (K,)")
        if not np.all(np.isfinite(rewards)):
            raise ContractError("mode_rewards must be finite")
        if not (isinstance(self.sigma, (int, float)) and math.isfinite(self.sigma) and self.sigma > 0):
            raise ContractError("sigma must be a positive finite float")
        if not (isinstance(self.lam, (int, float)) and math.isfinite(self.lam) and self.lam > 0):
            raise ContractError("lam must be a positive finite float")
        k = means.shape[0]
        if k >= 2:
            diffs = means[:, None, :] - means[None, :, :]
            dist = np.sqrt((diffs**2).sum(axis=-1))
            off = dist[~np.eye(k, dtype=bool)]
            min_sep = float(off.min())
            if min_sep < 6.0 * self.sigma:
                raise ContractError(
                    f"means must be pairwise separated by >= 6 sigma "
                    f"({6.0 * self.sigma:.3f}), closest pair is {min_sep:.3f} apart"
                )
        for name, arr in (("means", means), ("weights", weights), ("mode_rewards", rewards)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def n_modes(self) -> int:
        return int(self.means.shape[0])


def make_circle_world(
    target: tuple[float, ...] = DEFAULT_TARGET,
    basin_masses: tuple[float, ...] = DEFAULT_BASIN_MASSES,
    lam: float = DEFAULT_LAM,
    radius: float = DEFAULT_RADIUS,
    sigma: float = DEFAULT_SIGMA,
) -> GmmWorld:
    """Build a 3-mode equal-weight world whose tilted target is `target`.

    Mode means sit on a circle of the given radius at angles chosen so
    that the isotropic basin masses (angular sector fractions between
    neighbouring bisectors) equal `basin_masses`. Rewards are then
    lam * log(target_k / basin_mass_k), which makes the reward-tilted
    mode distribution equal `target` exactly, independent of lam.
    """
    t = np.asarray(target, dtype=np.float64)
    q = np.asarray(basin_masses, dtype=np.float64)
    if t.shape != (3,) or q.shape != (3,):
        raise ConfigError("target and basin_masses must each have 3 entries")
    if np.any(t <= 0) or np.any(q <= 0):
        raise ConfigError("target and basin_masses must be positive")
    if abs(float(t.sum()) - 1.0) > 1e-9 or abs(float(q.sum()) - 1.0) > 1e-9:
        raise ConfigError("target and basin_masses must sum to 1")
    # Sector widths 2*pi*q_k depend only on the two flanking gaps:
    # width_k = (phi_{k+1} - phi_{k-1}) / 2 cyclically, which inverts to
    # the gap formulas below. Every q_k must be < 1/2 for a valid layout.
    if np.any(q >= 0.5):
        raise ConfigError("each basin mass must be < 0.5 for a circular 3-mode layout")
    gap01 = 2.0 * math.pi * (1.0 - 2.0 * float(q[2]))
    gap12 = 2.0 * math.pi * (1.0 - 2.0 * float(q[0]))
    angles = math.pi / 2.0 + np.array([0.0, gap01, gap01 + gap12])
    means = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    rewards = lam * np.log(t / q)
    return GmmWorld(
        means=means,
        weights=np.full(3, 1.0 / 3.0),
        sigma=sigma,
        mode_rewards=rewards,
        lam=lam,
    )


def default_world() -> GmmWorld:
    """The frozen benchmark world used by the CLI and the test suite."""
    return make_circle_world()


def _as_points(x: np.ndarray) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        if arr.shape != (2,):
            raise ContractError(f"point must have 2 coordinates, got shape {arr.shape}")
        return arr[None, :], True
    if arr.ndim == 2 and arr.shape[1] == 2:
        return arr, False
    raise ContractError(f"points must have shape (2,) or (B, 2), got {arr.shape}")


def _log_responsibilities(world: GmmWorld, points: np.ndarray) -> np.ndarray:
    # log w_k - ||x - mu_k||^2 / (2 sigma^2) up to an x-only constant;
    # the quadratic expands so only the cross and mean-norm terms vary per k.
    inv_var = 1.0 / (world.sigma**2)
    cross = points @ world.means.T
    mean_sq = 0.5 * (world.means**2).sum(axis=1)
    return np.log(world.weights)[None, :] + inv_var * (cross - mean_sq[None, :])


def gmm_log_density(world: GmmWorld, x: np.ndarray) -> float | np.ndarray:
    """Log density of the mixture at x, stable via log-sum-exp."""
    points, single = _as_points(x)
    inv_var = 1.0 / (world.sigma**2)
    sq = ((points[:, None, :] - world.means[None, :, :]) ** 2).sum(axis=-1)
    logs = np.log(world.weights)[None, :] - 0.5 * inv_var * sq
    peak = logs.max(axis=1, keepdims=True)
    out = peak[:, 0] + np.log(np.exp(logs - peak).sum(axis=1))
    out = out - math.log(2.0 * math.pi * world.sigma**2)
    return float(out[0]) if single else out


def gmm_score(world: GmmWorld, x: np.ndarray) -> np.ndarray:
    """Analytic gradient of the log density: responsibility-weighted pull."""
    points, single = _as_points(x)
    logits = _log_responsibilities(world, points)
    logits -= logits.max(axis=1, keepdims=True)
    resp = np.exp(logits)
    resp /= resp.sum(axis=1, keepdims=True)
    out = (resp @ world.means - points) / (world.sigma**2)
    return out[0] if single else out


def flow_generate(
    world: GmmWorld,
    z: np.ndarray,
    steps: int = DEFAULT_FLOW_STEPS,
    step_size: float = DEFAULT_FLOW_STEP_SIZE,
) -> np.ndarray:
    """Integrate dx/ds = score(x) from x(0) = z with fixed-step RK4."""
    if not (isinstance(steps, int) and steps >= 1):
        raise ConfigError("steps must be an integer >= 1")
    if not (step_size > 0 and math.isfinite(step_size)):
        raise ConfigError("step_size must be a positive finite float")
    points, single = _as_points(z)
    if not np.all(np.isfinite(points)):
        raise ContractError("flow_generate requires finite inputs")
    x = points.copy()
    h = float(step_size)
    for _ in range(steps):
        k1 = gmm_score(world, x)
        k2 = gmm_score(world, x + 0.5 * h * k1)
        k3 = gmm_score(world, x + 0.5 * h * k2)
        k4 = gmm_score(world, x + h * k3)
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise NumericsError("flow integration produced a non-finite state")
    return x[0] if single else x


def nearest_mode_index(world: GmmWorld, x: np.ndarray) -> int | np.ndarray:
    """Index of the nearest mode mean; ties resolve to the lowest index."""
    points, single = _as_points(x)
    sq = ((points[:, None, :] - world.means[None, :, :]) ** 2).sum(axis=-1)
    idx = sq.argmin(axis=1)
    return int(idx[0]) if single else idx


def mode_reward(world: GmmWorld, x: np.ndarray) -> float | np.ndarray:
    """Reward of the mode nearest to x."""
    idx = nearest_mode_index(world, x)
    if isinstance(idx, int):
        return float(world.mode_rewards[idx])
    return world.mode_rewards[idx]


def tilted_target_distribution(
    world: GmmWorld,
    mc_samples: int,
    seed: int,
    steps: int = DEFAULT_FLOW_STEPS,
    step_size: float = DEFAULT_FLOW_STEP_SIZE,
) -> ModeDistribution:
    """Brute-force oracle for the reward-tilted mode distribution.

    Draws standard-Gaussian noise, pushes it through the flow, classifies
    the terminal mode, and accumulates exp(reward/lam) importance weights.
    """
    if not (isinstance(mc_samples, int) and mc_samples >= 10_000):
        raise ConfigError("mc_samples must be an integer >= 10000")
    rng = split_rng(seed)
    weights = np.zeros(world.n_modes)
    # Max-subtraction keeps the exponent bounded; it cancels on normalize.
    shifted = (world.mode_rewards - world.mode_rewards.max()) / world.lam
    block = 100_000
    done = 0
    while done < mc_samples:
        n = min(block, mc_samples - done)
        z = rng.standard_normal((n, 2))
        idx = nearest_mode_index(world, flow_generate(world, z, steps, step_size))
        counts = np.bincount(idx, minlength=world.n_modes)
        weights += counts * np.exp(shifted)
        done += n
    return ModeDistribution(weights / weights.sum())


def empirical_mode_distribution(samples: np.ndarray, world: GmmWorld) -> ModeDistribution:
    """Mode frequencies of generated points, classified by nearest mean."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        raise ContractError("empirical_mode_distribution requires at least one sample")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ContractError(f"samples must have shape (B, 2), got {arr.shape}")
    if arr.shape[0] < 100:
        raise ContractError("empirical_mode_distribution requires >= 100 samples")
    idx = nearest_mode_index(world, arr)
    counts = np.bincount(idx, minlength=world.n_modes)
    return ModeDistribution(counts / counts.sum())


def uncontrolled_mode_distribution(
    world: GmmWorld,
    mc_samples: int,
    seed: int,
    steps: int = DEFAULT_FLOW_STEPS,
    step_size: float = DEFAULT_FLOW_STEP_SIZE,
) -> ModeDistribution:
    """Mode distribution of the plain generator on standard-Gaussian noise."""
    if not (isinstance(mc_samples, int) and mc_samples >= 100):
        raise ConfigError("mc_samples must be an integer >= 100")
    rng = split_rng(seed)
    counts = np.zeros(world.n_modes, dtype=np.int64)
    block = 100_000
    done = 0
    while done < mc_samples:
        n = min(block, mc_samples - done)
        z = rng.standard_normal((n, 2))
        idx = nearest_mode_index(world, flow_generate(world, z, steps, step_size))
        counts += np.bincount(idx, minlength=world.n_modes)
        done += n
    return ModeDistribution(counts / counts.sum())


def voronoi_mass_distribution(world: GmmWorld, mc_samples: int, seed: int) -> ModeDistribution:
    """Standard-Gaussian mass of each nearest-mean cell, by direct MC.

    This is the no-flow reference for the uncontrolled distribution: in
    the well-separated regime the flow's basins coincide with nearest-
    mean cells, so the two estimates agree up to MC error.
    """
    if not (isinstance(mc_samples, int) and mc_samples >= 100):
        raise ConfigError("mc_samples must be an integer >= 100")
    rng = split_rng(seed)
    z = rng.standard_normal((mc_samples, 2))
    idx = nearest_mode_index(world, z)
    counts = np.bincount(idx, minlength=world.n_modes)
    return ModeDistribution(counts / counts.sum())


def discrete_kl(p: ModeDistribution, q: ModeDistribution) -> float:
    """KL(p || q) over mode indices; returns inf when p charges a q-null mode."""
    if p.size != q.size:
        raise ContractError("distributions must have the same number of modes")
    pv = p.probabilities
    qv = q.probabilities
    mask = pv > 0.0
    if np.any(qv[mask] == 0.0):
        return math.inf
    return float((pv[mask] * np.log(pv[mask] / qv[mask])).sum())


def flow_generator(
    world: GmmWorld,
    steps: int = DEFAULT_FLOW_STEPS,
    step_size: float = DEFAULT_FLOW_STEP_SIZE,
) -> Generator:
    """Wrap the score flow as a black-box noise-to-sample generator."""
    return Generator(
        fn=lambda z: flow_generate(world, z, steps, step_size),
        input_dim=2,
        output_dim=2,
        name="gmm-score-flow",
    )


def mode_reward_fn(world: GmmWorld) -> Reward:
    """Wrap the per-mode reward as a black-box sample reward."""
    return Reward(fn=lambda x: np.asarray(mode_reward(world, x)), name="gmm-mode-reward")
