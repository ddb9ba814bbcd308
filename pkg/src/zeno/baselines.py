"""Comparison methods: best-of-n selection and a finite-difference Langevin chain.

The Langevin baseline stands in for first-order noise optimization: it
ascends a central-difference estimate of the reward gradient with added
Gaussian noise, renormalizing to the sqrt(d) sphere each step for parity
with the main optimizer. Its step size is calibrated so the mean update
norm matches a reference run's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigError,
    ContractError,
    Generator,
    IterationRecord,
    Reward,
    RunTrace,
    renormalize_to_sqrt_d,
    split_rng,
)
from .optimizer import draw_initial_noise

__all__ = [
    "best_of_n",
    "fd_gradient_langevin",
    "fd_langevin_many",
    "FdParams",
    "match_fd_step_size",
    "default_noise_scale",
]

# Stream tags 0..3 belong to the main optimizer; the Langevin chain's
# step noise uses its own tag so runs sharing a seed never share draws.
_STREAM_FD_NOISE = 4


def best_of_n(
    generator: Generator,
    reward: Reward,
    dim: int,
    n: int,
    seed: int,
) -> tuple[np.ndarray, float]:
    """Draw n independent noises, return the highest-reward one.

    Draw i comes from the stream (seed, i), so the first n draws of a
    2n-sample run are exactly the n-sample run's draws and the winning
    reward is monotone in n for a fixed seed. Ties go to the lowest index.
    """
    if not (isinstance(n, int) and n >= 1):
        raise ConfigError("n must be an integer >= 1")
    if not (isinstance(dim, int) and dim >= 1):
        raise ConfigError("dim must be an integer >= 1")
    if dim != generator.input_dim:
        raise ContractError(
            f"dim {dim} does not match generator input_dim {generator.input_dim}"
        )
    draws = np.stack([split_rng(seed, i).standard_normal(dim) for i in range(n)])
    rewards = reward(generator(draws))
    best = int(np.argmax(rewards))
    return draws[best].copy(), float(rewards[best])


def default_noise_scale(step_size: float) -> float:
    """Langevin-consistent noise scale sqrt(2 * step_size)."""
    if not (step_size > 0 and math.isfinite(step_size)):
        raise ConfigError("step_size must be a positive finite float")
    return math.sqrt(2.0 * step_size)


def _fd_gradient(
    generator: Generator,
    reward: Reward,
    z: np.ndarray,
    fd_epsilon: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient of reward(generator(.)) for a batch.

    Returns (gradients (S, d), probe rewards (S, 2d)) with probes ordered
    +e_0, -e_0, +e_1, -e_1, ...
    """
    s, d = z.shape
    eye = np.eye(d)
    probes = np.empty((s, 2 * d, d))
    probes[:, 0::2, :] = z[:, None, :] + fd_epsilon * eye[None, :, :]
    probes[:, 1::2, :] = z[:, None, :] - fd_epsilon * eye[None, :, :]
    probe_rewards = reward(generator(probes.reshape(s * 2 * d, d))).reshape(s, 2 * d)
    grad = (probe_rewards[:, 0::2] - probe_rewards[:, 1::2]) / (2.0 * fd_epsilon)
    return grad, probe_rewards


def _run_fd_chains(
    generator: Generator,
    reward: Reward,
    z0: np.ndarray,
    seeds: list[int],
    steps: int,
    step_size: float,
    noise_scale: float,
    fd_epsilon: float,
    keep_records: bool,
) -> list[RunTrace]:
    s, d = z0.shape
    z = z0.copy()
    state_rewards = reward(generator(z))
    best_rewards = state_rewards.copy()
    best_noise = z.copy()
    best_index = np.zeros(s, dtype=np.int64)
    records: list[list[IterationRecord]] = [[] for _ in range(s)]
    update_norm_sum = np.zeros(s)
    # Candidate numbering: 0 is the initial state, then each step
    # contributes 2d probes followed by the updated chain state.
    for m in range(steps):
        grad, probe_rewards = _fd_gradient(generator, reward, z, fd_epsilon)
        probe_best = probe_rewards.argmax(axis=1)
        probe_best_val = probe_rewards[np.arange(s), probe_best]
        improved = probe_best_val > best_rewards
        if np.any(improved):
            rows = np.nonzero(improved)[0]
            cols = probe_best[rows]
            signs = np.where(cols % 2 == 0, fd_epsilon, -fd_epsilon)
            best_noise[rows] = z[rows]
            best_noise[rows, cols // 2] += signs
            best_rewards[rows] = probe_best_val[rows]
            best_index[rows] = 1 + m * (2 * d + 1) + cols
        xi = np.stack(
            [split_rng(seed, _STREAM_FD_NOISE, m).standard_normal(d) for seed in seeds]
        )
        z_new = z + step_size * grad + noise_scale * xi
        update_norm = np.sqrt(((z_new - z) ** 2).sum(axis=1))
        update_norm_sum += update_norm
        z = renormalize_to_sqrt_d(z_new)
        state_rewards = reward(generator(z))
        improved = state_rewards > best_rewards
        if np.any(improved):
            rows = np.nonzero(improved)[0]
            best_noise[rows] = z[rows]
            best_rewards[rows] = state_rewards[rows]
            best_index[rows] = 1 + m * (2 * d + 1) + 2 * d
        if keep_records:
            for i in range(s):
                records[i].append(
                    IterationRecord(
                        iteration=m,
                        rewards=probe_rewards[i].copy(),
                        mean_reward=float(probe_rewards[i].mean()),
                        control_norm=float(np.sqrt((grad[i] ** 2).sum())),
                        noise_norm=float(np.sqrt((z[i] ** 2).sum())),
                        best_so_far=float(best_rewards[i]),
                        update_norm=float(update_norm[i]),
                    )
                )
    final_samples = generator(z)
    final_rewards = reward(final_samples)
    return [
        RunTrace(
            seed=seeds[i],
            records=records[i],
            best_noise=best_noise[i].copy(),
            best_reward=float(best_rewards[i]),
            best_index=int(best_index[i]),
            final_noise=z[i].copy(),
            final_sample=final_samples[i].copy(),
            final_reward=float(final_rewards[i]),
            mean_update_norm=float(update_norm_sum[i] / steps),
        )
        for i in range(s)
    ]


def fd_gradient_langevin(
    generator: Generator,
    reward: Reward,
    z0: np.ndarray,
    steps: int,
    step_size: float,
    noise_scale: float | None = None,
    fd_epsilon: float = 1e-4,
    seed: int = 0,
    keep_records: bool = True,
) -> RunTrace:
    """Finite-difference gradient ascent with Langevin noise on the sphere.

    Iterates z <- renormalize(z + step_size * g + noise_scale * xi) where
    g is the central-difference gradient of reward(generator(z)). The
    noise scale defaults to sqrt(2 * step_size).
    """
    _validate_fd_args(steps, step_size, fd_epsilon)
    if noise_scale is None:
        noise_scale = default_noise_scale(step_size)
    elif not (noise_scale >= 0 and math.isfinite(noise_scale)):
        raise ConfigError("noise_scale must be a nonnegative finite float")
    z0 = np.asarray(z0, dtype=np.float64)
    if z0.ndim != 1 or z0.shape[0] != generator.input_dim:
        raise ContractError(
            f"z0 must have shape ({generator.input_dim},), got {z0.shape}"
        )
    return _run_fd_chains(
        generator, reward, z0[None, :], [int(seed)], steps, float(step_size),
        float(noise_scale), float(fd_epsilon), keep_records,
    )[0]


def fd_langevin_many(
    generator: Generator,
    reward: Reward,
    seeds,
    steps: int,
    step_size: float,
    noise_scale: float | None = None,
    fd_epsilon: float = 1e-4,
    keep_records: bool = False,
    block_size: int = 256,
    jobs: int = 1,
) -> list[RunTrace]:
    """Run the Langevin baseline across seeds with blockwise vectorization.

    Each seed's chain starts from the same initial noise the main
    optimizer would use for that seed, so comparisons share inits.
    Results are independent of block_size and jobs.
    """
    _validate_fd_args(steps, step_size, fd_epsilon)
    if noise_scale is None:
        noise_scale = default_noise_scale(step_size)
    elif not (noise_scale >= 0 and math.isfinite(noise_scale)):
        raise ConfigError("noise_scale must be a nonnegative finite float")
    seeds = [int(s) for s in seeds]
    if not seeds:
        return []
    if not (isinstance(block_size, int) and block_size >= 1):
        raise ConfigError("block_size must be an integer >= 1")
    if not (isinstance(jobs, int) and jobs >= 1):
        raise ConfigError("jobs must be an integer >= 1")
    dim = generator.input_dim
    blocks = [seeds[start : start + block_size] for start in range(0, len(seeds), block_size)]

    def run_block(chunk: list[int]) -> list[RunTrace]:
        z0 = np.stack([draw_initial_noise(s, dim) for s in chunk])
        return _run_fd_chains(
            generator, reward, z0, chunk, steps, float(step_size),
            float(noise_scale), float(fd_epsilon), keep_records,
        )

    if jobs == 1 or len(blocks) <= 1:
        results = [run_block(b) for b in blocks]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_block, blocks))
    traces: list[RunTrace] = []
    for chunk_traces in results:
        traces.extend(chunk_traces)
    return traces


def _validate_fd_args(steps: int, step_size: float, fd_epsilon: float) -> None:
    if not (isinstance(steps, int) and steps >= 1):
        raise ConfigError("steps must be an integer >= 1")
    if not (step_size > 0 and math.isfinite(step_size)):
        raise ConfigError("step_size must be a positive finite float")
    if not (fd_epsilon > 0 and math.isfinite(fd_epsilon)):
        raise ConfigError("fd_epsilon must be a positive finite float")


@dataclass(frozen=True)
class FdParams:
    """Calibrated Langevin-baseline parameters."""

    step_size: float
    noise_scale: float
    mean_update_norm: float


def match_fd_step_size(
    generator: Generator,
    reward: Reward,
    target_update_norm: float,
    pilot_seeds=range(8),
    pilot_steps: int = 25,
    fd_epsilon: float = 1e-4,
    noise_scale: float | None = None,
    rel_tol: float = 0.05,
) -> FdParams:
    """Calibrate the baseline step size to a reference mean update norm.

    Bisects on step_size until the pilot chains' mean per-step update
    norm matches target_update_norm within rel_tol. When noise_scale is
    None it stays coupled to the step size as sqrt(2 * step_size), which
    makes the mean update norm strictly increasing in step_size.
    """
    if not (target_update_norm > 0 and math.isfinite(target_update_norm)):
        raise ConfigError("target_update_norm must be a positive finite float")
    pilot_seeds = [int(s) for s in pilot_seeds]
    if not pilot_seeds:
        raise ConfigError("at least one pilot seed is required")

    def pilot_norm(step: float) -> float:
        traces = fd_langevin_many(
            generator, reward, pilot_seeds, pilot_steps, step,
            noise_scale=noise_scale, fd_epsilon=fd_epsilon,
        )
        return float(np.mean([t.mean_update_norm for t in traces]))

    lo, hi = 1e-10, 1e-10
    while pilot_norm(hi) < target_update_norm:
        hi *= 10.0
        if hi > 1e6:
            raise ConfigError("could not bracket the target update norm")
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        norm = pilot_norm(mid)
        if abs(norm - target_update_norm) <= rel_tol * target_update_norm:
            scale = default_noise_scale(mid) if noise_scale is None else float(noise_scale)
            return FdParams(step_size=mid, noise_scale=scale, mean_update_norm=norm)
        if norm < target_update_norm:
            lo = mid
        else:
            hi = mid
    raise ConfigError("step-size calibration did not converge")
