"""Noise-space optimization over a contracting Gaussian proposal chain.

The chain state z is advanced by z' = sqrt(1-beta) z + sqrt(beta) eps + eta u
where u is a Monte-Carlo control estimated from N perturbed particles, and
the state is optionally rescaled back onto the sqrt(d) sphere after every
update.  `zeno_optimize` is the single-chain reference implementation;
`zeno_optimize_many` runs a batch of independently seeded chains through the
same arithmetic with vectorized generator calls and produces bit-identical
traces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    ConfigError,
    ContractError,
    EstimatorKind,
    Generator,
    IterationRecord,
    Reward,
    RunTrace,
    ZenoConfig,
    renormalize_to_sqrt_d,
    split_rng,
)
from .estimators import _exponential, _linearized

__all__ = [
    "ou_step",
    "zeno_optimize",
    "zeno_optimize_many",
    "draw_initial_noise",
    "horizon_decay_coefficient",
    "horizon_decay_exponential_approx",
    "AnalyticReward",
    "DriftReport",
    "langevin_drift_check",
    "analytic_control_chain",
]

# Stream tags for split_rng: every random draw of a run is a pure function of
# (seed, tag, iteration, particle), so evaluation order and batching cannot
# change results.
_STREAM_INIT = 0
_STREAM_PARTICLE = 1
_STREAM_UPDATE = 2
_STREAM_DIAGNOSTIC = 3


def ou_step(z: np.ndarray, eps: np.ndarray, beta: float) -> np.ndarray:
    """One uncontrolled proposal step sqrt(1-beta) z + sqrt(beta) eps.

    Broadcasts over leading axes of either argument.  Preserves N(0, I)
    exactly when z ~ N(0, I) and eps is standard normal.  beta = 0 is the
    degenerate identity step and is allowed here; chain configs require
    strictly positive beta because the chain must mix.
    """
    if not 0.0 <= beta < 1.0:
        raise ConfigError(f"beta must lie inside [0, 1), got {beta}")
    z = np.asarray(z, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    return np.sqrt(1.0 - beta) * z + np.sqrt(beta) * eps


def draw_initial_noise(seed: int, dim: int) -> np.ndarray:
    """Initial chain state for a seeded run: one standard-normal vector."""
    return split_rng(seed, _STREAM_INIT).standard_normal(dim)


def _control(eps: np.ndarray, rewards: np.ndarray, config: ZenoConfig) -> np.ndarray:
    if config.estimator is EstimatorKind.LINEARIZED:
        return _linearized(eps, rewards)
    if config.estimator is EstimatorKind.EXPONENTIAL:
        return _exponential(eps, rewards, config.lam)
    # Centered: identical ratio, centered rewards.
    centered = rewards - rewards.mean(axis=-1, keepdims=True)
    return _exponential(eps, centered, config.lam)


def zeno_optimize(
    generator: Generator,
    reward: Reward,
    z0: np.ndarray,
    config: ZenoConfig,
    *,
    keep_noise_path: bool = False,
) -> RunTrace:
    """Run one controlled chain and return its full trace.

    Every evaluated state is a best-candidate: the initial state, each of the
    N particles per iteration, and each post-update chain state.  Ties keep
    the earliest evaluation.  Only the chain state is renormalized; particle
    proposals are used as drawn.
    """
    traces = _run_chains(
        generator,
        reward,
        np.asarray(z0, dtype=np.float64)[None, :],
        config,
        [config.seed],
        keep_records=True,
        keep_noise_path=keep_noise_path,
    )
    return traces[0]


def zeno_optimize_many(
    generator: Generator,
    reward: Reward,
    config: ZenoConfig,
    seeds: Sequence[int],
    *,
    keep_records: bool = True,
    keep_noise_path: bool = False,
    block_size: int = 256,
    jobs: int = 1,
) -> list[RunTrace]:
    """Run one chain per seed, vectorizing generator calls across chains.

    Initial states are drawn per seed from the seed's own init stream, so the
    result for a given seed does not depend on the other seeds in the batch.
    Chains are processed in fixed-size blocks; block composition is a pure
    function of the seed list, never of worker count, so any jobs value
    produces identical traces.
    """
    seeds = [int(s) for s in seeds]
    if not (isinstance(jobs, int) and jobs >= 1):
        raise ConfigError(f"jobs must be an integer >= 1, got {jobs}")
    blocks = [seeds[start : start + block_size] for start in range(0, len(seeds), block_size)]

    def run_block(block: list[int]) -> list[RunTrace]:
        z0 = np.stack([draw_initial_noise(s, generator.input_dim) for s in block])
        return _run_chains(
            generator, reward, z0, config, block,
            keep_records=keep_records, keep_noise_path=keep_noise_path,
        )

    if jobs == 1 or len(blocks) <= 1:
        results = [run_block(b) for b in blocks]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_block, blocks))
    out: list[RunTrace] = []
    for chunk in results:
        out.extend(chunk)
    return out


def _run_chains(
    generator: Generator,
    reward: Reward,
    z0: np.ndarray,
    config: ZenoConfig,
    seeds: Sequence[int],
    *,
    keep_records: bool,
    keep_noise_path: bool = False,
) -> list[RunTrace]:
    n_chains, dim = z0.shape
    if dim != generator.input_dim:
        raise ContractError(
            f"z0 has dimension {dim} but the generator expects {generator.input_dim}"
        )
    n_part = config.particles
    beta, eta = config.beta, config.eta

    z = np.array(z0, dtype=np.float64)
    chain_rows = np.arange(n_chains)

    def evaluate(states: np.ndarray, where: str) -> np.ndarray:
        try:
            return reward(generator(states))
        except ContractError as err:
            raise ContractError(f"{where}: {err}") from err

    # Candidate 0 is the initial state.
    r_state = evaluate(z, "initial state")
    best_r = r_state.copy()
    best_z = z.copy()
    best_idx = np.zeros(n_chains, dtype=np.int64)

    records: list[list[IterationRecord]] = [[] for _ in range(n_chains)]
    update_norm_sums = np.zeros(n_chains)
    paths = None
    if keep_noise_path:
        paths = np.empty((n_chains, config.iterations + 1, dim))
        paths[:, 0] = z

    for m in range(config.iterations):
        eps = np.empty((n_chains, n_part, dim))
        for i, s in enumerate(seeds):
            for n in range(n_part):
                eps[i, n] = split_rng(s, _STREAM_PARTICLE, m, n).standard_normal(dim)

        proposals = ou_step(z[:, None, :], eps, beta)
        r = evaluate(proposals.reshape(n_chains * n_part, dim), f"iteration {m}").reshape(
            n_chains, n_part
        )

        # Particle candidates come before this iteration's chain state;
        # argmax keeps the lowest particle index on ties.
        arg = r.argmax(axis=1)
        r_top = r[chain_rows, arg]
        gain = r_top > best_r
        best_r = np.where(gain, r_top, best_r)
        best_idx = np.where(gain, 1 + m * (n_part + 1) + arg, best_idx)
        if np.any(gain):
            best_z[gain] = proposals[chain_rows[gain], arg[gain]]

        u = _control(eps, r, config)

        eps_fresh = np.empty((n_chains, dim))
        for i, s in enumerate(seeds):
            eps_fresh[i] = split_rng(s, _STREAM_UPDATE, m).standard_normal(dim)
        z_new = ou_step(z, eps_fresh, beta) + eta * u
        step = np.linalg.norm(z_new - z, axis=1)
        update_norm_sums += step
        if config.renormalize:
            z_new = renormalize_to_sqrt_d(z_new)
        z = z_new

        if paths is not None:
            paths[:, m + 1] = z

        r_state = evaluate(z, f"iteration {m} chain state")
        gain = r_state > best_r
        best_r = np.where(gain, r_state, best_r)
        best_idx = np.where(gain, 1 + m * (n_part + 1) + n_part, best_idx)
        if np.any(gain):
            best_z[gain] = z[gain]

        if keep_records:
            u_norm = np.linalg.norm(u, axis=1)
            z_norm = np.linalg.norm(z, axis=1)
            for i in range(n_chains):
                records[i].append(
                    IterationRecord(
                        iteration=m,
                        rewards=r[i].copy(),
                        mean_reward=float(r[i].mean()),
                        control_norm=float(u_norm[i]),
                        noise_norm=float(z_norm[i]),
                        best_so_far=float(best_r[i]),
                        update_norm=float(step[i]),
                    )
                )

    final_samples = generator(z)
    traces = []
    for i, s in enumerate(seeds):
        traces.append(
            RunTrace(
                seed=s,
                records=records[i],
                best_noise=best_z[i].copy(),
                best_reward=float(best_r[i]),
                best_index=int(best_idx[i]),
                final_noise=z[i].copy(),
                final_sample=final_samples[i].copy(),
                final_reward=float(r_state[i]),
                mean_update_norm=float(update_norm_sums[i] / config.iterations),
                noise_path=paths[i].copy() if paths is not None else None,
            )
        )
    return traces


def horizon_decay_coefficient(beta: float, horizon: int) -> float:
    """Sensitivity of the state H steps ahead to the noise injected now.

    Exact value sqrt(beta) * (1-beta)^((H-1)/2): each of the H-1 subsequent
    steps contracts the injected noise by sqrt(1-beta).
    """
    if not 0.0 < beta < 1.0:
        raise ConfigError(f"beta must lie strictly inside (0, 1), got {beta}")
    if not (isinstance(horizon, int) and horizon >= 1):
        raise ConfigError(f"horizon must be an integer >= 1, got {horizon}")
    return math.sqrt(beta) * (1.0 - beta) ** ((horizon - 1) / 2.0)


def horizon_decay_exponential_approx(beta: float, horizon: int) -> float:
    """Small-beta exponential form sqrt(beta) * exp(-beta (H-1) / 2)."""
    if not 0.0 < beta < 1.0:
        raise ConfigError(f"beta must lie strictly inside (0, 1), got {beta}")
    if not (isinstance(horizon, int) and horizon >= 1):
        raise ConfigError(f"horizon must be an integer >= 1, got {horizon}")
    return math.sqrt(beta) * math.exp(-beta * (horizon - 1) / 2.0)


@dataclass(frozen=True)
class AnalyticReward:
    """Reward on noise space with a caller-supplied exact gradient.

    Used by the sampling diagnostics, where the ideal control (the gradient
    of the reward in the small-beta limit) must be known in closed form.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DriftReport:
    """Comparison of the mean one-step update against the Langevin drift."""

    beta: float
    eta: float
    lam: float
    empirical_drift: np.ndarray
    langevin_drift: np.ndarray
    abs_discrepancy: float
    rel_discrepancy: float
    mc_stderr: np.ndarray


def langevin_drift_check(
    world: AnalyticReward,
    z: np.ndarray,
    config: ZenoConfig,
    samples: int,
) -> DriftReport:
    """Check that one update step realizes the Langevin drift of the tilted law.

    With the temperature fixed by lam = beta / (2 eta), the update with the
    ideal control u(z) = grad r(z) should move the state by
    lam * eta * (-z + u(z)/lam) in expectation: the score of the standard
    Gaussian tilted by exp(r/lam), scaled by the step.  The empirical side
    Monte-Carlo averages `samples` one-step updates with fresh noise.  The
    diagnostic runs unrenormalized; pass a config with renormalize=False.
    """
    if config.renormalize:
        raise ConfigError("the drift diagnostic requires renormalize=False")
    if config.eta <= 0.0:
        raise ConfigError("the drift diagnostic requires eta > 0")
    if samples < 2:
        raise ConfigError(f"samples must be >= 2, got {samples}")
    z = np.asarray(z, dtype=np.float64)
    beta, eta = config.beta, config.eta
    lam = beta / (2.0 * eta)

    control = np.asarray(world.grad(z), dtype=np.float64)
    rng = split_rng(config.seed, _STREAM_DIAGNOSTIC)
    eps = rng.standard_normal((samples, z.shape[-1]))
    stepped = ou_step(z, eps, beta) + eta * control
    empirical = stepped.mean(axis=0) - z
    mc_stderr = stepped.std(axis=0, ddof=1) / math.sqrt(samples)

    score = -z + control / lam
    langevin = lam * eta * score

    abs_disc = float(np.linalg.norm(empirical - langevin))
    rel_disc = abs_disc / float(np.linalg.norm(langevin))
    return DriftReport(
        beta=beta,
        eta=eta,
        lam=lam,
        empirical_drift=empirical,
        langevin_drift=langevin,
        abs_discrepancy=abs_disc,
        rel_discrepancy=rel_disc,
        mc_stderr=mc_stderr,
    )


def analytic_control_chain(
    world: AnalyticReward,
    z0: np.ndarray,
    config: ZenoConfig,
    steps: int,
    burn_in: int,
) -> np.ndarray:
    """Long-run mean of the update chain driven by the ideal control.

    Runs z' = sqrt(1-beta) z + sqrt(beta) eps + eta grad r(z) without
    renormalization and returns the mean state after burn-in.  For a linear
    reward a.z this targets the tilted Gaussian with mean a / lam where
    lam = beta / (2 eta).
    """
    if config.renormalize:
        raise ConfigError("the sampling diagnostic requires renormalize=False")
    if not 0 <= burn_in < steps:
        raise ConfigError(f"need 0 <= burn_in < steps, got {burn_in}, {steps}")
    z = np.asarray(z0, dtype=np.float64).copy()
    beta, eta = config.beta, config.eta
    sq1mb, sqb = math.sqrt(1.0 - beta), math.sqrt(beta)
    rng = split_rng(config.seed, _STREAM_DIAGNOSTIC)
    eps = rng.standard_normal((steps, z.shape[-1]))
    total = np.zeros_like(z)
    for t in range(steps):
        z = sq1mb * z + sqb * eps[t] + eta * np.asarray(world.grad(z))
        if t >= burn_in:
            total += z
    return total / (steps - burn_in)
