"""Diversity scoring and run-level sweep statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, ContractError, EstimatorKind, Generator, Reward, ZenoConfig
from .optimizer import zeno_optimize_many

__all__ = [
    "cosine_similarity_matrix",
    "vendi_score",
    "SweepCell",
    "scaling_sweep",
    "estimator_sweep",
]

_SYM_TOL = 1e-9
_PSD_TOL = -1e-8


def cosine_similarity_matrix(embeddings: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities with a unit diagonal.

    Rejects zero vectors rather than epsilon-padding them: a direction-
    free embedding has no well-defined similarity to anything.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] < 1:
        raise ContractError(f"embeddings must have shape (n, dim), got {emb.shape}")
    if not np.all(np.isfinite(emb)):
        raise ContractError("embeddings must be finite")
    norms = np.sqrt((emb**2).sum(axis=1))
    if np.any(norms == 0.0):
        raise ContractError("zero embedding vector has no cosine similarity")
    unit = emb / norms[:, None]
    sim = unit @ unit.T
    # Clamp roundoff outside [-1, 1] and pin the diagonal exactly.
    np.clip(sim, -1.0, 1.0, out=sim)
    np.fill_diagonal(sim, 1.0)
    return sim


def _validate_similarity(sim: np.ndarray) -> np.ndarray:
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ContractError("similarity matrix must be square")
    if np.abs(sim - sim.T).max(initial=0.0) > _SYM_TOL:
        raise ContractError("similarity matrix must be symmetric")
    if np.abs(np.diag(sim) - 1.0).max(initial=0.0) > _SYM_TOL:
        raise ContractError("similarity matrix must have a unit diagonal")
    return sim


def vendi_score(embeddings: np.ndarray) -> float:
    """Effective number of distinct samples, in [1, n].

    Eigen-decomposes the cosine-similarity matrix divided by n and
    returns the exponential Shannon entropy of its eigenvalues.
    """
    sim = _validate_similarity(cosine_similarity_matrix(embeddings))
    n = sim.shape[0]
    eigs = np.linalg.eigvalsh(sim / n)
    if eigs.min(initial=0.0) < _PSD_TOL:
        raise ContractError(
            f"similarity matrix is not positive semidefinite (min eigenvalue {eigs.min():.3e})"
        )
    eigs = np.clip(eigs, 0.0, None)
    mask = eigs > 0.0
    entropy = -float((eigs[mask] * np.log(eigs[mask])).sum())
    return math.exp(entropy)


@dataclass(frozen=True)
class SweepCell:
    """Aggregated statistics for one (estimator, N, M) sweep cell.

    mean_reward is the across-seed mean of each run's best-so-far reward;
    mean_final_reward averages the final chain state's reward instead.
    vendi is the diversity of the cell's final samples taken together.
    """

    estimator: str
    particles: int
    iterations: int
    seed_count: int
    mean_reward: float
    stderr: float
    mean_vendi: float
    mean_final_reward: float
    final_stderr: float

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "N": self.particles,
            "M": self.iterations,
            "seed_count": self.seed_count,
            "mean_reward": self.mean_reward,
            "stderr": self.stderr,
            "mean_vendi": self.mean_vendi,
            "mean_final_reward": self.mean_final_reward,
            "final_stderr": self.final_stderr,
        }


def _run_cell(
    generator: Generator,
    reward: Reward,
    config: ZenoConfig,
    seeds: list[int],
) -> SweepCell:
    traces = zeno_optimize_many(generator, reward, config, seeds=seeds, keep_records=False)
    best = np.array([t.best_reward for t in traces])
    final = np.array([t.final_reward for t in traces])
    finals = np.stack([t.final_sample for t in traces])
    n = len(seeds)
    return SweepCell(
        estimator=config.estimator.value,
        particles=config.particles,
        iterations=config.iterations,
        seed_count=n,
        mean_reward=float(best.mean()),
        stderr=float(best.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        mean_vendi=vendi_score(finals),
        mean_final_reward=float(final.mean()),
        final_stderr=float(final.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
    )


def _check_sweep_args(grids: list, seeds: list[int]) -> None:
    for g in grids:
        if len(g) == 0:
            raise ConfigError("sweep grids must be nonempty")
    if len(seeds) < 10:
        raise ConfigError("sweeps need at least 10 seeds per cell")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("sweep seeds must be distinct")


def scaling_sweep(
    generator: Generator,
    reward: Reward,
    base_config: ZenoConfig,
    n_grid,
    m_grid,
    seeds,
) -> list[SweepCell]:
    """Mean best reward per (N, M) cell over a common seed list.

    Runs the full cross product of the two grids with the base config's
    estimator; every cell sees the same seeds, so tables are
    bit-reproducible and comparable across cells.
    """
    n_grid = [int(n) for n in n_grid]
    m_grid = [int(m) for m in m_grid]
    seeds = [int(s) for s in seeds]
    _check_sweep_args([n_grid, m_grid], seeds)
    cells = []
    for n in n_grid:
        for m in m_grid:
            cfg = base_config.replace(particles=n, iterations=m)
            cells.append(_run_cell(generator, reward, cfg, seeds))
    return cells


def estimator_sweep(
    generator: Generator,
    reward: Reward,
    base_config: ZenoConfig,
    n_grid,
    seeds,
    estimators: tuple[EstimatorKind, ...] = (
        EstimatorKind.LINEARIZED,
        EstimatorKind.EXPONENTIAL,
        EstimatorKind.CENTERED_EXPONENTIAL,
    ),
) -> list[SweepCell]:
    """Mean best reward per (estimator, N) cell over a common seed list."""
    n_grid = [int(n) for n in n_grid]
    seeds = [int(s) for s in seeds]
    _check_sweep_args([n_grid, list(estimators)], seeds)
    cells = []
    for est in estimators:
        for n in n_grid:
            cfg = base_config.replace(estimator=est, particles=n)
            cells.append(_run_cell(generator, reward, cfg, seeds))
    return cells
