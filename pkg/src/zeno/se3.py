"""Noise optimization over rigid-body frames (rotation + translation pairs).

Optimizes a set of per-residue rigid frames against a black-box reward by
advantage-weighted perturbation averaging: rotations are perturbed through
the exponential map, translations additively with the mean removed so the
set never drifts as a whole. Updates are clipped per residue and there is
no contraction toward a reference, matching variance-exploding dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .core import ConfigError, ContractError, IterationRecord, NumericsError, split_rng

__all__ = [
    "FramePose",
    "FrameSet",
    "Se3Baseline",
    "Se3ZenoConfig",
    "Se3UpdateInfo",
    "Se3RunTrace",
    "so3_hat",
    "so3_exp",
    "so3_log",
    "rotation_geodesic_angle",
    "sample_frame_perturbation",
    "advantages_from_rewards",
    "se3_control",
    "se3_update",
    "se3_zeno_optimize",
    "frame_matching_reward",
    "random_frame_set",
    "identity_frame_set",
]

_ROT_TOL = 1e-9
_TAYLOR_THETA = 1e-6

# Stream tags mirror the vector optimizer: 1 = per-particle perturbations.
_STREAM_PARTICLE = 1


def so3_hat(omega: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix (batch) of a rotation tangent vector."""
    w = np.asarray(omega, dtype=np.float64)
    if w.shape[-1] != 3:
        raise ContractError(f"tangent vectors must have 3 components, got shape {w.shape}")
    out = np.zeros(w.shape[:-1] + (3, 3))
    x, y, z = w[..., 0], w[..., 1], w[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rotation matrix (batch) for a tangent vector, via Rodrigues' formula.

    Below theta = 1e-6 the sin/cos coefficients switch to their Taylor
    expansions to avoid 0/0.
    """
    w = np.asarray(omega, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ContractError("tangent vectors must be finite")
    hat = so3_hat(w)
    theta = np.sqrt((w**2).sum(axis=-1))
    small = theta < _TAYLOR_THETA
    t2 = theta**2
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(small, 1.0 - t2 / 6.0, np.sin(theta) / np.where(small, 1.0, theta))
        b = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(theta)) / np.where(small, 1.0, t2))
    eye = np.broadcast_to(np.eye(3), hat.shape)
    return eye + a[..., None, None] * hat + b[..., None, None] * (hat @ hat)


def _vee(m: np.ndarray) -> np.ndarray:
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def so3_log(rotation: np.ndarray) -> np.ndarray:
    """Tangent vector of a rotation matrix; inverse of so3_exp on theta <= pi.

    Uses the acos-trace formula with a Taylor branch near zero and an
    axis-from-symmetric-part branch near pi, where the skew part vanishes.
    """
    r = np.asarray(rotation, dtype=np.float64)
    if r.shape[-2:] != (3, 3):
        raise ContractError(f"rotations must have shape (..., 3, 3), got {r.shape}")
    single = r.ndim == 2
    r = r.reshape((-1, 3, 3))
    trace = np.clip(r[:, 0, 0] + r[:, 1, 1] + r[:, 2, 2], -1.0, 3.0)
    theta = np.arccos(np.clip((trace - 1.0) / 2.0, -1.0, 1.0))
    skew = _vee((r - np.transpose(r, (0, 2, 1))) / 2.0)
    out = np.empty((r.shape[0], 3))
    small = theta < _TAYLOR_THETA
    near_pi = theta > math.pi - 1e-4
    mid = ~(small | near_pi)
    # sin(theta) ~ theta: vee alone is exact to O(theta^3).
    out[small] = skew[small] * (1.0 + theta[small, None] ** 2 / 6.0)
    if np.any(mid):
        out[mid] = skew[mid] * (theta[mid] / np.sin(theta[mid]))[:, None]
    if np.any(near_pi):
        # Near pi the axis survives only in the symmetric part:
        # R + I = (1 + cos(theta)) I + (1 - cos(theta)) axis axis^T + sin(theta) hat(axis).
        sub = r[near_pi]
        sym = (sub + np.transpose(sub, (0, 2, 1))) / 2.0 + np.eye(3)
        diag = np.einsum("bii->bi", sym).copy()
        pick = diag.argmax(axis=1)
        axis = sym[np.arange(sub.shape[0]), :, pick]
        axis /= np.sqrt((axis**2).sum(axis=1, keepdims=True))
        # Orient with the (possibly tiny) skew part when it is nonzero.
        sgn = np.sign((axis * skew[near_pi]).sum(axis=1))
        sgn[sgn == 0.0] = 1.0
        out[near_pi] = axis * (sgn * theta[near_pi])[:, None]
    return out[0] if single else out.reshape(rotation.shape[:-2] + (3,))


def rotation_geodesic_angle(r1: np.ndarray, r2: np.ndarray) -> np.ndarray:
    """Angle of the relative rotation between two matrices (batch)."""
    a = np.asarray(r1, dtype=np.float64)
    b = np.asarray(r2, dtype=np.float64)
    rel = np.swapaxes(a, -1, -2) @ b
    trace = rel[..., 0, 0] + rel[..., 1, 1] + rel[..., 2, 2]
    return np.arccos(np.clip((trace - 1.0) / 2.0, -1.0, 1.0))


def _check_rotations(rotations: np.ndarray, tol: float = _ROT_TOL) -> float:
    eye = np.eye(3)
    err = np.abs(np.swapaxes(rotations, -1, -2) @ rotations - eye).max(initial=0.0)
    dets = np.linalg.det(rotations)
    det_err = np.abs(dets - 1.0).max(initial=0.0)
    return float(max(err, det_err))


@dataclass(frozen=True)
class FramePose:
    """One rigid frame: a rotation matrix and a translation vector."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        rot = np.asarray(self.rotation, dtype=np.float64)
        trans = np.asarray(self.translation, dtype=np.float64)
        if rot.shape != (3, 3):
            raise ContractError(f"rotation must be 3x3, got {rot.shape}")
        if trans.shape != (3,):
            raise ContractError(f"translation must be a 3-vector, got {trans.shape}")
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise ContractError("frame entries must be finite")
        if _check_rotations(rot) > _ROT_TOL:
            raise ContractError("rotation must be orthonormal with determinant +1")
        rot.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)


@dataclass(frozen=True)
class FrameSet:
    """A batch of rigid frames stored as (N, 3, 3) rotations and (N, 3) translations."""

    rotations: np.ndarray
    translations: np.ndarray

    def __post_init__(self) -> None:
        rot = np.asarray(self.rotations, dtype=np.float64)
        trans = np.asarray(self.translations, dtype=np.float64)
        if rot.ndim != 3 or rot.shape[1:] != (3, 3) or rot.shape[0] < 1:
            raise ContractError(f"rotations must have shape (N, 3, 3), got {rot.shape}")
        if trans.shape != (rot.shape[0], 3):
            raise ContractError(f"translations must have shape (N, 3), got {trans.shape}")
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise ContractError("frame entries must be finite")
        if _check_rotations(rot) > _ROT_TOL:
            raise ContractError("every rotation must be orthonormal with determinant +1")
        rot.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, "rotations", rot)
        object.__setattr__(self, "translations", trans)

    @property
    def size(self) -> int:
        return int(self.rotations.shape[0])

    @classmethod
    def from_poses(cls, poses) -> "FrameSet":
        poses = list(poses)
        if not poses:
            raise ContractError("a frame set needs at least one pose")
        return cls(
            rotations=np.stack([p.rotation for p in poses]),
            translations=np.stack([p.translation for p in poses]),
        )

    @property
    def poses(self) -> list[FramePose]:
        return [
            FramePose(rotation=self.rotations[i].copy(), translation=self.translations[i].copy())
            for i in range(self.size)
        ]

    def recentered(self) -> "FrameSet":
        """Same frames with the mean translation removed."""
        return FrameSet(
            rotations=self.rotations,
            translations=self.translations - self.translations.mean(axis=0),
        )

    def to_json_obj(self) -> list[dict]:
        return [
            {
                "R": [float(v) for v in self.rotations[i].reshape(9)],
                "t": [float(v) for v in self.translations[i]],
            }
            for i in range(self.size)
        ]

    @classmethod
    def from_json_obj(cls, obj) -> "FrameSet":
        rot = np.array([np.reshape(item["R"], (3, 3)) for item in obj], dtype=np.float64)
        trans = np.array([item["t"] for item in obj], dtype=np.float64)
        return cls(rotations=rot, translations=trans)


class Se3Baseline(Enum):
    MEAN = "mean"
    MEDIAN = "median"


@dataclass(frozen=True)
class Se3ZenoConfig:
    """Hyperparameters for frame-set optimization.

    sigma is the shared perturbation scale for translations and rotation
    tangents; tau_t and tau_R bound the per-residue applied update norms.
    """

    sigma: float = 0.1
    eta: float = 0.3
    particles: int = 32
    iterations: int = 300
    tau_t: float = 0.5
    tau_r: float = 0.5
    baseline: Se3Baseline = Se3Baseline.MEAN
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("sigma", "eta", "tau_t", "tau_r"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise ConfigError(f"{name} must be a positive finite float, got {val!r}")
        if not (isinstance(self.particles, int) and self.particles >= 2):
            raise ConfigError(f"particles must be an integer >= 2, got {self.particles}")
        if not (isinstance(self.iterations, int) and self.iterations >= 1):
            raise ConfigError(f"iterations must be an integer >= 1, got {self.iterations}")
        if not isinstance(self.baseline, Se3Baseline):
            raise ConfigError(f"baseline must be a Se3Baseline, got {self.baseline!r}")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ConfigError(f"seed must be an integer in [0, 2**64), got {self.seed}")


def sample_frame_perturbation(
    n_residues: int, sigma: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw one unscaled perturbation pair (v, omega) for a frame set.

    v is standard normal with the mean subtracted so the translations'
    center of mass never moves; omega is plain standard normal. The scale
    sigma is validated here but applied at the update site.
    """
    if not (isinstance(n_residues, int) and n_residues >= 2):
        raise ContractError("n_residues must be an integer >= 2")
    if not (sigma > 0 and math.isfinite(sigma)):
        raise ConfigError("sigma must be a positive finite float")
    v = rng.standard_normal((n_residues, 3))
    v = v - v.mean(axis=0)
    omega = rng.standard_normal((n_residues, 3))
    return v, omega


def advantages_from_rewards(rewards: np.ndarray, baseline: Se3Baseline) -> np.ndarray:
    """Rewards minus their mean or median."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise ContractError("rewards must be a 1-D vector with at least 2 entries")
    if not np.all(np.isfinite(r)):
        raise ContractError("rewards must be finite")
    center = r.mean() if baseline is Se3Baseline.MEAN else np.median(r)
    return r - center


def se3_control(
    advantages: np.ndarray,
    v_batch: np.ndarray,
    omega_batch: np.ndarray,
    sigma: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Advantage-weighted perturbation averages, scaled by 1/(sigma K)."""
    a = np.asarray(advantages, dtype=np.float64)
    v = np.asarray(v_batch, dtype=np.float64)
    w = np.asarray(omega_batch, dtype=np.float64)
    if a.ndim != 1 or a.size < 1:
        raise ContractError("advantages must be a nonempty 1-D vector")
    k = a.size
    if v.shape[:1] != (k,) or w.shape[:1] != (k,) or v.shape != w.shape or v.ndim != 3:
        raise ContractError(
            f"perturbation batches must have shape (K, N, 3) with K={k}, "
            f"got {v.shape} and {w.shape}"
        )
    if not (sigma > 0 and math.isfinite(sigma)):
        raise ConfigError("sigma must be a positive finite float")
    denom = sigma * k
    u_t = (a[:, None, None] * v).sum(axis=0) / denom
    u_r = (a[:, None, None] * w).sum(axis=0) / denom
    return u_t, u_r


@dataclass(frozen=True)
class Se3UpdateInfo:
    """What the update applied and what it had to do beyond the plain step."""

    clipped_translations: int
    clipped_rotations: int
    reorthonormalized: int
    update_norm: float


def _clip_rows(step: np.ndarray, bound: float) -> tuple[np.ndarray, int]:
    norms = np.sqrt((step**2).sum(axis=1))
    over = norms > bound
    if not np.any(over):
        return step, 0
    scaled = step.copy()
    scaled[over] *= (bound / norms[over])[:, None]
    return scaled, int(over.sum())


def se3_update(
    frames: FrameSet,
    u_t: np.ndarray,
    u_r: np.ndarray,
    eta: float,
    tau_t: float,
    tau_r: float,
) -> tuple[FrameSet, Se3UpdateInfo]:
    """Apply clipped controls to a frame set and re-center translations.

    Per residue, eta * u is rescaled onto the tau bound when it exceeds
    it, translations move additively, rotations compose on the left with
    the exponential of the clipped tangent. If accumulated roundoff drags
    a rotation off the manifold past tolerance it is projected back and
    the repair is counted, never hidden.
    """
    u_t = np.asarray(u_t, dtype=np.float64)
    u_r = np.asarray(u_r, dtype=np.float64)
    n = frames.size
    if u_t.shape != (n, 3) or u_r.shape != (n, 3):
        raise ContractError(f"controls must have shape ({n}, 3)")
    step_t, n_clip_t = _clip_rows(eta * u_t, tau_t)
    step_r, n_clip_r = _clip_rows(eta * u_r, tau_r)
    new_t = frames.translations + step_t
    new_t = new_t - new_t.mean(axis=0)
    new_r = so3_exp(step_r) @ frames.rotations
    reortho = 0
    if _check_rotations(new_r) > _ROT_TOL:
        u_svd, _, vh_svd = np.linalg.svd(new_r)
        projected = u_svd @ vh_svd
        bad = np.abs(np.swapaxes(new_r, -1, -2) @ new_r - np.eye(3)).max(axis=(1, 2)) > _ROT_TOL
        reortho = int(bad.sum())
        new_r = np.where(bad[:, None, None], projected, new_r)
        if _check_rotations(new_r) > _ROT_TOL:
            raise NumericsError("rotation repair failed to restore orthonormality")
    return (
        FrameSet(rotations=new_r, translations=new_t),
        Se3UpdateInfo(
            clipped_translations=n_clip_t,
            clipped_rotations=n_clip_r,
            reorthonormalized=reortho,
            update_norm=float(math.sqrt((step_t**2).sum() + (step_r**2).sum())),
        ),
    )


@dataclass
class Se3RunTrace:
    """Per-run record of a frame-set optimization."""

    seed: int
    records: list[IterationRecord]
    best_frames: FrameSet
    best_reward: float
    best_index: int
    final_frames: FrameSet
    final_reward: float
    mean_update_norm: float

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "best_reward": self.best_reward,
            "best_index": self.best_index,
            "final_reward": self.final_reward,
            "mean_update_norm": self.mean_update_norm,
            "best_frames": self.best_frames.to_json_obj(),
            "final_frames": self.final_frames.to_json_obj(),
            "records": [r.to_dict() for r in self.records],
        }


def _evaluate(
    generator: Callable[[FrameSet], FrameSet],
    reward: Callable[[FrameSet], float],
    frames: FrameSet,
) -> float:
    value = float(reward(generator(frames)))
    if not math.isfinite(value):
        raise ContractError("reward returned a non-finite value")
    return value


def se3_zeno_optimize(
    generator: Callable[[FrameSet], FrameSet],
    reward: Callable[[FrameSet], float],
    x0: FrameSet,
    config: Se3ZenoConfig,
    keep_records: bool = True,
) -> Se3RunTrace:
    """Optimize a frame set against a black-box reward.

    Each iteration perturbs the current frames K times (translations
    t + sigma v, rotations exp(sigma hat(omega)) R), scores the perturbed
    sets through the frozen generator, forms advantage-weighted controls,
    and applies the clipped update. There is no contraction pulling the
    frames toward a reference: only the controls move them.
    """
    if x0.size < 2:
        raise ContractError("frame optimization needs at least 2 residues")
    frames = x0.recentered()
    n = frames.size
    k = config.particles
    best_reward = _evaluate(generator, reward, frames)
    best_frames = frames
    best_index = 0
    records: list[IterationRecord] = []
    update_norm_sum = 0.0
    # Candidate numbering: 0 is the initial state; iteration m contributes
    # candidates 1 + m*(K+1) + j for particle j and ... + K for the update.
    for m in range(config.iterations):
        v_batch = np.empty((k, n, 3))
        omega_batch = np.empty((k, n, 3))
        rewards = np.empty(k)
        for j in range(k):
            rng = split_rng(config.seed, _STREAM_PARTICLE, m, j)
            v, omega = sample_frame_perturbation(n, config.sigma, rng)
            v_batch[j] = v
            omega_batch[j] = omega
            perturbed = FrameSet(
                rotations=so3_exp(config.sigma * omega) @ frames.rotations,
                translations=frames.translations + config.sigma * v,
            )
            rewards[j] = _evaluate(generator, reward, perturbed)
            if rewards[j] > best_reward:
                best_reward = rewards[j]
                best_frames = perturbed
                best_index = 1 + m * (k + 1) + j
        advantages = advantages_from_rewards(rewards, config.baseline)
        u_t, u_r = se3_control(advantages, v_batch, omega_batch, config.sigma)
        frames, info = se3_update(frames, u_t, u_r, config.eta, config.tau_t, config.tau_r)
        update_norm = info.update_norm
        state_reward = _evaluate(generator, reward, frames)
        if state_reward > best_reward:
            best_reward = state_reward
            best_frames = frames
            best_index = 1 + m * (k + 1) + k
        update_norm_sum += update_norm
        if keep_records:
            records.append(
                IterationRecord(
                    iteration=m,
                    rewards=rewards.copy(),
                    mean_reward=float(rewards.mean()),
                    control_norm=float(math.sqrt((u_t**2).sum() + (u_r**2).sum())),
                    noise_norm=float(math.sqrt((frames.translations**2).sum())),
                    best_so_far=float(best_reward),
                    update_norm=update_norm,
                    clipped_translations=info.clipped_translations,
                    clipped_rotations=info.clipped_rotations,
                    reorthonormalized=info.reorthonormalized,
                )
            )
    return Se3RunTrace(
        seed=config.seed,
        records=records,
        best_frames=best_frames,
        best_reward=float(best_reward),
        best_index=best_index,
        final_frames=frames,
        final_reward=_evaluate(generator, reward, frames),
        mean_update_norm=update_norm_sum / config.iterations,
    )


def identity_frame_set(n_residues: int) -> FrameSet:
    """N identity rotations with zero translations."""
    if not (isinstance(n_residues, int) and n_residues >= 1):
        raise ContractError("n_residues must be an integer >= 1")
    return FrameSet(
        rotations=np.broadcast_to(np.eye(3), (n_residues, 3, 3)).copy(),
        translations=np.zeros((n_residues, 3)),
    )


def random_frame_set(n_residues: int, seed: int, translation_scale: float = 3.0) -> FrameSet:
    """Random, centered frame set for synthetic matching problems.

    Rotations come from tangent vectors drawn uniformly in the radius-pi
    ball (reduced to 0.9 pi to stay clear of the antipodal boundary).
    """
    if not (isinstance(n_residues, int) and n_residues >= 1):
        raise ContractError("n_residues must be an integer >= 1")
    rng = split_rng(seed, 0)
    direction = rng.standard_normal((n_residues, 3))
    direction /= np.sqrt((direction**2).sum(axis=1, keepdims=True))
    radii = 0.9 * math.pi * rng.random(n_residues) ** (1.0 / 3.0)
    omega = direction * radii[:, None]
    translations = translation_scale * rng.standard_normal((n_residues, 3))
    return FrameSet(
        rotations=so3_exp(omega),
        translations=translations - translations.mean(axis=0),
    )


def frame_matching_reward(target: FrameSet) -> Callable[[FrameSet], float]:
    """Negative squared distance to a target frame set; maximum 0 at the target.

    Distance combines translation offsets and rotation geodesic angles:
    r(x) = -sum_i ( ||t_i - t*_i||^2 + angle(R_i, R*_i)^2 ).
    """

    def reward(frames: FrameSet) -> float:
        if frames.size != target.size:
            raise ContractError("frame set size does not match the target")
        dt = ((frames.translations - target.translations) ** 2).sum()
        ang = rotation_geodesic_angle(frames.rotations, target.rotations)
        return float(-(dt + (ang**2).sum()))

    return reward
