"""Command-line entry point: config loading, benchmark orchestration, output.

Configs are YAML with a strict schema: unknown keys are rejected before
any computation. Every emitted file starts with a header block carrying
the config hash, the seed span, and the artifact version; re-running the
same config produces byte-identical files regardless of --jobs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from .baselines import best_of_n, fd_langevin_many, match_fd_step_size
from .core import ConfigError, EstimatorKind, Generator, Reward, ZenoConfig, ZenoError
from .metrics import estimator_sweep, scaling_sweep
from .optimizer import zeno_optimize_many
from .se3 import Se3Baseline, Se3ZenoConfig, identity_frame_set, random_frame_set
from .se3 import frame_matching_reward, se3_zeno_optimize
from .toybench import (
    GmmWorld,
    discrete_kl,
    empirical_mode_distribution,
    flow_generator,
    make_circle_world,
    mode_reward_fn,
    tilted_target_distribution,
    uncontrolled_mode_distribution,
)

ARTIFACT_VERSION = 1

_TOP_KEYS = {
    "benchmark", "method", "seeds", "optimizer", "se3", "world",
    "best_of_n", "fd", "table1", "sweep", "output",
}
_BENCHMARKS = ("toy-gmm", "sphere-quadratic", "se3-match")
_METHODS = ("zeno", "best-of-n", "fd-langevin")
_OPTIMIZER_KEYS = {"beta", "eta", "particles", "iterations", "estimator", "lam", "renormalize"}
_SE3_KEYS = {"sigma", "eta", "particles", "iterations", "tau_t", "tau_r", "baseline"}
_GMM_WORLD_KEYS = {"target", "basin_masses", "lam", "radius", "sigma", "mode_rewards"}
_SPHERE_WORLD_KEYS = {"center"}
_SE3_WORLD_KEYS = {"n_residues", "target_seed", "translation_scale"}
_BEST_OF_N_KEYS = {"samples"}
_FD_KEYS = {"step_size", "noise_scale", "fd_epsilon"}
_TABLE1_KEYS = {"oracle_samples", "oracle_seed"}
_SWEEP_KEYS = {"n_grid", "m_grid"}


def _fail_config(message: str) -> "ConfigError":
    return ConfigError(message)


def _require_mapping(obj, context: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise _fail_config(f"{context} must be a mapping, got {type(obj).__name__}")
    return obj


def _check_keys(section: dict, allowed: set, context: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise _fail_config(
            f"unknown key{'s' if len(unknown) > 1 else ''} in {context}: "
            f"{', '.join(unknown)} (allowed: {', '.join(sorted(allowed))})"
        )


def load_config(path: str) -> dict:
    """Parse and schema-validate a YAML run config."""
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise _fail_config(f"cannot read config file {path}: {err}") from err
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise _fail_config(f"config file {path} is not valid YAML: {err}") from err
    cfg = _require_mapping(raw, "config")
    _check_keys(cfg, _TOP_KEYS, "config")
    benchmark = cfg.get("benchmark")
    if benchmark not in _BENCHMARKS:
        raise _fail_config(
            f"benchmark must be one of {', '.join(_BENCHMARKS)}, got {benchmark!r}"
        )
    method = cfg.get("method", "zeno")
    if method not in _METHODS:
        raise _fail_config(f"method must be one of {', '.join(_METHODS)}, got {method!r}")
    for key, allowed in (
        ("optimizer", _OPTIMIZER_KEYS),
        ("se3", _SE3_KEYS),
        ("best_of_n", _BEST_OF_N_KEYS),
        ("fd", _FD_KEYS),
        ("table1", _TABLE1_KEYS),
        ("sweep", _SWEEP_KEYS),
    ):
        cfg[key] = _require_mapping(cfg.get(key), key)
        _check_keys(cfg[key], allowed, key)
    world_allowed = {
        "toy-gmm": _GMM_WORLD_KEYS,
        "sphere-quadratic": _SPHERE_WORLD_KEYS,
        "se3-match": _SE3_WORLD_KEYS,
    }[benchmark]
    cfg["world"] = _require_mapping(cfg.get("world"), "world")
    _check_keys(cfg["world"], world_allowed, f"world ({benchmark})")
    cfg["benchmark"] = benchmark
    cfg["method"] = method
    return cfg


def resolve_seeds(cfg: dict, offset: int) -> list[int]:
    section = cfg.get("seeds", {"start": 0, "count": 10})
    if isinstance(section, list):
        try:
            seeds = [int(s) for s in section]
        except (TypeError, ValueError) as err:
            raise _fail_config(f"seeds list must contain integers: {err}") from err
        if not seeds:
            raise _fail_config("seeds list must be nonempty")
    elif isinstance(section, dict):
        _check_keys(section, {"start", "count"}, "seeds")
        try:
            start = int(section.get("start", 0))
            count = int(section.get("count"))
        except (TypeError, ValueError) as err:
            raise _fail_config(f"seeds.start and seeds.count must be integers: {err}") from err
        if count < 1:
            raise _fail_config(f"seeds.count must be >= 1, got {count}")
        seeds = list(range(start, start + count))
    else:
        raise _fail_config("seeds must be a list or a {start, count} mapping")
    seeds = [s + offset for s in seeds]
    for s in seeds:
        if not 0 <= s < 2**64:
            raise _fail_config(f"seed {s} (after offset) is outside [0, 2**64)")
    return seeds


def build_zeno_config(cfg: dict, seed: int = 0) -> ZenoConfig:
    section = dict(cfg["optimizer"])
    if "estimator" in section:
        section["estimator"] = EstimatorKind.from_name(str(section["estimator"]))
    try:
        return ZenoConfig(seed=seed, **section)
    except TypeError as err:
        raise _fail_config(f"invalid optimizer section: {err}") from err


def build_se3_config(cfg: dict, seed: int = 0) -> Se3ZenoConfig:
    section = dict(cfg["se3"])
    if "baseline" in section:
        name = str(section["baseline"]).lower()
        try:
            section["baseline"] = Se3Baseline(name)
        except ValueError as err:
            raise _fail_config(
                f"baseline must be 'mean' or 'median', got {name!r}"
            ) from err
    try:
        return Se3ZenoConfig(seed=seed, **section)
    except TypeError as err:
        raise _fail_config(f"invalid se3 section: {err}") from err


def build_gmm_world(cfg: dict) -> GmmWorld:
    section = cfg["world"]
    kwargs = {}
    for key in ("lam", "radius", "sigma"):
        if key in section:
            kwargs[key] = float(section[key])
    for key in ("target", "basin_masses"):
        if key in section:
            kwargs[key] = tuple(float(v) for v in section[key])
    world = make_circle_world(**kwargs)
    if "mode_rewards" in section:
        rewards = np.asarray([float(v) for v in section["mode_rewards"]], dtype=np.float64)
        world = GmmWorld(
            means=world.means,
            weights=world.weights,
            sigma=world.sigma,
            mode_rewards=rewards,
            lam=world.lam,
        )
    return world


def _build_vector_problem(cfg: dict) -> tuple[Generator, Reward]:
    if cfg["benchmark"] == "toy-gmm":
        world = build_gmm_world(cfg)
        return flow_generator(world), mode_reward_fn(world)
    center = cfg["world"].get("center")
    if center is None:
        center = [math.sqrt(2.0), 0.0]
    center = np.asarray([float(v) for v in center], dtype=np.float64)
    if center.ndim != 1 or center.size < 1:
        raise _fail_config("world.center must be a nonempty list of floats")
    dim = center.size
    generator = Generator(fn=lambda z: z, input_dim=dim, output_dim=dim, name="identity")
    reward = Reward(
        fn=lambda x: -((x - center) ** 2).sum(axis=-1),
        name="sphere-quadratic",
    )
    return generator, reward


def config_hash(cfg: dict, seeds: list[int], extra: dict | None = None) -> str:
    payload = {"config": _jsonable(cfg), "seeds": seeds, "version": ARTIFACT_VERSION}
    if extra:
        payload["extra"] = _jsonable(extra)
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
    return digest[:16]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return str(obj)


def _header_lines(cfg: dict, seeds: list[int], digest: str) -> list[str]:
    return [
        f"# zeno artifact v{ARTIFACT_VERSION}",
        f"# config_hash: {digest}",
        f"# benchmark: {cfg['benchmark']}",
        f"# seeds: {seeds[0]}..{seeds[-1]} (n={len(seeds)})",
    ]


def _write_csv(path: Path, header_lines: list[str], columns: list[str], rows: list[list]) -> None:
    lines = list(header_lines)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_format_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def _json_payload(cfg: dict, seeds: list[int], digest: str, body: dict) -> dict:
    return {
        "artifact_version": ARTIFACT_VERSION,
        "config_hash": digest,
        "benchmark": cfg["benchmark"],
        **body,
    }


def cmd_optimize(cfg: dict, out_dir: Path, seeds: list[int], jobs: int,
                 dump_trajectories: bool) -> int:
    digest = config_hash(cfg, seeds, {"dump_trajectories": dump_trajectories})
    header = _header_lines(cfg, seeds, digest)
    method = cfg["method"]
    if cfg["benchmark"] == "se3-match":
        if method != "zeno":
            raise _fail_config(f"method {method!r} is not supported on se3-match")
        return _optimize_se3(cfg, out_dir, seeds, header, digest)
    generator, reward = _build_vector_problem(cfg)
    rows = []
    if method == "zeno":
        base = build_zeno_config(cfg)
        traces = zeno_optimize_many(
            generator, reward, base, seeds,
            keep_records=True, keep_noise_path=dump_trajectories, jobs=jobs,
        )
        for t in traces:
            payload = _json_payload(cfg, seeds, digest, {"trace": t.to_dict()})
            _write_json(out_dir / f"trace_seed{t.seed}.json", payload)
            rows.append([t.seed, t.best_reward, t.final_reward, t.best_index,
                         t.mean_update_norm])
        columns = ["seed", "best_reward", "final_reward", "best_index", "mean_update_norm"]
    elif method == "fd-langevin":
        fd = cfg["fd"]
        if "step_size" not in fd:
            raise _fail_config("fd.step_size is required for method fd-langevin")
        traces = fd_langevin_many(
            generator, reward, seeds,
            steps=int(cfg["optimizer"].get("iterations", 200)),
            step_size=float(fd["step_size"]),
            noise_scale=None if fd.get("noise_scale") is None else float(fd["noise_scale"]),
            fd_epsilon=float(fd.get("fd_epsilon", 1e-4)),
            keep_records=True,
            jobs=jobs,
        )
        for t in traces:
            payload = _json_payload(cfg, seeds, digest, {"trace": t.to_dict()})
            _write_json(out_dir / f"trace_seed{t.seed}.json", payload)
            rows.append([t.seed, t.best_reward, t.final_reward, t.best_index,
                         t.mean_update_norm])
        columns = ["seed", "best_reward", "final_reward", "best_index", "mean_update_norm"]
    else:
        samples = int(cfg["best_of_n"].get("samples", 16))
        picks = {}
        for s in seeds:
            noise, value = best_of_n(generator, reward, generator.input_dim, samples, s)
            picks[str(s)] = {"noise": noise.tolist(), "reward": value}
            rows.append([s, value])
        _write_json(out_dir / "best_of_n.json",
                    _json_payload(cfg, seeds, digest, {"samples": samples, "picks": picks}))
        columns = ["seed", "best_reward"]
    _write_csv(out_dir / "summary.csv", header, columns, rows)
    return 0


def _optimize_se3(cfg: dict, out_dir: Path, seeds: list[int], header: list[str],
                  digest: str) -> int:
    world = cfg["world"]
    n_residues = int(world.get("n_residues", 8))
    target_seed = int(world.get("target_seed", 1000))
    scale = float(world.get("translation_scale", 3.0))
    rows = []
    for s in seeds:
        target = random_frame_set(n_residues, seed=target_seed + s, translation_scale=scale)
        reward = frame_matching_reward(target)
        x0 = identity_frame_set(n_residues)
        trace = se3_zeno_optimize(lambda f: f, reward, x0, build_se3_config(cfg, seed=s))
        payload = _json_payload(cfg, seeds, digest, {"trace": trace.to_dict()})
        _write_json(out_dir / f"trace_seed{s}.json", payload)
        gap = reward(x0)
        closure = 1.0 - trace.best_reward / gap if gap != 0 else 1.0
        rows.append([s, trace.best_reward, trace.final_reward, closure,
                     trace.mean_update_norm])
    _write_csv(out_dir / "summary.csv", header,
               ["seed", "best_reward", "final_reward", "gap_closure", "mean_update_norm"],
               rows)
    return 0


def cmd_table1(cfg: dict, out_dir: Path, seeds: list[int], jobs: int) -> int:
    if cfg["benchmark"] != "toy-gmm":
        raise _fail_config("table1 requires benchmark: toy-gmm")
    if len(seeds) < 100:
        raise _fail_config(
            f"table1 needs >= 100 seeds for mode frequencies, got {len(seeds)}"
        )
    digest = config_hash(cfg, seeds)
    header = _header_lines(cfg, seeds, digest)
    world = build_gmm_world(cfg)
    generator, reward = flow_generator(world), mode_reward_fn(world)
    oracle_samples = int(cfg["table1"].get("oracle_samples", 400_000))
    oracle_seed = int(cfg["table1"].get("oracle_seed", 99))
    target = tilted_target_distribution(world, oracle_samples, oracle_seed)

    base = build_zeno_config(cfg)
    traces = zeno_optimize_many(generator, reward, base, seeds,
                                keep_records=False, jobs=jobs)
    ours = empirical_mode_distribution(np.stack([t.final_sample for t in traces]), world)
    ours_kl = discrete_kl(ours, target)

    fd = cfg["fd"]
    if "step_size" in fd:
        step_size = float(fd["step_size"])
        noise_scale = None if fd.get("noise_scale") is None else float(fd["noise_scale"])
    else:
        mean_norm = float(np.mean([t.mean_update_norm for t in traces]))
        params = match_fd_step_size(generator, reward, mean_norm)
        step_size, noise_scale = params.step_size, params.noise_scale
    fd_traces = fd_langevin_many(
        generator, reward, seeds,
        steps=base.iterations, step_size=step_size, noise_scale=noise_scale,
        fd_epsilon=float(fd.get("fd_epsilon", 1e-4)), jobs=jobs,
    )
    grad = empirical_mode_distribution(np.stack([t.final_sample for t in fd_traces]), world)
    grad_kl = discrete_kl(grad, target)

    names = ["Target", "Ours", "Grad"]
    dists = [target, ours, grad]
    kls = [0.0, ours_kl, grad_kl]
    rows = [
        [names[i]] + [float(p) for p in dists[i].probabilities] + [kls[i]]
        for i in range(3)
    ]
    k = world.n_modes
    columns = ["row"] + [f"p{i}" for i in range(k)] + ["kl_to_target"]
    _write_csv(out_dir / "table1.csv", header, columns, rows)
    _write_json(out_dir / "table1.json", _json_payload(cfg, seeds, digest, {
        "rows": {
            names[i]: {"probabilities": dists[i].to_list(), "kl_to_target": kls[i]}
            for i in range(3)
        },
        "fd_step_size": step_size,
        "kl_ratio": grad_kl / ours_kl if ours_kl > 0 else math.inf,
    }))
    return 0


def cmd_sweep(kind: str, cfg: dict, out_dir: Path, seeds: list[int], jobs: int) -> int:
    if cfg["benchmark"] == "se3-match":
        raise _fail_config("sweeps run on the vector benchmarks only")
    del jobs  # cells are sequential; each cell is already block-vectorized
    digest = config_hash(cfg, seeds, {"sweep": kind})
    header = _header_lines(cfg, seeds, digest)
    generator, reward = _build_vector_problem(cfg)
    base = build_zeno_config(cfg)
    sweep_cfg = cfg["sweep"]
    if kind == "scaling":
        n_grid = [int(v) for v in sweep_cfg.get("n_grid", [2, 4, 8, 16])]
        m_grid = [int(v) for v in sweep_cfg.get("m_grid", [100])]
        cells = scaling_sweep(generator, reward, base, n_grid, m_grid, seeds)
    elif kind == "estimators":
        n_grid = [int(v) for v in sweep_cfg.get("n_grid", [4, 8, 16])]
        cells = estimator_sweep(generator, reward, base, n_grid, seeds)
    else:
        raise _fail_config(f"sweep kind must be 'scaling' or 'estimators', got {kind!r}")
    columns = ["estimator", "N", "M", "seed_count", "mean_reward", "stderr", "mean_vendi"]
    rows = [
        [c.estimator, c.particles, c.iterations, c.seed_count,
         c.mean_reward, c.stderr, c.mean_vendi]
        for c in cells
    ]
    _write_csv(out_dir / f"sweep_{kind}.csv", header, columns, rows)
    _write_json(out_dir / f"sweep_{kind}.json", _json_payload(cfg, seeds, digest, {
        "kind": kind,
        "cells": [c.to_dict() for c in cells],
    }))
    return 0


def _error_json(kind: str, message: str) -> str:
    return json.dumps({"error": {"type": kind, "message": message}}, sort_keys=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zeno",
        description="Gradient-free noise-space optimization benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the YAML run config")
    common.add_argument("--output", default="zeno-out", help="output directory")
    common.add_argument("--seed-offset", type=int, default=0,
                        help="added to every seed from the config")
    common.add_argument("--jobs", type=int, default=None,
                        help="parallel workers (default: ZENO_DEFAULT_JOBS or 1); "
                             "outputs do not depend on this")
    p_opt = sub.add_parser("optimize", parents=[common],
                           help="run the configured method over the seed list")
    p_opt.add_argument("--dump-trajectories", action="store_true",
                       help="include per-iteration noise states in trace files")
    sub.add_parser("table1", parents=[common],
                   help="target oracle vs optimizer fleet vs gradient baseline")
    p_sweep = sub.add_parser("sweep", parents=[common], help="scaling or estimator sweep")
    p_sweep.add_argument("kind", choices=["scaling", "estimators"])
    return parser


def _resolve_jobs(value) -> int:
    if value is None:
        raw = os.environ.get("ZENO_DEFAULT_JOBS", "1")
        try:
            value = int(raw)
        except ValueError as err:
            raise _fail_config(
                f"ZENO_DEFAULT_JOBS must be an integer, got {raw!r}"
            ) from err
    if value < 1:
        raise _fail_config(f"jobs must be >= 1, got {value}")
    return value


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        seeds = resolve_seeds(cfg, args.seed_offset)
        jobs = _resolve_jobs(args.jobs)
        out_dir = Path(args.output)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "optimize":
            return cmd_optimize(cfg, out_dir, seeds, jobs, args.dump_trajectories)
        if args.command == "table1":
            return cmd_table1(cfg, out_dir, seeds, jobs)
        return cmd_sweep(args.kind, cfg, out_dir, seeds, jobs)
    except ConfigError as err:
        print(_error_json("config", str(err)))
        return 2
    except ZenoError as err:
        print(_error_json("runtime", str(err)))
        return 3
    except Exception as err:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(_error_json("runtime", f"{type(err).__name__}: {err}"))
        return 3


if __name__ == "__main__":
    sys.exit(main())
