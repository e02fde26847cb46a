"""Pipeline stages that read and write artifacts under ``cfg.out_dir``.

    forward/   trajectories.csv, true_rewards.csv, policy.txt, returns.csv, true_reward.csv
    clone/     policy_00001.txt ... policy_<M>.txt
    reward/    beta.txt, losses.csv, learned_reward.csv, learned_reward.pgm
    eval/      results.csv, grids, bands, visitation, truncated estimate, norm series

Every stage directory also holds ``manifest.json`` (config hash, seeds, input
hashes) and every text artifact starts with ``#`` header lines carrying the
config hash and the seeds that produced it.
"""
from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evaluation, forward, kernels, reward, theory, tinynn
from .artifacts import (atomic_write_text, read_manifest, sha256_file, write_grid_csv,
                        write_manifest, write_pgm)
from .bundles import clone_policies, load_sequence, save_sequence
from .config import PipelineConfig
from .errors import MissingArtifactError
from .gridworld import new_env

log = logging.getLogger(__name__)

STAGES = ("forward", "clone", "reward", "eval")
PRODUCER = {
    "forward/trajectories.csv": "forward",
    "forward/policy.txt": "forward",
    "clone/manifest.json": "clone",
    "reward/beta.txt": "reward",
}


def _require(cfg: PipelineConfig, rel: str) -> Path:
    path = Path(cfg.out_dir) / rel
    if not path.exists():
        raise MissingArtifactError(f"{path} not found; run the '{PRODUCER[rel]}' stage first")
    return path


def _meta(cfg: PipelineConfig, **seeds) -> dict:
    return {"config_hash": cfg.hash(), "backend": kernels.BACKEND_NAME, **seeds}


def _stage_dir(cfg: PipelineConfig, name: str) -> Path:
    d = Path(cfg.out_dir) / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_config(cfg: PipelineConfig, d: Path) -> None:
    # out_dir is left blank so a copied run directory stays self-consistent
    atomic_write_text(d / "config.txt", replace(cfg, out_dir="").dumps())


def run_forward(cfg: PipelineConfig) -> Path:
    cfg.validate()
    d = _stage_dir(cfg, "forward")
    env = new_env(cfg.grid_config())
    f = cfg.forward
    run = forward.reinforce_train(env, cfg.forward_spec(), f.episodes, f.alpha, f.gamma, f.seed)
    meta = _meta(cfg, forward_seed=f.seed)
    forward.save_log(run.log, d / "trajectories.csv", meta)
    forward.save_true_rewards(run.log, env, d / "true_rewards.csv", meta)
    tinynn.save(run.policy, d / "policy.txt", meta)
    atomic_write_text(d / "returns.csv", "\n".join(
        [f"# {k}={v}" for k, v in meta.items()] + ["episode,return"]
        + [f"{i},{r!r}" for i, r in enumerate(run.returns.tolist())]) + "\n")
    write_grid_csv(d / "true_reward.csv", env.arrival_reward, cfg.grid.width, meta)
    write_pgm(d / "true_reward.pgm", env.arrival_reward, cfg.grid.width, meta=meta)
    _write_config(cfg, d)
    write_manifest(d / "manifest.json", {
        "stage": "forward", **meta, "env_hash": env.fingerprint(),
        "episodes": f.episodes,
        "last500_mean_return": float(run.returns[-500:].mean()),
    })
    return d


def _load_log(cfg: PipelineConfig):
    return forward.load_log(_require(cfg, "forward/trajectories.csv"))


def run_clone(cfg: PipelineConfig) -> Path:
    cfg.validate()
    log_path = _require(cfg, "forward/trajectories.csv")
    traj = forward.load_log(log_path)
    d = _stage_dir(cfg, "clone")
    b = cfg.bundle
    seq = clone_policies(traj, b.B, b.mode, cfg.clone_spec(), b.clone_lr, b.clone_epochs, b.seed,
                         independent=b.independent)
    for old in d.glob("policy_*.txt"):
        old.unlink()
    meta = _meta(cfg, clone_seed=b.seed)
    save_sequence(seq, d, {**meta, "inputs": {"forward/trajectories.csv": sha256_file(log_path)}})
    _write_config(cfg, d)
    return d


def _load_sequence(cfg: PipelineConfig, traj):
    _require(cfg, "clone/manifest.json")
    return load_sequence(Path(cfg.out_dir) / "clone", traj)


def run_reward(cfg: PipelineConfig) -> Path:
    cfg.validate()
    traj = _load_log(cfg)
    seq = _load_sequence(cfg, traj)
    d = _stage_dir(cfg, "reward")
    bc = cfg.beta
    seed = bc.seeds[0]
    fit = reward.train_beta(traj, seq, cfg.beta_spec(), cfg.forward.gamma, bc.Z, bc.F, bc.lr, seed,
                            bc.gradient_mode)
    meta = _meta(cfg, beta_seed=seed)
    tinynn.save(fit.beta, d / "beta.txt", meta)
    atomic_write_text(d / "losses.csv", "\n".join(
        [f"# {k}={v}" for k, v in meta.items()] + ["episode,loss"]
        + [f"{i},{x!r}" for i, x in enumerate(fit.losses.tolist())]) + "\n")
    est = reward.predict_rewards(fit.beta)
    write_grid_csv(d / "learned_reward.csv", est, cfg.grid.width, meta)
    write_pgm(d / "learned_reward.pgm", est, cfg.grid.width, meta=meta)
    _write_config(cfg, d)
    root = Path(cfg.out_dir)
    write_manifest(d / "manifest.json", {
        "stage": "reward", **meta, "gradient_mode": bc.gradient_mode,
        "final_loss": float(fit.losses[-1]),
        "inputs": {rel: sha256_file(root / rel) for rel in ("forward/trajectories.csv", "clone/manifest.json")},
    })
    return d


def run_eval(cfg: PipelineConfig) -> Path:
    cfg.validate()
    traj = _load_log(cfg)
    seq = _load_sequence(cfg, traj)
    beta = tinynn.load(_require(cfg, "reward/beta.txt"))
    fpol = tinynn.load(_require(cfg, "forward/policy.txt"))
    env = new_env(cfg.grid_config())
    d = _stage_dir(cfg, "eval")
    ev, f, bc = cfg.eval, cfg.forward, cfg.beta
    meta = _meta(cfg, forward_seed=f.seed, clone_seed=cfg.bundle.seed, beta_seeds=" ".join(
        map(str, bc.seeds[:ev.runs])), retrain_seed=ev.retrain_seed, eval_seed=ev.eval_seed)
    w = cfg.grid.width

    fmean, fstd = evaluation.evaluate_policy(fpol, env, ev.n_episodes, ev.eval_seed)
    retrain_spec = tinynn.NetSpec(cfg.bundle.layer_sizes, "softmax", ev.retrain_seed)
    rt = evaluation.retrain_from_beta(beta, env, retrain_spec, f.episodes, f.alpha, f.gamma,
                                      ev.retrain_seed, ev.reward_transform, ev.reward_scale,
                                      ev.n_episodes, ev.eval_seed)
    arch = ",".join(map(str, cfg.bundle.layer_sizes))
    label = f"BBC {arch}" + (" independent" if cfg.bundle.independent else "")
    rows = [
        evaluation.ResultRow(f"forward {','.join(map(str, f.layer_sizes))}", fmean, fstd, (ev.eval_seed,)),
        evaluation.ResultRow(label, rt.mean, rt.std, (ev.retrain_seed, ev.eval_seed)),
    ]
    evaluation.write_results_csv(d / "results.csv", rows, [f"# {k}={v}" for k, v in meta.items()])
    tinynn.save(rt.policy, d / "retrained_policy.txt", meta)

    learned = evaluation.normalize_grid(reward.predict_rewards(beta))
    true = evaluation.normalize_grid(env.arrival_reward, "true")
    coef = reward.residual_coefficients(seq, f.gamma, bc.gradient_mode)
    bands = evaluation.confidence_bands(traj, seq, beta.spec, f.gamma, bc.Z, bc.F, bc.lr,
                                        bc.seeds[:ev.runs], bc.gradient_mode, coef)
    grids = {"normalized_learned": learned.values, "normalized_true": true.values,
             "band_lower": bands.lower, "band_upper": bands.upper, "band_mean": bands.mean,
             "visitation_percent": bands.visitation}
    first_k = min(ev.first_k, len(seq))
    if first_k >= 2:
        trunc = reward.train_beta(traj, evaluation.truncate_bundles(seq, first_k), beta.spec, f.gamma,
                                  bc.Z, bc.F, bc.lr, bc.seeds[0], bc.gradient_mode)
        grids[f"normalized_first{first_k}"] = evaluation.normalize_grid(
            reward.predict_rewards(trunc.beta)).values
    for name, values in grids.items():
        write_grid_csv(d / f"{name}.csv", values, w, meta)
        write_pgm(d / f"{name}.pgm", values, w, meta=meta)

    norms, diffs = evaluation.last_layer_norm_series(seq)
    atomic_write_text(d / "last_layer_norms.csv", "\n".join(
        [f"# {k}={v}" for k, v in meta.items()] + ["bundle,norm,abs_diff_to_next"]
        + [f"{k + 1},{n!r},{(diffs[k] if k < len(diffs) else float('nan'))!r}"
           for k, n in enumerate(norms.tolist())]) + "\n")

    eps = theory.estimate_epsilon(seq) if len(seq) >= 2 else float("nan")
    _write_config(cfg, d)
    root = Path(cfg.out_dir)
    write_manifest(d / "manifest.json", {
        "stage": "eval", **meta,
        "forward_mean": fmean, "forward_std": fstd,
        "retrained_mean": rt.mean, "retrained_std": rt.std,
        "retrained_steps_to_goal": rt.steps_to_goal,
        "reward_transform": ev.reward_transform, "reward_scale": ev.reward_scale,
        "learned_argmax": int(np.argmax(learned.values)),
        "band_visitation_spearman": bands.rank_correlation(),
        "epsilon_estimate": eps,
        "mean_abs_norm_diff": float(diffs.mean()) if len(diffs) else 0.0,
        "inputs": {rel: sha256_file(root / rel) for rel in
                   ("forward/trajectories.csv", "clone/manifest.json", "reward/beta.txt")},
    })
    return d


RUNNERS = {"forward": run_forward, "clone": run_clone, "reward": run_reward, "eval": run_eval}


def run_pipeline(cfg: PipelineConfig) -> Path:
    for name in STAGES:
        log.info("stage %s", name)
        RUNNERS[name](cfg)
    return Path(cfg.out_dir)


def read_stage_manifest(cfg: PipelineConfig, stage: str) -> dict:
    path = Path(cfg.out_dir) / stage / "manifest.json"
    if not path.exists():
        raise MissingArtifactError(f"{path} not found; run the '{stage}' stage first")
    return read_manifest(path)
