"""Run orchestration: environments from config, four-phase execution, baselines,
metrics persistence, and sweeps.

Phase layout for the main method:
  P1 recover causal masks from random-policy data and estimate each source
     domain's factor by grid MLE;
  P2 build the compressed table keys from the abstracted compact
     representations;
  P3 meta actor-critic over the source domains;
  P4 estimate the target domain factor from a handful of trajectories and
     evaluate the frozen policy.

Baselines replace P1-P2 with raw neighborhood tables and differ in how (or
whether) they adapt. Every run is deterministic given the config seed; all
randomness flows through named sub-streams derived from it.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from gsac import __version__
from gsac.acr import domain_acr, policy_acr_fixed_point, value_acr
from gsac.baselines import run_sac_ft, run_sac_lfs, run_sac_mtl
from gsac.core import AgentSpaces, NetworkGraph
from gsac.discovery import estimate_domain_factor, recover_causal_masks
from gsac.envs import build_synthetic, build_traffic, build_wireless
from gsac.envs.base import Environment, rollout_random
from gsac.harness.config import ExperimentConfig, config_hash, config_text
from gsac.learner import (
    EpisodeLog,
    StepsizeSchedule,
    adapt_and_deploy,
    build_acr_keys,
    build_raw_keys,
    run_meta_training,
)

CSV_COLUMNS = (
    "method", "phase", "grid_size", "omega_target", "seed", "k_or_episode",
    "domain_index", "return_discounted", "critic_delta", "grad_norm", "wall_ms",
)


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    method: str
    version: str = __version__
    phase_seconds: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    metrics_csv: str = ""
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _derived_seed(*parts: int) -> int:
    return int(np.random.default_rng(parts).integers(0, 2**63 - 1))


def build_environments(config: ExperimentConfig) -> tuple[list[Environment], Environment]:
    """One source environment per grid value, plus the target environment.

    The build grid is extended with the target value so the target dynamics
    can be represented even when omega_target is off the source grid;
    conditioning and estimation always use the source grid.
    """
    full_grid = tuple(sorted(set(config.omega_grid) | {config.omega_target}))
    if config.kind == "wireless":
        base = build_wireless(
            config.grid_size, full_grid[0], deadline=config.deadline,
            seed=config.env_seed, omega_grid=full_grid,
        )
    elif config.kind == "traffic":
        base = build_traffic(
            config.grid_size, full_grid[0], capacity=config.capacity,
            seed=config.env_seed, omega_grid=full_grid,
        )
    else:
        graph = NetworkGraph.chain(config.n_agents)
        spaces = AgentSpaces.uniform(
            config.n_agents, config.d_s, config.state_card, config.action_card
        )
        base = build_synthetic(
            graph, spaces, config.mask_density, full_grid, config.env_seed
        )
    sources = [base.with_omega_value(v) for v in config.omega_grid]
    target = base.with_omega_value(config.omega_target)
    return sources, target


def _write_masks(path: str, masks) -> None:
    lines = []
    for name in ("s_to_s", "a_to_s", "w_to_s", "s_to_r", "a_to_r", "w_to_r"):
        lines.append(f"{name} = {getattr(masks, name)!r}")
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_omega_hats(path: str, estimates) -> None:
    lines = []
    for m, est in enumerate(estimates):
        lines.append(f"domain {m}: grid={est.grid} t_e={est.t_e}")
        for i, v in enumerate(est.omega_hat):
            lines.append(f"  agent {i}: omega_hat={_fmt(v)}")
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_acr_maps(path: str, masks, graph, spaces, kappa: int) -> None:
    pol = policy_acr_fixed_point(masks, graph, spaces)
    lines = []
    for i in range(graph.n):
        v = value_acr(masks, graph, spaces, i, kappa)
        d = domain_acr(masks, graph, spaces, v, i)
        lines.append(f"agent {i}:")
        lines.append(f"  value_acr (kappa={kappa}): {sorted(v.components)}")
        lines.append(f"  policy_acr: {sorted(pol[i].components)}")
        lines.append(f"  domain_acr: {sorted(d.components)}")
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_policy_tables(path: str, policy) -> None:
    lines = [f"tau_soft = {_fmt(policy.tau)}", f"theta_max = {_fmt(policy.theta_max)}"]
    for i, table in enumerate(policy.logits):
        lines.append(f"agent {i}: {len(table)} keys")
        for key in sorted(table, key=repr):
            vals = ", ".join(_fmt(v) for v in table[key])
            lines.append(f"  {key!r}: [{vals}]")
    _atomic_write(path, "\n".join(lines) + "\n")


def _metric_rows(config: ExperimentConfig, phase: str, logs) -> list[list[str]]:
    rows = []
    for log in logs:
        rows.append([
            config.method, phase, str(config.grid_size), _fmt(config.omega_target),
            str(config.seed), str(log.k), str(log.domain_index),
            _fmt(log.return_discounted), _fmt(log.critic_delta),
            _fmt(log.grad_norm), "0",
        ])
    return rows


def _write_metrics(path: str, rows: list[list[str]]) -> None:
    buf = [",".join(CSV_COLUMNS)]
    for row in rows:
        buf.append(",".join(row))
    _atomic_write(path, "\n".join(buf) + "\n")


def run_experiment(config: ExperimentConfig) -> RunManifest:
    """Execute all phases for the configured method; write artifacts + metrics.

    On a phase failure the manifest records the failure and whatever artifacts
    were already written (callers should exit nonzero when manifest.ok is
    False).
    """
    out = config.out
    os.makedirs(out, exist_ok=True)
    manifest = RunManifest(
        config_hash=config_hash(config), seed=config.seed, method=config.method
    )
    _atomic_write(os.path.join(out, "config.txt"), config_text(config))
    manifest.artifacts["config"] = os.path.join(out, "config.txt")
    rows: list[list[str]] = []
    try:
        _run_phases(config, manifest, rows)
    except Exception as exc:  # noqa: BLE001 - failures go into the manifest
        manifest.failures.append(f"{type(exc).__name__}: {exc}")
    metrics_path = os.path.join(out, "metrics.csv")
    _write_metrics(metrics_path, rows)
    manifest.metrics_csv = metrics_path
    _atomic_write(
        os.path.join(out, "manifest.json"),
        json.dumps(manifest.__dict__, indent=2, sort_keys=True) + "\n",
    )
    manifest.artifacts["manifest"] = os.path.join(out, "manifest.json")
    return manifest


def _run_phases(config: ExperimentConfig, manifest: RunManifest, rows: list) -> None:
    seed = config.seed
    schedule = StepsizeSchedule(
        critic_mode=config.alpha_mode, alpha=config.alpha, h=config.h, t0=config.t0,
        actor_mode=config.eta_mode, eta=config.eta,
    )
    t0 = time.perf_counter()
    sources, target = build_environments(config)
    manifest.phase_seconds["build"] = time.perf_counter() - t0

    if config.method == "GSAC":
        _run_gsac(config, manifest, rows, sources, target, schedule)
        return

    t0 = time.perf_counter()
    if config.method == "SAC-MTL":
        _, train_logs, adapt_logs = run_sac_mtl(
            sources, target, config.kappa, config.iterations, config.horizon,
            schedule, seed, config.eval_episodes, gamma=config.gamma,
            tau_soft=config.tau_soft, theta_max=config.theta_max,
            warm_start=config.warm_start,
        )
    elif config.method == "SAC-FT":
        _, train_logs, adapt_logs = run_sac_ft(
            sources, target, config.kappa, config.iterations, config.horizon,
            schedule, seed, fine_tune_budget=config.eval_episodes,
            gamma=config.gamma, tau_soft=config.tau_soft, theta_max=config.theta_max,
            warm_start=config.warm_start,
        )
    else:  # SAC-LFS: no source phase at all; the target run is the whole curve
        _, logs = run_sac_lfs(
            target, config.kappa, config.horizon, schedule, seed,
            episodes=config.iterations, gamma=config.gamma,
            tau_soft=config.tau_soft, theta_max=config.theta_max,
            warm_start=config.warm_start,
        )
        train_logs = logs
        adapt_logs = [  # few-shot window: its own first episodes on the target
            EpisodeLog(
                k=i, domain_index=log.domain_index, states=log.states,
                actions=log.actions, rewards=log.rewards,
                return_discounted=log.return_discounted,
                grad_norm=log.grad_norm, critic_delta=log.critic_delta,
            )
            for i, log in enumerate(logs[: config.eval_episodes])
        ]
    manifest.phase_seconds["P3:train"] = time.perf_counter() - t0
    rows.extend(_metric_rows(config, "train", train_logs))
    rows.extend(_metric_rows(config, "adapt", adapt_logs))
    manifest.phase_seconds["P4:adapt"] = 0.0


def _run_gsac(config, manifest, rows, sources, target, schedule) -> None:
    out = config.out
    seed = config.seed
    graph, spaces = target.graph, target.spaces

    # P1: causal recovery + per-source-domain factor estimation.
    t0 = time.perf_counter()
    if config.acr_free:
        masks = target.masks  # ablation: skip recovery, keep the MLE exact
    else:
        recovery_data = [
            rollout_random(env, config.recovery_episodes, config.horizon,
                           _derived_seed(seed, 11, m))
            for m, env in enumerate(sources)
        ]
        result = recover_causal_masks(
            recovery_data, graph, spaces, config.lambda_threshold
        )
        masks = result.masks
        _write_masks(os.path.join(out, "masks.txt"), masks)
        manifest.artifacts["masks"] = os.path.join(out, "masks.txt")
    estimates = []
    for m, env in enumerate(sources):
        trs = rollout_random(env, config.t_e, config.horizon, _derived_seed(seed, 12, m))
        estimates.append(estimate_domain_factor(trs, masks, env, config.omega_grid))
    _write_omega_hats(os.path.join(out, "omega_hat.txt"), estimates)
    manifest.artifacts["omega_hat"] = os.path.join(out, "omega_hat.txt")
    manifest.phase_seconds["P1:recovery"] = time.perf_counter() - t0

    # P2: table keys from the compact representations.
    t0 = time.perf_counter()
    if config.acr_free:
        keys = build_raw_keys(graph, spaces, config.kappa)
    else:
        keys = build_acr_keys(masks, graph, spaces, config.kappa)
        _write_acr_maps(os.path.join(out, "acr_maps.txt"), masks, graph, spaces,
                        config.kappa)
        manifest.artifacts["acr_maps"] = os.path.join(out, "acr_maps.txt")
    manifest.phase_seconds["P2:acr"] = time.perf_counter() - t0

    # P3: meta-training across source domains, conditioned on the estimates.
    t0 = time.perf_counter()
    policy, train_logs = run_meta_training(
        sources, [e.to_domain_factor() for e in estimates], keys,
        config.iterations, config.horizon, schedule, _derived_seed(seed, 13),
        gamma=config.gamma, tau_soft=config.tau_soft, theta_max=config.theta_max,
        warm_start=config.warm_start,
    )
    manifest.phase_seconds["P3:train"] = time.perf_counter() - t0
    rows.extend(_metric_rows(config, "train", train_logs))
    _write_policy_tables(os.path.join(out, "policy.txt"), policy)
    manifest.artifacts["policy"] = os.path.join(out, "policy.txt")

    # P4: target-domain estimation and frozen deployment.
    t0 = time.perf_counter()
    est, eval_logs = adapt_and_deploy(
        policy, target, masks, keys, config.t_a, _derived_seed(seed, 14),
        config.eval_episodes, config.horizon, gamma=config.gamma,
        omega_grid=config.omega_grid,
    )
    manifest.phase_seconds["P4:adapt"] = time.perf_counter() - t0
    rows.extend(_metric_rows(config, "adapt", eval_logs))
    _write_omega_hats(os.path.join(out, "omega_hat_target.txt"), [est])
    manifest.artifacts["omega_hat_target"] = os.path.join(out, "omega_hat_target.txt")


def run_sweep(configs, parallelism: int = 1) -> list[RunManifest]:
    """Run each config in an isolated subdirectory of its own `out`.

    Failures are isolated per run. Writes sweep_summary.csv (one row per run:
    early-window and final-window mean adaptation returns) next to the first
    config's output directory parent.
    """
    manifests = []
    if not configs:
        return manifests
    if parallelism > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            manifests = list(pool.map(run_experiment, configs))
    else:
        manifests = [run_experiment(c) for c in configs]
    summary_path = os.path.join(
        os.path.dirname(os.path.abspath(configs[0].out)), "sweep_summary.csv"
    )
    lines = ["method,grid_size,omega_target,seed,early_mean,final_mean,ok"]
    for cfg, man in zip(configs, manifests):
        early, final = _window_means(man.metrics_csv)
        lines.append(",".join([
            cfg.method, str(cfg.grid_size), _fmt(cfg.omega_target), str(cfg.seed),
            _fmt(early), _fmt(final), str(man.ok),
        ]))
    _atomic_write(summary_path, "\n".join(lines) + "\n")
    return manifests


def _window_means(metrics_csv: str, window: int = 10) -> tuple[float, float]:
    returns = []
    if os.path.exists(metrics_csv):
        with open(metrics_csv) as fh:
            for row in csv.DictReader(fh):
                if row["phase"] == "adapt":
                    returns.append(float(row["return_discounted"]))
    if not returns:
        return float("nan"), float("nan")
    w = min(window, len(returns))
    return float(np.mean(returns[:w])), float(np.mean(returns[-w:]))
