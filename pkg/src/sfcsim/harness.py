"""Commands behind the CLI: generate-trace, cluster, train, eval.

Each command is a pure function of (config, options) writing CSV artifacts
into the output directory. All randomness is derived from the master seed,
so rerunning a command with the same config produces byte-identical files.
"""

import csv
import logging
import time
from pathlib import Path

from . import clustering, policies, ppo, trace as trace_mod
from .config import ConfigError, ExperimentConfig, config_hash
from .env import EnvConfig, SfcEnv, write_step_records
from .policy import PolicyNetwork
from .seeding import derive_seed

logger = logging.getLogger(__name__)


def _comments(cfg: ExperimentConfig) -> list[str]:
    return [f"config_hash={config_hash(cfg)} seed={cfg.master_seed}"]


def _write_csv(path, header: list[str], rows, comments: list[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def _fmt(x) -> str:
    return f"{float(x):.6f}"


# ------------------------------------------------------------------- inputs

def build_trace(cfg: ExperimentConfig) -> trace_mod.SteppedTrace:
    """Load or generate the full stepped trace named by the config."""
    tc = cfg.trace
    if tc.source == "synthetic":
        profile = trace_mod.DiurnalProfile(
            amplitude=tc.amplitude, noise=tc.noise,
            mean_step_total=tc.mean_step_total)
        return trace_mod.generate_synthetic_trace(
            tc.n_cells, tc.n_steps, derive_seed(cfg.master_seed, "trace"),
            profile, tc.step_duration, tc.origin_time_ms)
    if tc.source == "csv":
        if not tc.path:
            raise ConfigError("trace.source=csv requires trace.path")
        return trace_mod.read_trace_csv(tc.path)
    if tc.source == "cdr":
        if not tc.path:
            raise ConfigError(
                "trace.source=cdr requires trace.path pointing at the CDR "
                "dataset; use source=synthetic when the dataset is absent")
        cell_filter = set(cfg.cells) if cfg.cells else None
        result = trace_mod.load_cdr_file(tc.path, cell_filter)
        if not result.records:
            raise ConfigError(f"no usable records in {tc.path}")
        cells = sorted({r.cell_id for r in result.records})
        step_ms = tc.step_duration * 1000
        t_min = min(r.timestamp_ms for r in result.records)
        t_max = max(r.timestamp_ms for r in result.records)
        start = (t_min // step_ms) * step_ms
        end = ((t_max // step_ms) + 1) * step_ms
        return trace_mod.aggregate_steps(result.records, cells,
                                         tc.step_duration, (start, end))
    raise ConfigError(f"unknown trace.source {tc.source!r}")


def select_managed_cells(cfg: ExperimentConfig,
                         full: trace_mod.SteppedTrace) -> trace_mod.SteppedTrace:
    """Restrict the trace to the managed cell set (explicit list or cluster)."""
    if cfg.cells:
        return full.select_cells(sorted(cfg.cells))
    if cfg.cluster.model_path and cfg.cluster.select_index is not None:
        model = clustering.ClusterModel.load(cfg.cluster.model_path)
        cells = clustering.select_cells(model, cfg.cluster.select_index)
        if not cells:
            raise ConfigError(
                f"cluster {cfg.cluster.select_index} in {cfg.cluster.model_path} is empty")
        return full.select_cells(cells)
    return full


def build_envs(cfg: ExperimentConfig) -> tuple[SfcEnv, SfcEnv]:
    """(train_env_template, test_env) for the configured experiment.

    The training env uses raw config episode settings; the test env always
    runs the full test split from step 0. Observation normalization, when
    enabled, is anchored to the train split's maximum activity for both.
    """
    full = select_managed_cells(cfg, build_trace(cfg))
    split = trace_mod.split_train_test(full, cfg.trace.split_fraction)
    env_cfg = cfg.env
    if env_cfg.normalize_obs and env_cfg.activity_scale is None:
        scale = float(split.train.steps.max())
        env_cfg = EnvConfig(**{**vars(env_cfg), "activity_scale": scale or 1.0})
    train_env = SfcEnv(split.train, cfg.topology, cfg.failure, cfg.energy, env_cfg)
    test_cfg = EnvConfig(**{**vars(env_cfg), "eval_mode": True,
                            "episode_length": None})
    test_env = SfcEnv(split.test, cfg.topology, cfg.failure, cfg.energy, test_cfg)
    return train_env, test_env


# ----------------------------------------------------------------- commands

def cmd_generate_trace(cfg: ExperimentConfig, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    tr = build_trace(cfg)
    path = out_dir / "trace.csv"
    trace_mod.write_trace_csv(tr, path, _comments(cfg))
    logger.info("wrote %s (%d steps x %d cells)", path, tr.n_steps, tr.n_cells)
    return path


def cmd_cluster(cfg: ExperimentConfig, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    tr = build_trace(cfg)
    profiles = clustering.compute_period_profiles(tr, cfg.cluster.utc_offset_hours)
    k_max = min(cfg.cluster.k_max, len(profiles))
    scan = clustering.elbow_scan(profiles, (cfg.cluster.k_min, k_max),
                                 derive_seed(cfg.master_seed, "kmeans"))
    clustering.write_elbow_csv(scan, out_dir / "elbow.csv", _comments(cfg))
    k = min(cfg.cluster.k, len(profiles))
    model = clustering.kmeans_fit(profiles, k, derive_seed(cfg.master_seed, "kmeans"))
    model.save(out_dir / "cluster_model.npz")
    clustering.write_cluster_map_csv(model, out_dir / "cluster_map.csv", _comments(cfg))
    suggestion = clustering.suggest_elbow_k(scan)
    sizes = {j: len(clustering.select_cells(model, j)) for j in range(model.k)}
    logger.info("fitted k=%d (sse=%.3f); elbow suggestion k=%d; cluster sizes %s",
                k, model.sse, suggestion, sizes)
    return {"k": k, "sse": model.sse, "suggested_k": suggestion, "sizes": sizes}


def cmd_train(cfg: ExperimentConfig, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    train_env, _ = build_envs(cfg)

    def env_factory(index: int) -> SfcEnv:
        return SfcEnv(train_env.trace, cfg.topology, cfg.failure, cfg.energy,
                      train_env.config)

    ppo_cfg = cfg.ppo
    ppo_cfg.seed = derive_seed(cfg.master_seed, "ppo")
    started = time.time()
    net, log = ppo.train(env_factory, ppo_cfg)
    elapsed = time.time() - started
    logger.info("trained %d env steps in %.1fs (aborted=%s, episodes=%d)",
                ppo_cfg.total_steps, elapsed, log.aborted, len(log.episodes))

    checkpoint = out_dir / "checkpoint.npz"
    net.save(checkpoint, config_hash(cfg), cfg.master_seed)
    _write_csv(out_dir / "training_updates.csv",
               ["update", "loss", "policy_loss", "value_loss",
                "entropy", "clip_fraction", "kl"],
               ([row["update"], _fmt(row["loss"]),
                 _fmt(row["policy_loss"]), _fmt(row["value_loss"]),
                 _fmt(row["entropy"]), _fmt(row["clip_fraction"]),
                 _fmt(row["kl"])] for row in log.updates),
               _comments(cfg))
    _write_csv(out_dir / "training_steps.csv",
               ["step", "reward", "sfc", "packets"],
               ([row["step"], _fmt(row["reward"]), row["sfc"],
                 _fmt(row["packets"]) if row["packets"] != "" else ""]
                for row in log.env0_steps),
               _comments(cfg))
    _write_csv(out_dir / "training_episodes.csv",
               ["env", "global_step", "length", "total_reward", "total_lost",
                "sfc_steps"],
               ([e.env_index, e.global_step, e.length, _fmt(e.total_reward),
                 _fmt(e.total_lost), e.sfc_steps] for e in log.episodes),
               _comments(cfg))
    return checkpoint


def _resolve_policy(name_or_path: str, env: SfcEnv, seed: int):
    if name_or_path in policies.BASELINE_NAMES:
        return policies.make_baseline(name_or_path, env, seed)
    net = PolicyNetwork.load(name_or_path, expect_obs_dim=env.obs_dim,
                             expect_head_sizes=env.head_sizes)
    return policies.PpoPolicy(net, greedy=True)


def cmd_eval(cfg: ExperimentConfig, out_dir: Path, policy_spec: str,
             quick: bool = False) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    _, test_env = build_envs(cfg)
    policy = _resolve_policy(policy_spec, test_env, cfg.master_seed)
    n_runs = cfg.eval.quick_runs if quick else cfg.eval.n_runs
    result = policies.evaluate_policy(policy, test_env, n_runs,
                                      master_seed=cfg.master_seed)

    cum_reward = result.cumulative_reward()
    cum_lost = result.cumulative_lost()
    rows = []
    for t in range(result.n_steps):
        rows.append([
            t,
            _fmt(result.rewards[:, t].mean()), _fmt(result.rewards[:, t].std()),
            _fmt(cum_reward[:, t].mean()), _fmt(cum_reward[:, t].std()),
            _fmt(result.lost[:, t].mean()), _fmt(result.lost[:, t].std()),
            _fmt(cum_lost[:, t].mean()), _fmt(cum_lost[:, t].std()),
            _fmt(result.sfc[:, t].mean()),
            _fmt(result.energy[:, t].mean()), _fmt(result.energy[:, t].std()),
        ])
    label = Path(policy_spec).stem if policy_spec not in policies.BASELINE_NAMES \
        else policy_spec
    _write_csv(out_dir / f"eval_steps_{label}.csv",
               ["step", "reward_mean", "reward_std", "cum_reward_mean",
                "cum_reward_std", "lost_mean", "lost_std", "cum_lost_mean",
                "cum_lost_std", "sfc_mean", "energy_mean", "energy_std"],
               rows, _comments(cfg))

    write_step_records(result.step_records,
                       out_dir / f"eval_run0_steps_{label}.csv", _comments(cfg))

    summary = result.summary()
    _write_csv(out_dir / f"eval_summary_{label}.csv",
               ["policy", "n_runs", "total_lost_packets", "mean_reward",
                "mean_energy_w", "sfc_uptime_fraction"],
               [[label, result.n_runs, _fmt(summary["total_lost_packets"]),
                 _fmt(summary["mean_reward"]), _fmt(summary["mean_energy_w"]),
                 _fmt(summary["sfc_uptime_fraction"])]],
               _comments(cfg))
    logger.info("eval %s over %d runs: %s", label, n_runs, summary)
    return summary
