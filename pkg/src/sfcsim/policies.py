"""Acting policies (trained and baselines) plus seeded evaluation rollouts.

A policy exposes ``reset(seed)`` and ``act(obs, env) -> ActionTuple``. The
learned policy only looks at the observation; the rule-based baseline may
inspect the simulator state directly.
"""

from dataclasses import dataclass, field

import numpy as np

from .env import ActionTuple, SfcEnv
from .policy import PolicyNetwork
from .seeding import derive_seed, entity_rng
from .simcore import N_VNF_TYPES, vnf_fail_risk


class NoopPolicy:
    """Always leaves the environment unchanged."""

    def reset(self, seed: int) -> None:
        pass

    def act(self, obs, env) -> ActionTuple:
        return ActionTuple(4, 0, 0, 0)


class RandomPolicy:
    """Uniform over the valid action space, seed-deterministic."""

    def __init__(self, head_sizes: tuple[int, int, int, int], seed: int = 0):
        self.head_sizes = head_sizes
        self._rng = entity_rng(seed, 30)

    def reset(self, seed: int) -> None:
        self._rng = entity_rng(seed, 30)

    def act(self, obs, env) -> ActionTuple:
        comps = [int(self._rng.integers(size)) for size in self.head_sizes]
        return ActionTuple(comps[0] + 1, comps[1], comps[2], comps[3])


class StaticGreedyPolicy:
    """Deterministic rule: complete the chain, then refresh risky instances.

    If some VNF type has no operational instance, create one on the
    least-loaded up server with room for it; otherwise restart the instance
    with the highest fail-risk score once it exceeds the threshold; otherwise
    do nothing.
    """

    def __init__(self, risk_threshold: float = 0.5):
        self.risk_threshold = risk_threshold

    def reset(self, seed: int) -> None:
        pass

    def act(self, obs, env: SfcEnv) -> ActionTuple:
        sim = env.sim
        counts = sim.operational_type_counts()
        for vnf_type in range(N_VNF_TYPES):
            if counts[vnf_type] == 0:
                target = self._least_loaded(sim, vnf_type)
                if target is not None:
                    return ActionTuple(1, target[0], target[1], vnf_type)
        riskiest = None
        for server, inst in sim.instances():
            if not (server.up and inst.up):
                continue
            risk = vnf_fail_risk(inst, sim.time, sim.failure.mttf_vnf)
            if risk > self.risk_threshold and (riskiest is None or risk > riskiest[0]):
                riskiest = (risk, server.dc_id, server.server_id, inst.vnf_type)
        if riskiest is not None:
            return ActionTuple(3, riskiest[1], riskiest[2], riskiest[3])
        return ActionTuple(4, 0, 0, 0)

    @staticmethod
    def _least_loaded(sim, vnf_type: int):
        best = None
        for row in sim.servers:
            for server in row:
                if not server.up:
                    continue
                if len(server.vnfs) >= sim.topology.max_vnfs_per_server:
                    continue
                if server.type_count(vnf_type) >= sim.topology.max_same_type_per_server:
                    continue
                load = len(server.vnfs)
                if best is None or load < best[0]:
                    best = (load, server.dc_id, server.server_id)
        return None if best is None else (best[1], best[2])


class PpoPolicy:
    """Acts with a trained network; greedy (per-head mode) by default."""

    def __init__(self, net: PolicyNetwork, greedy: bool = True, seed: int = 0):
        self.net = net
        self.greedy = greedy
        self._rng = entity_rng(seed, 31)

    def reset(self, seed: int) -> None:
        self._rng = entity_rng(seed, 31)

    def act(self, obs, env) -> ActionTuple:
        vec = self.net.normalize_obs(obs.vector())[None, :]
        if self.greedy:
            comps = self.net.mode(vec)[0]
        else:
            comps, _, _ = self.net.sample(vec, self._rng)
            comps = comps[0]
        return env.action_from_components(comps)


BASELINE_NAMES = ("noop", "random", "static_greedy")


def make_baseline(name: str, env: SfcEnv, seed: int = 0):
    """Baseline policy by name: noop, random, or static_greedy."""
    if name == "noop":
        return NoopPolicy()
    if name == "random":
        return RandomPolicy(env.head_sizes, seed)
    if name == "static_greedy":
        return StaticGreedyPolicy()
    raise ValueError(f"unknown baseline {name!r}; choose from {BASELINE_NAMES}")


@dataclass
class EvalResult:
    """Per-run step series and cross-run statistics from seeded rollouts."""

    seeds: list[int]
    rewards: np.ndarray  # (n_runs, T)
    lost: np.ndarray
    sfc: np.ndarray
    energy: np.ndarray
    step_records: list = field(default_factory=list)  # env step records of run 0

    @property
    def n_runs(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_steps(self) -> int:
        return self.rewards.shape[1]

    def cumulative_lost(self) -> np.ndarray:
        return np.cumsum(self.lost, axis=1)

    def cumulative_reward(self) -> np.ndarray:
        return np.cumsum(self.rewards, axis=1)

    def summary(self) -> dict[str, float]:
        return {
            "n_runs": self.n_runs,
            "total_lost_packets": float(self.lost.sum(axis=1).mean()),
            "mean_reward": float(self.rewards.mean()),
            "mean_energy_w": float(self.energy.mean()),
            "sfc_uptime_fraction": float(self.sfc.mean()),
        }


def evaluate_policy(policy, env: SfcEnv, n_runs: int, seeds: list[int] | None = None,
                    master_seed: int = 0) -> EvalResult:
    """Run seeded episodes and collect per-step metrics.

    Each run gets its own derived seed; runs execute in order so results are
    reproducible regardless of how many runs are requested.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if seeds is None:
        seeds = [derive_seed(master_seed, "eval", i) for i in range(n_runs)]
    if len(seeds) != n_runs:
        raise ValueError("need exactly one seed per run")
    T = env.episode_steps()
    rewards = np.zeros((n_runs, T))
    lost = np.zeros((n_runs, T))
    sfc = np.zeros((n_runs, T))
    energy = np.zeros((n_runs, T))
    first_records = []
    for r, seed in enumerate(seeds):
        obs = env.reset(seed)
        policy.reset(seed)
        t = 0
        done = False
        while not done:
            action = policy.act(obs, env)
            obs, reward, done, breakdown = env.step(action)
            rewards[r, t] = reward
            lost[r, t] = (1 - breakdown.sfc_status) * breakdown.packets
            sfc[r, t] = breakdown.sfc_status
            energy[r, t] = env.step_records[-1].energy_w
            t += 1
        if r == 0:
            first_records = list(env.step_records)
    return EvalResult(list(seeds), rewards, lost, sfc, energy, first_records)
