"""Reinforcement-learning environment over the data-center simulator.

One step covers one 5-minute traffic window: the agent's action is applied,
failure/repair events inside the window are processed, and the reward
combines lost packets (when the service chain is incomplete), the energy
drawn by allocated VNFs, a small restart penalty, and a completion bonus:

    reward = -(1 - sfc) * w_p * packets - w_e * energy - restart + sfc * f
"""

import csv
from dataclasses import dataclass

import numpy as np

from .seeding import derive_seed, entity_rng
from .simcore import (EnergyModel, FailureModel, N_VNF_TYPES, SimState,
                      Topology, init_topology)


@dataclass(frozen=True)
class ActionTuple:
    """The agent's action: (type, data center, server, VNF type).

    ``a`` is 1 create, 2 delete, 3 restart, 4 no-op; the remaining fields
    are zero-based indices and are carried but ignored for no-ops.
    """

    a: int
    dc: int
    server: int
    vnf_type: int

    def components(self) -> tuple[int, int, int, int]:
        return (self.a, self.dc, self.server, self.vnf_type)


@dataclass
class Observation:
    """Current traffic plus the allocated-VNF inventory.

    ``vnf_counts`` is flattened in (dc, server, type) order. Values are
    normalized when the environment is configured to do so.
    """

    cell_activities: np.ndarray
    vnf_counts: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.cell_activities, self.vnf_counts])


@dataclass(frozen=True)
class RewardBreakdown:
    sfc_status: int
    packets: float
    packet_loss_term: float
    energy_term: float
    restart_term: float
    bonus_term: float
    total: float


@dataclass
class EnvConfig:
    f: float = 100.0
    w_p: float = 1.0
    w_e: float = 0.01
    restart_penalty: float = 1.0
    step_duration: int = 300
    episode_length: int | None = None  # None = full trace
    eval_mode: bool = False  # eval episodes always start at row 0
    normalize_obs: bool = False
    activity_scale: float | None = None  # e.g. the train split's max activity

    def __post_init__(self):
        if self.f <= 0:
            raise ValueError("f must be > 0")
        if min(self.w_p, self.w_e, self.restart_penalty) < 0:
            raise ValueError("weights must be nonnegative")


def validate_action(raw, topology: Topology) -> ActionTuple:
    """Range-check a raw 4-integer action against the topology.

    The learned policy only emits in-range components; this guards external
    callers such as replay files or hand-written policies.
    """
    a, dc, server, vnf_type = (int(x) for x in raw)
    if a not in (1, 2, 3, 4):
        raise ValueError(f"action type must be in 1..4, got {a}")
    if not 0 <= dc < topology.n_dcs:
        raise ValueError(f"dc index must be in 0..{topology.n_dcs - 1}, got {dc}")
    if not 0 <= server < topology.servers_per_dc:
        raise ValueError(
            f"server index must be in 0..{topology.servers_per_dc - 1}, got {server}")
    if not 0 <= vnf_type < N_VNF_TYPES:
        raise ValueError(f"vnf type must be in 0..{N_VNF_TYPES - 1}, got {vnf_type}")
    return ActionTuple(a, dc, server, vnf_type)


@dataclass
class StepRecord:
    """One row of the step-trace export (the series behind the result plots)."""

    step: int
    a: int
    dc: int
    server: int
    vnf_type: int
    accepted: bool
    sfc: int
    packets: float
    lost: float
    energy_w: float
    reward: float
    cum_reward: float
    cum_lost: float


class SfcEnv:
    """Gym-style environment: reset() then step() until done."""

    def __init__(self, trace, topology: Topology, failure: FailureModel,
                 energy: EnergyModel, config: EnvConfig):
        if trace.n_steps == 0:
            raise ValueError("trace must be non-empty")
        self.trace = trace
        self.topology = topology
        self.failure = failure
        self.energy = energy
        self.config = config
        self._step_totals = trace.step_totals()
        self.sim: SimState | None = None
        self.done = True
        self.step_records: list[StepRecord] = []
        self._row = 0
        self._steps_taken = 0
        self._cum_reward = 0.0
        self._cum_lost = 0.0

    # ------------------------------------------------------------ dimensions

    @property
    def n_cells(self) -> int:
        return self.trace.n_cells

    @property
    def obs_dim(self) -> int:
        return self.n_cells + self.topology.n_servers * N_VNF_TYPES

    @property
    def head_sizes(self) -> tuple[int, int, int, int]:
        """Sizes of the four categorical action components."""
        return (4, self.topology.n_dcs, self.topology.servers_per_dc, N_VNF_TYPES)

    def action_from_components(self, components) -> ActionTuple:
        """Map sampled head indices to an action (head 0 is 0-based)."""
        s0, s1, s2, s3 = (int(c) for c in components)
        return ActionTuple(s0 + 1, s1, s2, s3)

    def episode_steps(self) -> int:
        if self.config.episode_length is None:
            return self.trace.n_steps
        return min(self.config.episode_length, self.trace.n_steps)

    # --------------------------------------------------------------- episode

    def reset(self, seed: int = 0) -> Observation:
        sim_seed = derive_seed(seed, "sim")
        self.sim = init_topology(self.topology, self.failure, t0=0.0, seed=sim_seed)
        offset = 0
        if not self.config.eval_mode and self.config.episode_length is not None:
            max_offset = self.trace.n_steps - self.episode_steps()
            if max_offset > 0:
                offset = int(entity_rng(seed, 3).integers(0, max_offset + 1))
        self._row = offset
        self._steps_taken = 0
        self._cum_reward = 0.0
        self._cum_lost = 0.0
        self.step_records = []
        self.done = False
        return self.encode_observation()

    def step(self, action: ActionTuple) -> tuple[Observation, float, bool, RewardBreakdown]:
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        action = validate_action(action.components(), self.topology)
        outcome = self.sim.apply_action(*action.components())
        dt_hours = self.config.step_duration / 3600.0
        self.sim.advance_to(self.sim.time + dt_hours)

        sfc = 1 if self.sim.sfc_complete() else 0
        packets = float(self._step_totals[self._row])
        total_energy, _ = self.sim.energy_consumption(self.energy)
        restarted = 1 if (action.a == 3 and outcome.accepted) else 0

        cfg = self.config
        packet_loss_term = -(1 - sfc) * cfg.w_p * packets
        energy_term = -cfg.w_e * total_energy
        restart_term = -cfg.restart_penalty * restarted
        bonus_term = sfc * cfg.f
        reward = packet_loss_term + energy_term + restart_term + bonus_term
        breakdown = RewardBreakdown(sfc, packets, packet_loss_term, energy_term,
                                    restart_term, bonus_term, reward)

        lost = (1 - sfc) * packets
        self._cum_reward += reward
        self._cum_lost += lost
        self.step_records.append(StepRecord(
            self._steps_taken, action.a, action.dc, action.server,
            action.vnf_type, outcome.accepted, sfc, packets, lost,
            total_energy, reward, self._cum_reward, self._cum_lost))

        self._row += 1
        self._steps_taken += 1
        if self._steps_taken >= self.episode_steps() or self._row >= self.trace.n_steps:
            self.done = True
        return self.encode_observation(), reward, self.done, breakdown

    # ---------------------------------------------------------- observations

    def encode_observation(self) -> Observation:
        """Current activities plus allocated-VNF counts, optionally normalized."""
        row = min(self._row, self.trace.n_steps - 1)
        activities = self.trace.steps[row].astype(float).copy()
        counts = self.sim.vnf_counts().reshape(-1).astype(float)
        if self.config.normalize_obs:
            scale = self.config.activity_scale
            if scale:
                activities /= scale
            counts /= self.topology.max_vnfs_per_server
        return Observation(activities, counts)

    # --------------------------------------------------------------- exports

    def write_step_trace_csv(self, path, comments: list[str] | None = None) -> None:
        write_step_records(self.step_records, path, comments)


def write_step_records(records: list[StepRecord], path,
                       comments: list[str] | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in comments or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["step", "a", "dc", "server", "vnf_type", "accepted",
                         "sfc", "packets", "lost", "energy_w", "reward",
                         "cum_reward", "cum_lost"])
        for r in records:
            writer.writerow([r.step, r.a, r.dc, r.server, r.vnf_type,
                             int(r.accepted), r.sfc, repr(r.packets),
                             repr(r.lost), repr(r.energy_w), repr(r.reward),
                             repr(r.cum_reward), repr(r.cum_lost)])
