"""Discrete-event simulation of data centers, servers, and VNF instances.

Servers and VNF instances alternate between up and down following
exponential time-to-failure / time-to-repair draws (means from the failure
model). The service function chain is the EPC stack: one instance of each
of SGW, PGW, MME, and HSS must be operational somewhere for the chain to be
complete. Management actions (create / delete / restart / no-op) come from
the RL environment.

Every server and every VNF instance owns an independent seed-derived RNG
stream, so the timing of management actions never perturbs the failure
times of unrelated entities.
"""

import csv
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .seeding import entity_rng

VNF_TYPES = ("SGW", "PGW", "MME", "HSS")
N_VNF_TYPES = 4

SERVER_FAIL = "server_fail"
SERVER_REPAIR = "server_repair"
VNF_FAIL = "vnf_fail"
VNF_REPAIR = "vnf_repair"

_STREAM_SERVER = 1
_STREAM_VNF = 2


@dataclass(frozen=True)
class Topology:
    """Static layout: data centers, servers, and per-server capacity limits."""

    n_dcs: int = 10
    servers_per_dc: int = 5
    max_vnfs_per_server: int = 5
    max_same_type_per_server: int = 2

    def __post_init__(self):
        if min(self.n_dcs, self.servers_per_dc, self.max_vnfs_per_server,
               self.max_same_type_per_server) < 1:
            raise ValueError("all topology counts must be >= 1")
        if self.max_same_type_per_server > self.max_vnfs_per_server:
            raise ValueError("per-type cap cannot exceed the per-server cap")

    @property
    def vnf_types(self) -> tuple[str, ...]:
        return VNF_TYPES

    @property
    def n_servers(self) -> int:
        return self.n_dcs * self.servers_per_dc


@dataclass(frozen=True)
class FailureModel:
    """Exponential failure/repair means in hours."""

    mttf_server: float = 8760.0
    mttr_server: float = 1.667
    mttf_vnf: float = 24.0
    mttr_vnf: float = 0.033
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.mttf_server, self.mttr_server, self.mttf_vnf, self.mttr_vnf) <= 0:
            raise ValueError("all failure/repair means must be > 0")


@dataclass(frozen=True)
class EnergyModel:
    """Per-unit power draw of an allocated VNF."""

    cpu_watts: float = 40.0
    mem_watts: float = 30.72

    def __post_init__(self):
        if self.cpu_watts < 0 or self.mem_watts < 0:
            raise ValueError("wattages must be nonnegative")


@dataclass
class VnfInstance:
    instance_id: int
    vnf_type: int  # index into VNF_TYPES
    up: bool = True
    created_at: float = 0.0
    # Start of the current risk-accumulation window; pushed forward while the
    # host server is down so frozen time does not age the instance.
    age_anchor: float = 0.0
    scheduled_failure_at: float | None = None
    scheduled_repair_at: float | None = None
    cpu_units: int = 1
    mem_units: int = 1
    # (kind, remaining hours) while the host server is down
    suspended: tuple[str, float] | None = None
    event_token: int = 0
    rng: np.random.Generator = field(default=None, repr=False)


@dataclass
class ServerState:
    dc_id: int
    server_id: int
    up: bool = True
    vnfs: list[VnfInstance] = field(default_factory=list)
    next_event_time: float = math.inf
    down_since: float | None = None
    rng: np.random.Generator = field(default=None, repr=False)

    def type_count(self, vnf_type: int) -> int:
        return sum(1 for v in self.vnfs if v.vnf_type == vnf_type)


@dataclass(frozen=True)
class SimEvent:
    """One processed failure or repair event."""

    time: float
    seq: int
    kind: str
    dc_id: int
    server_id: int
    instance_id: int | None = None
    vnf_type: int | None = None


@dataclass(frozen=True)
class ActionOutcome:
    accepted: bool
    reason: str = "ok"
    instance_id: int | None = None


def sample_exponential(rng: np.random.Generator, mean: float) -> float:
    """Strictly positive exponential draw via inverse CDF, -mean*ln(1-u)."""
    if mean <= 0:
        raise ValueError("mean must be > 0")
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return -mean * math.log1p(-u)


def vnf_fail_risk(instance: VnfInstance, now: float, mttf_vnf: float) -> float:
    """Age-based failure-risk score 1 - exp(-age/mttf), used for targeting.

    Zero right after creation or restart, monotone in age. This score only
    decides which instance a delete/restart hits; the actual failure times
    stay exponential.
    """
    age = max(0.0, now - instance.age_anchor)
    return 1.0 - math.exp(-age / mttf_vnf)


class SimState:
    """Mutable simulation state: servers, instances, and the event queue."""

    def __init__(self, topology: Topology, failure: FailureModel,
                 t0: float = 0.0, seed: int | None = None):
        self.topology = topology
        self.failure = failure
        self.time = t0
        self.seed = failure.rng_seed if seed is None else seed
        self._seq = 0
        self._next_instance_id = 0
        self._heap: list[tuple] = []
        self.servers = [
            [ServerState(d, s, rng=entity_rng(self.seed, _STREAM_SERVER, d, s))
             for s in range(topology.servers_per_dc)]
            for d in range(topology.n_dcs)
        ]
        for row in self.servers:
            for server in row:
                self._schedule_server_failure(server)

    # ---------------------------------------------------------------- events

    def _push(self, time: float, kind: str, server: ServerState,
              instance: VnfInstance | None = None) -> None:
        self._seq += 1
        token = instance.event_token if instance is not None else 0
        iid = instance.instance_id if instance is not None else None
        heapq.heappush(self._heap, (time, self._seq, kind, server.dc_id,
                                    server.server_id, iid, token))

    def _schedule_server_failure(self, server: ServerState) -> None:
        t = self.time + sample_exponential(server.rng, self.failure.mttf_server)
        server.next_event_time = t
        self._push(t, SERVER_FAIL, server)

    def _schedule_server_repair(self, server: ServerState) -> None:
        t = self.time + sample_exponential(server.rng, self.failure.mttr_server)
        server.next_event_time = t
        self._push(t, SERVER_REPAIR, server)

    def _schedule_vnf_failure(self, server: ServerState, inst: VnfInstance) -> None:
        t = self.time + sample_exponential(inst.rng, self.failure.mttf_vnf)
        inst.scheduled_failure_at = t
        inst.scheduled_repair_at = None
        self._push(t, VNF_FAIL, server, inst)

    def _schedule_vnf_repair(self, server: ServerState, inst: VnfInstance) -> None:
        t = self.time + sample_exponential(inst.rng, self.failure.mttr_vnf)
        inst.scheduled_repair_at = t
        inst.scheduled_failure_at = None
        self._push(t, VNF_REPAIR, server, inst)

    def _find_instance(self, server: ServerState, instance_id: int) -> VnfInstance | None:
        for inst in server.vnfs:
            if inst.instance_id == instance_id:
                return inst
        return None

    def advance_to(self, t: float) -> list[SimEvent]:
        """Process all pending events up to time t, in (time, seq) order."""
        if t < self.time:
            raise ValueError(f"cannot advance backwards ({t} < {self.time})")
        processed: list[SimEvent] = []
        while self._heap and self._heap[0][0] <= t:
            time, seq, kind, dc, sid, iid, token = heapq.heappop(self._heap)
            server = self.servers[dc][sid]
            self.time = time
            if kind in (SERVER_FAIL, SERVER_REPAIR):
                self._process_server_event(kind, server)
                processed.append(SimEvent(time, seq, kind, dc, sid))
            else:
                inst = self._find_instance(server, iid)
                if inst is None or inst.event_token != token or inst.suspended is not None:
                    continue  # cancelled or suspended event
                self._process_vnf_event(kind, server, inst)
                processed.append(SimEvent(time, seq, kind, dc, sid,
                                          iid, inst.vnf_type))
        self.time = t
        return processed

    def _process_server_event(self, kind: str, server: ServerState) -> None:
        if kind == SERVER_FAIL:
            server.up = False
            server.down_since = self.time
            # Freeze hosted instances: their state is kept and restored on
            # repair, so pending events and ages are suspended, not lost.
            for inst in server.vnfs:
                pending = (inst.scheduled_failure_at if inst.up
                           else inst.scheduled_repair_at)
                remaining = max(0.0, pending - self.time)
                inst.suspended = (VNF_FAIL if inst.up else VNF_REPAIR, remaining)
                inst.event_token += 1
            self._schedule_server_repair(server)
        else:
            server.up = True
            downtime = self.time - (server.down_since or self.time)
            server.down_since = None
            for inst in server.vnfs:
                inst.age_anchor += downtime
                kind_s, remaining = inst.suspended
                inst.suspended = None
                inst.event_token += 1
                when = self.time + remaining
                if kind_s == VNF_FAIL:
                    inst.scheduled_failure_at = when
                else:
                    inst.scheduled_repair_at = when
                self._push(when, kind_s, server, inst)
            self._schedule_server_failure(server)

    def _process_vnf_event(self, kind: str, server: ServerState,
                           inst: VnfInstance) -> None:
        if kind == VNF_FAIL:
            inst.up = False
            self._schedule_vnf_repair(server, inst)
        else:
            inst.up = True
            inst.age_anchor = self.time
            self._schedule_vnf_failure(server, inst)

    # --------------------------------------------------------------- actions

    def apply_action(self, a: int, dc: int, server_id: int,
                     vnf_type: int) -> ActionOutcome:
        """Apply one management action; invalid targets become rejections.

        Action types: 1 create, 2 delete, 3 restart, 4 no-op. Rejections
        (full/down server, no matching instance) leave the state unchanged.
        """
        if a == 4:
            return ActionOutcome(True, "noop")
        if not (0 <= dc < self.topology.n_dcs
                and 0 <= server_id < self.topology.servers_per_dc
                and 0 <= vnf_type < N_VNF_TYPES and a in (1, 2, 3)):
            raise ValueError(f"action out of range: ({a},{dc},{server_id},{vnf_type})")
        server = self.servers[dc][server_id]
        if not server.up:
            return ActionOutcome(False, "server_down")
        if a == 1:
            return self._create(server, vnf_type)
        if a == 2:
            return self._delete(server, vnf_type)
        return self._restart(server, vnf_type)

    def _create(self, server: ServerState, vnf_type: int) -> ActionOutcome:
        if len(server.vnfs) >= self.topology.max_vnfs_per_server:
            return ActionOutcome(False, "server_full")
        if server.type_count(vnf_type) >= self.topology.max_same_type_per_server:
            return ActionOutcome(False, "type_cap")
        inst = VnfInstance(
            instance_id=self._next_instance_id, vnf_type=vnf_type,
            created_at=self.time, age_anchor=self.time,
            rng=entity_rng(self.seed, _STREAM_VNF, self._next_instance_id))
        self._next_instance_id += 1
        server.vnfs.append(inst)
        self._schedule_vnf_failure(server, inst)
        return ActionOutcome(True, "created", inst.instance_id)

    def _targeting_risk(self, inst: VnfInstance) -> float:
        # A failed instance is the maximal-risk target for deletion.
        if not inst.up:
            return 1.0
        return vnf_fail_risk(inst, self.time, self.failure.mttf_vnf)

    def _delete(self, server: ServerState, vnf_type: int) -> ActionOutcome:
        candidates = [v for v in server.vnfs if v.vnf_type == vnf_type]
        if not candidates:
            return ActionOutcome(False, "no_instance")
        target = max(candidates,
                     key=lambda v: (self._targeting_risk(v), -v.instance_id))
        target.event_token += 1  # cancel any pending event
        server.vnfs.remove(target)
        return ActionOutcome(True, "deleted", target.instance_id)

    def _restart(self, server: ServerState, vnf_type: int) -> ActionOutcome:
        candidates = [v for v in server.vnfs if v.vnf_type == vnf_type and v.up]
        if not candidates:
            return ActionOutcome(False, "no_instance")
        target = max(candidates,
                     key=lambda v: (self._targeting_risk(v), -v.instance_id))
        target.event_token += 1
        target.age_anchor = self.time
        self._schedule_vnf_failure(server, target)
        return ActionOutcome(True, "restarted", target.instance_id)

    # --------------------------------------------------------------- queries

    def instances(self):
        for row in self.servers:
            for server in row:
                for inst in server.vnfs:
                    yield server, inst

    def sfc_complete(self) -> bool:
        """True iff every VNF type has an up instance on an up server."""
        seen = [False] * N_VNF_TYPES
        for server, inst in self.instances():
            if server.up and inst.up:
                seen[inst.vnf_type] = True
        return all(seen)

    def operational_type_counts(self) -> list[int]:
        counts = [0] * N_VNF_TYPES
        for server, inst in self.instances():
            if server.up and inst.up:
                counts[inst.vnf_type] += 1
        return counts

    def vnf_counts(self) -> np.ndarray:
        """Allocated instances per (dc, server, type), up or not."""
        counts = np.zeros(
            (self.topology.n_dcs, self.topology.servers_per_dc, N_VNF_TYPES),
            dtype=int)
        for server, inst in self.instances():
            counts[server.dc_id, server.server_id, inst.vnf_type] += 1
        return counts

    def energy_consumption(self, model: EnergyModel) -> tuple[float, list[float]]:
        """Total watts and per-DC breakdown over all allocated instances.

        Instances that are down (or on a down server) remain allocated and
        keep drawing power.
        """
        per_dc = []
        for row in self.servers:
            watts = 0.0
            for server in row:
                for inst in server.vnfs:
                    watts += (inst.cpu_units * model.cpu_watts
                              + inst.mem_units * model.mem_watts)
            per_dc.append(watts)
        return float(sum(per_dc)), per_dc


def init_topology(topology: Topology, failure: FailureModel,
                  t0: float = 0.0, seed: int | None = None) -> SimState:
    """Fresh simulation: all servers up, no VNFs, one failure scheduled each."""
    return SimState(topology, failure, t0, seed)


def write_event_log(events: list[SimEvent], path,
                    comments: list[str] | None = None) -> None:
    """Audit/replay export of processed events."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in comments or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["time_hours", "kind", "dc", "server",
                         "instance_id", "vnf_type"])
        for ev in events:
            writer.writerow([repr(ev.time), ev.kind, ev.dc_id, ev.server_id,
                             "" if ev.instance_id is None else ev.instance_id,
                             "" if ev.vnf_type is None else VNF_TYPES[ev.vnf_type]])
