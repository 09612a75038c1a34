"""
Placement data model and its judge.

Solvers build ``PlacementSolution`` values; this module checks them against
every placement constraint, evaluates link and server usage, the delay model
and the weighted objective (migrations, replications, cloud VNFs).
"""
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from services.topology_service import PathCatalog, Topology, precompute_paths

logger = logging.getLogger(__name__)

MAX_CHAIN_LENGTH = 10
DEFAULT_MAX_DELAY_S = 0.4
DEFAULT_DOWNTIME_S = 0.0275
EPS = 1e-9

DemandKey = Tuple[str, str]            # (sfc, demand)
VnfKey = Tuple[str, int]               # (sfc, vnf index)
AssignmentKey = Tuple[str, int, str]   # (sfc, vnf index, demand)


class MalformedSolutionError(ValueError):
    """Raised when a solution references ids the instance does not know."""


class SyncTrafficMode(str, Enum):
    TOTAL = 'total'
    CARDINALITY = 'cardinality'


@dataclass(frozen=True)
class VnfSpec:
    type: str = 'vnf'
    load_ratio: float = 1.0
    sync_ratio: float = 0.1
    overhead: float = 0.0
    replicable: bool = True
    d_proq: float = 0.003
    d_prox: float = 0.005
    d_pro_x_min: float = 0.002
    d_pro_max: float = 0.010
    # None: the hosting server's capacity
    proc_capacity: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.load_ratio <= 1:
            raise ValueError(f"load_ratio must lie in (0, 1], got {self.load_ratio}")
        if self.sync_ratio < 0 or self.overhead < 0:
            raise ValueError("sync_ratio and overhead must be non-negative")
        if min(self.d_proq, self.d_prox, self.d_pro_x_min, self.d_pro_max) < 0:
            raise ValueError("Delay constants must be non-negative")
        if self.d_pro_max < self.d_pro_x_min:
            raise ValueError("d_pro_max must be at least d_pro_x_min")
        if self.proc_capacity is not None and self.proc_capacity <= 0:
            raise ValueError("proc_capacity must be positive")


@dataclass(frozen=True)
class Demand:
    id: str
    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"Demand {self.id} must be positive, got {self.value}")


@dataclass(frozen=True)
class ServiceChain:
    id: str
    src: str
    dst: str
    vnfs: Tuple[VnfSpec, ...]
    demands: Tuple[Demand, ...]
    max_delay: float = DEFAULT_MAX_DELAY_S
    path_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'vnfs', tuple(self.vnfs))
        object.__setattr__(self, 'demands', tuple(self.demands))
        object.__setattr__(self, 'path_ids', tuple(self.path_ids))
        if not 1 <= len(self.vnfs) <= MAX_CHAIN_LENGTH:
            raise ValueError(f"SFC {self.id} must have between 1 and {MAX_CHAIN_LENGTH} VNFs, got {len(self.vnfs)}")
        if not self.max_delay > 0:
            raise ValueError(f"SFC {self.id} max_delay must be positive")
        ids = [d.id for d in self.demands]
        if len(set(ids)) != len(ids):
            raise ValueError(f"SFC {self.id} has duplicate demand ids")

    @property
    def total_demand(self) -> float:
        return sum(d.value for d in self.demands)

    def demand(self, demand_id: str) -> Demand:
        for d in self.demands:
            if d.id == demand_id:
                return d
        raise KeyError(demand_id)


@dataclass(frozen=True)
class Instance:
    topology: Topology
    catalog: PathCatalog
    sfcs: Tuple[ServiceChain, ...]
    sync_mode: SyncTrafficMode = SyncTrafficMode.TOTAL
    downtime_s: float = DEFAULT_DOWNTIME_S
    _by_id: Dict[str, ServiceChain] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'sfcs', tuple(self.sfcs))
        object.__setattr__(self, '_by_id', {s.id: s for s in self.sfcs})

    def sfc(self, sfc_id: str) -> ServiceChain:
        return self._by_id[sfc_id]

    def has_sfc(self, sfc_id: str) -> bool:
        return sfc_id in self._by_id

    def paths_for(self, sfc_id: str):
        return [self.catalog.path(p) for p in self.sfc(sfc_id).path_ids]

    def server_node(self, server_id: str) -> str:
        return self.topology.server(server_id).node

    def is_cloud_server(self, server_id: str) -> bool:
        return self.topology.server(server_id).is_cloud

    def offered_traffic(self, sfc_id: str) -> float:
        """|Lambda_s| as used by the synchronization term."""
        sfc = self.sfc(sfc_id)
        if self.sync_mode == SyncTrafficMode.CARDINALITY:
            return float(len(sfc.demands))
        return sfc.total_demand

    def sync_traffic(self, sfc_id: str, vnf: int) -> float:
        return self.sfc(sfc_id).vnfs[vnf].sync_ratio * self.offered_traffic(sfc_id)

    def candidate_servers(self, sfc_id: str) -> List[str]:
        """Servers on any admissible path of the SFC, in global server order."""
        seen = {x for p in self.paths_for(sfc_id) for x in p.servers}
        return sorted(seen, key=self.topology.server_index)

    def with_demand_values(self, values: Mapping[DemandKey, float]) -> 'Instance':
        """Same network, paths and chains under a new demand snapshot."""
        sfcs = tuple(
            replace(s, demands=tuple(Demand(d.id, values.get((s.id, d.id), d.value)) for d in s.demands))
            for s in self.sfcs
        )
        return Instance(self.topology, self.catalog, sfcs, self.sync_mode, self.downtime_s)


def build_instance(topology: Topology, sfcs: Sequence[ServiceChain], catalog: Optional[PathCatalog] = None,
                   sync_mode: SyncTrafficMode = SyncTrafficMode.TOTAL, downtime_s: float = DEFAULT_DOWNTIME_S,
                   **path_options) -> Instance:
    """Attach admissible path ids to every chain, precomputing the catalog if needed."""
    if catalog is None:
        catalog = precompute_paths(topology, sfcs, **path_options)
    chains = tuple(replace(s, path_ids=catalog.admissible(s.id)) for s in sfcs)
    return Instance(topology, catalog, chains, SyncTrafficMode(sync_mode), downtime_s)


@dataclass
class PlacementSolution:
    demand_path: Dict[DemandKey, str] = field(default_factory=dict)
    vnf_servers: Dict[VnfKey, Set[str]] = field(default_factory=dict)
    demand_vnf_server: Dict[AssignmentKey, str] = field(default_factory=dict)
    sync_paths: Dict[VnfKey, Set[str]] = field(default_factory=dict)

    def copy(self) -> 'PlacementSolution':
        return PlacementSolution(
            dict(self.demand_path),
            {k: set(v) for k, v in self.vnf_servers.items()},
            dict(self.demand_vnf_server),
            {k: set(v) for k, v in self.sync_paths.items()},
        )

    def used_servers(self) -> Set[str]:
        return {x for xs in self.vnf_servers.values() for x in xs}


@dataclass(frozen=True)
class PriorPlacement:
    """Servers per (sfc, vnf) from the previous phase; ``hints`` keeps the full
    previous solution for heuristics that reuse paths and demand mappings."""

    servers: Dict[VnfKey, FrozenSet[str]] = field(default_factory=dict)
    hints: Optional[PlacementSolution] = field(default=None, compare=False, repr=False)

    def servers_for(self, sfc_id: str, vnf: int) -> FrozenSet[str]:
        return self.servers.get((sfc_id, vnf), frozenset())

    def demand_server(self, sfc_id: str, vnf: int, demand_id: str) -> Optional[str]:
        if self.hints is None:
            return None
        return self.hints.demand_vnf_server.get((sfc_id, vnf, demand_id))

    def demand_path(self, sfc_id: str, demand_id: str) -> Optional[str]:
        if self.hints is None:
            return None
        return self.hints.demand_path.get((sfc_id, demand_id))

    def paths_for(self, sfc_id: str) -> Set[str]:
        if self.hints is None:
            return set()
        return {p for (s, _), p in self.hints.demand_path.items() if s == sfc_id}


def to_prior(sol: PlacementSolution) -> PriorPlacement:
    return PriorPlacement({k: frozenset(v) for k, v in sol.vnf_servers.items() if v}, hints=sol.copy())


@dataclass(frozen=True)
class ObjectiveWeights:
    migration: float = 1.0
    replication: float = 1.0
    cloud: float = 1.0

    def __post_init__(self):
        if min(self.migration, self.replication, self.cloud) < 0:
            raise ValueError("Objective weights must be non-negative")

    def scaled(self, factor: float) -> 'ObjectiveWeights':
        return ObjectiveWeights(self.migration * factor, self.replication * factor, self.cloud * factor)


@dataclass(frozen=True)
class ObjectiveValue:
    migrations: int
    replications: int
    cloud_vnfs: int
    value: float


class ViolationKind(str, Enum):
    ONE_PATH = 'one_path'
    ONE_SERVER = 'one_server'
    SERVER_OFF_PATH = 'server_off_path'
    INSTANCE_MAPPING = 'instance_mapping'
    REPLICABILITY = 'replicability'
    VNF_ORDER = 'vnf_order'
    SYNC_PATH = 'sync_path'
    LINK_CAPACITY = 'link_capacity'
    SERVER_CAPACITY = 'server_capacity'
    PROCESSING_DELAY = 'processing_delay'
    SERVICE_DELAY = 'service_delay'


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    message: str
    sfc: Optional[str] = None
    vnf: Optional[int] = None
    demand: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind.value, 'message': self.message, 'sfc': self.sfc, 'vnf': self.vnf,
                'demand': self.demand}


@dataclass(frozen=True)
class DelayBreakdown:
    propagation: float
    processing: float
    downtime: float

    @property
    def total(self) -> float:
        return self.propagation + self.processing + self.downtime


def _validate_references(sol: PlacementSolution, inst: Instance) -> None:
    topo, catalog = inst.topology, inst.catalog

    def vnf_key(s: str, v: int):
        if not inst.has_sfc(s):
            raise MalformedSolutionError(f"Unknown SFC {s}")
        if not 0 <= v < len(inst.sfc(s).vnfs):
            raise MalformedSolutionError(f"SFC {s} has no VNF {v}")

    def demand_key(s: str, d: str):
        if not inst.has_sfc(s):
            raise MalformedSolutionError(f"Unknown SFC {s}")
        if d not in {x.id for x in inst.sfc(s).demands}:
            raise MalformedSolutionError(f"SFC {s} has no demand {d}")

    for (s, d), p in sol.demand_path.items():
        demand_key(s, d)
        if not catalog.has_path(p):
            raise MalformedSolutionError(f"Unknown path {p} for demand {s}/{d}")
    for (s, v), xs in sol.vnf_servers.items():
        vnf_key(s, v)
        for x in xs:
            if not topo.has_server(x):
                raise MalformedSolutionError(f"Unknown server {x} for VNF {s}/{v}")
    for (s, v, d), x in sol.demand_vnf_server.items():
        vnf_key(s, v)
        demand_key(s, d)
        if not topo.has_server(x):
            raise MalformedSolutionError(f"Unknown server {x} for {s}/{v}/{d}")
    for (s, v), ps in sol.sync_paths.items():
        vnf_key(s, v)
        for p in ps:
            if not catalog.has_path(p):
                raise MalformedSolutionError(f"Unknown sync path {p} for VNF {s}/{v}")


def assigned_traffic(sol: PlacementSolution, inst: Instance) -> Dict[AssignmentKey, float]:
    """Traffic of (sfc, vnf) processed on each server: the sum of its assigned demand values."""
    traffic: Dict[AssignmentKey, float] = defaultdict(float)
    for (s, v, d), x in sol.demand_vnf_server.items():
        traffic[(s, v, x)] += inst.sfc(s).demand(d).value
    return traffic


def link_traffic(sol: PlacementSolution, inst: Instance) -> Dict[str, float]:
    carried = {l.id: 0.0 for l in inst.topology.links}
    for (s, d), p in sol.demand_path.items():
        value = inst.sfc(s).demand(d).value
        for l in inst.catalog.path(p).links:
            carried[l] += value
    for (s, v), ps in sol.sync_paths.items():
        volume = inst.sync_traffic(s, v)
        for p in ps:
            for l in inst.catalog.path(p).links:
                carried[l] += volume
    return carried


def link_utilization(sol: PlacementSolution, inst: Instance) -> Dict[str, float]:
    """Carried demand and sync traffic over capacity; unbounded cloud links report 0."""
    return {lid: (t / inst.topology.link(lid).capacity) for lid, t in link_traffic(sol, inst).items()}


def server_load(sol: PlacementSolution, inst: Instance) -> Tuple[Dict[str, float], Dict[str, float]]:
    """
    Processing load and utilization per server.

    Returns:
        Tuple[Dict[str, float], Dict[str, float]]: (gamma per server, utilization per server)
    """
    gamma = {x.id: 0.0 for x in inst.topology.servers}
    traffic = assigned_traffic(sol, inst)
    for (s, v), xs in sol.vnf_servers.items():
        vnf = inst.sfc(s).vnfs[v]
        for x in xs:
            gamma[x] += vnf.load_ratio * traffic.get((s, v, x), 0.0) + vnf.overhead
    util = {x: g / inst.topology.server(x).capacity for x, g in gamma.items()}
    return gamma, util


def _processing_delay(vnf: VnfSpec, traffic: float, server_capacity: float, util: float) -> float:
    capacity = vnf.proc_capacity if vnf.proc_capacity is not None else server_capacity
    queue = 0.0 if math.isinf(capacity) else vnf.d_proq * vnf.load_ratio * traffic / capacity
    return queue + vnf.d_pro_x_min + vnf.d_prox * util


def processing_delay(sol: PlacementSolution, inst: Instance, s: str, v: int, x: str,
                     server_util: Optional[Mapping[str, float]] = None) -> float:
    """
    Processing delay of VNF ``v`` of SFC ``s`` on server ``x``. Values above
    the VNF's ``d_pro_max`` are returned unchanged; the checker flags them.

    Raises:
        MalformedSolutionError: If the VNF has no instance on ``x``
    """
    if x not in sol.vnf_servers.get((s, v), ()):
        raise MalformedSolutionError(f"VNF {s}/{v} is not hosted on server {x}")
    if server_util is None:
        server_util = server_load(sol, inst)[1]
    traffic = sum(inst.sfc(s).demand(d).value
                  for (ss, vv, d), xx in sol.demand_vnf_server.items() if ss == s and vv == v and xx == x)
    return _processing_delay(inst.sfc(s).vnfs[v], traffic, inst.topology.server(x).capacity, server_util[x])


def migrations(sol: PlacementSolution, prior: Optional[PriorPlacement], sfc_id: Optional[str] = None) -> int:
    """Prior instances no longer in use, optionally for one SFC."""
    if prior is None:
        return 0
    return sum(len(xs - sol.vnf_servers.get(k, set()))
               for k, xs in prior.servers.items() if sfc_id is None or k[0] == sfc_id)


def downtime(sol: PlacementSolution, prior: Optional[PriorPlacement], s: str,
             downtime_s: float = DEFAULT_DOWNTIME_S) -> float:
    return downtime_s * migrations(sol, prior, s)


def demand_delay(sol: PlacementSolution, inst: Instance, prior: Optional[PriorPlacement], s: str, d: str,
                 server_util: Optional[Mapping[str, float]] = None) -> DelayBreakdown:
    """
    End-to-end delay of one demand: propagation along its path, processing at
    each of its VNF servers and the SFC's migration downtime.

    Raises:
        MalformedSolutionError: If the demand is not routed or a VNF is unassigned
    """
    if (s, d) not in sol.demand_path:
        raise MalformedSolutionError(f"Demand {s}/{d} is not routed")
    if server_util is None:
        server_util = server_load(sol, inst)[1]
    traffic = assigned_traffic(sol, inst)
    processing = 0.0
    for v, vnf in enumerate(inst.sfc(s).vnfs):
        x = sol.demand_vnf_server.get((s, v, d))
        if x is None:
            raise MalformedSolutionError(f"Demand {s}/{d} has no server for VNF {v}")
        processing += _processing_delay(vnf, traffic.get((s, v, x), 0.0), inst.topology.server(x).capacity,
                                        server_util[x])
    return DelayBreakdown(inst.catalog.path(sol.demand_path[(s, d)]).delay_s, processing,
                          downtime(sol, prior, s, inst.downtime_s))


def objective(sol: PlacementSolution, inst: Instance, prior: Optional[PriorPlacement],
              weights: ObjectiveWeights) -> ObjectiveValue:
    m = migrations(sol, prior)
    r = sum(max(len(xs) - 1, 0) for xs in sol.vnf_servers.values())
    c = sum(1 for xs in sol.vnf_servers.values() for x in xs if inst.is_cloud_server(x))
    return ObjectiveValue(m, r, c, weights.migration * m + weights.replication * r + weights.cloud * c)


def max_instances(inst: Instance, s: str, v: int) -> int:
    sfc = inst.sfc(s)
    if not sfc.vnfs[v].replicable:
        return 1
    return max(1, min(len(sfc.path_ids), len(sfc.demands)))


def single_objective_weights(main: str, inst: Instance, prior: Optional[PriorPlacement] = None) -> ObjectiveWeights:
    """
    Weight 1 for the ``main`` term and 1/(2(1+U)) for each other term, where U
    bounds that term's count; the secondary terms together stay below 1.
    """
    keys = [(s.id, v) for s in inst.sfcs for v in range(len(s.vnfs))]
    bounds = {
        'migration': sum(len(xs) for xs in prior.servers.values()) if prior is not None else 0,
        'replication': sum(max_instances(inst, s, v) - 1 for s, v in keys),
        'cloud': sum(max_instances(inst, s, v) for s, v in keys),
    }
    if main not in bounds:
        raise ValueError(f"Unknown objective term {main}; expected one of {sorted(bounds)}")
    w = {k: (1.0 if k == main else 1.0 / (2.0 * (1 + u))) for k, u in bounds.items()}
    return ObjectiveWeights(w['migration'], w['replication'], w['cloud'])


def original_server(inst: Instance, servers: Iterable[str]) -> str:
    """The lowest-indexed instance sends synchronization traffic to the others."""
    return min(servers, key=inst.topology.server_index)


def required_sync_pairs(inst: Instance, servers: Iterable[str]) -> Set[Tuple[str, str]]:
    servers = list(servers)
    if len(servers) < 2:
        return set()
    origin = inst.server_node(original_server(inst, servers))
    return {(origin, inst.server_node(y)) for y in servers if inst.server_node(y) != origin}


def check_feasibility(sol: PlacementSolution, inst: Instance,
                      prior: Optional[PriorPlacement] = None) -> List[Violation]:
    """
    List every constraint the solution breaks; an empty list means feasible.

    Raises:
        MalformedSolutionError: If the solution references unknown ids
    """
    _validate_references(sol, inst)
    found: List[Violation] = []
    topo, catalog = inst.topology, inst.catalog

    def add(kind, message, s=None, v=None, d=None):
        found.append(Violation(kind, message, s, v, d))

    for sfc in inst.sfcs:
        s = sfc.id
        admissible = set(sfc.path_ids)
        used_paths = set()
        for dem in sfc.demands:
            p = sol.demand_path.get((s, dem.id))
            if p is None:
                add(ViolationKind.ONE_PATH, f"Demand {s}/{dem.id} has no path", s, d=dem.id)
                continue
            if p not in admissible:
                add(ViolationKind.ONE_PATH, f"Path {p} is not admissible for SFC {s}", s, d=dem.id)
            used_paths.add(p)
            path = catalog.path(p)
            last_position = -1
            for v in range(len(sfc.vnfs)):
                x = sol.demand_vnf_server.get((s, v, dem.id))
                if x is None:
                    add(ViolationKind.ONE_SERVER, f"Demand {s}/{dem.id} has no server for VNF {v}", s, v, dem.id)
                    continue
                if x not in path.servers:
                    add(ViolationKind.SERVER_OFF_PATH, f"Server {x} of VNF {v} is not on path {p}", s, v, dem.id)
                    continue
                position = path.node_position(inst.server_node(x))
                if position < last_position:
                    add(ViolationKind.VNF_ORDER, f"VNF {v} of {s} precedes VNF {v - 1} on path {p}", s, v, dem.id)
                last_position = max(last_position, position)

        for v, vnf in enumerate(sfc.vnfs):
            instances = sol.vnf_servers.get((s, v), set())
            mapped = {x for (ss, vv, _), x in sol.demand_vnf_server.items() if ss == s and vv == v}
            if instances != mapped:
                add(ViolationKind.INSTANCE_MAPPING,
                    f"Instances {sorted(instances)} of {s}/{v} differ from assigned servers {sorted(mapped)}", s, v)
            limit = (len(used_paths) if vnf.replicable else 1) if used_paths else 1
            if len(instances) > limit:
                add(ViolationKind.REPLICABILITY,
                    f"VNF {s}/{v} has {len(instances)} instances; at most {limit} allowed", s, v)

            required = required_sync_pairs(inst, instances)
            covered: Dict[Tuple[str, str], int] = defaultdict(int)
            for p in sol.sync_paths.get((s, v), set()):
                path = catalog.path(p)
                pair = (path.src, path.dst)
                if pair not in required or p not in catalog.sync_candidates(*pair):
                    add(ViolationKind.SYNC_PATH, f"Sync path {p} of {s}/{v} does not match a replica pair", s, v)
                covered[pair] += 1
            for pair in sorted(required):
                if covered.get(pair, 0) != 1:
                    add(ViolationKind.SYNC_PATH,
                        f"Replica pair {pair[0]}->{pair[1]} of {s}/{v} needs exactly one sync path", s, v)

    for lid, u in link_utilization(sol, inst).items():
        if u > 1 + EPS:
            add(ViolationKind.LINK_CAPACITY, f"Link {lid} utilization {u:.4f} exceeds 1")
    _, util = server_load(sol, inst)
    for x, u in util.items():
        if u > 1 + EPS:
            add(ViolationKind.SERVER_CAPACITY, f"Server {x} utilization {u:.4f} exceeds 1")

    traffic = assigned_traffic(sol, inst)
    for (s, v), xs in sorted(sol.vnf_servers.items()):
        vnf = inst.sfc(s).vnfs[v]
        for x in sorted(xs):
            delay = _processing_delay(vnf, traffic.get((s, v, x), 0.0), topo.server(x).capacity, util[x])
            if delay > vnf.d_pro_max + EPS:
                add(ViolationKind.PROCESSING_DELAY,
                    f"Processing delay {delay * 1000:.3f} ms of {s}/{v} on {x} exceeds the VNF maximum", s, v)

    for sfc in inst.sfcs:
        for dem in sfc.demands:
            if (sfc.id, dem.id) not in sol.demand_path:
                continue
            if any((sfc.id, v, dem.id) not in sol.demand_vnf_server for v in range(len(sfc.vnfs))):
                continue
            total = demand_delay(sol, inst, prior, sfc.id, dem.id, util).total
            if total > sfc.max_delay + EPS:
                add(ViolationKind.SERVICE_DELAY,
                    f"Delay {total * 1000:.3f} ms of {sfc.id}/{dem.id} exceeds {sfc.max_delay * 1000:.1f} ms",
                    sfc.id, d=dem.id)
    return found


@dataclass
class MetricsReport:
    migrations: int
    replications: int
    cloud_vnfs: int
    objective: float
    link_util: Dict[str, float]
    server_load: Dict[str, float]
    server_util: Dict[str, float]
    demand_delays: Dict[DemandKey, DelayBreakdown]
    violations: List[Violation]
    excluded_links: FrozenSet[str] = frozenset()
    active_servers: FrozenSet[str] = frozenset()

    @property
    def mean_link_util(self) -> float:
        values = [u for l, u in self.link_util.items() if l not in self.excluded_links]
        return sum(values) / len(values) if values else 0.0

    @property
    def mean_server_util(self) -> float:
        values = [self.server_util[x] for x in sorted(self.active_servers)]
        return sum(values) / len(values) if values else 0.0

    @property
    def mean_delay_ms(self) -> float:
        values = [d.total for d in self.demand_delays.values()]
        return 1000.0 * sum(values) / len(values) if values else 0.0

    def to_row(self) -> Dict[str, Any]:
        return {
            'migrations': self.migrations,
            'replications': self.replications,
            'cloud_vnfs': self.cloud_vnfs,
            'objective': self.objective,
            'mean_link_util': self.mean_link_util,
            'mean_server_util': self.mean_server_util,
            'mean_delay_ms': self.mean_delay_ms,
        }

    def to_dict(self) -> Dict[str, Any]:
        doc = self.to_row()
        doc.update({
            'link_util': {l: (None if l in self.excluded_links else u) for l, u in sorted(self.link_util.items())},
            'server_load': {x: g for x, g in sorted(self.server_load.items())},
            'server_util': {x: u for x, u in sorted(self.server_util.items())},
            'demand_delays': {
                f"{s}/{d}": {'propagation_ms': b.propagation * 1000, 'processing_ms': b.processing * 1000,
                             'downtime_ms': b.downtime * 1000, 'total_ms': b.total * 1000}
                for (s, d), b in sorted(self.demand_delays.items())
            },
            'violations': [v.to_dict() for v in self.violations],
        })
        return doc


def evaluate(sol: PlacementSolution, inst: Instance, prior: Optional[PriorPlacement],
             weights: ObjectiveWeights) -> MetricsReport:
    """Objective decomposition, utilizations, per-demand delays and violations in one pass."""
    violations = check_feasibility(sol, inst, prior)
    value = objective(sol, inst, prior, weights)
    gamma, util = server_load(sol, inst)
    delays = {}
    for sfc in inst.sfcs:
        for dem in sfc.demands:
            routed = (sfc.id, dem.id) in sol.demand_path
            if routed and all((sfc.id, v, dem.id) in sol.demand_vnf_server for v in range(len(sfc.vnfs))):
                delays[(sfc.id, dem.id)] = demand_delay(sol, inst, prior, sfc.id, dem.id, util)
    return MetricsReport(
        migrations=value.migrations,
        replications=value.replications,
        cloud_vnfs=value.cloud_vnfs,
        objective=value.value,
        link_util=link_utilization(sol, inst),
        server_load=gamma,
        server_util=util,
        demand_delays=delays,
        violations=violations,
        excluded_links=frozenset(l.id for l in inst.topology.links if l.touches_cloud),
        active_servers=frozenset(x for x in sol.used_servers() if not inst.is_cloud_server(x)),
    )


def solution_to_dict(sol: PlacementSolution) -> Dict[str, Any]:
    return {
        'demand_path': [{'sfc': s, 'demand': d, 'path': p} for (s, d), p in sorted(sol.demand_path.items())],
        'vnf_servers': [{'sfc': s, 'vnf': v, 'servers': sorted(xs)} for (s, v), xs in sorted(sol.vnf_servers.items())],
        'demand_vnf_server': [{'sfc': s, 'vnf': v, 'demand': d, 'server': x}
                              for (s, v, d), x in sorted(sol.demand_vnf_server.items())],
        'sync_paths': [{'sfc': s, 'vnf': v, 'paths': sorted(ps)} for (s, v), ps in sorted(sol.sync_paths.items())],
    }


def solution_from_dict(data: Dict[str, Any]) -> PlacementSolution:
    try:
        return PlacementSolution(
            {(e['sfc'], e['demand']): e['path'] for e in data['demand_path']},
            {(e['sfc'], int(e['vnf'])): set(e['servers']) for e in data['vnf_servers']},
            {(e['sfc'], int(e['vnf']), e['demand']): e['server'] for e in data['demand_vnf_server']},
            {(e['sfc'], int(e['vnf'])): set(e['paths']) for e in data['sync_paths']},
        )
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedSolutionError(f"Malformed solution document: {str(e)}") from e
