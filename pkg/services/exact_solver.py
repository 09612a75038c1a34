"""
Exact placement for desk-scale instances.

Depth-first branch and bound over one route per demand (an admissible path
plus a server per VNF in non-decreasing node order). Partial routes are
pruned on link and server capacity and on a lower bound made of the
replication and cloud terms, which never shrink as demands are added.
Synchronization paths are chosen at the leaves.
"""
import itertools
import logging
import math
import time
from collections import defaultdict
from typing import Dict, Iterator, List, Optional, Tuple

from services.placement_model import (EPS, Instance, PlacementSolution, ServiceChain, check_feasibility,
                                      max_instances, objective, required_sync_pairs)
from services.solver_service import SolveRequest, SolveResult, SolveStats, SolveStatus, build_result

logger = logging.getLogger(__name__)

Route = Tuple[str, Tuple[str, ...]]


class ExactLimitError(ValueError):
    """Raised when an instance is too large for exhaustive search."""


def enumerate_routes(inst: Instance, sfc: ServiceChain) -> List[Route]:
    """Every (path, servers) combination respecting VNF order, in lexicographic order."""
    routes: List[Route] = []
    n = len(sfc.vnfs)
    for p in sfc.path_ids:
        path = inst.catalog.path(p)
        positions = [path.node_position(inst.server_node(x)) for x in path.servers]

        def extend(prefix: Tuple[str, ...], low: int) -> Iterator[Tuple[str, ...]]:
            if len(prefix) == n:
                yield prefix
                return
            for x, pos in zip(path.servers, positions):
                if pos >= low:
                    yield from extend(prefix + (x,), pos)

        routes.extend((p, servers) for servers in extend((), 0))
    return routes


def check_limits(inst: Instance, limits) -> None:
    demands = sum(len(s.demands) for s in inst.sfcs)
    if demands > limits.max_demands:
        raise ExactLimitError(f"Instance has {demands} demands; exact search allows {limits.max_demands}")
    for sfc in inst.sfcs:
        if len(sfc.path_ids) > limits.max_paths:
            raise ExactLimitError(f"SFC {sfc.id} has {len(sfc.path_ids)} paths; limit is {limits.max_paths}")
    if len(inst.topology.servers) > limits.max_servers:
        raise ExactLimitError(f"Topology has {len(inst.topology.servers)} servers; limit is {limits.max_servers}")


class _Search:
    def __init__(self, req: SolveRequest):
        self.req = req
        self.inst = req.instance
        self.weights = req.weights
        self.budget = req.exact_limits.node_budget
        self.demands = [(sfc, dem) for sfc in self.inst.sfcs for dem in sfc.demands]
        self.routes = {sfc.id: enumerate_routes(self.inst, sfc) for sfc in self.inst.sfcs}
        self.link_load: Dict[str, float] = defaultdict(float)
        self.gamma: Dict[str, float] = defaultdict(float)
        self.demands_on: Dict[Tuple[str, int, str], int] = defaultdict(int)
        self.chosen: List[Route] = []
        self.replications = 0
        self.cloud = 0
        self.nodes = 0
        self.exhausted = False
        self.best_value = math.inf
        self.best: Optional[PlacementSolution] = None

    def run(self) -> None:
        self._dfs(0)

    def _bound(self) -> float:
        return self.weights.replication * self.replications + self.weights.cloud * self.cloud

    def _dfs(self, k: int) -> None:
        self.nodes += 1
        if self.nodes > self.budget:
            self.exhausted = True
            return
        if k == len(self.demands):
            self._leaf()
            return
        sfc, dem = self.demands[k]
        for route in self.routes[sfc.id]:
            if self.exhausted:
                return
            if not self._apply(sfc, dem.value, route):
                continue
            self.chosen.append(route)
            if self._bound() < self.best_value - EPS:
                self._dfs(k + 1)
            self.chosen.pop()
            self._undo(sfc, dem.value, route)

    def _apply(self, sfc: ServiceChain, value: float, route: Route) -> bool:
        topo = self.inst.topology
        p, servers = route
        links = self.inst.catalog.path(p).links
        if any(self.link_load[l] + value > topo.link(l).capacity + EPS for l in links):
            return False
        extra: Dict[str, float] = defaultdict(float)
        for v, x in enumerate(servers):
            vnf = sfc.vnfs[v]
            if self.demands_on[(sfc.id, v, x)] == 0:
                live = sum(1 for (s, vv, _), c in self.demands_on.items() if s == sfc.id and vv == v and c)
                if live + 1 > max_instances(self.inst, sfc.id, v):
                    return False
                extra[x] += vnf.overhead
            extra[x] += vnf.load_ratio * value
        if any(self.gamma[x] + add > topo.server(x).capacity + EPS for x, add in extra.items()):
            return False

        for l in links:
            self.link_load[l] += value
        for x, add in extra.items():
            self.gamma[x] += add
        for v, x in enumerate(servers):
            key = (sfc.id, v, x)
            if self.demands_on[key] == 0:
                if any(c for (s, vv, _), c in self.demands_on.items() if s == sfc.id and vv == v):
                    self.replications += 1
                if topo.server(x).is_cloud:
                    self.cloud += 1
            self.demands_on[key] += 1
        return True

    def _undo(self, sfc: ServiceChain, value: float, route: Route) -> None:
        topo = self.inst.topology
        p, servers = route
        for l in self.inst.catalog.path(p).links:
            self.link_load[l] -= value
        for v, x in reversed(list(enumerate(servers))):
            key = (sfc.id, v, x)
            self.demands_on[key] -= 1
            self.gamma[x] -= sfc.vnfs[v].load_ratio * value
            if self.demands_on[key] == 0:
                self.gamma[x] -= sfc.vnfs[v].overhead
                if any(c for (s, vv, _), c in self.demands_on.items() if s == sfc.id and vv == v):
                    self.replications -= 1
                if topo.server(x).is_cloud:
                    self.cloud -= 1

    def _solution(self) -> PlacementSolution:
        sol = PlacementSolution()
        for (sfc, dem), (p, servers) in zip(self.demands, self.chosen):
            sol.demand_path[(sfc.id, dem.id)] = p
            for v, x in enumerate(servers):
                sol.vnf_servers.setdefault((sfc.id, v), set()).add(x)
                sol.demand_vnf_server[(sfc.id, v, dem.id)] = x
        return sol

    def _leaf(self) -> None:
        sol = self._solution()
        value = objective(sol, self.inst, self.req.prior, self.weights).value
        if value >= self.best_value - EPS:
            return
        slots = []
        for key in sorted(sol.vnf_servers):
            for pair in sorted(required_sync_pairs(self.inst, sol.vnf_servers[key])):
                slots.append((key, self.inst.catalog.sync_candidates(*pair)))
        for combo in itertools.product(*(candidates for _, candidates in slots)):
            sol.sync_paths = {}
            for (key, _), p in zip(slots, combo):
                sol.sync_paths.setdefault(key, set()).add(p)
            if not check_feasibility(sol, self.inst, self.req.prior):
                self.best_value = value
                self.best = sol.copy()
                return


def solve_exact(req: SolveRequest) -> SolveResult:
    """
    Minimize the weighted objective exactly.

    Ties go to the lexicographically first assignment. When the node budget
    runs out the best solution found so far is returned with status heuristic.

    Raises:
        ExactLimitError: If the instance exceeds the request's exact limits
    """
    started = time.perf_counter()
    check_limits(req.instance, req.exact_limits)
    search = _Search(req)
    search.run()
    stats = SolveStats(nodes_explored=search.nodes, budget_exhausted=search.exhausted)
    if search.best is None:
        if search.exhausted:
            logger.warning(f"exact: node budget of {req.exact_limits.node_budget} exhausted without a solution")
        stats.failed_demands = [(sfc.id, dem.id) for sfc, dem in search.demands]
        return build_result(req, PlacementSolution(), SolveStatus.INFEASIBLE, stats, started, 'exact')
    status = SolveStatus.HEURISTIC if search.exhausted else SolveStatus.OPTIMAL
    if search.exhausted:
        logger.warning(f"exact: node budget exhausted after {search.nodes} nodes; returning best found")
    return build_result(req, search.best, status, stats, started, 'exact')
