"""
Placement heuristics: First-Fit, Random-Fit and the reuse-driven greedy.

All three build a ``PlacementState`` demand by demand, keep going after a
demand fails, and hand the finished solution to the feasibility checker.
"""
import logging
import time
from collections import defaultdict
from typing import Dict, List, Optional, Sequence

import numpy as np

from services.placement_model import Instance, PlacementSolution, PriorPlacement, ServiceChain
from services.placement_state import PlacementState
from services.solver_service import SolveRequest, SolveResult, SolveStats, SolveStatus, build_result

logger = logging.getLogger(__name__)


def first_fit_chain(state: PlacementState, s: str, value: float, path_id: str, start: int = 0,
                    first_vnf: int = 0, pending: Optional[Dict[str, float]] = None) -> Optional[List[str]]:
    """
    Place VNFs ``first_vnf..`` of ``s`` on the first servers of the path that
    fit, never moving backwards along it.

    Returns:
        Optional[List[str]]: one server per placed VNF, or None if the chain does not fit
    """
    servers = state.inst.catalog.path(path_id).servers
    pending = defaultdict(float, pending or {})
    route = []
    position = start
    for v in range(first_vnf, len(state.inst.sfc(s).vnfs)):
        for i in range(position, len(servers)):
            x = servers[i]
            if state.instance_allowed(s, v, x, path_id) and state.server_fits(s, v, x, value, pending):
                pending[x] += state.added_load(s, v, x, value, not state.is_instance(s, v, x))
                route.append(x)
                position = i
                break
        else:
            return None
    return route


def random_fit_chain(state: PlacementState, s: str, value: float, path_id: str,
                     rng: np.random.Generator) -> Optional[List[str]]:
    """Random server per VNF among those that still leave room for the rest of the chain."""
    servers = state.inst.catalog.path(path_id).servers
    pending: Dict[str, float] = defaultdict(float)
    route = []
    position = 0
    n = len(state.inst.sfc(s).vnfs)
    for v in range(n):
        acceptable = []
        for i in range(position, len(servers)):
            x = servers[i]
            if not (state.instance_allowed(s, v, x, path_id) and state.server_fits(s, v, x, value, pending)):
                continue
            trial = dict(pending)
            trial[x] = trial.get(x, 0.0) + state.added_load(s, v, x, value, not state.is_instance(s, v, x))
            if v + 1 == n or first_fit_chain(state, s, value, path_id, i, v + 1, trial) is not None:
                acceptable.append(i)
        if not acceptable:
            return None
        i = acceptable[int(rng.integers(len(acceptable)))]
        x = servers[i]
        pending[x] += state.added_load(s, v, x, value, not state.is_instance(s, v, x))
        route.append(x)
        position = i
    return route


def _place_with_sync(state: PlacementState, s: str, d: str, path_id: str, route: Sequence[str]) -> bool:
    state.place(s, d, path_id, route)
    if state.refresh_sync(s):
        state.remove(s, d)
        state.refresh_sync(s)
        return False
    return True


def _fit(req: SolveRequest, randomized: bool, name: str) -> SolveResult:
    started = time.perf_counter()
    inst = req.instance
    state = PlacementState(inst, req.prior)
    rng = np.random.default_rng(req.rng_seed)
    stats = SolveStats()
    for sfc in inst.sfcs:
        for dem in sfc.demands:
            candidates = [p for p in sfc.path_ids if state.path_fits(p, dem.value)]
            if randomized:
                candidates = [candidates[i] for i in rng.permutation(len(candidates))]
            placed = False
            for p in candidates:
                stats.placement_attempts += 1
                if randomized:
                    route = random_fit_chain(state, sfc.id, dem.value, p, rng)
                else:
                    route = first_fit_chain(state, sfc.id, dem.value, p)
                if route is not None and _place_with_sync(state, sfc.id, dem.id, p, route):
                    placed = True
                    break
            if not placed:
                logger.debug(f"{name}: no admissible path or server for demand {sfc.id}/{dem.id}")
                stats.failed_demands.append((sfc.id, dem.id))
    status = SolveStatus.INFEASIBLE if stats.failed_demands else SolveStatus.HEURISTIC
    return build_result(req, state.sol, status, stats, started, name)


def solve_first_fit(req: SolveRequest) -> SolveResult:
    return _fit(req, randomized=False, name='ff')


def solve_random_fit(req: SolveRequest) -> SolveResult:
    return _fit(req, randomized=True, name='rf')


def greedy_order(inst: Instance) -> List[ServiceChain]:
    """SFCs by ascending total demand; ties by id."""
    return sorted(inst.sfcs, key=lambda s: (s.total_demand, s.id))


def choose_path(inst: Instance, s: str, d: str, candidates: Sequence[str], sol: PlacementSolution,
                prior: Optional[PriorPlacement]) -> str:
    """
    Priority chain: the demand's previous path, any previous path of the SFC,
    any path the SFC already uses, then the lowest propagation delay.
    """
    if prior is not None:
        p = prior.demand_path(s, d)
        if p in candidates:
            return p
        previous = prior.paths_for(s)
        for p in candidates:
            if p in previous:
                return p
    used = {p for (ss, _), p in sol.demand_path.items() if ss == s}
    for p in candidates:
        if p in used:
            return p
    return min(candidates, key=lambda p: (inst.catalog.path(p).delay_s, candidates.index(p)))


def choose_server(inst: Instance, sol: PlacementSolution, prior: Optional[PriorPlacement], s: str, d: str,
                  path_id: str, v: int, servers: Sequence[str], last_attempt: bool,
                  prev_server: Optional[str] = None, next_server: Optional[str] = None) -> Optional[str]:
    """
    Pick a server for VNF ``v`` of demand ``d`` among ``servers`` (available,
    in path order).

    Servers on nodes before the previous VNF or after the next VNF are
    dropped. Reuse is tried in order: the demand's previous server, any
    previous server of the VNF, any current server of the VNF. On the last
    attempt a reuse hit past the cloud server becomes the cloud server, and
    without a hit the first remaining server is returned.
    """
    path = inst.catalog.path(path_id)

    def position(x):
        return path.node_position(inst.server_node(x))

    low = position(prev_server) if prev_server is not None else -1
    high = position(next_server) if next_server is not None else len(path.nodes)
    remaining = [x for x in servers if low <= position(x) <= high]
    if not remaining:
        return None
    order = {x: i for i, x in enumerate(path.servers)}
    cloud = next((x for x in remaining if inst.is_cloud_server(x)), None)

    def check_position(x):
        if last_attempt and cloud is not None and order[x] > order[cloud]:
            return cloud
        return x

    hits = []
    if prior is not None:
        hits.append(prior.demand_server(s, v, d))
        previous = prior.servers_for(s, v)
        hits.append(next((x for x in remaining if x in previous), None))
    current = sol.vnf_servers.get((s, v), set())
    hits.append(next((x for x in remaining if x in current), None))
    for x in hits:
        if x is not None and x in remaining:
            return check_position(x)
    return remaining[0] if last_attempt else None


def _greedy_chain(state: PlacementState, sfc: ServiceChain, d: str, value: float, path_id: str,
                  last_attempt: bool) -> Optional[List[str]]:
    pending: Dict[str, float] = defaultdict(float)
    route: List[str] = []
    prev = None
    for v in range(len(sfc.vnfs)):
        available = state.available_servers(sfc.id, v, value, path_id, pending)
        x = choose_server(state.inst, state.sol, state.prior, sfc.id, d, path_id, v, available, last_attempt, prev)
        if x is None:
            return None
        pending[x] += state.added_load(sfc.id, v, x, value, not state.is_instance(sfc.id, v, x))
        route.append(x)
        prev = x
    return route


def solve_greedy(req: SolveRequest) -> SolveResult:
    """
    Greedy placement. Each demand first sweeps its candidate paths accepting
    only reused servers; a second sweep marks every attempt as the last one so
    that fresh servers are taken. This differs from flagging only the final
    remaining path: a demand whose earlier paths lack reusable servers can
    still open fresh ones on its preferred path instead of falling through to
    the last candidate, usually the cloud path. Sync traffic is added once per
    SFC; an overloaded sync link triggers consolidation of the offending
    replicas.
    """
    started = time.perf_counter()
    inst = req.instance
    state = PlacementState(inst, req.prior)
    stats = SolveStats()
    infeasible = False
    for sfc in greedy_order(inst):
        for dem in sfc.demands:
            candidates = [p for p in sfc.path_ids if state.path_fits(p, dem.value)]
            placed = False
            for last_attempt in (False, True):
                remaining = list(candidates)
                while remaining and not placed:
                    p = choose_path(inst, sfc.id, dem.id, remaining, state.sol, req.prior)
                    stats.placement_attempts += 1
                    route = _greedy_chain(state, sfc, dem.id, dem.value, p, last_attempt)
                    if route is None:
                        remaining.remove(p)
                        continue
                    state.place(sfc.id, dem.id, p, route)
                    placed = True
                if placed:
                    break
            if not placed:
                logger.debug(f"greedy: all paths exhausted for demand {sfc.id}/{dem.id}")
                stats.failed_demands.append((sfc.id, dem.id))

        overloaded = state.refresh_sync(sfc.id)
        if overloaded:
            for v, (_, node) in overloaded:
                state.consolidate_replicas(sfc.id, v, node)
            overloaded = state.refresh_sync(sfc.id)
            if overloaded:
                logger.warning(f"greedy: sync traffic of {sfc.id} does not fit after consolidation")
                infeasible = True

    status = SolveStatus.INFEASIBLE if infeasible or stats.failed_demands else SolveStatus.HEURISTIC
    return build_result(req, state.sol, status, stats, started, 'greedy')
