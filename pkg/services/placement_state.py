import logging
from collections import defaultdict
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

from services.placement_model import (EPS, Instance, PlacementSolution, PriorPlacement,
                                      original_server, required_sync_pairs)

logger = logging.getLogger(__name__)


class PlacementState:
    """
    A solution under construction plus the residual link and server capacity
    it leaves. Demands are placed and removed one at a time; synchronization
    traffic is recomputed per SFC with ``refresh_sync``.
    """

    def __init__(self, inst: Instance, prior: Optional[PriorPlacement] = None):
        self.inst = inst
        self.prior = prior
        self.sol = PlacementSolution()
        self.link_load: Dict[str, float] = {l.id: 0.0 for l in inst.topology.links}
        self.server_gamma: Dict[str, float] = {x.id: 0.0 for x in inst.topology.servers}
        self._demands_on: Dict[Tuple[str, int, str], int] = defaultdict(int)

    # capacity queries

    def residual_link(self, link_id: str) -> float:
        return self.inst.topology.link(link_id).capacity - self.link_load[link_id]

    def path_fits(self, path_id: str, volume: float) -> bool:
        return all(self.residual_link(l) + EPS >= volume for l in self.inst.catalog.path(path_id).links)

    def is_instance(self, s: str, v: int, x: str) -> bool:
        return x in self.sol.vnf_servers.get((s, v), ())

    def added_load(self, s: str, v: int, x: str, value: float, new_instance: bool) -> float:
        vnf = self.inst.sfc(s).vnfs[v]
        return vnf.load_ratio * value + (vnf.overhead if new_instance else 0.0)

    def server_fits(self, s: str, v: int, x: str, value: float, pending: Mapping[str, float] = None) -> bool:
        extra = self.added_load(s, v, x, value, not self.is_instance(s, v, x))
        used = self.server_gamma[x] + (pending or {}).get(x, 0.0)
        return used + extra <= self.inst.topology.server(x).capacity + EPS

    def paths_used(self, s: str) -> Set[str]:
        return {p for (ss, _), p in self.sol.demand_path.items() if ss == s}

    def instance_allowed(self, s: str, v: int, x: str, path_id: str) -> bool:
        """Whether ``x`` may host (s, v) for a demand routed on ``path_id``."""
        instances = self.sol.vnf_servers.get((s, v), set())
        if x in instances:
            return True
        if not self.inst.sfc(s).vnfs[v].replicable:
            return not instances
        return len(instances) + 1 <= len(self.paths_used(s) | {path_id})

    def available_servers(self, s: str, v: int, d_value: float, path_id: str,
                          pending: Mapping[str, float] = None) -> List[str]:
        """Servers on the path, in path order, that can take (s, v) for this demand."""
        return [x for x in self.inst.catalog.path(path_id).servers
                if self.instance_allowed(s, v, x, path_id) and self.server_fits(s, v, x, d_value, pending)]

    # mutation

    def place(self, s: str, d: str, path_id: str, servers: Sequence[str]) -> None:
        value = self.inst.sfc(s).demand(d).value
        self.sol.demand_path[(s, d)] = path_id
        for l in self.inst.catalog.path(path_id).links:
            self.link_load[l] += value
        for v, x in enumerate(servers):
            new_instance = not self.is_instance(s, v, x)
            self.server_gamma[x] += self.added_load(s, v, x, value, new_instance)
            self.sol.vnf_servers.setdefault((s, v), set()).add(x)
            self.sol.demand_vnf_server[(s, v, d)] = x
            self._demands_on[(s, v, x)] += 1

    def remove(self, s: str, d: str) -> None:
        """Undo ``place``; instances left without demands disappear. Sync traffic is untouched."""
        sfc = self.inst.sfc(s)
        value = sfc.demand(d).value
        path_id = self.sol.demand_path.pop((s, d))
        for l in self.inst.catalog.path(path_id).links:
            self.link_load[l] -= value
        for v, vnf in enumerate(sfc.vnfs):
            x = self.sol.demand_vnf_server.pop((s, v, d))
            self.server_gamma[x] -= vnf.load_ratio * value
            self._demands_on[(s, v, x)] -= 1
            if self._demands_on[(s, v, x)] == 0:
                del self._demands_on[(s, v, x)]
                self.server_gamma[x] -= vnf.overhead
                self.sol.vnf_servers[(s, v)].discard(x)
                if not self.sol.vnf_servers[(s, v)]:
                    del self.sol.vnf_servers[(s, v)]

    def move_assignment(self, s: str, v: int, d: str, target: str) -> None:
        """Re-home one demand's VNF ``v`` on ``target`` without changing its path."""
        vnf = self.inst.sfc(s).vnfs[v]
        value = self.inst.sfc(s).demand(d).value
        source = self.sol.demand_vnf_server[(s, v, d)]
        if source == target:
            return
        self.server_gamma[source] -= vnf.load_ratio * value
        self._demands_on[(s, v, source)] -= 1
        if self._demands_on[(s, v, source)] == 0:
            del self._demands_on[(s, v, source)]
            self.server_gamma[source] -= vnf.overhead
            self.sol.vnf_servers[(s, v)].discard(source)
        new_instance = not self.is_instance(s, v, target)
        self.server_gamma[target] += self.added_load(s, v, target, value, new_instance)
        self.sol.vnf_servers.setdefault((s, v), set()).add(target)
        self.sol.demand_vnf_server[(s, v, d)] = target
        self._demands_on[(s, v, target)] += 1

    def _drop_sync(self, s: str) -> None:
        for v in range(len(self.inst.sfc(s).vnfs)):
            paths = self.sol.sync_paths.pop((s, v), set())
            volume = self.inst.sync_traffic(s, v)
            for p in paths:
                for l in self.inst.catalog.path(p).links:
                    self.link_load[l] -= volume

    def refresh_sync(self, s: str) -> List[Tuple[int, Tuple[str, str]]]:
        """
        Recompute the synchronization paths of every VNF of ``s``.

        Each replica pair takes the first candidate path with room for the
        sync volume; when none has room the designated path is used anyway.

        Returns:
            List of (vnf, (src_node, dst_node)) pairs whose sync path overloads a link
        """
        self._drop_sync(s)
        overloaded = []
        for v in range(len(self.inst.sfc(s).vnfs)):
            pairs = sorted(required_sync_pairs(self.inst, self.sol.vnf_servers.get((s, v), ())))
            if not pairs:
                continue
            volume = self.inst.sync_traffic(s, v)
            chosen = set()
            for pair in pairs:
                candidates = self.inst.catalog.sync_candidates(*pair)
                fitting = [p for p in candidates if self.path_fits(p, volume)]
                if fitting:
                    path_id = fitting[0]
                else:
                    path_id = candidates[0]
                    overloaded.append((v, pair))
                chosen.add(path_id)
                for l in self.inst.catalog.path(path_id).links:
                    self.link_load[l] += volume
            self.sol.sync_paths[(s, v)] = chosen
        return overloaded

    def consolidate_replicas(self, s: str, v: int, node: str) -> bool:
        """
        Move every demand served by replicas of (s, v) on ``node`` onto the
        original instance, when it lies on the demand's path in a position that
        keeps VNF order and has capacity. Returns True if the replicas are gone.
        """
        servers = self.sol.vnf_servers.get((s, v), set())
        if len(servers) < 2:
            return True
        origin = original_server(self.inst, servers)
        replicas = [x for x in servers if x != origin and self.inst.server_node(x) == node]
        moves = []
        pending: Dict[str, float] = defaultdict(float)
        for (ss, vv, d), x in sorted(self.sol.demand_vnf_server.items()):
            if ss != s or vv != v or x not in replicas:
                continue
            path = self.inst.catalog.path(self.sol.demand_path[(s, d)])
            if origin not in path.servers or not self._order_holds(s, v, d, origin):
                return False
            value = self.inst.sfc(s).demand(d).value
            if not self.server_fits(s, v, origin, value, pending):
                return False
            pending[origin] += self.inst.sfc(s).vnfs[v].load_ratio * value
            moves.append(d)
        for d in moves:
            self.move_assignment(s, v, d, origin)
        return True

    def _order_holds(self, s: str, v: int, d: str, x: str) -> bool:
        path = self.inst.catalog.path(self.sol.demand_path[(s, d)])
        position = path.node_position(self.inst.server_node(x))
        n = len(self.inst.sfc(s).vnfs)
        if v > 0:
            prev = self.sol.demand_vnf_server[(s, v - 1, d)]
            if path.node_position(self.inst.server_node(prev)) > position:
                return False
        if v + 1 < n:
            nxt = self.sol.demand_vnf_server[(s, v + 1, d)]
            if path.node_position(self.inst.server_node(nxt)) < position:
                return False
        return True
