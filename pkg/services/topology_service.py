"""Network model: nodes, directed links, servers, the third-party cloud and the
precomputed path catalogs every solver draws its routes from."""
import logging
import math
from dataclasses import dataclass, field
from itertools import islice
from pathlib import Path as FilePath
from typing import Any, Dict, Iterable, List, Optional, Protocol, Sequence, Tuple, Union

import networkx as nx

from schemas.file_schemas import TOPOLOGY_SPEC_SCHEMA, missing_fields
from utils.geo import GeoCoord, propagation_delay_s
from utils.report_writer import read_json

logger = logging.getLogger(__name__)

UNBOUNDED = math.inf
DEFAULT_CLOUD_ID = 'cloud'

TopologySpec = Dict[str, Any]
NodePair = Tuple[str, str]


class TopologyError(ValueError):
    """Raised when a topology spec cannot be turned into a valid network."""


class PathCatalogError(ValueError):
    """Raised when the admissible paths for an endpoint pair cannot be built."""


@dataclass(frozen=True)
class Node:
    id: str
    lat: float
    lon: float
    is_cloud: bool = False

    @property
    def coord(self) -> GeoCoord:
        return GeoCoord(self.lat, self.lon)


@dataclass(frozen=True)
class Link:
    id: str
    src: str
    dst: str
    capacity: float
    delay_s: float
    touches_cloud: bool = False


@dataclass(frozen=True)
class Server:
    id: str
    node: str
    capacity: float
    is_cloud: bool = False


@dataclass(frozen=True)
class Topology:
    """Immutable network; lookups are built once at construction."""

    name: str
    nodes: Tuple[Node, ...]
    links: Tuple[Link, ...]
    servers: Tuple[Server, ...]
    cloud_node: str
    _node_by_id: Dict[str, Node] = field(init=False, repr=False, compare=False)
    _link_by_id: Dict[str, Link] = field(init=False, repr=False, compare=False)
    _link_by_pair: Dict[NodePair, Link] = field(init=False, repr=False, compare=False)
    _server_by_id: Dict[str, Server] = field(init=False, repr=False, compare=False)
    _server_index: Dict[str, int] = field(init=False, repr=False, compare=False)
    _servers_at: Dict[str, Tuple[Server, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        servers_at: Dict[str, List[Server]] = {n.id: [] for n in self.nodes}
        for server in self.servers:
            servers_at.setdefault(server.node, []).append(server)
        object.__setattr__(self, '_node_by_id', {n.id: n for n in self.nodes})
        object.__setattr__(self, '_link_by_id', {l.id: l for l in self.links})
        object.__setattr__(self, '_link_by_pair', {(l.src, l.dst): l for l in self.links})
        object.__setattr__(self, '_server_by_id', {x.id: x for x in self.servers})
        object.__setattr__(self, '_server_index', {x.id: i for i, x in enumerate(self.servers)})
        object.__setattr__(self, '_servers_at', {n: tuple(xs) for n, xs in servers_at.items()})

    def node(self, node_id: str) -> Node:
        return self._node_by_id[node_id]

    def has_node(self, node_id: str) -> bool:
        return node_id in self._node_by_id

    def link(self, link_id: str) -> Link:
        return self._link_by_id[link_id]

    def link_between(self, src: str, dst: str) -> Optional[Link]:
        return self._link_by_pair.get((src, dst))

    def server(self, server_id: str) -> Server:
        return self._server_by_id[server_id]

    def has_server(self, server_id: str) -> bool:
        return server_id in self._server_by_id

    def server_index(self, server_id: str) -> int:
        """Global server order; every tie-break in the toolkit uses it."""
        return self._server_index[server_id]

    def servers_at(self, node_id: str) -> Tuple[Server, ...]:
        return self._servers_at.get(node_id, ())

    def non_cloud_nodes(self) -> Tuple[str, ...]:
        return tuple(n.id for n in self.nodes if not n.is_cloud)

    def cloud_servers(self) -> Tuple[Server, ...]:
        return self.servers_at(self.cloud_node)

    def graph(self) -> nx.DiGraph:
        """Directed graph with ``delay`` and ``capacity`` edge attributes."""
        g = nx.DiGraph()
        for n in self.nodes:
            g.add_node(n.id, cloud=n.is_cloud)
        for l in self.links:
            g.add_edge(l.src, l.dst, delay=l.delay_s, capacity=l.capacity, id=l.id)
        return g


def load_topology_spec(path: Union[str, FilePath]) -> TopologySpec:
    """Read a topology spec document from disk."""
    return read_json(path)


def link_id(src: str, dst: str) -> str:
    return f"{src}->{dst}"


def server_id(node_id: str, index: int) -> str:
    return f"{node_id}/x{index}"


def build_topology(spec: TopologySpec, server_capacity: Optional[float] = None) -> Topology:
    """
    Materialize a topology spec.

    Args:
        spec: Parsed topology document (see TOPOLOGY_SPEC_SCHEMA)
        server_capacity: Optional override for every non-cloud server capacity

    Returns:
        Topology: validated network with derived link delays

    Raises:
        TopologyError: On duplicate ids, unknown link endpoints, invalid
            capacities, missing cloud links or a disconnected network
    """
    missing = missing_fields(spec, TOPOLOGY_SPEC_SCHEMA)
    if missing:
        raise TopologyError(f"Topology spec is missing required fields: {', '.join(missing)}")

    cloud_spec = spec['cloud']
    cloud_id = str(cloud_spec.get('id', DEFAULT_CLOUD_ID))

    nodes: List[Node] = []
    servers: List[Server] = []
    seen = set()
    for entry in spec['nodes']:
        nid = str(entry['id'])
        if nid in seen or nid == cloud_id:
            raise TopologyError(f"Duplicate node id: {nid}")
        seen.add(nid)
        nodes.append(Node(nid, float(entry['lat']), float(entry['lon'])))
        count = int(entry['servers'])
        capacity = float(server_capacity if server_capacity is not None else entry['server_capacity'])
        if count < 1:
            raise TopologyError(f"Node {nid} needs at least one server")
        if capacity <= 0:
            raise TopologyError(f"Server capacity of node {nid} must be positive")
        servers.extend(Server(server_id(nid, i), nid, capacity) for i in range(count))

    cloud = Node(cloud_id, float(cloud_spec['lat']), float(cloud_spec['lon']), is_cloud=True)
    cloud_count = int(cloud_spec['servers'])
    if cloud_count < 1:
        raise TopologyError("The cloud needs at least one server")
    nodes.append(cloud)
    servers.extend(Server(server_id(cloud_id, i), cloud_id, UNBOUNDED, is_cloud=True) for i in range(cloud_count))
    coords = {n.id: n.coord for n in nodes}

    links: List[Link] = []
    pairs = set()
    cloud_pairs = set()
    for entry in spec['links']:
        src, dst = str(entry['src']), str(entry['dst'])
        for end in (src, dst):
            if end not in coords:
                raise TopologyError(f"Link {src}->{dst} references unknown node {end}")
        if src == dst:
            raise TopologyError(f"Self-loop link on node {src}")
        if (src, dst) in pairs:
            raise TopologyError(f"Duplicate link {src}->{dst}")
        pairs.add((src, dst))
        touches_cloud = cloud_id in (src, dst)
        capacity = float(entry['capacity'])
        if capacity <= 0:
            raise TopologyError(f"Link {src}->{dst} capacity must be positive")
        if touches_cloud:
            cloud_pairs.add((src, dst))
            capacity = UNBOUNDED
        links.append(Link(link_id(src, dst), src, dst, capacity,
                          propagation_delay_s(coords[src], coords[dst]), touches_cloud))

    non_cloud = [n.id for n in nodes if not n.is_cloud]
    if cloud_pairs:
        for nid in non_cloud:
            if (nid, cloud_id) not in cloud_pairs or (cloud_id, nid) not in cloud_pairs:
                raise TopologyError(f"Missing cloud links for node {nid}")
    else:
        for nid in non_cloud:
            for src, dst in ((nid, cloud_id), (cloud_id, nid)):
                links.append(Link(link_id(src, dst), src, dst, UNBOUNDED,
                                  propagation_delay_s(coords[src], coords[dst]), True))

    topology = Topology(str(spec.get('name', 'topology')), tuple(nodes), tuple(links), tuple(servers), cloud_id)

    ground = topology.graph().subgraph(non_cloud)
    if len(non_cloud) > 1 and not nx.is_strongly_connected(ground):
        raise TopologyError("Non-cloud nodes are not strongly connected")

    logger.info(f"Built topology {topology.name}: {len(nodes)} nodes, {len(links)} links, {len(servers)} servers")
    return topology


@dataclass(frozen=True)
class Path:
    id: str
    nodes: Tuple[str, ...]
    links: Tuple[str, ...]
    servers: Tuple[str, ...]
    delay_s: float
    traverses_cloud: bool

    @property
    def src(self) -> str:
        return self.nodes[0]

    @property
    def dst(self) -> str:
        return self.nodes[-1]

    def node_position(self, node_id: str) -> int:
        return self.nodes.index(node_id)


class EndpointPair(Protocol):
    id: str
    src: str
    dst: str


@dataclass(frozen=True)
class PathCatalog:
    paths: Tuple[Path, ...]
    pair_paths: Dict[NodePair, Tuple[str, ...]]
    sfc_paths: Dict[str, Tuple[str, ...]]
    sync_paths: Dict[NodePair, Tuple[str, ...]]
    _by_id: Dict[str, Path] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, '_by_id', {p.id: p for p in self.paths})

    def path(self, path_id: str) -> Path:
        return self._by_id[path_id]

    def has_path(self, path_id: str) -> bool:
        return path_id in self._by_id

    def admissible(self, sfc_id: str) -> Tuple[str, ...]:
        return self.sfc_paths.get(sfc_id, ())

    def sync_candidates(self, src: str, dst: str) -> Tuple[str, ...]:
        return self.sync_paths.get((src, dst), ())

    def designated_sync(self, src: str, dst: str) -> Optional[str]:
        candidates = self.sync_candidates(src, dst)
        return candidates[0] if candidates else None

    def uses_link(self, path_id: str, link: str) -> bool:
        return link in self._by_id[path_id].links

    def connects(self, path_id: str, src: str, dst: str) -> bool:
        p = self._by_id[path_id]
        return p.src == src and p.dst == dst


class _PathRegistry:
    """Deduplicates node sequences so equal routes share one path id."""

    def __init__(self, topology: Topology):
        self.topology = topology
        self.paths: List[Path] = []
        self._ids: Dict[Tuple[str, ...], str] = {}

    def add(self, nodes: Sequence[str]) -> str:
        key = tuple(nodes)
        if key in self._ids:
            return self._ids[key]
        links = []
        delay = 0.0
        for a, b in zip(key, key[1:]):
            link = self.topology.link_between(a, b)
            if link is None:
                raise PathCatalogError(f"No link between consecutive nodes {a} and {b}")
            links.append(link.id)
            delay += link.delay_s
        servers = tuple(x.id for n in key for x in self.topology.servers_at(n))
        pid = f"p{len(self.paths)}"
        self.paths.append(Path(pid, key, tuple(links), servers, delay, self.topology.cloud_node in key))
        self._ids[key] = pid
        return pid


def k_shortest_paths(graph: nx.DiGraph, src: str, dst: str, k: int) -> List[List[str]]:
    """Up to ``k`` loopless paths ordered by total delay."""
    try:
        return [list(p) for p in islice(nx.shortest_simple_paths(graph, src, dst, weight='delay'), k)]
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return []


def _cloud_traversing_path(graph: nx.DiGraph, src: str, dst: str, cloud: str) -> Optional[List[str]]:
    try:
        to_cloud = nx.shortest_path(graph.subgraph([n for n in graph if n != dst]), src, cloud, weight='delay')
        used = set(to_cloud[:-1])
        from_cloud = nx.shortest_path(graph.subgraph([n for n in graph if n not in used]), cloud, dst, weight='delay')
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return None
    return list(to_cloud) + list(from_cloud[1:])


def precompute_paths(topology: Topology,
                     sfcs: Iterable[EndpointPair],
                     avoiding_paths: int = 3,
                     min_avoiding_paths: int = 3,
                     cloud_sync_paths: int = 2) -> PathCatalog:
    """
    Build the admissible and synchronization path catalogs.

    Per SFC endpoint pair: the ``avoiding_paths`` shortest loopless paths that
    avoid the cloud node followed by the shortest path through it. Per ordered
    node pair: one shortest sync path, or ``cloud_sync_paths`` of them when
    the pair touches the cloud.

    Raises:
        PathCatalogError: When an SFC has src == dst, references unknown nodes
            or has fewer than ``min_avoiding_paths`` cloud-avoiding paths
    """
    graph = topology.graph()
    cloud = topology.cloud_node
    ground = graph.subgraph([n for n in graph if n != cloud])
    registry = _PathRegistry(topology)

    pair_paths: Dict[NodePair, Tuple[str, ...]] = {}
    sfc_paths: Dict[str, Tuple[str, ...]] = {}
    for sfc in sfcs:
        pair = (sfc.src, sfc.dst)
        if sfc.src == sfc.dst:
            raise PathCatalogError(f"SFC {sfc.id} has identical endpoints {sfc.src}")
        for end in pair:
            if not topology.has_node(end) or end == cloud:
                raise PathCatalogError(f"SFC {sfc.id} endpoint {end} is not a network node")
        if pair not in pair_paths:
            avoiding = k_shortest_paths(ground, sfc.src, sfc.dst, avoiding_paths)
            if len(avoiding) < min_avoiding_paths:
                raise PathCatalogError(
                    f"Endpoint pair {sfc.src}->{sfc.dst} has only {len(avoiding)} cloud-avoiding paths "
                    f"({min_avoiding_paths} required)")
            ids = [registry.add(p) for p in avoiding]
            via_cloud = _cloud_traversing_path(graph, sfc.src, sfc.dst, cloud)
            if via_cloud is None:
                raise PathCatalogError(f"Endpoint pair {sfc.src}->{sfc.dst} has no path through the cloud")
            ids.append(registry.add(via_cloud))
            pair_paths[pair] = tuple(ids)
        sfc_paths[sfc.id] = pair_paths[pair]

    sync_paths: Dict[NodePair, Tuple[str, ...]] = {}
    shortest = dict(nx.all_pairs_dijkstra_path(graph, weight='delay'))
    node_ids = [n.id for n in topology.nodes]
    for a in node_ids:
        for b in node_ids:
            if a == b:
                continue
            if cloud in (a, b):
                routes = k_shortest_paths(graph, a, b, cloud_sync_paths)
            else:
                routes = [shortest[a][b]] if b in shortest.get(a, {}) else []
            if routes:
                sync_paths[(a, b)] = tuple(registry.add(r) for r in routes)

    logger.info(f"Precomputed {len(registry.paths)} paths for {len(pair_paths)} endpoint pairs")
    return PathCatalog(tuple(registry.paths), pair_paths, sfc_paths, sync_paths)
