import copy
import math

import pytest

from services.topology_service import (PathCatalogError, TopologyError, build_topology, k_shortest_paths,
                                       load_topology_spec, precompute_paths)
from conftest import make_chain


def test_build_topology_generates_unbounded_cloud_links(k4):
    assert len(k4.nodes) == 5
    assert len(k4.links) == 12 + 8
    assert len(k4.servers) == 5
    cloud_links = [l for l in k4.links if l.touches_cloud]
    assert len(cloud_links) == 8
    assert all(math.isinf(l.capacity) for l in cloud_links)
    assert k4.cloud_servers()[0].is_cloud
    assert math.isinf(k4.server('cloud/x0').capacity)


def test_link_delay_follows_coordinates(k4):
    ab = k4.link_between('A', 'B')
    ba = k4.link_between('B', 'A')
    assert ab.delay_s == pytest.approx(ba.delay_s)
    assert 0.0001 < ab.delay_s < 0.0005
    assert k4.link_between('A', 'cloud').delay_s > ab.delay_s


def test_server_capacity_override_only_touches_ground_servers(k4_spec):
    topo = build_topology(k4_spec, server_capacity=250)
    assert {x.capacity for x in topo.servers if not x.is_cloud} == {250.0}
    assert math.isinf(topo.server('cloud/x0').capacity)


def test_server_order_is_node_order(k4):
    assert [x.id for x in k4.servers] == ['A/x0', 'B/x0', 'C/x0', 'D/x0', 'cloud/x0']
    assert k4.server_index('C/x0') == 2
    assert k4.non_cloud_nodes() == ('A', 'B', 'C', 'D')


def test_graph_carries_delay_and_capacity(k4):
    g = k4.graph()
    assert g.number_of_edges() == 20
    assert g['A']['B']['capacity'] == 100.0
    assert g['A']['B']['delay'] == k4.link_between('A', 'B').delay_s


@pytest.mark.parametrize('mutate, message', [
    (lambda s: s['nodes'].append(dict(s['nodes'][0])), 'Duplicate node'),
    (lambda s: s['links'].append({'src': 'A', 'dst': 'Z', 'capacity': 1}), 'unknown node Z'),
    (lambda s: s['links'].append({'src': 'A', 'dst': 'A', 'capacity': 1}), 'Self-loop'),
    (lambda s: s['links'].append(dict(s['links'][0])), 'Duplicate link'),
    (lambda s: s['links'][0].update(capacity=0), 'capacity must be positive'),
    (lambda s: s['nodes'][0].update(servers=0), 'at least one server'),
    (lambda s: s.pop('links'), 'missing required fields'),
])
def test_invalid_specs_raise(k4_spec, mutate, message):
    spec = copy.deepcopy(k4_spec)
    mutate(spec)
    with pytest.raises(TopologyError, match=message):
        build_topology(spec)


def test_partial_cloud_links_are_rejected(fixtures_dir):
    spec = load_topology_spec(fixtures_dir / 'partial_cloud.json')
    with pytest.raises(TopologyError, match='Missing cloud links for node B'):
        build_topology(spec)


def test_disconnected_ground_network_is_rejected(k4_spec):
    spec = copy.deepcopy(k4_spec)
    spec['links'] = [l for l in spec['links'] if l['src'] != 'D' or l['dst'] == 'cloud']
    with pytest.raises(TopologyError, match='strongly connected'):
        build_topology(spec)


def test_admissible_paths_avoid_cloud_then_traverse_it(k4):
    catalog = precompute_paths(k4, [make_chain('s0', 'A', 'D')])
    paths = [catalog.path(p) for p in catalog.admissible('s0')]
    assert len(paths) == 4
    assert [p.traverses_cloud for p in paths] == [False, False, False, True]
    assert paths[0].nodes == ('A', 'D')
    delays = [p.delay_s for p in paths[:3]]
    assert delays == sorted(delays)
    assert paths[3].nodes == ('A', 'cloud', 'D')
    assert all(p.src == 'A' and p.dst == 'D' for p in paths)
    assert paths[3].servers == ('A/x0', 'cloud/x0', 'D/x0')


def test_sfcs_with_same_endpoints_share_paths(k4):
    catalog = precompute_paths(k4, [make_chain('s0', 'A', 'D'), make_chain('s1', 'A', 'D')])
    assert catalog.admissible('s0') == catalog.admissible('s1')


def test_sync_candidates_cover_every_ordered_pair(k4):
    catalog = precompute_paths(k4, [make_chain('s0', 'A', 'D')])
    assert len(catalog.sync_candidates('A', 'cloud')) == 2
    assert len(catalog.sync_candidates('cloud', 'B')) == 2
    assert len(catalog.sync_candidates('A', 'B')) == 1
    assert catalog.designated_sync('A', 'B') == catalog.sync_candidates('A', 'B')[0]
    assert catalog.sync_candidates('A', 'A') == ()
    p = catalog.designated_sync('B', 'C')
    assert catalog.connects(p, 'B', 'C')


def test_triangle_needs_a_lower_avoiding_minimum(triangle_spec):
    topo = build_topology(triangle_spec)
    with pytest.raises(PathCatalogError, match='only 2 cloud-avoiding paths'):
        precompute_paths(topo, [make_chain('s0', 'A', 'B')])
    catalog = precompute_paths(topo, [make_chain('s0', 'A', 'B')], min_avoiding_paths=2)
    assert len(catalog.admissible('s0')) == 3


@pytest.mark.parametrize('src, dst, message', [
    ('A', 'A', 'identical endpoints'),
    ('A', 'cloud', 'not a network node'),
    ('A', 'Q', 'not a network node'),
])
def test_invalid_sfc_endpoints(k4, src, dst, message):
    sfc = type('Pair', (), {'id': 'bad', 'src': src, 'dst': dst})()
    with pytest.raises(PathCatalogError, match=message):
        precompute_paths(k4, [sfc])


def test_k_shortest_paths_orders_by_delay_and_handles_missing_nodes(k4):
    g = k4.graph()
    paths = k_shortest_paths(g, 'A', 'D', 10)
    delays = [sum(g[a][b]['delay'] for a, b in zip(p, p[1:])) for p in paths]
    assert delays == sorted(delays)
    assert len({tuple(p) for p in paths}) == len(paths)
    assert k_shortest_paths(g, 'A', 'nowhere', 3) == []


def test_shipped_topologies_load(k4):
    from config.settings import Settings
    from pathlib import Path
    n7 = build_topology(load_topology_spec(Path(Settings.TOPOLOGY_DIR) / 'n7.json'))
    assert len(n7.non_cloud_nodes()) == 7
    assert len([l for l in n7.links if not l.touches_cloud]) == 20
    n45 = build_topology(load_topology_spec(Path(Settings.TOPOLOGY_DIR) / 'n45.json'))
    assert len(n45.non_cloud_nodes()) == 45
    assert len([l for l in n45.links if not l.touches_cloud]) == 140
    assert len(n45.servers_at(n45.non_cloud_nodes()[0])) == 8


def test_single_node_gets_both_cloud_links():
    spec = {
        'name': 'Solo',
        'nodes': [{'id': 'A', 'lat': 52.27, 'lon': 10.53, 'servers': 1, 'server_capacity': 10}],
        'links': [],
        'cloud': {'id': 'cloud', 'lat': 50.11, 'lon': 8.68, 'servers': 1},
    }
    topo = build_topology(spec)
    assert sorted((l.src, l.dst) for l in topo.links) == [('A', 'cloud'), ('cloud', 'A')]
    assert topo.link_between('A', 'cloud').delay_s > 0
