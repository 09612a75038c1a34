import pytest

from services.placement_model import (Demand, MalformedSolutionError, ObjectiveWeights, PlacementSolution,
                                      PriorPlacement, ServiceChain, SyncTrafficMode, VnfSpec, ViolationKind,
                                      build_instance, check_feasibility, demand_delay, downtime, evaluate,
                                      link_utilization, max_instances, migrations, objective, processing_delay,
                                      required_sync_pairs, server_load, single_objective_weights, solution_from_dict,
                                      solution_to_dict, to_prior)
from conftest import make_chain


def path_through(inst, sfc_id, nodes):
    for p in inst.paths_for(sfc_id):
        if p.nodes == tuple(nodes):
            return p.id
    raise AssertionError(f"no admissible path {nodes}")


def place(inst, sfc_id, demand_paths, demand_servers):
    """demand_paths: {demand: nodes}; demand_servers: {demand: [server per vnf]}."""
    sol = PlacementSolution()
    for d, nodes in demand_paths.items():
        sol.demand_path[(sfc_id, d)] = path_through(inst, sfc_id, nodes)
    for d, servers in demand_servers.items():
        for v, x in enumerate(servers):
            sol.demand_vnf_server[(sfc_id, v, d)] = x
            sol.vnf_servers.setdefault((sfc_id, v), set()).add(x)
    return sol


def kinds(violations):
    return {v.kind for v in violations}


def test_direct_placement_is_feasible(single_sfc_instance):
    sol = place(single_sfc_instance, 's0', {'d0': 'AD'}, {'d0': ['A/x0', 'A/x0']})
    assert check_feasibility(sol, single_sfc_instance) == []
    value = objective(sol, single_sfc_instance, None, ObjectiveWeights())
    assert (value.migrations, value.replications, value.cloud_vnfs, value.value) == (0, 0, 0, 0.0)


def test_unrouted_demand_is_flagged(single_sfc_instance):
    sol = place(single_sfc_instance, 's0', {}, {})
    found = check_feasibility(sol, single_sfc_instance)
    assert ViolationKind.ONE_PATH in kinds(found)
    assert found[0].sfc == 's0' and found[0].demand == 'd0'


def test_missing_vnf_server_is_flagged(single_sfc_instance):
    sol = place(single_sfc_instance, 's0', {'d0': 'AD'}, {'d0': ['A/x0']})
    assert ViolationKind.ONE_SERVER in kinds(check_feasibility(sol, single_sfc_instance))


def test_server_off_the_path_is_flagged(single_sfc_instance):
    sol = place(single_sfc_instance, 's0', {'d0': 'AD'}, {'d0': ['B/x0', 'D/x0']})
    assert kinds(check_feasibility(sol, single_sfc_instance)) == {ViolationKind.SERVER_OFF_PATH}


def test_reversed_vnf_order_is_flagged(single_sfc_instance):
    sol = place(single_sfc_instance, 's0', {'d0': 'AD'}, {'d0': ['D/x0', 'A/x0']})
    assert kinds(check_feasibility(sol, single_sfc_instance)) == {ViolationKind.VNF_ORDER}


def test_unused_instance_is_flagged(single_sfc_instance):
    sol = place(single_sfc_instance, 's0', {'d0': 'AD'}, {'d0': ['A/x0', 'A/x0']})
    sol.vnf_servers[('s0', 1)].add('D/x0')
    assert ViolationKind.INSTANCE_MAPPING in kinds(check_feasibility(sol, single_sfc_instance))


def two_demand_instance(k4, **vnf_options):
    return build_instance(k4, [make_chain('s0', 'A', 'D', demands=(10.0, 10.0), **vnf_options)])


def test_replicas_need_one_sync_path_per_pair(k4):
    inst = two_demand_instance(k4)
    sol = place(inst, 's0', {'d0': 'AD', 'd1': 'ABD'}, {'d0': ['A/x0'], 'd1': ['B/x0']})
    assert kinds(check_feasibility(sol, inst)) == {ViolationKind.SYNC_PATH}
    assert required_sync_pairs(inst, {'A/x0', 'B/x0'}) == {('A', 'B')}

    sol.sync_paths[('s0', 0)] = {inst.catalog.designated_sync('A', 'B')}
    assert check_feasibility(sol, inst) == []
    assert objective(sol, inst, None, ObjectiveWeights()).replications == 1


def test_sync_path_for_the_wrong_pair_is_flagged(k4):
    inst = two_demand_instance(k4)
    sol = place(inst, 's0', {'d0': 'AD', 'd1': 'ABD'}, {'d0': ['A/x0'], 'd1': ['B/x0']})
    sol.sync_paths[('s0', 0)] = {inst.catalog.designated_sync('B', 'A')}
    found = [v for v in check_feasibility(sol, inst) if v.kind == ViolationKind.SYNC_PATH]
    assert len(found) == 2


def test_non_replicable_vnf_keeps_one_instance(k4):
    inst = two_demand_instance(k4, replicable=False)
    assert max_instances(inst, 's0', 0) == 1
    sol = place(inst, 's0', {'d0': 'AD', 'd1': 'ABD'}, {'d0': ['A/x0'], 'd1': ['B/x0']})
    sol.sync_paths[('s0', 0)] = {inst.catalog.designated_sync('A', 'B')}
    assert kinds(check_feasibility(sol, inst)) == {ViolationKind.REPLICABILITY}


def test_replicas_are_bounded_by_used_paths(k4):
    inst = two_demand_instance(k4)
    assert max_instances(inst, 's0', 0) == 2
    sol = place(inst, 's0', {'d0': 'AD', 'd1': 'AD'}, {'d0': ['A/x0'], 'd1': ['D/x0']})
    sol.sync_paths[('s0', 0)] = {inst.catalog.designated_sync('A', 'D')}
    assert ViolationKind.REPLICABILITY in kinds(check_feasibility(sol, inst))


def test_overload_breaks_link_server_and_processing_limits(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', demands=(150.0,))])
    sol = place(inst, 's0', {'d0': 'AD'}, {'d0': ['A/x0']})
    assert kinds(check_feasibility(sol, inst)) == {ViolationKind.LINK_CAPACITY, ViolationKind.SERVER_CAPACITY,
                                                   ViolationKind.PROCESSING_DELAY}
    assert link_utilization(sol, inst)['A->D'] == pytest.approx(1.5)


def test_cloud_placement_avoids_ground_capacity(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', demands=(150.0,))])
    sol = place(inst, 's0', {'d0': ['A', 'cloud', 'D']}, {'d0': ['cloud/x0']})
    assert check_feasibility(sol, inst) == []
    assert objective(sol, inst, None, ObjectiveWeights()).cloud_vnfs == 1
    assert link_utilization(sol, inst)['A->cloud'] == 0.0


def test_processing_delay_formula(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', demands=(10.0,))])
    sol = place(inst, 's0', {'d0': 'AD'}, {'d0': ['A/x0']})
    gamma, util = server_load(sol, inst)
    assert gamma['A/x0'] == pytest.approx(10.0)
    assert util['A/x0'] == pytest.approx(0.1)
    expected = 0.003 * 10 / 100 + 0.002 + 0.005 * 0.1
    assert processing_delay(sol, inst, 's0', 0, 'A/x0') == pytest.approx(expected)
    with pytest.raises(MalformedSolutionError):
        processing_delay(sol, inst, 's0', 0, 'B/x0')


def test_overhead_counts_once_per_instance(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', demands=(10.0,), load_ratio=0.5, overhead=2.0)])
    sol = place(inst, 's0', {'d0': 'AD'}, {'d0': ['A/x0']})
    assert server_load(sol, inst)[0]['A/x0'] == pytest.approx(7.0)


def test_cloud_processing_has_no_queueing_term(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', demands=(10.0,))])
    sol = place(inst, 's0', {'d0': ['A', 'cloud', 'D']}, {'d0': ['cloud/x0']})
    assert processing_delay(sol, inst, 's0', 0, 'cloud/x0') == pytest.approx(0.002)


@pytest.mark.parametrize('value, expected', [(100.0, 0.010), (50.0, 0.006)])
def test_processing_delay_at_full_and_half_load(k4, value, expected):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', demands=(value,))])
    sol = place(inst, 's0', {'d0': 'AD'}, {'d0': ['A/x0']})
    assert processing_delay(sol, inst, 's0', 0, 'A/x0') == pytest.approx(expected, abs=1e-12)


def test_processing_load_with_overhead(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', demands=(100.0, 50.0), load_ratio=0.5, overhead=7.0)])
    sol = place(inst, 's0', {'d0': 'AD', 'd1': 'AD'}, {'d0': ['A/x0'], 'd1': ['A/x0']})
    assert server_load(sol, inst)[0]['A/x0'] == pytest.approx(82.0)
    assert server_load(PlacementSolution(), inst)[0]['B/x0'] == 0.0


def test_sync_traffic_shares_the_link_with_demand_traffic(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', demands=(20.0, 10.0))])
    sol = place(inst, 's0', {'d0': 'AD', 'd1': 'ABD'}, {'d0': ['A/x0'], 'd1': ['D/x0']})
    assert link_utilization(sol, inst)['A->D'] == pytest.approx(0.2)

    sol.sync_paths[('s0', 0)] = {inst.catalog.designated_sync('A', 'D')}
    assert inst.catalog.path(inst.catalog.designated_sync('A', 'D')).nodes == ('A', 'D')
    assert link_utilization(sol, inst)['A->D'] == pytest.approx((20.0 + 0.1 * 30.0) / 100.0)


def test_downtime_counts_abandoned_instances_only(single_sfc_instance):
    inst = single_sfc_instance
    prior = to_prior(place(inst, 's0', {'d0': 'AD'}, {'d0': ['D/x0', 'D/x0']}))
    moved = place(inst, 's0', {'d0': 'AD'}, {'d0': ['A/x0', 'A/x0']})
    assert migrations(moved, prior) == 2
    assert downtime(moved, prior, 's0') == pytest.approx(0.055)
    assert demand_delay(moved, inst, prior, 's0', 'd0').downtime == pytest.approx(0.055)

    replicated = place(inst, 's0', {'d0': 'AD'}, {'d0': ['D/x0', 'D/x0']})
    replicated.vnf_servers[('s0', 0)].add('A/x0')
    assert downtime(replicated, prior, 's0') == 0.0


def test_tight_service_delay_is_flagged(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', max_delay=0.001)])
    sol = place(inst, 's0', {'d0': 'AD'}, {'d0': ['A/x0']})
    found = check_feasibility(sol, inst)
    assert kinds(found) == {ViolationKind.SERVICE_DELAY}
    assert found[0].demand == 'd0'


def test_migration_adds_downtime(single_sfc_instance):
    inst = single_sfc_instance
    before = place(inst, 's0', {'d0': 'AD'}, {'d0': ['D/x0', 'D/x0']})
    after = place(inst, 's0', {'d0': 'AD'}, {'d0': ['A/x0', 'D/x0']})
    prior = to_prior(before)
    assert migrations(after, prior) == 1
    assert migrations(after, prior, 's1') == 0
    assert migrations(before, prior) == 0
    delay = demand_delay(after, inst, prior, 's0', 'd0')
    assert delay.downtime == pytest.approx(inst.downtime_s)
    assert delay.total == pytest.approx(delay.propagation + delay.processing + inst.downtime_s)
    assert objective(after, inst, prior, ObjectiveWeights(migration=3.0)).value == 3.0


def test_prior_placement_lookups(single_sfc_instance):
    sol = place(single_sfc_instance, 's0', {'d0': 'AD'}, {'d0': ['A/x0', 'D/x0']})
    prior = to_prior(sol)
    assert prior.servers_for('s0', 1) == frozenset({'D/x0'})
    assert prior.demand_server('s0', 0, 'd0') == 'A/x0'
    assert prior.demand_path('s0', 'd0') == sol.demand_path[('s0', 'd0')]
    assert PriorPlacement({('s0', 0): frozenset({'A/x0'})}).demand_path('s0', 'd0') is None


def test_single_objective_weights_keep_secondary_terms_below_one(k4):
    inst = two_demand_instance(k4)
    w = single_objective_weights('replication', inst)
    assert w.replication == 1.0
    assert w.migration == pytest.approx(0.5)
    assert w.cloud == pytest.approx(1 / 6)
    with pytest.raises(ValueError):
        single_objective_weights('latency', inst)


def test_evaluate_reports_means_without_cloud_links(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', demands=(20.0,))])
    sol = place(inst, 's0', {'d0': 'AD'}, {'d0': ['A/x0']})
    report = evaluate(sol, inst, None, ObjectiveWeights())
    assert report.violations == []
    assert report.mean_link_util == pytest.approx(0.2 / 12)
    assert report.mean_server_util == pytest.approx(0.2)
    assert report.mean_delay_ms > 0
    doc = report.to_dict()
    assert doc['link_util']['A->cloud'] is None
    assert set(report.to_row()) == {'migrations', 'replications', 'cloud_vnfs', 'objective', 'mean_link_util',
                                    'mean_server_util', 'mean_delay_ms'}


def test_solution_document_round_trip(k4):
    inst = two_demand_instance(k4)
    sol = place(inst, 's0', {'d0': 'AD', 'd1': 'ABD'}, {'d0': ['A/x0'], 'd1': ['B/x0']})
    sol.sync_paths[('s0', 0)] = {inst.catalog.designated_sync('A', 'B')}
    restored = solution_from_dict(solution_to_dict(sol))
    assert restored == sol
    with pytest.raises(MalformedSolutionError):
        solution_from_dict({'demand_path': []})


def test_unknown_ids_raise(single_sfc_instance):
    sol = place(single_sfc_instance, 's0', {'d0': 'AD'}, {'d0': ['A/x0', 'A/x0']})
    sol.vnf_servers[('s0', 0)].add('Z/x9')
    with pytest.raises(MalformedSolutionError, match='Unknown server'):
        check_feasibility(sol, single_sfc_instance)
    with pytest.raises(MalformedSolutionError, match='Unknown SFC'):
        check_feasibility(PlacementSolution(demand_path={('s9', 'd0'): 'p0'}), single_sfc_instance)


def test_demand_snapshot_replaces_values(single_sfc_instance):
    inst = single_sfc_instance.with_demand_values({('s0', 'd0'): 42.0, ('s0', 'other'): 1.0})
    assert inst.sfc('s0').demand('d0').value == 42.0
    assert inst.sfc('s0').path_ids == single_sfc_instance.sfc('s0').path_ids
    assert single_sfc_instance.sfc('s0').demand('d0').value == 10.0


def test_sync_volume_depends_on_traffic_mode(k4):
    sfc = make_chain('s0', 'A', 'D', demands=(10.0, 30.0), sync_ratio=0.5)
    assert build_instance(k4, [sfc]).sync_traffic('s0', 0) == pytest.approx(20.0)
    cardinality = build_instance(k4, [sfc], sync_mode=SyncTrafficMode.CARDINALITY)
    assert cardinality.sync_traffic('s0', 0) == pytest.approx(1.0)


@pytest.mark.parametrize('factory', [
    lambda: VnfSpec(load_ratio=0.0),
    lambda: VnfSpec(overhead=-1.0),
    lambda: VnfSpec(d_pro_max=0.001),
    lambda: Demand('d0', 0.0),
    lambda: ServiceChain('s0', 'A', 'B', (), ()),
    lambda: ServiceChain('s0', 'A', 'B', tuple(VnfSpec() for _ in range(11)), ()),
    lambda: ServiceChain('s0', 'A', 'B', (VnfSpec(),), (Demand('d', 1.0), Demand('d', 2.0))),
])
def test_invalid_model_values(factory):
    with pytest.raises(ValueError):
        factory()
