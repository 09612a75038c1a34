import json

import pytest

from services.heuristic_solvers import choose_path, choose_server, first_fit_chain, greedy_order
from services.placement_model import (ObjectiveWeights, PlacementSolution, build_instance, check_feasibility,
                                      solution_to_dict, to_prior)
from services.placement_state import PlacementState
from services.solver_service import (Phase, SolveRequest, SolveRequestError, SolveStatus, SolverService, solve)
from conftest import make_chain


def first_path(inst, sfc_id='s0'):
    return inst.sfc(sfc_id).path_ids[0]


@pytest.mark.parametrize('name', ['ff', 'greedy'])
def test_single_chain_goes_on_the_direct_path(single_sfc_instance, name):
    result = solve(name, SolveRequest(single_sfc_instance))
    assert result.status == SolveStatus.HEURISTIC
    assert result.solution.demand_path[('s0', 'd0')] == first_path(single_sfc_instance)
    assert result.solution.vnf_servers == {('s0', 0): {'A/x0'}, ('s0', 1): {'A/x0'}}
    assert result.metrics.objective == 0.0
    assert result.solver == name


@pytest.mark.parametrize('name', ['ff', 'rf', 'greedy'])
def test_oversized_demand_falls_back_to_the_cloud(k4, name):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', demands=(150.0,))])
    result = solve(name, SolveRequest(inst, rng_seed=3))
    assert result.status == SolveStatus.HEURISTIC
    assert result.solution.vnf_servers[('s0', 0)] == {'cloud/x0'}
    assert result.metrics.cloud_vnfs == 1


def test_random_fit_is_reproducible(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', n_vnfs=3, demands=(10.0, 20.0)),
                               make_chain('s1', 'B', 'C', n_vnfs=2, demands=(5.0,))])
    a = solve('rf', SolveRequest(inst, rng_seed=11))
    b = solve('rf', SolveRequest(inst, rng_seed=11))
    assert a.solution == b.solution
    assert a.status == SolveStatus.HEURISTIC
    assert check_feasibility(a.solution, inst) == []


def test_random_fit_depends_on_the_seed(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', n_vnfs=3, demands=(10.0, 20.0)),
                               make_chain('s1', 'B', 'C', n_vnfs=2, demands=(5.0,))])
    results = [solve('rf', SolveRequest(inst, rng_seed=seed)) for seed in range(10)]
    layouts = {json.dumps(solution_to_dict(r.solution), sort_keys=True) for r in results}
    assert len(layouts) > 1


def test_heuristic_results_are_checked(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', max_delay=0.001)])
    result = solve('ff', SolveRequest(inst))
    assert result.status == SolveStatus.INFEASIBLE
    assert result.metrics.violations


@pytest.mark.parametrize('name', ['ff', 'greedy'])
def test_unplaceable_demand_is_reported(k4, name):
    # the single instance sits at the source node, which cannot take the second demand
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', demands=(80.0, 80.0), replicable=False)])
    result = solve(name, SolveRequest(inst))
    assert result.status == SolveStatus.INFEASIBLE
    assert result.stats.failed_demands == [('s0', 'd1')]
    assert result.stats.placement_attempts > 0


def test_greedy_reuses_the_prior_placement(single_sfc_instance):
    inst = single_sfc_instance
    before = PlacementSolution()
    p = first_path(inst)
    before.demand_path[('s0', 'd0')] = p
    for v in range(2):
        before.vnf_servers[('s0', v)] = {'D/x0'}
        before.demand_vnf_server[('s0', v, 'd0')] = 'D/x0'
    result = solve('greedy', SolveRequest(inst, to_prior(before), phase=Phase.SECOND))
    assert result.solution.vnf_servers == before.vnf_servers
    assert result.metrics.migrations == 0


def test_greedy_shares_instances_across_demands(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', n_vnfs=2, demands=(10.0, 20.0, 5.0))])
    result = solve('greedy', SolveRequest(inst))
    assert result.status == SolveStatus.HEURISTIC
    assert result.metrics.replications == 0
    assert len(set(result.solution.demand_path.values())) == 1


def test_greedy_order_sorts_by_total_demand(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', demands=(50.0,)),
                               make_chain('s1', 'B', 'C', demands=(5.0, 6.0)),
                               make_chain('s2', 'C', 'B', demands=(11.0,))])
    assert [s.id for s in greedy_order(inst)] == ['s1', 's2', 's0']


def test_choose_path_prefers_previous_then_used_then_fastest(single_sfc_instance):
    inst = single_sfc_instance
    paths = list(inst.sfc('s0').path_ids)
    empty = PlacementSolution()
    assert choose_path(inst, 's0', 'd0', paths, empty, None) == paths[0]

    used = PlacementSolution(demand_path={('s0', 'd9'): paths[2]})
    assert choose_path(inst, 's0', 'd0', paths, used, None) == paths[2]

    prior = to_prior(PlacementSolution(demand_path={('s0', 'd0'): paths[3]}))
    assert choose_path(inst, 's0', 'd0', paths, used, prior) == paths[3]


def pick(inst, path_id, servers, last_attempt, sol=None, prior=None, **bounds):
    return choose_server(inst, sol or PlacementSolution(), prior, 's0', 'd0', path_id, 0, servers, last_attempt,
                         **bounds)


def test_choose_server_takes_fresh_servers_only_on_the_last_attempt(single_sfc_instance):
    direct = first_path(single_sfc_instance)
    assert pick(single_sfc_instance, direct, ['A/x0', 'D/x0'], last_attempt=False) is None
    assert pick(single_sfc_instance, direct, ['A/x0', 'D/x0'], last_attempt=True) == 'A/x0'
    assert pick(single_sfc_instance, direct, [], last_attempt=True) is None


def test_choose_server_prefers_the_previous_server(single_sfc_instance):
    inst = single_sfc_instance
    direct = first_path(inst)
    current = PlacementSolution(vnf_servers={('s0', 0): {'A/x0'}})
    assert pick(inst, direct, ['A/x0', 'D/x0'], False, sol=current) == 'A/x0'

    prior = to_prior(PlacementSolution(demand_path={('s0', 'd0'): direct}, vnf_servers={('s0', 0): {'D/x0'}},
                                       demand_vnf_server={('s0', 0, 'd0'): 'D/x0'}))
    assert pick(inst, direct, ['A/x0', 'D/x0'], False, sol=current, prior=prior) == 'D/x0'
    # a previous server that is no longer available is skipped
    assert pick(inst, direct, ['A/x0'], False, sol=current, prior=prior) == 'A/x0'


def test_choose_server_stays_between_neighbouring_vnfs(single_sfc_instance):
    inst = single_sfc_instance
    direct = first_path(inst)
    assert pick(inst, direct, ['A/x0', 'D/x0'], True, prev_server='D/x0') == 'D/x0'
    assert pick(inst, direct, ['A/x0', 'D/x0'], True, next_server='A/x0') == 'A/x0'
    assert pick(inst, direct, ['A/x0'], True, prev_server='D/x0') is None


def test_choose_server_swaps_late_reuse_for_the_cloud_on_the_last_attempt(single_sfc_instance):
    inst = single_sfc_instance
    via_cloud = inst.sfc('s0').path_ids[-1]
    servers = ['A/x0', 'cloud/x0', 'D/x0']
    current = PlacementSolution(vnf_servers={('s0', 0): {'D/x0'}})
    assert pick(inst, via_cloud, servers, False, sol=current) == 'D/x0'
    assert pick(inst, via_cloud, servers, True, sol=current) == 'cloud/x0'

    before_cloud = PlacementSolution(vnf_servers={('s0', 0): {'A/x0'}})
    assert pick(inst, via_cloud, servers, True, sol=before_cloud) == 'A/x0'
    assert pick(inst, first_path(inst), ['A/x0', 'D/x0'], True, sol=current) == 'D/x0'


def test_first_fit_chain_respects_capacity(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', n_vnfs=2, demands=(60.0,))])
    state = PlacementState(inst)
    route = first_fit_chain(state, 's0', 60.0, first_path(inst))
    assert route == ['A/x0', 'D/x0']


def test_first_phase_request_rejects_a_prior(single_sfc_instance):
    prior = to_prior(PlacementSolution())
    with pytest.raises(SolveRequestError):
        SolveRequest(single_sfc_instance, prior, phase=Phase.FIRST)


def test_unknown_solver_name(single_sfc_instance):
    with pytest.raises(SolveRequestError, match='Unknown solver'):
        solve('simplex', SolveRequest(single_sfc_instance))
    ok, result, error = SolverService().run('simplex', SolveRequest(single_sfc_instance))
    assert not ok and result is None and 'Unknown solver' in error


def test_result_document(single_sfc_instance):
    doc = solve('ff', SolveRequest(single_sfc_instance, weights=ObjectiveWeights(cloud=2.0))).to_dict()
    assert doc['status'] == 'heuristic'
    assert doc['solver'] == 'ff'
    assert set(doc) == {'solver', 'status', 'solution', 'metrics', 'stats'}
    assert doc['stats']['failed_demands'] == []
