import pulp
import pytest

from services.lp_export_service import build_lp_problem, export_lp, lp_census, solve_lp
from services.placement_model import ObjectiveWeights, PriorPlacement, build_instance
from services.solver_service import SolveRequest, solve
from conftest import make_chain


@pytest.fixture
def one_demand(k4):
    return build_instance(k4, [make_chain('s0', 'A', 'D')])


def cbc_available():
    return pulp.PULP_CBC_CMD(msg=False).available()


def test_census_of_a_single_demand(one_demand):
    census = lp_census(build_lp_problem(one_demand))
    assert census == {
        'vars_d': 1, 'vars_f': 5, 'vars_fl': 5, 'vars_r': 1, 'vars_z': 8,
        'variables': 20, 'constraints': 46,
    }


def test_prior_adds_migration_indicators(one_demand):
    prior = PriorPlacement({('s0', 0): frozenset({'A/x0'})})
    census = lp_census(build_lp_problem(one_demand, prior))
    assert census['vars_m'] == 1
    assert census['constraints'] == 47


def test_replicable_vnfs_get_sync_variables(k4):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', demands=(10.0, 20.0))])
    census = lp_census(build_lp_problem(inst))
    assert census['vars_o'] == 5
    assert census['vars_g'] > 0 and census['vars_h'] > 0

    fixed = build_instance(k4, [make_chain('s0', 'A', 'D', demands=(10.0, 20.0), replicable=False)])
    assert 'vars_h' not in lp_census(build_lp_problem(fixed))


def test_chain_order_constraints_appear_for_longer_chains(single_sfc_instance):
    prob = build_lp_problem(single_sfc_instance)
    assert any(name.startswith('order_0_0_') for name in prob.constraints)


def test_export_writes_cplex_lp_text(one_demand, tmp_path):
    target = tmp_path / 'out' / 'model.lp'
    text = export_lp(one_demand, path=target)
    assert target.read_text(encoding='utf-8') == text
    for token in ('Minimize', 'Subject To', 'End', 'f_0_0_0', 'service_delay_0_0'):
        assert token in text


def test_export_is_deterministic(single_sfc_instance):
    weights = ObjectiveWeights(migration=2.0)
    assert export_lp(single_sfc_instance, weights=weights) == export_lp(single_sfc_instance, weights=weights)


@pytest.mark.slow
@pytest.mark.skipif(not cbc_available(), reason='CBC solver not available')
@pytest.mark.parametrize('demands, expected', [((10.0,), 0.0), ((150.0,), 1.0), ((60.0, 60.0), 1.0)])
def test_cbc_agrees_with_exact_search(k4, demands, expected):
    inst = build_instance(k4, [make_chain('s0', 'A', 'D', demands=demands)])
    status, value = solve_lp(build_lp_problem(inst), time_limit=60)
    assert status == 'Optimal'
    assert value == pytest.approx(expected, abs=1e-6)
    assert solve('exact', SolveRequest(inst)).metrics.objective == pytest.approx(value, abs=1e-6)
