import json
from pathlib import Path

import pytest

from services.placement_model import Demand, ServiceChain, VnfSpec, build_instance
from services.topology_service import build_topology

FIXTURES = Path(__file__).parent / 'fixtures'


def load_spec(name: str) -> dict:
    return json.loads((FIXTURES / f"{name}.json").read_text(encoding='utf-8'))


def make_chain(sfc_id, src, dst, n_vnfs=1, demands=(10.0,), max_delay=0.4, **vnf_options):
    vnfs = tuple(VnfSpec(type=f"vnf{k}", **vnf_options) for k in range(n_vnfs))
    return ServiceChain(sfc_id, src, dst, vnfs, tuple(Demand(f"d{j}", v) for j, v in enumerate(demands)),
                        max_delay=max_delay)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def k4_spec():
    return load_spec('k4')


@pytest.fixture
def k4(k4_spec):
    return build_topology(k4_spec)


@pytest.fixture
def triangle_spec():
    return load_spec('triangle')


@pytest.fixture
def line2_spec():
    return load_spec('line2')


@pytest.fixture
def line2(line2_spec):
    return build_topology(line2_spec)


@pytest.fixture
def chain():
    return make_chain


@pytest.fixture
def single_sfc_instance(k4):
    """One SFC A->D with two VNFs and one demand of 10 on the K4 fixture."""
    return build_instance(k4, [make_chain('s0', 'A', 'D', n_vnfs=2)])
