"""
Full placement MILP as a PuLP model, exported in CPLEX-LP text.

Variable names use positional indices: ``s`` SFC, ``l`` demand within the
SFC, ``v`` VNF, ``x``/``y`` global server index, ``p`` catalog path index.
Delays are expressed in milliseconds.
"""
import logging
import math
import os
import tempfile
from collections import Counter, defaultdict
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import pulp

from config.settings import Settings
from services.placement_model import Instance, ObjectiveWeights, PriorPlacement, max_instances

logger = logging.getLogger(__name__)

MS = 1000.0


def _binary(name: str) -> pulp.LpVariable:
    return pulp.LpVariable(name, lowBound=0, upBound=1, cat=pulp.LpBinary)


def _queue_coefficient(vnf, capacity: float) -> float:
    """Milliseconds of queueing delay per unit of traffic processed."""
    cq = vnf.proc_capacity if vnf.proc_capacity is not None else capacity
    return 0.0 if math.isinf(cq) else MS * vnf.d_proq * vnf.load_ratio / cq


def build_lp_problem(inst: Instance, prior: Optional[PriorPlacement] = None,
                     weights: ObjectiveWeights = ObjectiveWeights()) -> pulp.LpProblem:
    """
    Build the placement MILP: routing, mapping, replicability, ordering,
    synchronization, capacity and delay constraints with the weighted
    migrations/replications/cloud objective.
    """
    topo, catalog = inst.topology, inst.catalog
    prob = pulp.LpProblem("vnf_placement", pulp.LpMinimize)
    path_index = {p.id: i for i, p in enumerate(catalog.paths)}
    server_index = {x.id: i for i, x in enumerate(topo.servers)}

    z_sfc: Dict[Tuple[int, str], pulp.LpVariable] = {}
    z: Dict[Tuple[int, int, str], pulp.LpVariable] = {}
    f: Dict[Tuple[int, int, str], pulp.LpVariable] = {}
    fl: Dict[Tuple[int, int, str, int], pulp.LpVariable] = {}
    h: Dict[Tuple[int, int, str], pulp.LpVariable] = {}
    migrate: Dict[int, List[pulp.LpVariable]] = defaultdict(list)
    replicas: List[pulp.LpVariable] = []
    link_terms: Dict[str, list] = defaultdict(list)
    server_terms: Dict[str, list] = defaultdict(list)

    for i, sfc in enumerate(inst.sfcs):
        servers = inst.candidate_servers(sfc.id)
        for p in sfc.path_ids:
            z_sfc[(i, p)] = _binary(f"z_{i}_{path_index[p]}")
        for l, dem in enumerate(sfc.demands):
            for p in sfc.path_ids:
                z[(i, l, p)] = _binary(f"z_{i}_{path_index[p]}_{l}")
                for link in catalog.path(p).links:
                    link_terms[link].append(dem.value * z[(i, l, p)])
            prob += pulp.lpSum(z[(i, l, p)] for p in sfc.path_ids) == 1, f"one_path_{i}_{l}"
        for p in sfc.path_ids:
            for l in range(len(sfc.demands)):
                prob += z_sfc[(i, p)] >= z[(i, l, p)], f"path_used_{i}_{path_index[p]}_{l}"
            prob += z_sfc[(i, p)] <= pulp.lpSum(z[(i, l, p)] for l in range(len(sfc.demands))), \
                f"path_unused_{i}_{path_index[p]}"

        for v, vnf in enumerate(sfc.vnfs):
            for x in servers:
                f[(i, v, x)] = _binary(f"f_{i}_{v}_{server_index[x]}")
                for l in range(len(sfc.demands)):
                    fl[(i, v, x, l)] = _binary(f"fl_{i}_{v}_{server_index[x]}_{l}")
            for l, dem in enumerate(sfc.demands):
                prob += pulp.lpSum(fl[(i, v, x, l)] for x in servers) == 1, f"one_server_{i}_{v}_{l}"
                for x in servers:
                    prob += fl[(i, v, x, l)] <= f[(i, v, x)], f"map_up_{i}_{v}_{server_index[x]}_{l}"
                    on_path = [z[(i, l, p)] for p in sfc.path_ids if x in catalog.path(p).servers]
                    prob += fl[(i, v, x, l)] <= pulp.lpSum(on_path), f"on_path_{i}_{v}_{server_index[x]}_{l}"
            for x in servers:
                prob += f[(i, v, x)] <= pulp.lpSum(fl[(i, v, x, l)] for l in range(len(sfc.demands))), \
                    f"map_down_{i}_{v}_{server_index[x]}"
                if vnf.overhead:
                    server_terms[x].append(vnf.overhead * f[(i, v, x)])
                for l, dem in enumerate(sfc.demands):
                    server_terms[x].append(vnf.load_ratio * dem.value * fl[(i, v, x, l)])

            r = pulp.LpVariable(f"r_{i}_{v}", lowBound=0)
            replicas.append(r)
            prob += pulp.lpSum(f[(i, v, x)] for x in servers) - r == 1, f"replicas_{i}_{v}"
            limit = pulp.lpSum(z_sfc[(i, p)] for p in sfc.path_ids) if vnf.replicable else 1
            prob += pulp.lpSum(f[(i, v, x)] for x in servers) <= limit, f"replicability_{i}_{v}"

            if prior is not None:
                for x in sorted(prior.servers_for(sfc.id, v), key=topo.server_index):
                    m = _binary(f"m_{i}_{v}_{server_index[x]}")
                    migrate[i].append(m)
                    if (i, v, x) in f:
                        prob += m + f[(i, v, x)] == 1, f"migration_{i}_{v}_{server_index[x]}"
                    else:
                        prob += m == 1, f"migration_{i}_{v}_{server_index[x]}"

            if max_instances(inst, sfc.id, v) > 1:
                _add_sync(prob, inst, i, sfc, v, servers, f, h, server_index, path_index, link_terms)

        for l in range(len(sfc.demands)):
            for p in sfc.path_ids:
                path = catalog.path(p)
                for v in range(1, len(sfc.vnfs)):
                    for x in path.servers:
                        for y in path.servers:
                            if path.node_position(inst.server_node(y)) < path.node_position(inst.server_node(x)):
                                prob += fl[(i, v - 1, x, l)] + fl[(i, v, y, l)] + z[(i, l, p)] <= 2, \
                                    f"order_{i}_{l}_{path_index[p]}_{v}_{server_index[x]}_{server_index[y]}"

    for link in topo.links:
        if math.isfinite(link.capacity) and link_terms.get(link.id):
            prob += pulp.lpSum(link_terms[link.id]) <= link.capacity, f"link_capacity_{link.id}"
    for x in topo.servers:
        if math.isfinite(x.capacity) and server_terms.get(x.id):
            prob += pulp.lpSum(server_terms[x.id]) <= x.capacity, f"server_capacity_{server_index[x.id]}"

    _add_delay(prob, inst, f, fl, z, migrate, server_terms, server_index)

    cloud = [f[k] for k in sorted(f, key=lambda k: (k[0], k[1], server_index[k[2]]))
             if topo.server(k[2]).is_cloud]
    migrations = [m for i in sorted(migrate) for m in migrate[i]]
    prob += (weights.migration * pulp.lpSum(migrations) + weights.replication * pulp.lpSum(replicas)
             + weights.cloud * pulp.lpSum(cloud)), "objective"
    logger.info(f"Built MILP with {len(prob.variables())} variables and {len(prob.constraints)} constraints")
    return prob


def _add_sync(prob, inst: Instance, i: int, sfc, v: int, servers: List[str], f, h, server_index, path_index,
              link_terms) -> None:
    """Original-instance indicators, original/replica pair products and one sync path per node pair."""
    o = {x: _binary(f"o_{i}_{v}_{server_index[x]}") for x in servers}
    for k, x in enumerate(servers):
        earlier = servers[:k]
        tag = f"{i}_{v}_{server_index[x]}"
        prob += o[x] <= f[(i, v, x)], f"orig_on_{tag}"
        for e in earlier:
            prob += o[x] + f[(i, v, e)] <= 1, f"orig_first_{tag}_{server_index[e]}"
        prob += o[x] >= f[(i, v, x)] - pulp.lpSum(f[(i, v, e)] for e in earlier), f"orig_some_{tag}"
    prob += pulp.lpSum(o.values()) == 1, f"orig_one_{i}_{v}"

    by_node: Dict[str, List[str]] = defaultdict(list)
    for x in servers:
        by_node[inst.server_node(x)].append(x)
    volume = inst.sync_traffic(sfc.id, v)
    for n in sorted(by_node):
        for m in sorted(by_node):
            if n == m:
                continue
            g = []
            for x in by_node[n]:
                for y in by_node[m]:
                    gv = _binary(f"g_{i}_{v}_{server_index[x]}_{server_index[y]}")
                    tag = f"{i}_{v}_{server_index[x]}_{server_index[y]}"
                    prob += gv <= o[x], f"g_orig_{tag}"
                    prob += gv <= f[(i, v, y)], f"g_replica_{tag}"
                    prob += gv >= o[x] + f[(i, v, y)] - 1, f"g_both_{tag}"
                    g.append(gv)
            candidates = inst.catalog.sync_candidates(n, m)
            hs = []
            for p in candidates:
                hv = _binary(f"h_{i}_{v}_{path_index[p]}")
                h[(i, v, p)] = hv
                hs.append(hv)
                for link in inst.catalog.path(p).links:
                    link_terms[link].append(volume * hv)
            pair = f"{i}_{v}_{n}_{m}"
            for gv in g:
                prob += pulp.lpSum(hs) >= gv, f"sync_needed_{pair}_{gv.name}"
            prob += pulp.lpSum(hs) <= pulp.lpSum(g), f"sync_only_{pair}"
            prob += pulp.lpSum(hs) <= 1, f"sync_one_{pair}"


def _add_delay(prob, inst: Instance, f, fl, z, migrate, server_terms, server_index) -> None:
    """Per-VNF processing delay bounds with big-M on the demand mapping, then the service delay."""
    topo = inst.topology
    for i, sfc in enumerate(inst.sfcs):
        servers = inst.candidate_servers(sfc.id)
        downtime = migrate.get(i, [])
        d = {(l, v): pulp.LpVariable(f"d_{i}_{l}_{v}", lowBound=0)
             for l in range(len(sfc.demands)) for v in range(len(sfc.vnfs))}
        for v, vnf in enumerate(sfc.vnfs):
            d_max = MS * vnf.d_pro_max
            for x in servers:
                capacity = topo.server(x).capacity
                queue = _queue_coefficient(vnf, capacity)
                util = 0.0 if math.isinf(capacity) else MS * vnf.d_prox / capacity
                expr = pulp.LpAffineExpression(constant=MS * vnf.d_pro_x_min)
                if queue:
                    expr += pulp.lpSum(queue * dem.value * fl[(i, v, x, l)] for l, dem in enumerate(sfc.demands))
                if util:
                    expr += util * pulp.lpSum(server_terms[x])
                worst = queue * sfc.total_demand + MS * (vnf.d_pro_x_min + (vnf.d_prox if util else 0.0))
                slack = max(worst - d_max, 0.0)
                tag = f"{i}_{v}_{server_index[x]}"
                if queue or util:
                    bound = d_max + slack * (1 - f[(i, v, x)]) if slack else d_max
                    prob += expr <= bound, f"proc_max_{tag}"
                big_m = max(d_max, worst)
                for l in range(len(sfc.demands)):
                    prob += d[(l, v)] >= expr - big_m * (1 - fl[(i, v, x, l)]), f"proc_delay_{tag}_{l}"
        for l in range(len(sfc.demands)):
            propagation = pulp.lpSum(MS * inst.catalog.path(p).delay_s * z[(i, l, p)] for p in sfc.path_ids)
            processing = pulp.lpSum(d[(l, v)] for v in range(len(sfc.vnfs)))
            prob += propagation + processing + MS * inst.downtime_s * pulp.lpSum(downtime) <= \
                MS * sfc.max_delay, f"service_delay_{i}_{l}"


def export_lp(inst: Instance, prior: Optional[PriorPlacement] = None,
              weights: ObjectiveWeights = ObjectiveWeights(),
              path: Optional[Union[str, Path]] = None) -> str:
    """
    Write the MILP in CPLEX-LP format and return its text.

    Args:
        path: Optional destination file; the text is returned either way
    """
    prob = build_lp_problem(inst, prior, weights)
    handle, tmp = tempfile.mkstemp(suffix='.lp')
    os.close(handle)
    try:
        prob.writeLP(tmp)
        text = Path(tmp).read_text(encoding='utf-8')
    finally:
        os.unlink(tmp)
    if path is not None:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding='utf-8')
        logger.info(f"Wrote LP model to {target}")
    return text


def lp_census(prob: pulp.LpProblem) -> Dict[str, int]:
    """Variable counts per name prefix plus the constraint count."""
    counts = Counter(var.name.split('_')[0] for var in prob.variables())
    census = {f"vars_{prefix}": n for prefix, n in sorted(counts.items())}
    census['variables'] = len(prob.variables())
    census['constraints'] = len(prob.constraints)
    return census


def solve_lp(prob: pulp.LpProblem, msg: Optional[bool] = None,
             time_limit: Optional[int] = None) -> Tuple[str, Optional[float]]:
    """Solve with PuLP's bundled CBC; returns (status, objective value or None)."""
    solver = pulp.PULP_CBC_CMD(msg=Settings.LP_SOLVER_MSG if msg is None else msg, timeLimit=time_limit)
    prob.solve(solver)
    status = pulp.LpStatus[prob.status]
    return status, (pulp.value(prob.objective) if status == 'Optimal' else None)
