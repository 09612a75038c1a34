"""
Two-phase placement experiments and the parameter sweeps built on them.

A row places every SFC at ``t0`` under a scenario's demand view (phase 1),
turns that placement into the prior, and places again at ``t0 + delta_t``
with the observed demands (phase 2). Phase-2 metrics fill the row.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from services.forecast_service import ForecastConfig, LstmModel, predict_horizon, train_flow_models
from services.placement_model import (DemandKey, Instance, ObjectiveWeights, PriorPlacement, ServiceChain,
                                      Demand, VnfSpec, build_instance, single_objective_weights, to_prior)
from services.solver_service import (ExactLimits, Phase, SOLVER_NAMES, SolveRequest, SolveResult, SolveStatus,
                                     solve)
from services.topology_service import PathCatalog, Topology, build_topology, precompute_paths
from services.traffic_service import DemandSet, generate_demand_set
from utils.report_writer import write_csv, write_json
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

SCENARIOS = ('obsv', 'over', 'pred')
AXES = ('sfc_length', 'server_capacity')
WEIGHT_MODES = ('joint', 'migration', 'replication', 'cloud')
REPORT_COLUMNS = ['axis', 'scenario', 'seed', 'solver', 'migrations', 'replications', 'cloud_vnfs', 'objective',
                  'mean_link_util', 'mean_server_util', 'mean_delay_ms', 'status']
METRIC_COLUMNS = REPORT_COLUMNS[4:11]
DEMAND_FLOOR = 1e-3
PROCESSING_RATIO_RANGE = (0.01, 1.0)
OVERHEAD_SHARE_RANGE = (0.01, 0.10)
SYNC_SHARE = 0.1


class ScenarioError(ValueError):
    """Raised for invalid scenario settings or a pred scenario without models."""


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str = 'obsv'
    over_fraction: float = 0.8
    # t0 is drawn from the first ``t0_window`` samples of the last period
    t0_window: int = 18
    delta_t: int = 6

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise ScenarioError(f"Unknown scenario {self.kind}; expected one of {', '.join(SCENARIOS)}")
        if not 0 < self.over_fraction <= 1:
            raise ScenarioError(f"over_fraction must lie in (0, 1], got {self.over_fraction}")
        if self.delta_t < 1 or self.t0_window < 1:
            raise ScenarioError("delta_t and t0_window must be at least 1")

    def draw_t0(self, demand_set: DemandSet, seed: int) -> int:
        """Uniform over the first ``t0_window`` samples of the final period."""
        P = demand_set.samples_per_period
        if self.t0_window + self.delta_t > P:
            raise ScenarioError(f"t0 window {self.t0_window} plus delta_t {self.delta_t} exceeds the period {P}")
        rng = np.random.default_rng(derive_seed(seed, 't0'))
        return (demand_set.periods - 1) * P + int(rng.integers(self.t0_window))


@dataclass
class SweepConfig:
    axis: str = 'sfc_length'
    values: List[float] = field(default_factory=lambda: list(range(1, 11)))
    seeds: List[int] = field(default_factory=lambda: [1])
    solver: str = 'greedy'
    weights: str = 'joint'
    topology: Dict[str, Any] = field(default_factory=dict)
    # None keeps the capacities of the topology spec
    fixed_capacity: Optional[float] = None
    periods: int = 60
    flows_per_pair: Tuple[int, int] = (1, 3)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    path_options: Dict[str, int] = field(default_factory=dict)
    exact_limits: ExactLimits = field(default_factory=ExactLimits)

    def validate(self) -> None:
        if self.axis not in AXES:
            raise ScenarioError(f"Unknown sweep axis {self.axis}; expected one of {', '.join(AXES)}")
        if not self.values or not self.seeds:
            raise ScenarioError("A sweep needs at least one axis value and one seed")
        if len(set(self.values)) != len(self.values) or len(set(self.seeds)) != len(self.seeds):
            raise ScenarioError("Sweep axis values and seeds must be unique")
        if self.solver not in SOLVER_NAMES:
            raise ScenarioError(f"Unknown solver {self.solver}")
        if self.weights not in WEIGHT_MODES:
            raise ScenarioError(f"Unknown weights mode {self.weights}; expected one of {', '.join(WEIGHT_MODES)}")
        if self.axis == 'sfc_length' and any(not 1 <= int(v) <= 10 for v in self.values):
            raise ScenarioError("SFC lengths must lie between 1 and 10")
        if self.axis == 'server_capacity' and any(v <= 0 for v in self.values):
            raise ScenarioError("Server capacities must be positive")
        if not self.topology:
            raise ScenarioError("A sweep needs a topology spec")

    def describe(self) -> Dict[str, Any]:
        doc = {
            'axis': self.axis, 'values': list(self.values), 'seeds': list(self.seeds), 'solver': self.solver,
            'weights': self.weights, 'topology': self.topology.get('name', 'unnamed'),
            'fixed_capacity': self.fixed_capacity, 'periods': self.periods,
            'flows_per_pair': list(self.flows_per_pair), 'scenario': asdict(self.scenario),
            'forecast': self.forecast.to_dict(), 'path_options': dict(self.path_options),
            'exact_limits': asdict(self.exact_limits),
        }
        return doc


@dataclass
class TwoPhaseResult:
    t0: int
    phase1: SolveResult
    phase2: Optional[SolveResult] = None
    phase1_values: Dict[DemandKey, float] = field(default_factory=dict)
    phase2_values: Dict[DemandKey, float] = field(default_factory=dict)

    @property
    def status(self) -> str:
        if self.phase2 is None:
            return 'phase1_infeasible'
        return self.phase2.status.value


def scenario_demand_view(demand_set: DemandSet, scenario: ScenarioConfig, t0: int,
                         models: Optional[Mapping[str, LstmModel]] = None) -> Dict[DemandKey, float]:
    """
    Phase-1 demand per (sfc, flow): the value at ``t0`` (obsv), a fixed share
    of the flow's historical maximum (over), or the forecast of the value
    ``delta_t`` samples after ``t0`` (pred).

    Raises:
        ScenarioError: For pred without a model for every flow
    """
    if not 0 <= t0 < demand_set.length:
        raise ScenarioError(f"t0 {t0} lies outside the series of length {demand_set.length}")
    view = {}
    for sfc, flow in demand_set.flows():
        if scenario.kind == 'obsv':
            value = flow.value_at(t0)
        elif scenario.kind == 'over':
            value = scenario.over_fraction * flow.history_max()
        else:
            if not models or flow.flow_id not in models:
                raise ScenarioError(f"No forecast model for flow {flow.flow_id}")
            value = predict_horizon(models[flow.flow_id], flow.values[:t0 + 1], scenario.delta_t)
        view[(sfc.id, flow.flow_id)] = max(float(value), DEMAND_FLOOR)
    return view


def observed_values(demand_set: DemandSet, t: int) -> Dict[DemandKey, float]:
    return {(sfc.id, flow.flow_id): max(flow.value_at(t), DEMAND_FLOOR) for sfc, flow in demand_set.flows()}


def build_experiment_instance(topology: Topology, demand_set: DemandSet, chain_length: Optional[int], seed: int,
                              catalog: Optional[PathCatalog] = None, **path_options) -> Instance:
    """
    One SFC per demand group. VNF processing ratios are uniform in [0.01, 1],
    instance overheads 1-10% of the VNF's load at base traffic and sync ratios
    a tenth of the processing ratio. ``chain_length`` None draws lengths in 1..10.
    """
    sfcs = []
    for group in demand_set.sfcs:
        rng = np.random.default_rng(derive_seed(seed, 'chain', group.id))
        length = int(chain_length) if chain_length is not None else int(rng.integers(1, 11))
        base = sum(f.base_value for f in group.flows)
        vnfs = []
        for k in range(length):
            ratio = float(rng.uniform(*PROCESSING_RATIO_RANGE))
            share = float(rng.uniform(*OVERHEAD_SHARE_RANGE))
            vnfs.append(VnfSpec(type=f"vnf{k}", load_ratio=ratio, sync_ratio=SYNC_SHARE * ratio,
                                overhead=share * ratio * base))
        demands = tuple(Demand(f.flow_id, max(f.base_value, DEMAND_FLOOR)) for f in group.flows)
        sfcs.append(ServiceChain(group.id, group.src, group.dst, tuple(vnfs), demands))
    return build_instance(topology, sfcs, catalog, **path_options)


def _weights(mode: str, inst: Instance, prior: Optional[PriorPlacement]) -> ObjectiveWeights:
    if mode == 'joint':
        return ObjectiveWeights()
    return single_objective_weights(mode, inst, prior)


def run_two_phase(instance: Instance, demand_set: DemandSet, scenario: ScenarioConfig, solver: str,
                  weights: str, seed: int, models: Optional[Mapping[str, LstmModel]] = None,
                  t0: Optional[int] = None, exact_limits: ExactLimits = ExactLimits()) -> TwoPhaseResult:
    """
    Place at ``t0`` under the scenario view, then re-place at ``t0 + delta_t``
    on observed demands with the phase-1 placement as prior. Phase 2 is
    skipped when phase 1 is infeasible.
    """
    if t0 is None:
        t0 = scenario.draw_t0(demand_set, seed)
    if t0 + scenario.delta_t >= demand_set.length:
        raise ScenarioError(f"t0 {t0} + delta_t {scenario.delta_t} lies past the end of the series")

    first_values = scenario_demand_view(demand_set, scenario, t0, models)
    first = instance.with_demand_values(first_values)
    req = SolveRequest(first, None, _weights(weights, first, None), Phase.FIRST,
                       derive_seed(seed, scenario.kind, 'first'), exact_limits)
    phase1 = solve(solver, req)
    result = TwoPhaseResult(t0, phase1, phase1_values=first_values)
    if phase1.status == SolveStatus.INFEASIBLE:
        logger.warning(f"Phase 1 ({scenario.kind}, {solver}) infeasible at t0={t0}; skipping phase 2")
        return result

    prior = to_prior(phase1.solution)
    second_values = observed_values(demand_set, t0 + scenario.delta_t)
    second = instance.with_demand_values(second_values)
    req = SolveRequest(second, prior, _weights(weights, second, prior), Phase.SECOND,
                       derive_seed(seed, scenario.kind, 'second'), exact_limits)
    result.phase2 = solve(solver, req)
    result.phase2_values = second_values
    return result


class _Replicate:
    """Everything a seed shares across axis values and scenarios."""

    def __init__(self, sweep: SweepConfig, seed: int, need_models: bool):
        self.sweep = sweep
        self.seed = seed
        base = build_topology(sweep.topology, sweep.fixed_capacity)
        self.demand_set = generate_demand_set(derive_seed(seed, 'traffic'), base, sweep.flows_per_pair,
                                              periods=sweep.periods)
        self.catalog = precompute_paths(base, self.demand_set.sfcs, **sweep.path_options)
        self.base = base
        self.t0 = sweep.scenario.draw_t0(self.demand_set, seed)
        self.models = None
        if need_models:
            trained = train_flow_models(self.demand_set, sweep.forecast, derive_seed(seed, 'lstm'))
            self.models = {fid: model for fid, (model, _) in trained.items()}

    def instance(self, axis_value) -> Instance:
        if self.sweep.axis == 'sfc_length':
            return build_experiment_instance(self.base, self.demand_set, int(axis_value), self.seed, self.catalog)
        topology = build_topology(self.sweep.topology, float(axis_value))
        return build_experiment_instance(topology, self.demand_set, None, self.seed, self.catalog)

    def row(self, axis_value, kind: str) -> Dict[str, Any]:
        sweep = self.sweep
        row = {'axis': axis_value, 'scenario': kind, 'seed': self.seed, 'solver': sweep.solver}
        row.update({col: None for col in METRIC_COLUMNS})
        scenario = ScenarioConfig(kind, sweep.scenario.over_fraction, sweep.scenario.t0_window,
                                  sweep.scenario.delta_t)
        try:
            result = run_two_phase(self.instance(axis_value), self.demand_set, scenario, sweep.solver,
                                   sweep.weights, self.seed, self.models, self.t0, sweep.exact_limits)
        except ValueError as e:
            logger.warning(f"Row axis={axis_value} scenario={kind} seed={self.seed} failed: {str(e)}")
            row['status'] = 'error'
            return row
        if result.phase2 is not None:
            row.update(result.phase2.metrics.to_row())
        row['status'] = result.status
        return row


def _run_replicate(sweep: SweepConfig, scenarios: Sequence[str], seed: int) -> List[Dict[str, Any]]:
    replicate = _Replicate(sweep, seed, 'pred' in scenarios)
    return [replicate.row(value, kind) for value in sweep.values for kind in scenarios]


def run_row(sweep: SweepConfig, scenario: str, axis_value, seed: int) -> Dict[str, Any]:
    """Re-execute one sweep cell from its recorded seed."""
    sweep.validate()
    return _Replicate(sweep, seed, scenario == 'pred').row(axis_value, scenario)


@dataclass
class SweepReport:
    rows: List[Dict[str, Any]]
    config: Dict[str, Any]
    started_at: str = ''
    finished_at: str = ''

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=REPORT_COLUMNS)

    def aggregate(self) -> pd.DataFrame:
        """Mean and standard deviation of every metric per (axis value, scenario)."""
        frame = self.frame()
        for col in METRIC_COLUMNS:
            frame[col] = pd.to_numeric(frame[col], errors='coerce')
        grouped = frame.groupby(['axis', 'scenario'], sort=True)[METRIC_COLUMNS].agg(['mean', 'std'])
        grouped.columns = [f"{metric}_{stat}" for metric, stat in grouped.columns]
        counts = frame.groupby(['axis', 'scenario'], sort=True)['status'].agg(
            rows='size', feasible=lambda s: int(s.isin(['optimal', 'heuristic']).sum()))
        return grouped.join(counts).reset_index()

    def write(self, out_dir: Union[str, Path], stem: str = 'sweep') -> Dict[str, Path]:
        out_dir = Path(out_dir)
        paths = {
            'rows': write_csv(out_dir / f"{stem}.csv", self.rows, REPORT_COLUMNS),
            'summary': out_dir / f"{stem}_summary.csv",
            'sidecar': out_dir / f"{stem}.json",
        }
        self.aggregate().to_csv(paths['summary'], index=False)
        write_json(paths['sidecar'], {
            'config': self.config,
            'rows': len(self.rows),
            'meta': {'started_at': self.started_at, 'finished_at': self.finished_at},
        })
        return paths


def run_sweep(sweep: SweepConfig, scenarios: Sequence[str], jobs: int = 1) -> SweepReport:
    """
    Execute every (axis value, scenario, seed) cell. Seeds run as independent
    jobs on a process pool when ``jobs`` > 1; rows come back in a fixed order
    regardless of completion order.
    """
    sweep.validate()
    for kind in scenarios:
        if kind not in SCENARIOS:
            raise ScenarioError(f"Unknown scenario {kind}")
    started = datetime.now(timezone.utc).isoformat()
    logger.info(f"Sweep over {sweep.axis} {sweep.values} x {list(scenarios)} x {len(sweep.seeds)} seeds "
                f"with {sweep.solver} ({jobs} jobs)")
    if jobs > 1 and len(sweep.seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(_run_replicate, [sweep] * len(sweep.seeds),
                                     [list(scenarios)] * len(sweep.seeds), sweep.seeds))
    else:
        per_seed = [_run_replicate(sweep, scenarios, seed) for seed in sweep.seeds]

    by_cell = {}
    for seed, rows in zip(sweep.seeds, per_seed):
        for row in rows:
            by_cell[(row['axis'], row['scenario'], seed)] = row
    rows = [by_cell[(value, kind, seed)] for value in sweep.values for kind in scenarios for seed in sweep.seeds]
    failed = sum(1 for r in rows if r['status'] not in ('optimal', 'heuristic'))
    if failed:
        logger.warning(f"{failed} of {len(rows)} sweep rows are infeasible or failed")
    config = sweep.describe()
    config['scenarios'] = list(scenarios)
    return SweepReport(rows, config, started, datetime.now(timezone.utc).isoformat())


class ExperimentService:
    """CLI-facing wrapper returning (success, result, error) tuples."""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def sweep(self, sweep: SweepConfig, scenarios: Sequence[str],
              jobs: int = 1) -> Tuple[bool, Optional[SweepReport], Optional[str]]:
        try:
            return True, run_sweep(sweep, scenarios, jobs), None
        except ValueError as e:
            self.logger.error(f"Sweep failed: {str(e)}")
            return False, None, str(e)

    def two_phase(self, instance: Instance, demand_set: DemandSet, scenario: ScenarioConfig, solver: str,
                  weights: str, seed: int, models: Optional[Mapping[str, LstmModel]] = None,
                  exact_limits: ExactLimits = ExactLimits()) -> Tuple[bool, Optional[TwoPhaseResult], Optional[str]]:
        try:
            return True, run_two_phase(instance, demand_set, scenario, solver, weights, seed, models,
                                       exact_limits=exact_limits), None
        except ValueError as e:
            self.logger.error(f"Two-phase run failed: {str(e)}")
            return False, None, str(e)
