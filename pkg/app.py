# FILE: app.py

import argparse
import logging
import sys
from dataclasses import asdict
from typing import Any, Dict, Optional, Sequence, Tuple

from config.run_config import ConfigError, RunConfig, load_run_config
from config.settings import Settings
from services.experiment_service import (ExperimentService, ScenarioConfig, SweepConfig, build_experiment_instance,
                                         observed_values, scenario_demand_view)
from services.forecast_service import ForecastConfig, ForecastError, ForecastService, load_model_store, \
    save_model_store
from services.lp_export_service import build_lp_problem, export_lp, lp_census
from services.placement_model import ObjectiveWeights, solution_from_dict, to_prior
from services.solver_service import ExactLimits, SOLVER_NAMES
from services.topology_service import Topology, build_topology, load_topology_spec
from services.traffic_service import DemandSet, TrafficService
from utils.file_validation import FileValidation
from utils.report_writer import write_csv, write_json
from utils.seeding import derive_seed

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
COMMANDS = ('generate', 'train', 'solve', 'sweep', 'export-lp')
SOLVE_COLUMNS = ['phase', 'solver', 'status', 'migrations', 'replications', 'cloud_vnfs', 'objective',
                 'mean_link_util', 'mean_server_util', 'mean_delay_ms']

logger = logging.getLogger(__name__)


class PlacementApp:
    """Command handlers; each returns a process exit code."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.traffic = TrafficService()
        self.forecast = ForecastService(ForecastConfig.from_dict(config.forecast))
        self.experiments = ExperimentService()
        self.logger = logging.getLogger(__name__)

    # input helpers

    def _topology_spec(self) -> Tuple[bool, Optional[Dict[str, Any]], Optional[str]]:
        path = self.config.topology_path()
        ok, error = FileValidation.validate_input_file(path, 'topology')
        if not ok:
            return False, None, error
        try:
            return True, load_topology_spec(path), None
        except ValueError as e:
            return False, None, f"topology file {path} is not valid JSON: {str(e)}"

    def _topology(self) -> Tuple[bool, Optional[Topology], Optional[str]]:
        ok, spec, error = self._topology_spec()
        if not ok:
            return False, None, error
        try:
            return True, build_topology(spec, self.config.server_capacity), None
        except ValueError as e:
            return False, None, str(e)

    def _dataset(self) -> Tuple[bool, Optional[DemandSet], Optional[str]]:
        ok, error = FileValidation.validate_input_file(self.config.dataset, 'dataset')
        if not ok:
            return False, None, error
        return self.traffic.load_dataset(self.config.dataset)

    def _models(self):
        ok, error = FileValidation.validate_input_file(self.config.model_store, 'model store')
        if not ok:
            return False, None, error
        try:
            _, models = load_model_store(self.config.model_store)
            return True, models, None
        except ForecastError as e:
            return False, None, str(e)

    def _fail(self, error: str) -> int:
        self.logger.error(error)
        print(f"Error: {error}", file=sys.stderr)
        return EXIT_ERROR

    def _scenario(self) -> ScenarioConfig:
        return ScenarioConfig(self.config.scenario, **self.config.scenario_options)

    # commands

    def cmd_generate(self) -> int:
        ok, topology, error = self._topology()
        if not ok:
            return self._fail(error)
        out = self.config.out_dir()
        ok, demand_set, error = self.traffic.generate_dataset(
            topology, self.config.seed, self.config.periods, out / 'demands.json', out / 'demands.csv',
            flows_per_pair=tuple(self.config.flows_per_pair))
        if not ok:
            return self._fail(error)
        self.logger.info(f"Dataset with {len(demand_set.sfcs)} SFC groups written to {out}")
        return EXIT_OK

    def cmd_train(self) -> int:
        ok, demand_set, error = self._dataset()
        if not ok:
            return self._fail(error)
        ok, outcome, error = self.forecast.train_dataset(demand_set, self.config.seed, self.config.rmse_periods)
        if not ok:
            return self._fail(error)
        out = self.config.out_dir()
        save_model_store(out / 'models.json', outcome.models, self.forecast.cfg)
        write_csv(out / 'training.csv', [{'flow_id': fid, **asdict(r)} for fid, r in sorted(outcome.reports.items())])
        if outcome.rmse:
            write_csv(out / 'rmse.csv', [asdict(r) for r in outcome.rmse],
                      ['flow_id', 'train_periods', 'rmse', 'baseline_rmse', 'train_seconds', 'epochs_run'])
        return EXIT_OK

    def cmd_solve(self) -> int:
        ok, topology, error = self._topology()
        if not ok:
            return self._fail(error)
        ok, demand_set, error = self._dataset()
        if not ok:
            return self._fail(error)
        models = None
        if self.config.scenario == 'pred':
            ok, models, error = self._models()
            if not ok:
                return self._fail(error)
        try:
            instance = build_experiment_instance(topology, demand_set, self.config.chain_length, self.config.seed,
                                                 **self.config.path_options)
            scenario = self._scenario()
            limits = ExactLimits(**self.config.exact_limits)
        except (TypeError, ValueError) as e:
            return self._fail(str(e))
        ok, result, error = self.experiments.two_phase(instance, demand_set, scenario, self.config.solver,
                                                       self.config.weights, self.config.seed, models, limits)
        if not ok:
            return self._fail(error)
        document = {
            'seed': self.config.seed,
            'scenario': self.config.scenario,
            't0': result.t0,
            'status': result.status,
            'phase1': result.phase1.to_dict(),
            'phase2': result.phase2.to_dict() if result.phase2 is not None else None,
        }
        out = self.config.out_dir()
        write_json(out / 'solve.json', document)
        rows = [{'phase': phase, 'solver': r.solver, 'status': r.status.value, **r.metrics.to_row()}
                for phase, r in (('phase1', result.phase1), ('phase2', result.phase2)) if r is not None]
        write_csv(out / 'solve.csv', rows, SOLVE_COLUMNS)
        if result.status in ('optimal', 'heuristic'):
            return EXIT_OK
        self.logger.warning(f"Placement finished with status {result.status}")
        return EXIT_INFEASIBLE

    def cmd_sweep(self) -> int:
        ok, spec, error = self._topology_spec()
        if not ok:
            return self._fail(error)
        options = dict(self.config.sweep)
        scenarios = options.pop('scenarios', [self.config.scenario])
        replicates = int(options.pop('replicates', 1))
        seeds = options.pop('seeds', None) or [derive_seed(self.config.seed, 'replicate', i) for i in range(replicates)]
        try:
            sweep = SweepConfig(
                axis=options.pop('axis', 'sfc_length'),
                values=options.pop('values', list(range(1, 11))),
                seeds=list(seeds),
                solver=self.config.solver,
                weights=self.config.weights,
                topology=spec,
                fixed_capacity=options.pop('fixed_capacity', None),
                periods=self.config.periods,
                flows_per_pair=tuple(self.config.flows_per_pair),
                scenario=self._scenario(),
                forecast=self.forecast.cfg,
                path_options=dict(self.config.path_options),
                exact_limits=ExactLimits(**self.config.exact_limits),
            )
        except (TypeError, ValueError) as e:
            return self._fail(f"Invalid sweep configuration: {str(e)}")
        if options:
            return self._fail(f"Unknown sweep options: {', '.join(sorted(options))}")
        ok, report, error = self.experiments.sweep(sweep, scenarios, self.config.jobs)
        if not ok:
            return self._fail(error)
        report.write(self.config.out_dir())
        return EXIT_OK

    def cmd_export_lp(self) -> int:
        ok, topology, error = self._topology()
        if not ok:
            return self._fail(error)
        ok, demand_set, error = self._dataset()
        if not ok:
            return self._fail(error)
        try:
            instance = build_experiment_instance(topology, demand_set, self.config.chain_length, self.config.seed,
                                                 **self.config.path_options)
            scenario = self._scenario()
            t0 = scenario.draw_t0(demand_set, self.config.seed)
            prior = None
            if self.config.prior_solution:
                ok, document, error = FileValidation.load_json_file(self.config.prior_solution, 'prior solution')
                if not ok:
                    return self._fail(error)
                # accepts a bare solution, a solver result or a solve.json document
                document = document.get('phase1') or document
                prior = to_prior(solution_from_dict(document.get('solution', document)))
                values = observed_values(demand_set, t0 + scenario.delta_t)
            else:
                models = None
                if scenario.kind == 'pred':
                    ok, models, error = self._models()
                    if not ok:
                        return self._fail(error)
                values = scenario_demand_view(demand_set, scenario, t0, models)
            instance = instance.with_demand_values(values)
            out = self.config.out_dir() / 'model.lp'
            export_lp(instance, prior, ObjectiveWeights(), out)
            write_json(self.config.out_dir() / 'model_census.json',
                       {'t0': t0, **lp_census(build_lp_problem(instance, prior, ObjectiveWeights()))})
        except (TypeError, ValueError, AttributeError) as e:
            return self._fail(str(e))
        return EXIT_OK

    def run(self, command: str) -> int:
        handlers = {
            'generate': self.cmd_generate,
            'train': self.cmd_train,
            'solve': self.cmd_solve,
            'sweep': self.cmd_sweep,
            'export-lp': self.cmd_export_lp,
        }
        self.logger.info(f"Running {command} (seed {self.config.seed})")
        return handlers[command]()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='app.py', description='VNF placement, migration and replication toolkit')
    sub = parser.add_subparsers(dest='command', required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument('--config', help='JSON run configuration')
        cmd.add_argument('--seed', type=int, help='master seed')
        cmd.add_argument('--solver', choices=SOLVER_NAMES)
        cmd.add_argument('--scenario', choices=('obsv', 'over', 'pred'))
        cmd.add_argument('--jobs', type=int, help='worker processes for sweeps')
        cmd.add_argument('--out', help='output directory')
        cmd.add_argument('--topology', help='topology name or spec path')
        cmd.add_argument('--dataset', help='demand dataset path')
        cmd.add_argument('--model-store', dest='model_store', help='trained model store path')
        cmd.add_argument('-v', '--verbose', action='store_true', default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    # Configure logging
    invalid = Settings.validate_settings()
    level = Settings.LOGGING_LEVEL if not invalid else 'INFO'
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, level),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    if invalid:
        logger.error(f"Invalid settings: {', '.join(invalid)}")
        return EXIT_ERROR

    overrides = {k: v for k, v in vars(args).items() if k not in ('command', 'config')}
    try:
        config = load_run_config(args.config, overrides)
    except ConfigError as e:
        logger.error(str(e))
        print(f"Error: {str(e)}", file=sys.stderr)
        return EXIT_ERROR
    return PlacementApp(config).run(args.command)


if __name__ == "__main__":
    sys.exit(main())
