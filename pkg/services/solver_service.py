"""Solve requests and results shared by every solver, plus dispatch by name."""
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

from services.placement_model import (Instance, MetricsReport, ObjectiveWeights, PlacementSolution,
                                      PriorPlacement, evaluate, solution_to_dict)

logger = logging.getLogger(__name__)

SOLVER_NAMES = ('exact', 'greedy', 'ff', 'rf')


class SolveRequestError(ValueError):
    """Raised for inconsistent solve requests or unknown solver names."""


class Phase(str, Enum):
    FIRST = 'first'
    SECOND = 'second'


class SolveStatus(str, Enum):
    OPTIMAL = 'optimal'
    HEURISTIC = 'heuristic'
    INFEASIBLE = 'infeasible'


@dataclass(frozen=True)
class ExactLimits:
    max_demands: int = 3
    max_paths: int = 4
    max_servers: int = 16
    node_budget: int = 2_000_000

    def __post_init__(self):
        if min(self.max_demands, self.max_paths, self.max_servers, self.node_budget) < 1:
            raise SolveRequestError("Exact solver limits must be positive")


@dataclass(frozen=True)
class SolveRequest:
    instance: Instance
    prior: Optional[PriorPlacement] = None
    weights: ObjectiveWeights = ObjectiveWeights()
    phase: Phase = Phase.FIRST
    rng_seed: int = 0
    exact_limits: ExactLimits = ExactLimits()

    def __post_init__(self):
        object.__setattr__(self, 'phase', Phase(self.phase))
        if self.phase == Phase.FIRST and self.prior is not None:
            raise SolveRequestError("A first-phase request cannot carry a prior placement")


@dataclass
class SolveStats:
    wall_seconds: float = 0.0
    nodes_explored: int = 0
    placement_attempts: int = 0
    failed_demands: List[Tuple[str, str]] = field(default_factory=list)
    budget_exhausted: bool = False

    def to_dict(self) -> Dict[str, Any]:
        # wall_seconds is logged only; documents must not vary between runs
        return {
            'nodes_explored': self.nodes_explored,
            'placement_attempts': self.placement_attempts,
            'failed_demands': [f"{s}/{d}" for s, d in self.failed_demands],
            'budget_exhausted': self.budget_exhausted,
        }


@dataclass
class SolveResult:
    solution: PlacementSolution
    metrics: MetricsReport
    status: SolveStatus
    stats: SolveStats
    solver: str = ''

    def to_dict(self) -> Dict[str, Any]:
        return {
            'solver': self.solver,
            'status': self.status.value,
            'solution': solution_to_dict(self.solution),
            'metrics': self.metrics.to_dict(),
            'stats': self.stats.to_dict(),
        }


def build_result(req: SolveRequest, solution: PlacementSolution, status: SolveStatus, stats: SolveStats,
                 started: float, solver: str) -> SolveResult:
    """Evaluate a finished solution; any violation turns the status infeasible."""
    metrics = evaluate(solution, req.instance, req.prior, req.weights)
    if metrics.violations and status != SolveStatus.INFEASIBLE:
        logger.warning(f"{solver} produced {len(metrics.violations)} violations; marking infeasible")
        status = SolveStatus.INFEASIBLE
    stats.wall_seconds = time.perf_counter() - started
    return SolveResult(solution, metrics, status, stats, solver)


def _registry() -> Dict[str, Callable[[SolveRequest], SolveResult]]:
    from services.exact_solver import solve_exact
    from services.heuristic_solvers import solve_first_fit, solve_greedy, solve_random_fit
    return {'exact': solve_exact, 'greedy': solve_greedy, 'ff': solve_first_fit, 'rf': solve_random_fit}


def solve(name: str, req: SolveRequest) -> SolveResult:
    """
    Run the solver registered under ``name``.

    Raises:
        SolveRequestError: For an unknown solver name
    """
    solvers = _registry()
    if name not in solvers:
        raise SolveRequestError(f"Unknown solver {name}; expected one of {', '.join(SOLVER_NAMES)}")
    result = solvers[name](req)
    logger.info(f"{name} ({req.phase.value} phase): status={result.status.value} "
                f"objective={result.metrics.objective:.4f} in {result.stats.wall_seconds:.3f}s")
    return result


class SolverService:
    """CLI-facing wrapper returning (success, result, error) tuples."""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def run(self, name: str, req: SolveRequest) -> Tuple[bool, Optional[SolveResult], Optional[str]]:
        try:
            return True, solve(name, req), None
        except ValueError as e:
            self.logger.error(f"Solver {name} failed: {str(e)}")
            return False, None, str(e)
