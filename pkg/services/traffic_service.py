"""Synthetic per-flow traffic: lognormal samples around a sinusoidal diurnal mean."""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from schemas.file_schemas import DEMAND_DATASET_SCHEMA, missing_fields
from services.topology_service import Topology
from utils.report_writer import read_json, write_json
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES_PER_PERIOD = 24
DEFAULT_CV = 0.1
FIRST_BETA_RANGE = (0.2, 0.5)
SECONDARY_BETA_TOTAL = 0.25
DEFAULT_PHASE_JITTER = math.pi / 6
HARMONIC_TOLERANCE = 1e-9


class TrafficParamsError(ValueError):
    """Raised for invalid traffic parameters or unreadable demand datasets."""


@dataclass(frozen=True)
class SinusoidComponent:
    beta: float
    omega: float
    phi: float


@dataclass(frozen=True)
class TrafficParams:
    """
    Parameters of one flow's mean profile and noise.

    Any ``omega`` is accepted. When every ``omega`` is a whole number of
    cycles per period the profile repeats exactly and ``mean_profile``
    reduces ``t`` modulo the period; otherwise ``t`` is used as given.
    """

    alpha: float = 1.0
    components: Tuple[SinusoidComponent, ...] = ()
    samples_per_period: int = DEFAULT_SAMPLES_PER_PERIOD
    cv: float = DEFAULT_CV
    base_value: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'components', tuple(self.components))
        if not self.components:
            raise TrafficParamsError("At least one sinusoid component is required")
        if self.samples_per_period < 2:
            raise TrafficParamsError("samples_per_period must be at least 2")
        if self.cv < 0:
            raise TrafficParamsError("cv must be non-negative")
        if self.base_value <= 0:
            raise TrafficParamsError("base_value must be positive")

    @property
    def periodic(self) -> bool:
        fundamental = 2 * math.pi / self.samples_per_period
        return all(abs(c.omega / fundamental - round(c.omega / fundamental)) <= HARMONIC_TOLERANCE
                   for c in self.components)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'alpha': self.alpha,
            'components': [{'beta': c.beta, 'omega': c.omega, 'phi': c.phi} for c in self.components],
            'samples_per_period': self.samples_per_period,
            'cv': self.cv,
            'base_value': self.base_value,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TrafficParams':
        try:
            return cls(
                alpha=float(data['alpha']),
                components=tuple(SinusoidComponent(float(c['beta']), float(c['omega']), float(c['phi']))
                                 for c in data['components']),
                samples_per_period=int(data.get('samples_per_period', DEFAULT_SAMPLES_PER_PERIOD)),
                cv=float(data.get('cv', DEFAULT_CV)),
                base_value=float(data.get('base_value', 1.0)),
            )
        except (KeyError, TypeError) as e:
            raise TrafficParamsError(f"Malformed traffic params: {str(e)}") from e


def default_params(samples_per_period: int = DEFAULT_SAMPLES_PER_PERIOD, cv: float = DEFAULT_CV) -> TrafficParams:
    """Template with one daily and one half-daily cycle; daily trough at night."""
    fundamental = 2 * math.pi / samples_per_period
    return TrafficParams(
        alpha=1.0,
        components=(
            SinusoidComponent(0.35, fundamental, -2 * math.pi * 8 / 24),
            SinusoidComponent(0.1, 2 * fundamental, 0.0),
        ),
        samples_per_period=samples_per_period,
        cv=cv,
    )


def mean_profile(t: int, p: TrafficParams) -> float:
    """alpha + sum of beta_k * sin(omega_k * t + phi_k)."""
    tau = t % p.samples_per_period if p.periodic else t
    return p.alpha + sum(c.beta * math.sin(c.omega * tau + c.phi) for c in p.components)


def period_profile(p: TrafficParams) -> np.ndarray:
    return np.array([mean_profile(t, p) for t in range(p.samples_per_period)])


@dataclass(frozen=True, eq=False)
class DemandSeries:
    flow_id: str
    sfc_id: str
    values: np.ndarray
    params: TrafficParams

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)
        if len(values) % self.params.samples_per_period:
            raise TrafficParamsError(f"Series {self.flow_id} length is not a whole number of periods")

    @property
    def base_value(self) -> float:
        return self.params.base_value

    @property
    def periods(self) -> int:
        return len(self.values) // self.params.samples_per_period

    def value_at(self, t: int) -> float:
        return float(self.values[t])

    def history_max(self) -> float:
        return float(self.values.max()) if len(self.values) else 0.0


def generate_series(rng_seed: int, p: TrafficParams, periods: int,
                    flow_id: str = 'flow', sfc_id: str = 'sfc') -> DemandSeries:
    """
    Draw ``periods`` periods of lognormal samples whose mean follows
    ``base_value * mean_profile(t)`` and whose standard deviation is
    ``cv`` times that mean.

    Raises:
        TrafficParamsError: If the mean profile is not strictly positive
    """
    if periods < 1:
        raise TrafficParamsError("periods must be at least 1")
    if p.periodic:
        profile = np.tile(period_profile(p), periods)
    else:
        profile = np.array([mean_profile(t, p) for t in range(periods * p.samples_per_period)])
    if np.any(profile <= 0):
        raise TrafficParamsError(f"Mean profile of flow {flow_id} is not strictly positive")

    mean = p.base_value * profile
    if p.cv == 0:
        values = mean
    else:
        sigma2 = math.log1p(p.cv ** 2)
        rng = np.random.default_rng(rng_seed)
        values = rng.lognormal(np.log(mean) - sigma2 / 2, math.sqrt(sigma2))
    return DemandSeries(flow_id, sfc_id, values, p)


def random_flow_params(rng: np.random.Generator, template: TrafficParams,
                       value_range: Tuple[float, float] = (1.0, 100.0),
                       phase_jitter: float = DEFAULT_PHASE_JITTER) -> TrafficParams:
    """Per-flow amplitudes, jittered phases and base value drawn around a template.

    Amplitudes sum to at most 0.75 * alpha so the profile stays >= 0.25 * alpha.
    """
    alpha = template.alpha
    n = len(template.components)
    components = []
    for k, c in enumerate(template.components):
        if k == 0:
            beta = rng.uniform(*FIRST_BETA_RANGE) * alpha
        else:
            beta = rng.uniform(0.0, SECONDARY_BETA_TOTAL / (n - 1)) * alpha
        components.append(SinusoidComponent(float(beta), c.omega, float(c.phi + rng.uniform(-phase_jitter, phase_jitter))))
    return TrafficParams(alpha, tuple(components), template.samples_per_period, template.cv,
                         float(rng.uniform(*value_range)))


@dataclass(frozen=True)
class SfcDemands:
    id: str
    src: str
    dst: str
    flows: Tuple[DemandSeries, ...]

    def value_at(self, t: int) -> Dict[str, float]:
        return {f.flow_id: f.value_at(t) for f in self.flows}


@dataclass(frozen=True)
class DemandSet:
    seed: int
    periods: int
    params: TrafficParams
    sfcs: Tuple[SfcDemands, ...]
    _series: Dict[str, DemandSeries] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, '_series', {f.flow_id: f for s in self.sfcs for f in s.flows})

    @property
    def samples_per_period(self) -> int:
        return self.params.samples_per_period

    @property
    def length(self) -> int:
        return self.periods * self.samples_per_period

    def flows(self) -> Iterator[Tuple[SfcDemands, DemandSeries]]:
        for sfc in self.sfcs:
            for f in sfc.flows:
                yield sfc, f

    def series(self, flow_id: str) -> DemandSeries:
        return self._series[flow_id]

    def value_at(self, t: int) -> Dict[str, float]:
        """Snapshot of every flow at sample ``t``."""
        return {fid: s.value_at(t) for fid, s in self._series.items()}

    def to_dict(self) -> Dict[str, Any]:
        return {
            'seed': self.seed,
            'periods': self.periods,
            'params': self.params.to_dict(),
            'sfcs': [
                {
                    'id': s.id, 'src': s.src, 'dst': s.dst,
                    'flows': [{'id': f.flow_id, 'base': f.base_value, 'params': f.params.to_dict(),
                               'values': [float(v) for v in f.values]} for f in s.flows],
                }
                for s in self.sfcs
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DemandSet':
        missing = missing_fields(data, DEMAND_DATASET_SCHEMA)
        if missing:
            raise TrafficParamsError(f"Demand dataset is missing required fields: {', '.join(missing)}")
        sfcs = []
        for s in data['sfcs']:
            flows = tuple(DemandSeries(str(f['id']), str(s['id']), f['values'], TrafficParams.from_dict(f['params']))
                          for f in s['flows'])
            sfcs.append(SfcDemands(str(s['id']), str(s['src']), str(s['dst']), flows))
        return cls(int(data['seed']), int(data['periods']), TrafficParams.from_dict(data['params']), tuple(sfcs))


def generate_demand_set(rng_seed: int,
                        topology: Topology,
                        flows_per_pair: Tuple[int, int] = (1, 3),
                        value_range: Tuple[float, float] = (1.0, 100.0),
                        params: Optional[TrafficParams] = None,
                        periods: int = 60,
                        phase_jitter: float = DEFAULT_PHASE_JITTER) -> DemandSet:
    """
    One SFC per ordered pair of distinct non-cloud nodes, each carrying
    ``flows_per_pair`` (inclusive range) flows with independent parameters.

    Every draw is seeded from ``rng_seed`` and the SFC/flow id, so a flow's
    series does not depend on how many other flows exist.
    """
    template = params or default_params()
    nodes = topology.non_cloud_nodes()
    sfcs: List[SfcDemands] = []
    for src in nodes:
        for dst in nodes:
            if src == dst:
                continue
            sfc_id = f"s{len(sfcs)}"
            count_rng = np.random.default_rng(derive_seed(rng_seed, 'flows', sfc_id))
            count = int(count_rng.integers(flows_per_pair[0], flows_per_pair[1] + 1))
            flows = []
            for j in range(count):
                flow_id = f"{sfc_id}_d{j}"
                param_rng = np.random.default_rng(derive_seed(rng_seed, 'params', flow_id))
                flow_params = random_flow_params(param_rng, template, value_range, phase_jitter)
                flows.append(generate_series(derive_seed(rng_seed, 'noise', flow_id), flow_params, periods,
                                             flow_id, sfc_id))
            sfcs.append(SfcDemands(sfc_id, src, dst, tuple(flows)))

    demand_set = DemandSet(rng_seed, periods, template, tuple(sfcs))
    logger.info(f"Generated {len(sfcs)} SFCs with {sum(len(s.flows) for s in sfcs)} flows over {periods} periods")
    return demand_set


def save_demand_set(path: Union[str, Path], demand_set: DemandSet) -> Path:
    return write_json(path, demand_set.to_dict())


def load_demand_set(path: Union[str, Path]) -> DemandSet:
    return DemandSet.from_dict(read_json(path))


def export_demand_csv(path: Union[str, Path], demand_set: DemandSet) -> Path:
    """One row per flow, one ``t<i>`` column per sample."""
    rows = []
    for sfc, f in demand_set.flows():
        row = {'sfc': sfc.id, 'src': sfc.src, 'dst': sfc.dst, 'flow': f.flow_id, 'base': f.base_value}
        row.update({f"t{i}": float(v) for i, v in enumerate(f.values)})
        rows.append(row)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(path, index=False)
    logger.info(f"Wrote {len(rows)} flow rows to {path}")
    return path


class TrafficService:
    """CLI-facing wrapper around dataset generation and persistence."""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def generate_dataset(self, topology: Topology, seed: int, periods: int, out_path: Union[str, Path],
                         csv_path: Optional[Union[str, Path]] = None,
                         params: Optional[TrafficParams] = None,
                         flows_per_pair: Tuple[int, int] = (1, 3)) -> Tuple[bool, Optional[DemandSet], Optional[str]]:
        """
        Generate and write a demand dataset.

        Returns:
            Tuple[bool, Optional[DemandSet], Optional[str]]: (success, demand_set, error_message)
        """
        try:
            demand_set = generate_demand_set(seed, topology, tuple(flows_per_pair), params=params, periods=periods)
            save_demand_set(out_path, demand_set)
            if csv_path is not None:
                export_demand_csv(csv_path, demand_set)
            return True, demand_set, None
        except (TrafficParamsError, OSError) as e:
            self.logger.error(f"Dataset generation failed: {str(e)}")
            return False, None, str(e)

    def load_dataset(self, path: Union[str, Path]) -> Tuple[bool, Optional[DemandSet], Optional[str]]:
        try:
            return True, load_demand_set(path), None
        except (TrafficParamsError, OSError, ValueError) as e:
            self.logger.error(f"Could not load demand dataset {path}: {str(e)}")
            return False, None, str(e)
