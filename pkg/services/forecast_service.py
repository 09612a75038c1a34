"""
One-step-ahead traffic forecasting.

A single-hidden-layer LSTM written directly in numpy (forward pass, backprop
through time, Adam, early stopping), one model per flow, plus naive baselines
and the RMSE-versus-training-periods evaluation.
"""
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from schemas.file_schemas import MODEL_STORE_SCHEMA, missing_fields
from services.traffic_service import DemandSeries, DemandSet
from utils.report_writer import read_json, write_json
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

READOUTS = ('relu', 'linear')
PARAM_NAMES = ('W', 'b', 'V', 'd')


class ForecastError(ValueError):
    """Raised for invalid forecast configurations or insufficient data."""


class ForecastDivergenceError(ForecastError):
    """Raised when the training loss becomes non-finite."""


class ModelStoreError(ForecastError):
    """Raised when a saved model store cannot be read back."""


@dataclass
class ForecastConfig:
    hidden_units: int = 8
    input_size: int = 1
    output_size: int = 1
    sequence_length: int = 8
    readout: str = 'relu'
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 4
    validation_fraction: float = 0.10
    min_delta: float = 0.001
    patience: int = 10
    max_epochs: int = 1000
    # None means every full period except the last one
    train_periods: Optional[int] = None
    horizon: int = 6
    samples_per_period: int = 24

    def validate(self) -> None:
        if self.input_size != 1 or self.output_size != 1:
            raise ForecastError("Only univariate models (input_size = output_size = 1) are supported")
        if self.hidden_units < 1 or self.sequence_length < 1 or self.batch_size < 1:
            raise ForecastError("hidden_units, sequence_length and batch_size must be positive")
        if not 0 < self.validation_fraction < 1:
            raise ForecastError("validation_fraction must lie in (0, 1)")
        if self.patience < 1 or self.min_delta < 0 or self.max_epochs < 1:
            raise ForecastError("Invalid early stopping settings")
        if self.horizon < 1:
            raise ForecastError("horizon must be at least 1")
        if self.readout not in READOUTS:
            raise ForecastError(f"Unknown readout {self.readout}; expected one of {READOUTS}")
        if self.train_periods is not None and self.train_periods < 1:
            raise ForecastError("train_periods must be at least 1")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ForecastConfig':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmModel:
    """LSTM cell with gate blocks ordered input, forget, output, candidate."""

    W: np.ndarray
    b: np.ndarray
    V: np.ndarray
    d: np.ndarray
    norm_min: float = 0.0
    norm_max: float = 1.0
    readout: str = 'relu'
    sequence_length: int = 8

    @property
    def hidden_units(self) -> int:
        return self.V.shape[0]

    @classmethod
    def initialize(cls, hidden_units: int, rng: np.random.Generator, readout: str = 'relu',
                   sequence_length: int = 8) -> 'LstmModel':
        fan_in = 1 + hidden_units
        W = rng.uniform(-0.5, 0.5, size=(4 * hidden_units, fan_in)) / math.sqrt(fan_in)
        V = rng.uniform(-0.5, 0.5, size=hidden_units) / math.sqrt(hidden_units)
        return cls(W, np.zeros(4 * hidden_units), V, np.zeros(1), readout=readout, sequence_length=sequence_length)

    def parameters(self) -> Dict[str, np.ndarray]:
        return {'W': self.W, 'b': self.b, 'V': self.V, 'd': self.d}

    def copy(self) -> 'LstmModel':
        return LstmModel(self.W.copy(), self.b.copy(), self.V.copy(), self.d.copy(),
                         self.norm_min, self.norm_max, self.readout, self.sequence_length)

    def normalize(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.norm_min) / (self.norm_max - self.norm_min)

    def denormalize(self, values) -> np.ndarray:
        return self.norm_min + np.asarray(values, dtype=float) * (self.norm_max - self.norm_min)

    def forward(self, X: np.ndarray) -> Tuple[np.ndarray, Dict[str, Any]]:
        """
        Run a batch of windows through the cell.

        Args:
            X: Normalized inputs, shape (batch, steps)

        Returns:
            Tuple[np.ndarray, Dict]: (outputs of shape (batch,), cache for backprop)
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        batch, steps = X.shape
        H = self.hidden_units
        h = np.zeros((batch, H))
        c = np.zeros((batch, H))
        steps_cache = []
        for t in range(steps):
            z = np.concatenate([X[:, t:t + 1], h], axis=1)
            a = z @ self.W.T + self.b
            i = _sigmoid(a[:, :H])
            f = _sigmoid(a[:, H:2 * H])
            o = _sigmoid(a[:, 2 * H:3 * H])
            g = np.tanh(a[:, 3 * H:])
            c_prev = c
            c = f * c_prev + i * g
            tanh_c = np.tanh(c)
            h = o * tanh_c
            steps_cache.append({'z': z, 'i': i, 'f': f, 'o': o, 'g': g, 'c_prev': c_prev, 'tanh_c': tanh_c})
        pre = h @ self.V + self.d[0]
        out = np.maximum(pre, 0.0) if self.readout == 'relu' else pre
        return out, {'steps': steps_cache, 'h': h, 'pre': pre}

    def predict_normalized(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X)[0]

    def loss(self, X: np.ndarray, y: np.ndarray) -> float:
        out = self.predict_normalized(X)
        return float(np.mean((out - np.asarray(y, dtype=float)) ** 2))

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        """Mean squared error and its gradient with respect to every parameter."""
        y = np.asarray(y, dtype=float)
        out, cache = self.forward(X)
        batch = out.shape[0]
        H = self.hidden_units
        loss = float(np.mean((out - y) ** 2))

        dout = 2.0 * (out - y) / batch
        dpre = dout * (cache['pre'] > 0) if self.readout == 'relu' else dout
        grads = {
            'W': np.zeros_like(self.W),
            'b': np.zeros_like(self.b),
            'V': cache['h'].T @ dpre,
            'd': np.array([dpre.sum()]),
        }
        dh = np.outer(dpre, self.V)
        dc = np.zeros((batch, H))
        for step in reversed(cache['steps']):
            i, f, o, g, tanh_c = step['i'], step['f'], step['o'], step['g'], step['tanh_c']
            do = dh * tanh_c
            dc = dc + dh * o * (1.0 - tanh_c ** 2)
            da = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * step['c_prev'] * f * (1.0 - f),
                do * o * (1.0 - o),
                dc * i * (1.0 - g ** 2),
            ], axis=1)
            grads['W'] += da.T @ step['z']
            grads['b'] += da.sum(axis=0)
            dh = (da @ self.W)[:, 1:]
            dc = dc * f
        return loss, grads

    def to_dict(self) -> Dict[str, Any]:
        return {
            'weights': {'W': self.W.tolist(), 'b': self.b.tolist(), 'V': self.V.tolist(), 'd': self.d.tolist()},
            'norm_min': self.norm_min,
            'norm_max': self.norm_max,
            'readout': self.readout,
            'sequence_length': self.sequence_length,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LstmModel':
        try:
            w = data['weights']
            model = cls(np.array(w['W'], dtype=float), np.array(w['b'], dtype=float),
                        np.array(w['V'], dtype=float), np.array(w['d'], dtype=float).reshape(1),
                        float(data['norm_min']), float(data['norm_max']), str(data['readout']),
                        int(data.get('sequence_length', 8)))
        except (KeyError, TypeError, ValueError) as e:
            raise ModelStoreError(f"Malformed model entry: {str(e)}") from e
        H = model.V.shape[0]
        if model.W.shape != (4 * H, 1 + H) or model.b.shape != (4 * H,):
            raise ModelStoreError(f"Inconsistent weight shapes for {H} hidden units")
        if not all(np.all(np.isfinite(p)) for p in model.parameters().values()):
            raise ModelStoreError("Model weights are not finite")
        if not model.norm_min < model.norm_max:
            raise ModelStoreError("Normalization bounds must satisfy min < max")
        if model.readout not in READOUTS:
            raise ModelStoreError(f"Unknown readout {model.readout}")
        return model


class Adam:
    """Adam over a dict of numpy parameters, updated in place."""

    def __init__(self, params: Dict[str, np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}

    def step(self, grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        for k, p in self.params.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * grads[k]
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * grads[k] ** 2
            m_hat = self.m[k] / (1 - self.beta1 ** self.t)
            v_hat = self.v[k] / (1 - self.beta2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class EarlyStopping:
    """Stops when the validation loss has not improved by ``min_delta`` for ``patience`` epochs."""

    def __init__(self, patience: int = 10, min_delta: float = 0.0):
        self.patience = patience
        self.min_delta = min_delta
        self.counter = 0
        self.best_score: Optional[float] = None
        self.best_epoch = 0
        self.early_stop = False

    def __call__(self, val_loss: float, epoch: int) -> bool:
        if self.best_score is None or val_loss < self.best_score - self.min_delta:
            self.best_score = val_loss
            self.best_epoch = epoch + 1
            self.counter = 0
        else:
            self.counter += 1
            if self.counter >= self.patience:
                self.early_stop = True
        return self.early_stop


@dataclass
class TrainReport:
    epochs_run: int
    best_epoch: int
    final_val_loss: float
    initial_train_loss: float
    final_train_loss: float
    train_seconds: float = 0.0


@dataclass
class RmseRecord:
    train_periods: int
    rmse: float
    baseline_rmse: float
    train_seconds: float
    epochs_run: int
    flow_id: str = ''


def _series_values(series: Union[DemandSeries, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(series, DemandSeries):
        return np.asarray(series.values, dtype=float)
    return np.asarray(series, dtype=float)


def make_windows(values: np.ndarray, sequence_length: int) -> Tuple[np.ndarray, np.ndarray]:
    """Sliding one-step samples: ``values[i:i+L]`` predicts ``values[i+L]``."""
    n = len(values) - sequence_length
    if n < 1:
        return np.empty((0, sequence_length)), np.empty(0)
    idx = np.arange(sequence_length)[None, :] + np.arange(n)[:, None]
    return values[idx], values[sequence_length:]


def _fit_bounds(values: np.ndarray) -> Tuple[float, float]:
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-12:
        hi = lo + 1.0
    return lo, hi


def train(series: Union[DemandSeries, Sequence[float], np.ndarray], cfg: ForecastConfig,
          rng_seed: int) -> Tuple[LstmModel, TrainReport]:
    """
    Fit one LSTM on the first ``cfg.train_periods`` periods of a series.

    The chronological tail (``validation_fraction``) of the one-step pairs is
    held out for early stopping; the weights of the last epoch are returned.

    Raises:
        ForecastError: If the series is too short for the requested periods
        ForecastDivergenceError: If a loss becomes NaN or infinite
    """
    cfg.validate()
    values = _series_values(series)
    P = cfg.samples_per_period
    available = len(values) // P
    if available < 1:
        raise ForecastError(f"Series of length {len(values)} is shorter than one period ({P} samples)")
    periods = cfg.train_periods if cfg.train_periods is not None else max(available - 1, 1)
    if periods < 1 or periods + 1 > available:
        raise ForecastError(f"Series has {available} periods; {periods} requested for training "
                            f"plus one held-out period")

    started = time.perf_counter()
    train_values = values[:periods * P]
    lo, hi = _fit_bounds(train_values)
    rng = np.random.default_rng(rng_seed)
    model = LstmModel.initialize(cfg.hidden_units, rng, cfg.readout, cfg.sequence_length)
    model.norm_min, model.norm_max = lo, hi

    X, y = make_windows(model.normalize(train_values), cfg.sequence_length)
    if len(y) < 2:
        raise ForecastError(f"Not enough samples to train: {len(y)} one-step pairs")
    n_val = min(max(1, int(round(cfg.validation_fraction * len(y)))), len(y) - 1)
    X_train, y_train = X[:-n_val], y[:-n_val]
    X_val, y_val = X[-n_val:], y[-n_val:]

    initial_train_loss = model.loss(X_train, y_train)
    optimizer = Adam(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    stopper = EarlyStopping(cfg.patience, cfg.min_delta)
    val_loss = math.inf
    epoch = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(y_train))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = model.loss_and_grads(X_train[batch], y_train[batch])
            if not math.isfinite(loss):
                raise ForecastDivergenceError(f"Training loss diverged at epoch {epoch + 1}")
            optimizer.step(grads)
        val_loss = model.loss(X_val, y_val)
        if not math.isfinite(val_loss):
            raise ForecastDivergenceError(f"Validation loss diverged at epoch {epoch + 1}")
        if stopper(val_loss, epoch):
            break

    report = TrainReport(
        epochs_run=epoch + 1,
        best_epoch=stopper.best_epoch,
        final_val_loss=val_loss,
        initial_train_loss=initial_train_loss,
        final_train_loss=model.loss(X_train, y_train),
        train_seconds=time.perf_counter() - started,
    )
    logger.debug(f"Trained LSTM on {periods} periods: {report.epochs_run} epochs, val loss {val_loss:.6f}")
    return model, report


def predict_horizon(model: LstmModel, history: Sequence[float], h: int) -> float:
    """
    Forecast the value ``h`` steps after the end of ``history``.

    The last ``sequence_length`` values form the window (left-padded with the
    first value when shorter); each prediction is fed back ``h - 1`` times.
    """
    history = np.asarray(history, dtype=float)
    if history.size == 0:
        raise ForecastError("History must not be empty")
    if h < 1:
        raise ForecastError("Horizon must be at least 1")
    L = model.sequence_length
    window = model.normalize(history[-L:])
    if window.size < L:
        window = np.concatenate([np.full(L - window.size, window[0]), window])
    prediction = 0.0
    for _ in range(h):
        prediction = float(model.predict_normalized(window[None, :])[0])
        window = np.append(window[1:], prediction)
    return max(float(model.denormalize(prediction)), 0.0)


def gradient_check(model: LstmModel, batch: Tuple[np.ndarray, np.ndarray], step: float = 1e-5) -> float:
    """Largest relative gap between analytic and central-difference gradients."""
    X, y = batch
    _, analytic = model.loss_and_grads(X, y)
    perturbed = model.copy()
    params = perturbed.parameters()
    worst = 0.0
    for name in PARAM_NAMES:
        p = params[name]
        for idx in np.ndindex(p.shape):
            saved = p[idx]
            p[idx] = saved + step
            plus = perturbed.loss(X, y)
            p[idx] = saved - step
            minus = perturbed.loss(X, y)
            p[idx] = saved
            numeric = (plus - minus) / (2 * step)
            a = analytic[name][idx]
            worst = max(worst, abs(a - numeric) / max(1e-6, abs(a) + abs(numeric)))
    return worst


def last_value_forecast(values: Sequence[float], h: int = 1) -> float:
    return float(np.asarray(values, dtype=float)[-1])


def seasonal_naive_forecast(values: Sequence[float], h: int = 1, periodicity: int = 24) -> float:
    """Value one period before the target step."""
    values = np.asarray(values, dtype=float)
    if len(values) + h - periodicity - 1 < 0:
        return float(values[-1])
    return float(values[len(values) + h - periodicity - 1])


def _test_slice(values: np.ndarray, P: int, L: int) -> range:
    start = len(values) - P
    return range(max(start, L), len(values))


def baseline_rmse(values: Sequence[float], norm_min: float, norm_max: float, P: int,
                  method: str = 'last_value') -> float:
    """Normalized one-step RMSE of a naive forecaster over the final period."""
    values = np.asarray(values, dtype=float)
    scale = norm_max - norm_min
    errors = []
    for t in _test_slice(values, P, 1):
        if method == 'seasonal':
            guess = seasonal_naive_forecast(values[:t], 1, P)
        else:
            guess = last_value_forecast(values[:t])
        errors.append((guess - values[t]) / scale)
    return float(np.sqrt(np.mean(np.square(errors))))


def evaluate_rmse(series: Union[DemandSeries, Sequence[float], np.ndarray], cfg: ForecastConfig,
                  train_periods_list: Sequence[int], rng_seed: int) -> List[RmseRecord]:
    """
    For each training-period count k, train on the k periods preceding the
    final period and score one-step predictions over that final period on the
    normalized scale.

    Raises:
        ForecastError: If the series holds fewer than max(k) + 1 periods
    """
    values = _series_values(series)
    P = cfg.samples_per_period
    available = len(values) // P
    values = values[:available * P]
    if not train_periods_list or max(train_periods_list) + 1 > available:
        raise ForecastError(f"Series has {available} periods; need {max(train_periods_list or [0]) + 1}")
    flow_id = series.flow_id if isinstance(series, DemandSeries) else ''

    records = []
    for k in train_periods_list:
        window = values[(available - 1 - k) * P:]
        k_cfg = ForecastConfig.from_dict({**cfg.to_dict(), 'train_periods': k})
        model, report = train(window, k_cfg, derive_seed(rng_seed, 'rmse', k))
        L = model.sequence_length
        test = _test_slice(window, P, L)
        X = np.stack([model.normalize(window[t - L:t]) for t in test])
        target = model.normalize(window[list(test)])
        rmse = float(np.sqrt(np.mean((model.predict_normalized(X) - target) ** 2)))
        records.append(RmseRecord(k, rmse, baseline_rmse(window, model.norm_min, model.norm_max, P),
                                  report.train_seconds, report.epochs_run, flow_id))
        logger.info(f"RMSE with {k} training periods: {rmse:.4f} (last-value {records[-1].baseline_rmse:.4f})")
    return records


def train_flow_models(demand_set: DemandSet, cfg: ForecastConfig,
                      rng_seed: int) -> Dict[str, Tuple[LstmModel, TrainReport]]:
    """One model per flow, each seeded from the master seed and its flow id."""
    models = {}
    for _, flow in demand_set.flows():
        models[flow.flow_id] = train(flow, cfg, derive_seed(rng_seed, 'lstm', flow.flow_id))
    logger.info(f"Trained {len(models)} flow models")
    return models


def save_model_store(path: Union[str, Path], models: Dict[str, LstmModel], cfg: ForecastConfig) -> Path:
    return write_json(path, {'config': cfg.to_dict(), 'models': {fid: m.to_dict() for fid, m in models.items()}})


def load_model_store(path: Union[str, Path]) -> Tuple[ForecastConfig, Dict[str, LstmModel]]:
    """
    Raises:
        ModelStoreError: If the file is not a well-formed model store
    """
    try:
        data = read_json(path)
    except (OSError, ValueError) as e:
        raise ModelStoreError(f"Cannot read model store {path}: {str(e)}") from e
    missing = missing_fields(data, MODEL_STORE_SCHEMA)
    if missing:
        raise ModelStoreError(f"Model store is missing required fields: {', '.join(missing)}")
    cfg = ForecastConfig.from_dict(data['config'])
    return cfg, {fid: LstmModel.from_dict(m) for fid, m in data['models'].items()}


@dataclass
class TrainingOutcome:
    models: Dict[str, LstmModel] = field(default_factory=dict)
    reports: Dict[str, TrainReport] = field(default_factory=dict)
    rmse: List[RmseRecord] = field(default_factory=list)


class ForecastService:
    """CLI-facing training workflow: models per flow plus the RMSE study."""

    def __init__(self, cfg: Optional[ForecastConfig] = None):
        self.cfg = cfg or ForecastConfig()
        self.logger = logging.getLogger(__name__)

    def train_dataset(self, demand_set: DemandSet, seed: int,
                      rmse_periods: Sequence[int] = ()) -> Tuple[bool, Optional[TrainingOutcome], Optional[str]]:
        """
        Returns:
            Tuple[bool, Optional[TrainingOutcome], Optional[str]]: (success, outcome, error_message)
        """
        try:
            outcome = TrainingOutcome()
            for flow_id, (model, report) in train_flow_models(demand_set, self.cfg, seed).items():
                outcome.models[flow_id] = model
                outcome.reports[flow_id] = report
            if rmse_periods:
                for _, flow in demand_set.flows():
                    outcome.rmse.extend(evaluate_rmse(flow, self.cfg, rmse_periods, derive_seed(seed, flow.flow_id)))
            return True, outcome, None
        except ForecastError as e:
            self.logger.error(f"Training failed: {str(e)}")
            return False, None, str(e)
