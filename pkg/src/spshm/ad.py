"""Residual-based anomaly detection with classical one-step forecasters.

A forecaster predicts each second from the seconds before it. The anomaly
score of a second is the largest absolute prediction error across channels,
each normalized by the channel's nominal-range width. A quantile of the
scores on held-out fault-free data becomes the threshold, and runs of
consecutive flagged seconds become anomaly intervals.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Telemetry, default_catalog, epoch_to_text

DEFAULT_QUANTILE = 0.995
DEFAULT_SPLIT = 0.8


class InsufficientDataError(ValueError):
    pass


class DegenerateResidualWarning(UserWarning):
    pass


# ---------------------------------------------------------------- registry


@dataclass(frozen=True)
class ParamSpec:
    name: str
    type: type
    default: object
    low: Optional[float] = None
    high: Optional[float] = None
    doc: str = ""

    def validate(self, value):
        if self.type is int:
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                if isinstance(value, float) and value.is_integer():
                    value = int(value)
                else:
                    raise ValueError(f"{self.name} expects an integer, got {value!r}")
            value = int(value)
        elif self.type is float:
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise ValueError(f"{self.name} expects a number, got {value!r}")
            value = float(value)
        elif not isinstance(value, self.type):
            raise ValueError(f"{self.name} expects {self.type.__name__}, got {value!r}")
        if self.low is not None and value < self.low:
            raise ValueError(f"{self.name} must be >= {self.low}, got {value}")
        if self.high is not None and value > self.high:
            raise ValueError(f"{self.name} must be <= {self.high}, got {value}")
        return value


# Accepted by every model for parity with iterative learners. ``batch_size``
# sets the scoring chunk; closed-form fits have no epochs, so ``patience`` is
# recorded but has no effect.
TRAINING_PARAMS = (
    ParamSpec("batch_size", int, 4096, 1, None, "rows scored per chunk"),
    ParamSpec("patience", int, 0, 0, None, "recorded only; closed-form fits need no early stopping"),
)


@dataclass(frozen=True)
class ModelInfo:
    name: str
    params: tuple[ParamSpec, ...]
    guidance: str
    factory: Callable[..., "Forecaster"]

    @property
    def defaults(self) -> dict:
        return {p.name: p.default for p in self.params}

    def schema(self) -> dict[str, ParamSpec]:
        return {p.name: p for p in (*self.params, *TRAINING_PARAMS)}

    def validate(self, params: dict) -> dict:
        schema = self.schema()
        unknown = sorted(set(params) - set(schema))
        if unknown:
            raise ValueError(f"{self.name} has no parameter(s) {unknown}; known: {sorted(schema)}")
        out = {p.name: p.default for p in schema.values()}
        for k, v in params.items():
            out[k] = schema[k].validate(v)
        return out


class ModelRegistry:
    def __init__(self, infos: Sequence[ModelInfo] = ()):
        self._models: dict[str, ModelInfo] = {}
        for info in infos:
            self.register(info)

    def register(self, info: ModelInfo) -> "ModelRegistry":
        if info.name in self._models:
            raise ValueError(f"model {info.name!r} is already registered")
        for p in info.params:
            p.validate(p.default)
        self._models[info.name] = info
        return self

    def __contains__(self, name: str) -> bool:
        return name in self._models

    def __len__(self) -> int:
        return len(self._models)

    def get(self, name: str) -> ModelInfo:
        for key, info in self._models.items():
            if key.lower() == str(name).lower():
                return info
        raise KeyError(f"unknown model {name!r}; available: {list(self._models)}")

    def names(self) -> list[str]:
        return list(self._models)

    def describe(self) -> list[tuple[str, tuple[str, ...], dict, str]]:
        return [(m.name, tuple(p.name for p in m.params), m.defaults, m.guidance) for m in self._models.values()]

    def copy(self) -> "ModelRegistry":
        return ModelRegistry(list(self._models.values()))


# -------------------------------------------------------------- forecasters


class Forecaster:
    """One-step-ahead predictor over all channels."""

    name = "Forecaster"

    def __init__(self):
        self.context: Optional[np.ndarray] = None
        self.batch_size = 4096

    @property
    def memory(self) -> int:
        raise NotImplementedError

    def _fit(self, x: np.ndarray) -> None:
        pass

    def _predict_full(self, full: np.ndarray, start: int) -> np.ndarray:
        raise NotImplementedError

    def fit(self, train) -> "Forecaster":
        x = _values(train)
        if len(x) <= self.memory:
            raise InsufficientDataError(f"{self.name} needs more than {self.memory} training rows, got {len(x)}")
        self._fit(x)
        self.context = x[-self.memory:].copy() if self.memory else x[:0].copy()
        return self

    def predict(self, values, context: Optional[np.ndarray] = None) -> np.ndarray:
        """Predictions for every row of ``values``; earlier rows come from ``context``."""
        x = _values(values)
        ctx = self.context if context is None else np.asarray(context, dtype=float)
        if ctx is None:
            raise RuntimeError(f"{self.name} is not fitted")
        ctx = ctx[-self.memory:] if self.memory else ctx[:0]
        if len(ctx) < self.memory:
            raise InsufficientDataError(f"{self.name} needs {self.memory} context rows, got {len(ctx)}")
        full = np.vstack([ctx, x])
        return self._predict_full(full, len(ctx))

    def params(self) -> dict:
        return {}

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v}" for k, v in self.params().items())
        return f"{self.name}({args})"


class Persistence(Forecaster):
    name = "Persistence"

    @property
    def memory(self) -> int:
        return 1

    def _predict_full(self, full, start):
        return full[start - 1:-1]


class SeasonalNaive(Forecaster):
    name = "SeasonalNaive"

    def __init__(self, period: int = 5700):
        super().__init__()
        if period < 1:
            raise ValueError("period must be positive")
        self.period = int(period)

    @property
    def memory(self) -> int:
        return self.period

    def _predict_full(self, full, start):
        return full[start - self.period:len(full) - self.period]

    def params(self):
        return {"period": self.period}


class MovingAverage(Forecaster):
    name = "MovingAverage"

    def __init__(self, width: int = 10):
        super().__init__()
        if width < 1:
            raise ValueError("width must be positive")
        self.width = int(width)

    @property
    def memory(self) -> int:
        return self.width

    def _predict_full(self, full, start):
        c = np.vstack([np.zeros((1, full.shape[1])), np.cumsum(full, axis=0)])
        n = len(full)
        idx = np.arange(start, n)
        return (c[idx] - c[idx - self.width]) / self.width

    def params(self):
        return {"width": self.width}


class AR(Forecaster):
    """Per-channel autoregression with intercept, fitted by least squares."""

    name = "AR"

    def __init__(self, order: int = 4):
        super().__init__()
        if order < 1:
            raise ValueError("order must be positive")
        self.order = int(order)
        self.coef: Optional[np.ndarray] = None  # (channels, order + 1): intercept, lag 1, ..., lag p

    @property
    def memory(self) -> int:
        return self.order

    def _design(self, x: np.ndarray, j: int, start: int, stop: int) -> np.ndarray:
        cols = [np.ones(stop - start)] + [x[start - i:stop - i, j] for i in range(1, self.order + 1)]
        return np.column_stack(cols)

    def _fit(self, x):
        p, n = self.order, len(x)
        coef = np.empty((x.shape[1], p + 1))
        for j in range(x.shape[1]):
            a = self._design(x, j, p, n)
            coef[j] = np.linalg.lstsq(a, x[p:, j], rcond=None)[0]
        self.coef = coef

    def _predict_full(self, full, start):
        n = len(full)
        out = np.empty((n - start, full.shape[1]))
        for j in range(full.shape[1]):
            out[:, j] = self._design(full, j, start, n) @ self.coef[j]
        return out

    def params(self):
        return {"order": self.order}


def _default_registry() -> ModelRegistry:
    return ModelRegistry([
        ModelInfo("Persistence", (), "Predicts the previous second. No parameters; a strong baseline for slow channels.",
                  lambda: Persistence()),
        ModelInfo("SeasonalNaive", (ParamSpec("period", int, 5700, 1, None, "season length in seconds"),),
                  "Predicts the value one orbit earlier. Set period to the orbit period; needs one full orbit of "
                  "training data.", lambda period=5700: SeasonalNaive(period)),
        ModelInfo("AR", (ParamSpec("order", int, 4, 1, 64, "number of lags"),),
                  "Least-squares autoregression per channel. Higher orders follow fast dynamics but overfit noise.",
                  lambda order=4: AR(order)),
        ModelInfo("MovingAverage", (ParamSpec("width", int, 10, 1, None, "averaging window in seconds"),),
                  "Predicts the mean of the last width seconds. Smooths sensor noise at the cost of lag.",
                  lambda width=10: MovingAverage(width)),
    ])


DEFAULT_REGISTRY = _default_registry()


def describe_models(registry: Optional[ModelRegistry] = None) -> list[tuple[str, tuple[str, ...], dict, str]]:
    """(name, parameter names, defaults, guidance) for each registered model, in registration order."""
    return (registry or DEFAULT_REGISTRY).describe()


def register_model(info: ModelInfo, registry: Optional[ModelRegistry] = None) -> ModelRegistry:
    return (registry or DEFAULT_REGISTRY).register(info)


@dataclass(frozen=True)
class ForecasterSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def build(self, registry: Optional[ModelRegistry] = None) -> Forecaster:
        info = (registry or DEFAULT_REGISTRY).get(self.kind)
        params = info.validate(dict(self.params))
        model = info.factory(**{p.name: params[p.name] for p in info.params})
        model.batch_size = params["batch_size"]
        return model


def fit(spec: ForecasterSpec | Forecaster, train) -> Forecaster:
    model = spec.build() if isinstance(spec, ForecasterSpec) else spec
    return model.fit(train)


# ------------------------------------------------------------------ scoring


def _values(data) -> np.ndarray:
    if isinstance(data, Telemetry):
        return data.values
    x = np.asarray(data, dtype=float)
    return x.reshape(-1, 1) if x.ndim == 1 else x


def _widths(n_channels: int) -> np.ndarray:
    cat = default_catalog()
    return cat.widths if n_channels == len(cat) else np.ones(n_channels)


def score(model: Forecaster, data, context: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-second anomaly score: max over channels of |prediction error| / range width."""
    x = _values(data)
    pred = model.predict(x, context)
    return np.max(np.abs(pred - x) / _widths(x.shape[1]), axis=1)


def quantile_threshold(scores: np.ndarray, q: float) -> float:
    if not 0.0 < q <= 1.0:
        raise ValueError(f"quantile must lie in (0, 1], got {q}")
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("cannot calibrate on an empty validation set")
    if not np.any(scores):
        warnings.warn("all validation residuals are zero; threshold is 0", DegenerateResidualWarning, stacklevel=3)
        return 0.0
    return float(np.quantile(scores, q))


def calibrate(model: Forecaster, validation, q: float = DEFAULT_QUANTILE,
              context: Optional[np.ndarray] = None) -> float:
    """Threshold = ``q``-quantile (linear interpolation) of the validation scores."""
    if len(_values(validation)) == 0:
        raise ValueError("validation set is empty")
    return quantile_threshold(score(model, validation, context), q)


# ---------------------------------------------------------------- intervals


@dataclass(frozen=True)
class AnomalyInterval:
    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("interval start must not exceed its end")

    @property
    def is_point(self) -> bool:
        return self.start == self.end

    @property
    def seconds(self) -> int:
        return self.end - self.start + 1

    def render(self) -> str:
        if self.is_point:
            return f"['{epoch_to_text(self.start)}']"
        return f"['{epoch_to_text(self.start)}', '{epoch_to_text(self.end)}']"


def extract_intervals(flags: np.ndarray, times: Optional[np.ndarray] = None) -> list[AnomalyInterval]:
    """Maximal runs of consecutive flagged seconds, as inclusive [start, end] timestamps."""
    flags = np.asarray(flags, dtype=bool)
    times = np.arange(len(flags)) if times is None else np.asarray(times)
    if len(flags) == 0:
        return []
    padded = np.concatenate([[False], flags, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return [AnomalyInterval(int(times[a]), int(times[b - 1])) for a, b in zip(edges[::2], edges[1::2])]


@dataclass
class DetectionResult:
    intervals: list[AnomalyInterval]
    threshold: float
    anomaly_ratio: float
    residuals: np.ndarray
    times: np.ndarray

    @property
    def flags(self) -> np.ndarray:
        return self.residuals > self.threshold

    @property
    def n_flagged(self) -> int:
        return int(np.count_nonzero(self.flags))

    def render(self) -> str:
        lines = [f"Anomaly ratio: {100 * self.anomaly_ratio:.4f}%; Detection threshold: {self.threshold:.4f}",
                 f"Detected anomaly timestamp intervals ({len(self.intervals)}):"]
        lines += [iv.render() for iv in self.intervals]
        lines.append("Single-element lists are point anomalies.")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "anomaly_ratio": self.anomaly_ratio,
            "n_flagged": self.n_flagged,
            "n_total": int(len(self.residuals)),
            "intervals": [[epoch_to_text(iv.start), epoch_to_text(iv.end)] for iv in self.intervals],
        }

    def residual_rows(self) -> list[tuple[str, str, int]]:
        return [(epoch_to_text(t), f"{r:.6g}", int(f)) for t, r, f in zip(self.times, self.residuals, self.flags)]


def detect_scores(scores: np.ndarray, threshold: float, times: Optional[np.ndarray] = None) -> DetectionResult:
    scores = np.asarray(scores, dtype=float)
    times = np.arange(len(scores)) if times is None else np.asarray(times)
    flags = scores > threshold
    ratio = float(np.count_nonzero(flags)) / len(flags) if len(flags) else 0.0
    return DetectionResult(extract_intervals(flags, times), float(threshold), ratio, scores, times)


def detect(model: Forecaster, threshold: float, test, context: Optional[np.ndarray] = None) -> DetectionResult:
    x = _values(test)
    times = test.times if isinstance(test, Telemetry) else np.arange(len(x))
    chunk = max(int(model.batch_size), 1)
    ctx = model.context if context is None else np.asarray(context, dtype=float)
    parts = []
    for a in range(0, len(x), chunk):
        b = min(len(x), a + chunk)
        parts.append(score(model, x[a:b], ctx))
        ctx = np.vstack([ctx, x[a:b]])[-model.memory:] if model.memory else ctx
    scores = np.concatenate(parts) if parts else np.zeros(0)
    return detect_scores(scores, threshold, times)


# --------------------------------------------------------- whole procedure


@dataclass
class AnomalyDetector:
    """Fit on the first part of fault-free data, calibrate on the rest, then detect."""

    spec: ForecasterSpec = field(default_factory=lambda: ForecasterSpec("SeasonalNaive"))
    quantile: float = DEFAULT_QUANTILE
    split: float = DEFAULT_SPLIT
    model: Optional[Forecaster] = None
    threshold: Optional[float] = None

    def fit(self, train) -> "AnomalyDetector":
        x = _values(train)
        cut = int(round(self.split * len(x)))
        if cut >= len(x):
            raise InsufficientDataError("no validation rows left after the chronological split")
        model = self.spec.build()
        model.fit(x[:cut])
        self.threshold = calibrate(model, x[cut:], self.quantile)
        model.context = x[-model.memory:].copy() if model.memory else x[:0].copy()
        self.model = model
        return self

    def detect(self, test) -> DetectionResult:
        if self.model is None or self.threshold is None:
            raise RuntimeError("detector is not fitted")
        return detect(self.model, self.threshold, test)
