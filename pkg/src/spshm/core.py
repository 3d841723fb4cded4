"""Shared vocabulary for the power-system twin: sensors, work conditions, faults, telemetry."""

from __future__ import annotations

import calendar
import enum
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from functools import lru_cache
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"
_TS_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2}) (\d{2}):(\d{2}):(\d{2})$")

UNITS = ("V", "A", "W", "°C", "fraction")
COMPONENTS = ("SA", "BCR", "BDR", "SR", "Bus", "PDM", "BAT1", "BAT2", "BAT3", "LOAD1", "LOAD2", "LOAD3")

N_PACKS = 3
N_LOADS = 3
# Packs are indexed 1..3 internally but operators know them as packs 2..4.
PACK_DISPLAY_OFFSET = 1


class TimestampError(ValueError):
    """Malformed or out-of-range ``YYYY-MM-DD HH:MM:SS`` text."""

    def __init__(self, text: str, field_name: str, detail: str):
        super().__init__(f"invalid timestamp {text!r}: {field_name} {detail}")
        self.text = text
        self.field = field_name


class CatalogError(KeyError):
    pass


class ConditionError(ValueError):
    pass


def parse_timestamp(text: str) -> datetime:
    m = _TS_RE.match(text.strip()) if isinstance(text, str) else None
    if m is None:
        raise TimestampError(str(text), "format", "does not match YYYY-MM-DD HH:MM:SS")
    year, month, day, hour, minute, second = (int(g) for g in m.groups())
    if not 1 <= year:
        raise TimestampError(text, "year", "out of range")
    if not 1 <= month <= 12:
        raise TimestampError(text, "month", f"out of range: {month}")
    last = calendar.monthrange(year, month)[1]
    if not 1 <= day <= last:
        raise TimestampError(text, "day", f"out of range: {day} (month has {last} days)")
    if hour > 23:
        raise TimestampError(text, "hour", f"out of range: {hour}")
    if minute > 59:
        raise TimestampError(text, "minute", f"out of range: {minute}")
    if second > 59:
        raise TimestampError(text, "second", f"out of range: {second}")
    return datetime(year, month, day, hour, minute, second)


def format_timestamp(ts: datetime) -> str:
    return ts.strftime(TIMESTAMP_FORMAT)


def to_epoch(ts: datetime) -> int:
    return calendar.timegm(ts.timetuple())


def from_epoch(seconds: int) -> datetime:
    return datetime(1970, 1, 1) + timedelta(seconds=int(seconds))


def epoch_to_text(seconds: int) -> str:
    return format_timestamp(from_epoch(seconds))


# ---------------------------------------------------------------- sensors


@dataclass(frozen=True)
class Channel:
    id: str
    unit: str
    component: str
    low: float
    high: float
    description: str = ""

    def __post_init__(self):
        if self.unit not in UNITS:
            raise ValueError(f"{self.id}: unknown unit {self.unit!r}")
        if self.component not in COMPONENTS:
            raise ValueError(f"{self.id}: unknown component {self.component!r}")
        if not self.low < self.high:
            raise ValueError(f"{self.id}: nominal range must satisfy min < max")

    @property
    def nominal_range(self) -> tuple[float, float]:
        return (self.low, self.high)

    @property
    def width(self) -> float:
        return self.high - self.low


@dataclass(frozen=True)
class SensorCatalog:
    channels: tuple[Channel, ...]

    def __post_init__(self):
        if len(self.channels) != 33:
            raise ValueError(f"catalog must hold exactly 33 channels, got {len(self.channels)}")
        ids = [c.id for c in self.channels]
        if len(set(ids)) != len(ids):
            raise ValueError("channel ids must be unique")

    def __len__(self) -> int:
        return len(self.channels)

    def __iter__(self) -> Iterator[Channel]:
        return iter(self.channels)

    def __getitem__(self, key: int | str) -> Channel:
        if isinstance(key, str):
            return self.channels[self.index(key)]
        return self.channels[key]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.channels)

    def index(self, channel_id: str) -> int:
        try:
            return self._index_map()[channel_id]
        except KeyError:
            raise CatalogError(f"unknown channel {channel_id!r}") from None

    def _index_map(self) -> dict[str, int]:
        # frozen dataclass: cache via object.__setattr__
        m = self.__dict__.get("_idx")
        if m is None:
            m = {c.id: i for i, c in enumerate(self.channels)}
            object.__setattr__(self, "_idx", m)
        return m

    @property
    def lows(self) -> np.ndarray:
        return np.array([c.low for c in self.channels])

    @property
    def highs(self) -> np.ndarray:
        return np.array([c.high for c in self.channels])

    @property
    def widths(self) -> np.ndarray:
        return self.highs - self.lows

    def to_manifest(self) -> str:
        """Human-readable, tab-separated manifest (one channel per line)."""
        lines = ["# id\tunit\tcomponent\tmin\tmax\tdescription"]
        for c in self.channels:
            lines.append(f"{c.id}\t{c.unit}\t{c.component}\t{c.low!r}\t{c.high!r}\t{c.description}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_manifest(cls, text: str) -> "SensorCatalog":
        channels = []
        for raw in text.splitlines():
            if not raw.strip() or raw.startswith("#"):
                continue
            parts = raw.split("\t")
            cid, unit, comp, lo, hi = parts[:5]
            desc = parts[5] if len(parts) > 5 else ""
            channels.append(Channel(cid, unit, comp, float(lo), float(hi), desc))
        return cls(tuple(channels))


_CATALOG_ROWS = [
    ("SA_V", "V", "SA", 0.0, 32.0, "solar array voltage"),
    ("SA_I", "A", "SA", 0.0, 1.2, "solar array current"),
    ("SA_T", "°C", "SA", -40.0, 80.0, "solar array temperature"),
    ("BCR_IIN", "A", "BCR", 0.0, 1.2, "BCR input current"),
    ("BCR_IOUT", "A", "BCR", 0.0, 3.5, "BCR output current"),
    ("BCR_T", "°C", "BCR", -20.0, 70.0, "BCR temperature"),
    ("BUS_V", "V", "Bus", 13.5, 17.5, "bus voltage"),
    ("BUS_I", "A", "Bus", 0.0, 3.0, "bus current"),
]
for _p in range(1, N_PACKS + 1):
    _CATALOG_ROWS += [
        (f"BAT{_p}_V", "V", f"BAT{_p}", 13.5, 17.0, f"battery pack {_p + PACK_DISPLAY_OFFSET} voltage"),
        (f"BAT{_p}_I", "A", f"BAT{_p}", -0.7, 0.5, f"battery pack {_p + PACK_DISPLAY_OFFSET} current"),
        (f"BAT{_p}_T", "°C", f"BAT{_p}", 0.0, 40.0, f"battery pack {_p + PACK_DISPLAY_OFFSET} temperature"),
    ]
for _l in range(1, N_LOADS + 1):
    _CATALOG_ROWS += [
        (f"LOAD{_l}_V", "V", f"LOAD{_l}", 0.0, 5.5, f"load {_l} voltage"),
        (f"LOAD{_l}_I", "A", f"LOAD{_l}", 0.0, 4.5, f"load {_l} current"),
        (f"LOAD{_l}_P", "W", f"LOAD{_l}", 0.0, 22.0, f"load {_l} power"),
    ]
_CATALOG_ROWS += [
    ("PDM_VIN", "V", "PDM", 13.5, 17.5, "PDM input voltage"),
    ("PDM_IIN", "A", "PDM", 0.0, 3.0, "PDM input current"),
    ("PDM_T", "°C", "PDM", -20.0, 70.0, "PDM temperature"),
    ("SR_I", "A", "SR", 0.0, 1.2, "shunt regulator current"),
    ("SR_T", "°C", "SR", -20.0, 70.0, "shunt regulator temperature"),
    ("BDR_I", "A", "BDR", 0.0, 3.0, "BDR output current"),
    ("BDR_T", "°C", "BDR", -20.0, 70.0, "BDR temperature"),
]


@lru_cache(maxsize=1)
def default_catalog() -> SensorCatalog:
    return SensorCatalog(tuple(Channel(*row) for row in _CATALOG_ROWS))


def pack_display_name(pack: int) -> str:
    return f"battery pack {pack + PACK_DISPLAY_OFFSET}"


# ---------------------------------------------------------- work conditions


class Mode(str, enum.Enum):
    JOINT = "JointPowerSupply"
    SHUNT = "Shunt"
    TRICKLE = "TrickleCharging"
    CC = "CCCharging"
    CV = "CVCharging"
    DISCHARGE = "Discharge"
    IDLE = "Idle"

    @property
    def display(self) -> str:
        return _MODE_DISPLAY[self]


_MODE_DISPLAY = {
    Mode.JOINT: "Joint Power Supply",
    Mode.SHUNT: "Shunt",
    Mode.TRICKLE: "Trickle Charging",
    Mode.CC: "CC Charging",
    Mode.CV: "CV Charging",
    Mode.DISCHARGE: "Discharge",
    Mode.IDLE: "Idle",
}


class Illumination(str, enum.Enum):
    SUNLIT = "Sunlit"
    SHADOW = "Shadow"

    @property
    def display(self) -> str:
        return "Sunlit Area" if self is Illumination.SUNLIT else "Shadow Area"


_SUNLIT_MODES = {Mode.JOINT, Mode.SHUNT, Mode.TRICKLE, Mode.CC, Mode.CV}
_TASK_MODES = {Mode.JOINT, Mode.SHUNT, Mode.DISCHARGE}


@dataclass(frozen=True)
class WorkCondition:
    """Operating regime triple (mode, illumination, task); ``task`` is None for no task."""

    mode: Mode
    illumination: Illumination
    task: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "illumination", Illumination(self.illumination))
        sunlit = self.illumination is Illumination.SUNLIT
        if sunlit != (self.mode in _SUNLIT_MODES):
            raise ConditionError(f"{self.mode.value} is not possible in {self.illumination.value}")
        if self.task is not None and not (isinstance(self.task, int) and 1 <= self.task <= N_LOADS):
            raise ConditionError(f"task must be 1..{N_LOADS} or None, got {self.task!r}")
        if self.mode in _TASK_MODES and self.task is None:
            raise ConditionError(f"{self.mode.value} requires an active task")
        if self.mode not in _TASK_MODES and self.task is not None:
            raise ConditionError(f"{self.mode.value} implies no task")

    @property
    def label(self) -> str:
        task = "No Task" if self.task is None else f"Task {self.task}"
        return f"[{self.mode.display}, {self.illumination.display}, {task}]"

    @property
    def code(self) -> str:
        task = "NoTask" if self.task is None else f"Task{self.task}"
        return f"{self.mode.value}:{self.illumination.value}:{task}"

    @classmethod
    def from_code(cls, code: str) -> "WorkCondition":
        try:
            mode, illum, task = code.split(":")
            t = None if task == "NoTask" else int(task.removeprefix("Task"))
            return cls(Mode(mode), Illumination(illum), t)
        except (ValueError, TypeError) as exc:
            raise ConditionError(f"bad condition code {code!r}") from exc

    @classmethod
    def from_label(cls, label: str) -> "WorkCondition":
        """Inverse of :attr:`label`, e.g. ``[CV Charging, Sunlit Area, No Task]``."""
        m = re.fullmatch(r"\[(.+), (Sunlit Area|Shadow Area), (No Task|Task (\d))\]", label.strip())
        modes = {v: k for k, v in _MODE_DISPLAY.items()}
        if not m or m.group(1) not in modes:
            raise ConditionError(f"bad condition label {label!r}")
        illum = Illumination.SUNLIT if m.group(2) == "Sunlit Area" else Illumination.SHADOW
        return cls(modes[m.group(1)], illum, int(m.group(4)) if m.group(4) else None)


def all_leaf_conditions() -> list[WorkCondition]:
    """Every condition the recognition tree can output."""
    out = [WorkCondition(m, Illumination.SUNLIT) for m in (Mode.TRICKLE, Mode.CC, Mode.CV)]
    out.append(WorkCondition(Mode.IDLE, Illumination.SHADOW))
    for n in range(1, N_LOADS + 1):
        out += [
            WorkCondition(Mode.JOINT, Illumination.SUNLIT, n),
            WorkCondition(Mode.SHUNT, Illumination.SUNLIT, n),
            WorkCondition(Mode.DISCHARGE, Illumination.SHADOW, n),
        ]
    return out


# ------------------------------------------------------------------ faults


@dataclass(frozen=True)
class FaultType:
    id: str
    component: str
    description: str

    def __str__(self) -> str:
        return self.description


FAULT_CATALOG: tuple[FaultType, ...] = (
    FaultType("SA_PARTIAL_OPEN", "SA", "SA partial component open circuit"),
    FaultType("SA_BRANCH_OPEN", "SA", "SA branch open circuit"),
    FaultType("SA_SHORT", "SA", "SA short circuit"),
    FaultType("BCR_SHORT", "BCR", "BCR short circuit"),
    FaultType("BCR_OPEN", "BCR", "BCR open circuit"),
    FaultType("BUS_INSULATION", "Bus", "Bus insulation breakdown"),
    FaultType("BUS_OPEN", "Bus", "Bus open circuit"),
    FaultType("BUS_SHORT", "Bus", "Bus short circuit"),
    FaultType("BAT_OPEN", "BAT2", "battery pack open circuit"),
    FaultType("BAT_SHORT", "BAT2", "battery pack short circuit"),
    FaultType("BAT_AGING", "BAT3", "battery aging"),
    FaultType("LOAD1_OPEN", "LOAD1", "Load 1 open circuit"),
    FaultType("LOAD2_OPEN", "LOAD2", "Load 2 open circuit"),
    FaultType("LOAD3_OPEN", "LOAD3", "Load 3 open circuit"),
    FaultType("LOAD1_SHORT", "LOAD1", "Load 1 short circuit"),
    FaultType("LOAD2_SHORT", "LOAD2", "Load 2 short circuit"),
    FaultType("LOAD3_SHORT", "LOAD3", "Load 3 short circuit"),
)
FAULT_IDS: tuple[str, ...] = tuple(f.id for f in FAULT_CATALOG)
_FAULTS = {f.id: f for f in FAULT_CATALOG}
assert len(FAULT_CATALOG) == 17


def _norm(text: str) -> str:
    return re.sub(r"[^a-z0-9]", "", text.lower())


_FAULT_ALIASES = {_norm(f.id): f for f in FAULT_CATALOG} | {_norm(f.description): f for f in FAULT_CATALOG}


def get_fault(key: str | FaultType) -> FaultType:
    """Look a fault up by id (``BAT_OPEN``) or description (``battery pack open circuit``)."""
    if isinstance(key, FaultType):
        if key.id in _FAULTS:
            return key
        raise CatalogError(f"unknown fault {key.id!r}")
    f = _FAULTS.get(key) or _FAULT_ALIASES.get(_norm(key))
    if f is None:
        raise CatalogError(f"unknown fault {key!r}")
    return f


@dataclass(frozen=True)
class GroundTruth:
    condition: WorkCondition
    anomalous: bool = False
    fault: Optional[FaultType] = None

    def __post_init__(self):
        if self.fault is not None and not self.anomalous:
            raise ValueError("a fault label requires anomalous=True")


# --------------------------------------------------------------- telemetry


@dataclass(frozen=True)
class TelemetryFrame:
    timestamp: datetime
    values: tuple[float, ...]
    truth: Optional[GroundTruth] = None

    def __post_init__(self):
        if len(self.values) != len(default_catalog()):
            raise ValueError(f"frame has {len(self.values)} values, catalog has {len(default_catalog())}")

    def __getitem__(self, channel_id: str) -> float:
        return self.values[default_catalog().index(channel_id)]


@dataclass
class Telemetry:
    """Column-oriented 1 Hz telemetry stream.

    ``times`` are epoch seconds and must increase by exactly one per row.
    Label columns are optional; ``faults`` holds fault ids or ``""``.
    """

    times: np.ndarray
    values: np.ndarray
    conditions: Optional[Sequence[Optional[WorkCondition]]] = None
    anomalous: Optional[np.ndarray] = None
    faults: Optional[Sequence[str]] = None
    window_ids: Optional[np.ndarray] = None
    catalog: SensorCatalog = field(default_factory=default_catalog)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.catalog):
            raise ValueError(f"values must be (n, {len(self.catalog)}), got {self.values.shape}")
        if len(self.times) != len(self.values):
            raise ValueError("times and values lengths differ")
        if self.window_ids is None and len(self.times) > 1 and np.any(np.diff(self.times) != 1):
            raise ValueError("timestamps must increase by exactly 1 s")

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, key: slice) -> "Telemetry":
        if not isinstance(key, slice):
            raise TypeError("Telemetry supports slice indexing only; use frame(i)")
        return Telemetry(
            self.times[key],
            self.values[key],
            None if self.conditions is None else list(self.conditions[key]),
            None if self.anomalous is None else self.anomalous[key],
            None if self.faults is None else list(self.faults[key]),
            None if self.window_ids is None else self.window_ids[key],
            self.catalog,
        )

    def channel(self, channel_id: str) -> np.ndarray:
        return self.values[:, self.catalog.index(channel_id)]

    @property
    def timestamps(self) -> list[str]:
        return [epoch_to_text(t) for t in self.times]

    def truth_at(self, i: int) -> Optional[GroundTruth]:
        if self.conditions is None or self.conditions[i] is None:
            return None
        fid = self.faults[i] if self.faults is not None else ""
        anomalous = bool(self.anomalous[i]) if self.anomalous is not None else bool(fid)
        return GroundTruth(self.conditions[i], anomalous, get_fault(fid) if fid else None)

    def frame(self, i: int) -> TelemetryFrame:
        return TelemetryFrame(from_epoch(self.times[i]), tuple(float(v) for v in self.values[i]), self.truth_at(i))

    def frames(self) -> Iterator[TelemetryFrame]:
        for i in range(len(self)):
            yield self.frame(i)

    @classmethod
    def from_frames(cls, frames: Iterable[TelemetryFrame]) -> "Telemetry":
        frames = list(frames)
        if not frames:
            return cls(np.zeros(0, np.int64), np.zeros((0, len(default_catalog()))))
        times = np.array([to_epoch(f.timestamp) for f in frames], dtype=np.int64)
        values = np.array([f.values for f in frames], dtype=float)
        conds = anomalous = faults = None
        if all(f.truth is not None for f in frames):
            conds = [f.truth.condition for f in frames]
            anomalous = np.array([f.truth.anomalous for f in frames])
            faults = [f.truth.fault.id if f.truth.fault else "" for f in frames]
        return cls(times, values, conds, anomalous, faults)

    @classmethod
    def concat(cls, parts: Sequence["Telemetry"]) -> "Telemetry":
        def cat(attr):
            cols = [getattr(p, attr) for p in parts]
            if any(c is None for c in cols):
                return None
            if isinstance(cols[0], np.ndarray):
                return np.concatenate(cols)
            return [x for c in cols for x in c]

        return cls(
            np.concatenate([p.times for p in parts]),
            np.concatenate([p.values for p in parts]),
            cat("conditions"),
            cat("anomalous"),
            cat("faults"),
            cat("window_ids"),
        )
