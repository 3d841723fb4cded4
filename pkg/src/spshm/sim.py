"""Deterministic 1 Hz power-system twin with fault injection.

The plant is a lumped power-flow model: a solar array (SA) feeding a bus
through the battery charge regulator (BCR), three parallel battery packs
behind the discharge regulator (BDR), a shunt regulator (SR) dumping surplus
array power, and three loads supplied through the power distribution module
(PDM). Every quantity is computed from power conservation, so the channel
values of a fault-free step balance exactly.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Mapping, Optional, Sequence

import numpy as np

from .core import (
    FAULT_CATALOG,
    N_LOADS,
    N_PACKS,
    FaultType,
    Illumination,
    Mode,
    Telemetry,
    TelemetryFrame,
    WorkCondition,
    default_catalog,
    epoch_to_text,
    get_fault,
    parse_timestamp,
    to_epoch,
)

FR_ORBIT_COUNTS = (4, 18, 24, 34, 90, 94)
DATASET_KINDS = ("MR", "AD", "FL", "FR")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimParams:
    sa_voltage: float = 28.75
    sa_power: float = 18.4
    sa_eclipse_voltage: float = 0.24
    bus_voltage: float = 16.8
    bdr_drop: float = 0.35
    eta_bcr: float = 0.95
    eta_bdr: float = 0.97
    eta_pdm: float = 0.95
    platform_current: float = 0.05
    load_voltage: float = 5.0
    task_currents: tuple[float, float, float] = (1.2, 2.9, 3.9)
    capacity_ah: float = 1.0
    ocv0: float = 13.9
    ocv_slope: float = 2.9
    resistance: tuple[float, float, float] = (0.30, 0.31, 0.29)
    cc_current: float = 0.32
    cv_setpoint: float = 16.8
    trickle_threshold: float = 0.1
    trickle_current: float = 0.05
    latch_s: int = 5

    def ocv(self, soc: float) -> float:
        return self.ocv0 + self.ocv_slope * soc

    def task_power(self, load: int) -> float:
        return self.load_voltage * self.task_currents[load - 1]


DEFAULT_PARAMS = SimParams()


@dataclass(frozen=True)
class FaultInjection:
    fault: FaultType
    start: int
    end: int
    severity: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "fault", get_fault(self.fault))
        if not self.start < self.end:
            raise ConfigError(f"fault window must satisfy start < end, got [{self.start}, {self.end})")
        if not 0.0 < self.severity <= 1.0:
            raise ConfigError(f"severity must lie in (0, 1], got {self.severity}")


@dataclass(frozen=True)
class TaskWindow:
    load: int
    start: int
    end: int

    def __post_init__(self):
        if not 1 <= self.load <= N_LOADS:
            raise ConfigError(f"task load must be 1..{N_LOADS}, got {self.load}")
        if not self.start < self.end:
            raise ConfigError(f"task window must satisfy start < end, got [{self.start}, {self.end})")


def default_orbit_tasks(orbit_period_s: int, eclipse_fraction: float) -> tuple[TaskWindow, ...]:
    """Per-orbit task pattern exercising every work condition.

    A Load-1 task late in the sunlit arc (shunt), a Load-3 payload burst
    (joint supply) and a long Load-2 task in eclipse (discharge), leaving the
    early sunlit arc free for the CC -> CV -> trickle sequence.
    """
    eclipse = round(eclipse_fraction * orbit_period_s)
    sunlit = orbit_period_s - eclipse
    return (
        TaskWindow(1, int(0.73 * sunlit), int(0.81 * sunlit)),
        TaskWindow(3, int(0.86 * sunlit), int(0.94 * sunlit)),
        TaskWindow(2, sunlit + int(0.1 * eclipse), sunlit + int(0.8 * eclipse)),
    )


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    orbit_period_s: int = 5700
    eclipse_fraction: float = 0.35
    n_orbits: int = 4
    task_schedule: tuple[TaskWindow, ...] = ()
    orbit_tasks: Optional[tuple[TaskWindow, ...]] = None
    fault_schedule: tuple[FaultInjection, ...] = ()
    noise_std: Optional[tuple[float, ...]] = None
    noise_scale: float = 0.005
    start_time: str = "2024-10-18 00:00:00"
    initial_soc: float = 1.0
    ad_train_orbits: Optional[int] = None
    fl_windows_per_class: int = 120
    fl_window_s: int = 64
    params: SimParams = DEFAULT_PARAMS

    def __post_init__(self):
        if self.orbit_period_s <= 0 or self.n_orbits <= 0:
            raise ConfigError("orbit_period_s and n_orbits must be positive")
        if not 0.0 < self.eclipse_fraction < 1.0:
            raise ConfigError("eclipse_fraction must lie in (0, 1)")
        if self.eclipse_fraction * self.orbit_period_s < 1:
            raise ConfigError("eclipse must last at least one second")
        if self.noise_std is not None and len(self.noise_std) != len(default_catalog()):
            raise ConfigError("noise_std must give one value per channel")
        if self.noise_std is not None and any(s < 0 for s in self.noise_std):
            raise ConfigError("noise_std must be nonnegative")
        parse_timestamp(self.start_time)
        h = self.horizon
        for w in self.task_schedule:
            if w.start < 0 or w.end > h:
                raise ConfigError(f"task window [{w.start}, {w.end}) lies outside the horizon [0, {h})")
        for f in self.fault_schedule:
            if f.start < 0 or f.end > h:
                raise ConfigError(f"fault window [{f.start}, {f.end}) lies outside the horizon [0, {h})")
        if self.orbit_tasks is not None:
            for w in self.orbit_tasks:
                if w.start < 0 or w.end > self.orbit_period_s:
                    raise ConfigError("orbit_tasks offsets must lie within one orbit")

    @property
    def horizon(self) -> int:
        return self.n_orbits * self.orbit_period_s

    @property
    def eclipse_s(self) -> int:
        return round(self.eclipse_fraction * self.orbit_period_s)

    @property
    def sunlit_s(self) -> int:
        return self.orbit_period_s - self.eclipse_s

    @property
    def channel_noise(self) -> np.ndarray:
        if self.noise_std is not None:
            return np.asarray(self.noise_std, dtype=float)
        return self.noise_scale * default_catalog().widths

    def all_tasks(self) -> list[TaskWindow]:
        tasks = list(self.task_schedule)
        pattern = self.orbit_tasks
        if pattern is None and not self.task_schedule:
            pattern = default_orbit_tasks(self.orbit_period_s, self.eclipse_fraction)
        for k in range(self.n_orbits if pattern else 0):
            off = k * self.orbit_period_s
            tasks += [TaskWindow(w.load, w.start + off, w.end + off) for w in pattern]
        return tasks

    def digest(self) -> str:
        return hashlib.sha256(repr(self).encode()).hexdigest()[:16]


# ------------------------------------------------------------------- state

_TEMP_KEYS = ("SA", "BCR", "BAT1", "BAT2", "BAT3", "PDM", "SR", "BDR")
_CHARGE_MODES = (Mode.CC, Mode.CV, Mode.TRICKLE)
# first-order thermal time constants in seconds, in _TEMP_KEYS order
TEMP_TAUS = (400.0, 200.0, 300.0, 300.0, 300.0, 200.0, 200.0, 200.0)


@dataclass(frozen=True)
class PowerState:
    soc: tuple[float, ...] = (1.0, 1.0, 1.0)
    illumination: float = 1.0
    mode: Optional[WorkCondition] = None
    faults: tuple[tuple[str, float], ...] = ()
    capacity_ah: tuple[float, ...] = (DEFAULT_PARAMS.capacity_ah,) * N_PACKS
    resistance: tuple[float, ...] = DEFAULT_PARAMS.resistance
    charge_phase: Mode = Mode.CC
    dwell: int = 0
    temps: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if len(self.soc) != N_PACKS or any(not 0.0 <= s <= 1.0 for s in self.soc):
            raise ValueError("soc must hold one value in [0, 1] per pack")
        if not 0.0 <= self.illumination <= 1.0:
            raise ValueError("illumination must lie in [0, 1]")

    @property
    def active_faults(self) -> frozenset[FaultType]:
        return frozenset(get_fault(fid) for fid, _ in self.faults)

    def severity(self, fault_id: str) -> float:
        for fid, s in self.faults:
            if fid == fault_id:
                return s
        return 0.0

    @classmethod
    def initial(cls, params: SimParams = DEFAULT_PARAMS, soc: float | Sequence[float] = 1.0) -> "PowerState":
        socs = tuple(float(soc) for _ in range(N_PACKS)) if np.isscalar(soc) else tuple(float(s) for s in soc)
        return cls(soc=socs, capacity_ah=(params.capacity_ah,) * N_PACKS, resistance=params.resistance)


def inject(state: PowerState, f: FaultInjection | None, params: SimParams = DEFAULT_PARAMS) -> PowerState:
    """Return ``state`` with fault ``f`` active. ``None`` leaves the state unchanged."""
    if f is None:
        return state
    fault = get_fault(f.fault)
    faults = tuple(sorted({**dict(state.faults), fault.id: float(f.severity)}.items()))
    new = replace(state, faults=faults)
    if fault.id == "BAT_AGING":
        k = _pack_of(fault)
        cap = list(new.capacity_ah)
        res = list(new.resistance)
        cap[k] = params.capacity_ah * max(1.0 - f.severity, 0.05)
        res[k] = params.resistance[k] * (1.0 + 4.0 * f.severity)
        new = replace(new, capacity_ah=tuple(cap), resistance=tuple(res))
    return new


def clear(state: PowerState, fault: FaultType | str, params: SimParams = DEFAULT_PARAMS) -> PowerState:
    fault = get_fault(fault)
    new = replace(state, faults=tuple((k, v) for k, v in state.faults if k != fault.id))
    if fault.id == "BAT_AGING":
        k = _pack_of(fault)
        cap = list(new.capacity_ah)
        res = list(new.resistance)
        cap[k] = params.capacity_ah
        res[k] = params.resistance[k]
        new = replace(new, capacity_ah=tuple(cap), resistance=tuple(res))
    return new


def _pack_of(fault: FaultType) -> int:
    return int(fault.component[-1]) - 1


# -------------------------------------------------------------- controller


@dataclass(frozen=True)
class Demands:
    """Exogenous load request for one second: active task loads (sorted)."""

    tasks: tuple[int, ...] = ()
    params: SimParams = DEFAULT_PARAMS

    @property
    def task(self) -> Optional[int]:
        return self.tasks[0] if self.tasks else None

    @property
    def load_power(self) -> float:
        return sum(self.params.task_power(n) for n in self.tasks)


def _cc_voltages(state: PowerState, p: SimParams) -> list[float]:
    return [p.ocv(s) + r * p.cc_current for s, r in zip(state.soc, state.resistance)]


def _cv_currents(state: PowerState, p: SimParams) -> list[float]:
    return [(p.cv_setpoint - p.ocv(s)) / r for s, r in zip(state.soc, state.resistance)]


def _entry_phase(state: PowerState, p: SimParams) -> Mode:
    if max(_cc_voltages(state, p)) < p.cv_setpoint:
        return Mode.CC
    if min(_cv_currents(state, p)) >= p.trickle_threshold:
        return Mode.CV
    return Mode.TRICKLE


def _next_phase(state: PowerState, p: SimParams, entering: bool) -> Mode:
    if entering:
        return _entry_phase(state, p)
    phase = state.charge_phase
    if state.dwell < p.latch_s:
        return phase
    if phase is Mode.CC and max(_cc_voltages(state, p)) >= p.cv_setpoint:
        return Mode.CV
    if phase is Mode.CV and min(_cv_currents(state, p)) < p.trickle_threshold:
        return Mode.TRICKLE
    return phase


def controller_step(state: PowerState, illumination: float, demands: Demands) -> WorkCondition:
    """Pick the work condition the power controller realizes this second.

    Charging runs CC until the pack would exceed the CV setpoint, then CV
    until some pack current falls below the trickle threshold. Threshold
    driven changes wait out the latch; illumination and task changes apply
    immediately.
    """
    p = demands.params
    task = demands.task
    if illumination <= 0.0:
        if task is not None:
            return WorkCondition(Mode.DISCHARGE, Illumination.SHADOW, task)
        return WorkCondition(Mode.IDLE, Illumination.SHADOW)
    if task is not None:
        mode = Mode.JOINT if demands.load_power > p.sa_power * illumination else Mode.SHUNT
        return WorkCondition(mode, Illumination.SUNLIT, task)
    prev = state.mode
    entering = prev is None or prev.mode not in _CHARGE_MODES
    return WorkCondition(_next_phase(state, p, entering), Illumination.SUNLIT)


# ------------------------------------------------------------------- plant


def _solve_discharge(ocvs: Sequence[float], res: Sequence[float], power: float) -> float:
    """Common current I with sum((ocv_i - r_i I) I) = power."""
    if power <= 0.0 or not ocvs:
        return 0.0
    a, b = sum(res), sum(ocvs)
    disc = b * b - 4.0 * a * power
    if disc < 0.0:
        return b / (2.0 * a)
    return (b - math.sqrt(disc)) / (2.0 * a)


def _solve_charge_scale(ocvs, res, currents, power) -> float:
    """Scale c in [0, 1] with sum((ocv_i + r_i c I_i) c I_i) = power."""
    a = sum(r * i * i for r, i in zip(res, currents))
    b = sum(o * i for o, i in zip(ocvs, currents))
    if power <= 0.0 or b <= 0.0:
        return 0.0
    if a <= 0.0:
        return min(1.0, power / b)
    return min(1.0, (-b + math.sqrt(b * b + 4.0 * a * power)) / (2.0 * a))


def _lag(prev: float, target: float, tau: float) -> float:
    return prev + (target - prev) / tau


def plant_step(state: PowerState, cond: WorkCondition, demands: Demands, illumination: float
               ) -> tuple[PowerState, list[float]]:
    """Advance one second under ``cond``; return the new state and 33 noise-free channel values."""
    p = demands.params
    faults = dict(state.faults)
    sev = faults.get
    sunlit = illumination > 0.0

    # ---- loads behind the PDM
    bus_open = "BUS_OPEN" in faults
    load_v = [0.0] * N_LOADS
    load_i = [0.0] * N_LOADS
    for n in demands.tasks:
        load_i[n - 1] = p.task_currents[n - 1]
        load_v[n - 1] = 0.0 if bus_open else p.load_voltage  # the PDM switches a load on for its task
    for n in range(N_LOADS):
        if f"LOAD{n + 1}_OPEN" in faults or bus_open:
            load_i[n] = 0.0
        s = sev(f"LOAD{n + 1}_SHORT")
        if s and not bus_open:
            load_i[n] = load_i[n] + s * (4.5 - load_i[n])
            load_v[n] = load_v[n] * (1.0 - 0.9 * s)
    load_p = [v * i for v, i in zip(load_v, load_i)]
    pdm_in_power = sum(load_p) / p.eta_pdm

    # ---- battery packs
    ocvs = [p.ocv(s) for s in state.soc]
    res = state.resistance
    bat_open = "BAT_OPEN" in faults
    bat_short = sev("BAT_SHORT")
    healthy = [k for k in range(N_PACKS) if not ((bat_open or bat_short) and k == 1)]

    # ---- array
    sa_factor = (1.0 - 0.3 * sev("SA_PARTIAL_OPEN", 0.0)) * (1.0 - 0.5 * sev("SA_BRANCH_OPEN", 0.0))
    sa_avail = p.sa_power * illumination * sa_factor if sunlit else 0.0
    sa_v = (p.sa_voltage * (1.0 - 0.1 * sev("SA_PARTIAL_OPEN", 0.0))) if sunlit else p.sa_eclipse_voltage
    bcr_ok = sunlit and "BCR_OPEN" not in faults and "SA_SHORT" not in faults
    leak = 0.6 * sev("BUS_INSULATION", 0.0)

    bat_i = [0.0] * N_PACKS
    bat_v = list(ocvs)
    bcr_in = bcr_out = shunt = bdr_out = bat_discharge = 0.0
    if bcr_ok:
        v_bus = p.bus_voltage
        demand = pdm_in_power + v_bus * (p.platform_current + leak)
        bcr_out_max = p.eta_bcr * sa_avail
        if cond.mode is Mode.JOINT or demand > bcr_out_max:
            bcr_out = bcr_out_max
            bcr_in = sa_avail
            bat_discharge = (demand - bcr_out) / p.eta_bdr
            bdr_out = demand - bcr_out
        else:
            phase = cond.mode if cond.mode in _CHARGE_MODES else state.charge_phase
            if phase is Mode.CC:
                want = [p.cc_current] * N_PACKS
            elif phase is Mode.CV:
                want = [max(c, 0.0) for c in _cv_currents(state, p)]
            else:
                want = [p.trickle_current] * N_PACKS
            want = [w if k in healthy else 0.0 for k, w in enumerate(want)]
            scale = _solve_charge_scale(ocvs, res, want, bcr_out_max - demand)
            charge = 0.0
            for k in range(N_PACKS):
                ik = scale * want[k]
                bat_i[k] = -ik
                bat_v[k] = ocvs[k] + res[k] * ik
                charge += bat_v[k] * ik
            bcr_out = demand + charge
            bcr_in = bcr_out / p.eta_bcr
            shunt = sa_avail - bcr_in
    else:
        # bus fed from the packs through the BDR
        v_bus = sum(ocvs[k] for k in healthy) / max(len(healthy), 1) - p.bdr_drop
        demand = pdm_in_power + v_bus * (p.platform_current + leak)
        bdr_out = demand
        bat_discharge = demand / p.eta_bdr
        shunt = sa_avail  # array isolated from the bus dumps everything

    if bat_discharge > 0.0:
        i_dis = _solve_discharge([ocvs[k] for k in healthy], [res[k] for k in healthy], bat_discharge)
        for k in healthy:
            bat_i[k] = i_dis
            bat_v[k] = ocvs[k] - res[k] * i_dis

    bus_i = (pdm_in_power / v_bus if v_bus > 0 else 0.0) + p.platform_current + leak
    pdm_iin = pdm_in_power / v_bus if v_bus > 0 else 0.0
    pdm_vin = 0.0 if bus_open else v_bus
    if bus_open:
        pdm_iin = 0.0
    sa_i = sa_avail / sa_v if sunlit and sa_v > 0 else 0.0
    losses_bcr = bcr_in - bcr_out
    losses_bdr = bat_discharge - bdr_out
    losses_pdm = pdm_in_power - sum(load_p)

    # ---- state of charge (capacity in Ah, current positive = discharge)
    soc = list(state.soc)
    for k in range(N_PACKS):
        drain = bat_i[k]
        if k == 1 and bat_short:
            drain += 0.5 * bat_short
        soc[k] = min(1.0, max(0.0, soc[k] - drain / (3600.0 * state.capacity_ah[k])))

    # ---- channel values before sensor-level fault signatures
    sa_t_target = (55.0 - 0.4 * (sa_avail - shunt)) if sunlit else -20.0
    bat_t_target = [22.0 + 12.0 * abs(i) for i in bat_i]
    targets = [
        sa_t_target,
        22.0 + 4.0 * losses_bcr,
        *bat_t_target,
        25.0 + 3.0 * losses_pdm,
        20.0 + 1.5 * max(shunt, 0.0),
        20.0 + 4.0 * losses_bdr,
    ]
    if bat_short:
        targets[3] += 15.0 * bat_short
    if "BAT_AGING" in faults:
        targets[4] += 4.0 * faults["BAT_AGING"]
    if "BCR_SHORT" in faults:
        targets[1] += 25.0 * faults["BCR_SHORT"]
    prev_t = state.temps if state.temps is not None else tuple(targets)
    temps = tuple(_lag(a, b, tau) for a, b, tau in zip(prev_t, targets, TEMP_TAUS))

    sr_i = max(shunt, 0.0) / sa_v if sunlit and sa_v > 0 else 0.0
    vals = [
        sa_v, sa_i, temps[0],
        bcr_in / sa_v if sunlit and sa_v > 0 else 0.0, bcr_out / v_bus if v_bus > 0 else 0.0, temps[1],
        v_bus, bus_i,
    ]
    for k in range(N_PACKS):
        vals += [bat_v[k], bat_i[k], temps[2 + k]]
    for n in range(N_LOADS):
        vals += [load_v[n], load_i[n], load_p[n]]
    vals += [pdm_vin, pdm_iin, temps[5], sr_i, temps[6], bdr_out / v_bus if v_bus > 0 else 0.0, temps[7]]

    _apply_signatures(vals, faults)

    phase = cond.mode if cond.mode in _CHARGE_MODES else state.charge_phase
    changed = state.mode is None or cond != state.mode
    new_state = replace(
        state,
        soc=tuple(soc),
        illumination=illumination,
        mode=cond,
        charge_phase=phase,
        dwell=0 if changed else state.dwell + 1,
        temps=temps,
    )
    return new_state, vals


# catalog positions used by the sensor-level signatures
_IX = {cid: i for i, cid in enumerate(default_catalog().ids)}


def _apply_signatures(vals: list[float], faults: Mapping[str, float]) -> None:
    """Short circuits push currents to the channel maximum and voltages toward zero."""
    if "SA_SHORT" in faults:
        s = faults["SA_SHORT"]
        vals[_IX["SA_V"]] *= 1.0 - 0.95 * s
        vals[_IX["SA_I"]] += s * (1.2 - vals[_IX["SA_I"]])
    if "BCR_SHORT" in faults:
        s = faults["BCR_SHORT"]
        vals[_IX["BCR_IIN"]] += s * (1.2 - vals[_IX["BCR_IIN"]])
        vals[_IX["BCR_IOUT"]] += s * (3.5 - vals[_IX["BCR_IOUT"]])
        vals[_IX["BUS_V"]] *= 1.0 - 0.3 * s
        vals[_IX["PDM_VIN"]] *= 1.0 - 0.3 * s
    if "BUS_SHORT" in faults:
        s = faults["BUS_SHORT"]
        vals[_IX["BUS_V"]] *= 1.0 - 0.9 * s
        vals[_IX["PDM_VIN"]] *= 1.0 - 0.9 * s
        vals[_IX["BUS_I"]] += s * (3.0 - vals[_IX["BUS_I"]])
    if "BUS_INSULATION" in faults:
        s = faults["BUS_INSULATION"]
        vals[_IX["BUS_V"]] *= 1.0 - 0.02 * s
    if "BAT_SHORT" in faults:
        s = faults["BAT_SHORT"]
        vals[_IX["BAT2_I"]] += s * (0.5 - vals[_IX["BAT2_I"]])
        vals[_IX["BAT2_V"]] *= 1.0 - 0.8 * s


# -------------------------------------------------------------- simulation


class _Schedule:
    """Per-second lookup of active tasks and fault transitions."""

    def __init__(self, config: ScenarioConfig):
        h = config.horizon
        self.tasks = [[] for _ in range(N_LOADS)]
        mask = np.zeros((h, N_LOADS), dtype=bool)
        for w in config.all_tasks():
            mask[max(w.start, 0):min(w.end, h), w.load - 1] = True
        self.task_mask = mask
        self.starts: dict[int, list[FaultInjection]] = {}
        self.ends: dict[int, list[FaultInjection]] = {}
        for f in config.fault_schedule:
            self.starts.setdefault(f.start, []).append(f)
            self.ends.setdefault(f.end, []).append(f)

    def active_tasks(self, t: int) -> tuple[int, ...]:
        row = self.task_mask[t]
        return tuple(n + 1 for n in range(N_LOADS) if row[n])


def illumination_at(t: int, config: ScenarioConfig) -> float:
    return 1.0 if (t % config.orbit_period_s) < config.sunlit_s else 0.0


def run(config: ScenarioConfig, add_noise: bool = True, state: Optional[PowerState] = None) -> Telemetry:
    """Simulate the full horizon into a columnar :class:`Telemetry` with ground truth."""
    p = config.params
    h = config.horizon
    sched = _Schedule(config)
    if state is None:
        state = PowerState.initial(p, config.initial_soc)
    values = np.empty((h, len(default_catalog())))
    conditions: list[WorkCondition] = []
    anomalous = np.zeros(h, dtype=bool)
    fault_col = [""] * h
    active: list[FaultInjection] = []
    for t in range(h):
        for f in sched.ends.get(t, ()):
            active.remove(f)
            state = clear(state, f.fault, p)
        for f in sched.starts.get(t, ()):
            active.append(f)
            state = inject(state, f, p)
        illum = illumination_at(t, config)
        demands = Demands(sched.active_tasks(t), p)
        cond = controller_step(state, illum, demands)
        state, vals = plant_step(state, cond, demands, illum)
        values[t] = vals
        conditions.append(cond)
        if active:
            anomalous[t] = True
            fault_col[t] = active[0].fault.id
    if add_noise:
        values += _noise(config, h)
    t0 = to_epoch(parse_timestamp(config.start_time))
    return Telemetry(np.arange(t0, t0 + h, dtype=np.int64), values, conditions, anomalous, fault_col)


def _noise(config: ScenarioConfig, n: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    std = config.channel_noise
    out = np.empty((n, len(std)))
    chunk = 8192
    for a in range(0, n, chunk):
        b = min(n, a + chunk)
        out[a:b] = rng.standard_normal((b - a, len(std)))
    return out * std


def simulate(config: ScenarioConfig) -> Iterator[TelemetryFrame]:
    """Stream of 1 Hz frames, each carrying its ground truth."""
    yield from run(config).frames()


# -------------------------------------------------------- fault-loc windows

_SUNLIT_ONLY = {"SA_PARTIAL_OPEN", "SA_BRANCH_OPEN", "SA_SHORT", "BCR_SHORT", "BCR_OPEN"}


def fault_regime(fault: FaultType, rng: np.random.Generator) -> tuple[float, tuple[int, ...]]:
    """Illumination and task set under which ``fault`` is observable, sampled with ``rng``.

    Array and BCR faults need sunlight, battery open circuit and aging need a
    pack current (eclipse task or sunlit payload burst), and a load open
    circuit needs its own task. Everything else may occur anywhere.
    """
    fid = fault.id
    any_task = lambda: (() if rng.random() < 0.25 else (int(rng.integers(1, N_LOADS + 1)),))
    if fid in _SUNLIT_ONLY:
        return 1.0, any_task()
    if fid in ("BAT_OPEN", "BAT_AGING"):
        if rng.random() < 0.5:
            return 0.0, (int(rng.integers(1, N_LOADS + 1)),)
        return 1.0, (3,)
    illum = 1.0 if rng.random() < 0.5 else 0.0
    if fid.startswith("LOAD") and fid.endswith("_OPEN"):
        return illum, (int(fid[4]),)
    return illum, any_task()


def _equilibrium_temps(params: SimParams, soc: float, illumination: float, tasks: tuple[int, ...]
                       ) -> np.ndarray:
    state = PowerState.initial(params, soc)
    demands = Demands(tasks, params)
    state, _ = plant_step(state, controller_step(state, illumination, demands), demands, illumination)
    return np.array(state.temps)


def fault_window(fault: FaultType, rng: np.random.Generator, params: SimParams = DEFAULT_PARAMS,
                 window_s: int = 64, warmup_s: int = 8, noise: Optional[np.ndarray] = None,
                 severity: Optional[float] = None, max_settle_s: float = 2400.0
                 ) -> tuple[np.ndarray, WorkCondition]:
    """One fully faulty window of ``window_s`` seconds from a randomized operating point.

    Temperatures start part-way between the equilibria of the other and the
    current illumination, as if the last eclipse transition happened
    U(0, ``max_settle_s``) seconds earlier, so the windows carry the thermal
    lag seen along a real orbit.
    """
    illum, tasks = fault_regime(fault, rng)
    soc = float(rng.uniform(0.8, 1.0))
    sev = float(rng.uniform(0.6, 1.0)) if severity is None else severity
    settle = float(rng.uniform(0.0, max_settle_s))
    here = _equilibrium_temps(params, soc, illum, tasks)
    there = _equilibrium_temps(params, soc, 1.0 - illum, ())
    frac = 1.0 - np.exp(-settle / np.array(TEMP_TAUS))
    state = replace(PowerState.initial(params, soc), temps=tuple(there + (here - there) * frac))
    demands = Demands(tasks, params)
    for _ in range(warmup_s):
        cond = controller_step(state, illum, demands)
        state, _ = plant_step(state, cond, demands, illum)
    state = inject(state, FaultInjection(fault, 0, window_s, sev), params)
    rows = np.empty((window_s, len(default_catalog())))
    cond = state.mode
    for t in range(window_s):
        cond = controller_step(state, illum, demands)
        state, rows[t] = plant_step(state, cond, demands, illum)
    std = noise if noise is not None else 0.005 * default_catalog().widths
    rows += rng.standard_normal(rows.shape) * std
    return rows, cond


def fl_windows(config: ScenarioConfig, faults: Sequence[FaultType] = FAULT_CATALOG,
               per_class: Optional[int] = None) -> Telemetry:
    """Windowed fault-localization segments, ``per_class`` per fault, labeled with the fault id."""
    per_class = config.fl_windows_per_class if per_class is None else per_class
    n = config.fl_window_s
    parts, labels, conds, wids = [], [], [], []
    t0 = to_epoch(parse_timestamp(config.start_time))
    times = []
    wid = 0
    for ci, fault in enumerate(faults):
        for j in range(per_class):
            rng = np.random.default_rng([config.seed, ci, j])
            rows, cond = fault_window(fault, rng, config.params, n, noise=config.channel_noise)
            parts.append(rows)
            labels += [fault.id] * n
            conds += [cond] * n
            wids.append(np.full(n, wid))
            times.append(np.arange(t0, t0 + n))
            t0 += n
            wid += 1
    if not parts:
        return Telemetry(np.zeros(0, np.int64), np.zeros((0, len(default_catalog()))), [], np.zeros(0, bool), [],
                         np.zeros(0, np.int64))
    return Telemetry(np.concatenate(times), np.vstack(parts), conds, np.ones(len(labels), bool), labels,
                     np.concatenate(wids))


# ------------------------------------------------------------------ CSV I/O

LABEL_COLUMNS = ("condition", "anomalous", "fault")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def write_csv(tel: Telemetry, path: str | Path, labels: Sequence[str] = LABEL_COLUMNS) -> int:
    """Write ``tel`` with header ``timestamp,<33 ids>,<labels>``; returns the data row count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    labels = list(labels)
    if "window" in labels and tel.window_ids is None:
        raise ValueError("window column requested but telemetry has no window ids")
    header = ["timestamp", *tel.catalog.ids, *labels]
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(tel)):
            row = [epoch_to_text(tel.times[i])]
            row += [_fmt(v) for v in tel.values[i]]
            for col in labels:
                if col == "condition":
                    row.append(tel.conditions[i].code)
                elif col == "anomalous":
                    row.append("1" if tel.anomalous[i] else "0")
                elif col == "fault":
                    row.append(tel.faults[i])
                elif col == "window":
                    row.append(str(int(tel.window_ids[i])))
                else:
                    raise ValueError(f"unknown label column {col!r}")
            fh.write(",".join(row) + "\n")
    return len(tel)


def read_csv(path: str | Path) -> Telemetry:
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    ids = default_catalog().ids
    if tuple(header[1:1 + len(ids)]) != ids:
        raise ValueError(f"{path}: header does not match the sensor catalog")
    extra = header[1 + len(ids):]
    times = np.array([to_epoch(parse_timestamp(r[0])) for r in rows], dtype=np.int64)
    values = np.array([[float(x) for x in r[1:1 + len(ids)]] for r in rows]).reshape(len(rows), len(ids))
    cols = {name: [r[1 + len(ids) + j] for r in rows] for j, name in enumerate(extra)}
    conds = [WorkCondition.from_code(c) for c in cols["condition"]] if "condition" in cols else None
    anomalous = np.array([c == "1" for c in cols["anomalous"]], dtype=bool) if "anomalous" in cols else None
    faults = cols.get("fault")
    wids = np.array([int(w) for w in cols["window"]], dtype=np.int64) if "window" in cols else None
    return Telemetry(times, values, conds, anomalous, faults, wids)


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class DatasetFile:
    path: str
    rows: int
    sha256: str


@dataclass
class DatasetManifest:
    kind: str
    files: list[DatasetFile] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "files": [vars(f) for f in self.files]}


def _record(manifest: DatasetManifest, path: Path, rows: int) -> None:
    manifest.files.append(DatasetFile(str(path), rows, sha256_file(path)))


def generate_dataset(config: ScenarioConfig, kind: str, out_dir: str | Path) -> DatasetManifest:
    """Write the CSV files of one sub-dataset kind (MR, AD, FL or FR) into ``out_dir``."""
    kind = kind.upper()
    if kind not in DATASET_KINDS:
        raise ConfigError(f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    manifest = DatasetManifest(kind)
    try:
        if kind == "MR":
            tel = run(config)
            path = out / "MR.csv"
            _record(manifest, path, write_csv(tel, path, ("condition",)))
        elif kind == "AD":
            n_train = config.ad_train_orbits if config.ad_train_orbits is not None else max(1, config.n_orbits // 2)
            if not 0 < n_train < config.n_orbits:
                raise ConfigError("ad_train_orbits must leave at least one test orbit")
            split = n_train * config.orbit_period_s
            if any(f.start < split for f in config.fault_schedule):
                raise ConfigError(f"AD training portion [0, {split}) must be fault-free")
            tel = run(config)
            for name, part in (("AD_Train.csv", tel[:split]), ("AD_Test.csv", tel[split:])):
                _record(manifest, out / name, write_csv(part, out / name, ("anomalous", "fault")))
        elif kind == "FL":
            tel = fl_windows(config)
            path = out / "FL.csv"
            _record(manifest, path, write_csv(tel, path, ("condition", "window", "fault")))
        else:
            for n in FR_ORBIT_COUNTS:
                cfg = replace(config, n_orbits=n, task_schedule=(), fault_schedule=(), seed=config.seed + n)
                path = out / f"FR_{n}orbits.csv"
                _record(manifest, path, write_csv(run(cfg), path, ()))
    except OSError as exc:
        raise OSError(f"failed writing dataset under {out}: {exc}") from exc
    return manifest
