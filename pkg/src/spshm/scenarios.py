"""Seeded scenario builders shared by the CLI, the loop and the test suite."""

from __future__ import annotations

from dataclasses import replace
from typing import Callable, Optional

import numpy as np

from .core import FAULT_CATALOG, FaultType, Mode, Telemetry, WorkCondition, get_fault
from .sim import FaultInjection, ScenarioConfig, run

RegimeTest = Callable[[WorkCondition], bool]


def _sunlit(c: WorkCondition) -> bool:
    return c.illumination.value == "Sunlit"


def _any(c: WorkCondition) -> bool:
    return True


def _with_task(n: int) -> RegimeTest:
    return lambda c: c.task == n


def _modes(*modes: Mode) -> RegimeTest:
    return lambda c: c.mode in modes


# Operating regimes in which each fault leaves a visible signature.
OBSERVABLE_REGIME: dict[str, RegimeTest] = {
    "SA_PARTIAL_OPEN": _sunlit,
    "SA_BRANCH_OPEN": _sunlit,
    "SA_SHORT": _sunlit,
    "BCR_SHORT": _sunlit,
    "BCR_OPEN": _sunlit,
    "BUS_INSULATION": _any,
    "BUS_OPEN": _any,
    "BUS_SHORT": _any,
    "BAT_OPEN": _modes(Mode.DISCHARGE, Mode.CC),
    "BAT_SHORT": _any,
    "BAT_AGING": _modes(Mode.DISCHARGE, Mode.CC, Mode.CV),
    "LOAD1_OPEN": _with_task(1),
    "LOAD2_OPEN": _with_task(2),
    "LOAD3_OPEN": _with_task(3),
    "LOAD1_SHORT": _any,
    "LOAD2_SHORT": _any,
    "LOAD3_SHORT": _any,
}


def regime_runs(conditions, test: RegimeTest, lo: int = 0, hi: Optional[int] = None) -> list[tuple[int, int]]:
    """Half-open runs within [lo, hi) where ``test`` holds for every second."""
    hi = len(conditions) if hi is None else hi
    runs, start = [], None
    for t in range(lo, hi):
        ok = test(conditions[t])
        if ok and start is None:
            start = t
        elif not ok and start is not None:
            runs.append((start, t))
            start = None
    if start is not None:
        runs.append((start, hi))
    return runs


def ad_scenario(seed: int, fault: Optional[FaultType | str] = None, n_orbits: int = 4, train_orbits: int = 2,
                base: Optional[ScenarioConfig] = None, min_len: int = 60, max_len: int = 600,
                ) -> tuple[ScenarioConfig, FaultInjection]:
    """A scenario whose final orbit carries one fault window placed where the fault is observable.

    Training orbits stay fault-free; the window lies entirely inside one
    regime run of the last orbit.
    """
    rng = np.random.default_rng(seed)
    base = base or ScenarioConfig()
    cfg = replace(base, seed=seed, n_orbits=n_orbits, fault_schedule=(), ad_train_orbits=train_orbits)
    fault = get_fault(fault) if fault is not None else FAULT_CATALOG[int(rng.integers(len(FAULT_CATALOG)))]
    clean = run(cfg, add_noise=False)
    lo = (n_orbits - 1) * cfg.orbit_period_s
    runs = [r for r in regime_runs(clean.conditions, OBSERVABLE_REGIME[fault.id], lo) if r[1] - r[0] >= min_len]
    if not runs:
        raise ValueError(f"no observable regime for {fault.id} in the final orbit")
    a, b = runs[int(rng.integers(len(runs)))]
    length = int(rng.integers(min_len, min(max_len, b - a) + 1))
    start = int(rng.integers(a, b - length + 1))
    inj = FaultInjection(fault, start, start + length, float(rng.uniform(0.7, 1.0)))
    return replace(cfg, fault_schedule=(inj,)), inj


def battery_open_scenario(seed: int = 7, n_orbits: int = 4, base: Optional[ScenarioConfig] = None
                          ) -> tuple[ScenarioConfig, FaultInjection]:
    """Battery pack open circuit during the eclipse Task-2 discharge of the last orbit."""
    base = base or ScenarioConfig()
    cfg = replace(base, seed=seed, n_orbits=n_orbits, fault_schedule=(), ad_train_orbits=n_orbits // 2)
    clean = run(cfg, add_noise=False)
    lo = (n_orbits - 1) * cfg.orbit_period_s
    runs = regime_runs(clean.conditions, _modes(Mode.DISCHARGE), lo)
    a, b = max(runs, key=lambda r: r[1] - r[0])
    start = a + (b - a) // 4
    end = start + min(600, (b - a) // 2)
    inj = FaultInjection(get_fault("BAT_OPEN"), start, end, 1.0)
    return replace(cfg, fault_schedule=(inj,)), inj


def condition_windows(tel: Telemetry, n_windows: int, seed: int = 0, min_len: int = 200,
                      lengths: tuple[int, int] = (200, 600)) -> list[tuple[int, int, WorkCondition]]:
    """Sub-windows lying inside single ground-truth condition runs, cycling over the conditions present.

    A CC window needs about 200 s before the pack voltage rise clears the
    step-5 threshold, so runs shorter than ``min_len`` seconds are skipped.
    """
    rng = np.random.default_rng(seed)
    runs: dict[WorkCondition, list[tuple[int, int]]] = {}
    start = 0
    conds = tel.conditions
    for t in range(1, len(conds) + 1):
        if t == len(conds) or conds[t] != conds[start]:
            if t - start >= min_len:
                runs.setdefault(conds[start], []).append((start, t))
            start = t
    keys = sorted(runs, key=lambda c: c.code)
    out = []
    for i in range(n_windows):
        cond = keys[i % len(keys)]
        a, b = runs[cond][int(rng.integers(len(runs[cond])))]
        length = int(rng.integers(min(lengths[0], b - a), min(lengths[1], b - a) + 1))
        s = int(rng.integers(a, b - length + 1))
        out.append((s, s + length, cond))
    return out


def wcr_closed_loop_config(seed: int = 0) -> ScenarioConfig:
    """Noise-free orbits whose task pattern visits every leaf condition.

    Orbit 1 runs the default pattern, orbit 2 swaps the Load-1 and Load-3
    slots and puts Load 3 in eclipse, orbit 3 uses Load 1 in eclipse, so each
    task appears in shunt, joint or discharge as its power allows.
    """
    from .sim import TaskWindow

    period, frac = 5700, 0.35
    cfg = ScenarioConfig(seed=seed, orbit_period_s=period, eclipse_fraction=frac, n_orbits=3, orbit_tasks=())
    s = cfg.sunlit_s
    e = cfg.eclipse_s
    tasks = []
    for k, (t_a, t_b, t_e) in enumerate(((1, 3, 2), (3, 2, 3), (2, 1, 1))):
        off = k * period
        tasks += [
            TaskWindow(t_a, off + int(0.73 * s), off + int(0.81 * s)),
            TaskWindow(t_b, off + int(0.86 * s), off + int(0.94 * s)),
            TaskWindow(t_e, off + s + int(0.1 * e), off + s + int(0.8 * e)),
        ]
    return replace(cfg, task_schedule=tuple(tasks))
