"""Work-condition recognition as a traced seven-step decision tree.

Steps 1, 2, 4 and 6 threshold window means; step 3 compares the task load's
power with the array power; step 5 looks at the battery voltage rise (last
minus first sample, averaged over packs); step 7 checks every channel mean
against its catalog range. The recognizer never looks at ground truth.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    N_LOADS,
    N_PACKS,
    Illumination,
    Mode,
    SensorCatalog,
    Telemetry,
    TelemetryFrame,
    WorkCondition,
    default_catalog,
    pack_display_name,
)

SA_THRESHOLD_V = 1.0
LOAD_THRESHOLD_A = 0.5
CHARGE_THRESHOLD_A = -0.1
RISE_THRESHOLD_V = 0.05
RANGE_TOLERANCE = 0.02  # fraction of range width allowed outside the nominal range in step 7
NOT_APPLICABLE = "n-a"


class RecognitionError(ValueError):
    pass


class MixedRegimeError(RecognitionError):
    pass


@dataclass(frozen=True)
class StepRecord:
    step_no: int
    checked: str
    observed: tuple[tuple[str, float], ...] = ()
    answer: str = NOT_APPLICABLE
    recorded: str = ""
    next: Optional[int] = None

    @property
    def triggered(self) -> bool:
        return self.answer != NOT_APPLICABLE


@dataclass(frozen=True)
class Inspection:
    failed: tuple[str, ...] = ()

    @property
    def normal(self) -> bool:
        return not self.failed

    @property
    def label(self) -> str:
        return "Inspection Normal" if self.normal else "Inspection Failed, Result Unreliable"


@dataclass(frozen=True)
class WorkConditionVerdict:
    condition: WorkCondition
    trace: tuple[StepRecord, ...]
    inspection: Inspection = field(default_factory=Inspection)
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "condition": self.condition.code,
            "label": self.condition.label,
            "inspection": self.inspection.label,
            "failed_channels": list(self.inspection.failed),
            "flags": list(self.flags),
            "trace": [
                {"step": r.step_no, "checked": r.checked, "observed": dict(r.observed), "answer": r.answer,
                 "recorded": r.recorded, "next": r.next}
                for r in self.trace
            ],
        }


# ---------------------------------------------------------------- windows


def _as_telemetry(window) -> Telemetry:
    if isinstance(window, Telemetry):
        return window
    frames = list(window)
    if frames and not isinstance(frames[0], TelemetryFrame):
        raise TypeError("window must be Telemetry or a sequence of TelemetryFrame")
    return Telemetry.from_frames(frames)


def _cols(catalog: SensorCatalog) -> dict:
    ix = catalog.index
    return {
        "sa_v": ix("SA_V"),
        "sa_i": ix("SA_I"),
        "load_i": [ix(f"LOAD{n}_I") for n in range(1, N_LOADS + 1)],
        "load_p": [ix(f"LOAD{n}_P") for n in range(1, N_LOADS + 1)],
        "bat_i": [ix(f"BAT{k}_I") for k in range(1, N_PACKS + 1)],
        "bat_v": [ix(f"BAT{k}_V") for k in range(1, N_PACKS + 1)],
    }


def predicates(values: np.ndarray, catalog: SensorCatalog | None = None) -> np.ndarray:
    """Per-second truth table of the branching predicates.

    Columns: array lit, one column per load above the task threshold, all
    packs charging. Shape ``(n, 2 + N_LOADS)``.
    """
    c = _cols(catalog or default_catalog())
    values = np.atleast_2d(values)
    out = np.empty((len(values), 2 + N_LOADS), dtype=bool)
    out[:, 0] = values[:, c["sa_v"]] > SA_THRESHOLD_V
    out[:, 1:1 + N_LOADS] = values[:, c["load_i"]] > LOAD_THRESHOLD_A
    out[:, 1 + N_LOADS] = np.all(values[:, c["bat_i"]] < CHARGE_THRESHOLD_A, axis=1)
    return out


def _regime_keys(tel: Telemetry) -> list[tuple]:
    """Predicate tuple that decides the tree path (charging only matters when lit and idle)."""
    keys = []
    for row in predicates(tel.values, tel.catalog):
        lit, loads, charging = bool(row[0]), tuple(bool(x) for x in row[1:1 + N_LOADS]), bool(row[-1])
        keys.append((lit, loads, charging if lit and not any(loads) else None))
    return keys


def segment_bounds(window, min_dwell: int = 1) -> list[tuple[int, int]]:
    """Half-open index ranges of maximal single-regime runs.

    Runs shorter than ``min_dwell`` seconds are absorbed into a neighbour so
    threshold chatter under noise does not fragment a window.
    """
    tel = _as_telemetry(window)
    if len(tel) == 0:
        raise RecognitionError("cannot segment an empty window")
    keys = _regime_keys(tel)
    runs: list[list] = []
    start = 0
    for i in range(1, len(keys) + 1):
        if i == len(keys) or keys[i] != keys[start]:
            runs.append([keys[start], start, i])
            start = i
    merged: list[list] = []
    for key, a, b in runs:
        if merged and (b - a < min_dwell or merged[-1][0] == key):
            merged[-1][2] = b
        elif merged and merged[-1][2] - merged[-1][1] < min_dwell:
            merged[-1] = [key, merged[-1][1], b]
        else:
            merged.append([key, a, b])
    # a short first run may have taken a neighbour's key; fuse equal neighbours
    out: list[list] = []
    for seg in merged:
        if out and out[-1][0] == seg[0]:
            out[-1][2] = seg[2]
        else:
            out.append(seg)
    return [(a, b) for _, a, b in out]


def segment(window, min_dwell: int = 1) -> list[Telemetry]:
    tel = _as_telemetry(window)
    return [tel[a:b] for a, b in segment_bounds(tel, min_dwell)]


# ---------------------------------------------------------------- the tree


def _r(x: float) -> float:
    """Round an observation the way it is rendered so traces round-trip."""
    return float(f"{x:.4f}")


def recognize(window, min_dwell: int = 1, range_tolerance: float = RANGE_TOLERANCE,
              check_regime: bool = True) -> WorkConditionVerdict:
    """Walk the decision tree over a single-regime window and return the traced verdict.

    With ``check_regime`` the window must not span a predicate switch (after
    absorbing runs shorter than ``min_dwell``); otherwise the window means
    decide regardless.
    """
    tel = _as_telemetry(window)
    if len(tel) == 0:
        raise RecognitionError("empty window")
    if not np.all(np.isfinite(tel.values)):
        raise RecognitionError("window contains non-finite values")
    if check_regime and len(segment_bounds(tel, min_dwell)) > 1:
        raise MixedRegimeError("window spans a work-condition switch; segment it first")
    c = _cols(tel.catalog)
    v = tel.values
    mean = v.mean(axis=0)
    steps: dict[int, StepRecord] = {}
    flags: list[str] = []

    sa_v = _r(mean[c["sa_v"]])
    lit = sa_v > SA_THRESHOLD_V
    illum = Illumination.SUNLIT if lit else Illumination.SHADOW
    steps[1] = StepRecord(1, "solar array voltage > 1 V", (("SA_V", sa_v),), "yes" if lit else "no",
                          illum.display, 2 if lit else 6)

    load_obs = tuple((f"LOAD{n + 1}_I", _r(mean[j])) for n, j in enumerate(c["load_i"]))
    active = [n + 1 for n, (_, x) in enumerate(load_obs) if x > LOAD_THRESHOLD_A]
    task = active[0] if active else None
    if len(active) > 1:
        flags.append(f"multiple loads above {LOAD_THRESHOLD_A} A: {active}; reporting Load {task}")
    task_label = f"Task {task}" if task else "No Task"

    if lit:
        steps[2] = StepRecord(2, "any load current > 0.5 A", load_obs, "yes" if task else "no", task_label,
                              3 if task else 4)
        if task:
            load_p = _r(mean[c["load_p"][task - 1]])
            sa_p = _r(float(np.mean(v[:, c["sa_v"]] * v[:, c["sa_i"]])))
            joint = load_p > sa_p
            mode = Mode.JOINT if joint else Mode.SHUNT
            cond = WorkCondition(mode, illum, task)
            steps[3] = StepRecord(3, f"Load {task} power > solar array power",
                                  ((f"LOAD{task}_P", load_p), ("SA_P", sa_p)), "yes" if joint else "no", cond.label, 7)
        else:
            bat_obs = tuple((f"BAT{k + 1}_I", _r(mean[j])) for k, j in enumerate(c["bat_i"]))
            charging = all(x < CHARGE_THRESHOLD_A for _, x in bat_obs)
            if not charging:
                cond = WorkCondition(Mode.TRICKLE, illum)
                steps[4] = StepRecord(4, "every battery pack current < -0.1 A", bat_obs, "no", cond.label, 7)
            else:
                steps[4] = StepRecord(4, "every battery pack current < -0.1 A", bat_obs, "yes", "", 5)
                rise = _r(float(np.mean(v[-1, c["bat_v"]] - v[0, c["bat_v"]])))
                lo = _r(float(v[:, c["bat_v"]].min()))
                hi = _r(float(v[:, c["bat_v"]].max()))
                cc = rise > RISE_THRESHOLD_V
                cond = WorkCondition(Mode.CC if cc else Mode.CV, illum)
                steps[5] = StepRecord(5, "battery pack voltage rise > 0.05 V",
                                      (("BAT_V_RISE", rise), ("BAT_V_MIN", lo), ("BAT_V_MAX", hi)),
                                      "yes" if cc else "no", cond.label, 7)
    else:
        mode = Mode.DISCHARGE if task else Mode.IDLE
        cond = WorkCondition(mode, illum, task)
        steps[6] = StepRecord(6, "any load current > 0.5 A", load_obs, "yes" if task else "no", cond.label, 7)

    failed = []
    for j, ch in enumerate(tel.catalog.channels):
        tol = range_tolerance * ch.width
        if not (ch.low - tol <= mean[j] <= ch.high + tol):
            failed.append(ch.id)
    inspection = Inspection(tuple(failed))
    failed_obs = tuple((cid, _r(mean[tel.catalog.index(cid)])) for cid in failed)
    steps[7] = StepRecord(7, f"channel means within nominal ranges for {cond.label}", failed_obs,
                          "yes" if inspection.normal else "no", inspection.label, None)

    trace = tuple(steps.get(k, StepRecord(k, "")) for k in range(1, 8))
    return WorkConditionVerdict(cond, trace, inspection, tuple(flags))


def condition_from_trace(trace: Sequence[StepRecord]) -> WorkCondition:
    """Recover the condition from the recorded labels alone."""
    for rec in reversed(trace):
        if rec.triggered and rec.recorded.startswith("["):
            return WorkCondition.from_label(rec.recorded)
    raise RecognitionError("trace records no work condition")


# --------------------------------------------------------------- rendering

_OBS_RE = re.compile(r"([A-Za-z0-9_]+)=(-?\d+\.\d{4})")
_LINE_RE = re.compile(
    r"^Step (\d): Check (.*?); observed (.*?); answer (yes|no); record (.*?); (?:move to Step (\d)|stop);$"
)
_IDLE_RE = re.compile(r"^Step (\d): Not triggered;$")


def render_trace(verdict: WorkConditionVerdict) -> str:
    """Plain-text step listing followed by the summary line."""
    lines = []
    for r in verdict.trace:
        if not r.triggered:
            lines.append(f"Step {r.step_no}: Not triggered;")
            continue
        obs = ", ".join(f"{k}={v:.4f}" for k, v in r.observed) or "none"
        tail = f"move to Step {r.next}" if r.next is not None else "stop"
        lines.append(f"Step {r.step_no}: Check {r.checked}; observed {obs}; answer {r.answer}; "
                     f"record {r.recorded or 'nothing'}; {tail};")
    if verdict.flags:
        lines.append("Note: " + "; ".join(verdict.flags))
    lines.append(f"In summary, the current work condition of the spacecraft is: {verdict.condition.label}.")
    return "\n".join(lines)


def parse_trace(text: str) -> tuple[StepRecord, ...]:
    """Inverse of :func:`render_trace` for the step lines."""
    records = []
    for line in text.splitlines():
        m = _IDLE_RE.match(line)
        if m:
            records.append(StepRecord(int(m.group(1)), ""))
            continue
        m = _LINE_RE.match(line)
        if not m:
            continue
        obs_text = m.group(3)
        observed = tuple((k, float(v)) for k, v in _OBS_RE.findall(obs_text)) if obs_text != "none" else ()
        recorded = "" if m.group(5) == "nothing" else m.group(5)
        records.append(StepRecord(int(m.group(1)), m.group(2), observed, m.group(4), recorded,
                                  int(m.group(6)) if m.group(6) else None))
    return tuple(records)


def describe_packs(verdict: WorkConditionVerdict) -> str:
    """Step-4 pack currents phrased with the display pack numbering used in reports."""
    rec = verdict.trace[3]
    if not rec.triggered:
        return ""
    parts = [f"{pack_display_name(int(k[3]) - 1)}: {v:.3f} A" for k, v in rec.observed]
    return "; ".join(parts)


def recognize_all(window, min_dwell: int = 5) -> list[tuple[int, int, WorkConditionVerdict]]:
    """Segment a long window and recognize each stage; returns (start, end, verdict) triples."""
    tel = _as_telemetry(window)
    return [(a, b, recognize(tel[a:b], check_regime=False)) for a, b in segment_bounds(tel, min_dwell)]
