"""End-to-end health-management loop over one simulated scenario.

Stages run in order: work-condition recognition on the noise-free twin,
anomaly detection on the noisy telemetry, fault localization of the longest
anomaly interval, and a cited maintenance report for the diagnosed fault.
Only anomaly intervals lasting at least ``min_event_s`` seconds count as
events; isolated threshold crossings from sensor noise are reported but do
not trigger diagnosis. Without events the last two stages are skipped.
"""

from __future__ import annotations

import json
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import ad, fl, mdm, wcr
from .config import RunConfig
from .core import FAULT_CATALOG, Telemetry, epoch_to_text
from .ops import diagnosis_window
from .scenarios import battery_open_scenario
from .sim import FaultInjection, ScenarioConfig, fl_windows, run


@dataclass
class LoopResult:
    config: ScenarioConfig
    injection: Optional[FaultInjection]
    segments: list[tuple[int, int, wcr.WorkConditionVerdict]]
    wcr_agreement: float
    detection: ad.DetectionResult
    diagnosis: Optional[fl.Diagnosis] = None
    diagnosis_rows: Optional[tuple[int, int]] = None
    report: Optional[mdm.MaintenanceReport] = None
    citations: Optional[tuple[int, int, list[str]]] = None
    timings: dict[str, float] = field(default_factory=dict)
    test_start: int = 0
    min_event_s: int = 1

    @property
    def events(self) -> list[ad.AnomalyInterval]:
        return [iv for iv in self.detection.intervals if iv.seconds >= self.min_event_s]

    @property
    def fault_window_hit(self) -> bool:
        """Whether some anomaly interval overlaps the injected fault window."""
        if self.injection is None:
            return False
        t0 = int(self.detection.times[0]) - self.test_start if len(self.detection.times) else 0
        a, b = t0 + self.injection.start, t0 + self.injection.end - 1
        return any(iv.start <= b and iv.end >= a for iv in self.detection.intervals)

    def render(self) -> str:
        lines = ["Health-management loop report", ""]
        inj = self.injection
        lines.append(f"Scenario: seed {self.config.seed}, {self.config.n_orbits} orbits, "
                     + (f"{inj.fault.description} injected over seconds [{inj.start}, {inj.end})" if inj
                        else "no fault injected"))
        lines += ["", f"Work condition recognition ({len(self.segments)} segments, "
                      f"agreement with ground truth {100 * self.wcr_agreement:.2f}%):"]
        times = self.detection.times
        for a, b, v in self.segments:
            lines.append(f"  {epoch_to_text(times[a])} .. {epoch_to_text(times[b - 1])}: {v.condition.label}")
        lines += ["", "Anomaly detection:", self.detection.render(),
                  f"Anomaly events lasting at least {self.min_event_s} s: {len(self.events)}", ""]
        if self.diagnosis is None:
            lines.append("Fault localization: skipped (no anomaly event).")
        else:
            lines += ["Fault localization:", self.diagnosis.render()]
        lines.append("")
        if self.report is None:
            lines.append("Maintenance decision: skipped.")
        else:
            ok, total, _ = self.citations
            lines += [self.report.render(), f"Citations resolvable: {ok}/{total}"]
        lines += ["", "Stage timings (s): " + ", ".join(f"{k} {v:.3f}" for k, v in self.timings.items())]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        inj = self.injection
        return {
            "seed": self.config.seed,
            "injection": None if inj is None else {"fault": inj.fault.id, "start": inj.start, "end": inj.end},
            "wcr": {"agreement": self.wcr_agreement,
                    "segments": [[a, b, v.condition.code] for a, b, v in self.segments]},
            "detection": self.detection.to_dict(),
            "events": [[epoch_to_text(iv.start), epoch_to_text(iv.end)] for iv in self.events],
            "fault_window_hit": self.fault_window_hit,
            "diagnosis": None if self.diagnosis is None else self.diagnosis.to_dict(),
            "diagnosis_rows": None if self.diagnosis_rows is None else list(self.diagnosis_rows),
            "report": None if self.report is None else self.report.to_dict(),
            "citations": None if self.citations is None else
            {"resolvable": self.citations[0], "total": self.citations[1], "unresolved": self.citations[2]},
        }


def build_scenario(cfg: RunConfig) -> tuple[ScenarioConfig, Optional[FaultInjection]]:
    base = cfg.sim
    if cfg.scenario == "battery_open":
        return battery_open_scenario(base.seed, base.n_orbits, base)
    train = base.ad_train_orbits if base.ad_train_orbits is not None else base.n_orbits // 2
    return replace(base, fault_schedule=(), ad_train_orbits=train), None


def segment_agreement(segments, truth: list) -> float:
    """Share of recognized segments whose verdict equals the majority ground-truth condition."""
    if not segments:
        return 1.0
    hits = sum(Counter(truth[a:b]).most_common(1)[0][0] == v.condition for a, b, v in segments)
    return hits / len(segments)


def detector_spec(cfg: RunConfig) -> ad.ForecasterSpec:
    params = dict(cfg.ad.params)
    if cfg.ad.model == "SeasonalNaive":
        params.setdefault("period", cfg.sim.orbit_period_s)
    return ad.ForecasterSpec(cfg.ad.model, params)


def train_fault_classifier(cfg: RunConfig) -> fl.Classifier:
    tel = fl_windows(cfg.sim, FAULT_CATALOG, cfg.fl.train_windows_per_class)
    windows, labels = fl.split_windows(tel)
    return fl.train_classifier(windows, labels, conditions=fl.window_conditions(tel))


def knowledge_base(cfg: RunConfig) -> mdm.KnowledgeBase:
    if cfg.mdm.corpus:
        return mdm.KnowledgeBase().ingest_all(mdm.load_corpus(cfg.mdm.corpus))
    return mdm.demo_knowledge_base()


def run_loop(cfg: RunConfig, classifier: Optional[fl.Classifier] = None,
             kb: Optional[mdm.KnowledgeBase] = None) -> LoopResult:
    timings: dict[str, float] = {}

    def timed(name, fn, *args, **kw):
        t0 = time.perf_counter()
        out = fn(*args, **kw)
        timings[name] = time.perf_counter() - t0
        return out

    scen, inj = timed("scenario", build_scenario, cfg)
    tel: Telemetry = timed("simulate", run, scen)
    split = scen.ad_train_orbits * scen.orbit_period_s
    train, test = tel[:split], tel[split:]

    clean = timed("simulate_clean", run, scen, add_noise=False)[split:]
    segments = timed("recognize", wcr.recognize_all, clean)
    agreement = segment_agreement(segments, clean.conditions)

    det = ad.AnomalyDetector(detector_spec(cfg), cfg.ad.quantile, cfg.ad.split)
    timed("train_detector", det.fit, train)
    detection = timed("detect", det.detect, test)
    result = LoopResult(scen, inj, segments, agreement, detection, timings=timings, test_start=split,
                        min_event_s=cfg.ad.min_event_s)
    if not result.events:
        return result

    clf = classifier if classifier is not None else timed("train_classifier", train_fault_classifier, cfg)
    longest = max(result.events, key=lambda iv: iv.seconds)
    a, b = np.searchsorted(test.times, [longest.start, longest.end])
    rows = diagnosis_window(int(a), int(b) + 1, cfg.fl.window)
    result.diagnosis = timed("diagnose", fl.diagnose, clf, test.values[rows[0]:rows[1]], cfg.fl.top)
    result.diagnosis_rows = rows

    kb = kb if kb is not None else knowledge_base(cfg)
    result.report = timed("advise", mdm.compose_report, result.diagnosis.fault, kb, cfg.mdm.k)
    result.citations = mdm.verify_citations(result.report, kb)
    return result


def write_loop_outputs(result: LoopResult, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    def put(name: str, text: str):
        p = out / name
        p.write_text(text, encoding="utf-8")
        paths.append(p)

    times = result.detection.times
    put("wcr_segments.txt", "".join(f"{epoch_to_text(times[a])},{epoch_to_text(times[b - 1])},"
                                    f"{v.condition.code}\n" for a, b, v in result.segments))
    put("detection.txt", result.detection.render() + "\n")
    put("residuals.csv", "timestamp,residual,flag\n" + "".join(
        f"{t},{r},{f}\n" for t, r, f in result.detection.residual_rows()))
    if result.diagnosis is not None:
        put("diagnosis.txt", result.diagnosis.render() + "\n")
    if result.report is not None:
        put("maintenance_report.txt", result.report.render())
    put("loop_report.txt", result.render())
    put("loop_report.json", json.dumps(result.to_dict(), indent=2) + "\n")
    return paths
