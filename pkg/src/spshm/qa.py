"""Render fault-localization windows as question/answer text files.

Each file holds an instruction, a description of the system, the raw sensor
series, the 16 time-domain and 13 frequency-domain features of every sensor,
sign conventions, and the required answer format. When the window carries a
fault label, the reference answer follows.

Raw values are printed with six significant digits, the precision of the
dataset CSVs, so a window read from CSV round-trips exactly. Features are
printed with ``repr`` so the text parses back to the extractor's floats.
"""

from __future__ import annotations

import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import FAULT_CATALOG, N_LOADS, N_PACKS, SensorCatalog, Telemetry, default_catalog, get_fault
from .features import FREQ_DESCRIPTIONS, TIME_FEATURES, freq_features_matrix, time_features_matrix

TIME_LABELS = {
    "mean": "mean", "abs_mean": "absolute mean", "variance": "variance", "std": "standard deviation",
    "max": "maximum", "min": "minimum", "rms": "root mean square", "sqrt_amplitude": "square root amplitude",
    "peak": "peak", "peak_to_peak": "peak-to-peak value", "crest_factor": "crest factor",
    "waveform_index": "waveform index", "impulse_factor": "impulse factor", "clearance_factor": "clearance factor",
    "skewness": "skewness", "kurtosis": "kurtosis",
}

ANSWER_TEMPLATE = "The fault type that occurred in this data segment is {fault}, the analysis basis is <basis>."


class EmptyDatasetWarning(UserWarning):
    pass


def _raw(v: float) -> str:
    return f"{v:.6g}"


def _feat(v: float) -> str:
    return repr(float(v))


def render_qa(values: np.ndarray, catalog: Optional[SensorCatalog] = None, fault: Optional[str] = None,
              candidates: Sequence[str] = tuple(f.description for f in FAULT_CATALOG)) -> str:
    """One window of shape ``(N, channels)`` as question text, with the answer when ``fault`` is known."""
    catalog = catalog or default_catalog()
    x = np.asarray(values, dtype=float)
    if x.ndim != 2 or x.shape[1] != len(catalog):
        raise ValueError(f"window must have shape (N, {len(catalog)}), got {x.shape}")
    tf = time_features_matrix(x).values
    ff = freq_features_matrix(x).values
    lines = [
        f"### Instruction: Identify the fault present in the data below. Candidate fault types: "
        f"[{', '.join(candidates)}].",
        "",
        f"### Description: Telemetry from a spacecraft power system with a solar array (SA), "
        f"{N_PACKS} battery packs, {N_LOADS} loads, a battery charge regulator (BCR), a bus, a shunt "
        f"regulator (SR), a battery discharge regulator (BDR) and a power distribution module (PDM), "
        f"sampled once per second.",
        "",
        "### Data:",
        "",
        "Raw series per sensor (one element per second):",
        "",
    ]
    for j, ch in enumerate(catalog.channels):
        name = ch.description or ch.id
        lines.append(f"{ch.id} ({name}, {ch.unit}): {','.join(_raw(v) for v in x[:, j])}")
    lines += ["", "Time-domain features (one element per sensor, in the order above):", ""]
    for i, key in enumerate(TIME_FEATURES):
        lines.append(f"Time-domain {TIME_LABELS[key]}: {','.join(_feat(v) for v in tf[i])}")
    lines += ["", "Frequency-domain features (one element per sensor, in the order above):", ""]
    for i, desc in enumerate(FREQ_DESCRIPTIONS):
        lines.append(f"Frequency-domain {desc}: {','.join(_feat(v) for v in ff[i])}")
    lines += [
        "",
        "### Additional information: 1. A negative battery pack current means the pack is charging and a "
        "positive one means it is discharging; 2. Load voltages are present only while the load's task is "
        "switched on; 3. Temperatures follow their sources with a lag of minutes.",
        "",
        f"### Answer format: {ANSWER_TEMPLATE.format(fault='{}')}",
    ]
    if fault is not None:
        lines += ["", f"### Answer: The fault type that occurred in this data segment is "
                      f"{get_fault(fault).description}."]
    return "\n".join(lines) + "\n"


def export_qa(tel: Telemetry, out_dir: str | Path) -> list[Path]:
    """Write one ``qa_<window>.txt`` per window of a windowed FL stream; warns and writes nothing if empty."""
    out = Path(out_dir)
    if len(tel) == 0:
        warnings.warn("FL dataset is empty; no Q&A files written", EmptyDatasetWarning, stacklevel=2)
        return []
    if tel.window_ids is None:
        raise ValueError("telemetry carries no window ids")
    out.mkdir(parents=True, exist_ok=True)
    ids = np.asarray(tel.window_ids)
    bounds = np.flatnonzero(np.diff(ids)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [len(ids)]])
    paths = []
    for a, b in zip(starts, ends):
        fault = tel.faults[a] if tel.faults is not None and tel.faults[a] else None
        p = out / f"qa_{int(ids[a]):05d}.txt"
        p.write_text(render_qa(tel.values[a:b], tel.catalog, fault), encoding="utf-8")
        paths.append(p)
    return paths
