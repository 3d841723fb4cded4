"""Fault localization by standardized nearest centroid, plus multiclass metrics.

Each window becomes a 33 x 29 feature vector. Features are z-scored with
training statistics, every fault keeps one centroid per work condition it was
trained in, and a window takes the fault of the closest centroid. The
diagnosis names the three channels whose features stray furthest from a
reference profile.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import FAULT_IDS, FaultType, SensorCatalog, Telemetry, default_catalog, get_fault
from .features import ALL_FEATURES, N_FEATURES, window_features

REJECT_PERCENTILE = 99.0


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class Evidence:
    channel: str
    observation: str
    expectation: str
    deviation: float


@dataclass(frozen=True)
class Diagnosis:
    fault: FaultType
    rationale: tuple[Evidence, ...]
    confidence: float
    distance: float
    rejected: bool = False

    def render(self) -> str:
        basis = "; ".join(f"{e.channel} {e.observation} where {e.expectation} is expected" for e in self.rationale)
        flag = " (below the rejection threshold: the window matches no trained fault well)" if self.rejected else ""
        return (f"The fault type that occurred in this data segment is {self.fault.description}{flag}, "
                f"the analysis basis is: {basis}. Confidence {self.confidence:.3f}.")

    def to_dict(self) -> dict:
        return {
            "fault": self.fault.id,
            "description": self.fault.description,
            "confidence": self.confidence,
            "distance": self.distance,
            "rejected": self.rejected,
            "rationale": [vars(e) for e in self.rationale],
        }


def _window_array(w) -> np.ndarray:
    return w.values if isinstance(w, Telemetry) else np.asarray(w, dtype=float)


def feature_matrix(windows: Sequence) -> np.ndarray:
    return np.vstack([window_features(_window_array(w)).values for w in windows])


def split_windows(tel: Telemetry) -> tuple[list[np.ndarray], list[str]]:
    """Cut a windowed FL stream into per-window arrays and labels."""
    if tel.window_ids is None:
        raise ValueError("telemetry carries no window ids")
    ids = np.asarray(tel.window_ids)
    bounds = np.flatnonzero(np.diff(ids)) + 1
    starts = np.concatenate([[0], bounds])
    ends = np.concatenate([bounds, [len(ids)]])
    labels = [tel.faults[a] if tel.faults is not None else "" for a in starts]
    return [tel.values[a:b] for a, b in zip(starts, ends)], labels


@dataclass
class Classifier:
    classes: tuple[str, ...]
    mean: np.ndarray
    scale: np.ndarray
    centroids: np.ndarray  # (n_groups, n_features) in z units
    group_class: np.ndarray  # class index of each centroid
    group_condition: tuple[str, ...]  # work-condition code of each centroid ("" when pooled)
    reject_distance: float
    reference: np.ndarray  # z-space profile the rationale compares against
    reference_raw: np.ndarray
    catalog: SensorCatalog = field(default_factory=default_catalog)

    def transform(self, feats: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(feats) - self.mean) / self.scale

    def group_distances(self, z: np.ndarray) -> np.ndarray:
        """Euclidean distance of each row of ``z`` to every centroid, divided by sqrt(dimension)."""
        z = np.atleast_2d(z)
        d2 = (z ** 2).sum(1)[:, None] - 2 * z @ self.centroids.T + (self.centroids ** 2).sum(1)[None, :]
        return np.sqrt(np.maximum(d2, 0.0) / z.shape[1])

    def distances(self, z: np.ndarray) -> np.ndarray:
        """Distance of each row to each class: the nearest of that class's centroids."""
        g = self.group_distances(z)
        out = np.full((g.shape[0], len(self.classes)), np.inf)
        for k in range(len(self.classes)):
            out[:, k] = g[:, self.group_class == k].min(axis=1)
        return out

    def predict_features(self, feats: np.ndarray) -> list[str]:
        d = self.distances(self.transform(feats))
        return [self.classes[i] for i in np.argmin(d, axis=1)]

    def predict(self, windows: Sequence) -> list[str]:
        return self.predict_features(feature_matrix(windows))


def train_classifier(windows: Sequence, labels: Sequence[str], classes: Optional[Sequence[str]] = None,
                     reference: Optional[Sequence] = None, conditions: Optional[Sequence[str]] = None
                     ) -> Classifier:
    """Fit the standardized nearest-centroid classifier.

    ``classes`` defaults to the full fault catalog; every listed class needs
    at least one window. With ``conditions`` (one work-condition code per
    window) each class keeps one centroid per condition it was seen in, and
    features are scaled by the pooled within-group standard deviation, so a
    fault observed in several regimes is not averaged into one blurred
    profile. ``reference`` windows (fault-free) define the normal profile for
    the rationale; without them the training mean is used.
    """
    labels = [get_fault(x).id if _is_fault(x) else str(x) for x in labels]
    classes = tuple(FAULT_IDS if classes is None else (get_fault(c).id if _is_fault(c) else c for c in classes))
    if len(windows) != len(labels):
        raise TrainingError("windows and labels differ in length")
    if conditions is not None and len(conditions) != len(labels):
        raise TrainingError("conditions and labels differ in length")
    missing = [c for c in classes if c not in set(labels)]
    if missing:
        raise TrainingError(f"no training windows for class(es): {missing}")
    keep = [i for i, y in enumerate(labels) if y in classes]
    feats = feature_matrix([windows[i] for i in keep])
    y = [labels[i] for i in keep]
    cond = [str(conditions[i]) for i in keep] if conditions is not None else [""] * len(keep)
    groups = sorted(set(zip(y, cond)), key=lambda g: (classes.index(g[0]), g[1]))
    member = {g: np.array([(yy, cc) == g for yy, cc in zip(y, cond)]) for g in groups}
    mean = feats.mean(axis=0)
    resid = np.vstack([feats[m] - feats[m].mean(axis=0) for m in member.values()])
    scale = np.sqrt((resid ** 2).sum(axis=0) / max(len(feats) - len(groups), 1))
    if conditions is None:
        scale = feats.std(axis=0)
    scale[~(scale > 0)] = 1.0
    z = (feats - mean) / scale
    centroids = np.vstack([z[member[g]].mean(axis=0) for g in groups])
    group_class = np.array([classes.index(g[0]) for g in groups])
    clf = Classifier(classes, mean, scale, centroids, group_class, tuple(g[1] for g in groups), 0.0,
                     np.zeros(feats.shape[1]), mean.copy())
    d = clf.distances(z)
    own = d[np.arange(len(y)), [classes.index(c) for c in y]]
    clf.reject_distance = float(np.percentile(own, REJECT_PERCENTILE))
    if reference is not None and len(reference):
        ref = feature_matrix(reference).mean(axis=0)
        clf.reference_raw = ref
        clf.reference = clf.transform(ref)[0]
    return clf


def window_conditions(tel: Telemetry) -> list[str]:
    """Work-condition code at the start of each window of a windowed stream."""
    ids = np.asarray(tel.window_ids)
    starts = np.concatenate([[0], np.flatnonzero(np.diff(ids)) + 1])
    return [tel.conditions[a].code if tel.conditions is not None else "" for a in starts]


def _is_fault(x) -> bool:
    try:
        get_fault(x)
        return True
    except KeyError:
        return False


def channel_deviations(clf: Classifier, z: np.ndarray) -> np.ndarray:
    """Root-sum-square z deviation from the reference profile per channel."""
    dev = (np.asarray(z).reshape(-1) - clf.reference).reshape(-1, N_FEATURES)
    return np.sqrt((dev ** 2).sum(axis=1))


def diagnose(clf: Classifier, window, top: int = 3) -> Diagnosis:
    """Nearest-centroid fault with the ``top`` most deviant channels as rationale."""
    x = _window_array(window)
    feats = window_features(x).values
    z = clf.transform(feats)
    d = clf.distances(z)[0]
    order = np.argsort(d, kind="stable")
    d1 = float(d[order[0]])
    d2 = float(d[order[1]]) if len(order) > 1 else np.inf
    confidence = 0.0 if not np.isfinite(d2) or d2 == 0 else 1.0 - d1 / d2
    dev = channel_deviations(clf, z)
    top_ch = np.argsort(-dev, kind="stable")[:top]
    mean_ix = ALL_FEATURES.index("mean")
    std_ix = ALL_FEATURES.index("std")
    evidence = []
    for j in top_ch:
        ch = clf.catalog.channels[j]
        obs = feats[j * N_FEATURES + mean_ix]
        obs_sd = feats[j * N_FEATURES + std_ix]
        exp = clf.reference_raw[j * N_FEATURES + mean_ix]
        evidence.append(Evidence(ch.id, f"averages {obs:.3f} {ch.unit} (std {obs_sd:.3f})",
                                 f"{exp:.3f} {ch.unit}", float(dev[j])))
    return Diagnosis(get_fault(clf.classes[order[0]]) if _is_fault(clf.classes[order[0]]) else
                     FaultType(clf.classes[order[0]], "", clf.classes[order[0]]),
                     tuple(evidence), confidence, d1, d1 > clf.reject_distance)


# ------------------------------------------------------------------ metrics


@dataclass
class MetricsReport:
    labels: tuple[str, ...]
    confusion: np.ndarray
    accuracy: float
    precision: float
    recall: float
    f1: float
    mcc: float
    kappa: float

    def percent(self) -> np.ndarray:
        rows = self.confusion.sum(axis=1, keepdims=True)
        return np.divide(100.0 * self.confusion, rows, out=np.zeros(self.confusion.shape), where=rows > 0)

    def table(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall, "f1": self.f1,
                "mcc": self.mcc, "kappa": self.kappa}

    def render(self) -> str:
        return "\n".join(f"{k}: {v:.4f}" for k, v in self.table().items())


def confusion_matrix(predictions: Sequence[str], labels: Sequence[str], classes: Sequence[str]) -> np.ndarray:
    index = {c: i for i, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for p, y in zip(predictions, labels):
        cm[index[y], index[p]] += 1
    return cm


def metrics_from_confusion(cm: np.ndarray, labels: Sequence[str] | None = None) -> MetricsReport:
    """Macro precision/recall/F1 over classes with support or predictions, Gorodkin MCC, Cohen's kappa.

    Rows are true classes, columns predictions.
    """
    cm = np.asarray(cm, dtype=np.int64)
    labels = tuple(labels) if labels is not None else tuple(str(i) for i in range(len(cm)))
    n = int(cm.sum())
    if n == 0:
        raise ValueError("cannot compute metrics on an empty confusion matrix")
    tp = np.diag(cm).astype(float)
    support = cm.sum(axis=1).astype(float)
    predicted = cm.sum(axis=0).astype(float)
    present = (support > 0) | (predicted > 0)
    prec = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    rec = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    f1 = np.divide(2 * prec * rec, prec + rec, out=np.zeros_like(tp), where=(prec + rec) > 0)
    c = tp.sum()
    s = float(n)
    cov_ytyp = c * s - float(support @ predicted)
    cov_ypyp = s * s - float(predicted @ predicted)
    cov_ytyt = s * s - float(support @ support)
    denom = np.sqrt(cov_ytyt * cov_ypyp)
    mcc = cov_ytyp / denom if denom > 0 else 0.0
    po = c / s
    pe = float(support @ predicted) / (s * s)
    kappa = (po - pe) / (1 - pe) if pe != 1 else (1.0 if po == 1 else 0.0)
    return MetricsReport(labels, cm, po, float(prec[present].mean()), float(rec[present].mean()),
                         float(f1[present].mean()), float(mcc), float(kappa))


def evaluate(predictions: Sequence[str], labels: Sequence[str], classes: Optional[Sequence[str]] = None
             ) -> MetricsReport:
    if len(predictions) != len(labels):
        raise ValueError(f"predictions ({len(predictions)}) and labels ({len(labels)}) differ in length")
    if len(labels) == 0:
        raise ValueError("cannot evaluate empty inputs")
    if classes is None:
        known = set(FAULT_IDS)
        if set(labels) | set(predictions) <= known:
            classes = FAULT_IDS
        else:
            classes = tuple(sorted(set(labels) | set(predictions)))
    unknown = (set(labels) | set(predictions)) - set(classes)
    if unknown:
        raise ValueError(f"labels outside the class set: {sorted(unknown)}")
    return metrics_from_confusion(confusion_matrix(predictions, labels, classes), classes)


def write_metrics(report: MetricsReport, out_dir) -> list[str]:
    """Count and row-percentage confusion matrices plus the metric table, as CSV files."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, mat, fmt in (("confusion_counts.csv", report.confusion, "{:d}"),
                           ("confusion_percent.csv", report.percent(), "{:.2f}")):
        p = out / name
        lines = ["true\\pred," + ",".join(report.labels)]
        for lab, row in zip(report.labels, mat):
            lines.append(lab + "," + ",".join(fmt.format(int(v) if fmt == "{:d}" else v) for v in row))
        p.write_text("\n".join(lines) + "\n", encoding="utf-8")
        paths.append(str(p))
    p = out / "metrics.csv"
    p.write_text("metric,value\n" + "".join(f"{k},{v:.12g}\n" for k, v in report.table().items()), encoding="utf-8")
    paths.append(str(p))
    return paths
