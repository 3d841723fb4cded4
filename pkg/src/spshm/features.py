"""Time- and frequency-domain window features (16 + 13 per channel).

All extractors work column-wise on an ``(N, C)`` array so a whole 33-channel
window is processed in one pass. The single-series helpers wrap the same code.

Ratio features whose denominator is exactly zero evaluate to 0 and set the
degeneracy flag instead of producing inf or nan.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

TIME_FEATURES = (
    "mean", "abs_mean", "variance", "std", "max", "min", "rms", "sqrt_amplitude",
    "peak", "peak_to_peak", "crest_factor", "waveform_index", "impulse_factor",
    "clearance_factor", "skewness", "kurtosis",
)
FREQ_FEATURES = tuple(f"F{k}" for k in range(12, 25))
FREQ_DESCRIPTIONS = (
    "spectral mean", "spectral root mean square", "spectral skewness", "spectral kurtosis",
    "spectral centroid", "frequency root variance", "root mean square frequency", "mean frequency",
    "frequency stability coefficient", "coefficient of variation", "frequency skewness",
    "frequency kurtosis", "standard deviation frequency",
)
ALL_FEATURES = TIME_FEATURES + FREQ_FEATURES
N_FEATURES = len(ALL_FEATURES)


class FeatureResult(NamedTuple):
    values: np.ndarray
    degenerate: np.ndarray | bool


def _safe_div(num: np.ndarray, den: np.ndarray, flag: np.ndarray) -> np.ndarray:
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    zero = den == 0
    flag |= zero
    return np.divide(num, den, out=np.zeros(np.broadcast(num, den).shape), where=~zero)


def _columns(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, 1) if x.ndim == 1 else x


def time_features_matrix(x) -> FeatureResult:
    """Sixteen time-domain features per column; ``values`` has shape ``(16, C)``."""
    x = _columns(x)
    n = x.shape[0]
    if n < 2:
        raise ValueError("time features need at least 2 samples")
    flag = np.zeros(x.shape[1], dtype=bool)
    mean = x.mean(axis=0)
    abs_mean = np.abs(x).mean(axis=0)
    dev = x - mean
    std = np.sqrt((dev ** 2).sum(axis=0) / (n - 1))
    var = std ** 2
    mx, mn = x.max(axis=0), x.min(axis=0)
    rms = np.sqrt((x ** 2).mean(axis=0))
    xr = np.sqrt(np.abs(x)).mean(axis=0) ** 2
    peak = np.abs(x).max(axis=0)
    crest = _safe_div(peak, rms, flag)
    waveform = _safe_div(rms, mean, flag)
    impulse = _safe_div(peak, mean, flag)
    clearance = _safe_div(peak, xr, flag)
    skew = _safe_div((dev ** 3).sum(axis=0), (n - 1) * std ** 3, flag)
    kurt = _safe_div((dev ** 4).sum(axis=0), (n - 1) * std ** 4, flag)
    vals = np.vstack([mean, abs_mean, var, std, mx, mn, rms, xr, peak, mx - mn,
                      crest, waveform, impulse, clearance, skew, kurt])
    return FeatureResult(vals, flag)


def amplitude_spectrum(x) -> tuple[np.ndarray, np.ndarray]:
    """One-sided amplitude spectrum of the mean-removed columns, DC excluded.

    Returns ``(f, s)`` with ``f`` of shape ``(K,)`` in Hz at 1 Hz sampling and
    ``s`` of shape ``(K, C)``, ``K = N // 2``.
    """
    x = _columns(x)
    n = x.shape[0]
    k = n // 2
    spec = np.fft.rfft(x - x.mean(axis=0), axis=0)
    s = np.abs(spec[1:k + 1]) * (2.0 / n)
    if n % 2 == 0:
        s[-1] /= 2.0  # the Nyquist line has no mirrored partner
    f = np.arange(1, k + 1) / n
    return f, s


def freq_features_matrix(x) -> FeatureResult:
    """Thirteen frequency-domain features F12..F24 per column; ``values`` has shape ``(13, C)``."""
    x = _columns(x)
    if x.shape[0] < 4:
        raise ValueError("frequency features need at least 4 samples")
    f, s = amplitude_spectrum(x)
    k = len(f)
    fc = f[:, None]
    flag = np.zeros(x.shape[1], dtype=bool)
    f12 = s.mean(axis=0)
    ds = s - f12
    f13 = np.sqrt((ds ** 2).sum(axis=0) / (k - 1))
    f14 = _safe_div((ds ** 3).sum(axis=0), (k - 1) * f13 ** 3, flag)
    f15 = _safe_div((ds ** 4).sum(axis=0), (k - 1) * f13 ** 4, flag)
    s_sum = s.sum(axis=0)
    f2s = (fc ** 2 * s).sum(axis=0)
    f4s = (fc ** 4 * s).sum(axis=0)
    f16 = _safe_div((fc * s).sum(axis=0), s_sum, flag)
    df = fc - f16
    f17 = np.sqrt((df ** 2 * s).sum(axis=0) / (k - 1))
    f18 = np.sqrt(_safe_div(f2s, s_sum, flag))
    f19 = np.sqrt(_safe_div(f4s, f2s, flag))
    f20 = _safe_div(f2s, np.sqrt(s_sum * f4s), flag)
    f21 = _safe_div(f17, f16, flag)
    f22 = _safe_div((df ** 3 * s).sum(axis=0), (k - 1) * f17 ** 3, flag)
    f23 = _safe_div((df ** 4 * s).sum(axis=0), (k - 1) * f17 ** 4, flag)
    # the printed exponent 1/2 on a signed deviation is read as |f_k - F16|^(1/2)
    f24 = _safe_div((np.sqrt(np.abs(df)) * s).sum(axis=0), (k - 1) * np.sqrt(f17), flag)
    vals = np.vstack([f12, f13, f14, f15, f16, f17, f18, f19, f20, f21, f22, f23, f24])
    return FeatureResult(vals, flag)


def time_features(series: Sequence[float]) -> FeatureResult:
    r = time_features_matrix(np.asarray(series, dtype=float))
    return FeatureResult(r.values[:, 0], bool(r.degenerate[0]))


def freq_features(series: Sequence[float]) -> FeatureResult:
    r = freq_features_matrix(np.asarray(series, dtype=float))
    return FeatureResult(r.values[:, 0], bool(r.degenerate[0]))


def window_features(window) -> FeatureResult:
    """All 29 features for every channel of a window, channel-major: shape ``(C * 29,)``."""
    x = _columns(window.values if hasattr(window, "values") and not isinstance(window, np.ndarray) else window)
    t = time_features_matrix(x)
    fr = freq_features_matrix(x)
    vals = np.vstack([t.values, fr.values]).T.reshape(-1)
    return FeatureResult(vals, t.degenerate | fr.degenerate)


def feature_names(channel_ids: Sequence[str]) -> list[str]:
    return [f"{c}:{name}" for c in channel_ids for name in ALL_FEATURES]
