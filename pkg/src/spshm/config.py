"""INI run configuration with one section per module.

Every key is optional; omitted keys take the defaults below. Unknown keys
are rejected so typos do not silently fall back to defaults. Keys in
``[ad]`` other than ``model``, ``quantile``, ``split`` and ``min_event_s``
are passed to the forecasting model as hyperparameters.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .ad import DEFAULT_QUANTILE, DEFAULT_REGISTRY, DEFAULT_SPLIT
from .sim import ConfigError, ScenarioConfig

DEFAULT_CONFIG_TEXT = """\
[sim]
# scenario used by `loop`: battery_open or fault_free
scenario = battery_open
seed = 7
orbit_period_s = 5700
eclipse_fraction = 0.35
n_orbits = 4
noise_scale = 0.005
start_time = 2024-10-18 00:00:00
initial_soc = 1.0
fl_windows_per_class = 120

[ad]
model = SeasonalNaive
quantile = 0.995
split = 0.8
# the loop only diagnoses anomaly intervals at least this many seconds long
min_event_s = 10

[fl]
# windows per fault class when the loop trains its classifier inline
train_windows_per_class = 30
window = 64
top = 3

[mdm]
k = 3
# corpus directory with manifest.json; empty means the bundled demo corpus
corpus =
"""

_SIM_KEYS = {
    "seed": int, "orbit_period_s": int, "eclipse_fraction": float, "n_orbits": int, "noise_scale": float,
    "start_time": str, "initial_soc": float, "ad_train_orbits": int, "fl_windows_per_class": int,
}
SCENARIOS = ("battery_open", "fault_free")


@dataclass(frozen=True)
class ADSettings:
    model: str = "SeasonalNaive"
    quantile: float = DEFAULT_QUANTILE
    split: float = DEFAULT_SPLIT
    min_event_s: int = 10
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FLSettings:
    train_windows_per_class: int = 30
    window: int = 64
    top: int = 3


@dataclass(frozen=True)
class MDMSettings:
    k: int = 3
    corpus: Optional[str] = None


@dataclass(frozen=True)
class RunConfig:
    sim: ScenarioConfig = field(default_factory=ScenarioConfig)
    ad: ADSettings = field(default_factory=ADSettings)
    fl: FLSettings = field(default_factory=FLSettings)
    mdm: MDMSettings = field(default_factory=MDMSettings)
    scenario: str = "battery_open"

    def with_overrides(self, seed: Optional[int] = None, quantile: Optional[float] = None,
                       k: Optional[int] = None, window: Optional[int] = None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, sim=replace(cfg.sim, seed=seed))
        if quantile is not None:
            if not 0.0 < quantile < 1.0:
                raise ConfigError("quantile must lie in (0, 1)")
            cfg = replace(cfg, ad=replace(cfg.ad, quantile=quantile))
        if k is not None:
            if k < 1:
                raise ConfigError("k must be at least 1")
            cfg = replace(cfg, mdm=replace(cfg.mdm, k=k))
        if window is not None:
            if window < 8:
                raise ConfigError("window must be at least 8 samples")
            cfg = replace(cfg, fl=replace(cfg.fl, window=window), sim=replace(cfg.sim, fl_window_s=window))
        return cfg

    def to_dict(self) -> dict:
        sim = {f.name: getattr(self.sim, f.name) for f in fields(self.sim) if f.name in _SIM_KEYS}
        sim["fault_schedule"] = [[f.fault.id, f.start, f.end, f.severity] for f in self.sim.fault_schedule]
        return {"scenario": self.scenario, "sim": sim, "ad": asdict(self.ad), "fl": asdict(self.fl),
                "mdm": asdict(self.mdm)}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _typed(section: str, key: str, raw: str, typ):
    try:
        return typ(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} expects {typ.__name__}, got {raw!r}") from None


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(DEFAULT_CONFIG_TEXT)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown_sections = set(cp.sections()) - {"sim", "ad", "fl", "mdm"}
    if unknown_sections:
        raise ConfigError(f"unknown config section(s) {sorted(unknown_sections)}")

    sim = dict(cp["sim"])
    scenario = sim.pop("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"[sim] scenario must be one of {SCENARIOS}, got {scenario!r}")
    kwargs = {}
    for key, raw in sim.items():
        if key not in _SIM_KEYS:
            raise ConfigError(f"[sim] unknown key {key!r}")
        kwargs[key] = _typed("sim", key, raw, _SIM_KEYS[key])
    sim_cfg = ScenarioConfig(**kwargs)

    ad = dict(cp["ad"])
    model = ad.pop("model")
    try:
        info = DEFAULT_REGISTRY.get(model)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    quantile = _typed("ad", "quantile", ad.pop("quantile"), float)
    split = _typed("ad", "split", ad.pop("split"), float)
    min_event = _typed("ad", "min_event_s", ad.pop("min_event_s"), int)
    if min_event < 1:
        raise ConfigError("[ad] min_event_s must be at least 1")
    schema = info.schema()
    params = {}
    for key, raw in ad.items():
        if key not in schema:
            raise ConfigError(f"[ad] {info.name} has no parameter {key!r}")
        try:
            params[key] = schema[key].validate(_typed("ad", key, raw, schema[key].type))
        except ValueError as exc:
            raise ConfigError(f"[ad] {exc}") from None

    flv = dict(cp["fl"])
    mdmv = dict(cp["mdm"])
    for sec, vals, allowed in (("fl", flv, {"train_windows_per_class", "window", "top"}),
                               ("mdm", mdmv, {"k", "corpus"})):
        extra = set(vals) - allowed
        if extra:
            raise ConfigError(f"[{sec}] unknown key(s) {sorted(extra)}")
    fl_cfg = FLSettings(*(_typed("fl", k, flv[k], int) for k in ("train_windows_per_class", "window", "top")))
    mdm_cfg = MDMSettings(_typed("mdm", "k", mdmv["k"], int), mdmv["corpus"] or None)
    sim_cfg = replace(sim_cfg, fl_window_s=fl_cfg.window)
    return RunConfig(sim_cfg, ADSettings(info.name, quantile, split, min_event, params), fl_cfg, mdm_cfg, scenario)


def load_config(path: Optional[str | Path] = None) -> RunConfig:
    """Defaults when ``path`` is None, else the defaults overlaid with the file."""
    if path is None:
        return parse_config("")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
