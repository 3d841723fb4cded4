"""Tool registry and keyword command grammar for operator sessions.

A command is ``verb [keyword] [key value | key=value | preposition value]...``.
The verb picks the tool (``list`` and ``describe`` also look at the next
word), prepositions bind common arguments (``for``/``with``/``using`` a model,
``on``/``from`` a data file, ``into`` an output directory), and a small set of
filler words is skipped so that "set batch_size to 64, set patience to 5"
parses the same as "set batch_size 64 patience 5". Parsing never raises:
unknown verbs come back as :class:`Unrecognized` carrying the capability
summary, malformed commands for known verbs as :class:`InvalidCommand`.
"""

from __future__ import annotations

import re
import shlex
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import ad, fl, mdm, wcr
from .ad import DEFAULT_REGISTRY, ForecasterSpec, ModelRegistry, ParamSpec
from .core import FAULT_CATALOG, FaultType, Telemetry, epoch_to_text, get_fault
from .scenarios import battery_open_scenario
from .sim import DATASET_KINDS, ScenarioConfig, fl_windows, generate_dataset, read_csv, run

VERBS = ("list", "describe", "set", "train", "detect", "recognize", "diagnose", "advise", "simulate")

PREPOSITIONS = {"for": "model", "with": "model", "using": "model", "on": "data", "from": "data", "into": "out"}
FILLERS = frozenset({
    "a", "an", "the", "to", "and", "of", "is", "as", "please", "set", "anomalies", "anomaly", "work",
    "condition", "conditions", "data", "dataset", "parameters", "params", "report", "maintenance", "detector",
})

CAPABILITIES = """I am the power-system health-management assistant. I answer these commands:
  list algorithms | list tools | list faults
  describe MODEL | describe tool TOOL
  set PARAM VALUE [PARAM VALUE ...] [for MODEL]
  train [MODEL] [on FILE] [quantile Q] [split S]
  detect [on FILE]
  recognize [on FILE] [start ROW end ROW]
  diagnose [on FILE] [start ROW end ROW]
  advise FAULT [k N]
  simulate KIND [into DIR] [seed N] [orbits N]
FAULT is a catalog id such as LOAD2_OPEN; KIND is one of MR, AD, FL, FR."""


class ToolError(ValueError):
    pass


# --------------------------------------------------------------- protocol


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: dict
    request_id: str = field(default="", compare=False)


@dataclass(frozen=True)
class Unrecognized:
    text: str
    reason: str
    summary: str = CAPABILITIES


@dataclass(frozen=True)
class InvalidCommand:
    text: str
    verb: str
    reason: str


ParseResult = ToolCall | Unrecognized | InvalidCommand


@dataclass(frozen=True)
class ToolOutput:
    text: str = ""
    artifacts: tuple[str, ...] = ()
    data: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ToolResult:
    request_id: str
    status: str  # "ok" or "error"
    text: str = ""
    artifacts: tuple[str, ...] = ()
    data: dict = field(default_factory=dict)
    reason: str = ""
    duration_s: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"


Handler = Callable[..., ToolOutput]


@dataclass(frozen=True)
class ToolDescriptor:
    """A named operation with a typed parameter schema.

    ``positional`` lists the parameters that bare words fill, in order.
    ``open_params`` tools (only ``set_params``) also accept forecaster
    hyperparameters, validated against the model registry. ``required``
    parameters must be present before the call is dispatched.
    """

    name: str
    summary: str
    params: tuple[ParamSpec, ...]
    handler: Handler
    positional: tuple[str, ...] = ()
    open_params: bool = False
    required: tuple[str, ...] = ()

    def __post_init__(self):
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ToolError(f"tool {self.name!r} declares a parameter twice")
        if not set(self.required) <= set(names):
            raise ToolError(f"tool {self.name!r} requires an undeclared parameter")
        for p in self.params:
            if p.default is not None:
                p.validate(p.default)

    def schema(self) -> dict[str, ParamSpec]:
        return {p.name: p for p in self.params}


class ToolRegistry:
    def __init__(self, tools: Sequence[ToolDescriptor] = ()):
        self._tools: dict[str, ToolDescriptor] = {}
        self._frozen = False
        for t in tools:
            self.register(t)

    def register(self, tool: ToolDescriptor) -> "ToolRegistry":
        if self._frozen:
            raise ToolError("registry is frozen")
        if tool.name in self._tools:
            raise ToolError(f"tool {tool.name!r} is already registered")
        self._tools[tool.name] = tool
        return self

    def freeze(self) -> "ToolRegistry":
        self._frozen = True
        return self

    def __contains__(self, name: str) -> bool:
        return name in self._tools

    def __len__(self) -> int:
        return len(self._tools)

    def get(self, name: str) -> ToolDescriptor:
        try:
            return self._tools[name]
        except KeyError:
            raise ToolError(f"unknown tool {name!r}") from None

    def names(self) -> list[str]:
        return list(self._tools)

    def listing(self) -> list[tuple[str, str]]:
        return [(t.name, t.summary) for t in self._tools.values()]


# ------------------------------------------------------------------ parser

_INT_RE = re.compile(r"^[+-]?\d+$")


def _coerce(spec: ParamSpec, raw: str):
    if spec.type is int:
        if _INT_RE.match(raw):
            return spec.validate(int(raw))
        try:
            return spec.validate(float(raw))
        except ValueError:
            raise ValueError(f"{spec.name} expects an integer, got {raw!r}") from None
    if spec.type is float:
        try:
            value = float(raw)
        except ValueError:
            raise ValueError(f"{spec.name} expects a number, got {raw!r}") from None
        return spec.validate(value)
    return spec.validate(raw)


def _model_param_schema(models: ModelRegistry, model: Optional[str]) -> dict[str, ParamSpec]:
    if model is not None:
        return models.get(model).schema()
    merged: dict[str, ParamSpec] = {}
    for name in models.names():
        for k, v in models.get(name).schema().items():
            merged.setdefault(k, v)
    return merged


def _tool_for(verb: str, words: list[str], models: ModelRegistry, tools: ToolRegistry) -> tuple[str, list[str]]:
    """Resolve the tool name for ``verb`` and return the remaining words."""
    low = [w.lower() for w in words]
    if verb == "list":
        if not words:
            raise ValueError("list what? expected algorithms, models, tools or faults")
        target = {"algorithms": "describe_models", "models": "describe_models", "tools": "list_tools",
                  "faults": "list_faults"}.get(low[0])
        if target is None:
            raise ValueError(f"cannot list {words[0]!r}; expected algorithms, models, tools or faults")
        return target, words[1:]
    if verb == "describe":
        if low[:1] == ["tool"]:
            return "describe_tool", ["tool", *words[1:]]
        if low[:1] == ["model"]:
            return "describe_models", words
        if words and words[0] in tools:
            return "describe_tool", ["tool", *words]
        if words and low[0] in {m.lower() for m in models.names()}:
            return "describe_models", ["model", *words]
        raise ValueError(f"nothing called {words[0]!r} to describe" if words else "describe what?")
    return {"set": "set_params"}.get(verb, verb), words


def parse_command(text: str, models: Optional[ModelRegistry] = None, tools: Optional[ToolRegistry] = None,
                  request_id: str = "") -> ParseResult:
    """Map one command line to a :class:`ToolCall`; never raises."""
    models = models or DEFAULT_REGISTRY
    tools = tools or DEFAULT_TOOLS
    try:
        words = shlex.split(text.replace(",", " ").replace(";", " "))
    except ValueError as exc:
        return Unrecognized(text, f"cannot split command: {exc}")
    if not words:
        return Unrecognized(text, "empty command")
    verb = words[0].lower()
    if verb not in VERBS:
        return Unrecognized(text, f"unknown verb {words[0]!r}")
    try:
        name, rest = _tool_for(verb, words[1:], models, tools)
        tool = tools.get(name)
        args = _bind(tool, rest, models)
    except (ValueError, KeyError) as exc:
        reason = exc.args[0] if exc.args else str(exc)
        return InvalidCommand(text, verb, str(reason))
    return ToolCall(tool.name, args, request_id)


def _bind(tool: ToolDescriptor, words: list[str], models: ModelRegistry) -> dict:
    schema = tool.schema()
    raw: dict[str, str] = {}
    positional: list[str] = []

    def put(key: str, value: str):
        if key in raw:
            raise ValueError(f"{key} given twice")
        raw[key] = value

    model_keys = set(_model_param_schema(models, None)) if tool.open_params else set()
    i, n = 0, len(words)
    while i < n:
        w = words[i]
        low = w.lower()
        if "=" in w and not w.startswith("="):
            k, v = w.split("=", 1)
            put(k.lower(), v)
            i += 1
        elif low in PREPOSITIONS and PREPOSITIONS[low] in schema:
            if i + 1 >= n:
                raise ValueError(f"{low!r} needs a value")
            put(PREPOSITIONS[low], words[i + 1])
            i += 2
        elif low in schema or low in model_keys:
            j = i + 1
            while j < n and words[j].lower() in ("to", "=", "is", "as"):
                j += 1
            if j >= n:
                raise ValueError(f"{low} needs a value")
            put(low, words[j])
            i = j + 1
        elif low in FILLERS:
            i += 1
        else:
            positional.append(w)
            i += 1
    slots = [p for p in tool.positional if p not in raw]
    if tool.open_params:
        known = {m.lower() for m in models.names()}
        stray = [w for w in positional if w.lower() not in known]
        if stray:
            raise ValueError(f"unknown parameter {stray[0]!r}")
        slots = [] if "model" in raw else ["model"]
    if len(positional) > len(slots):
        raise ValueError(f"unexpected word(s) {positional[len(slots):]}")
    for slot, w in zip(slots, positional):
        raw[slot] = w

    args: dict = {}
    model = raw.get("model")
    if "model" in schema and model is not None:
        model = models.get(model).name
        args["model"] = model
    for key, value in raw.items():
        if key == "model":
            continue
        if key in schema:
            args[key] = _coerce(schema[key], value)
        elif tool.open_params:
            mschema = _model_param_schema(models, model)
            if key not in mschema:
                raise ValueError(f"unknown parameter {key!r} for {model or 'any model'}; "
                                 f"known: {sorted(mschema)}")
            args[key] = _coerce(mschema[key], value)
        else:
            raise ValueError(f"{tool.name} has no parameter {key!r}; known: {sorted(schema)}")
    if tool.open_params and not set(args) - {"model"}:
        raise ValueError("set needs at least one PARAM VALUE pair")
    missing = [r for r in tool.required if r not in args]
    if missing:
        raise ValueError(f"missing {', '.join(missing)}; usage: {tool.name} "
                         + " ".join(p.name.upper() for p in tool.params if p.name in tool.positional))
    for p in tool.params:
        if p.name not in args and p.default is not None:
            args[p.name] = p.default
    return args


# --------------------------------------------------------------- workspace


@dataclass
class Workspace:
    """Mutable per-session state the tools act on; the registries stay shared and fixed."""

    seed: int = 7
    out_dir: Optional[Path] = None
    models: ModelRegistry = field(default_factory=lambda: DEFAULT_REGISTRY.copy())
    current_model: str = "SeasonalNaive"
    settings: dict = field(default_factory=dict)
    quantile: float = ad.DEFAULT_QUANTILE
    fl_per_class: int = 30
    detector: Optional[ad.AnomalyDetector] = None
    detection: Optional[ad.DetectionResult] = None
    detection_data: Optional[Telemetry] = None
    classifier: Optional[fl.Classifier] = None
    kb: Optional[mdm.KnowledgeBase] = None
    tools: Optional["ToolRegistry"] = None  # the session's registry; the default one when unset
    _scenario: Optional[tuple[Telemetry, Telemetry]] = None

    def path(self, p: str | Path) -> Path:
        p = Path(p)
        return p if p.is_absolute() or self.out_dir is None else Path(self.out_dir) / p

    def default_data(self) -> tuple[Telemetry, Telemetry]:
        """(train, test) of the workspace's seeded battery-open scenario, built once."""
        if self._scenario is None:
            cfg, _ = battery_open_scenario(self.seed)
            tel = run(cfg)
            split = cfg.ad_train_orbits * cfg.orbit_period_s
            self._scenario = (tel[:split], tel[split:])
        return self._scenario

    def load(self, data: Optional[str], part: int) -> Telemetry:
        return self.default_data()[part] if data is None else read_csv(self.path(data))

    def model_params(self, model: str) -> dict:
        return dict(self.settings.get(model, {}))

    def knowledge(self) -> mdm.KnowledgeBase:
        if self.kb is None:
            self.kb = mdm.demo_knowledge_base()
        return self.kb

    def fault_classifier(self) -> fl.Classifier:
        if self.classifier is None:
            tel = fl_windows(ScenarioConfig(seed=self.seed), FAULT_CATALOG, self.fl_per_class)
            windows, labels = fl.split_windows(tel)
            self.classifier = fl.train_classifier(windows, labels, conditions=fl.window_conditions(tel))
        return self.classifier


def _window(tel: Telemetry, start: Optional[int], end: Optional[int]) -> Telemetry:
    a = 0 if start is None else start
    b = len(tel) if end is None else end
    if not 0 <= a < b <= len(tel):
        raise ToolError(f"rows [{a}, {b}) fall outside the {len(tel)} available rows")
    return tel[a:b]


# ----------------------------------------------------------------- handlers


def _describe_models(ws: Workspace, model: Optional[str] = None) -> ToolOutput:
    rows = ws.models.describe()
    if model is not None:
        rows = [r for r in rows if r[0] == ws.models.get(model).name]
    lines = []
    for name, params, defaults, guidance in rows:
        shown = {**defaults, **ws.model_params(name)}
        ps = ", ".join(f"{k}={v}" for k, v in shown.items()) or "no parameters"
        lines.append(f"{name} ({ps}): {guidance}")
    return ToolOutput("\n".join(lines), data={"models": [r[0] for r in rows]})


def _list_tools(ws: Workspace) -> ToolOutput:
    rows = (ws.tools or DEFAULT_TOOLS).listing()
    return ToolOutput("\n".join(f"{n}: {s}" for n, s in rows), data={"tools": [n for n, _ in rows]})


def _describe_tool(ws: Workspace, tool: str) -> ToolOutput:
    t = (ws.tools or DEFAULT_TOOLS).get(tool)
    ps = "; ".join(f"{p.name} ({p.type.__name__}, default {p.default}): {p.doc}" for p in t.params)
    return ToolOutput(f"{t.name}: {t.summary}" + (f"\nParameters: {ps}" if ps else ""), data={"tool": t.name})


def _list_faults(ws: Workspace) -> ToolOutput:
    return ToolOutput("\n".join(f"{f.id}: {f.description} ({f.component})" for f in FAULT_CATALOG),
                      data={"faults": [f.id for f in FAULT_CATALOG]})


def _set_params(ws: Workspace, model: Optional[str] = None, **params) -> ToolOutput:
    name = ws.models.get(model or ws.current_model).name
    merged = {**ws.model_params(name), **params}
    ws.models.get(name).validate(merged)
    ws.settings[name] = merged
    ws.current_model = name
    shown = ", ".join(f"{k}={v}" for k, v in params.items())
    return ToolOutput(f"{name}: set {shown}.", data={"model": name, "params": merged})


def _train(ws: Workspace, model: Optional[str] = None, data: Optional[str] = None,
           quantile: Optional[float] = None, split: float = ad.DEFAULT_SPLIT) -> ToolOutput:
    name = ws.models.get(model or ws.current_model).name
    ws.current_model = name
    if quantile is not None:
        ws.quantile = quantile
    det = ad.AnomalyDetector(ForecasterSpec(name, ws.model_params(name)), ws.quantile, split)
    det.fit(ws.load(data, 0))
    ws.detector = det
    return ToolOutput(f"Trained {name} ({det.model!r}); detection threshold {det.threshold:.6g} at quantile "
                      f"{ws.quantile}.", data={"model": name, "threshold": det.threshold, "quantile": ws.quantile})


def _detect(ws: Workspace, data: Optional[str] = None) -> ToolOutput:
    if ws.detector is None:
        raise ToolError("no trained detector; run train first")
    tel = ws.load(data, 1)
    res = ws.detector.detect(tel)
    ws.detection, ws.detection_data = res, tel
    artifacts = []
    if ws.out_dir is not None:
        Path(ws.out_dir).mkdir(parents=True, exist_ok=True)
        p = Path(ws.out_dir) / "detection_residuals.csv"
        with p.open("w", encoding="utf-8") as fh:
            fh.write("timestamp,residual,flag\n")
            fh.writelines(f"{t},{r},{f}\n" for t, r, f in res.residual_rows())
        artifacts.append(str(p))
    return ToolOutput(res.render(), tuple(artifacts), res.to_dict())


def _recognize(ws: Workspace, data: Optional[str] = None, start: Optional[int] = None,
               end: Optional[int] = None) -> ToolOutput:
    tel = _window(ws.load(data, 1), start, end)
    if start is None and end is None:
        segs = wcr.recognize_all(tel)
        lines = [f"{epoch_to_text(tel.times[a])} .. {epoch_to_text(tel.times[b - 1])}: {v.condition.label}"
                 for a, b, v in segs]
        return ToolOutput("\n".join(lines), data={"segments": [[a, b, v.condition.code] for a, b, v in segs]})
    v = wcr.recognize(tel)
    return ToolOutput(wcr.render_trace(v), data=v.to_dict())


def diagnosis_window(start: int, end: int, length: int = 64, warmup: int = 8) -> tuple[int, int]:
    """Rows ``[a, b)`` of a detected interval handed to the classifier: ``length`` rows after ``warmup``."""
    a = min(start + warmup, max(start, end - length))
    return a, min(end, a + length)


def _diagnose(ws: Workspace, data: Optional[str] = None, start: Optional[int] = None,
              end: Optional[int] = None) -> ToolOutput:
    if start is None and end is None:
        if ws.detection is None or not ws.detection.intervals or data is not None:
            raise ToolError("no anomaly interval to diagnose; run detect first or give start and end rows")
        tel = ws.detection_data
        longest = max(ws.detection.intervals, key=lambda i: i.seconds)
        a, b = np.searchsorted(tel.times, [longest.start, longest.end])
        start, end = diagnosis_window(int(a), int(b) + 1)
    else:
        tel = ws.load(data, 1)
    d = fl.diagnose(ws.fault_classifier(), _window(tel, start, end).values)
    return ToolOutput(d.render(), data={**d.to_dict(), "rows": [start, end]})


def _advise(ws: Workspace, fault: str, k: int = 3) -> ToolOutput:
    report = mdm.compose_report(_fault(fault), ws.knowledge(), k)
    ok, total, bad = mdm.verify_citations(report, ws.knowledge())
    artifacts = []
    if ws.out_dir is not None:
        Path(ws.out_dir).mkdir(parents=True, exist_ok=True)
        p = Path(ws.out_dir) / f"report_{report.fault.id}.txt"
        p.write_text(report.render(), encoding="utf-8")
        artifacts.append(str(p))
    return ToolOutput(report.render(), tuple(artifacts),
                      {**report.to_dict(), "citations": {"resolvable": ok, "total": total, "unresolved": bad}})


def _fault(text: str) -> FaultType:
    try:
        return get_fault(text.upper())
    except KeyError:
        for f in FAULT_CATALOG:
            if f.description.lower() == text.lower():
                return f
    raise ToolError(f"unknown fault {text!r}; see 'list faults'")


def _simulate(ws: Workspace, kind: str, out: Optional[str] = None, seed: Optional[int] = None,
              orbits: int = 4) -> ToolOutput:
    if kind.upper() not in DATASET_KINDS:
        raise ToolError(f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")
    target = ws.path(out or f"sim_{kind.lower()}")
    cfg = ScenarioConfig(seed=ws.seed if seed is None else seed, n_orbits=orbits)
    manifest = generate_dataset(cfg, kind, target)
    return ToolOutput("\n".join(f"{f.path}: {f.rows} rows, sha256 {f.sha256}" for f in manifest.files),
                      tuple(f.path for f in manifest.files), manifest.to_dict())


def _str(name: str, doc: str, default=None) -> ParamSpec:
    return ParamSpec(name, str, default, None, None, doc)


def _int(name: str, doc: str, default=None, low=None, high=None) -> ParamSpec:
    return ParamSpec(name, int, default, low, high, doc)


def default_tools() -> ToolRegistry:
    model = _str("model", "forecasting model name")
    data = _str("data", "CSV file; the workspace scenario when omitted")
    rows = (_int("start", "first row", None, 0), _int("end", "row after the last", None, 1))
    return ToolRegistry([
        ToolDescriptor("describe_models", "List forecasting models with parameters and guidance.", (model,),
                       _describe_models, ("model",)),
        ToolDescriptor("list_tools", "List the available tools.", (), _list_tools),
        ToolDescriptor("describe_tool", "Show a tool's parameters.", (_str("tool", "tool name"),),
                       _describe_tool, ("tool",), required=("tool",)),
        ToolDescriptor("list_faults", "List the fault catalog.", (), _list_faults),
        ToolDescriptor("set_params", "Set hyperparameters of a forecasting model.", (model,), _set_params,
                       open_params=True),
        ToolDescriptor("train", "Fit and calibrate the anomaly detector on fault-free data.",
                       (model, data, ParamSpec("quantile", float, None, 0.0, 1.0, "threshold quantile"),
                        ParamSpec("split", float, ad.DEFAULT_SPLIT, 0.05, 0.95, "fit fraction")),
                       _train, ("model",)),
        ToolDescriptor("detect", "Detect anomaly intervals with the trained detector.", (data,), _detect),
        ToolDescriptor("recognize", "Recognize work conditions with a step trace.", (data, *rows), _recognize),
        ToolDescriptor("diagnose", "Localize the fault of an anomalous segment.", (data, *rows), _diagnose),
        ToolDescriptor("advise", "Compose a cited maintenance report for a fault.",
                       (_str("fault", "fault id or description"), _int("k", "passages per step", 3, 1, 50)),
                       _advise, ("fault",), required=("fault",)),
        ToolDescriptor("simulate", "Generate a simulator dataset.",
                       (_str("kind", "MR, AD, FL or FR"), _str("out", "output directory"),
                        _int("seed", "random seed", None, 0), _int("orbits", "number of orbits", 4, 1)),
                       _simulate, ("kind",), required=("kind",)),
    ]).freeze()


DEFAULT_TOOLS = default_tools()


def execute(call: ToolCall, workspace: Workspace, tools: Optional[ToolRegistry] = None) -> ToolResult:
    """Run ``call``; any failure comes back as an error result with its reason."""
    t0 = time.perf_counter()
    try:
        tool = (tools or DEFAULT_TOOLS).get(call.tool)
        out = tool.handler(workspace, **call.args)
    except Exception as exc:  # the tool boundary: nothing propagates to the session
        reason = f"{type(exc).__name__}: {exc}"
        return ToolResult(call.request_id, "error", reason=reason, duration_s=time.perf_counter() - t0)
    return ToolResult(call.request_id, "ok", out.text, out.artifacts, out.data,
                      duration_s=time.perf_counter() - t0)


# ----------------------------------------------------------------- session


@dataclass(frozen=True)
class LogEntry:
    timestamp: str
    command: str
    call: str
    status: str

    def line(self) -> str:
        return "\t".join((self.timestamp, self.command.replace("\t", " "), self.call, self.status))


def _call_text(parsed: ParseResult) -> str:
    if isinstance(parsed, ToolCall):
        return f"{parsed.tool}({', '.join(f'{k}={v!r}' for k, v in parsed.args.items())})"
    return "-"


class Session:
    """Sequential command handling with an append-only log and invocation accounting.

    ``attempted`` counts commands whose verb is in the grammar; a command is
    ``dispatched`` when it parsed into a call that executed with status ok.
    Free text outside the grammar is answered with the capability summary
    and counts as neither.
    """

    def __init__(self, workspace: Optional[Workspace] = None, log_path: Optional[str | Path] = None,
                 tools: Optional[ToolRegistry] = None):
        self.workspace = workspace or Workspace()
        self.tools = tools or DEFAULT_TOOLS
        if self.workspace.tools is None:
            self.workspace.tools = self.tools
        self.log_path = Path(log_path) if log_path is not None else None
        self._log: list[LogEntry] = []
        self.attempted = 0
        self.dispatched = 0

    @property
    def log(self) -> tuple[LogEntry, ...]:
        return tuple(self._log)

    @property
    def accuracy(self) -> float:
        return self.dispatched / self.attempted if self.attempted else 0.0

    def _append(self, entry: LogEntry) -> None:
        self._log.append(entry)
        if self.log_path is not None:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with self.log_path.open("a", encoding="utf-8") as fh:
                fh.write(entry.line() + "\n")

    def handle(self, text: str) -> tuple[ParseResult, Optional[ToolResult]]:
        rid = f"req-{len(self._log) + 1:04d}"
        parsed = parse_command(text, self.workspace.models, self.tools, rid)
        result = None
        if isinstance(parsed, ToolCall):
            self.attempted += 1
            result = execute(parsed, self.workspace, self.tools)
            self.dispatched += result.ok
            status = result.status if result.ok else f"error: {result.reason}"
        elif isinstance(parsed, InvalidCommand):
            self.attempted += 1
            status = f"invalid: {parsed.reason}"
        else:
            status = "unrecognized"
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        self._append(LogEntry(stamp, text, _call_text(parsed), status))
        return parsed, result

    def reply(self, text: str) -> str:
        parsed, result = self.handle(text)
        if isinstance(parsed, Unrecognized):
            return parsed.summary
        if isinstance(parsed, InvalidCommand):
            return f"Cannot run that: {parsed.reason}"
        return result.text if result.ok else f"The tool failed: {result.reason}"

