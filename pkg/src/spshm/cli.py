"""Command-line entry point.

Every subcommand writes its outputs plus ``run_manifest.json`` into
``--out`` and exits nonzero exactly when the manifest records an error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path
from typing import Callable, Optional, Sequence

from . import ad, fl, mdm, wcr
from .config import RunConfig, load_config
from .core import epoch_to_text
from .loop import detector_spec, knowledge_base, run_loop, write_loop_outputs
from .manifest import RunManifest
from .ops import Session, Workspace
from .qa import export_qa
from .sim import DATASET_KINDS, generate_dataset, read_csv


def _write(man: RunManifest, path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    man.add_artifact(path)


def cmd_simulate(args, cfg: RunConfig, man: RunManifest) -> None:
    with man.stage("simulate"):
        manifest = generate_dataset(cfg.sim, args.kind, args.out)
    for f in manifest.files:
        man.add_artifact(f.path)
    print("\n".join(f"{f.path}: {f.rows} rows" for f in manifest.files))


def cmd_recognize(args, cfg: RunConfig, man: RunManifest) -> None:
    man.inputs.append(args.input)
    tel = read_csv(args.input)
    out = Path(args.out)
    with man.stage("recognize"):
        if args.window is not None:
            n = args.window
            spans = [(a, min(a + n, len(tel))) for a in range(0, len(tel), n)]
            segs = [(a, b, wcr.recognize(tel[a:b], check_regime=False)) for a, b in spans]
        else:
            segs = wcr.recognize_all(tel)
    text = "\n\n".join(f"Window {epoch_to_text(tel.times[a])} .. {epoch_to_text(tel.times[b - 1])}\n"
                       f"{wcr.render_trace(v)}" for a, b, v in segs) + "\n"
    _write(man, out / "recognition.txt", text)
    _write(man, out / "recognition.json", json.dumps(
        [{"start": epoch_to_text(tel.times[a]), "end": epoch_to_text(tel.times[b - 1]), **v.to_dict()}
         for a, b, v in segs], indent=2) + "\n")
    print("\n".join(f"{epoch_to_text(tel.times[a])} .. {epoch_to_text(tel.times[b - 1])}: {v.condition.label}"
                    for a, b, v in segs))


def cmd_detect(args, cfg: RunConfig, man: RunManifest) -> None:
    man.inputs += [args.train, args.input]
    det = ad.AnomalyDetector(detector_spec(cfg), cfg.ad.quantile, cfg.ad.split)
    with man.stage("train"):
        det.fit(read_csv(args.train))
    with man.stage("detect"):
        res = det.detect(read_csv(args.input))
    out = Path(args.out)
    _write(man, out / "detection.txt", res.render() + "\n")
    _write(man, out / "detection.json", json.dumps(res.to_dict(), indent=2) + "\n")
    _write(man, out / "residuals.csv", "timestamp,residual,flag\n" + "".join(
        f"{t},{r},{f}\n" for t, r, f in res.residual_rows()))
    print(res.render())


def _classifier(path: str, man: RunManifest) -> fl.Classifier:
    man.inputs.append(path)
    with man.stage("train_classifier"):
        tel = read_csv(path)
        windows, labels = fl.split_windows(tel)
        conds = fl.window_conditions(tel) if tel.conditions is not None else None
        return fl.train_classifier(windows, labels, conditions=conds)


def cmd_diagnose(args, cfg: RunConfig, man: RunManifest) -> None:
    clf = _classifier(args.train, man)
    man.inputs.append(args.input)
    tel = read_csv(args.input)
    if tel.window_ids is not None:
        windows, labels = fl.split_windows(tel)
    else:
        n = args.window or cfg.fl.window
        windows = [tel.values[a:a + n] for a in range(0, len(tel) - n + 1, n)]
        labels = [""] * len(windows)
    with man.stage("diagnose"):
        results = [fl.diagnose(clf, w, cfg.fl.top) for w in windows]
    out = Path(args.out)
    _write(man, out / "diagnosis.txt", "".join(f"Window {i}: {d.render()}\n" for i, d in enumerate(results)))
    rows = ["window,predicted,label,confidence,rejected"]
    rows += [f"{i},{d.fault.id},{y},{d.confidence:.6f},{int(d.rejected)}" for i, (d, y) in
             enumerate(zip(results, labels))]
    _write(man, out / "predictions.csv", "\n".join(rows) + "\n")
    for i, d in enumerate(results[:10]):
        print(f"Window {i}: {d.render()}")
    if len(results) > 10:
        print(f"... {len(results) - 10} more in {out / 'diagnosis.txt'}")


def cmd_advise(args, cfg: RunConfig, man: RunManifest) -> None:
    kb = knowledge_base(cfg)
    with man.stage("advise"):
        report = mdm.compose_report(args.fault, kb, cfg.mdm.k)
        ok, total, bad = mdm.verify_citations(report, kb)
    out = Path(args.out)
    _write(man, out / "maintenance_report.txt", report.render())
    _write(man, out / "maintenance_report.json", json.dumps(
        {**report.to_dict(), "citations": {"resolvable": ok, "total": total, "unresolved": bad}}, indent=2) + "\n")
    if bad:
        man.errors.append(f"advise: unresolved citations {bad}")
    print(report.render())


def cmd_loop(args, cfg: RunConfig, man: RunManifest) -> None:
    if args.fault_free:
        cfg = RunConfig(cfg.sim, cfg.ad, cfg.fl, cfg.mdm, "fault_free")
    with man.stage("loop"):
        result = run_loop(cfg)
    man.timings.update({f"loop.{k}": v for k, v in result.timings.items()})
    for p in write_loop_outputs(result, args.out):
        man.add_artifact(p)
    if result.citations is not None and result.citations[2]:
        man.errors.append(f"loop: unresolved citations {result.citations[2]}")
    print(result.render())


def cmd_evaluate(args, cfg: RunConfig, man: RunManifest) -> None:
    man.inputs.append(args.input)
    with open(args.input, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and not {"predicted", "label"} <= set(rows[0]):
        raise ValueError("predictions file needs 'predicted' and 'label' columns")
    with man.stage("evaluate"):
        report = fl.evaluate([r["predicted"] for r in rows], [r["label"] for r in rows])
    for p in fl.write_metrics(report, args.out):
        man.add_artifact(p)
    print(report.render())


def cmd_export_qa(args, cfg: RunConfig, man: RunManifest) -> None:
    man.inputs.append(args.input)
    tel = read_csv(args.input)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        with man.stage("export_qa"):
            paths = export_qa(tel, args.out)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    for p in paths:
        man.add_artifact(p)
    print(f"{len(paths)} Q&A files written to {args.out}")


def cmd_ops(args, cfg: RunConfig, man: RunManifest) -> None:
    out = Path(args.out)
    session = Session(Workspace(seed=cfg.sim.seed, out_dir=out, quantile=cfg.ad.quantile),
                      log_path=out / "session.log")
    stream = open(args.script, encoding="utf-8") if args.script else sys.stdin
    interactive = args.script is None and sys.stdin.isatty()
    try:
        while True:
            if interactive:
                print("> ", end="", flush=True)
            line = stream.readline()
            if not line:
                break
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            print(session.reply(line.strip()))
    finally:
        if stream is not sys.stdin:
            stream.close()
    if (out / "session.log").exists():
        man.add_artifact(out / "session.log")
    print(f"Tool invocation accuracy: {session.dispatched}/{session.attempted}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--seed", type=int, help="override [sim] seed")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--k", type=int, help="override [mdm] k, passages per report step")
    p.add_argument("--quantile", type=float, help="override [ad] quantile")
    p.add_argument("--window", type=int, help="override [fl] window length in seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spshm", description="Spacecraft power-system health management.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, fn: Callable, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text)
        _common(p)
        p.set_defaults(func=fn)
        return p

    p = add("simulate", cmd_simulate, "Generate a simulator dataset (MR, AD, FL or FR).")
    p.add_argument("--kind", default="MR", type=str.upper, choices=DATASET_KINDS)
    p = add("recognize", cmd_recognize, "Recognize work conditions in a telemetry CSV.")
    p.add_argument("input")
    p = add("detect", cmd_detect, "Train on fault-free telemetry and detect anomalies in another CSV.")
    p.add_argument("--train", required=True, help="fault-free training CSV, e.g. AD_Train.csv")
    p.add_argument("input", help="CSV to scan, e.g. AD_Test.csv")
    p = add("diagnose", cmd_diagnose, "Localize faults in the windows of a CSV.")
    p.add_argument("--train", required=True, help="labeled FL dataset for the classifier")
    p.add_argument("input")
    p = add("advise", cmd_advise, "Compose a cited maintenance report for a fault.")
    p.add_argument("fault", help="fault id, e.g. LOAD2_OPEN")
    p = add("loop", cmd_loop, "Run all four stages on a simulated scenario.")
    p.add_argument("--fault-free", action="store_true", help="run the fault-free scenario")
    p = add("evaluate", cmd_evaluate, "Write confusion matrices and metrics for a predictions CSV.")
    p.add_argument("input", help="CSV with 'predicted' and 'label' columns")
    p = add("export-qa", cmd_export_qa, "Render FL windows as Q&A text files.")
    p.add_argument("input", help="FL dataset CSV")
    p = add("ops", cmd_ops, "Command session over the tool registry; reads commands from stdin.")
    p.add_argument("--script", help="file of commands, one per line, instead of stdin")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    man = RunManifest(args.command, out_dir=str(args.out))
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.quantile, args.k, args.window)
        man.config_digest, man.seed = cfg.digest(), cfg.sim.seed
        if args.config:
            man.inputs.append(args.config)
        args.func(args, cfg, man)
    except Exception as exc:
        if not man.errors:
            man.errors.append(f"{args.command}: {type(exc).__name__}: {exc}")
        print(f"error: {man.errors[-1]}", file=sys.stderr)
    try:
        man.write(args.out)
    except OSError as exc:
        print(f"error: cannot write manifest: {exc}", file=sys.stderr)
        return 1
    return 0 if man.ok else 1


if __name__ == "__main__":
    sys.exit(main())
