"""``edgebin`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 domain error (diagnostic on stderr), 2 usage.
Machine-readable output is JSON on stdout; ``--pretty`` switches to text
where a table makes sense. ``EDGEBIN_SEED`` sets the default ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import EdgeBinError, EmptyDataset

SCHEMA_DIR = Path(__file__).with_name("schemas")


def default_seed() -> int:
    return int(os.environ.get("EDGEBIN_SEED", "0"))


def _emit(obj, out):
    json.dump(obj, out, indent=2, sort_keys=True)
    out.write("\n")


def _resolution(text):
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("resolution must be positive")
    return w, h


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_list(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def load_input(path, shape=None) -> np.ndarray:
    """A .ppm image or a .npy tensor; images are resized to ``shape``."""
    from .datapipe import load_image, resize_bilinear

    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pnm"):
        x = load_image(path)
        if shape is not None and x.shape != tuple(shape):
            x = resize_bilinear(x, (shape[1], shape[0]))
        return x
    return np.load(path, allow_pickle=False).astype(np.float32)


def _calibration_set(args, graph):
    shape = graph.input_shape
    if args.calib:
        files = sorted(p for p in Path(args.calib).iterdir()
                       if p.suffix.lower() in (".npy", ".ppm", ".pnm"))
        if not files:
            raise EmptyDataset(f"no .npy or .ppm files in {args.calib}")
        return [load_input(p, shape) for p in files]
    rng = np.random.default_rng(args.seed)
    return [rng.random(shape, dtype=np.float32) for _ in range(args.calib_samples)]


# --- subcommands -------------------------------------------------------------

def cmd_build_model(args, out):
    from .modelio import save
    from .zoo import ModelSpec, build, estimate_file_size, param_count

    spec = ModelSpec(args.family, args.alpha, args.res, args.classes, args.resize_front)
    graph = build(spec, seed=args.seed)
    save(graph, args.out)
    _emit({"model": spec.name, "path": str(args.out), "params": param_count(graph),
           "file_bytes": os.path.getsize(args.out),
           "estimated_bytes": {d: estimate_file_size(graph, d) for d in ("f32", "f16", "i8")}}, out)


def cmd_optimize(args, out):
    from .modelio import load, save
    from .passes import PROFILES, check_target, optimize

    profile = PROFILES[args.target]
    graph, reports = optimize(load(args.model), profile, args.passes)
    if args.out:
        save(graph, args.out)
    _emit({"reports": [r.to_json() for r in reports],
           "deployability": check_target(graph, profile).to_json(),
           "out": str(args.out) if args.out else None}, out)


def cmd_quantize(args, out):
    from .modelio import load, save
    from .passes import PROFILES, check_target
    from .quantizer import calibrate, quantize

    graph = load(args.model)
    stats = None
    samples = 0
    if args.scheme == "i8":
        dataset = _calibration_set(args, graph)
        samples = len(dataset)
        stats = calibrate(graph, dataset, path="opt")
    q = quantize(graph, stats, args.scheme)
    save(q, args.out)
    _emit({"scheme": args.scheme, "out": str(args.out), "calibration_samples": samples,
           "file_bytes": os.path.getsize(args.out),
           "deployability": check_target(q, PROFILES[args.target]).to_json()}, out)


def cmd_run(args, out):
    from .executor import run
    from .modelio import load

    graph = load(args.model)
    x = load_input(args.input, graph.input_shape)
    probs = np.asarray(run(graph, x, path=args.path), dtype=np.float64).reshape(-1)
    labels = graph.class_labels or tuple(str(i) for i in range(probs.size))
    order = np.argsort(-probs, kind="stable")[:args.top_k]
    top = [{"label": labels[i], "index": int(i), "score": float(probs[i])} for i in order]
    if args.pretty:
        for t in top:
            out.write(f"{t['label']:>10}  {t['score']:.4f}\n")
        return
    _emit({"model": graph.metadata.get("name"), "path": args.path, "top_k": top,
           "scores": probs.tolist()}, out)


def cmd_bench(args, out):
    from .bench import measure
    from .modelio import load

    graph = load(args.model)
    if args.input:
        x = load_input(args.input, graph.input_shape)
    else:
        x = np.random.default_rng(args.seed).random(graph.input_shape, dtype=np.float32)
    rep = measure(graph, x, args.path, args.iters, args.warmup,
                  threads=None if args.threads == 0 else args.threads)
    if args.pretty:
        out.write(f"{rep.model} [{rep.path}] mean {rep.mean_s * 1e3:.2f} ms  p50 "
                  f"{rep.p50_s * 1e3:.2f} ms  p95 {rep.p95_s * 1e3:.2f} ms  {rep.ips:.2f} IPS\n")
        return
    _emit(rep.to_json(), out)


def cmd_metrics(args, out):
    from .evalkit import confusion, format_table, metrics, read_predictions

    truths, preds = read_predictions(args.predictions)
    if args.labels:
        labels = args.labels
    else:
        from .ir import BIN_LABELS
        labels = BIN_LABELS
    cm = confusion(preds, truths, labels)
    m = metrics(cm)
    if args.pretty:
        out.write(format_table(cm, m) + "\n")
        return
    _emit({"confusion": cm.to_json(), "metrics": m.to_json(), "total": cm.total}, out)


def cmd_split_dataset(args, out):
    from .datapipe import DatasetManifest, split

    manifest = DatasetManifest.read_csv(args.manifest)
    parts = split(manifest, args.ratios, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = {}
    for name, part in zip(("train", "val", "test"), parts):
        part.write_csv(out_dir / f"{name}.csv")
        result[name] = {"size": len(part), "counts": part.counts()}
    _emit({"ratios": list(args.ratios), "seed": args.seed, "splits": result,
           "out_dir": str(out_dir)}, out)


def _live_events(args):
    from .binctl import Classified
    from .executor import plan, execute
    from .modelio import load

    graph = load(args.model)
    labels = graph.class_labels
    p = plan(graph, "opt")
    files = sorted(q for q in Path(args.images).iterdir()
                   if q.suffix.lower() in (".npy", ".ppm", ".pnm"))
    for f in files:
        probs = np.asarray(execute(p, load_input(f, graph.input_shape))).reshape(-1)
        i = int(np.argmax(probs))
        yield Classified(labels[i], float(np.clip(probs[i], 0.0, 1.0)))


def cmd_simulate_bin(args, out):
    from .binctl import ControllerConfig, read_trace, run_scenario, write_log

    config = ControllerConfig()
    if args.config:
        with open(args.config) as fh:
            config = ControllerConfig.from_json(json.load(fh))
    if args.live:
        if not (args.model and args.images):
            raise argparse.ArgumentError(None, "--live needs --model and --images")
        events = list(_live_events(args))
    elif args.script:
        events = read_trace(args.script)
    else:
        raise argparse.ArgumentError(None, "give --script or --live")
    result = run_scenario(events, config)
    write_log(out, result.log)


def cmd_power_budget(args, out):
    from .power import IrradiationSeries, PowerProfile, SolarRig, emit_energy_curve, feasibility, synthetic_series

    rig = SolarRig.from_cm2(args.area_cm2, args.efficiency, args.battery_wh)
    series = IrradiationSeries.read_csv(args.irradiation) if args.irradiation else synthetic_series()
    profile = PowerProfile("load", args.load_w)
    report = feasibility(rig, series, profile)
    if args.curve:
        with open(args.curve, "w") as fh:
            emit_energy_curve(rig, series, fh)
    if args.pretty:
        out.write(emit_energy_curve(rig, series))
        w = report.worst
        out.write(f"worst month {w.month}: {w.sustainable_w:.3f} W sustainable vs "
                  f"{args.load_w} W load -> {'feasible' if report.feasible else 'infeasible'}\n")
        return
    _emit(report.to_json(), out)


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .passes import PASS_GROUPS, PROFILES
    from .zoo import ALPHAS, FAMILIES

    parser = argparse.ArgumentParser(prog="edgebin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"edgebin {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    seed = default_seed()

    p = sub.add_parser("build-model", help="build a seeded MobileNet and save it")
    p.add_argument("--family", choices=FAMILIES, default="mobilenet_v1")
    p.add_argument("--alpha", type=float, default=1.0, help=f"width multiplier, one of {ALPHAS}")
    p.add_argument("--res", type=_resolution, default=(224, 224), help="input WxH")
    p.add_argument("--resize-front", type=_resolution, default=None,
                   help="prepend a bilinear resize to this WxH")
    p.add_argument("--classes", type=int, default=7)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_model)

    p = sub.add_parser("optimize", help="fold / fuse / replace passes for a target")
    p.add_argument("--model", required=True)
    p.add_argument("--target", choices=sorted(PROFILES), default="generic")
    p.add_argument("--passes", type=_csv_list, default=("fold", "fuse", "replace"),
                   help=f"comma list from {sorted(PASS_GROUPS)}")
    p.add_argument("--out")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("quantize", help="post-training f16 / i8 quantization")
    p.add_argument("--model", required=True)
    p.add_argument("--scheme", choices=("i8", "f16"), default="i8")
    p.add_argument("--calib", help="directory of .npy / .ppm calibration inputs")
    p.add_argument("--calib-samples", type=int, default=8,
                   help="seeded uniform inputs used when --calib is absent")
    p.add_argument("--target", choices=sorted(PROFILES), default="k210",
                   help="profile for the deployability report")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("run", help="classify one input")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help=".ppm image or .npy tensor")
    p.add_argument("--path", choices=("ref", "opt"), default="opt")
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--pretty", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="latency / throughput / memory of one model")
    p.add_argument("--model", required=True)
    p.add_argument("--path", choices=("ref", "opt"), default="opt")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--threads", type=int, default=1, help="BLAS threads; 0 leaves the pool alone")
    p.add_argument("--input", help="input file; default is a seeded uniform tensor")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--json", action="store_true", help="JSON output (the default)")
    p.add_argument("--pretty", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("metrics", help="confusion matrix and precision / recall")
    p.add_argument("--predictions", required=True, help="CSV with truth,pred columns")
    p.add_argument("--labels", type=_csv_list, default=None, help="label order (default: 7 bin classes)")
    p.add_argument("--pretty", action="store_true")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("split-dataset", help="stratified train/val/test split of a manifest")
    p.add_argument("--manifest", required=True, help="CSV with path,label,source columns")
    p.add_argument("--ratios", type=_floats, default=(0.7, 0.15, 0.15))
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split_dataset)

    p = sub.add_parser("simulate-bin", help="replay an event trace through the bin controller")
    p.add_argument("--script", help="CSV rows event,label,confidence")
    p.add_argument("--config", help="JSON ControllerConfig")
    p.add_argument("--live", action="store_true", help="classify --images with --model instead")
    p.add_argument("--model")
    p.add_argument("--images")
    p.set_defaults(func=cmd_simulate_bin)

    p = sub.add_parser("power-budget", help="battery and solar feasibility")
    p.add_argument("--area-cm2", type=float, default=1600.0)
    p.add_argument("--efficiency", type=float, default=0.22)
    p.add_argument("--battery-wh", type=float, default=48.0)
    p.add_argument("--load-w", type=float, default=0.89)
    p.add_argument("--irradiation", help="CSV month,H (default: bundled synthetic series)")
    p.add_argument("--curve", help="write the month -> E_day CSV here")
    p.add_argument("--pretty", action="store_true")
    p.set_defaults(func=cmd_power_budget)
    return parser


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args, out)
    except argparse.ArgumentError as exc:
        err.write(f"edgebin {args.command}: {exc.message}\n")
        parser.print_usage(err)
        return 2
    except (EdgeBinError, ValueError, OSError, KeyError) as exc:
        err.write(f"edgebin {args.command}: {type(exc).__name__}: {exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
