"""Command-line entry point.

Exit codes: 0 success, 1 runtime fault, 2 configuration or usage error.
Output root precedence: ``--out``, then ``$PROMPTCAST_OUT``, then the
config's ``output_dir``.
"""

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .data import load_collection, prepare
from .errors import ConfigError, PromptcastError
from .evaluation import (
    AXES,
    AblationGrid,
    RunReport,
    evaluate,
    line_chart_svg,
    run_ablation,
    table6,
    table6_csv,
    table6_text,
)
from .model import build_model, load_model, save_model
from .render import render_series, write_pgm
from .synth import KINDS, SynthSpec, write_csv
from .training import train

log = logging.getLogger("promptcast")

OUT_ENV = "PROMPTCAST_OUT"
EXIT_OK, EXIT_FAULT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def output_root(args, default):
    if getattr(args, "out", None):
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    return Path(default)


def run_dir(root, experiment, seed):
    """Fresh ``{experiment}_{timestamp}_{seed}`` directory under ``root``."""
    stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    base = root / f"{experiment}_{stamp}_{seed}"
    path, k = base, 1
    while path.exists():
        k += 1
        path = base.with_name(f"{base.name}-{k}")
    path.mkdir(parents=True)
    return path


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# ------------------------------------------------------------------ commands


def cmd_train(args):
    cfg = load_config(args.config, seed=args.seed)
    collection = cfg.load_collection()
    tc = cfg.train
    data = prepare(collection, seed=cfg.seed, train_stride=tc.train_stride, eval_stride=tc.eval_stride or None)
    desc = cfg.description() if cfg.model.use_text else None
    model = build_model(cfg.model, cfg.seed)
    hist = train(model, data.train, data.val, tc, desc)
    test_mse = evaluate(model, data.test, desc) if len(data.test) else float("nan")
    out = run_dir(output_root(args, cfg.output_dir), cfg.experiment, cfg.seed)
    _write(out / "config.yaml", cfg.to_yaml())
    save_model(model, out / "model.json")
    _write(out / "history.csv", hist.metrics_csv())
    _write(out / "timings.csv", hist.timings_csv())
    _write(out / "history.json", hist.to_json())
    metrics = {"zero_shot_val_mse": hist.zero_shot_val_mse, "val_mse": hist.val_mse[-1], "test_mse": test_mse,
               "train_windows": len(data.train), "val_windows": len(data.val), "test_windows": len(data.test)}
    _write(out / "metrics.json", json.dumps(metrics, indent=2) + "\n")
    _write(out / "curve.svg", line_chart_svg({"val_mse": (list(range(len(hist) + 1)),
                                                          [hist.zero_shot_val_mse] + hist.val_mse)},
                                             title=f"{cfg.experiment}: validation MSE", xlabel="epoch",
                                             ylabel="val_mse"))
    print(f"zero-shot val MSE {hist.zero_shot_val_mse:.5f} -> val MSE {hist.val_mse[-1]:.5f}, test MSE {test_mse:.5f}")
    print(out)
    return EXIT_OK


def cmd_eval(args):
    cfg = load_config(args.config, seed=args.seed)
    collection = cfg.load_collection()
    tc = cfg.train
    data = prepare(collection, seed=cfg.seed, train_stride=tc.train_stride, eval_stride=tc.eval_stride or None)
    if args.model:
        model = load_model(args.model)
    else:
        model = build_model(cfg.model, cfg.seed)  # zero-shot: fresh prompts, no training
    desc = cfg.description() if model.config.use_text else None
    rows = [(name, len(ws), evaluate(model, ws, desc)) for name, ws in (("val", data.val), ("test", data.test))]
    out = run_dir(output_root(args, cfg.output_dir), f"{cfg.experiment}_eval", cfg.seed)
    _write(out / "eval.csv", "split,windows,mse\n" + "".join(f"{s},{n},{m!r}\n" for s, n, m in rows))
    for s, n, m in rows:
        print(f"{s}: {n} windows, MSE {m:.5f}")
    print(out)
    return EXIT_OK


def cmd_ablate(args):
    cfg = load_config(args.config, seed=args.seed)
    if args.component and args.axis != "length":
        raise UsageError("--component only applies to --axis length")
    collection = cfg.load_collection()
    ab = cfg.ablation
    grid = AblationGrid(
        args.axis,
        tuple(ab.levels) if ab.levels else (),
        cfg.model,
        cfg.train,
        seeds=tuple(ab.seeds) if args.seed is None else (cfg.seed,),
        components=(args.component,) if args.component else tuple(ab.components),
    )
    report = run_ablation(grid, collection, cfg.description(), experiment=f"{cfg.experiment}_{args.axis}",
                          on_row=lambda r: log.info("%s seed %s: %s", r["level"], r["seed"], r["status"]))
    out = run_dir(output_root(args, cfg.output_dir), f"{cfg.experiment}_{args.axis}", cfg.seed)
    _write(out / "config.yaml", cfg.to_yaml())
    _write(out / "report.csv", report.to_csv())
    _write(out / "report.json", report.to_json())
    _write(out / "report.txt", report.to_text())
    if report.ok_rows():
        _write(out / "report.svg", report.svg())
    print(report.to_text(), end="")
    print(out)
    failed = len(report.rows) - len(report.ok_rows())
    return EXIT_FAULT if failed == len(report.rows) else EXIT_OK


def cmd_report(args):
    if args.table6:
        rows = table6()
        print(table6_text(rows), end="")
        root = output_root(args, ".")
        root.mkdir(parents=True, exist_ok=True)
        _write(root / "table6.csv", table6_csv(rows))
        return EXIT_OK
    if args.results:
        doc = json.loads(Path(args.results).read_text(encoding="utf-8"))
        report = RunReport(doc["experiment"], doc["axis"], doc["rows"], doc.get("curves", {}))
        print(report.to_text(), end="")
        svg = Path(args.results).with_suffix(".svg")
        _write(svg, report.svg())
        print(svg)
        return EXIT_OK
    raise UsageError("report needs --table6 or --results FILE")


def cmd_render(args):
    if args.values:
        try:
            values = [float(v) for v in args.values.split(",")]
        except ValueError:
            raise UsageError("--values must be comma-separated numbers") from None
    elif args.input:
        c = load_collection(args.input, args.schema)
        if not 0 <= args.index < len(c):
            raise UsageError(f"--index {args.index} out of range (collection has {len(c)} series)")
        values = c.series[args.index]
        if args.context:
            values = values[-args.context:]
    else:
        raise UsageError("render needs --values or --input")
    img = render_series(np.asarray(values), args.size, args.size, args.thickness)
    target = Path(args.output)
    target.parent.mkdir(parents=True, exist_ok=True)
    write_pgm(img, target)
    print(target)
    return EXIT_OK


def cmd_synth(args):
    spec = SynthSpec(args.num_series, args.length, args.kind, args.noise, args.seed)
    path = write_csv(spec, args.output)
    print(path)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser():
    p = argparse.ArgumentParser(prog="promptcast", description="Prompt-tuned multimodal forecasting at desk scale.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--seed", type=int, default=None, help="override the root seed")
        sp.add_argument("--out", default=None, help=f"output root (overrides ${OUT_ENV} and the config)")

    sp = sub.add_parser("train", help="prompt-tune a model and save it with its history")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="validation and test MSE of a saved (or zero-shot) model")
    common(sp)
    sp.add_argument("--model", default=None, help="model.json from a train run; omit for zero-shot")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ablate", help="run one ablation grid")
    common(sp)
    sp.add_argument("--axis", required=True, choices=AXES)
    sp.add_argument("--component", choices=("tsfm", "vision", "text"), default=None,
                    help="restrict the length axis to one component")
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("report", help="parameter-efficiency table or an ablation report")
    sp.add_argument("--table6", action="store_true", help="print the backbone parameter-efficiency table")
    sp.add_argument("--results", default=None, help="report.json from an ablate run")
    sp.add_argument("--out", default=None, help="directory for the table CSV")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("render", help="rasterize a series to a PGM line chart")
    sp.add_argument("--values", default=None, help="comma-separated values")
    sp.add_argument("--input", default=None, help="series file")
    sp.add_argument("--schema", default=None, choices=("wide", "long", "jsonl"))
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--context", type=int, default=0, help="render only the last N values")
    sp.add_argument("--size", type=int, default=64)
    sp.add_argument("--thickness", type=int, default=1)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("synth", help="write a synthetic dataset CSV")
    sp.add_argument("--kind", choices=KINDS, default="sine_mix")
    sp.add_argument("--num-series", type=int, default=20)
    sp.add_argument("--length", type=int, default=400)
    sp.add_argument("--noise", type=float, default=0.1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PromptcastError, OSError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
