"""Command line entry point.

Exit codes: 0 ok, 1 validation, 2 data, 3 prediction source, 4 internal.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import yaml

from ..errors import ConfigError, CrossPoseError, SynthSpecError

log = logging.getLogger("crosspose")


def _cmd_preprocess(args):
    from ..datasets.adapters import ADAPTERS
    from ..datasets.archive import write_archive

    archive = ADAPTERS[args.dataset](args.raw, threshold_mm=args.threshold_mm)
    write_archive(archive, args.out)
    filt = archive.manifest.get("metadata", {}).get("filter", {})
    print(f"{args.dataset}: {archive.count} samples -> {args.out} (filtered {filt.get('dropped', 0)} of {filt.get('total', 0)})")


def _cmd_synth(args):
    from ..datasets.archive import write_archive
    from ..datasets.synth import SynthSpec, synth_generate

    try:
        with open(args.spec) as fh:
            doc = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read synth spec {args.spec}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise SynthSpecError(f"invalid YAML in {args.spec}: {exc}") from None
    if args.count is not None:
        doc["count"] = args.count
    if args.seed is not None:
        doc["seed"] = args.seed
    archive = synth_generate(SynthSpec.from_dict(doc))
    write_archive(archive, args.out)
    print(f"synth: {archive.count} samples -> {args.out}")


def _cmd_evaluate(args):
    from .config import parse_config
    from .evaluate import run_evaluation

    cfg = parse_config(args.config)
    if args.num_workers is not None:
        cfg.num_workers = args.num_workers
    if args.out is not None:
        cfg.output_dir = os.path.abspath(args.out)
    report = run_evaluation(cfg)
    for name, dr in sorted(report.datasets.items()):
        r = dr.result
        print(f"{name}: MPJPE {r.mpjpe_mm:.2f} mm, PA-MPJPE {r.pa_mpjpe_mm:.2f} mm over {r.sample_count} samples")
    if not cfg.output_dir:
        sys.stdout.write(report.to_json())


def _cmd_analyze(args):
    from .. import analytics
    from ..datasets.archive import read_archive
    from ..datasets.pose import VIEWPOINT, split_rows
    from .evaluate import read_sample_errors

    arc = read_archive(args.train)
    train_vp = arc[VIEWPOINT][split_rows(arc, "train")]
    try:
        _, vp, e1, e2 = read_sample_errors(args.errors)
    except OSError as exc:
        raise ConfigError(f"cannot read errors file {args.errors}: {exc.strerror}") from None
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"malformed errors file {args.errors} ({exc})") from None
    errors = e2 if args.protocol == "pa_mpjpe" else e1
    corr, grid = analytics.viewpoint_error_correlation(train_vp, vp, errors, args.min_train, args.min_test)
    doc = dict(corr.as_dict(), protocol=args.protocol, min_train=args.min_train, min_test=args.min_test)
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        from .report import write_files

        write_files(args.out, {"correlation.json": text, "contour.csv": analytics.export_contour(grid)})
    sys.stdout.write(text)


def _cmd_report(args):
    from .report import emit_report, load_bundles

    bundles = load_bundles(args.inputs)
    files = emit_report(bundles, args.format, args.out, baseline=args.baseline)
    if args.out is None:
        for name in sorted(files):
            if len(files) > 1:
                sys.stdout.write(f"# {name}\n")
            sys.stdout.write(files[name])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crosspose", description="Cross-dataset 3D pose evaluation harness.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="convert a raw dataset into an archive")
    p.add_argument("dataset", choices=("h36m", "gpa", "3dpw", "surreal"))
    p.add_argument("--raw", required=True, help="raw dataset root")
    p.add_argument("--out", required=True, help="archive to write")
    p.add_argument("--threshold-mm", type=float, default=40.0, help="frame-thinning threshold (default 40)")
    p.set_defaults(fn=_cmd_preprocess)

    p = sub.add_parser("synth", help="generate a synthetic archive from a YAML/JSON spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=None, help="override spec count")
    p.add_argument("--seed", type=int, default=None, help="override spec seed")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("evaluate", help="run an evaluation config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    p.add_argument("--num-workers", type=int, default=None)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("analyze", help="viewpoint/error correlation")
    p.add_argument("--train", required=True, help="training archive (viewpoints of its train split)")
    p.add_argument("--errors", required=True, help="errors_<dataset>.csv written by evaluate")
    p.add_argument("--protocol", choices=("mpjpe", "pa_mpjpe"), default="mpjpe")
    p.add_argument("--min-train", type=int, default=5)
    p.add_argument("--min-test", type=int, default=5)
    p.add_argument("--out", default=None, help="directory for correlation.json and contour.csv")
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("report", help="leaderboards from results bundles")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, help="results JSON files")
    p.add_argument("--format", choices=("csv", "json", "markdown"), default="markdown")
    p.add_argument("--out", default=None, help="output directory (default: stdout)")
    p.add_argument("--baseline", default=None, help="model name for percentage annotations")
    p.set_defaults(fn=_cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; usage errors are validation errors here
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.fn(args)
    except CrossPoseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
