"""Command-line interface.

Five subcommands: ``eval`` (metrics + PR curve over a manifest),
``preprocess`` (batch image/label transforms), ``count`` (per-image
counts with pond extrapolation), ``fit`` (growth-model fitting and
ranking) and ``report`` (per-density summary). Every run is
deterministic given the same inputs, flags and seeds, and only writes
inside ``--out-dir``.

Exit codes: 0 on success, 1 on domain errors (unreadable or malformed
inputs, codec failures), 2 on usage errors (missing or out-of-range
flags).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .annotations import (
    detect_kind,
    load_image_annotation,
    load_manifest,
    parse_label_file,
    serialize_label_file,
)
from .chart import growth_chart_svg
from .counting import (
    DEFAULT_VOLUME_FACTOR,
    count_image,
    density_summary,
    extrapolate_pond,
    render_counts_csv,
    render_density_csv,
)
from .errors import LarvaekitError
from .evaluation import (
    AGGREGATIONS,
    AP_METHODS,
    MatchConfig,
    evaluate_dataset,
    render_eval_csv,
    render_pr_curve_csv,
)
from .growth import (
    DISPLAY_NAMES,
    PARAM_NAMES,
    GrowthModelKind,
    bundled_stage_means,
    load_observations_csv,
    parse_model_kind,
    rank_models,
)
from .preprocessing import (
    add_gaussian_noise,
    area_quantile,
    center_crop,
    circular_mask,
    enlarge_small_boxes,
    rotate90,
)
from .raster import decode_raster, encode_raster


class CommandUsageError(Exception):
    """Bad or missing flag values; maps to exit code 2."""


def _require(condition: bool, message: str):
    if not condition:
        raise CommandUsageError(message)


def _out_path(out_dir: Path, name: str) -> Path:
    path = Path(name)
    _require(not path.is_absolute() and ".." not in path.parts,
             f"output name {name!r} would escape --out-dir")
    return out_dir / path


def _prepare_out_dir(args) -> Path:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _match_config(args) -> MatchConfig:
    _require(0.0 < args.iou_thr < 1.0, f"--iou-thr must lie in (0, 1), got {args.iou_thr}")
    _require(0.0 <= args.conf_thr <= 1.0, f"--conf-thr must lie in [0, 1], got {args.conf_thr}")
    return MatchConfig(
        iou_threshold=args.iou_thr,
        confidence_threshold=args.conf_thr,
        aggregation=getattr(args, "aggregation", "global"),
        ap_method=getattr(args, "ap_method", "envelope"),
    )


def cmd_eval(args) -> int:
    config = _match_config(args)
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path.read_text())
    group_by = None if args.group_by == "none" else args.group_by
    evaluation = evaluate_dataset(manifest, config, root=manifest_path.parent, group_by=group_by)
    out_dir = _prepare_out_dir(args)
    _out_path(out_dir, "eval.csv").write_text(render_eval_csv(evaluation))
    _out_path(out_dir, "pr_curve.csv").write_text(render_pr_curve_csv(evaluation.overall.curve))
    # Summary row (always the pooled 'all' row) to stdout.
    print(render_eval_csv(replace(evaluation, group_by=None, groups={})), end="")
    return 0


def _read_labels(path: Path, kind: str):
    text = path.read_text()
    if kind == "auto":
        kind = detect_kind(text) or "gt"
    return parse_label_file(text, kind=kind), kind


def _write_pair(out_dir: Path, image_name: str, image, label_name: str | None, boxes):
    target = _out_path(out_dir, image_name)
    target.write_bytes(encode_raster(image))
    if label_name is not None:
        _out_path(out_dir, label_name).write_text(serialize_label_file(boxes))


def _guard_overwrite(out_dir: Path, inputs) -> None:
    resolved = {Path(p).resolve() for p in inputs}
    for p in inputs:
        sibling = Path(p).with_suffix(".txt")
        if sibling.exists():
            resolved.add(sibling.resolve())
    for p in resolved:
        target = (out_dir / p.name).resolve()
        _require(target != p, f"refusing to overwrite input {p}; pick another --out-dir")


def cmd_preprocess(args) -> int:
    out_dir = _prepare_out_dir(args)
    action = args.action
    if action == "enlarge":
        return _preprocess_enlarge(args, out_dir)
    if action == "crop":
        _require(args.width is not None and args.height is not None,
                 "crop requires --width and --height")
        _require(args.width >= 1 and args.height >= 1,
                 "--width and --height must be positive")
    elif action == "mask":
        _require(None not in (args.cx, args.cy, args.radius),
                 "mask requires --cx, --cy and --radius")
        _require(args.radius >= 0, f"--radius must be non-negative, got {args.radius}")
    elif action == "noise":
        _require(args.variance is not None and args.seed is not None,
                 "noise requires --variance and --seed (seeds are never defaulted)")
        _require(args.variance >= 0, f"--variance must be non-negative, got {args.variance}")
    _guard_overwrite(out_dir, args.inputs)
    for input_name in args.inputs:
        image_path = Path(input_name)
        image = decode_raster(image_path.read_bytes())
        label_path = image_path.with_suffix(".txt")
        boxes, label_name = [], None
        if label_path.exists():
            boxes, _ = _read_labels(label_path, args.kind)
            label_name = label_path.name
        if action == "crop":
            image, boxes = center_crop(image, boxes, args.width, args.height)
        elif action == "mask":
            image = circular_mask(image, args.cx, args.cy, args.radius)
        elif action == "noise":
            image = add_gaussian_noise(image, args.variance, args.seed)
        elif action == "rotate":
            image, boxes = rotate90(image, boxes)
        _write_pair(out_dir, image_path.name, image, label_name, boxes)
    return 0


def _preprocess_enlarge(args, out_dir: Path) -> int:
    _require((args.threshold is None) != (args.quantile is None),
             "enlarge requires exactly one of --threshold or --quantile")
    if args.threshold is not None:
        _require(0.0 < args.threshold <= 1.0,
                 f"--threshold must lie in (0, 1], got {args.threshold}")
    else:
        _require(0.0 <= args.quantile <= 1.0,
                 f"--quantile must lie in [0, 1], got {args.quantile}")
    _guard_overwrite(out_dir, args.inputs)
    parsed = []
    for input_name in args.inputs:
        path = Path(input_name)
        boxes, _ = _read_labels(path, args.kind)
        parsed.append((path.name, boxes))
    threshold = args.threshold
    if threshold is None:
        threshold = area_quantile((b.box for _, boxes in parsed for b in boxes), args.quantile)
    for name, boxes in parsed:
        enlarged = enlarge_small_boxes(boxes, threshold, mode=args.mode)
        _out_path(out_dir, name).write_text(serialize_label_file(enlarged))
    print(f"area_threshold={threshold:.9g}")
    return 0


def cmd_count(args) -> int:
    _require(0.0 <= args.conf_thr <= 1.0, f"--conf-thr must lie in [0, 1], got {args.conf_thr}")
    _require(args.volume_factor > 0, f"--volume-factor must be positive, got {args.volume_factor}")
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path.read_text())
    records = []
    for entry in manifest:
        annotation = load_image_annotation(entry, manifest_path.parent)
        records.append(count_image(annotation, args.conf_thr, truth_known=bool(entry.gt_path)))
    out_dir = _prepare_out_dir(args)
    _out_path(out_dir, "counts.csv").write_text(render_counts_csv(records, args.volume_factor))
    total = sum(r.predicted_count for r in records)
    print(
        f"images={len(records)} predicted={total} "
        f"estimated_total={extrapolate_pond(total, args.volume_factor):.1f}"
    )
    return 0


def cmd_fit(args) -> int:
    if args.csv is None:
        observations = bundled_stage_means()
    else:
        observations = load_observations_csv(Path(args.csv).read_text())
    if args.models == "all":
        kinds = tuple(GrowthModelKind)
    else:
        try:
            kinds = tuple(parse_model_kind(name) for name in args.models.split(","))
        except ValueError as err:
            raise CommandUsageError(f"--models: {err}") from None
    ranked = rank_models(observations, kinds, multi_start=args.multi_start, seed=args.seed)
    failed = [rm for rm in ranked if rm.error is not None]
    if failed:
        first = failed[0]
        print(f"error: {first.kind.value}: {first.error}", file=sys.stderr)
        return 1
    out_dir = _prepare_out_dir(args)
    lines = ["model,param_names,param_values,sse,r_squared,converged\n"]
    for rm in ranked:
        result = rm.result
        names = ";".join(PARAM_NAMES[result.kind])
        values = ";".join(f"{v:.9g}" for v in result.params)
        lines.append(
            f"{DISPLAY_NAMES[result.kind]},{names},{values},"
            f"{result.sse:.9g},{result.r_squared:.9g},{str(result.converged).lower()}\n"
        )
    _out_path(out_dir, "fits.csv").write_text("".join(lines))
    if args.svg is not None:
        svg = growth_chart_svg(observations, [rm.result for rm in ranked])
        _out_path(out_dir, args.svg).write_text(svg)
    for place, rm in enumerate(ranked, start=1):
        print(f"{place}. {DISPLAY_NAMES[rm.kind]} r_squared={rm.result.r_squared:.4f}")
    return 0


def cmd_report(args) -> int:
    config = _match_config(args)
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path.read_text())
    evaluation = evaluate_dataset(manifest, config, root=manifest_path.parent)
    items = [(entry.density_group, evaluation.per_image[entry.image_id]) for entry in manifest]
    report = density_summary(items)
    out_dir = _prepare_out_dir(args)
    csv_text = render_density_csv(report)
    _out_path(out_dir, "density_report.csv").write_text(csv_text)
    print(csv_text, end="")
    print(f"accuracy_strictly_decreasing={str(report.accuracy_decreases_with_density).lower()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="larvaekit",
        description="Detection evaluation, preprocessing, counting and growth fitting.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="evaluate predictions against ground truth")
    p_eval.add_argument("manifest", help="dataset manifest CSV")
    p_eval.add_argument("--iou-thr", type=float, default=0.5)
    p_eval.add_argument("--conf-thr", type=float, default=0.4)
    p_eval.add_argument("--aggregation", choices=AGGREGATIONS, default="global")
    p_eval.add_argument("--ap-method", choices=AP_METHODS, default="envelope")
    p_eval.add_argument("--group-by", choices=("none", "day_label", "density_group"),
                        default="none")
    p_eval.add_argument("--out-dir", default=".")
    p_eval.set_defaults(func=cmd_eval)

    p_pre = sub.add_parser("preprocess", help="transform images and their label files")
    p_pre.add_argument("action", choices=("crop", "mask", "noise", "rotate", "enlarge"))
    p_pre.add_argument("inputs", nargs="+",
                       help="image files (label files for the enlarge action); a sibling "
                            ".txt label file is transformed along with each image")
    p_pre.add_argument("--width", type=int)
    p_pre.add_argument("--height", type=int)
    p_pre.add_argument("--cx", type=float)
    p_pre.add_argument("--cy", type=float)
    p_pre.add_argument("--radius", type=float)
    p_pre.add_argument("--variance", type=float)
    p_pre.add_argument("--seed", type=int)
    p_pre.add_argument("--threshold", type=float, help="explicit area threshold for enlarge")
    p_pre.add_argument("--quantile", type=float,
                       help="derive the enlarge threshold from this area quantile")
    p_pre.add_argument("--mode", choices=("literal", "normalize"), default="literal")
    p_pre.add_argument("--kind", choices=("auto", "gt", "pred"), default="auto",
                       help="label-file shape; auto sniffs the field count")
    p_pre.add_argument("--out-dir", required=True)
    p_pre.set_defaults(func=cmd_preprocess)

    p_count = sub.add_parser("count", help="count detections and extrapolate to the pond")
    p_count.add_argument("manifest")
    p_count.add_argument("--conf-thr", type=float, default=0.4)
    p_count.add_argument("--volume-factor", type=float, default=DEFAULT_VOLUME_FACTOR)
    p_count.add_argument("--out-dir", default=".")
    p_count.set_defaults(func=cmd_count)

    p_fit = sub.add_parser("fit", help="fit growth models to age/length data")
    p_fit.add_argument("csv", nargs="?", default=None,
                       help="observations CSV (age_days,length_mm); defaults to the "
                            "bundled per-stage means")
    p_fit.add_argument("--models", default="all",
                       help="'all' or comma list: vbgm,gompertz,linear,power,exponential")
    p_fit.add_argument("--multi-start", action="store_true",
                       help="try 5 jittered initializations and keep the best SSE")
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--svg", default=None, metavar="NAME",
                       help="also write an SVG overlay with this name inside --out-dir")
    p_fit.add_argument("--out-dir", default=".")
    p_fit.set_defaults(func=cmd_fit)

    p_rep = sub.add_parser("report", help="per-density evaluation summary")
    p_rep.add_argument("manifest")
    p_rep.add_argument("--iou-thr", type=float, default=0.5)
    p_rep.add_argument("--conf-thr", type=float, default=0.4)
    p_rep.add_argument("--out-dir", default=".")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CommandUsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 2
    except (LarvaekitError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
