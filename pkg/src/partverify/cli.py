"""Command-line interface for batch evaluation runs.

Exit codes: 0 success, 1 internal error, 2 input validation error. Reports
embed their effective configuration (thresholds, beta, score threshold,
fill, seed) but never the thread count, so outputs are byte-identical for
any ``--threads`` value. Numbers printed to the console are rounded to two
decimals; files keep full precision.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import traceback
from pathlib import Path

import numpy as np
from PIL import Image

from . import masking, metrics, synth
from .geometry import ImageExtent
from .metrics import UndefinedMetricError
from .model import (
    Dataset,
    EvalConfig,
    Presence,
    ValidationError,
    load_dataset,
    load_detections,
    save_dataset,
    save_detections,
)

OUT_DIR_ENV = "PARTVERIFY_OUT"


def _out_dir(args) -> Path:
    out = Path(args.out if args.out else os.environ.get(OUT_DIR_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(doc, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def parse_grid(text: str) -> tuple[float, ...]:
    """Parse "start:step:stop" (inclusive) or a comma-separated list."""
    if ":" in text:
        fields = text.split(":")
        if len(fields) != 3:
            raise ValueError(f"grid must be start:step:stop, got {text!r}")
        start, step, stop = (float(x) for x in fields)
        if step <= 0 or stop < start:
            raise ValueError(f"grid {text!r} is not increasing")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 10) for i in range(n))
    return tuple(float(x) for x in text.split(","))


def _parse_fill(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError(f"fill must be R,G,B, got {text!r}")
    fill = tuple(int(p) for p in parts)
    if any(not 0 <= v <= 255 for v in fill):
        raise ValueError(f"fill components must be in [0, 255], got {text!r}")
    return fill


def _eval_config(args) -> EvalConfig:
    kwargs = {
        "t_present": args.tp,
        "t_missing": args.tm,
        "beta": args.beta,
        "score_threshold": args.score_threshold,
    }
    if getattr(args, "iou_grid", None):
        kwargs["ap_iou_grid"] = parse_grid(args.iou_grid)
    return EvalConfig(**kwargs)


# ---------------------------------------------------------------------------
# Subcommands

def cmd_verify(args) -> int:
    dataset = load_dataset(args.annotations, bbox_format=args.bbox_format)
    dets = load_detections(args.detections, dataset)
    config = _eval_config(args)
    report = metrics.verify(dataset, dets, config, threads=args.threads)
    out = _out_dir(args)
    _write_json(report.to_dict(), out / "verification.json")
    if args.csv:
        metrics.write_verification_csv(report, out / "verification_per_class.csv")
    print(
        f"R_present {report.r_present:.2f}  "
        f"R_missing {report.r_missing:.2f}  "
        f"F_vv {report.f_vv:.2f}"
    )
    return 0


def cmd_curves(args) -> int:
    dataset = load_dataset(args.annotations, bbox_format=args.bbox_format)
    dets = load_detections(args.detections, dataset)
    thresholds = parse_grid(args.thresholds)
    out = _out_dir(args)
    groups = [Presence(g) for g in args.group.split(",")]
    for group in groups:
        curve = metrics.recall_curve(
            dataset, dets, group, thresholds, args.score_threshold, threads=args.threads
        )
        metrics.write_curve_csv(curve, out / f"recall_curve_{group.value}.csv")
        doc = curve.to_dict()
        doc["config"] = {"score_threshold": args.score_threshold}
        _write_json(doc, out / f"recall_curve_{group.value}.json")
        print(
            f"{group.value}: recall {curve.recalls[0]:.2f} at IoU {curve.thresholds[0]:.2f}"
            f" -> {curve.recalls[-1]:.2f} at IoU {curve.thresholds[-1]:.2f}"
        )
    return 0


def cmd_ap(args) -> int:
    dataset = load_dataset(args.annotations, bbox_format=args.bbox_format)
    dets = load_detections(args.detections, dataset)
    config = EvalConfig(ap_iou_grid=parse_grid(args.iou_grid))
    report = metrics.ap_report(
        dataset, dets, config, interpolation=args.interpolation, threads=args.threads
    )
    out = _out_dir(args)
    _write_json(report.to_dict(), out / "ap_report.json")
    if args.csv:
        metrics.write_ap_csv(report, out / "ap_per_class.csv")
    mean = "undefined" if report.mean_ap is None else f"{report.mean_ap:.2f}"
    print(f"mAP {mean} over IoU {report.iou_grid[0]:.2f}..{report.iou_grid[-1]:.2f}")
    if report.excluded:
        print(f"excluded (no present ground truth): {', '.join(report.excluded)}")
    return 0


def cmd_stats(args) -> int:
    dataset = load_dataset(args.annotations, bbox_format=args.bbox_format)
    stats = metrics.layout_stats(dataset)
    out = _out_dir(args)
    _write_json(stats.to_dict(), out / "layout_stats.json")
    if args.csv:
        metrics.write_layout_csv(stats, out / "layout.csv")
    ratios = "  ".join(f"{k} {v:.2f}" for k, v in stats.state_ratios.items())
    print(f"{len(dataset.annotations)} annotations; state ratios: {ratios}")
    return 0


def cmd_synth(args) -> int:
    spec = synth.load_layout_spec(args.spec) if args.spec else synth.default_layout()
    dataset = synth.generate_dataset(spec, args.n, args.seed)
    out = _out_dir(args)
    save_dataset(dataset, out / "annotations.json")
    detectors = [d for d in args.detectors.split(",") if d] if args.detectors else []
    for kind in detectors:
        params = synth.DetectorParams.for_kind(kind, args.seed, args.drop, args.jitter)
        dets = synth.run_detector(dataset, params)
        save_detections(dets, out / f"detections_{kind}.json")
    if args.render:
        synth.write_renders(dataset, out / "images")
    _write_json(
        {
            "seed": args.seed,
            "n_images": args.n,
            "detectors": detectors,
            "render": bool(args.render),
            "drop": args.drop,
            "jitter": args.jitter,
            "layout": json.loads(_layout_json(spec)),
        },
        out / "synth_config.json",
    )
    print(
        f"wrote {args.n} images, {len(dataset.annotations)} annotations, "
        f"{len(detectors)} detector file(s) to {out}"
    )
    return 0


def _layout_json(spec: synth.LayoutSpec) -> str:
    doc = {
        "width": spec.width,
        "height": spec.height,
        "state_probs": {s.value: p for s, p in zip(synth.STATE_ORDER, spec.state_probs)},
        "parts": {
            name: {"cx": pl.cx, "cy": pl.cy, "w": pl.w, "h": pl.h,
                   "pos_std": pl.pos_std, "size_std": pl.size_std}
            for name, pl in spec.parts.items()
        },
    }
    return json.dumps(doc)


def _pick_targets(dataset: Dataset, part: str | None, seed: int):
    """One present-part target per image; seeded choice unless a class is
    forced. Images without an eligible target are skipped."""
    by_image: dict[str, list] = {}
    for ann in dataset.annotations:
        if ann.presence is Presence.PRESENT:
            by_image.setdefault(ann.image_id, []).append(ann)
    targets = []
    for i, im in enumerate(dataset.images):
        anns = by_image.get(im.image_id, [])
        if part is not None:
            chosen = [a for a in anns if a.part_class == part]
            if chosen:
                targets.append(chosen[0])
            continue
        if anns:
            rng = synth.substream(seed, 4, i)
            targets.append(anns[int(rng.integers(len(anns)))])
    return targets


def cmd_occlude(args) -> int:
    dataset = load_dataset(args.annotations, bbox_format=args.bbox_format)
    if args.part is not None and args.part not in dataset.vocabulary:
        raise ValidationError(f"target class {args.part!r} not in vocabulary")
    grid = parse_grid(args.grid)
    if any(c < 0 for c in grid):
        raise ValidationError("context sizes must be non-negative")
    fill = _parse_fill(args.fill)
    images_dir = Path(args.images)
    out = _out_dir(args) / args.experiment
    targets = _pick_targets(dataset, args.part, args.seed)
    if not targets:
        raise ValidationError("no present parts eligible as experiment targets")
    planners = {
        "hide_bg": masking.plan_hide_bg,
        "hide_fg": masking.plan_hide_fg,
        "location_shift": masking.plan_location_shift,
    }
    planner = planners[args.experiment]
    images_by_id = dataset.images_by_id

    rasters: dict[str, np.ndarray] = {}
    for ann in targets:
        im = images_by_id[ann.image_id]
        path = images_dir / (im.file_name or f"{im.image_id}.png")
        if not path.exists():
            raise ValidationError(f"missing image file {path}")
        rasters[ann.image_id] = np.asarray(Image.open(path).convert("RGB"))

    plans = []
    for c in grid:
        c_dir = out / masking.c_label(c)
        c_dir.mkdir(parents=True, exist_ok=True)
        for ann in targets:
            im = images_by_id[ann.image_id]
            plan = planner(ann, c, ImageExtent(im.width, im.height), fill)
            plans.append(plan)

    def render_one(plan: masking.MaskPlan) -> None:
        result = masking.apply_plan(rasters[plan.image_id], plan)
        path = out / masking.c_label(plan.c) / f"{plan.image_id}.png"
        Image.fromarray(result).save(path, format="PNG")

    metrics.map_ordered(render_one, plans, threads=args.threads)
    masking.write_manifest(
        plans,
        out / "manifest.json",
        config={
            "experiment": args.experiment,
            "grid": list(grid),
            "fill": list(fill),
            "seed": args.seed,
            "part": args.part,
        },
    )
    print(
        f"wrote {len(plans)} manipulated images "
        f"({len(targets)} targets x {len(grid)} context sizes) to {out}"
    )
    return 0


def cmd_context_eval(args) -> int:
    plans, config = masking.load_manifest(args.manifest)
    dataset = load_dataset(args.annotations, bbox_format=args.bbox_format)
    dets_dir = Path(args.dets_dir)
    cs = sorted({p.c for p in plans})
    dets_by_c = {}
    for c in cs:
        path = dets_dir / f"{masking.c_label(c)}.json"
        if not path.exists():
            raise ValidationError(f"missing detection file for context size {c}: {path}")
        dets_by_c[c] = load_detections(path, dataset)
    report = masking.evaluate_context_run(
        plans, dets_by_c, iou_threshold=args.iou, score_threshold=args.score_threshold
    )
    out = _out_dir(args)
    doc = report.to_dict()
    doc["config"] = {
        "iou_threshold": args.iou,
        "score_threshold": args.score_threshold,
        "experiment": config.get("experiment"),
        "fill": config.get("fill"),
        "seed": config.get("seed"),
    }
    _write_json(doc, out / f"context_{report.kind}.json")
    masking.write_context_csv(report, out / f"context_{report.kind}.csv")
    for p in report.points:
        print(f"c={p.c:g}: accuracy {p.accuracy:.2f} ({p.n_parts} parts)")
    return 0


# ---------------------------------------------------------------------------
# Parser

def _add_common_eval_flags(sub, detections: bool = True) -> None:
    sub.add_argument("annotations", help="annotation file (JSON)")
    if detections:
        sub.add_argument("detections", help="detection file (JSON)")
    sub.add_argument("--bbox-format", choices=("xyxy", "xywh"), default="xyxy",
                     help="box convention of the annotation file")
    sub.add_argument("--out", default=None,
                     help=f"output directory (default ${OUT_DIR_ENV} or '.')")
    sub.add_argument("--threads", type=int, default=os.cpu_count(),
                     help="worker threads for per-image work")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partverify",
        description="Evaluation toolkit for visual part verification.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("verify", help="present/missing recall and the F-beta score")
    _add_common_eval_flags(p)
    p.add_argument("--tp", type=float, default=0.5, help="IoU threshold for present parts")
    p.add_argument("--tm", type=float, default=0.1, help="IoU threshold for missing parts")
    p.add_argument("--beta", type=float, default=0.1, help="weight of present recall")
    p.add_argument("--score-threshold", type=float, default=0.0)
    p.add_argument("--csv", action="store_true", help="also write the per-class CSV")
    p.set_defaults(func=cmd_verify)

    p = subs.add_parser("curves", help="recall vs IoU threshold curves")
    _add_common_eval_flags(p)
    p.add_argument("--group", default="missing",
                   help="comma list of presence groups (present,missing)")
    p.add_argument("--thresholds", default="0:0.05:1",
                   help="start:step:stop or comma list of IoU thresholds")
    p.add_argument("--score-threshold", type=float, default=0.0)
    p.set_defaults(func=cmd_curves)

    p = subs.add_parser("ap", help="per-class average precision and mAP")
    _add_common_eval_flags(p)
    p.add_argument("--iou-grid", default="0.5:0.05:0.95",
                   help="IoU threshold grid the AP is averaged over")
    p.add_argument("--interpolation", choices=("101", "11"), default="101")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_ap)

    p = subs.add_parser("stats", help="layout statistics and state distribution")
    _add_common_eval_flags(p, detections=False)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = subs.add_parser("synth", help="generate a synthetic dataset and reference detectors")
    p.add_argument("--spec", default=None, help="layout spec JSON (default: built-in layout)")
    p.add_argument("--n", type=int, required=True, help="number of images")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--detectors", default="oracle,prior",
                   help="comma list of reference detectors (oracle,prior,noisy)")
    p.add_argument("--drop", type=float, default=None, help="noisy: drop probability")
    p.add_argument("--jitter", type=float, default=None, help="noisy: box jitter std, pixels")
    p.add_argument("--render", action="store_true", help="write one PNG per image")
    p.add_argument("--out", default=None)
    p.add_argument("--threads", type=int, default=os.cpu_count())
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("occlude", help="build context-manipulation images and manifest")
    _add_common_eval_flags(p, detections=False)
    p.add_argument("--images", required=True, help="directory of source rasters")
    p.add_argument("--experiment", choices=masking.KINDS, required=True)
    p.add_argument("--grid", default=",".join(str(c) for c in masking.DEFAULT_CONTEXT_GRID),
                   help="comma list of context sizes (pixels per side)")
    p.add_argument("--part", default=None, help="force this class as the target part")
    p.add_argument("--seed", type=int, default=0, help="seed for per-image target choice")
    p.add_argument("--fill", default=",".join(str(v) for v in masking.DEFAULT_FILL),
                   help="hidden-region fill color R,G,B")
    p.set_defaults(func=cmd_occlude)

    p = subs.add_parser("context-eval", help="score detections on a manipulated image tree")
    p.add_argument("manifest", help="manifest written by occlude")
    p.add_argument("annotations", help="annotation file the detections refer to")
    p.add_argument("--dets-dir", required=True,
                   help="directory with one detection file per context size (c<value>.json)")
    p.add_argument("--iou", type=float, default=0.25)
    p.add_argument("--score-threshold", type=float, default=0.0)
    p.add_argument("--bbox-format", choices=("xyxy", "xywh"), default="xyxy")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_context_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, UndefinedMetricError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # internal error
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
