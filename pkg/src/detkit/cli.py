"""Command-line front door.

Subcommands: ``eval``, ``nms``, ``augment``, ``anchors``,
``simulate-cascade``, ``lr-dump``, ``gradcheck``. Options resolve with
precedence flags > config file > library defaults. Exit codes: 0 success,
1 validation/usage error, 2 I/O or dataset-integrity error. All outputs
are deterministic functions of the inputs and ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import augment as aug
from . import plots
from .deform import run_gradcheck
from .evaluation import DatasetError, load_coco, load_results, map_50_95
from .geometry import Box, clip
from .pyramid import PyramidSpec, gen_anchors
from .cascade import simulate_refinement
from .schedule import ScheduleConfig, lr_at
from .suppression import FINAL_IOU_THR, from_records, nms, soft_nms, to_records

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2


class CliError(Exception):
    """Validation failure: bad flags, bad config, bad parameter values."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"{message}\n{self.format_usage()}")


# Per-subcommand option defaults; config files may override any of these
# and nothing else.
CONFIG_SCHEMA = {
    "eval": {
        "iou_min": 0.5, "iou_max": 0.95, "iou_step": 0.05, "max_dets": None,
    },
    "nms": {
        "iou_thr": None, "soft": False, "method": "gaussian", "sigma": 0.5,
        "score_floor": 0.001, "class_agnostic": False,
    },
    "augment": {"chain": []},
    "anchors": {
        "strides": [4, 8, 16, 32], "scales": [8.0], "ratios": [0.5, 1.0, 2.0],
    },
    "simulate-cascade": {
        "num_gts": 8, "proposals_per_gt": 40, "thresholds": [0.5, 0.6, 0.7],
        "strength": 0.5, "center_sigma": 0.35, "size_sigma": 0.35, "bins": 10,
    },
    "lr-dump": {
        "base_lr": 0.005, "warmup_iters": 500,
        "warmup_start_factor": 1.0 / 3.0, "step_epochs": [8, 11],
        "gamma": 0.1, "iters_per_epoch": 1000, "step_lrs": [0.0005, 0.0001],
    },
    "gradcheck": {"trials": 20, "tolerance": 1e-4},
}


def load_config(path) -> dict:
    """Read a config file and reject unknown sections or keys."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CliError(f"config {path} must be a JSON object")
    for section, values in doc.items():
        if section not in CONFIG_SCHEMA:
            raise CliError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise CliError(f"config section {section!r} must be an object")
        for key in values:
            if key not in CONFIG_SCHEMA[section]:
                raise CliError(f"unknown key {key!r} in config section {section!r}")
    return doc


def _options(command: str, args, flag_keys: dict[str, str]) -> dict:
    """Merge defaults, config section, and explicitly passed flags."""
    opts = dict(CONFIG_SCHEMA[command])
    if getattr(args, "config", None):
        opts.update(load_config(args.config).get(command, {}))
    for opt_key, attr in flag_keys.items():
        value = getattr(args, attr)
        if value is not None:
            opts[opt_key] = value
    return opts


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _floats_csv(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints_csv(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _cmd_eval(args) -> int:
    opts = _options("eval", args, {
        "iou_min": "iou_min", "iou_max": "iou_max",
        "iou_step": "iou_step", "max_dets": "max_dets",
    })
    dataset = load_coco(args.ann)
    records = load_results(args.dets)
    result = map_50_95(records, dataset, opts["iou_min"], opts["iou_max"],
                       opts["iou_step"], opts["max_dets"])
    names = {c.id: c.name for c in dataset.categories}
    print(result.table(names))
    if args.out:
        _write_text(args.out, _json_text(result.to_json_dict()))
    if args.plot:
        plots.save_eval_chart(result, names, args.plot)
    return EXIT_OK


# ---------------------------------------------------------------------------
# nms
# ---------------------------------------------------------------------------

def _cmd_nms(args) -> int:
    opts = _options("nms", args, {
        "iou_thr": "iou_thr", "soft": "soft", "method": "method",
        "sigma": "sigma", "score_floor": "score_floor",
        "class_agnostic": "class_agnostic",
    })
    records = load_results(args.dets)
    per_image = from_records(
        [
            {
                "image_id": r.image_id, "category_id": r.category_id,
                "bbox": list(r.box.as_xywh()), "score": r.score,
            }
            for r in records
        ]
    )
    iou_thr = opts["iou_thr"]
    if iou_thr is None:
        # hard mode drops at the final-stage overlap; soft mode keeps the
        # conventional lower decay gate
        iou_thr = 0.3 if opts["soft"] else FINAL_IOU_THR
    class_aware = not opts["class_agnostic"]

    out_records = []
    for image_id in sorted(per_image):
        dets = per_image[image_id]
        if opts["soft"]:
            kept = soft_nms(dets, iou_thr=iou_thr, sigma=opts["sigma"],
                            score_floor=opts["score_floor"],
                            method=opts["method"], class_aware=class_aware)
        else:
            kept = nms(dets, iou_thr=iou_thr, class_aware=class_aware)
        out_records.extend(to_records(kept, image_id))
    _write_text(args.out, _json_text(out_records))
    mode = "soft" if opts["soft"] else "hard"
    print(f"{mode} nms kept {len(out_records)} of {len(records)} detections")
    return EXIT_OK


# ---------------------------------------------------------------------------
# augment
# ---------------------------------------------------------------------------

_CHAIN_OPS = {
    "hflip": set(),
    "vflip": set(),
    "rotate90": {"k"},
    "cutout": {"rects", "fill"},
    "multiscale_resize": {"width", "height"},
    "bbox_jitter": {"magnitude"},
}


def _apply_chain_op(sample: aug.Sample, step: dict, seed: int) -> aug.Sample:
    if not isinstance(step, dict) or "op" not in step:
        raise CliError(f"chain step must be an object with an 'op' key: {step!r}")
    op = step["op"]
    if op not in _CHAIN_OPS:
        raise CliError(f"unknown chain op {op!r}")
    extra = set(step) - {"op"} - _CHAIN_OPS[op]
    if extra:
        raise CliError(f"unknown keys {sorted(extra)} for chain op {op!r}")
    if op == "hflip":
        return aug.hflip(sample)
    if op == "vflip":
        return aug.vflip(sample)
    if op == "rotate90":
        return aug.rotate90(sample, int(step.get("k", 1)))
    if op == "cutout":
        rects = [Box(*map(float, r)) for r in step.get("rects", [])]
        return aug.cutout(sample, rects, float(step.get("fill", 0.0)))
    if op == "multiscale_resize":
        return aug.multiscale_resize(
            sample, (int(step["width"]), int(step["height"]))
        )
    # bbox_jitter: image untouched, boxes perturbed then clipped back in.
    boxes = aug.bbox_jitter(sample.boxes, float(step.get("magnitude", 0.1)),
                            seed)
    boxes = [clip(b, sample.width, sample.height) for b in boxes]
    return aug.Sample(sample.image, boxes, list(sample.labels),
                      list(sample.weights))


def _load_image(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=float)
    return arr.transpose(2, 0, 1)  # HWC -> CHW


def _save_image(path, image: np.ndarray) -> None:
    from PIL import Image

    arr = np.clip(np.rint(image), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr).save(path)


def _cmd_augment(args) -> int:
    opts = _options("augment", args, {})
    chain = opts["chain"]
    if not isinstance(chain, list):
        raise CliError("augment chain must be a list of op objects")
    dataset = load_coco(args.ann)
    if args.image_id is not None:
        matches = [img for img in dataset.images if img.id == args.image_id]
        if not matches:
            raise CliError(f"image id {args.image_id} not in annotation file")
        image_info = matches[0]
    elif len(dataset.images) == 1:
        image_info = dataset.images[0]
    else:
        raise CliError("annotation file has several images; pass --image-id")

    image = _load_image(args.image)
    anns = [a for a in dataset.annotations if a.image_id == image_info.id]
    sample = aug.Sample(image, [a.box for a in anns],
                        [a.category_id for a in anns])
    for idx, step in enumerate(chain):
        sample = _apply_chain_op(sample, step, args.seed + idx)

    _save_image(args.out_image, sample.image)
    out_w = int(sample.image.shape[2])
    out_h = int(sample.image.shape[1])
    doc = {
        "images": [{
            "id": image_info.id, "width": out_w, "height": out_h,
            "file_name": args.out_image.rsplit("/", 1)[-1],
        }],
        "annotations": [
            {
                "id": a.id, "image_id": image_info.id,
                "category_id": a.category_id,
                "bbox": list(b.as_xywh()),
                "iscrowd": int(a.iscrowd),
            }
            for a, b in zip(anns, sample.boxes)
        ],
        "categories": [
            {"id": c.id, "name": c.name} for c in dataset.categories
        ],
    }
    _write_text(args.out_ann, _json_text(doc))
    print(f"applied {len(chain)} ops to image {image_info.id} "
          f"({len(anns)} boxes)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# anchors
# ---------------------------------------------------------------------------

def _cmd_anchors(args) -> int:
    opts = _options("anchors", args, {
        "strides": "strides", "scales": "scales", "ratios": "ratios",
    })
    spec = PyramidSpec.from_strides(opts["strides"], opts["scales"],
                                    opts["ratios"])
    per_level = gen_anchors(spec, args.width, args.height)
    rows = []
    for name, boxes in zip(spec.names, per_level):
        for b in boxes:
            rows.append((name, repr(b.x1), repr(b.y1), repr(b.x2), repr(b.y2)))
    _write_text(args.out, _csv_text(("level", "x1", "y1", "x2", "y2"), rows))
    print(f"wrote {len(rows)} anchors over {len(per_level)} levels to {args.out}")
    if args.plot:
        plots.save_anchor_plot(spec.names, per_level, args.width, args.height,
                               args.plot)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate-cascade
# ---------------------------------------------------------------------------

def _cmd_simulate_cascade(args) -> int:
    opts = _options("simulate-cascade", args, {
        "num_gts": "num_gts", "proposals_per_gt": "proposals_per_gt",
        "thresholds": "thresholds", "strength": "strength", "bins": "bins",
    })
    thresholds = tuple(opts["thresholds"])
    stages = simulate_refinement(
        args.seed, num_gts=opts["num_gts"],
        proposals_per_gt=opts["proposals_per_gt"], thresholds=thresholds,
        strength=opts["strength"], center_sigma=opts["center_sigma"],
        size_sigma=opts["size_sigma"],
    )
    names = ["proposals"] + [f"stage{i + 1}" for i in range(len(thresholds))]
    bins = int(opts["bins"])
    edges = np.linspace(0.0, 1.0, bins + 1)
    rows = []
    counts_per_stage = []
    for name, ious in zip(names, stages):
        counts, _ = np.histogram(ious, bins=bins, range=(0.0, 1.0))
        counts_per_stage.append(counts)
        for b in range(bins):
            rows.append((name, repr(float(edges[b])), repr(float(edges[b + 1])),
                         int(counts[b])))
    _write_text(args.out,
                _csv_text(("stage", "bin_lo", "bin_hi", "count"), rows))
    top = thresholds[-1]
    for name, ious in zip(names, stages):
        frac = float(np.mean(ious >= top))
        print(f"{name}: fraction IoU >= {top:g} = {frac:.4f}")
    if args.plot:
        plots.save_quality_histograms(names, counts_per_stage, args.plot)
    return EXIT_OK


# ---------------------------------------------------------------------------
# lr-dump
# ---------------------------------------------------------------------------

def _cmd_lr_dump(args) -> int:
    opts = _options("lr-dump", args, {
        "base_lr": "base_lr", "warmup_iters": "warmup_iters",
        "step_epochs": "step_epochs", "iters_per_epoch": "iters_per_epoch",
    })
    step_lrs = opts["step_lrs"]
    cfg = ScheduleConfig(
        base_lr=opts["base_lr"], warmup_iters=opts["warmup_iters"],
        warmup_start_factor=opts["warmup_start_factor"],
        step_epochs=tuple(opts["step_epochs"]), gamma=opts["gamma"],
        iters_per_epoch=opts["iters_per_epoch"],
        step_lrs=None if step_lrs is None else tuple(step_lrs),
    )
    iters = list(range(args.iters))
    lrs = [lr_at(i, cfg) for i in iters]
    rows = [(i, repr(lr)) for i, lr in zip(iters, lrs)]
    _write_text(args.out, _csv_text(("iter", "lr"), rows))
    print(f"wrote {len(rows)} schedule points to {args.out}")
    if args.plot:
        plots.save_lr_curve(iters, lrs, args.plot)
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def _cmd_gradcheck(args) -> int:
    opts = _options("gradcheck", args, {
        "trials": "trials", "tolerance": "tolerance",
    })
    reports = run_gradcheck(seed=args.seed, trials=opts["trials"])
    keys = ("input", "weight", "offsets", "bilinear")
    worst = {k: max(r[k] for r in reports) for k in keys}
    for k in keys:
        print(f"{k:>8}: max relative error {worst[k]:.3e}")
    if args.out:
        rows = [
            (r["trial"],) + tuple(repr(r[k]) for k in keys) for r in reports
        ]
        _write_text(args.out, _csv_text(("trial",) + keys, rows))
    if args.plot:
        plots.save_gradcheck_chart(reports, opts["tolerance"], args.plot)
    ok = all(v <= opts["tolerance"] for v in worst.values())
    print(f"gradcheck {'PASSED' if ok else 'FAILED'} "
          f"(tolerance {opts['tolerance']:g}, {len(reports)} trials)")
    return EXIT_OK if ok else EXIT_USAGE


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="detkit",
                     description="Detection-pipeline numerics toolbox")
    sub = parser.add_subparsers(dest="command", metavar="command",
                                parser_class=_Parser)

    p = sub.add_parser("eval", help="score a COCO results file against annotations")
    p.add_argument("--ann", required=True, help="COCO annotation JSON")
    p.add_argument("--dets", required=True, help="COCO results JSON")
    p.add_argument("--iou-min", dest="iou_min", type=float)
    p.add_argument("--iou-max", dest="iou_max", type=float)
    p.add_argument("--iou-step", dest="iou_step", type=float)
    p.add_argument("--max-dets", dest="max_dets", type=int)
    p.add_argument("--out", help="write the result as JSON")
    p.add_argument("--plot", help="write a per-class AP chart (PNG)")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("nms", help="suppress duplicates in a results file")
    p.add_argument("--dets", required=True, help="COCO results JSON")
    p.add_argument("--out", required=True, help="rescored results JSON")
    p.add_argument("--soft", action="store_const", const=True, default=None)
    p.add_argument("--method", choices=("linear", "gaussian"))
    p.add_argument("--iou-thr", dest="iou_thr", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--score-floor", dest="score_floor", type=float)
    p.add_argument("--class-agnostic", dest="class_agnostic",
                   action="store_const", const=True, default=None)
    p.add_argument("--config")
    p.set_defaults(func=_cmd_nms)

    p = sub.add_parser("augment",
                       help="apply a configured transform chain to an image")
    p.add_argument("--image", required=True, help="input PNG/PPM image")
    p.add_argument("--ann", required=True, help="COCO annotation JSON")
    p.add_argument("--out-image", dest="out_image", required=True)
    p.add_argument("--out-ann", dest="out_ann", required=True)
    p.add_argument("--image-id", dest="image_id", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="config JSON with the augment chain")
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("anchors", help="dump multi-level anchors as CSV")
    p.add_argument("--width", required=True, type=int)
    p.add_argument("--height", required=True, type=int)
    p.add_argument("--strides", type=_ints_csv)
    p.add_argument("--scales", type=_floats_csv)
    p.add_argument("--ratios", type=_floats_csv)
    p.add_argument("--out", required=True, help="anchor CSV path")
    p.add_argument("--plot", help="write an anchor layout figure (PNG)")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_anchors)

    p = sub.add_parser("simulate-cascade",
                       help="per-stage box-quality histograms on synthetic scenes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-gts", dest="num_gts", type=int)
    p.add_argument("--proposals-per-gt", dest="proposals_per_gt", type=int)
    p.add_argument("--thresholds", type=_floats_csv)
    p.add_argument("--strength", type=float)
    p.add_argument("--bins", type=int)
    p.add_argument("--out", required=True, help="histogram CSV path")
    p.add_argument("--plot", help="write per-stage histogram figure (PNG)")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_simulate_cascade)

    p = sub.add_parser("lr-dump", help="dump the learning-rate schedule as CSV")
    p.add_argument("--iters", required=True, type=int)
    p.add_argument("--base-lr", dest="base_lr", type=float)
    p.add_argument("--warmup-iters", dest="warmup_iters", type=int)
    p.add_argument("--step-epochs", dest="step_epochs", type=_ints_csv)
    p.add_argument("--iters-per-epoch", dest="iters_per_epoch", type=int)
    p.add_argument("--out", required=True, help="schedule CSV path")
    p.add_argument("--plot", help="write the LR curve figure (PNG)")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_lr_dump)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of the deformable kernels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--out", help="per-trial error CSV")
    p.add_argument("--plot", help="write the error chart (PNG)")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            raise CliError(parser.format_usage())
        return args.func(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
