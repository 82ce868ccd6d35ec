"""Command-line entry point.

One binary, subcommands per pipeline. Every command is deterministic
given its flags and seed; commands with an output directory write a
run.json echoing the resolved configuration so any output can be
reproduced byte for byte. Exit codes: 0 ok, 1 runtime/validation
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import (anova_oneway, category_centers, l2_distance,
                       parts_topk, portion_hot, saliency_map, scalarize)
from .attacks import AttackConfig, grad_cam
from .datasets import gen_m2nist, load_manifest, write_idx_images, \
    write_idx_multilabel, write_manifest
from .dpwn import load_model
from .errors import DiffpathError, ShapeError
from .imageio import write_pnm
from .pathways import PathwayOptions, extract_pathways, save_result
from .runtime import forward_trace
from .studies import (adversarial_study, fmt_float, overlap_report,
                      read_portion_matrix, transform_study, write_csv)

# ---------------------------------------------------------------------------
# helpers


def _channel_mask_arg(value: str) -> str:
    if value == "off" or (value.startswith("topk:") and value[5:].isdigit()
                          and int(value[5:]) >= 1):
        return value
    raise argparse.ArgumentTypeError("expected 'off' or 'topk:N'")


def _engine_options(args) -> PathwayOptions:
    mask = getattr(args, "channel_mask", "off")
    threads = args.threads if args.threads else (os.cpu_count() or 1)
    return PathwayOptions(
        channel_mask=None if mask == "off" else int(mask[5:]),
        chunk=args.chunk, threads=threads)


def _mkout(out) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _write_run(out: Path, args, **extra) -> None:
    # chunk/threads never shape the values, so reruns under a different
    # worker count must leave every output file byte-identical
    skip = ("func", "chunk", "threads")
    cfg = {k: (str(v) if isinstance(v, Path) else v)
           for k, v in vars(args).items() if k not in skip}
    cfg.update(extra)
    _write_json(out / "run.json", cfg)


def _load_model_dataset(args):
    model, weights = load_model(args.model)
    dataset, preproc = load_manifest(args.dataset)
    return model, weights, dataset, preproc


def _image_at(dataset, preproc, index: int):
    if not 0 <= index < len(dataset):
        raise ShapeError(f"index {index} out of range [0,{len(dataset)})")
    return preproc.apply(dataset.images[index])


def _save_u8_image(img_u8: np.ndarray, path: Path) -> None:
    arr = np.asarray(img_u8, dtype=np.float64) / 255.0
    write_pnm(arr[0] if arr.shape[0] == 1 else arr, path)


def _label_of(dataset, index: int) -> int:
    return -1 if dataset.multilabel else int(dataset.labels[index])


def _render_parts(assignment, path: Path) -> None:
    # first-winner index as gray level; 0 = unassigned
    winners = assignment.winners[:, :, 0].astype(np.float64)
    c = max(1, len(assignment.area_ratios))
    write_pnm(np.where(winners >= 0, (winners + 1) / c, 0.0), path)


def _portion_row(model, weights, image, args, engine):
    result = extract_pathways(model, weights, image, engine)
    return portion_hot(result, args.topk), result


# ---------------------------------------------------------------------------
# subcommands


def cmd_classify(args) -> int:
    model, weights, dataset, preproc = _load_model_dataset(args)
    image = _image_at(dataset, preproc, args.index)
    trace = forward_trace(model, weights, image)
    payload = {"prediction": trace.predicted,
               "logits": [float(v) for v in trace.logits]}
    print(json.dumps(payload, sort_keys=True))
    if args.out:
        out = _mkout(args.out)
        _write_json(out / "prediction.json", payload)
        _write_run(out, args)
    return 0


def cmd_pathways(args) -> int:
    model, weights, dataset, preproc = _load_model_dataset(args)
    image = _image_at(dataset, preproc, args.index)
    engine = _engine_options(args)
    out = _mkout(args.out)
    result = extract_pathways(model, weights, image, engine)
    save_result(result, out / "aggregates.dpwn")
    _write_json(out / "options.json", engine.persisted())
    vec = portion_hot(result, args.topk)
    write_csv(out / "portion_hot.csv",
              ["id"] + [f"v{i}" for i in range(len(vec.values))],
              [[args.index] + [float(v) for v in vec.values]])
    heat, norm = saliency_map(result)
    write_pnm(norm, out / "saliency.pgm")
    if not args.no_masks_dump:
        for cursor, agg in enumerate(result.aggregates):
            pa = parts_topk(agg, min(args.topk, agg.values.shape[2]))
            _render_parts(pa, out / f"parts_L{cursor:02d}_{agg.name}.pgm")
    _write_run(out, args)
    return 0


def cmd_parts(args) -> int:
    model, weights, dataset, preproc = _load_model_dataset(args)
    image = _image_at(dataset, preproc, args.index)
    engine = _engine_options(args)
    out = _mkout(args.out)
    result = extract_pathways(model, weights, image, engine)
    agg = result.aggregates[-1] if args.layer is None else next(
        (a for a in result.aggregates if a.name == args.layer), None)
    if agg is None:
        raise ShapeError(f"layer {args.layer!r} is not a pathway layer")
    pa = parts_topk(agg, min(args.topk, agg.values.shape[2]))
    _render_parts(pa, out / "parts.pgm")
    _write_json(out / "parts.json", {
        "layer": pa.name, "k": pa.k,
        "pixel_counts": [int(v) for v in pa.pixel_counts],
        "area_ratios": [float(v) for v in pa.area_ratios]})
    _write_run(out, args)
    return 0


def cmd_saliency(args) -> int:
    model, weights, dataset, preproc = _load_model_dataset(args)
    image = _image_at(dataset, preproc, args.index)
    out = _mkout(args.out)
    result = extract_pathways(model, weights, image, _engine_options(args))
    heat, norm = saliency_map(result, args.layer)
    write_pnm(norm, out / "saliency.pgm")
    _write_json(out / "saliency.json", {
        "layer": args.layer or result.aggregates[-1].name,
        "min": float(heat.min()), "max": float(heat.max())})
    _write_run(out, args)
    return 0


def cmd_portion_hot(args) -> int:
    model, weights, dataset, preproc = _load_model_dataset(args)
    engine = _engine_options(args)
    out = _mkout(args.out)
    if args.indices:
        indices = [int(v) for v in args.indices.split(",")]
    else:
        indices = list(range(len(dataset) if args.limit is None
                             else min(args.limit, len(dataset))))
    rows = []
    width = None
    for idx in indices:
        image = _image_at(dataset, preproc, idx)
        vec, _ = _portion_row(model, weights, image, args, engine)
        width = len(vec.values)
        rows.append([idx, _label_of(dataset, idx)] + [float(v) for v in vec.values])
    write_csv(out / "portion_hot_matrix.csv",
              ["id", "label"] + [f"v{i}" for i in range(width or 0)], rows)
    _write_run(out, args)
    return 0


def cmd_distances(args) -> int:
    ids, _, mat = read_portion_matrix(args.matrix)
    out = _mkout(args.out)
    rows = [[ids[a], ids[b], float(np.linalg.norm(mat[a] - mat[b]))]
            for a in range(len(ids)) for b in range(a + 1, len(ids))]
    write_csv(out / "distances.csv", ["id_a", "id_b", "distance"], rows)
    _write_run(out, args)
    return 0


def cmd_centers(args) -> int:
    ids, labels, mat = read_portion_matrix(args.matrix)
    out = _mkout(args.out)
    centers, global_mean = category_centers(list(mat), labels)
    rows = [[str(lb)] + [float(v) for v in centers[lb]] for lb in sorted(centers)]
    rows.append(["all"] + [float(v) for v in global_mean])
    write_csv(out / "centers.csv",
              ["label"] + [f"v{i}" for i in range(mat.shape[1])], rows)
    _write_run(out, args)
    return 0


def cmd_anova(args) -> int:
    _, labels, mat = read_portion_matrix(args.matrix)
    out = _mkout(args.out)
    scalars = scalarize(list(mat))
    labels = np.asarray(labels)
    groups = [scalars[labels == lb] for lb in np.unique(labels)]
    result = anova_oneway(groups, args.alpha)
    _write_json(out / "anova.json", result.to_json())
    _write_run(out, args)
    return 0


def _write_group_images(out: Path, kind: str, study: dict, preproc) -> dict:
    img_dir = out / "images"
    img_dir.mkdir(exist_ok=True)
    refs = {}
    for g_id, group in enumerate(study["groups"]):
        entry = {}
        if kind == "adversarial":
            members = {"original": preproc.invert(group.original),
                       "adversarial": preproc.invert(group.adversarial),
                       "target": preproc.invert(group.target)}
        else:
            members = {"original": group.original, "invariant": group.invariant,
                       "variant": group.variant, "target": group.target}
        for name, img in members.items():
            ext = "pgm" if img.shape[0] == 1 else "ppm"
            rel = f"images/g{g_id:04d}_{name}.{ext}"
            _save_u8_image(img, out / rel)
            entry[name] = rel
        refs[str(g_id)] = entry
    return refs


def _finish_study(out: Path, args, study: dict, preproc) -> int:
    write_csv(out / "distances.csv", study["columns"], study["rows"])
    refs = _write_group_images(out, study["kind"], study, preproc)
    _write_json(out / "manifest.json", {
        "kind": study["kind"], "groups": study["meta"], "files": refs,
        "medians": study["medians"], "warning": study["warning"],
        "group_count": len(study["rows"])})
    _write_json(out / "anova.json",
                study["anova"].to_json() if study["anova"] else None)
    _write_run(out, args, warning=study["warning"])
    return 0


def cmd_study_adversarial(args) -> int:
    model, weights, dataset, preproc = _load_model_dataset(args)
    out = _mkout(args.out)
    study = adversarial_study(model, weights, dataset, preproc, args.count,
                              AttackConfig(epsilon=args.eps), args.seed,
                              k=args.topk, alpha=args.alpha,
                              engine=_engine_options(args))
    return _finish_study(out, args, study, preproc)


def _cmd_study_transform(args, kind: str) -> int:
    model, weights, dataset, preproc = _load_model_dataset(args)
    out = _mkout(args.out)
    study = transform_study(model, weights, dataset, preproc, kind, args.count,
                            args.seed, k=args.topk, alpha=args.alpha,
                            engine=_engine_options(args))
    return _finish_study(out, args, study, preproc)


def cmd_gradcam(args) -> int:
    model, weights, dataset, preproc = _load_model_dataset(args)
    image = _image_at(dataset, preproc, args.index)
    out = _mkout(args.out)
    cam = grad_cam(model, weights, image, args.class_index, args.layer)
    write_pnm(cam, out / "gradcam.pgm")
    # pathway saliency alongside, for side-by-side comparison
    result = extract_pathways(model, weights, image, _engine_options(args))
    _, norm = saliency_map(result)
    write_pnm(norm, out / "saliency.pgm")
    trace = forward_trace(model, weights, image)
    _write_json(out / "gradcam.json", {
        "layer": args.layer or "conv3_3",
        "class_index": args.class_index if args.class_index is not None
        else trace.predicted})
    _write_run(out, args)
    return 0


def cmd_overlap(args) -> int:
    model, weights, dataset, preproc = _load_model_dataset(args)
    out = _mkout(args.out)
    report = overlap_report(model, weights, dataset, preproc, args.count,
                            args.n, args.seed, _engine_options(args))
    _write_json(out / "overlap.json", report)
    _write_run(out, args)
    return 0


def cmd_m2nist(args) -> int:
    dataset, _ = load_manifest(args.dataset)
    if dataset.multilabel:
        raise ShapeError("m2nist: source dataset must be single-label digits")
    out = _mkout(args.out)
    canvas = tuple(int(v) for v in args.canvas.split("x"))
    generated = gen_m2nist(dataset, args.count, args.seed, canvas)
    write_idx_images(out / "m2nist-images.idx", generated.images)
    write_idx_multilabel(out / "m2nist-labels.idx", generated.labels)
    write_manifest(out / "manifest.json", "m2nist-idx",
                   classes=generated.classes, split="m2nist",
                   images="m2nist-images.idx", labels="m2nist-labels.idx")
    _write_run(out, args)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffpath",
        description="Per-pixel diffusion pathways for small conv classifiers")
    sub = parser.add_subparsers(dest="command", required=True)

    model_p = argparse.ArgumentParser(add_help=False)
    model_p.add_argument("--model", required=True, help="DPWN weight file")
    data_p = argparse.ArgumentParser(add_help=False)
    data_p.add_argument("--dataset", required=True, help="dataset manifest JSON")
    out_p = argparse.ArgumentParser(add_help=False)
    out_p.add_argument("--out", required=True, help="output directory")
    common_p = argparse.ArgumentParser(add_help=False)
    common_p.add_argument("--seed", type=int, default=0)
    common_p.add_argument("--topk", type=int, default=3,
                          help="parts per pixel for portion-hot vectors")
    engine_p = argparse.ArgumentParser(add_help=False)
    engine_p.add_argument("--channel-mask", type=_channel_mask_arg, default="off",
                          help="'off' or 'topk:N' important channels per conv layer")
    engine_p.add_argument("--chunk", type=int, default=64,
                          help="pixels per engine tile")
    engine_p.add_argument("--threads", type=int, default=None,
                          help="worker threads (default: available cores)")

    p = sub.add_parser("classify", parents=[model_p, data_p, common_p])
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("pathways", parents=[model_p, data_p, out_p, common_p, engine_p])
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--no-masks-dump", action="store_true",
                   help="skip the per-layer part renderings")
    p.set_defaults(func=cmd_pathways)

    p = sub.add_parser("parts", parents=[model_p, data_p, out_p, common_p, engine_p])
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--layer", default=None)
    p.set_defaults(func=cmd_parts)

    p = sub.add_parser("saliency", parents=[model_p, data_p, out_p, common_p, engine_p])
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--layer", default=None)
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("portion-hot", parents=[model_p, data_p, out_p, common_p, engine_p])
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--indices", default=None, help="comma-separated sample indices")
    p.set_defaults(func=cmd_portion_hot)

    p = sub.add_parser("distances", parents=[out_p])
    p.add_argument("--matrix", required=True, help="portion-hot matrix CSV")
    p.set_defaults(func=cmd_distances)

    p = sub.add_parser("centers", parents=[out_p])
    p.add_argument("--matrix", required=True)
    p.set_defaults(func=cmd_centers)

    p = sub.add_parser("anova", parents=[out_p])
    p.add_argument("--matrix", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_anova)

    for name, kind in (("study-adversarial", None), ("study-rotate", "rotate"),
                       ("study-occlude", "occlude")):
        p = sub.add_parser(name, parents=[model_p, data_p, out_p, common_p, engine_p])
        p.add_argument("--count", type=int, required=True)
        p.add_argument("--alpha", type=float, default=0.05)
        if kind is None:
            p.add_argument("--eps", type=float, default=0.03)
            p.set_defaults(func=cmd_study_adversarial)
        else:
            p.set_defaults(func=lambda a, _k=kind: _cmd_study_transform(a, _k))

    p = sub.add_parser("gradcam", parents=[model_p, data_p, out_p, common_p, engine_p])
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--layer", default=None, help="conv layer (default conv3_3)")
    p.add_argument("--class", dest="class_index", type=int, default=None)
    p.set_defaults(func=cmd_gradcam)

    p = sub.add_parser("overlap", parents=[model_p, data_p, out_p, common_p, engine_p])
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--n", type=int, default=10)
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("m2nist", parents=[data_p, out_p, common_p])
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--canvas", default="64x84")
    p.set_defaults(func=cmd_m2nist)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DiffpathError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
