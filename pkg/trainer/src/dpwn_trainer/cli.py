"""Command line front end: train, export, fixture, dataset, crosscheck, study."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .crosscheck import cross_engine_check
from .data import DATASET_SHAPES, load_dataset, write_cifar_dataset, \
    write_idx_dataset
from .errors import TrainerError
from .export import export_dpwn, random_checkpoint, verify_round_trip
from .study import adversarial_criterion, consistency_criterion, \
    format_consistency_table, run_overlap, run_study, transform_criterion
from .train import load_checkpoint, save_checkpoint, train_reference

STUDY_KINDS = ("adversarial", "rotate", "occlude", "consistency")


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=1, sort_keys=True))


def cmd_train(args) -> int:
    ckpt = train_reference(
        args.dataset, epochs=args.epochs, seed=args.seed, arch=args.arch,
        batch_size=args.batch_size, lr=args.lr, train_count=args.train_count,
        val_count=args.val_count, data_dir=args.data_dir,
        download=not args.no_download)
    save_checkpoint(ckpt, args.out)
    _emit({"checkpoint": str(args.out), **ckpt.meta})
    return 0


def cmd_export(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model_path, man_path = export_dpwn(ckpt, args.out)
    verify_round_trip(ckpt, model_path)
    _emit({"model": str(model_path), "manifest": str(man_path),
           "round_trip": "bitwise"})
    return 0


def cmd_fixture(args) -> int:
    shape = tuple(int(v) for v in args.input_shape.split("x"))
    ckpt = random_checkpoint(args.arch, shape, classes=args.classes,
                             seed=args.seed)
    model_path, man_path = export_dpwn(ckpt, args.out)
    verify_round_trip(ckpt, model_path)
    _emit({"model": str(model_path), "manifest": str(man_path),
           "arch": args.arch, "seed": args.seed})
    return 0


def cmd_dataset(args) -> int:
    split = load_dataset(args.name, count=args.count, seed=args.seed,
                         data_dir=args.data_dir, train=not args.val,
                         download=not args.no_download)
    if split.images.shape[1] == 1:
        manifest = write_idx_dataset(args.out, split, tag=args.name)
    else:
        manifest = write_cifar_dataset(args.out, split, tag=args.name)
    _emit({"manifest": str(manifest), "images": len(split),
           "shape": list(split.images.shape[1:])})
    return 0


def cmd_crosscheck(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    report = cross_engine_check(ckpt, args.workdir, count=args.count,
                                seed=args.seed, tolerance=args.tolerance)
    _emit(report)
    return 0 if report["passed"] else 1


def _study_dataset(ckpt, args) -> Path:
    name = args.dataset or ckpt.meta.get("dataset")
    if name == "fixture" or name not in DATASET_SHAPES:
        raise TrainerError(f"cannot infer a study dataset from {name!r}; "
                           f"pass --dataset")
    split = load_dataset(name, count=args.dataset_count, seed=args.seed,
                         data_dir=args.data_dir, train=False,
                         download=not args.no_download)
    out = Path(args.workdir) / "data"
    if split.images.shape[1] == 1:
        return write_idx_dataset(out, split, tag=name)
    return write_cifar_dataset(out, split, tag=name)


def cmd_study(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    workdir = Path(args.workdir)
    model_path, _ = export_dpwn(ckpt, workdir / "model.dpwn")
    manifest = _study_dataset(ckpt, args)
    out = workdir / args.kind

    if args.kind == "consistency":
        run_overlap(model_path, manifest, out, count=args.count, n=args.n,
                    seed=args.seed)
        crit = consistency_criterion(out, min_images=args.min_groups)
        print(format_consistency_table(crit), file=sys.stderr)
    else:
        run_study(args.kind, model_path, manifest, out, count=args.count,
                  seed=args.seed, alpha=args.alpha, eps=args.eps)
        if args.kind == "adversarial":
            crit = adversarial_criterion(out, min_groups=args.min_groups)
        else:
            crit = transform_criterion(out, min_groups=args.min_groups)
    (out / "criterion.json").write_text(
        json.dumps(crit, indent=1, sort_keys=True) + "\n")
    _emit(crit)
    return 0 if crit["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dpwn-trainer",
        description="train small classifiers and export DPWN weight files")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and save a checkpoint")
    p.add_argument("--dataset", required=True,
                   choices=sorted(DATASET_SHAPES))
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--arch", default="tiny_conv",
                   choices=("tiny_conv", "reference_vgg16"))
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--train-count", type=int, default=2400)
    p.add_argument("--val-count", type=int, default=400)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--no-download", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("export", help="write a checkpoint as DPWN + manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("fixture", help="export a seeded untrained model")
    p.add_argument("--arch", default="tiny_conv",
                   choices=("tiny_conv", "reference_vgg16"))
    p.add_argument("--input-shape", default="3x32x32")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("dataset", help="emit IDX/CIFAR files + manifest")
    p.add_argument("--name", required=True, choices=sorted(DATASET_SHAPES))
    p.add_argument("--count", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val", action="store_true")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--no-download", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("crosscheck", help="compare logits across engines")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--workdir", required=True)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_crosscheck)

    p = sub.add_parser("study", help="run a group study and grade it")
    p.add_argument("--kind", required=True, choices=STUDY_KINDS)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--workdir", required=True)
    p.add_argument("--dataset", default=None,
                   help="override the checkpoint's training dataset")
    p.add_argument("--dataset-count", type=int, default=400)
    p.add_argument("--count", type=int, default=50,
                   help="groups (or images for consistency)")
    p.add_argument("--min-groups", type=int, default=50)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--eps", type=float, default=0.03)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--no-download", action="store_true")
    p.set_defaults(func=cmd_study)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainerError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
