"""Drive the consumer's group studies and grade their outputs.

Everything here shells out to the `diffpath` CLI and reads back the
files it writes (manifest.json, anova.json, overlap.json). The grading
predicates live on this side:

  adversarial  median d(original,target) < median d(adversarial,target)
               and the one-way ANOVA over the three distance
               populations significant at the chosen alpha
  rotate /     all three within-identity distance medians
  occlude      (orig-inv, orig-var, inv-var) below all three
               to-target medians
  consistency  per-layer mean top-n overlap >= n/2 on a majority of
               layers, reported as a table with the small-end variant
               alongside
"""

from __future__ import annotations

import json
import subprocess
from pathlib import Path

from .crosscheck import ENGINE
from .errors import TrainerError

__all__ = ["run_engine", "run_study", "run_overlap",
           "adversarial_criterion", "transform_criterion",
           "consistency_criterion", "format_consistency_table"]


def run_engine(*args: str) -> str:
    cmd = [ENGINE] + [str(a) for a in args]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise TrainerError(f"{' '.join(cmd)} failed "
                           f"(rc={proc.returncode}): {proc.stderr.strip()}")
    return proc.stdout


def _read_json(path: Path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def run_study(kind: str, model_path, manifest_path, out_dir, count: int,
              seed: int = 0, alpha: float = 0.05, eps: float = 0.03,
              extra: tuple = ()) -> Path:
    """kind in {adversarial, rotate, occlude}; returns the output dir."""
    if kind not in ("adversarial", "rotate", "occlude"):
        raise TrainerError(f"unknown study kind {kind!r}")
    out = Path(out_dir)
    args = [f"study-{kind}", "--model", model_path, "--dataset", manifest_path,
            "--out", out, "--count", count, "--seed", seed, "--alpha", alpha]
    if kind == "adversarial":
        args += ["--eps", eps]
    run_engine(*args, *extra)
    return out


def run_overlap(model_path, manifest_path, out_dir, count: int = 20,
                n: int = 10, seed: int = 0, extra: tuple = ()) -> Path:
    out = Path(out_dir)
    run_engine("overlap", "--model", model_path, "--dataset", manifest_path,
               "--out", out, "--count", count, "--n", n, "--seed", seed,
               *extra)
    return out


def adversarial_criterion(out_dir, min_groups: int = 50) -> dict:
    out = Path(out_dir)
    manifest = _read_json(out / "manifest.json")
    anova = _read_json(out / "anova.json")
    med = manifest["medians"]
    ordered = (med["d_orig_target"] is not None
               and med["d_adv_target"] is not None
               and med["d_orig_target"] < med["d_adv_target"])
    significant = bool(anova and anova["significant"])
    groups = int(manifest["group_count"])
    return {
        "kind": "adversarial",
        "groups": groups,
        "medians": med,
        "ordering_holds": bool(ordered),
        "anova": anova,
        "anova_significant": significant,
        "passed": bool(ordered and significant and groups >= min_groups),
        "min_groups": min_groups,
    }


_WITHIN = ("d_orig_inv", "d_orig_var", "d_inv_var")
_TO_TARGET = ("d_orig_target", "d_inv_target", "d_var_target")


def transform_criterion(out_dir, min_groups: int = 50) -> dict:
    out = Path(out_dir)
    manifest = _read_json(out / "manifest.json")
    med = manifest["medians"]
    within = [med[k] for k in _WITHIN]
    target = [med[k] for k in _TO_TARGET]
    # every within-identity median below every to-target median
    ordered = (None not in within and None not in target
               and max(within) < min(target))
    groups = int(manifest["group_count"])
    return {
        "kind": manifest["kind"],
        "groups": groups,
        "medians": med,
        "within_max": max(within) if None not in within else None,
        "to_target_min": min(target) if None not in target else None,
        "ordering_holds": bool(ordered),
        "passed": bool(ordered and groups >= min_groups),
        "min_groups": min_groups,
    }


def consistency_criterion(out_dir, min_images: int = 20) -> dict:
    out = Path(out_dir)
    report = _read_json(out / "overlap.json")
    n = int(report["n"])
    threshold = n / 2
    largest = report["mean_overlap_largest"]
    hits = sum(1 for v in largest if v >= threshold)
    majority = hits > len(largest) / 2 if largest else False
    return {
        "kind": "consistency",
        "images": len(report["images"]),
        "n": n,
        "threshold": threshold,
        "layers": report["layers"],
        "mean_overlap_largest": largest,
        "mean_overlap_smallest": report["mean_overlap_smallest"],
        "layers_at_or_above": hits,
        "majority_holds": bool(majority),
        "passed": bool(majority and len(report["images"]) >= min_images),
        "min_images": min_images,
    }


def format_consistency_table(crit: dict) -> str:
    """Plain-text table: per-layer top-end and small-end mean overlap."""
    n = crit["n"]
    head = f"{'layer':<12} {'top-' + str(n):>8} {'bottom-' + str(n):>10}"
    lines = [head, "-" * len(head)]
    for name, big, small in zip(crit["layers"], crit["mean_overlap_largest"],
                                crit["mean_overlap_smallest"]):
        lines.append(f"{name:<12} {big:>8.2f} {small:>10.2f}")
    lines.append(f"layers with top-{n} mean >= {crit['threshold']}: "
                 f"{crit['layers_at_or_above']}/{len(crit['layers'])} "
                 f"({'majority' if crit['majority_holds'] else 'minority'})")
    return "\n".join(lines)
