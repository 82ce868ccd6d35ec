"""Study pipelines shared by the CLI: adversarial triples, transform
quadruples, ranking-overlap tables, and the CSV/JSON conventions that
make their outputs byte-reproducible.
"""

from __future__ import annotations

import csv

import numpy as np

from .analysis import anova_oneway, l2_distance, portion_hot, ranking_overlap
from .attacks import AttackConfig, build_adversarial_groups
from .datasets import LabeledDataset, Preprocessing
from .pathways import PathwayOptions, extract_pathways
from .runtime import forward_trace
from .transforms import build_transform_groups

__all__ = ["fmt_float", "write_csv", "read_portion_matrix",
           "adversarial_study", "transform_study", "overlap_report"]

SIX_DISTANCE_COLUMNS = ["d_orig_inv", "d_orig_var", "d_inv_var",
                        "d_orig_target", "d_inv_target", "d_var_target"]


def fmt_float(x) -> str:
    """Deterministic float formatting used by every CSV this package writes."""
    return format(float(x), ".9g")


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt_float(v) if isinstance(v, float) else v for v in row])


def read_portion_matrix(path) -> tuple[list[str], list[int], np.ndarray]:
    """Read a portion-hot matrix CSV back into (ids, labels, value rows)."""
    ids, labels, rows = [], [], []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if len(header) < 3 or header[0] != "id" or header[1] != "label":
            raise ValueError(f"{path}: not a portion-hot matrix CSV")
        for rec in reader:
            ids.append(rec[0])
            labels.append(int(rec[1]))
            rows.append([float(v) for v in rec[2:]])
    return ids, labels, np.asarray(rows, dtype=np.float64)


def _vector(model, weights, image_f32, k, engine: PathwayOptions):
    return portion_hot(extract_pathways(model, weights, image_f32, engine), k)


def adversarial_study(model, weights, dataset: LabeledDataset,
                      preproc: Preprocessing, count: int, config: AttackConfig,
                      seed: int, k: int = 3, alpha: float = 0.05,
                      engine: PathwayOptions | None = None) -> dict:
    """FGSM triples with the three pairwise portion-hot distances per group.

    ANOVA runs directly over the three distance populations.
    """
    engine = engine or PathwayOptions()
    groups, warning = build_adversarial_groups(
        model, weights, dataset, count, config, seed, preproc)
    rows, meta = [], []
    d_oa, d_ot, d_at = [], [], []
    for g_id, g in enumerate(groups):
        v_orig = _vector(model, weights, g.original, k, engine)
        v_adv = _vector(model, weights, g.adversarial, k, engine)
        v_tgt = _vector(model, weights, g.target, k, engine)
        a, b, c = (l2_distance(v_orig, v_adv), l2_distance(v_orig, v_tgt),
                   l2_distance(v_adv, v_tgt))
        d_oa.append(a), d_ot.append(b), d_at.append(c)
        rows.append([g_id, a, b, c])
        meta.append({"group": g_id, "original_index": g.original_index,
                     "label": g.label, "adversarial_prediction": g.adversarial_prediction,
                     "epsilon_used": g.epsilon_used, "target_index": g.target_index,
                     "target_label": g.target_label})
    anova = anova_oneway([d_oa, d_ot, d_at], alpha) if len(groups) >= 2 else None
    return {
        "kind": "adversarial",
        "groups": groups,
        "meta": meta,
        "columns": ["group", "d_orig_adv", "d_orig_target", "d_adv_target"],
        "rows": rows,
        "medians": {"d_orig_adv": float(np.median(d_oa)) if d_oa else None,
                    "d_orig_target": float(np.median(d_ot)) if d_ot else None,
                    "d_adv_target": float(np.median(d_at)) if d_at else None},
        "anova": anova,
        "warning": warning,
    }


def transform_study(model, weights, dataset: LabeledDataset,
                    preproc: Preprocessing, kind: str, count: int, seed: int,
                    k: int = 3, alpha: float = 0.05,
                    engine: PathwayOptions | None = None) -> dict:
    """Rotation or occlusion quadruples with six pairwise distances each."""
    engine = engine or PathwayOptions()
    groups, warning = build_transform_groups(
        model, weights, dataset, kind, count, seed, preproc)
    rows, meta = [], []
    cols: list[list[float]] = [[] for _ in SIX_DISTANCE_COLUMNS]
    for g_id, g in enumerate(groups):
        vecs = [_vector(model, weights, preproc.apply(img), k, engine)
                for img in (g.original, g.invariant, g.variant, g.target)]
        v_o, v_i, v_v, v_t = vecs
        six = [l2_distance(v_o, v_i), l2_distance(v_o, v_v), l2_distance(v_i, v_v),
               l2_distance(v_o, v_t), l2_distance(v_i, v_t), l2_distance(v_v, v_t)]
        for col, val in zip(cols, six):
            col.append(val)
        rows.append([g_id] + six)
        meta.append({"group": g_id, "original_index": g.original_index,
                     "label": g.label, "invariant_desc": list(g.invariant_desc),
                     "variant_desc": list(g.variant_desc),
                     "variant_prediction": g.variant_prediction,
                     "target_index": g.target_index, "target_label": g.target_label})
    anova = anova_oneway(cols, alpha) if len(groups) >= 2 else None
    medians = {name: (float(np.median(c)) if c else None)
               for name, c in zip(SIX_DISTANCE_COLUMNS, cols)}
    return {
        "kind": kind,
        "groups": groups,
        "meta": meta,
        "columns": ["group"] + SIX_DISTANCE_COLUMNS,
        "rows": rows,
        "medians": medians,
        "anova": anova,
        "warning": warning,
    }


def overlap_report(model, weights, dataset: LabeledDataset,
                   preproc: Preprocessing, count: int = 20, n: int = 10,
                   seed: int = 0, engine: PathwayOptions | None = None) -> dict:
    """Per-layer mean top-n and bottom-n ranking overlap over sampled images."""
    engine = engine or PathwayOptions()
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(dataset), size=min(count, len(dataset)), replace=False)
    names = None
    largest, smallest = [], []
    for idx in picks:
        image = preproc.apply(dataset.images[int(idx)])
        trace = forward_trace(model, weights, image)
        result = extract_pathways(model, weights, image, engine, trace=trace)
        if names is None:
            names = result.layer_names()
        row_l, row_s = [], []
        for agg in result.aggregates:
            c = agg.values.shape[2]
            nn = min(n, c)
            row_l.append(ranking_overlap(result, model, weights, trace, agg.layer, nn))
            row_s.append(ranking_overlap(result, model, weights, trace, agg.layer, nn,
                                         smallest=True))
        largest.append(row_l)
        smallest.append(row_s)
    return {
        "n": n,
        "images": [int(i) for i in picks],
        "layers": names or [],
        "mean_overlap_largest": np.asarray(largest, dtype=np.float64).mean(axis=0).tolist()
            if largest else [],
        "mean_overlap_smallest": np.asarray(smallest, dtype=np.float64).mean(axis=0).tolist()
            if smallest else [],
    }
