"""Analyses over pathway aggregates: parts, saliency, portion-hot
vectors, distances, category centers, ranking overlap, one-way ANOVA.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import LayerNotFoundError, ShapeError
from .pathways import LayerPathwayAggregate, PathwayResult
from .runtime import channel_scores

__all__ = [
    "PartAssignment", "PortionHotVector", "AnovaResult",
    "parts_topk", "saliency_map", "portion_hot", "l2_distance",
    "category_centers", "anova_oneway", "scalarize", "ranking_overlap",
]


@dataclass
class PartAssignment:
    """Per-pixel top-K channel winners at one layer.

    winners[h, w, :] holds up to K distinct channel indices ordered by
    descending aggregate (ties to the lower index), padded with -1;
    pixels whose aggregate row is entirely <= 0 stay unassigned.
    """
    layer: int
    name: str
    k: int
    winners: np.ndarray        # int32 [H, W, K], -1 = unassigned slot
    pixel_counts: np.ndarray   # int64 [C]
    area_ratios: np.ndarray    # float64 [C], pixel_counts / (H*W)


@dataclass
class PortionHotVector:
    values: np.ndarray         # float64, one entry per (layer, channel)
    k: int
    layout: list[tuple[str, int]]  # (layer name, channel count) per layer


@dataclass
class AnovaResult:
    f_stat: float
    df_between: int
    df_within: int
    alpha: float
    critical: float
    significant: bool
    infinite: bool = False     # zero within-group variance with nonzero between

    def to_json(self) -> dict:
        return {"f_stat": self.f_stat, "df_between": self.df_between,
                "df_within": self.df_within, "alpha": self.alpha,
                "critical": self.critical, "significant": self.significant,
                "infinite": self.infinite}


def parts_topk(aggregate: LayerPathwayAggregate, k: int) -> PartAssignment:
    """Assign each pixel its top-k positive aggregate channels."""
    a = aggregate.values
    h, w, c = a.shape
    if not 1 <= k <= c:
        raise ShapeError(f"parts_topk: K={k} out of range [1,{c}]")
    order = np.argsort(-a, axis=2, kind="stable")[:, :, :k].astype(np.int32)
    vals = np.take_along_axis(a, order, axis=2)
    assigned = vals > 0
    winners = np.where(assigned, order, np.int32(-1))
    counts = np.bincount(order[assigned].ravel(), minlength=c).astype(np.int64)
    return PartAssignment(aggregate.layer, aggregate.name, k, winners,
                          counts, counts / float(h * w))


def _find_aggregate(result: PathwayResult, layer) -> LayerPathwayAggregate:
    if layer is None:
        return result.aggregates[-1]
    for a in result.aggregates:
        if a.layer == layer or a.name == layer:
            return a
    raise LayerNotFoundError(f"no pathway aggregate for layer {layer!r}")


def saliency_map(result: PathwayResult, layer=None) -> tuple[np.ndarray, np.ndarray]:
    """Max-over-channels heatmap at a layer (default: the last one).

    Returns (raw heatmap, min-max normalized copy in [0,1]).
    """
    a = _find_aggregate(result, layer).values
    heat = a.max(axis=2)
    lo, hi = float(heat.min()), float(heat.max())
    norm = (heat - lo) / (hi - lo) if hi > lo else np.zeros_like(heat)
    return heat, norm


def portion_hot(result: PathwayResult, k: int = 3) -> PortionHotVector:
    """Concatenated part-area ratios over all pathway layers, layer-major."""
    if not result.aggregates:
        raise LayerNotFoundError("portion_hot: result has no aggregates")
    chunks, layout = [], []
    for agg in result.aggregates:
        pa = parts_topk(agg, min(k, agg.values.shape[2]))
        chunks.append(pa.area_ratios)
        layout.append((agg.name, agg.values.shape[2]))
    return PortionHotVector(np.concatenate(chunks), k, layout)


def l2_distance(a: PortionHotVector, b: PortionHotVector) -> float:
    if a.values.shape != b.values.shape or a.k != b.k:
        raise ShapeError("l2_distance: vectors differ in length or K")
    return float(np.linalg.norm(a.values - b.values))


def category_centers(vectors: list[np.ndarray], labels) -> tuple[dict[int, np.ndarray], np.ndarray]:
    """Per-label arithmetic mean vectors plus the global mean."""
    if len(vectors) == 0 or len(vectors) != len(labels):
        raise ShapeError("category_centers: need one label per vector, non-empty")
    mat = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels)
    centers = {int(lb): mat[labels == lb].mean(axis=0) for lb in np.unique(labels)}
    return centers, mat.mean(axis=0)


def anova_oneway(groups: list, alpha: float = 0.05) -> AnovaResult:
    """One-way fixed-effects ANOVA over scalar sample groups.

    F = (SSB/df_between) / (SSW/df_within); the critical value comes
    from the inverse F distribution at 1-alpha. Zero within-group
    variance with spread between groups is reported as F=+inf with the
    infinite flag set.
    """
    groups = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    n_groups = len(groups)
    n_total = sum(g.size for g in groups)
    if n_groups < 2 or any(g.size < 1 for g in groups) or n_total <= n_groups:
        raise ShapeError("anova_oneway: need >=2 non-empty groups and N > groups")
    df_b, df_w = n_groups - 1, n_total - n_groups
    grand = sum(g.sum() for g in groups) / n_total
    ssb = sum(g.size * (g.mean() - grand) ** 2 for g in groups)
    ssw = sum(((g - g.mean()) ** 2).sum() for g in groups)
    critical = float(stats.f.ppf(1.0 - alpha, df_b, df_w))
    if ssw == 0.0:
        if ssb == 0.0:
            return AnovaResult(0.0, df_b, df_w, alpha, critical, False)
        return AnovaResult(float("inf"), df_b, df_w, alpha, critical, True, infinite=True)
    f = (ssb / df_b) / (ssw / df_w)
    return AnovaResult(float(f), df_b, df_w, alpha, critical, bool(f > critical))


def scalarize(vectors: list[np.ndarray], method: str = "dist-to-global-center") -> np.ndarray:
    """Reduce vectors to scalars; default is L2 distance to the global mean."""
    if len(vectors) == 0:
        raise ShapeError("scalarize: empty input")
    if method != "dist-to-global-center":
        raise ValueError(f"unknown scalarize method {method!r}")
    mat = np.asarray(vectors, dtype=np.float64)
    center = mat.mean(axis=0)
    return np.linalg.norm(mat - center, axis=1)


def ranking_overlap(result: PathwayResult, model, weights, trace, layer,
                    n: int = 10, smallest: bool = False,
                    method: str = "activation-l1") -> int:
    """Size of the intersection between two top-n channel rankings.

    One ranking orders channels by summed pathway aggregate at the
    layer, the other by channel importance from the forward trace; the
    smallest flag compares the bottom ends instead.
    """
    agg = _find_aggregate(result, layer)
    c = agg.values.shape[2]
    if not 1 <= n <= c:
        raise ShapeError(f"ranking_overlap: n={n} out of range [1,{c}]")
    sums = agg.values.sum(axis=(0, 1), dtype=np.float64)
    imp = channel_scores(model, weights, trace, agg.layer, method=method)
    if smallest:
        path_top = np.argsort(sums, kind="stable")[:n]
        imp_top = np.argsort(imp, kind="stable")[:n]
    else:
        path_top = np.argsort(-sums, kind="stable")[:n]
        imp_top = np.argsort(-imp, kind="stable")[:n]
    return int(len(set(path_top.tolist()) & set(imp_top.tolist())))
