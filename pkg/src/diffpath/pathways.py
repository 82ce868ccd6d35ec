"""Diffusion-pathway extraction.

Each input pixel owns a diffusion field: a small spatial patch, anchored
to feature-map coordinates, that is pushed through the conv/pool stack
of the classifier. Convolutions diffuse the field through the trained
kernels rotated 180 degrees with +1 added to every tap; ReLU masks and
pool argmax routing taken from the image's own forward pass gate which
paths survive; an optional channel mask keeps only the most important
channels per conv layer. After every conv and pool layer the field is
summed over its spatial extent, giving that pixel's pathway
cross-section intensity per channel.

Two equivalent routes are provided. pixel_fields walks one pixel with
explicit PixelField states (the reference semantics, including
transiently out-of-bounds anchors). extract_pathways computes the
aggregates for all pixels at once by processing square tiles of pixels
whose fields share one bounding box; since masked fields are zero
outside the map, clipping the shared box to the map loses nothing, and
both routes produce identical aggregates.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from math import isqrt

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .arch import ModelSpec
from .dpwn import read_container, write_container
from .errors import ShapeError, TraceError
from .runtime import ForwardTrace, channel_importance, forward_trace

__all__ = [
    "PixelField", "LayerPathwayAggregate", "PathwayOptions", "PathwayResult",
    "build_diffusion_kernels", "conv_diffuse", "apply_relu_mask",
    "apply_pool_mask", "apply_channel_mask", "pixel_fields",
    "extract_pathways", "extent_schedule", "save_result", "load_result",
]

_DTYPES = {"f32": np.float32, "f64": np.float64}


@dataclass
class PixelField:
    """One pixel's diffusion state at a layer.

    values[c, ph, pw] lives at feature-map coordinates anchor + index;
    the anchor may be negative or past the map edge transiently, until
    the next mask application zeroes the out-of-bounds elements.
    """
    origin: tuple[int, int]
    values: np.ndarray
    anchor: tuple[int, int]
    layer_cursor: int = 0


@dataclass
class LayerPathwayAggregate:
    """Pathway cross-section intensities S(H, W, C_l) for one layer."""
    layer: int
    name: str
    values: np.ndarray


@dataclass
class PathwayOptions:
    channel_mask: int | None = None   # top-K channels kept per conv layer; None = off
    masks: bool = True
    chunk: int = 64                   # pixels per tile
    threads: int = 1
    dtype: str = "f32"                # tile-engine GEMM dtype: f32 | f64

    def to_json(self) -> dict:
        return {"channel_mask": self.channel_mask, "masks": self.masks,
                "chunk": self.chunk, "threads": self.threads, "dtype": self.dtype}

    def persisted(self) -> dict:
        # only fields that shape the values; chunk/threads are execution
        # settings and would break byte reproducibility of saved artifacts
        return {"channel_mask": self.channel_mask, "masks": self.masks,
                "dtype": self.dtype}


@dataclass
class PathwayResult:
    aggregates: list[LayerPathwayAggregate]
    options: PathwayOptions
    model_name: str = ""
    input_shape: tuple = ()

    def layer_names(self) -> list[str]:
        return [a.name for a in self.aggregates]


def build_diffusion_kernels(model: ModelSpec, weights: dict) -> dict[int, np.ndarray]:
    """RW = weight rotated 180 degrees in the spatial plane, per conv layer.

    The +1 diffusion offset is applied at use, not baked in here.
    """
    kernels = {}
    for i in model.pathway_layers:
        l = model.layers[i]
        if l.kind == "conv":
            w = np.asarray(weights[f"{l.name}/weight"], dtype=np.float32)
            kernels[i] = np.ascontiguousarray(w[:, :, ::-1, ::-1])
    return kernels


def conv_diffuse(field: PixelField, RW: np.ndarray) -> PixelField:
    """Diffuse a field through one conv layer.

    out(co,y,x) = sum_{ci,dy,dx} field(ci, y-dy, x-dx) * (RW(co,ci,dy,dx)+1)
    with out-of-range field terms zero. Extent grows by k-1 per axis and
    the anchor moves back by (k-1)/2.
    """
    c, ph, pw = field.values.shape
    cout, cin, k, _ = RW.shape
    if cin != c:
        raise ShapeError(f"conv_diffuse: field channels {c} != kernel cin {cin}")
    K = RW.astype(np.float64) + 1.0
    pad = k - 1
    fp = np.zeros((c, ph + 2 * pad, pw + 2 * pad), dtype=np.float64)
    fp[:, pad:pad + ph, pad:pad + pw] = field.values
    win = sliding_window_view(fp, (k, k), axis=(1, 2))   # [c, ph+k-1, pw+k-1, k, k]
    # out(y) = sum_t f(y-(k-1)+t) * K(k-1-t): correlate padded field with flipped K
    out = np.einsum("cyxuv,ocuv->oyx", win, K[:, :, ::-1, ::-1], optimize=True)
    r = (k - 1) // 2
    return PixelField(field.origin, out.astype(np.float32),
                      (field.anchor[0] - r, field.anchor[1] - r), field.layer_cursor)


def _relu_record(trace: ForwardTrace, layer: int):
    if layer + 1 >= len(trace.records) or trace.records[layer + 1].kind != "relu":
        raise TraceError(f"no relu record follows conv layer {layer}")
    return trace.records[layer + 1]


def apply_relu_mask(field: PixelField, trace: ForwardTrace, layer: int) -> PixelField:
    """Zero field elements that are out of map bounds or ReLU-dead."""
    mask = _relu_record(trace, layer).mask
    c, ph, pw = field.values.shape
    H, W = mask.shape[1:]
    ay, ax = field.anchor
    out = np.zeros_like(field.values)
    y0, y1 = max(0, -ay), min(ph, H - ay)
    x0, x1 = max(0, -ax), min(pw, W - ax)
    if y1 > y0 and x1 > x0:
        out[:, y0:y1, x0:x1] = field.values[:, y0:y1, x0:x1] \
            * mask[:, ay + y0:ay + y1, ax + x0:ax + x1]
    return PixelField(field.origin, out, field.anchor, field.layer_cursor)


def apply_pool_mask(field: PixelField, trace: ForwardTrace, layer: int) -> PixelField:
    """Route the field through the forward pool's argmax choices.

    The output covers pooled coordinates floor(ay/2)..floor((ay+ph-1)/2).
    A pooled cell takes the field value at its window's forward argmax
    coordinate when that coordinate lies inside the field, else 0; cells
    outside the pooled map have no argmax record and are 0.
    """
    rec = trace.records[layer]
    if rec.kind != "maxpool" or rec.argmax is None:
        raise TraceError(f"layer {layer} has no pool argmax record")
    argmax = rec.argmax
    c, ph, pw = field.values.shape
    PH, PW = argmax.shape[1:3]
    ay, ax = field.anchor
    qy0, qx0 = ay // 2, ax // 2
    qh = (ay + ph - 1) // 2 - qy0 + 1
    qw = (ax + pw - 1) // 2 - qx0 + 1
    out = np.zeros((c, qh, qw), dtype=field.values.dtype)
    vy0, vy1 = max(0, -qy0), min(qh, PH - qy0)
    vx0, vx1 = max(0, -qx0), min(qw, PW - qx0)
    if vy1 > vy0 and vx1 > vx0:
        sub = argmax[:, qy0 + vy0:qy0 + vy1, qx0 + vx0:qx0 + vx1]
        iy = sub[..., 0].astype(np.int64) - ay
        ix = sub[..., 1].astype(np.int64) - ax
        ok = (iy >= 0) & (iy < ph) & (ix >= 0) & (ix < pw)
        lin = np.where(ok, iy * pw + ix, 0)
        vals = np.take_along_axis(field.values.reshape(c, ph * pw),
                                  lin.reshape(c, -1), axis=1).reshape(sub.shape[:3])
        out[:, vy0:vy1, vx0:vx1] = vals * ok
    return PixelField(field.origin, out, (qy0, qx0), field.layer_cursor)


def apply_channel_mask(field: PixelField, keep) -> PixelField:
    """Zero every channel not in the keep set."""
    c = field.values.shape[0]
    keep = np.asarray(list(keep), dtype=np.int64)
    if keep.size and (keep.min() < 0 or keep.max() >= c):
        raise ShapeError(f"channel mask index out of range [0,{c})")
    out = np.zeros_like(field.values)
    if keep.size:
        out[keep] = field.values[keep]
    return PixelField(field.origin, out, field.anchor, field.layer_cursor)


def _keep_sets(model: ModelSpec, weights: dict, trace: ForwardTrace,
               options: PathwayOptions) -> dict[int, np.ndarray]:
    """Top-K important channels per conv pathway layer, or empty when off."""
    if options.channel_mask is None:
        return {}
    sets = {}
    for i in model.pathway_layers:
        if model.layers[i].kind == "conv":
            ranking = channel_importance(model, weights, trace, i)
            sets[i] = np.sort(ranking[:int(options.channel_mask)])
    return sets


def pixel_fields(model: ModelSpec, weights: dict, image: np.ndarray,
                 pixel: tuple[int, int], options: PathwayOptions | None = None,
                 trace: ForwardTrace | None = None) -> list[PixelField]:
    """Reference per-pixel walk: the field state after every pathway layer."""
    options = options or PathwayOptions()
    image = np.asarray(image, dtype=np.float32)
    if trace is None:
        trace = forward_trace(model, weights, image)
    kernels = build_diffusion_kernels(model, weights)
    keep = _keep_sets(model, weights, trace, options)
    h, w = pixel
    field = PixelField((h, w), image[:, h, w].reshape(-1, 1, 1).copy(), (h, w))
    states = []
    for cursor, li in enumerate(model.pathway_layers):
        kind = model.layers[li].kind
        if kind == "conv":
            field = conv_diffuse(field, kernels[li])
            if options.masks:
                field = apply_relu_mask(field, trace, li)
            if li in keep:
                field = apply_channel_mask(field, keep[li])
        else:
            field = apply_pool_mask(field, trace, li)
        field.layer_cursor = cursor
        states.append(field)
    return states


def extent_schedule(model: ModelSpec, pixel: tuple[int, int]) -> list[tuple[int, int]]:
    """(ph, pw) after each pathway layer, from the growth/anchor rules alone."""
    ay, ax = pixel
    ph = pw = 1
    out = []
    for li in model.pathway_layers:
        l = model.layers[li]
        if l.kind == "conv":
            ph, pw = ph + l.k - 1, pw + l.k - 1
            ay, ax = ay - (l.k - 1) // 2, ax - (l.k - 1) // 2
        else:
            ny, nx = ay // 2, ax // 2
            ph = (ay + ph - 1) // 2 - ny + 1
            pw = (ax + pw - 1) // 2 - nx + 1
            ay, ax = ny, nx
        out.append((ph, pw))
    return out


# ---------------------------------------------------------------------------
# Tile engine: all pixels at once, square tiles sharing one clipped box.

@dataclass
class _LayerPlan:
    layer: int
    name: str
    kind: str
    K1: np.ndarray | None = None        # (W+1) in engine dtype, conv only
    mask: np.ndarray | None = None      # relu mask in engine dtype, conv only
    argmax: np.ndarray | None = None    # pool only
    keep_vec: np.ndarray | None = None  # 0/1 per channel, conv w/ channel mask
    map_hw: tuple[int, int] = (0, 0)    # feature-map dims at this layer's output


def _build_plan(model: ModelSpec, weights: dict, trace: ForwardTrace,
                keep: dict[int, np.ndarray], options: PathwayOptions) -> list[_LayerPlan]:
    dt = _DTYPES[options.dtype]
    plan = []
    hw = (model.input_shape[1], model.input_shape[2])
    for li in model.pathway_layers:
        l = model.layers[li]
        if l.kind == "conv":
            w = np.asarray(weights[f"{l.name}/weight"])
            p = _LayerPlan(li, l.name, "conv", K1=(w.astype(dt) + dt(1.0)))
            if options.masks:
                p.mask = _relu_record(trace, li).mask.astype(dt)
            if li in keep:
                kv = np.zeros(l.cout, dtype=dt)
                kv[keep[li]] = 1
                p.keep_vec = kv
            p.map_hw = hw
        else:
            hw = ((hw[0] + 1) // 2, (hw[1] + 1) // 2)
            p = _LayerPlan(li, l.name, "maxpool", argmax=trace.records[li].argmax,
                           map_hw=hw)
        plan.append(p)
    return plan


def _tile_conv(F, by0, bx0, p: _LayerPlan):
    P, cin, bh, bw = F.shape
    cout, _, k, _ = p.K1.shape
    pad = k - 1
    fp = np.zeros((P, cin, bh + 2 * pad, bw + 2 * pad), dtype=F.dtype)
    fp[:, :, pad:pad + bh, pad:pad + bw] = F
    win = sliding_window_view(fp, (k, k), axis=(2, 3))
    eh, ew = bh + k - 1, bw + k - 1
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(P * eh * ew, cin * k * k)
    out = cols @ p.K1.reshape(cout, -1).T
    out = out.reshape(P, eh, ew, cout).transpose(0, 3, 1, 2)
    r = (k - 1) // 2
    nby0, nbx0 = by0 - r, bx0 - r
    H, W = p.map_hw
    y0, y1 = max(0, -nby0), min(eh, H - nby0)
    x0, x1 = max(0, -nbx0), min(ew, W - nbx0)
    out = np.ascontiguousarray(out[:, :, y0:y1, x0:x1])
    by0, bx0 = nby0 + y0, nbx0 + x0
    if p.mask is not None:
        out *= p.mask[None, :, by0:by0 + out.shape[2], bx0:bx0 + out.shape[3]]
    if p.keep_vec is not None:
        out *= p.keep_vec[None, :, None, None]
    return out, by0, bx0


def _tile_pool(F, by0, bx0, p: _LayerPlan):
    P, c, bh, bw = F.shape
    # box is clipped to the input map, so the pooled box is in-map too
    qy0, qx0 = by0 // 2, bx0 // 2
    qh = (by0 + bh - 1) // 2 - qy0 + 1
    qw = (bx0 + bw - 1) // 2 - qx0 + 1
    sub = p.argmax[:, qy0:qy0 + qh, qx0:qx0 + qw]
    iy = sub[..., 0].astype(np.int64) - by0
    ix = sub[..., 1].astype(np.int64) - bx0
    ok = (iy >= 0) & (iy < bh) & (ix >= 0) & (ix < bw)
    lin = np.where(ok, iy * bw + ix, 0).reshape(1, c, qh * qw)
    vals = np.take_along_axis(F.reshape(P, c, bh * bw), lin, axis=2)
    vals = vals * ok.reshape(1, c, qh * qw)
    return np.ascontiguousarray(vals.reshape(P, c, qh, qw)), qy0, qx0


def _tile_job(image, plan, aggs, tile, dtype):
    ty, tx, th, tw = tile
    P = th * tw
    c0 = image.shape[0]
    F = np.zeros((P, c0, th, tw), dtype=dtype)
    iy, ix = np.divmod(np.arange(P), tw)
    F[np.arange(P), :, iy, ix] = image[:, ty + iy, tx + ix].T
    by0, bx0 = ty, tx
    for i, p in enumerate(plan):
        if p.kind == "conv":
            F, by0, bx0 = _tile_conv(F, by0, bx0, p)
        else:
            F, by0, bx0 = _tile_pool(F, by0, bx0, p)
        agg = F.sum(axis=(2, 3), dtype=np.float64)
        aggs[i][ty:ty + th, tx:tx + tw, :] = \
            agg.reshape(th, tw, -1).astype(np.float32)


def extract_pathways(model: ModelSpec, weights: dict, image: np.ndarray,
                     options: PathwayOptions | None = None,
                     trace: ForwardTrace | None = None) -> PathwayResult:
    """Pathway cross-section aggregates S(H, W, C_l) for every pathway layer."""
    options = options or PathwayOptions()
    image = np.asarray(image, dtype=np.float32)
    if image.shape != tuple(model.input_shape):
        raise ShapeError(f"image shape {image.shape} != model input {model.input_shape}")
    if trace is None:
        trace = forward_trace(model, weights, image)
    keep = _keep_sets(model, weights, trace, options)
    plan = _build_plan(model, weights, trace, keep, options)
    dtype = _DTYPES[options.dtype]
    H, W = model.input_shape[1:]
    channels = model.pathway_channels()
    aggs = [np.zeros((H, W, c), dtype=np.float32) for c in channels]

    side = max(1, isqrt(max(1, options.chunk)))
    tiles = [(ty, tx, min(side, H - ty), min(side, W - tx))
             for ty in range(0, H, side) for tx in range(0, W, side)]
    if options.threads <= 1:
        for t in tiles:
            _tile_job(image, plan, aggs, t, dtype)
    else:
        # tiles write disjoint (h, w) slices; no locking needed
        with ThreadPoolExecutor(max_workers=options.threads) as pool:
            list(pool.map(lambda t: _tile_job(image, plan, aggs, t, dtype), tiles))

    aggregates = [LayerPathwayAggregate(p.layer, p.name, a)
                  for p, a in zip(plan, aggs)]
    return PathwayResult(aggregates, options, model.name, tuple(model.input_shape))


# ---------------------------------------------------------------------------
# Serialization: DPWN container with agg/L<idx> tensors + options JSON.

def save_result(result: PathwayResult, path) -> None:
    tensors = {f"agg/L{i}": a.values for i, a in enumerate(result.aggregates)}
    write_container(path, tensors, arch=[], input_shape=result.input_shape,
                    classes=0, extra={
                        "kind": "pathway-aggregates",
                        "layers": [[a.layer, a.name] for a in result.aggregates],
                        "options": result.options.persisted(),
                        "model": result.model_name,
                    })


def load_result(path) -> PathwayResult:
    header, tensors = read_container(path)
    layers = header.get("layers", [])
    opts = header.get("options", {})
    options = PathwayOptions(
        channel_mask=opts.get("channel_mask"), masks=opts.get("masks", True),
        chunk=opts.get("chunk", 64), threads=opts.get("threads", 1),
        dtype=opts.get("dtype", "f32"))
    aggregates = [LayerPathwayAggregate(int(li), name, tensors[f"agg/L{i}"])
                  for i, (li, name) in enumerate(layers)]
    return PathwayResult(aggregates, options, header.get("model", ""),
                         tuple(header.get("input_shape", ())))
