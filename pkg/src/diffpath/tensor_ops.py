"""Dense tensor kernels for small convolutional classifiers.

Tensors are plain numpy float32 arrays in row-major order. Every kernel
here is a pure function: inputs are never mutated and identical inputs
produce bitwise-identical outputs. Reductions inside conv and linear
layers accumulate in float64 and are cast back to float32 at the end,
which keeps results independent of any caller-side work partitioning.

Only what the downstream pipelines need is implemented: forward conv,
ReLU with mask capture, 2x2 max pooling with argmax capture, linear
layers, softmax cross-entropy, and the matching input-gradient rules.
Weight-gradient computation is out of scope.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

__all__ = [
    "conv2d_forward",
    "relu_forward",
    "maxpool2x2_forward",
    "linear_forward",
    "softmax_cross_entropy",
    "conv2d_input_grad",
    "relu_input_grad",
    "maxpool2x2_input_grad",
    "linear_input_grad",
    "layer_input_gradient",
]

_F32 = np.float32


def _as_f32(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=_F32)


def conv2d_forward(input: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                   pad: int = 0, stride: int = 1) -> np.ndarray:
    """Cross-correlate input [cin,h,w] with weight [cout,cin,k,k].

    out(co,y,x) = bias(co) + sum_{ci,dy,dx} input(ci, y*stride-pad+dy,
    x*stride-pad+dx) * weight(co,ci,dy,dx), with zero padding outside
    the input. Output extent h' = (h + 2*pad - k)/stride + 1.
    """
    input = _as_f32(input)
    weight = _as_f32(weight)
    bias = _as_f32(bias)
    if input.ndim != 3 or weight.ndim != 4 or bias.ndim != 1:
        raise ShapeError("conv2d_forward: expected input[cin,h,w], weight[cout,cin,k,k], bias[cout]")
    cout, cin, kh, kw = weight.shape
    if kh != kw or kh % 2 != 1:
        raise ShapeError(f"conv2d_forward: kernel must be square and odd, got {kh}x{kw}")
    if pad < 0 or stride < 1:
        raise ShapeError("conv2d_forward: pad >= 0 and stride >= 1 required")
    if input.shape[0] != cin or bias.shape[0] != cout:
        raise ShapeError(f"conv2d_forward: channel mismatch input={input.shape} weight={weight.shape}")
    h, w = input.shape[1:]
    if (h + 2 * pad - kh) % stride != 0 or (w + 2 * pad - kw) % stride != 0:
        raise ShapeError("conv2d_forward: non-integral output extent")
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError("conv2d_forward: empty output")

    padded = np.zeros((cin, h + 2 * pad, w + 2 * pad), dtype=_F32)
    padded[:, pad:pad + h, pad:pad + w] = input
    # windows[cin, ho, wo, kh, kw]; strided view, no copy yet
    win = sliding_window_view(padded, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, cin * kh * kw)
    kmat = weight.reshape(cout, cin * kh * kw)
    # float64 accumulation for schedule-independent reproducibility
    out = cols.astype(np.float64) @ kmat.T.astype(np.float64)
    out += bias.astype(np.float64)[None, :]
    return out.T.reshape(cout, ho, wo).astype(_F32)


def relu_forward(input: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise max(x, 0). Returns (output, mask) with mask=1 where x>0."""
    input = _as_f32(input)
    mask = (input > 0).astype(_F32)
    return input * mask, mask


def maxpool2x2_forward(input: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2/stride-2 max pool of input [c,h,w] with ceiling semantics.

    Odd extents leave partial windows at the bottom/right edges. Returns
    (output [c,ceil(h/2),ceil(w/2)], argmax int32 [c,h',w',2]) where
    argmax holds the winning input (y,x) per output; ties resolve to the
    row-major first occurrence inside the window.
    """
    input = _as_f32(input)
    if input.ndim != 3:
        raise ShapeError("maxpool2x2_forward: expected input[c,h,w]")
    c, h, w = input.shape
    ho, wo = (h + 1) // 2, (w + 1) // 2
    padded = np.full((c, ho * 2, wo * 2), -np.inf, dtype=_F32)
    padded[:, :h, :w] = input
    win = padded.reshape(c, ho, 2, wo, 2).transpose(0, 1, 3, 2, 4).reshape(c, ho, wo, 4)
    flat = np.argmax(win, axis=3)  # first occurrence wins ties
    out = np.take_along_axis(win, flat[..., None], axis=3)[..., 0]
    oy = np.arange(ho, dtype=np.int32)[None, :, None]
    ox = np.arange(wo, dtype=np.int32)[None, None, :]
    argmax = np.stack([2 * oy + (flat // 2).astype(np.int32),
                       2 * ox + (flat % 2).astype(np.int32)], axis=3)
    return out.astype(_F32), argmax


def linear_forward(input: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """out = weight @ input + bias for input [n], weight [m,n], bias [m]."""
    input = _as_f32(input)
    weight = _as_f32(weight)
    bias = _as_f32(bias)
    if input.ndim != 1 or weight.ndim != 2 or weight.shape[1] != input.shape[0] \
            or bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear_forward: shapes {weight.shape} @ {input.shape} + {bias.shape}")
    out = weight.astype(np.float64) @ input.astype(np.float64) + bias.astype(np.float64)
    return out.astype(_F32)


def softmax_cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Loss -log softmax(logits)[label] and its gradient w.r.t. logits.

    Softmax is computed with max subtraction so huge logits do not
    overflow. grad = softmax(logits) - onehot(label).
    """
    logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    m = logits.shape[0]
    if not (0 <= int(label) < m):
        raise ShapeError(f"softmax_cross_entropy: label {label} out of range [0,{m})")
    label = int(label)
    z = logits - logits.max()
    lse = np.log(np.exp(z).sum())
    loss = float(lse - z[label])
    grad = np.exp(z - lse)
    grad[label] -= 1.0
    return loss, grad.astype(_F32)


def conv2d_input_grad(upstream: np.ndarray, weight: np.ndarray, pad: int) -> np.ndarray:
    """Gradient of conv2d_forward (stride 1) w.r.t. its input.

    Equals a full correlation of the upstream gradient with the weight
    rotated 180 degrees and its in/out channel axes swapped, at padding
    k-1-pad.
    """
    weight = _as_f32(weight)
    k = weight.shape[2]
    wt = weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    zeros = np.zeros(wt.shape[0], dtype=_F32)
    return conv2d_forward(upstream, wt, zeros, pad=k - 1 - pad, stride=1)


def relu_input_grad(upstream: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Pass upstream through where the forward input was positive."""
    if upstream.shape != mask.shape:
        raise ShapeError(f"relu_input_grad: {upstream.shape} vs mask {mask.shape}")
    return (_as_f32(upstream) * _as_f32(mask)).astype(_F32)


def maxpool2x2_input_grad(upstream: np.ndarray, argmax: np.ndarray,
                          input_shape: tuple[int, int, int]) -> np.ndarray:
    """Scatter upstream values to the recorded argmax coordinates."""
    upstream = _as_f32(upstream)
    if argmax.shape != upstream.shape + (2,):
        raise ShapeError(f"maxpool2x2_input_grad: argmax {argmax.shape} vs upstream {upstream.shape}")
    c, ho, wo = upstream.shape
    out = np.zeros(input_shape, dtype=_F32)
    ci = np.arange(c)[:, None, None]
    # pool windows are disjoint, so plain fancy assignment cannot collide
    out[ci, argmax[..., 0], argmax[..., 1]] = upstream
    return out


def linear_input_grad(upstream: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """grad_in = weight^T @ upstream."""
    upstream = _as_f32(upstream)
    weight = _as_f32(weight)
    if upstream.shape != (weight.shape[0],):
        raise ShapeError(f"linear_input_grad: {weight.shape} vs upstream {upstream.shape}")
    return (weight.T.astype(np.float64) @ upstream.astype(np.float64)).astype(_F32)


def layer_input_gradient(kind: str, upstream: np.ndarray, *, weight=None, pad=None,
                         mask=None, argmax=None, input_shape=None) -> np.ndarray:
    """Dispatch the input-gradient rule for one layer kind.

    Each kind consumes exactly the record fields it needs: conv takes
    weight+pad, relu the forward mask, maxpool the argmax map and input
    shape, linear the weight, flatten the input shape.
    """
    if kind == "conv":
        if weight is None or pad is None:
            raise ShapeError("layer_input_gradient: conv needs weight and pad")
        return conv2d_input_grad(upstream, weight, pad)
    if kind == "relu":
        if mask is None:
            raise ShapeError("layer_input_gradient: relu needs mask")
        return relu_input_grad(upstream, mask)
    if kind == "maxpool":
        if argmax is None or input_shape is None:
            raise ShapeError("layer_input_gradient: maxpool needs argmax and input_shape")
        return maxpool2x2_input_grad(upstream, argmax, tuple(input_shape))
    if kind == "linear":
        if weight is None:
            raise ShapeError("layer_input_gradient: linear needs weight")
        return linear_input_grad(upstream, weight)
    if kind == "flatten":
        if input_shape is None:
            raise ShapeError("layer_input_gradient: flatten needs input_shape")
        return _as_f32(upstream).reshape(tuple(input_shape))
    raise ShapeError(f"layer_input_gradient: unknown kind {kind!r}")
