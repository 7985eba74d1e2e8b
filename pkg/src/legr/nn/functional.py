"""Stateless forward/backward kernels on float64 arrays.

Activations are channels-last (N, H, W, C) inside the engine; the patch
gather is markedly cheaper in that layout. Weights keep the conventional
(out, in, k, k) layout so filter slices are ``weight[i]``.

Every ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
consumes ``(grad_out, cache)``. Loops and reductions run in a fixed order,
so results are bit-reproducible for a given input.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Input tensor does not fit the layer it is fed to."""

    def __init__(self, layer: str, expected, actual):
        self.layer = layer
        self.expected = expected
        self.actual = actual
        super().__init__(f"layer {layer!r}: expected shape {expected}, got {actual}")


def conv_output_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))


def _out_hw(name, h, w, k, stride, pad):
    ho, wo = conv_output_size(h, k, stride, pad), conv_output_size(w, k, stride, pad)
    if ho < 1 or wo < 1:
        raise ShapeError(name, f"H, W >= {k - 2 * pad}", (h, w))
    return ho, wo


def conv2d_forward(x, weight, bias=None, stride=1, pad=0, name="conv"):
    """Standard convolution through a (N*Ho*Wo, k*k*C) patch matrix."""
    if x.ndim != 4 or x.shape[3] != weight.shape[1]:
        raise ShapeError(name, ("N", "H", "W", weight.shape[1]), x.shape)
    n, h, w, c = x.shape
    out_ch, _, k, _ = weight.shape
    ho, wo = _out_hw(name, h, w, k, stride, pad)
    xp = _pad_hw(x, pad)
    cols = np.empty((n, ho, wo, k * k * c))
    for a in range(k):
        for b in range(k):
            j = (a * k + b) * c
            cols[..., j:j + c] = xp[:, a:a + stride * ho:stride, b:b + stride * wo:stride, :]
    cols = cols.reshape(-1, k * k * c)
    wmat = np.ascontiguousarray(weight.transpose(2, 3, 1, 0)).reshape(k * k * c, out_ch)
    out = cols @ wmat
    if bias is not None:
        out += bias
    cache = (x.shape, cols, wmat, weight.shape, stride, pad, bias is not None)
    return out.reshape(n, ho, wo, out_ch), cache


def conv2d_backward(grad, cache):
    x_shape, cols, wmat, w_shape, stride, pad, has_bias = cache
    n, h, w, c = x_shape
    out_ch, _, k, _ = w_shape
    ho, wo = grad.shape[1], grad.shape[2]
    g2 = grad.reshape(-1, out_ch)
    dweight = (cols.T @ g2).reshape(k, k, c, out_ch).transpose(3, 2, 0, 1)
    dbias = g2.sum(axis=0) if has_bias else None
    dcols = (g2 @ wmat.T).reshape(n, ho, wo, k * k * c)
    dxp = np.zeros((n, h + 2 * pad, w + 2 * pad, c))
    for a in range(k):
        for b in range(k):
            j = (a * k + b) * c
            dxp[:, a:a + stride * ho:stride, b:b + stride * wo:stride, :] += dcols[..., j:j + c]
    dx = dxp[:, pad:pad + h, pad:pad + w, :]
    return np.ascontiguousarray(dx), np.ascontiguousarray(dweight), dbias


def depthwise_forward(x, weight, bias=None, stride=1, pad=0, name="dwconv"):
    """One k x k kernel per channel; ``weight`` has layout (C, 1, k, k)."""
    if x.ndim != 4 or x.shape[3] != weight.shape[0]:
        raise ShapeError(name, ("N", "H", "W", weight.shape[0]), x.shape)
    n, h, w, c = x.shape
    k = weight.shape[2]
    ho, wo = _out_hw(name, h, w, k, stride, pad)
    xp = _pad_hw(x, pad)
    out = np.zeros((n, ho, wo, c))
    for a in range(k):
        for b in range(k):
            out += xp[:, a:a + stride * ho:stride, b:b + stride * wo:stride, :] * weight[:, 0, a, b]
    if bias is not None:
        out += bias
    return out, (xp, x.shape, weight, stride, pad, bias is not None)


def depthwise_backward(grad, cache):
    xp, x_shape, weight, stride, pad, has_bias = cache
    n, h, w, c = x_shape
    k = weight.shape[2]
    ho, wo = grad.shape[1], grad.shape[2]
    dweight = np.zeros_like(weight)
    dxp = np.zeros_like(xp)
    g2 = grad.reshape(-1, c)
    for a in range(k):
        for b in range(k):
            sl = (slice(None), slice(a, a + stride * ho, stride),
                  slice(b, b + stride * wo, stride), slice(None))
            patch = np.ascontiguousarray(xp[sl]).reshape(-1, c)
            dweight[:, 0, a, b] = (g2 * patch).sum(axis=0)
            dxp[sl] += grad * weight[:, 0, a, b]
    dbias = g2.sum(axis=0) if has_bias else None
    return np.ascontiguousarray(dxp[:, pad:pad + h, pad:pad + w, :]), dweight, dbias


def dense_forward(x, weight, bias=None, name="dense"):
    """``weight`` has layout (out, in); ``x`` is (N, in)."""
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(name, ("N", weight.shape[1]), x.shape)
    out = x @ weight.T
    if bias is not None:
        out = out + bias
    return out, (x, weight, bias is not None)


def dense_backward(grad, cache):
    x, weight, has_bias = cache
    dbias = grad.sum(axis=0) if has_bias else None
    return grad @ weight, grad.T @ x, dbias


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(grad, mask):
    return grad * mask


def scale_shift_forward(x, scale, shift):
    return x * scale + shift, (x, scale)


def scale_shift_backward(grad, cache):
    x, scale = cache
    c = x.shape[-1]
    dscale = (grad * x).reshape(-1, c).sum(axis=0)
    dshift = grad.reshape(-1, c).sum(axis=0)
    return grad * scale, dscale, dshift


def maxpool2_forward(x):
    """2x2 max-pool, stride 2; odd trailing rows/columns are dropped.

    Ties route the gradient to the first maximal element in row-major order.
    """
    n, h, w, c = x.shape
    ho, wo = h // 2, w // 2
    xr = x[:, :2 * ho, :2 * wo, :].reshape(n, ho, 2, wo, 2, c)
    xr = xr.transpose(0, 1, 3, 5, 2, 4).reshape(n, ho, wo, c, 4)
    idx = xr.argmax(axis=-1)
    out = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx)


def maxpool2_backward(grad, cache):
    (n, h, w, c), idx = cache
    ho, wo = grad.shape[1], grad.shape[2]
    g4 = np.zeros((n, ho, wo, c, 4))
    np.put_along_axis(g4, idx[..., None], grad[..., None], axis=-1)
    g = g4.reshape(n, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * ho, 2 * wo, c)
    dx = np.zeros((n, h, w, c))
    dx[:, :2 * ho, :2 * wo, :] = g
    return dx


def gap_forward(x):
    return x.mean(axis=(1, 2)), x.shape


def gap_backward(grad, x_shape):
    n, h, w, c = x_shape
    return np.broadcast_to(grad[:, None, None, :] / (h * w), x_shape).copy()


def softmax_ce_forward(logits, labels):
    """Mean softmax cross-entropy over the batch."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].mean()
    return float(loss), (logp, labels)


def softmax_ce_backward(grad, cache):
    logp, labels = cache
    n = logp.shape[0]
    d = np.exp(logp)
    d[np.arange(n), labels] -= 1.0
    return d * (grad / n)


def mse_forward(pred, target):
    """Mean of squared errors over all elements."""
    diff = pred - target
    return float((diff * diff).mean()), diff


def mse_backward(grad, diff):
    return diff * (2.0 * grad / diff.size)


def conv2d(x, weight, bias=None, stride=1, pad=0, depthwise=False, name="conv"):
    """Convolution on an NCHW array, returning NCHW.

    Convenience entry point outside the engine; it pays two layout
    transposes per call.
    """
    if stride < 1 or pad < 0:
        raise ValueError(f"layer {name!r}: stride must be >= 1 and pad >= 0")
    if x.ndim != 4:
        raise ShapeError(name, ("N", "C", "H", "W"), x.shape)
    expected_c = weight.shape[0] if depthwise else weight.shape[1]
    if x.shape[1] != expected_c:
        raise ShapeError(name, ("N", expected_c, "H", "W"), x.shape)
    xh = np.ascontiguousarray(x.transpose(0, 2, 3, 1), dtype=np.float64)
    fwd = depthwise_forward if depthwise else conv2d_forward
    out, _ = fwd(xh, weight, bias, stride, pad, name)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))
