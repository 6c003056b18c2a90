"""Forward and backward kernels for the embedding network's layer algebra.

All kernels take and return dense NCHW arrays (batch, channels, height,
width) and are pure functions of their inputs. Convolution uses im2col plus
a single GEMM; pooling and cross-channel normalization are vectorized with
cumulative sums. Computation stays in the dtype of the input, so the same
code serves single-precision training and the 64-bit gradient-check mode.

Convolution follows cross-correlation semantics (no kernel flip).
"""

import numpy as np

from .errors import ConfigError, ShapeError


def _require_rank4(name, x):
    if x.ndim != 4:
        raise ShapeError(f"{name} must be rank 4 (batch, channels, height, width), got shape {x.shape}")


def conv_output_shape(in_h, in_w, kernel, stride, pad):
    """Spatial extents of a convolution/pool output; raises if degenerate."""
    if kernel < 1 or stride < 1:
        raise ConfigError(f"kernel and stride must be >= 1, got kernel={kernel} stride={stride}")
    if pad < 0:
        raise ConfigError(f"padding must be >= 0, got {pad}")
    oh = (in_h + 2 * pad - kernel) // stride + 1
    ow = (in_w + 2 * pad - kernel) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"window {kernel}x{kernel} with stride {stride}, pad {pad} does not fit "
            f"input of {in_h}x{in_w} (output would be {oh}x{ow})"
        )
    return oh, ow


def _im2col(x, kernel, stride, pad):
    """Unfold sliding windows into a (B*OH*OW, C*KH*KW) matrix."""
    b, c, h, w = x.shape
    oh, ow = conv_output_shape(h, w, kernel, stride, pad)
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((b, c, kernel, kernel, oh, ow), dtype=x.dtype)
    for u in range(kernel):
        u_max = u + stride * oh
        for v in range(kernel):
            v_max = v + stride * ow
            cols[:, :, u, v, :, :] = x[:, :, u:u_max:stride, v:v_max:stride]
    return cols.transpose(0, 4, 5, 1, 2, 3).reshape(b * oh * ow, c * kernel * kernel), oh, ow


def _col2im(cols, x_shape, kernel, stride, pad):
    """Scatter-add column gradients back into an input-shaped array."""
    b, c, h, w = x_shape
    oh, ow = conv_output_shape(h, w, kernel, stride, pad)
    cols = cols.reshape(b, oh, ow, c, kernel, kernel).transpose(0, 3, 4, 5, 1, 2)
    padded = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for u in range(kernel):
        u_max = u + stride * oh
        for v in range(kernel):
            v_max = v + stride * ow
            padded[:, :, u:u_max:stride, v:v_max:stride] += cols[:, :, u, v, :, :]
    if pad > 0:
        return padded[:, :, pad:-pad, pad:-pad]
    return padded


def conv2d_forward(x, weights, bias, stride, pad):
    """Convolve x (B,C,H,W) with a kernel bank (OC,C,KH,KW) plus bias (OC,).

    Returns (B, OC, OH, OW) where OH = floor((H + 2*pad - KH)/stride) + 1.
    """
    _require_rank4("input", x)
    _require_rank4("weights", weights)
    oc, wc, kh, kw = weights.shape
    if kh != kw:
        raise ShapeError(f"only square kernels are supported, got {kh}x{kw}")
    if x.shape[1] != wc:
        raise ShapeError(f"input has {x.shape[1]} channels but weights expect {wc}")
    if bias is not None and bias.shape != (oc,):
        raise ShapeError(f"bias must have shape ({oc},), got {bias.shape}")
    cols, oh, ow = _im2col(x, kh, stride, pad)
    out = cols @ weights.reshape(oc, -1).T
    if bias is not None:
        out += bias
    return out.reshape(x.shape[0], oh, ow, oc).transpose(0, 3, 1, 2)


def conv2d_backward(x, weights, grad_out, stride, pad):
    """Gradients of conv2d_forward w.r.t. input, weights, and bias."""
    _require_rank4("input", x)
    _require_rank4("grad_out", grad_out)
    oc, _, kh, _ = weights.shape
    oh, ow = conv_output_shape(x.shape[2], x.shape[3], kh, stride, pad)
    expected = (x.shape[0], oc, oh, ow)
    if grad_out.shape != expected:
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match forward output {expected}")
    cols, _, _ = _im2col(x, kh, stride, pad)
    g = grad_out.transpose(0, 2, 3, 1).reshape(-1, oc)
    grad_weights = (g.T @ cols).reshape(weights.shape)
    grad_bias = grad_out.sum(axis=(0, 2, 3))
    grad_cols = g @ weights.reshape(oc, -1)
    grad_x = _col2im(grad_cols, x.shape, kh, stride, pad)
    return grad_x, grad_weights, grad_bias


def relu_forward(x):
    """Elementwise max(0, x)."""
    return np.maximum(x, 0)


def relu_backward(x, grad_out):
    """Pass gradient where x > 0; the subgradient at exactly 0 is 0."""
    return np.where(x > 0, grad_out, 0)


def maxpool_forward(x, window, stride):
    """Max over each window; also returns flat argmax indices into x.

    Ties go to the lowest linear index (row-major scan order), which makes
    the routing in maxpool_backward deterministic.
    """
    _require_rank4("input", x)
    b, c, h, w = x.shape
    oh, ow = conv_output_shape(h, w, window, stride, 0)
    windows = np.empty((b, c, oh, ow, window * window), dtype=x.dtype)
    offsets = np.empty((oh, ow, window * window), dtype=np.int64)
    base = (np.arange(oh) * stride)[:, None] * w + (np.arange(ow) * stride)[None, :]
    pos = 0
    for u in range(window):
        for v in range(window):
            windows[:, :, :, :, pos] = x[:, :, u : u + stride * oh : stride, v : v + stride * ow : stride]
            offsets[:, :, pos] = base + u * w + v
            pos += 1
    local = windows.argmax(axis=4)
    out = np.take_along_axis(windows, local[..., None], axis=4)[..., 0]
    spatial = offsets[np.arange(oh)[:, None], np.arange(ow)[None, :], local]
    plane = (np.arange(b)[:, None, None, None] * c + np.arange(c)[None, :, None, None]) * (h * w)
    return out, plane + spatial


def maxpool_backward(indices, grad_out, input_shape):
    """Route each gradient value to its recorded argmax position."""
    if indices.shape != grad_out.shape:
        raise ShapeError(f"index map shape {indices.shape} does not match grad_out {grad_out.shape}")
    grad_x = np.zeros(int(np.prod(input_shape)), dtype=grad_out.dtype)
    np.add.at(grad_x, indices.ravel(), grad_out.ravel())
    return grad_x.reshape(input_shape)


def _window_sum_channels(x, n):
    """Sum over a window of n channels centered at each channel, clipped."""
    b, c, h, w = x.shape
    half = n // 2
    csum = np.cumsum(x, axis=1)
    zero = np.zeros((b, 1, h, w), dtype=x.dtype)
    csum = np.concatenate([zero, csum], axis=1)
    hi = np.minimum(np.arange(c) + half + 1, c)
    lo = np.maximum(np.arange(c) - half, 0)
    return csum[:, hi, :, :] - csum[:, lo, :, :]


def lrn_forward(x, n, alpha, beta, k):
    """Cross-channel response normalization.

    out_c = x_c / (k + (alpha/n) * sum_{c' in window(c)} x_{c'}^2) ** beta
    with a window of n channels centered at c, clipped at the boundaries.
    """
    _require_rank4("input", x)
    if n < 1 or n % 2 == 0:
        raise ConfigError(f"lrn neighborhood size must be odd and >= 1, got {n}")
    if k <= 0:
        raise ConfigError(f"lrn bias must be > 0, got {k}")
    scale = k + (alpha / n) * _window_sum_channels(x * x, n)
    return x * scale ** (-beta)


def lrn_backward(x, grad_out, n, alpha, beta, k):
    """Exact gradient of lrn_forward with respect to x."""
    if n < 1 or n % 2 == 0:
        raise ConfigError(f"lrn neighborhood size must be odd and >= 1, got {n}")
    scale = k + (alpha / n) * _window_sum_channels(x * x, n)
    direct = grad_out * scale ** (-beta)
    inner = _window_sum_channels(grad_out * x * scale ** (-beta - 1), n)
    return direct - (2.0 * alpha * beta / n) * x * inner


def fc_forward(x, weights, bias):
    """Affine map on the flattened input: weights @ flatten(x) + bias.

    x may be (B, C, H, W) or already flat (B, F); weights are (OUT, F).
    """
    flat = x.reshape(x.shape[0], -1)
    if flat.shape[1] != weights.shape[1]:
        raise ShapeError(f"flattened input length {flat.shape[1]} does not match weights input extent {weights.shape[1]}")
    if bias is not None and bias.shape != (weights.shape[0],):
        raise ShapeError(f"bias must have shape ({weights.shape[0]},), got {bias.shape}")
    out = flat @ weights.T
    if bias is not None:
        out += bias
    return out


def fc_backward(x, weights, grad_out):
    """Gradients of fc_forward; grad_input is reshaped back to x's shape."""
    flat = x.reshape(x.shape[0], -1)
    if grad_out.shape != (flat.shape[0], weights.shape[0]):
        raise ShapeError(f"grad_out shape {grad_out.shape} does not match output ({flat.shape[0]}, {weights.shape[0]})")
    grad_weights = grad_out.T @ flat
    grad_bias = grad_out.sum(axis=0)
    grad_x = (grad_out @ weights).reshape(x.shape)
    return grad_x, grad_weights, grad_bias
