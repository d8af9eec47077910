"""Deformable sampling kernels: bilinear interpolation with zero padding,
deformable 2-D convolution with analytic gradients for input, weight and
offsets, and deformable RoI pooling.

Offset layout is fixed: for kernel size K, channel ``2*t`` holds the
y-offset and ``2*t + 1`` the x-offset of tap ``t``, taps numbered
row-major over the K x K grid. Samples outside the map read zero; at
exactly integral sampling coordinates the spatial derivative is the
right-continuous one (the floor cell's forward difference).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .geometry import Box


def conv_output_shape(h: int, w: int, k: int, stride: int = 1,
                      pad: int = 0) -> tuple[int, int]:
    """Spatial output shape of a K x K convolution; errors unless the
    geometry divides evenly."""
    if k < 1 or stride < 1 or pad < 0:
        raise ValueError(f"bad conv geometry k={k} stride={stride} pad={pad}")
    rem_h = h + 2 * pad - k
    rem_w = w + 2 * pad - k
    if rem_h < 0 or rem_w < 0 or rem_h % stride or rem_w % stride:
        raise ValueError(
            f"conv geometry does not tile: input {(h, w)}, k={k}, "
            f"stride={stride}, pad={pad}"
        )
    return rem_h // stride + 1, rem_w // stride + 1


def bilinear_sample(feature: np.ndarray, x: float, y: float) -> np.ndarray:
    """Bilinearly interpolate a (C, H, W) map at continuous (x, y).

    Pixel centers sit at integer coordinates; the four surrounding pixels
    are blended, with out-of-bounds neighbors contributing zero.

    Returns:
        A length-C value vector.
    """
    feature = np.asarray(feature, dtype=float)
    c, h, w = feature.shape
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    fx = x - x0
    fy = y - y0
    out = np.zeros(c)
    for iy, wy in ((y0, 1.0 - fy), (y0 + 1, fy)):
        if not 0 <= iy < h:
            continue
        for ix, wx in ((x0, 1.0 - fx), (x0 + 1, fx)):
            if not 0 <= ix < w:
                continue
            out += (wy * wx) * feature[:, iy, ix]
    return out


def bilinear_sample_grad(
    feature: np.ndarray, x: float, y: float
) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int, float]]]:
    """Gradients of :func:`bilinear_sample` at (x, y).

    Returns:
        ``(d_dx, d_dy, d_map)`` where the first two are length-C spatial
        derivatives and ``d_map`` lists the in-bounds corner pixels as
        ``(row, col, weight)`` -- the sparse per-channel derivative with
        respect to the map itself.
    """
    feature = np.asarray(feature, dtype=float)
    c, h, w = feature.shape
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    fx = x - x0
    fy = y - y0

    def value(iy: int, ix: int) -> np.ndarray:
        if 0 <= iy < h and 0 <= ix < w:
            return feature[:, iy, ix]
        return np.zeros(c)

    v00 = value(y0, x0)
    v01 = value(y0, x0 + 1)
    v10 = value(y0 + 1, x0)
    v11 = value(y0 + 1, x0 + 1)

    d_dx = (1.0 - fy) * (v01 - v00) + fy * (v11 - v10)
    d_dy = (1.0 - fx) * (v10 - v00) + fx * (v11 - v01)

    d_map = []
    for iy, ix, wgt in (
        (y0, x0, (1.0 - fy) * (1.0 - fx)),
        (y0, x0 + 1, (1.0 - fy) * fx),
        (y0 + 1, x0, fy * (1.0 - fx)),
        (y0 + 1, x0 + 1, fy * fx),
    ):
        if 0 <= iy < h and 0 <= ix < w:
            d_map.append((iy, ix, wgt))
    return d_dx, d_dy, d_map


class _SampleGrid:
    """Vectorized bilinear gather over a batch of sampling positions.

    Holds the corner indices, fractional weights and validity masks so the
    backward pass can reuse the forward geometry.
    """

    def __init__(self, feature: np.ndarray, ys: np.ndarray, xs: np.ndarray):
        c, h, w = feature.shape
        self.feature = feature
        self.y0 = np.floor(ys).astype(int)
        self.x0 = np.floor(xs).astype(int)
        self.fy = ys - self.y0
        self.fx = xs - self.x0
        self.corners = []
        for dy, dx in ((0, 0), (0, 1), (1, 0), (1, 1)):
            iy = self.y0 + dy
            ix = self.x0 + dx
            mask = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)
            iyc = np.clip(iy, 0, h - 1)
            ixc = np.clip(ix, 0, w - 1)
            vals = feature[:, iyc, ixc] * mask
            self.corners.append((iyc, ixc, mask, vals))

    def weights(self):
        w00 = (1.0 - self.fy) * (1.0 - self.fx)
        w01 = (1.0 - self.fy) * self.fx
        w10 = self.fy * (1.0 - self.fx)
        w11 = self.fy * self.fx
        return (w00, w01, w10, w11)

    def values(self) -> np.ndarray:
        """Sampled values, shape (C,) + positions shape."""
        out = None
        for wgt, (_, _, _, vals) in zip(self.weights(), self.corners):
            term = wgt * vals
            out = term if out is None else out + term
        return out

    def spatial_grads(self) -> tuple[np.ndarray, np.ndarray]:
        """d(value)/dx and d(value)/dy, each (C,) + positions shape."""
        v00 = self.corners[0][3]
        v01 = self.corners[1][3]
        v10 = self.corners[2][3]
        v11 = self.corners[3][3]
        d_dx = (1.0 - self.fy) * (v01 - v00) + self.fy * (v11 - v10)
        d_dy = (1.0 - self.fx) * (v10 - v00) + self.fx * (v11 - v01)
        return d_dx, d_dy

    def scatter_to_feature(self, grad_values: np.ndarray) -> np.ndarray:
        """Accumulate d(loss)/d(feature) from per-sample value gradients."""
        c = self.feature.shape[0]
        grad = np.zeros_like(self.feature)
        chan = np.arange(c).reshape((c,) + (1,) * self.y0.ndim)
        chan = np.broadcast_to(chan, (c,) + self.y0.shape)
        for wgt, (iyc, ixc, mask, _) in zip(self.weights(), self.corners):
            contrib = grad_values * (wgt * mask)
            iy = np.broadcast_to(iyc, contrib.shape)
            ix = np.broadcast_to(ixc, contrib.shape)
            np.add.at(grad, (chan, iy, ix), contrib)
        return grad


def _check_conv_shapes(inp, weight, offsets, stride, pad):
    if inp.ndim != 3:
        raise ValueError(f"input must be (Cin, H, W), got shape {inp.shape}")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ValueError(
            f"weight must be (Cout, Cin, K, K), got shape {weight.shape}"
        )
    if weight.shape[1] != inp.shape[0]:
        raise ValueError(
            f"weight expects {weight.shape[1]} input channels, map has {inp.shape[0]}"
        )
    k = weight.shape[2]
    out_h, out_w = conv_output_shape(inp.shape[1], inp.shape[2], k, stride, pad)
    if offsets.shape != (2 * k * k, out_h, out_w):
        raise ValueError(
            f"offsets must be {(2 * k * k, out_h, out_w)}, got {offsets.shape}"
        )
    return k, out_h, out_w


def _sampling_positions(k, out_h, out_w, stride, pad, offsets):
    """Absolute (y, x) sampling positions, each shaped (K*K, out_h*out_w)."""
    taps = np.arange(k * k)
    ky = (taps // k).reshape(-1, 1)
    kx = (taps % k).reshape(-1, 1)
    oi, oj = np.meshgrid(np.arange(out_h), np.arange(out_w), indexing="ij")
    base_y = (oi.reshape(1, -1) * stride - pad) + ky
    base_x = (oj.reshape(1, -1) * stride - pad) + kx
    off = offsets.reshape(2 * k * k, -1)
    return base_y + off[0::2], base_x + off[1::2]


def deform_conv2d(inp: np.ndarray, weight: np.ndarray, offsets: np.ndarray,
                  stride: int = 1, pad: int = 0) -> np.ndarray:
    """Deformable convolution: every kernel tap samples the input at its
    regular grid location plus a learned fractional offset.

    Args:
        inp: (Cin, H, W) input map.
        weight: (Cout, Cin, K, K) kernel.
        offsets: (2*K*K, H', W') per-output-location tap displacements.
        stride, pad: standard convolution geometry.

    Returns:
        (Cout, H', W') output map.
    """
    inp = np.asarray(inp, dtype=float)
    weight = np.asarray(weight, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    k, out_h, out_w = _check_conv_shapes(inp, weight, offsets, stride, pad)

    ys, xs = _sampling_positions(k, out_h, out_w, stride, pad, offsets)
    sampled = _SampleGrid(inp, ys, xs).values()  # (Cin, K*K, P)
    w_flat = weight.reshape(weight.shape[0], weight.shape[1], k * k)
    out = np.einsum("oct,ctp->op", w_flat, sampled)
    return out.reshape(weight.shape[0], out_h, out_w)


def deform_conv2d_grad(
    inp: np.ndarray, weight: np.ndarray, offsets: np.ndarray,
    grad_out: np.ndarray, stride: int = 1, pad: int = 0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradients of :func:`deform_conv2d`.

    Args:
        grad_out: (Cout, H', W') upstream gradient.

    Returns:
        Gradients with respect to ``inp``, ``weight`` and ``offsets``,
        matching their shapes.
    """
    inp = np.asarray(inp, dtype=float)
    weight = np.asarray(weight, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    grad_out = np.asarray(grad_out, dtype=float)
    k, out_h, out_w = _check_conv_shapes(inp, weight, offsets, stride, pad)
    if grad_out.shape != (weight.shape[0], out_h, out_w):
        raise ValueError(
            f"grad_out must be {(weight.shape[0], out_h, out_w)}, "
            f"got {grad_out.shape}"
        )

    ys, xs = _sampling_positions(k, out_h, out_w, stride, pad, offsets)
    grid = _SampleGrid(inp, ys, xs)
    sampled = grid.values()  # (Cin, K*K, P)

    g = grad_out.reshape(weight.shape[0], -1)  # (Cout, P)
    w_flat = weight.reshape(weight.shape[0], weight.shape[1], k * k)

    grad_weight = np.einsum("op,ctp->oct", g, sampled).reshape(weight.shape)
    grad_sampled = np.einsum("op,oct->ctp", g, w_flat)  # (Cin, K*K, P)

    grad_inp = grid.scatter_to_feature(grad_sampled)

    d_dx, d_dy = grid.spatial_grads()  # (Cin, K*K, P) each
    grad_y = np.sum(grad_sampled * d_dy, axis=0)  # (K*K, P)
    grad_x = np.sum(grad_sampled * d_dx, axis=0)
    grad_offsets = np.empty((2 * k * k, out_h * out_w))
    grad_offsets[0::2] = grad_y
    grad_offsets[1::2] = grad_x
    return grad_inp, grad_weight, grad_offsets.reshape(offsets.shape)


def deform_roi_pool(features: np.ndarray, roi: Box,
                    bins: tuple[int, int] = (7, 7),
                    offsets: np.ndarray | None = None) -> np.ndarray:
    """Deformable RoI pooling over a (C, H, W) map.

    The RoI (in feature-map pixel coordinates) is split into a
    ``bins[0] x bins[1]`` grid; each bin, displaced by its (dy, dx) offset,
    is averaged over a fixed 2 x 2 sub-grid of bilinear samples.

    Args:
        offsets: (2, bins[0], bins[1]) per-bin displacements in pixels;
            None means zeros, which reduces to plain RoI-align.

    Returns:
        (C, bins[0], bins[1]) pooled values.
    """
    features = np.asarray(features, dtype=float)
    if features.ndim != 3:
        raise ValueError(f"features must be (C, H, W), got {features.shape}")
    bh, bw = bins
    if bh < 1 or bw < 1:
        raise ValueError(f"bin grid must be positive, got {bins}")
    if roi.width <= 0.0 or roi.height <= 0.0:
        raise ValueError(f"RoI must have positive area, got {roi}")
    if offsets is None:
        offsets = np.zeros((2, bh, bw))
    offsets = np.asarray(offsets, dtype=float)
    if offsets.shape != (2, bh, bw):
        raise ValueError(f"offsets must be {(2, bh, bw)}, got {offsets.shape}")

    c = features.shape[0]
    bin_h = roi.height / bh
    bin_w = roi.width / bw
    out = np.zeros((c, bh, bw))
    for bi in range(bh):
        for bj in range(bw):
            acc = np.zeros(c)
            for sy in range(2):
                for sx in range(2):
                    y = roi.y1 + (bi + (sy + 0.5) / 2.0) * bin_h + offsets[0, bi, bj]
                    x = roi.x1 + (bj + (sx + 0.5) / 2.0) * bin_w + offsets[1, bi, bj]
                    acc += bilinear_sample(features, x, y)
            out[:, bi, bj] = acc / 4.0
    return out


# ---------------------------------------------------------------------------
# Finite-difference verification suite
# ---------------------------------------------------------------------------

def numeric_grad(f: Callable[[np.ndarray], float], x: np.ndarray,
                 step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, element by element."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray,
                  floor: float = 1e-3) -> float:
    """Worst elementwise relative error, with a floor on the denominator
    so near-zero gradients compare by absolute difference."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def _fractional_offsets(rng: np.random.Generator, shape) -> np.ndarray:
    """Offsets whose sampling positions stay well clear of integer
    coordinates, where the bilinear derivative is discontinuous."""
    whole = rng.integers(-1, 2, size=shape).astype(float)
    frac = rng.uniform(0.2, 0.8, size=shape)
    return whole + frac


def gradcheck_conv(seed: int = 0, cin: int = 2, cout: int = 2, h: int = 6,
                   w: int = 6, k: int = 3, stride: int = 1, pad: int = 1,
                   step: float = 1e-5) -> dict[str, float]:
    """Compare analytic conv gradients to central differences on one
    random instance. Returns max relative error per argument."""
    rng = np.random.default_rng(seed)
    out_h, out_w = conv_output_shape(h, w, k, stride, pad)
    inp = rng.normal(size=(cin, h, w))
    weight = rng.normal(size=(cout, cin, k, k))
    offsets = _fractional_offsets(rng, (2 * k * k, out_h, out_w))
    upstream = rng.normal(size=(cout, out_h, out_w))

    g_inp, g_w, g_off = deform_conv2d_grad(
        inp, weight, offsets, upstream, stride, pad
    )

    def loss_wrt(arg: str):
        def f(x: np.ndarray) -> float:
            args = {"inp": inp, "weight": weight, "offsets": offsets}
            args[arg] = x
            out = deform_conv2d(args["inp"], args["weight"], args["offsets"],
                                stride, pad)
            return float(np.sum(upstream * out))

        return f

    return {
        "input": max_rel_error(g_inp, numeric_grad(loss_wrt("inp"), inp.copy(), step)),
        "weight": max_rel_error(g_w, numeric_grad(loss_wrt("weight"), weight.copy(), step)),
        "offsets": max_rel_error(g_off, numeric_grad(loss_wrt("offsets"), offsets.copy(), step)),
    }


def gradcheck_bilinear(seed: int = 0, c: int = 3, h: int = 6, w: int = 6,
                       step: float = 1e-5) -> float:
    """Spatial-derivative check for :func:`bilinear_sample` at one random
    non-integral point. Returns the max relative error over d/dx and d/dy."""
    rng = np.random.default_rng(seed)
    feature = rng.normal(size=(c, h, w))
    x = rng.uniform(0.2, w - 1.2) + rng.uniform(0.2, 0.8)
    y = rng.uniform(0.2, h - 1.2) + rng.uniform(0.2, 0.8)
    d_dx, d_dy, _ = bilinear_sample_grad(feature, x, y)
    num_dx = (bilinear_sample(feature, x + step, y)
              - bilinear_sample(feature, x - step, y)) / (2.0 * step)
    num_dy = (bilinear_sample(feature, x, y + step)
              - bilinear_sample(feature, x, y - step)) / (2.0 * step)
    return max(max_rel_error(d_dx, num_dx), max_rel_error(d_dy, num_dy))


def run_gradcheck(seed: int = 0, trials: int = 20,
                  max_size: tuple[int, int, int, int] = (2, 3, 8, 8)
                  ) -> list[dict[str, float]]:
    """Run the finite-difference suite on ``trials`` random instances.

    Instance sizes are drawn up to ``max_size = (Cout, Cin, H, W)``.

    Returns:
        One record per trial with the max relative error for the conv
        input/weight/offset gradients and the bilinear spatial gradient.
    """
    rng = np.random.default_rng(seed)
    reports = []
    for t in range(trials):
        cout = int(rng.integers(1, max_size[0] + 1))
        cin = int(rng.integers(1, max_size[1] + 1))
        h = int(rng.integers(4, max_size[2] + 1))
        w = int(rng.integers(4, max_size[3] + 1))
        k = 3 if min(h, w) >= 3 else 1
        report = gradcheck_conv(seed=seed * 1000 + t, cin=cin, cout=cout,
                                h=h, w=w, k=k, stride=1, pad=1)
        report["bilinear"] = gradcheck_bilinear(seed=seed * 1000 + t)
        report["trial"] = t
        reports.append(report)
    return reports
