"""Compositing kernels for the feature rasterizer.

Splats are visited in global depth order and every pixel keeps its own
transmittance state, so the per-pixel compositing order is the global depth
order regardless of how the image is decomposed into bands. All kernels are
sequential and deterministic; parallelism belongs above the per-image level.

The same functions run untouched without numba (plain Python loops) if the
JIT is unavailable; results are bitwise identical either way.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

# Contribution cut: Gaussian tail beyond 5 sigma (exp(-12.5) of peak) is dropped.
Q_CUT = 25.0
ALPHA_CEIL = 0.999
TRANSMITTANCE_MIN = 1e-4


@njit(cache=True)
def composite(x0, x1, y0, y1, mx, my, ia, ib, ic, opac, values, feat, alpha, timg):
    """Front-to-back alpha compositing of depth-sorted splats into ``feat``/``alpha``.

    Rect bounds are inclusive pixel indices; (ia, ib, ic) are the entries of the
    inverse 2D covariance. ``timg`` carries per-pixel transmittance and must
    start at 1 within the processed region.
    """
    n_splats = mx.shape[0]
    n_channels = values.shape[1]
    for n in range(n_splats):
        for py in range(y0[n], y1[n] + 1):
            for px in range(x0[n], x1[n] + 1):
                t = timg[py, px]
                if t < TRANSMITTANCE_MIN:
                    continue
                dx = px - mx[n]
                dy = py - my[n]
                q = ia[n] * dx * dx + 2.0 * ib[n] * dx * dy + ic[n] * dy * dy
                if q > Q_CUT:
                    continue
                a = opac[n] * math.exp(-0.5 * q)
                if a > ALPHA_CEIL:
                    a = ALPHA_CEIL
                w = a * t
                for c in range(n_channels):
                    feat[py, px, c] += w * values[n, c]
                alpha[py, px] += w
                timg[py, px] = t * (1.0 - a)


@njit(cache=True)
def composite_jacobian(
    x0, x1, y0, y1, mx, my, ia, ib, ic, opac, values,
    dmx, dmy, dia, dib, dic,
    feat, alpha, timg, dlogt, jac,
):
    """Compositing plus forward-mode tangents of every pixel feature.

    ``dmx``..``dic`` are (N, 7) tangents of the per-splat screen quantities.
    ``dlogt`` (H, W, 7) accumulates the tangent of log transmittance and must
    start at 0; ``jac`` (H, W, C, 7) receives d(pixel feature)/d(tangent).
    The alpha ceiling and the transmittance cutoff are treated as constants,
    matching the forward pass exactly.
    """
    n_splats = mx.shape[0]
    n_channels = values.shape[1]
    for n in range(n_splats):
        for py in range(y0[n], y1[n] + 1):
            for px in range(x0[n], x1[n] + 1):
                t = timg[py, px]
                if t < TRANSMITTANCE_MIN:
                    continue
                dx = px - mx[n]
                dy = py - my[n]
                q = ia[n] * dx * dx + 2.0 * ib[n] * dx * dy + ic[n] * dy * dy
                if q > Q_CUT:
                    continue
                a = opac[n] * math.exp(-0.5 * q)
                clamped = a > ALPHA_CEIL
                if clamped:
                    a = ALPHA_CEIL
                w = a * t
                for c in range(n_channels):
                    feat[py, px, c] += w * values[n, c]
                alpha[py, px] += w
                gx = ia[n] * dx + ib[n] * dy
                gy = ib[n] * dx + ic[n] * dy
                one_minus = 1.0 - a
                for k in range(7):
                    if clamped:
                        da = 0.0
                    else:
                        dq = (
                            dia[n, k] * dx * dx
                            + 2.0 * dib[n, k] * dx * dy
                            + dic[n, k] * dy * dy
                            - 2.0 * gx * dmx[n, k]
                            - 2.0 * gy * dmy[n, k]
                        )
                        da = -0.5 * a * dq
                    dw = da * t + w * dlogt[py, px, k]
                    for c in range(n_channels):
                        jac[py, px, c, k] += dw * values[n, c]
                    dlogt[py, px, k] -= da / one_minus
                timg[py, px] = t * one_minus


@njit(cache=True)
def composite_gradient(
    x0, x1, y0, y1, mx, my, ia, ib, ic, opac, values,
    dmx, dmy, dia, dib, dic,
    gimg, timg, dlogt, grad,
):
    """Fused tangent pass: accumulates sum_pixels dL/dpixel . d(pixel)/d(tangent).

    ``gimg`` (H, W, C) holds the loss derivative w.r.t. each pixel feature.
    The forward image must already have been rendered; this pass replays the
    compositing to rebuild the per-splat weights.
    """
    n_splats = mx.shape[0]
    n_channels = values.shape[1]
    for n in range(n_splats):
        for py in range(y0[n], y1[n] + 1):
            for px in range(x0[n], x1[n] + 1):
                t = timg[py, px]
                if t < TRANSMITTANCE_MIN:
                    continue
                dx = px - mx[n]
                dy = py - my[n]
                q = ia[n] * dx * dx + 2.0 * ib[n] * dx * dy + ic[n] * dy * dy
                if q > Q_CUT:
                    continue
                a = opac[n] * math.exp(-0.5 * q)
                clamped = a > ALPHA_CEIL
                if clamped:
                    a = ALPHA_CEIL
                w = a * t
                phi = 0.0
                for c in range(n_channels):
                    phi += values[n, c] * gimg[py, px, c]
                gx = ia[n] * dx + ib[n] * dy
                gy = ib[n] * dx + ic[n] * dy
                one_minus = 1.0 - a
                for k in range(7):
                    if clamped:
                        da = 0.0
                    else:
                        dq = (
                            dia[n, k] * dx * dx
                            + 2.0 * dib[n, k] * dx * dy
                            + dic[n, k] * dy * dy
                            - 2.0 * gx * dmx[n, k]
                            - 2.0 * gy * dmy[n, k]
                        )
                        da = -0.5 * a * dq
                    dw = da * t + w * dlogt[py, px, k]
                    grad[k] += dw * phi
                    dlogt[py, px, k] -= da / one_minus
                timg[py, px] = t * one_minus


@njit(cache=True)
def collect_weights(x0, x1, y0, y1, mx, my, ia, ib, ic, opac, timg, pix_out, parent_out, w_out):
    """Record every (pixel, splat, compositing weight) contribution in order.

    Returns the number of contributions written. Output arrays must be sized
    to the summed rect areas (an upper bound).
    """
    n_splats = mx.shape[0]
    width = timg.shape[1]
    count = 0
    for n in range(n_splats):
        for py in range(y0[n], y1[n] + 1):
            for px in range(x0[n], x1[n] + 1):
                t = timg[py, px]
                if t < TRANSMITTANCE_MIN:
                    continue
                dx = px - mx[n]
                dy = py - my[n]
                q = ia[n] * dx * dx + 2.0 * ib[n] * dx * dy + ic[n] * dy * dy
                if q > Q_CUT:
                    continue
                a = opac[n] * math.exp(-0.5 * q)
                if a > ALPHA_CEIL:
                    a = ALPHA_CEIL
                pix_out[count] = py * width + px
                parent_out[count] = n
                w_out[count] = a * t
                count += 1
                timg[py, px] = t * (1.0 - a)
    return count
