"""Differentiable feature splatting on the CPU.

Projects frozen Gaussians through a camera, composites their feature vectors
front to back, and propagates a 7-wide forward-mode tangent (translation,
rotation, log-scale) through projection, Gaussian weights, and compositing.

The global transform acts on the scene: splat means map through it and splat
covariances pick up its rotation and scale, while the camera stays put. The
transform is differentiated at the identity of a right perturbation
``T * exp(xi)``. Depth culling and the depth sort are treated as constants of
the tangent, as is standard for splatting renderers.

Rendering is pure and decomposition invariant: every pixel composites in the
global depth order no matter how the image is split into row bands.
"""

from __future__ import annotations

import dataclasses
import math
from typing import TYPE_CHECKING

import numpy as np

from . import _kernels
from .geometry import Camera, Sim3Transform, skew

if TYPE_CHECKING:
    from .scene import GaussianScene

# Anti-aliasing floor added to projected covariances (px^2). The tangent flows
# through the un-floored term only; the floor itself is constant.
BLUR_FLOOR = 0.3
ALPHA_CEIL = _kernels.ALPHA_CEIL
TRANSMITTANCE_MIN = _kernels.TRANSMITTANCE_MIN
_RECT_RADIUS = math.sqrt(_kernels.Q_CUT)


@dataclasses.dataclass
class FeatureImage:
    """Dense grid of feature vectors plus accumulated opacity.

    ``data`` is (height, width, channels) float64, row major with the channel
    fastest; ``alpha`` is (height, width) in [0, 1].
    """

    width: int
    height: int
    channels: int
    data: np.ndarray
    alpha: np.ndarray

    def copy(self) -> "FeatureImage":
        return FeatureImage(self.width, self.height, self.channels, self.data.copy(), self.alpha.copy())


@dataclasses.dataclass(frozen=True)
class Splat2D:
    """Screen-space Gaussian produced by EWA projection."""

    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    parent: int


def _quat_rotmats(q: np.ndarray) -> np.ndarray:
    """Batch of rotation matrices from unit quaternions (N, 4) in (w, x, y, z)."""
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    out = np.empty((q.shape[0], 3, 3))
    out[:, 0, 0] = 1 - 2 * (y * y + z * z)
    out[:, 0, 1] = 2 * (x * y - w * z)
    out[:, 0, 2] = 2 * (x * z + w * y)
    out[:, 1, 0] = 2 * (x * y + w * z)
    out[:, 1, 1] = 1 - 2 * (x * x + z * z)
    out[:, 1, 2] = 2 * (y * z - w * x)
    out[:, 2, 0] = 2 * (x * z - w * y)
    out[:, 2, 1] = 2 * (y * z + w * x)
    out[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def _local_frames(scene) -> np.ndarray:
    """Per-splat covariance factors R(q) * diag(exp(log_scales)), cached on the scene."""
    cached = getattr(scene, "_local_frame_cache", None)
    if cached is not None:
        return cached
    frames = _quat_rotmats(scene.rotations.astype(float)) * np.exp(scene.log_scales.astype(float))[:, None, :]
    scene._local_frame_cache = frames
    return frames


@dataclasses.dataclass
class _Projected:
    """Depth-sorted per-splat screen quantities for one (scene, camera, transform)."""

    parent: np.ndarray      # original splat indices, sorted by (depth, index)
    xc: np.ndarray          # camera-space means (N, 3)
    mean2d: np.ndarray      # (N, 2)
    cov2d: np.ndarray       # (N, 2, 2), blur floor included
    m_cam: np.ndarray       # camera-frame 3D covariances (N, 3, 3), un-floored
    jproj: np.ndarray       # projection Jacobians (N, 2, 3)
    inv_a: np.ndarray
    inv_b: np.ndarray
    inv_c: np.ndarray
    opacity: np.ndarray
    x0: np.ndarray
    x1: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    k_mat: np.ndarray       # scene-to-camera linear map including scale (3, 3)
    lin: np.ndarray         # world linear map s * R_T (3, 3)
    means_raw: np.ndarray   # untransformed world means of kept splats (N, 3)
    frames: np.ndarray      # local covariance factors R(q) diag(e^ls) of kept splats (N, 3, 3)
    b_cam: np.ndarray       # K @ frames (N, 3, 3); m_cam = b_cam @ b_cam^T


def _project_arrays(scene, cam: Camera, transform: Sim3Transform) -> _Projected | None:
    s = transform.scale
    lin = s * transform.rotation
    rc = cam.rotation
    means = scene.means.astype(float)
    mw = means @ lin.T + transform.translation
    xc_all = mw @ rc.T + cam.translation
    keep = xc_all[:, 2] > cam.near_plane
    if not np.any(keep):
        return None
    parent = np.flatnonzero(keep)
    xc = xc_all[keep]
    frames = _local_frames(scene)[keep]
    k_mat = rc @ lin
    b = np.einsum("ij,njk->nik", k_mat, frames)
    m_cam = np.einsum("nik,njk->nij", b, b)

    x, y, z = xc[:, 0], xc[:, 1], xc[:, 2]
    jproj = np.zeros((xc.shape[0], 2, 3))
    jproj[:, 0, 0] = cam.fx / z
    jproj[:, 0, 2] = -cam.fx * x / (z * z)
    jproj[:, 1, 1] = cam.fy / z
    jproj[:, 1, 2] = -cam.fy * y / (z * z)

    jm = np.einsum("nab,nbc->nac", jproj, m_cam)
    cov2d = np.einsum("nab,ncb->nac", jm, jproj)
    cov2d[:, 0, 0] += BLUR_FLOOR
    cov2d[:, 1, 1] += BLUR_FLOOR

    mean2d = np.stack([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy], axis=1)
    depth = z

    order = np.lexsort((parent, depth))
    parent = parent[order]
    xc = xc[order]
    mean2d = mean2d[order]
    cov2d = cov2d[order]
    m_cam = m_cam[order]
    jproj = jproj[order]
    frames = frames[order]
    b = b[order]

    a = cov2d[:, 0, 0]
    bb = cov2d[:, 0, 1]
    c = cov2d[:, 1, 1]
    det = a * c - bb * bb
    inv_a = c / det
    inv_b = -bb / det
    inv_c = a / det

    rx = _RECT_RADIUS * np.sqrt(a)
    ry = _RECT_RADIUS * np.sqrt(c)
    x0 = np.clip(np.ceil(mean2d[:, 0] - rx), 0, cam.width).astype(np.int64)
    x1 = np.clip(np.floor(mean2d[:, 0] + rx), -1, cam.width - 1).astype(np.int64)
    y0 = np.clip(np.ceil(mean2d[:, 1] - ry), 0, cam.height).astype(np.int64)
    y1 = np.clip(np.floor(mean2d[:, 1] + ry), -1, cam.height - 1).astype(np.int64)

    opac = scene.opacities[parent].astype(float)
    return _Projected(
        parent=parent, xc=xc, mean2d=mean2d, cov2d=cov2d, m_cam=m_cam, jproj=jproj,
        inv_a=inv_a, inv_b=inv_b, inv_c=inv_c, opacity=opac,
        x0=x0, x1=x1, y0=y0, y1=y1, k_mat=k_mat, lin=lin,
        means_raw=scene.means.astype(float)[parent], frames=frames, b_cam=b,
    )


def _splat_tangents(proj: _Projected, cam: Camera) -> tuple[np.ndarray, ...]:
    """Forward-mode tangents of mean2d, depth, and the inverse 2D covariance.

    Returns (dmx, dmy, dia, dib, dic, ddepth), each (N, 7), ordered
    (rho_x, rho_y, rho_z, omega_x, omega_y, omega_z, log_scale) for the right
    perturbation ``T * exp(xi)`` at ``xi = 0``.
    """
    n = proj.parent.shape[0]
    rc = cam.rotation
    lin = proj.lin
    means = proj.means_raw

    # World-mean tangents: translation columns, rotation generators, scale ray.
    dmw = np.zeros((n, 3, 7))
    for j in range(3):
        dmw[:, :, j] = lin[:, j]
    for j in range(3):
        dmw[:, :, 3 + j] = means @ (lin @ skew(np.eye(3)[j])).T
    dmw[:, :, 6] = means @ lin.T
    dxc = np.einsum("ij,njt->nit", rc, dmw)

    x, y, z = proj.xc[:, 0], proj.xc[:, 1], proj.xc[:, 2]
    dx_, dy_, dz_ = dxc[:, 0, :], dxc[:, 1, :], dxc[:, 2, :]
    z_ = z[:, None]
    dmx = cam.fx * (dx_ / z_ - (x / (z * z))[:, None] * dz_)
    dmy = cam.fy * (dy_ / z_ - (y / (z * z))[:, None] * dz_)

    # Camera-frame covariance tangents: only rotation and scale move it.
    dm_cam = np.zeros((n, 7, 3, 3))
    b = proj.b_cam
    for j in range(3):
        g = proj.k_mat @ skew(np.eye(3)[j])
        db = np.einsum("ij,njk->nik", g, proj.frames)
        dm_cam[:, 3 + j] = np.einsum("nik,njk->nij", db, b) + np.einsum("nik,njk->nij", b, db)
    dm_cam[:, 6] = 2.0 * proj.m_cam

    # Projection-Jacobian tangents.
    dj = np.zeros((n, 2, 3, 7))
    dj[:, 0, 0, :] = -cam.fx * dz_ / (z * z)[:, None]
    dj[:, 0, 2, :] = -cam.fx * (dx_ / (z * z)[:, None] - (2 * x / (z * z * z))[:, None] * dz_)
    dj[:, 1, 1, :] = -cam.fy * dz_ / (z * z)[:, None]
    dj[:, 1, 2, :] = -cam.fy * (dy_ / (z * z)[:, None] - (2 * y / (z * z * z))[:, None] * dz_)

    term1 = np.einsum("nabt,nbc,ndc->ntad", dj, proj.m_cam, proj.jproj)
    term2 = np.einsum("nab,ntbc,ndc->ntad", proj.jproj, dm_cam, proj.jproj)
    dcov = term1 + term2 + term1.transpose(0, 1, 3, 2)

    lam = np.empty((n, 2, 2))
    lam[:, 0, 0] = proj.inv_a
    lam[:, 0, 1] = proj.inv_b
    lam[:, 1, 0] = proj.inv_b
    lam[:, 1, 1] = proj.inv_c
    dlam = -np.einsum("nab,ntbc,ncd->ntad", lam, dcov, lam)
    dia = dlam[:, :, 0, 0]
    dib = dlam[:, :, 0, 1]
    dic = dlam[:, :, 1, 1]
    return dmx, dmy, dia, dib, dic, dz_


def _values_for(scene, proj: _Projected, values: np.ndarray | None) -> np.ndarray:
    if values is None:
        values = scene.features
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] != scene.n_splats:
        raise ValueError(f"per-splat values must be (n_splats, C), got {values.shape}")
    return np.ascontiguousarray(values[proj.parent])


def _empty_image(cam: Camera, channels: int) -> FeatureImage:
    return FeatureImage(
        cam.width, cam.height, channels,
        np.zeros((cam.height, cam.width, channels)),
        np.zeros((cam.height, cam.width)),
    )


def _channel_count(scene, values) -> int:
    return scene.feature_dim if values is None else np.asarray(values).shape[1]


def project_splats(scene: "GaussianScene", cam: Camera) -> list[Splat2D]:
    """EWA-project every splat, culling those at camera depth <= the near plane.

    Output is sorted by depth ascending with ties broken by splat index.
    """
    proj = _project_arrays(scene, cam, Sim3Transform.identity())
    if proj is None:
        return []
    return [
        Splat2D(proj.mean2d[i].copy(), proj.cov2d[i].copy(), float(proj.xc[i, 2]), int(proj.parent[i]))
        for i in range(proj.parent.shape[0])
    ]


def render(
    scene: "GaussianScene",
    cam: Camera,
    transform: Sim3Transform | None = None,
    values: np.ndarray | None = None,
    tile_rows: int | None = None,
) -> FeatureImage:
    """Composite the transformed scene through ``cam`` into a feature image.

    ``values`` overrides the per-splat payload (defaults to scene features;
    pass scene colors for a photometric render). ``tile_rows`` splits the
    image into row bands processed independently; the result is bitwise
    identical for any split.
    """
    transform = transform if transform is not None else Sim3Transform.identity()
    proj = _project_arrays(scene, cam, transform)
    channels = _channel_count(scene, values)
    img = _empty_image(cam, channels)
    if proj is None:
        return img
    vals = _values_for(scene, proj, values)
    timg = np.ones((cam.height, cam.width))
    if tile_rows is None:
        _kernels.composite(
            proj.x0, proj.x1, proj.y0, proj.y1,
            proj.mean2d[:, 0], proj.mean2d[:, 1],
            proj.inv_a, proj.inv_b, proj.inv_c, proj.opacity, vals,
            img.data, img.alpha, timg,
        )
    else:
        for band0 in range(0, cam.height, tile_rows):
            band1 = min(band0 + tile_rows, cam.height) - 1
            by0 = np.maximum(proj.y0, band0)
            by1 = np.minimum(proj.y1, band1)
            _kernels.composite(
                proj.x0, proj.x1, by0, by1,
                proj.mean2d[:, 0], proj.mean2d[:, 1],
                proj.inv_a, proj.inv_b, proj.inv_c, proj.opacity, vals,
                img.data, img.alpha, timg,
            )
    return img


def render_with_jacobian(
    scene: "GaussianScene",
    cam: Camera,
    transform: Sim3Transform | None = None,
    values: np.ndarray | None = None,
) -> tuple[FeatureImage, np.ndarray]:
    """Render plus the per-pixel Jacobian d(feature)/d(tangent), shape (H, W, C, 7).

    The feature image is bitwise identical to :func:`render`. The Jacobian is
    exact forward-mode differentiation with the cull set, depth order, alpha
    ceiling, and termination threshold held fixed.
    """
    transform = transform if transform is not None else Sim3Transform.identity()
    proj = _project_arrays(scene, cam, transform)
    channels = _channel_count(scene, values)
    img = _empty_image(cam, channels)
    jac = np.zeros((cam.height, cam.width, channels, 7))
    if proj is None:
        return img, jac
    vals = _values_for(scene, proj, values)
    dmx, dmy, dia, dib, dic, _ = _splat_tangents(proj, cam)
    timg = np.ones((cam.height, cam.width))
    dlogt = np.zeros((cam.height, cam.width, 7))
    _kernels.composite_jacobian(
        proj.x0, proj.x1, proj.y0, proj.y1,
        proj.mean2d[:, 0], proj.mean2d[:, 1],
        proj.inv_a, proj.inv_b, proj.inv_c, proj.opacity, vals,
        np.ascontiguousarray(dmx), np.ascontiguousarray(dmy),
        np.ascontiguousarray(dia), np.ascontiguousarray(dib), np.ascontiguousarray(dic),
        img.data, img.alpha, timg, dlogt, jac,
    )
    return img, jac


@dataclasses.dataclass
class RenderCache:
    """Reusable projection state for a loss-plus-gradient evaluation."""

    proj: _Projected | None
    values: np.ndarray | None
    cam: Camera
    channels: int


def render_cached(
    scene: "GaussianScene",
    cam: Camera,
    transform: Sim3Transform | None = None,
    values: np.ndarray | None = None,
) -> tuple[FeatureImage, RenderCache]:
    """Render and keep the projection so a gradient pass can follow cheaply."""
    transform = transform if transform is not None else Sim3Transform.identity()
    proj = _project_arrays(scene, cam, transform)
    channels = _channel_count(scene, values)
    img = _empty_image(cam, channels)
    if proj is None:
        return img, RenderCache(None, None, cam, channels)
    vals = _values_for(scene, proj, values)
    timg = np.ones((cam.height, cam.width))
    _kernels.composite(
        proj.x0, proj.x1, proj.y0, proj.y1,
        proj.mean2d[:, 0], proj.mean2d[:, 1],
        proj.inv_a, proj.inv_b, proj.inv_c, proj.opacity, vals,
        img.data, img.alpha, timg,
    )
    return img, RenderCache(proj, vals, cam, channels)


def gradient_from_cache(cache: RenderCache, dloss_dpixel: np.ndarray) -> np.ndarray:
    """Accumulate sum over pixels/channels of dL/dpixel . d(pixel)/d(tangent)."""
    if cache.proj is None:
        return np.zeros(7)
    proj, cam = cache.proj, cache.cam
    dmx, dmy, dia, dib, dic, _ = _splat_tangents(proj, cam)
    timg = np.ones((cam.height, cam.width))
    dlogt = np.zeros((cam.height, cam.width, 7))
    grad = np.zeros(7)
    _kernels.composite_gradient(
        proj.x0, proj.x1, proj.y0, proj.y1,
        proj.mean2d[:, 0], proj.mean2d[:, 1],
        proj.inv_a, proj.inv_b, proj.inv_c, proj.opacity, cache.values,
        np.ascontiguousarray(dmx), np.ascontiguousarray(dmy),
        np.ascontiguousarray(dia), np.ascontiguousarray(dib), np.ascontiguousarray(dic),
        np.ascontiguousarray(dloss_dpixel), timg, dlogt, grad,
    )
    return grad


def compositing_weights(
    scene: "GaussianScene",
    cam: Camera,
    transform: Sim3Transform | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, tuple[int, int]]:
    """Every (flat pixel index, original splat index, weight) contribution.

    Weights are alpha times transmittance, exactly as composited; rendering is
    linear in per-splat payloads with these weights. Returns (pix, parent, w,
    (height, width)).
    """
    transform = transform if transform is not None else Sim3Transform.identity()
    proj = _project_arrays(scene, cam, transform)
    if proj is None:
        return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0), (cam.height, cam.width))
    bound = int(np.sum(np.maximum(proj.x1 - proj.x0 + 1, 0) * np.maximum(proj.y1 - proj.y0 + 1, 0)))
    pix = np.zeros(bound, np.int64)
    parent = np.zeros(bound, np.int64)
    w = np.zeros(bound)
    timg = np.ones((cam.height, cam.width))
    count = _kernels.collect_weights(
        proj.x0, proj.x1, proj.y0, proj.y1,
        proj.mean2d[:, 0], proj.mean2d[:, 1],
        proj.inv_a, proj.inv_b, proj.inv_c, proj.opacity,
        timg, pix, parent, w,
    )
    return pix[:count], proj.parent[parent[:count]], w[:count], (cam.height, cam.width)
