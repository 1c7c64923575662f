"""Bake per-splat feature vectors from posed target images, geometry frozen.

Composited pixels are linear in the per-splat payloads with weights fixed by
geometry and opacity, so the compositing weights are collected once per view
as a sparse matrix and every optimization step is a pair of sparse products;
no pose differentiation is involved.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.sparse

from .errors import DecoderShapeMismatch, NoTargets, ShapeMismatch
from .geometry import Camera
from .renderer import FeatureImage, compositing_weights

# Exponential decay of the feature learning rate down to lr * FINAL_LR_RATIO,
# mirroring the exponential schedule customary for splat-attribute training.
_FINAL_LR_RATIO = 1e-3
_ADAM_BETAS = (0.9, 0.999)
_ADAM_EPS = 1e-8


@dataclasses.dataclass(frozen=True)
class DistillOptions:
    """Feature-baking settings.

    ``decoder`` is a fixed (C_target, C_splat) linear map applied per pixel
    after compositing; None means identity and requires the scene and target
    channel counts to match. ``loss`` is "l1" (default, matching the training
    objective's absolute form) or "l2" (the convex path used by the
    normal-equations oracle).
    """

    steps: int = 1500
    lr: float = 0.05
    decoder: np.ndarray | None = None
    loss: str = "l1"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.loss not in ("l1", "l2"):
            raise ValueError(f"loss must be 'l1' or 'l2', got {self.loss!r}")


def _resolve_decoder(opts: DistillOptions, splat_dim: int, target_dim: int) -> np.ndarray:
    if opts.decoder is None:
        if splat_dim != target_dim:
            raise DecoderShapeMismatch(
                f"scene features have {splat_dim} channels but targets have {target_dim}; "
                "provide a decoder matrix"
            )
        return np.eye(splat_dim)
    decoder = np.asarray(opts.decoder, dtype=float)
    if decoder.shape != (target_dim, splat_dim):
        raise DecoderShapeMismatch(
            f"decoder must have shape ({target_dim}, {splat_dim}), got {decoder.shape}"
        )
    return decoder


def view_weight_matrix(scene, cam: Camera) -> scipy.sparse.csr_matrix:
    """Sparse (pixels x splats) compositing-weight matrix of one camera view."""
    pix, parent, w, (h, wd) = compositing_weights(scene, cam)
    return scipy.sparse.csr_matrix((w, (pix, parent)), shape=(h * wd, scene.n_splats))


def total_compositing_weight(scene, cameras: list[Camera]) -> np.ndarray:
    """Per-splat sum of compositing weights over the given views."""
    total = np.zeros(scene.n_splats)
    for cam in cameras:
        pix, parent, w, _ = compositing_weights(scene, cam)
        np.add.at(total, parent, w)
    return total


def distill_features(
    scene,
    targets: list[tuple[Camera, FeatureImage]],
    opts: DistillOptions = DistillOptions(),
):
    """Optimize per-splat features so rendered views match the posed targets.

    Returns a scene with identical geometry and new features. Splats that
    never composite into any target keep their zero-initialized features.
    """
    if not targets:
        raise NoTargets("feature distillation needs at least one posed target")
    target_dim = targets[0][1].channels
    decoder = _resolve_decoder(opts, scene.feature_dim, target_dim)

    systems = []
    for cam, target in targets:
        if (target.height, target.width) != (cam.height, cam.width):
            raise ShapeMismatch(
                f"target image is {target.height}x{target.width}, camera expects {cam.height}x{cam.width}"
            )
        if target.channels != target_dim:
            raise ShapeMismatch("targets disagree on channel count")
        weights = view_weight_matrix(scene, cam)
        flat = np.asarray(target.data, dtype=float).reshape(-1, target_dim)
        norm = 1.0 / flat.size
        systems.append((weights, flat, norm))

    features = np.zeros((scene.n_splats, scene.feature_dim))
    m = np.zeros_like(features)
    v = np.zeros_like(features)
    b1, b2 = _ADAM_BETAS
    decay = _FINAL_LR_RATIO ** (1.0 / opts.steps)
    lr = opts.lr
    for step in range(1, opts.steps + 1):
        grad = np.zeros_like(features)
        for weights, flat, norm in systems:
            pred = (weights @ features) @ decoder.T
            resid = pred - flat
            dl = np.sign(resid) * norm if opts.loss == "l1" else (2.0 * norm) * resid
            grad += weights.T @ (dl @ decoder)
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        m_hat = m / (1 - b1**step)
        v_hat = v / (1 - b2**step)
        features -= lr * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
        lr *= decay
    return scene.with_features(features)


def distill_loss(scene, targets: list[tuple[Camera, FeatureImage]], opts: DistillOptions) -> float:
    """The distillation objective at the scene's current features."""
    if not targets:
        raise NoTargets("no posed targets")
    target_dim = targets[0][1].channels
    decoder = _resolve_decoder(opts, scene.feature_dim, target_dim)
    features = scene.features.astype(float)
    total = 0.0
    for cam, target in targets:
        weights = view_weight_matrix(scene, cam)
        flat = np.asarray(target.data, dtype=float).reshape(-1, target_dim)
        resid = (weights @ features) @ decoder.T - flat
        total += float(np.mean(np.abs(resid)) if opts.loss == "l1" else np.mean(resid * resid))
    return total
