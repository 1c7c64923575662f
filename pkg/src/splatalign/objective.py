"""Losses between rendered and target images, and their transform gradients.

The per-image loss is a mean over all pixels and channels, so images of
different resolutions stay commensurable under median trimming. Background
pixels participate with zero features: silhouette misalignment is penalized,
there is no validity mask.
"""

from __future__ import annotations

import dataclasses
import enum

import numpy as np

from .errors import EmptyActiveSet, ShapeMismatch
from .geometry import Camera, Sim3Transform
from .io import ImageEntry, MetaImage
from .renderer import FeatureImage, gradient_from_cache, render, render_cached


class LossKind(enum.Enum):
    """Semantic L1 is the method default; the others are ablation variants.

    Photometric renders the scene's colors (3 channels) against color targets.
    """

    SEMANTIC_L1 = "semantic-l1"
    SEMANTIC_L2 = "semantic-l2"
    PHOTOMETRIC_L1 = "photometric-l1"


@dataclasses.dataclass
class LossTable:
    """Per-image scalar losses of one bundle at one iteration."""

    losses: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        self.losses = np.asarray(self.losses, dtype=float)

    def __len__(self) -> int:
        return len(self.losses)


def image_loss(rendered: FeatureImage, target: FeatureImage, kind: LossKind = LossKind.SEMANTIC_L1) -> float:
    """Mean over pixels and channels of |r - t| (L1 kinds) or (r - t)^2 (L2)."""
    if rendered.data.shape != target.data.shape:
        raise ShapeMismatch(f"rendered {rendered.data.shape} vs target {target.data.shape}")
    r = rendered.data - target.data
    if kind is LossKind.SEMANTIC_L2:
        return float(np.mean(r * r))
    return float(np.mean(np.abs(r)))


def _payload_for(scene, entry: ImageEntry, kind: LossKind) -> tuple[np.ndarray | None, FeatureImage]:
    if kind is LossKind.PHOTOMETRIC_L1:
        if entry.color_target is None:
            raise ValueError("photometric loss requires color targets on the meta-image")
        return scene.colors, entry.color_target
    return None, entry.target


def image_loss_and_grad(
    scene,
    cam: Camera,
    transform: Sim3Transform,
    target: FeatureImage,
    kind: LossKind = LossKind.SEMANTIC_L1,
    values: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Loss of render(scene, cam, transform) against the target, plus its
    7-vector gradient via the renderer's forward-mode tangents.

    For L1 the pixel derivative is sign(r) with sign(0) = 0.
    """
    img, cache = render_cached(scene, cam, transform, values)
    if img.data.shape != target.data.shape:
        raise ShapeMismatch(f"rendered {img.data.shape} vs target {target.data.shape}")
    r = img.data - target.data
    n = r.size
    if kind is LossKind.SEMANTIC_L2:
        loss = float(np.mean(r * r))
        dl_dpix = (2.0 / n) * r
    else:
        loss = float(np.mean(np.abs(r)))
        dl_dpix = np.sign(r) / n
    return loss, gradient_from_cache(cache, dl_dpix)


def meta_losses(
    scene,
    meta: MetaImage,
    transform: Sim3Transform,
    kind: LossKind = LossKind.SEMANTIC_L1,
    iteration: int = 0,
) -> LossTable:
    """Per-image losses only, no gradients (used to bootstrap trimming)."""
    losses = np.empty(len(meta))
    for i, entry in enumerate(meta.images):
        values, target = _payload_for(scene, entry, kind)
        losses[i] = image_loss(render(scene, entry.camera, transform, values), target, kind)
    return LossTable(losses, iteration)


def meta_loss(
    scene,
    meta: MetaImage,
    transform: Sim3Transform,
    kind: LossKind,
    active_mask: np.ndarray,
    weights: np.ndarray | None = None,
    iteration: int = 0,
) -> tuple[LossTable, np.ndarray]:
    """Losses of every image plus the gradient averaged over the active set.

    Inactive images still contribute their loss (the next trimming decision
    needs it) but not the gradient. The gradient is the mean of per-image
    gradients, optionally weighted, summed in ascending image-index order.
    """
    active_mask = np.asarray(active_mask, dtype=bool)
    if active_mask.shape != (len(meta),):
        raise ValueError(f"active_mask must have shape ({len(meta)},), got {active_mask.shape}")
    n_active = int(active_mask.sum())
    if n_active == 0:
        raise EmptyActiveSet("no images in the active set")
    losses = np.empty(len(meta))
    grad = np.zeros(7)
    for i, entry in enumerate(meta.images):
        values, target = _payload_for(scene, entry, kind)
        if active_mask[i]:
            loss_i, grad_i = image_loss_and_grad(scene, entry.camera, transform, target, kind, values)
            grad += grad_i if weights is None else weights[i] * grad_i
        else:
            loss_i = image_loss(render(scene, entry.camera, transform, values), target, kind)
        losses[i] = loss_i
    return LossTable(losses, iteration), grad / n_active
