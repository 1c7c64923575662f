"""The robust inverse-optimization loop: Adam over the 7 tangent coordinates
with least-trimmed-squares image selection.

Trimming rule: an image is dropped from the gradient when its previous-iteration
loss exceeds the median over all images (ties stay active, so at least half the
bundle always remains). Iteration 1 evaluates losses over every image and makes
the first selection without stepping; the first parameter update happens at
iteration 2 using that selection. Trimmed images keep contributing their loss,
so they can re-enter later.

Updates are right-multiplicative, ``T <- T * exp(-delta)``, matching the
renderer's tangent convention.
"""

from __future__ import annotations

import dataclasses
import enum
import warnings
from collections import deque

import numpy as np

from .errors import EmptyMetaImage, NonFiniteGradient, RotationNearPi
from .geometry import Sim3Transform, Tangent7, compose, exp_sim3, log_sim3
from .io import MetaImage
from .objective import LossKind, LossTable, meta_loss, meta_losses

# Loss floor in the IRLS weighting 1 / (loss + eps).
_IRLS_EPS = 1e-6


class RobustMode(enum.Enum):
    """LTS is the method default; the others are ablation strategies."""

    LTS = "lts"
    FIXED_LTS = "fixed-lts"
    NO_TRIM = "no-trim"
    IRLS = "irls"


@dataclasses.dataclass(frozen=True)
class AlignOptions:
    """Optimization settings. Defaults are the desk-scale working point; the
    Adam parameters (lr 1e-3, eps 1e-8) are fixed by the method."""

    steps: int = 2000
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    loss: LossKind = LossKind.SEMANTIC_L1
    robust: RobustMode = RobustMode.LTS
    early_stop_window: int = 50
    early_stop_tol: float = 1e-6
    seed: int = 0  # reserved; the alignment loop is deterministic

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")


def select_active(
    prev: LossTable,
    mode: RobustMode,
    fixed_mask: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Active-image mask (and IRLS weights) from the previous iteration's losses.

    LTS keeps images with loss <= median (even-length medians average the two
    central order statistics); FIXED_LTS returns the supplied frozen mask, or
    makes the LTS selection when none is frozen yet; IRLS keeps everyone with
    weights 1/(loss + eps) normalized to mean 1.
    """
    losses = prev.losses
    if len(losses) == 0:
        raise EmptyMetaImage("loss table is empty")
    if mode is RobustMode.NO_TRIM:
        return np.ones(len(losses), dtype=bool), None
    if mode is RobustMode.IRLS:
        w = 1.0 / (losses + _IRLS_EPS)
        w = w * (len(w) / w.sum())
        return np.ones(len(losses), dtype=bool), w
    if mode is RobustMode.FIXED_LTS and fixed_mask is not None:
        return np.asarray(fixed_mask, dtype=bool).copy(), None
    return losses <= np.median(losses), None


@dataclasses.dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @staticmethod
    def zeros(dim: int = 7) -> "AdamState":
        return AdamState(np.zeros(dim), np.zeros(dim), 0)


def adam_step(
    state: AdamState,
    grad: np.ndarray,
    lr: float = 1e-3,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[AdamState, Tangent7]:
    """Textbook Adam with bias correction. Returns the positive update delta;
    the caller applies ``T <- T * exp(-delta)``."""
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("gradient contains NaN or infinity")
    b1, b2 = betas
    t = state.step + 1
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    delta = lr * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(m, v, t), Tangent7.from_vector(delta)


@dataclasses.dataclass
class TraceEntry:
    """One optimization iteration.

    ``active_loss`` sums the losses of the images whose gradients drove this
    iteration (all images for the bootstrap iteration 1). ``selected_bitmask``
    records the active set chosen from this iteration's losses, i.e. the mask
    the next update will use; bit i set means image i stays active.
    """

    iteration: int
    delta_norm: float
    active_loss: float
    selected_bitmask: int
    xi: np.ndarray


@dataclasses.dataclass
class AlignmentResult:
    transform: Sim3Transform
    trace: list[TraceEntry]
    final_losses: LossTable
    converged: bool
    iterations: int


def _bits(mask: np.ndarray) -> int:
    out = 0
    for i, on in enumerate(mask):
        if on:
            out |= 1 << i
    return out


def _safe_log(transform: Sim3Transform) -> np.ndarray:
    try:
        return log_sim3(transform).as_vector()
    except RotationNearPi:
        # Divergence toward the cut locus: record the trace entry as undefined.
        return np.full(7, np.nan)


def align(
    scene,
    meta: MetaImage,
    init: Sim3Transform,
    opts: AlignOptions = AlignOptions(),
) -> AlignmentResult:
    """Estimate the bundle's global transform by robust inverse optimization.

    Deterministic for fixed inputs. Raises NonFiniteGradient (tagged with the
    iteration) if the objective blows up; callers treat that as a divergent
    run, not a crash of the batch.
    """
    if len(meta) == 0:
        raise EmptyMetaImage(f"meta-image {meta.id!r} has no images")
    if len(meta) < 6:
        warnings.warn(
            f"meta-image {meta.id!r} has {len(meta)} images; accuracy degrades below about 6",
            stacklevel=2,
        )

    n = len(meta)
    transform = init
    state = AdamState.zeros()
    trace: list[TraceEntry] = []
    fixed_mask: np.ndarray | None = None

    # Iteration 1: evaluate every image, make the first selection, no update.
    table = meta_losses(scene, meta, transform, opts.loss, iteration=1)
    selected, _ = select_active(table, opts.robust)
    if opts.robust is RobustMode.FIXED_LTS:
        fixed_mask = selected
    trace.append(TraceEntry(1, 0.0, float(table.losses.sum()), _bits(selected), _safe_log(transform)))

    recent = deque(maxlen=opts.early_stop_window)
    converged = True
    prev_table = table
    for it in range(2, opts.steps + 1):
        mask, weights = select_active(prev_table, opts.robust, fixed_mask)
        try:
            table, grad = meta_loss(scene, meta, transform, opts.loss, mask, weights, iteration=it)
            state, delta = adam_step(state, grad, opts.lr, opts.betas, opts.eps)
        except NonFiniteGradient as exc:
            raise NonFiniteGradient(str(exc), iteration=it) from None
        transform = compose(transform, exp_sim3(-delta))
        selected, _ = select_active(table, opts.robust, fixed_mask)
        trace.append(
            TraceEntry(it, delta.norm(), float(table.losses[mask].sum()), _bits(selected), _safe_log(transform))
        )
        prev_table = table
        recent.append(delta.norm())
        if len(recent) == opts.early_stop_window and max(recent) < opts.early_stop_tol:
            break

    return AlignmentResult(
        transform=transform,
        trace=trace,
        final_losses=prev_table,
        converged=converged,
        iterations=len(trace),
    )


def format_trace(result: AlignmentResult) -> str:
    """Line-oriented trace: iteration, total_active_loss, active bitmask (hex),
    then the 7 tangent coordinates of the current transform."""
    lines = ["# iteration total_active_loss active_bitmask xi[7]"]
    for e in result.trace:
        xi = " ".join(repr(float(v)) for v in e.xi)
        lines.append(f"{e.iteration} {e.active_loss!r} {e.selected_bitmask:#x} {xi}")
    return "\n".join(lines) + "\n"
