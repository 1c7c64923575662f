"""Registration quality metrics: per-bundle rotation/translation errors,
accuracy and outlier classification, aggregates, and pairwise geodesic
rotation error for cross-set comparisons. All pure functions."""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import LengthMismatch
from .geometry import Sim3Transform, geodesic_angle_deg, transform_camera
from .io import MetaImage


@dataclasses.dataclass(frozen=True)
class MetaImageErrors:
    """RMS per-camera errors of one bundle: rotation in degrees, translation
    in scene units."""

    rotation_deg: float
    translation: float


@dataclasses.dataclass(frozen=True)
class Thresholds:
    """(rotation degrees, translation) cutoffs; accurate needs both below its
    pair, outlier needs either above its pair."""

    mta: tuple[float, float] = (5.0, 0.2)
    outlier: tuple[float, float] = (10.0, 0.5)


def meta_errors(
    pred: Sim3Transform,
    gt: Sim3Transform,
    meta: MetaImage,
    scene_unit: float = 1.0,
) -> MetaImageErrors:
    """Map every camera through both transforms and compare placements.

    Rotation error is the RMS geodesic angle, translation error the RMS
    camera-center distance divided by the scene unit.
    """
    angles = []
    dists = []
    for cam in meta.cameras:
        cam_pred = transform_camera(pred, cam)
        cam_gt = transform_camera(gt, cam)
        angles.append(geodesic_angle_deg(cam_pred.rotation, cam_gt.rotation))
        dists.append(float(np.linalg.norm(cam_pred.center - cam_gt.center)))
    return MetaImageErrors(
        rotation_deg=float(np.sqrt(np.mean(np.square(angles)))),
        translation=float(np.sqrt(np.mean(np.square(dists)))) / scene_unit,
    )


def classify(e: MetaImageErrors, th: Thresholds = Thresholds()) -> tuple[bool, bool]:
    """(accurate, outlier) under strict inequalities."""
    accurate = e.rotation_deg < th.mta[0] and e.translation < th.mta[1]
    outlier = e.rotation_deg > th.outlier[0] or e.translation > th.outlier[1]
    return accurate, outlier


@dataclasses.dataclass
class MetricsReport:
    """Aggregates over a benchmark run. Failed bundles (no transform produced)
    are excluded from the means and percentages; raw percentages are kept
    alongside the integer-rounded values used for table reporting."""

    per_meta: list[MetaImageErrors | None]
    thresholds: Thresholds
    rotation_mean: float | None
    translation_mean: float | None
    mta_percent: float | None
    outlier_percent: float | None
    mta_rounded: int | None
    outlier_rounded: int | None
    n_success: int
    failures: int


def aggregate(errors: list[MetaImageErrors | None], th: Thresholds = Thresholds()) -> MetricsReport:
    present = [e for e in errors if e is not None]
    failures = len(errors) - len(present)
    if not present:
        return MetricsReport(
            per_meta=list(errors), thresholds=th,
            rotation_mean=None, translation_mean=None,
            mta_percent=None, outlier_percent=None,
            mta_rounded=None, outlier_rounded=None,
            n_success=0, failures=failures,
        )
    flags = [classify(e, th) for e in present]
    mta = 100.0 * sum(a for a, _ in flags) / len(present)
    out = 100.0 * sum(o for _, o in flags) / len(present)
    return MetricsReport(
        per_meta=list(errors), thresholds=th,
        rotation_mean=float(np.mean([e.rotation_deg for e in present])),
        translation_mean=float(np.mean([e.translation for e in present])),
        mta_percent=mta, outlier_percent=out,
        mta_rounded=int(round(mta)), outlier_rounded=int(round(out)),
        n_success=len(present), failures=failures,
    )


def pairwise_geodesic(
    pred_a: list[np.ndarray],
    pred_b: list[np.ndarray],
    gt_a: list[np.ndarray],
    gt_b: list[np.ndarray],
) -> float:
    """Mean geodesic error of relative rotations over all cross pairs (i, j).

    Gauge invariant: a global rotation applied to either the predictions or
    the ground truths of both groups leaves the value unchanged.
    """
    if len(pred_a) != len(gt_a) or len(pred_b) != len(gt_b):
        raise LengthMismatch(
            f"group sizes disagree: pred A {len(pred_a)} vs gt A {len(gt_a)}, "
            f"pred B {len(pred_b)} vs gt B {len(gt_b)}"
        )
    total = 0.0
    count = 0
    for rp_i, rg_i in zip(pred_a, gt_a):
        for rp_j, rg_j in zip(pred_b, gt_b):
            total += geodesic_angle_deg(rp_i @ rp_j.T, rg_i @ rg_j.T)
            count += 1
    return total / count if count else 0.0


def mta_sweep(errors: list[MetaImageErrors | None], pairs: list[tuple[float, float]]) -> list[tuple[float, float, float]]:
    """MTA percentage at each (rotation, translation) threshold pair."""
    out = []
    for r, t in pairs:
        rep = aggregate(errors, Thresholds(mta=(r, t), outlier=(10.0, 0.5)))
        out.append((r, t, rep.mta_percent if rep.mta_percent is not None else float("nan")))
    return out


def outlier_sweep(errors: list[MetaImageErrors | None], pairs: list[tuple[float, float]]) -> list[tuple[float, float, float]]:
    """Outlier percentage at each (rotation, translation) threshold pair."""
    out = []
    for r, t in pairs:
        rep = aggregate(errors, Thresholds(mta=(5.0, 0.2), outlier=(r, t)))
        out.append((r, t, rep.outlier_percent if rep.outlier_percent is not None else float("nan")))
    return out


# Threshold grids mirrored from the accuracy/outlier sweep tables.
DEFAULT_MTA_SWEEP = [(3.0, 0.1), (7.0, 0.1), (10.0, 0.1), (5.0, 0.09), (5.0, 0.15), (5.0, 0.2)]
DEFAULT_OUTLIER_SWEEP = [(10.0, 0.3), (10.0, 0.4), (10.0, 0.6), (15.0, 0.5), (17.0, 0.5), (20.0, 0.5)]


def format_report(report: MetricsReport, ids: list[str]) -> str:
    """Human-readable table plus aggregate lines."""
    lines = [f"{'meta':>12s} {'dR_deg':>10s} {'dT':>10s} {'accurate':>9s} {'outlier':>8s}"]
    for mid, e in zip(ids, report.per_meta):
        if e is None:
            lines.append(f"{mid:>12s} {'-':>10s} {'-':>10s} {'-':>9s} {'-':>8s}")
        else:
            acc, out = classify(e, report.thresholds)
            lines.append(
                f"{mid:>12s} {e.rotation_deg:10.4f} {e.translation:10.5f} {str(acc):>9s} {str(out):>8s}"
            )
    if report.n_success:
        lines.append(
            f"mean dR {report.rotation_mean:.4f} deg | mean dT {report.translation_mean:.5f} | "
            f"MTA {report.mta_rounded}% | O% {report.outlier_rounded}% | "
            f"failures {report.failures}/{len(report.per_meta)}"
        )
    else:
        lines.append(f"no successful meta-images (failures {report.failures}/{len(report.per_meta)})")
    return "\n".join(lines) + "\n"


def format_records(report: MetricsReport, ids: list[str]) -> str:
    """Machine-readable: one record per meta-image: id dR dT accurate outlier."""
    lines = ["# id rotation_deg translation accurate outlier"]
    for mid, e in zip(ids, report.per_meta):
        if e is None:
            lines.append(f"{mid} nan nan - -")
        else:
            acc, out = classify(e, report.thresholds)
            lines.append(f"{mid} {e.rotation_deg!r} {e.translation!r} {int(acc)} {int(out)}")
    return "\n".join(lines) + "\n"
