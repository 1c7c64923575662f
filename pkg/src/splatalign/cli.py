"""Operator-facing batch tool.

Subcommands: synth, render, distill, align, eval, ablate. Every flag has a
``key = value`` twin in the optional ``--config`` file; explicit flags win.
Exit codes: 0 success, 2 usage or spec error, 3 missing or corrupt input.

Payload outputs are hash-stable for fixed seeds and inputs, including across
``--jobs`` settings; wall-clock timings live only in the manifest, which is
excluded from determinism checks and written atomically at run end.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import bench as benchio
from .errors import NonFiniteGradient, SpecInvalid, SplatAlignError
from .geometry import Sim3Transform, Tangent7, exp_sim3, log_sim3
from .io import parse_colmap_cameras, parse_colmap_images, read_config, read_fmap, write_fmap
from .metrics import (
    DEFAULT_MTA_SWEEP,
    DEFAULT_OUTLIER_SWEEP,
    Thresholds,
    aggregate,
    format_records,
    format_report,
    meta_errors,
    mta_sweep,
    outlier_sweep,
)
from .objective import LossKind
from .optimizer import AlignOptions, RobustMode, align, format_trace
from .renderer import FeatureImage, render
from .scene import SyntheticBenchSpec, generate_synthetic_bench, load_scene_ply, save_scene_ply

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING = 3


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_manifest(out_dir: Path, payload: list[Path], options: dict, stages: dict[str, float]) -> None:
    lines = ["# run manifest"]
    for key in sorted(options):
        lines.append(f"option {key} = {options[key]}")
    for path in payload:
        lines.append(f"file {path.relative_to(out_dir)} sha256 {_sha256(path)}")
    for name, seconds in stages.items():
        lines.append(f"stage {name} seconds {seconds:.3f}")
    _write_atomic(out_dir / "manifest.txt", "\n".join(lines) + "\n")


def _apply_config(args: argparse.Namespace, parser_defaults: dict) -> argparse.Namespace:
    """Resolution order per flag: explicit CLI value, config value, default."""
    config = read_config(args.config) if getattr(args, "config", None) else {}
    for key, default in parser_defaults.items():
        if getattr(args, key, None) is not None:
            continue
        cfg_key = key.replace("_", "-")
        if cfg_key in config:
            raw = config[cfg_key]
            if isinstance(default, bool):
                value = raw.lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                value = int(raw)
            elif isinstance(default, float):
                value = float(raw)
            else:
                value = raw
            setattr(args, key, value)
        else:
            setattr(args, key, default)
    return args


# Per-subcommand defaults; argparse flags start as None so config twins apply.
_SYNTH_DEFAULTS = dict(
    splats=400, feature_dim=8, ref_cameras=20, metas=3, images_per_meta=8,
    outlier_fraction=0.0, occluder_coverage=0.4, floater_fraction=0.0,
    rotation_noise_deg=10.0, translation_noise=0.05, scale_lo=0.9, scale_hi=1.1,
    image_size=32, seed=0,
)
_ALIGN_DEFAULTS = dict(steps=2000, lr=1e-3, loss="semantic-l1", robust="lts", jobs=1, seed=0)
_EVAL_DEFAULTS = dict(mta_r=5.0, mta_t=0.2, outlier_r=10.0, outlier_t=0.5, sweep=False)
_ABLATE_DEFAULTS = dict(steps=600, jobs=1, seed=0)
_RENDER_DEFAULTS = dict(index=0, xi="0 0 0 0 0 0 0", preview=False)
_DISTILL_DEFAULTS = dict(steps=1500, lr=0.05, loss="l1")


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="key = value config file; flags override it")
    sp.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splatalign", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic benchmark")
    _add_common(sp)
    for key in ("splats", "feature_dim", "ref_cameras", "metas", "images_per_meta", "image_size", "seed"):
        sp.add_argument("--" + key.replace("_", "-"), type=int, default=None)
    for key in ("outlier_fraction", "occluder_coverage", "floater_fraction",
                "rotation_noise_deg", "translation_noise", "scale_lo", "scale_hi"):
        sp.add_argument("--" + key.replace("_", "-"), type=float, default=None)

    sp = sub.add_parser("align", help="align every meta-image of a benchmark")
    _add_common(sp)
    sp.add_argument("--bench", required=True)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--loss", choices=[k.value for k in LossKind], default=None)
    sp.add_argument("--robust", choices=[m.value for m in RobustMode], default=None)
    sp.add_argument("--jobs", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("eval", help="score alignment results against ground truth")
    _add_common(sp)
    sp.add_argument("--bench", required=True)
    sp.add_argument("--results", required=True)
    sp.add_argument("--mta-r", type=float, default=None)
    sp.add_argument("--mta-t", type=float, default=None)
    sp.add_argument("--outlier-r", type=float, default=None)
    sp.add_argument("--outlier-t", type=float, default=None)
    sp.add_argument("--sweep", action="store_true", default=None)

    sp = sub.add_parser("ablate", help="run the robust-mode x loss-kind ablation grid")
    _add_common(sp)
    sp.add_argument("--bench", required=True)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--jobs", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("render", help="render one view of a scene to FMAP (+ PCA preview)")
    _add_common(sp)
    sp.add_argument("--scene", required=True)
    sp.add_argument("--cameras", required=True, help="COLMAP cameras.txt")
    sp.add_argument("--images", required=True, help="COLMAP images.txt")
    sp.add_argument("--index", type=int, default=None)
    sp.add_argument("--xi", type=str, default=None, help="7 tangent coordinates of the transform")
    sp.add_argument("--preview", action="store_true", default=None)
    sp.add_argument("--color", action="store_true", default=False, help="render colors instead of features")

    sp = sub.add_parser("distill", help="bake features from a directory of posed targets")
    _add_common(sp)
    sp.add_argument("--scene", required=True)
    sp.add_argument("--targets", required=True, help="directory with cameras.txt, images.txt, target_*.fmap")
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--loss", choices=["l1", "l2"], default=None)
    return parser


def cmd_synth(args) -> int:
    t0 = time.monotonic()
    spec = SyntheticBenchSpec(
        n_splats=int(args.splats), feature_dim=int(args.feature_dim),
        n_reference_cameras=int(args.ref_cameras), n_meta_images=int(args.metas),
        images_per_meta=int(args.images_per_meta),
        outlier_fraction=args.outlier_fraction, occluder_coverage=args.occluder_coverage,
        floater_fraction=args.floater_fraction, rotation_noise_deg=args.rotation_noise_deg,
        translation_noise=args.translation_noise, scale_noise=(args.scale_lo, args.scale_hi),
        image_size=int(args.image_size), seed=int(args.seed),
    )
    result = generate_synthetic_bench(spec)
    out_dir = Path(args.out)
    paths = benchio.save_benchmark(out_dir, result.scene, result.metas, result.inits)
    _write_manifest(
        out_dir, paths, {k: getattr(args, k) for k in _SYNTH_DEFAULTS}, {"synth": time.monotonic() - t0}
    )
    print(f"wrote benchmark with {len(result.metas)} meta-images to {out_dir}")
    return EXIT_OK


def _align_one(task):
    scene, meta, init, opts = task
    try:
        result = align(scene, meta, init, opts)
        return meta.id, result, None
    except NonFiniteGradient as exc:
        return meta.id, None, str(exc)


def _result_text(meta_id: str, result, failure: str | None) -> str:
    lines = [f"id {meta_id}"]
    if result is None:
        lines.append("converged 0")
        lines.append(f"failure {failure}")
    else:
        lines.append(f"converged {int(result.converged)}")
        lines.append(f"iterations {result.iterations}")
        xi = " ".join(repr(float(v)) for v in log_sim3(result.transform).as_vector())
        lines.append(f"xi {xi}")
        lines.append("losses " + " ".join(repr(float(v)) for v in result.final_losses.losses))
    return "\n".join(lines) + "\n"


def parse_result_file(text: str) -> tuple[str, Sim3Transform | None]:
    fields = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, rest = line.partition(" ")
        fields[key] = rest
    meta_id = fields.get("id", "?")
    if fields.get("converged") != "1" or "xi" not in fields:
        return meta_id, None
    xi = Tangent7.from_vector([float(v) for v in fields["xi"].split()])
    return meta_id, exp_sim3(xi)


def _run_alignments(scene, metas, inits, opts: AlignOptions, jobs: int):
    tasks = [(scene, meta, init, opts) for meta, init in zip(metas, inits)]
    if jobs <= 1:
        return [_align_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_align_one, tasks))


def cmd_align(args) -> int:
    t0 = time.monotonic()
    scene, metas, inits = benchio.load_benchmark(args.bench)
    opts = AlignOptions(
        steps=int(args.steps), lr=args.lr,
        loss=LossKind(args.loss), robust=RobustMode(args.robust), seed=int(args.seed),
    )
    outcomes = _run_alignments(scene, metas, inits, opts, int(args.jobs))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for (meta_id, result, failure) in outcomes:
        rpath = out_dir / f"result_{meta_id}.txt"
        rpath.write_text(_result_text(meta_id, result, failure))
        paths.append(rpath)
        if result is not None:
            tpath = out_dir / f"trace_{meta_id}.txt"
            tpath.write_text(format_trace(result))
            paths.append(tpath)
    _write_manifest(
        out_dir, paths,
        {k: getattr(args, k) for k in ("steps", "lr", "loss", "robust", "seed")},
        {"align": time.monotonic() - t0},
    )
    n_div = sum(1 for _, r, _ in outcomes if r is None)
    print(f"aligned {len(outcomes)} meta-images ({n_div} divergent) into {out_dir}")
    return EXIT_OK


def _collect_errors(scene, metas, results_dir: Path):
    errors = []
    ids = []
    for meta in metas:
        ids.append(meta.id)
        rpath = results_dir / f"result_{meta.id}.txt"
        if not rpath.exists():
            raise FileNotFoundError(f"missing result file {rpath}")
        _, transform = parse_result_file(rpath.read_text())
        if transform is None:
            errors.append(None)
        else:
            errors.append(meta_errors(transform, meta.gt_transform, meta, scene.scene_unit))
    return ids, errors


def cmd_eval(args) -> int:
    t0 = time.monotonic()
    scene, metas, _ = benchio.load_benchmark(args.bench)
    ids, errors = _collect_errors(scene, metas, Path(args.results))
    th = Thresholds(mta=(args.mta_r, args.mta_t), outlier=(args.outlier_r, args.outlier_t))
    report = aggregate(errors, th)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(format_report(report, ids))
    (out_dir / "records.txt").write_text(format_records(report, ids))
    paths = [out_dir / "report.txt", out_dir / "records.txt"]
    if args.sweep:
        lines = ["# kind rotation_threshold translation_threshold percent"]
        for r, t, v in mta_sweep(errors, DEFAULT_MTA_SWEEP):
            lines.append(f"mta {r} {t} {v!r}")
        for r, t, v in outlier_sweep(errors, DEFAULT_OUTLIER_SWEEP):
            lines.append(f"outlier {r} {t} {v!r}")
        (out_dir / "sweep.txt").write_text("\n".join(lines) + "\n")
        paths.append(out_dir / "sweep.txt")
    _write_manifest(
        out_dir, paths,
        {k: getattr(args, k) for k in _EVAL_DEFAULTS}, {"eval": time.monotonic() - t0},
    )
    sys.stdout.write(format_report(report, ids))
    return EXIT_OK


ABLATION_GRID = [
    (robust, loss)
    for robust in (RobustMode.LTS, RobustMode.FIXED_LTS, RobustMode.NO_TRIM, RobustMode.IRLS)
    for loss in (LossKind.SEMANTIC_L1, LossKind.SEMANTIC_L2, LossKind.PHOTOMETRIC_L1)
]


def cmd_ablate(args) -> int:
    t0 = time.monotonic()
    scene, metas, inits = benchio.load_benchmark(args.bench)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    paths = []
    for robust, loss in ABLATION_GRID:
        opts = AlignOptions(steps=int(args.steps), loss=loss, robust=robust, seed=int(args.seed))
        outcomes = _run_alignments(scene, metas, inits, opts, int(args.jobs))
        errs = []
        for (meta_id, result, _), meta in zip(outcomes, metas):
            errs.append(
                None if result is None
                else meta_errors(result.transform, meta.gt_transform, meta, scene.scene_unit)
            )
        report = aggregate(errs)
        rot = [e.rotation_deg for e in errs if e is not None]
        tra = [e.translation for e in errs if e is not None]
        med_r = float(np.median(rot)) if rot else math.nan
        med_t = float(np.median(tra)) if tra else math.nan
        rows.append((robust.value, loss.value, med_r, med_t, report))
        rec = out_dir / f"records_{robust.value}_{loss.value}.txt"
        rec.write_text(format_records(report, [m.id for m in metas]))
        paths.append(rec)
    lines = ["# robust loss median_dR median_dT mean_dR mean_dT MTA O% failures"]
    for robust, loss, med_r, med_t, report in rows:
        mean_r = report.rotation_mean if report.rotation_mean is not None else math.nan
        mean_t = report.translation_mean if report.translation_mean is not None else math.nan
        lines.append(
            f"{robust} {loss} {med_r!r} {med_t!r} {mean_r!r} {mean_t!r} "
            f"{report.mta_rounded} {report.outlier_rounded} {report.failures}"
        )
    table = out_dir / "ablation.txt"
    table.write_text("\n".join(lines) + "\n")
    paths.append(table)
    _write_manifest(out_dir, paths, {"steps": args.steps, "seed": args.seed}, {"ablate": time.monotonic() - t0})
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def write_pca_preview(img: FeatureImage, path) -> None:
    """8-bit color preview: three leading principal components, per-image fit."""
    from PIL import Image

    flat = img.data.reshape(-1, img.channels)
    centered = flat - flat.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = centered @ vt[: min(3, vt.shape[0])].T
    if comps.shape[1] < 3:
        comps = np.pad(comps, ((0, 0), (0, 3 - comps.shape[1])))
    lo = comps.min(axis=0)
    hi = comps.max(axis=0)
    scale = np.where(hi > lo, hi - lo, 1.0)
    rgb = ((comps - lo) / scale * 255.0).astype(np.uint8).reshape(img.height, img.width, 3)
    Image.fromarray(rgb).save(path)


def cmd_render(args) -> int:
    scene = load_scene_ply(args.scene)
    intr = parse_colmap_cameras(Path(args.cameras).read_text())
    images = parse_colmap_images(Path(args.images).read_text(), intr)
    index = int(args.index)
    if not (0 <= index < len(images)):
        print(f"--index {index} out of range (have {len(images)} images)", file=sys.stderr)
        return EXIT_USAGE
    xi = [float(v) for v in str(args.xi).split()]
    if len(xi) != 7:
        print("--xi needs exactly 7 numbers", file=sys.stderr)
        return EXIT_USAGE
    transform = exp_sim3(Tangent7.from_vector(xi))
    _, cam = images[index]
    values = scene.colors if args.color else None
    img = render(scene, cam, transform, values=values)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    fmap_path = out_dir / f"render_{index:03d}.fmap"
    write_fmap(img, fmap_path)
    if args.preview:
        write_pca_preview(img, out_dir / f"render_{index:03d}.png")
    print(f"rendered view {index} to {fmap_path}")
    return EXIT_OK


def cmd_distill(args) -> int:
    from .distill import DistillOptions, distill_features

    scene = load_scene_ply(args.scene)
    tdir = Path(args.targets)
    intr = parse_colmap_cameras((tdir / "cameras.txt").read_text())
    images = parse_colmap_images((tdir / "images.txt").read_text(), intr)
    targets = []
    for i, (_, cam) in enumerate(images):
        targets.append((cam, read_fmap(tdir / f"target_{i:03d}.fmap")))
    opts = DistillOptions(steps=int(args.steps), lr=args.lr, loss=args.loss)
    out = distill_features(scene, targets, opts)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_scene_ply(out, out_dir / "scene_distilled.ply")
    print(f"distilled {scene.n_splats} splats from {len(targets)} targets")
    return EXIT_OK


_DEFAULTS_BY_COMMAND = {
    "synth": _SYNTH_DEFAULTS,
    "align": _ALIGN_DEFAULTS,
    "eval": _EVAL_DEFAULTS,
    "ablate": _ABLATE_DEFAULTS,
    "render": _RENDER_DEFAULTS,
    "distill": _DISTILL_DEFAULTS,
}

_HANDLERS = {
    "synth": cmd_synth,
    "align": cmd_align,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "render": cmd_render,
    "distill": cmd_distill,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config(args, _DEFAULTS_BY_COMMAND[args.command])
        return _HANDLERS[args.command](args)
    except SpecInvalid as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except SplatAlignError as exc:
        print(f"corrupt input: {exc}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
