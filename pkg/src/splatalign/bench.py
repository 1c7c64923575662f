"""Benchmark directory layout: scene PLY, per-bundle COLMAP text cameras,
FMAP targets, and the ground-truth/init sidecar.

Layout::

    <dir>/scene.ply
    <dir>/transforms.txt
    <dir>/<meta_id>/cameras.txt
    <dir>/<meta_id>/images.txt
    <dir>/<meta_id>/target_<k>.fmap
    <dir>/<meta_id>/color_<k>.fmap

All payload writes are deterministic byte-for-byte for a fixed benchmark.
"""

from __future__ import annotations

from pathlib import Path

from .geometry import Sim3Transform
from .io import (
    CameraIntrinsics,
    ImageEntry,
    MetaImage,
    emit_colmap_cameras,
    emit_colmap_images,
    parse_colmap_cameras,
    parse_colmap_images,
    read_fmap,
    write_fmap,
)
from .scene import GaussianScene, format_sidecar, load_scene_ply, parse_sidecar, save_scene_ply

SIDE_CAR = "transforms.txt"
SCENE_FILE = "scene.ply"


def save_benchmark(
    directory,
    scene: GaussianScene,
    metas: list[MetaImage],
    inits: list[Sim3Transform],
) -> list[Path]:
    """Write the benchmark, returning the payload files in a fixed order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths: list[Path] = []

    scene_path = directory / SCENE_FILE
    save_scene_ply(scene, scene_path)
    paths.append(scene_path)

    sidecar = directory / SIDE_CAR
    sidecar.write_text(
        format_sidecar(
            [m.id for m in metas],
            [m.gt_transform for m in metas],
            inits,
            [m.outlier_indices for m in metas],
        )
    )
    paths.append(sidecar)

    for meta in metas:
        mdir = directory / meta.id
        mdir.mkdir(exist_ok=True)
        intr = {
            1: CameraIntrinsics(
                fx=meta.images[0].camera.fx, fy=meta.images[0].camera.fy,
                cx=meta.images[0].camera.cx, cy=meta.images[0].camera.cy,
                width=meta.images[0].camera.width, height=meta.images[0].camera.height,
            )
        }
        cam_path = mdir / "cameras.txt"
        cam_path.write_text(emit_colmap_cameras(intr))
        paths.append(cam_path)
        names = [f"img_{i:03d}" for i in range(len(meta))]
        img_path = mdir / "images.txt"
        img_path.write_text(
            emit_colmap_images(list(zip(names, (e.camera for e in meta.images))), [1] * len(meta))
        )
        paths.append(img_path)
        for i, entry in enumerate(meta.images):
            tpath = mdir / f"target_{i:03d}.fmap"
            write_fmap(entry.target, tpath)
            paths.append(tpath)
            if entry.color_target is not None:
                cpath = mdir / f"color_{i:03d}.fmap"
                write_fmap(entry.color_target, cpath)
                paths.append(cpath)
    return paths


def load_benchmark(directory) -> tuple[GaussianScene, list[MetaImage], list[Sim3Transform]]:
    """Read a benchmark directory back into memory.

    Raises FileNotFoundError for missing pieces and the io/scene parse errors
    for corrupt ones.
    """
    directory = Path(directory)
    scene = load_scene_ply(directory / SCENE_FILE)
    records = parse_sidecar((directory / SIDE_CAR).read_text())
    metas: list[MetaImage] = []
    inits: list[Sim3Transform] = []
    for rec in records:
        mdir = directory / rec.id
        intr = parse_colmap_cameras((mdir / "cameras.txt").read_text())
        images = parse_colmap_images((mdir / "images.txt").read_text(), intr)
        entries = []
        for i, (_, cam) in enumerate(images):
            target = read_fmap(mdir / f"target_{i:03d}.fmap")
            color_path = mdir / f"color_{i:03d}.fmap"
            color = read_fmap(color_path) if color_path.exists() else None
            entries.append(ImageEntry(camera=cam, target=target, color_target=color))
        metas.append(
            MetaImage(id=rec.id, images=entries, gt_transform=rec.gt, outlier_indices=rec.outlier_indices)
        )
        inits.append(rec.init)
    return scene, metas, inits
