import dataclasses
import math

import numpy as np
import pytest

from splatalign.errors import DimensionMismatch, FormatError, SpecInvalid
from splatalign.geometry import compose, geodesic_angle_deg, rotmat_to_euler_xyz
from splatalign.renderer import render
from splatalign.scene import (
    GaussianScene,
    SyntheticBenchSpec,
    _feature_prototypes,
    format_sidecar,
    generate_synthetic_bench,
    load_scene_ply,
    parse_sidecar,
    save_scene_ply,
    scene_from_ply_bytes,
    scene_to_ply_bytes,
)

SMALL = SyntheticBenchSpec(
    n_splats=80, feature_dim=6, n_reference_cameras=10, n_meta_images=2,
    images_per_meta=5, image_size=24, seed=11,
)


def scenes_equal(a: GaussianScene, b: GaussianScene) -> bool:
    return (
        np.array_equal(a.means, b.means)
        and np.array_equal(a.log_scales, b.log_scales)
        and np.array_equal(a.rotations, b.rotations)
        and np.array_equal(a.opacity_logits, b.opacity_logits)
        and np.array_equal(a.colors, b.colors)
        and np.array_equal(a.features, b.features)
        and a.scene_unit == b.scene_unit
    )


class TestGenerator:
    def test_deterministic_for_fixed_seed(self):
        a = generate_synthetic_bench(SMALL)
        b = generate_synthetic_bench(SMALL)
        assert scenes_equal(a.scene, b.scene)
        for ma, mb in zip(a.metas, b.metas):
            assert ma.id == mb.id
            for ea, eb in zip(ma.images, mb.images):
                assert np.array_equal(ea.target.data, eb.target.data)
                assert np.array_equal(ea.camera.rotation, eb.camera.rotation)
        for ia, ib in zip(a.inits, b.inits):
            assert np.array_equal(ia.rotation, ib.rotation)
            assert np.array_equal(ia.translation, ib.translation)

    def test_meta_images_have_at_least_four_images(self):
        bench = generate_synthetic_bench(SMALL)
        assert all(len(m) >= 4 for m in bench.metas)
        with pytest.raises(SpecInvalid):
            generate_synthetic_bench(dataclasses.replace(SMALL, images_per_meta=3))

    def test_scene_unit_normalized(self):
        bench = generate_synthetic_bench(SMALL)
        assert bench.scene.scene_unit == 1.0
        centers = np.array([c.center for c in bench.reference_cameras])
        rms = math.sqrt(np.mean(np.sum((centers - centers.mean(axis=0)) ** 2, axis=1)))
        assert abs(rms - 1.0) < 1e-9

    def test_prototypes_pairwise_cosine_below_half(self):
        for seed in range(50):
            rng = np.random.default_rng(seed)
            protos = _feature_prototypes(rng, 6, 8)
            cos = protos @ protos.T - np.eye(6)
            assert cos.max() < 0.5
            assert np.abs(np.linalg.norm(protos, axis=1) - 1).max() < 1e-12

    def test_zero_noise_init_equals_ground_truth(self):
        spec = dataclasses.replace(
            SMALL, rotation_noise_deg=0.0, translation_noise=0.0, scale_noise=(1.0, 1.0)
        )
        bench = generate_synthetic_bench(spec)
        for init, meta in zip(bench.inits, bench.metas):
            gt = meta.gt_transform
            assert np.array_equal(init.rotation, gt.rotation)
            assert np.abs(init.translation - gt.translation).max() < 1e-12
            assert abs(init.log_scale - gt.log_scale) < 1e-15

    def test_init_noise_decomposes_within_bounds(self):
        spec = dataclasses.replace(
            SMALL, images_per_meta=8, n_meta_images=4,
            rotation_noise_deg=10.0, translation_noise=0.05, scale_noise=(0.9, 1.1), seed=3,
        )
        bench = generate_synthetic_bench(spec)
        for init, meta in zip(bench.inits, bench.metas):
            delta = compose(init, meta.gt_transform.inverse())
            angles = np.degrees(rotmat_to_euler_xyz(delta.rotation))
            assert np.abs(angles).max() <= 10.0 + 1e-9
            assert np.linalg.norm(delta.translation) <= 0.05 + 1e-12
            assert math.log(0.9) - 1e-12 <= delta.log_scale <= math.log(1.1) + 1e-12

    def test_targets_rendered_at_ground_truth(self):
        bench = generate_synthetic_bench(SMALL)
        meta = bench.metas[0]
        entry = meta.images[0]
        again = render(bench.scene, entry.camera, meta.gt_transform)
        assert np.array_equal(again.data, entry.target.data)

    def test_outliers_marked_and_occluded(self):
        spec = dataclasses.replace(SMALL, outlier_fraction=0.4, occluder_coverage=0.5, seed=5)
        bench = generate_synthetic_bench(spec)
        for meta in bench.metas:
            assert len(meta.outlier_indices) == round(0.4 * spec.images_per_meta)
            for idx in meta.outlier_indices:
                entry = meta.images[idx]
                clean = render(bench.scene, entry.camera, meta.gt_transform)
                diff = np.abs(entry.target.data - clean.data).mean()
                assert diff > 0.05, "occluded target should differ substantially from the clean render"

    def test_floaters_low_opacity_outside_bbox(self):
        spec = dataclasses.replace(SMALL, floater_fraction=0.25, seed=7)
        bench = generate_synthetic_bench(spec)
        n_landmark = spec.n_splats
        assert bench.scene.n_splats == n_landmark + round(0.25 * n_landmark)
        landmark = bench.scene.means[:n_landmark]
        floaters = bench.scene.means[n_landmark:]
        lo, hi = landmark.min(axis=0), landmark.max(axis=0)
        inside = np.all((floaters >= lo) & (floaters <= hi), axis=1)
        assert not inside.any()
        assert bench.scene.opacities[n_landmark:].max() < 0.3
        # floaters occlude at least one target view of a clean twin
        clean = generate_synthetic_bench(dataclasses.replace(spec, floater_fraction=0.0))
        changed = 0
        for meta in bench.metas:
            for entry in meta.images:
                with_floaters = render(bench.scene, entry.camera, meta.gt_transform)
                if np.abs(with_floaters.data - entry.target.data).max() > 1e-6:
                    changed += 1
        assert changed > 0

    def test_spec_validation(self):
        with pytest.raises(SpecInvalid):
            generate_synthetic_bench(dataclasses.replace(SMALL, outlier_fraction=1.5))
        with pytest.raises(SpecInvalid):
            generate_synthetic_bench(dataclasses.replace(SMALL, n_splats=0))
        with pytest.raises(SpecInvalid):
            generate_synthetic_bench(dataclasses.replace(SMALL, scale_noise=(1.1, 0.9)))


class TestPlyRoundTrip:
    def test_single_splat_round_trip(self):
        scene = GaussianScene(
            means=[[0.1, -0.2, 0.3]], log_scales=[[-1.0, -1.1, -0.9]],
            rotations=[[1.0, 0.0, 0.0, 0.0]], opacity_logits=[0.25],
            colors=[[0.2, 0.4, 0.6]], features=[[0.5, -0.5]],
            scene_unit=2.5,
        )
        back = scene_from_ply_bytes(scene_to_ply_bytes(scene))
        assert scenes_equal(scene, back)

    def test_generated_scene_round_trip_exact(self, tmp_path):
        bench = generate_synthetic_bench(SMALL)
        path = tmp_path / "scene.ply"
        save_scene_ply(bench.scene, path)
        assert scenes_equal(bench.scene, load_scene_ply(path))

    def test_missing_feature_property_raises_dimension_mismatch(self):
        scene = GaussianScene(
            means=[[0.0, 0.0, 1.0]], log_scales=[[-1.0, -1.0, -1.0]],
            rotations=[[1.0, 0.0, 0.0, 0.0]], opacity_logits=[0.0],
            colors=[[0.5, 0.5, 0.5]], features=[[1.0]],
        )
        blob = scene_to_ply_bytes(scene)
        text = blob.split(b"end_header\n")[0].decode()
        mutated = text.replace("property float feature_0\n", "")
        payload = blob.split(b"end_header\n")[1]
        with pytest.raises(DimensionMismatch):
            scene_from_ply_bytes(mutated.encode() + b"end_header\n" + payload)

    def test_truncated_payload_reports_offset(self):
        scene = GaussianScene(
            means=[[0.0, 0.0, 1.0]], log_scales=[[-1.0, -1.0, -1.0]],
            rotations=[[1.0, 0.0, 0.0, 0.0]], opacity_logits=[0.0],
            colors=[[0.5, 0.5, 0.5]], features=[[1.0]],
        )
        blob = scene_to_ply_bytes(scene)
        with pytest.raises(FormatError) as err:
            scene_from_ply_bytes(blob[:-4])
        assert err.value.offset is not None

    def test_rejects_non_ply(self):
        with pytest.raises(FormatError):
            scene_from_ply_bytes(b"plz\nnot a scene")


class TestSidecar:
    def test_round_trip(self):
        bench = generate_synthetic_bench(
            dataclasses.replace(SMALL, outlier_fraction=0.4, seed=9)
        )
        ids = [m.id for m in bench.metas]
        gts = [m.gt_transform for m in bench.metas]
        marks = [m.outlier_indices for m in bench.metas]
        text = format_sidecar(ids, gts, bench.inits, marks)
        records = parse_sidecar(text)
        assert [r.id for r in records] == ids
        for rec, gt, init, mk in zip(records, gts, bench.inits, marks):
            assert np.abs(rec.gt.rotation - gt.rotation).max() < 1e-12
            assert np.abs(rec.gt.translation - gt.translation).max() < 1e-12
            assert np.abs(rec.init.translation - init.translation).max() < 1e-12
            assert rec.outlier_indices == mk
