import math

import numpy as np
import pytest

from splatalign.errors import LengthMismatch
from splatalign.geometry import Sim3Transform, compose, exp_sim3, Tangent7
from splatalign.metrics import (
    MetaImageErrors,
    Thresholds,
    aggregate,
    classify,
    format_records,
    format_report,
    meta_errors,
    mta_sweep,
    outlier_sweep,
    pairwise_geodesic,
)
from splatalign.scene import SyntheticBenchSpec, generate_synthetic_bench


def rot_z(deg):
    a = math.radians(deg)
    return np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1]])


@pytest.fixture(scope="module")
def bench():
    return generate_synthetic_bench(
        SyntheticBenchSpec(n_splats=40, feature_dim=4, n_reference_cameras=8,
                           n_meta_images=1, images_per_meta=6, image_size=16, seed=77)
    )


class TestMetaErrors:
    def test_exact_prediction_is_zero(self, bench):
        meta = bench.metas[0]
        e = meta_errors(meta.gt_transform, meta.gt_transform, meta, 1.0)
        assert e.rotation_deg < 1e-5 and e.translation == 0.0

    def test_pure_translation_offset(self, bench):
        meta = bench.metas[0]
        gt = meta.gt_transform
        d = np.array([0.2, -0.1, 0.05])
        pred = compose(gt, Sim3Transform(np.eye(3), d, 0.0))
        e = meta_errors(pred, gt, meta, 1.0)
        assert abs(e.translation - np.linalg.norm(d) * gt.scale) < 1e-9
        assert e.rotation_deg < 1e-5

    def test_rotation_about_camera_centroid(self, bench):
        meta = bench.metas[0]
        gt = meta.gt_transform
        centroid = np.mean([c.center for c in meta.cameras], axis=0)
        R = rot_z(5.0)
        about_centroid = Sim3Transform(R, centroid - R @ centroid, 0.0)
        pred = compose(gt, about_centroid)
        e = meta_errors(pred, gt, meta, 1.0)
        assert abs(e.rotation_deg - 5.0) < 1e-6

    def test_translation_scales_inversely_with_scene_unit(self, bench):
        meta = bench.metas[0]
        gt = meta.gt_transform
        pred = compose(gt, Sim3Transform(np.eye(3), [0.3, 0, 0], 0.0))
        e1 = meta_errors(pred, gt, meta, 1.0)
        e2 = meta_errors(pred, gt, meta, 2.0)
        assert abs(e1.translation - 2.0 * e2.translation) < 1e-12

    def test_gauge_invariance(self, bench):
        meta = bench.metas[0]
        gt = meta.gt_transform
        pred = compose(gt, exp_sim3(Tangent7(np.array([0.1, 0, 0]), np.array([0.0, 0.02, 0.03]), 0.01)))
        base = meta_errors(pred, gt, meta, 1.0)
        gauge = Sim3Transform(rot_z(33.0), np.array([1.0, -2.0, 0.5]), 0.0)
        moved = meta_errors(compose(gauge, pred), compose(gauge, gt), meta, 1.0)
        assert abs(base.rotation_deg - moved.rotation_deg) < 1e-9
        assert abs(base.translation - moved.translation) < 1e-9


class TestClassify:
    def test_table_rows(self):
        assert classify(MetaImageErrors(4.99, 0.12)) == (True, False)
        assert classify(MetaImageErrors(2.48, 0.12)) == (True, False)
        assert classify(MetaImageErrors(10.01, 0.12)) == (False, True)

    def test_boundaries_are_strict(self):
        th = Thresholds()
        assert classify(MetaImageErrors(5.0, 0.1), th) == (False, False)
        assert classify(MetaImageErrors(10.0, 0.5), th) == (False, False)
        assert classify(MetaImageErrors(4.0, 0.51), th) == (False, True)

    def test_monotone_in_errors(self):
        rng = np.random.default_rng(3)
        th = Thresholds()
        for _ in range(200):
            r, t = rng.uniform(0, 15), rng.uniform(0, 0.8)
            _, out = classify(MetaImageErrors(r, t), th)
            _, out_worse = classify(MetaImageErrors(r * 1.5 + 0.1, t * 1.5 + 0.01), th)
            assert not (out and not out_worse)


class TestAggregate:
    def test_single_success(self):
        rep = aggregate([MetaImageErrors(2.48, 0.12)])
        assert rep.rotation_mean == 2.48 and rep.translation_mean == 0.12
        assert rep.mta_rounded == 100 and rep.outlier_rounded == 0
        assert rep.failures == 0 and rep.n_success == 1

    def test_all_failures(self):
        rep = aggregate([None, None, None])
        assert rep.rotation_mean is None and rep.mta_percent is None
        assert rep.failures == 3 and rep.n_success == 0
        assert "no successful" in format_report(rep, ["a", "b", "c"])

    def test_two_entry_hand_case(self):
        rep = aggregate([MetaImageErrors(4.0, 0.1), MetaImageErrors(6.0, 0.3)])
        assert rep.mta_rounded == 50 and rep.outlier_rounded == 0
        assert abs(rep.rotation_mean - 5.0) < 1e-12

    def test_failures_excluded_from_means(self):
        rep = aggregate([MetaImageErrors(2.0, 0.1), None])
        assert rep.rotation_mean == 2.0 and rep.failures == 1

    def test_records_format_round_trips_values(self):
        rep = aggregate([MetaImageErrors(1.25, 0.0625), None])
        text = format_records(rep, ["m0", "m1"])
        lines = [l for l in text.splitlines() if not l.startswith("#")]
        fields = lines[0].split()
        assert fields[0] == "m0" and float(fields[1]) == 1.25 and float(fields[2]) == 0.0625
        assert lines[1].split()[1] == "nan"


class TestSweeps:
    def test_mta_monotone_in_thresholds(self):
        rng = np.random.default_rng(9)
        errors = [MetaImageErrors(rng.uniform(0, 12), rng.uniform(0, 0.6)) for _ in range(40)]
        grid = [(1.0, 0.05), (3.0, 0.1), (5.0, 0.2), (7.0, 0.3), (12.0, 0.7)]
        vals = [v for _, _, v in mta_sweep(errors, grid)]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_outlier_monotone_in_thresholds(self):
        rng = np.random.default_rng(10)
        errors = [MetaImageErrors(rng.uniform(0, 25), rng.uniform(0, 1.0)) for _ in range(40)]
        grid = [(2.0, 0.1), (5.0, 0.2), (10.0, 0.5), (15.0, 0.7), (25.0, 1.2)]
        vals = [v for _, _, v in outlier_sweep(errors, grid)]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


class TestPairwiseGeodesic:
    @staticmethod
    def random_rotations(rng, n):
        out = []
        for _ in range(n):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(0, 2.5)
            from splatalign.geometry import rodrigues

            out.append(rodrigues(axis * angle))
        return out

    def test_exact_predictions_zero(self):
        rng = np.random.default_rng(1)
        a = self.random_rotations(rng, 4)
        b = self.random_rotations(rng, 5)
        assert pairwise_geodesic(a, b, a, b) < 1e-6

    def test_global_rotation_gauge_invariance(self):
        # a world-frame rotation right-multiplies world-to-camera rotations
        rng = np.random.default_rng(2)
        gt_a = self.random_rotations(rng, 4)
        gt_b = self.random_rotations(rng, 4)
        pred_a = [r @ rot_z(10.0) for r in gt_a]
        pred_b = [r @ rot_z(10.0) for r in gt_b]
        assert pairwise_geodesic(pred_a, pred_b, gt_a, gt_b) < 1e-6

    def test_single_group_rotation_shifts_all_pairs(self):
        rng = np.random.default_rng(4)
        gt_a = self.random_rotations(rng, 3)
        gt_b = self.random_rotations(rng, 6)
        pred_a = [rot_z(12.0) @ r for r in gt_a]
        err = pairwise_geodesic(pred_a, gt_b, gt_a, gt_b)
        assert abs(err - 12.0) < 1e-6

    def test_length_mismatch(self):
        rng = np.random.default_rng(5)
        a = self.random_rotations(rng, 3)
        with pytest.raises(LengthMismatch):
            pairwise_geodesic(a, a, a[:2], a)
