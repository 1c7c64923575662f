"""The frozen reference model: feature-augmented Gaussians, synthetic benchmark
generation, and scene file I/O.

Scenes store float32 arrays (matching the on-disk PLY precision, so save/load
round-trips are exact); all rendering math upcasts to float64. Scenes are
immutable after generation or load and safe to share across workers.
"""

from __future__ import annotations

import dataclasses
import math
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, FormatError, SpecInvalid
from .geometry import (
    Camera,
    Sim3Transform,
    Tangent7,
    compose,
    euler_xyz_to_rotmat,
    log_sim3,
    look_at_camera,
    transform_camera,
)
from .io import ImageEntry, MetaImage
from .validation import check_probability, check_unit_quaternions

# Rig proportions of the procedural landmark benchmark (pre-normalization units).
_CAMERA_DISTANCE = 3.5       # camera arc radius over landmark radius
_REFERENCE_ARC_DEG = 120.0
_META_ARC_DEG = 80.0
_FOCAL_FACTOR = 0.85         # focal length in units of image size


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def _logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p / (1.0 - p))


@dataclasses.dataclass
class GaussianSplat:
    """One anisotropic Gaussian with color and a semantic feature vector."""

    mean: np.ndarray
    log_scales: np.ndarray
    rotation_q: np.ndarray
    opacity_logit: float
    color: np.ndarray
    feature: np.ndarray

    @property
    def opacity(self) -> float:
        return float(_sigmoid(self.opacity_logit))

    def covariance(self) -> np.ndarray:
        from .geometry import quat_to_rotmat

        R = quat_to_rotmat(self.rotation_q.astype(float))
        return R @ np.diag(np.exp(2.0 * self.log_scales.astype(float))) @ R.T


@dataclasses.dataclass
class GaussianScene:
    """Ordered collection of splats sharing one feature dimension.

    ``scene_unit`` is the RMS distance of the reference camera centers from
    their centroid and is the unit for translation errors; generated
    benchmarks normalize it to 1.
    """

    means: np.ndarray
    log_scales: np.ndarray
    rotations: np.ndarray
    opacity_logits: np.ndarray
    colors: np.ndarray
    features: np.ndarray
    scene_unit: float = 1.0

    def __post_init__(self):
        self.means = np.ascontiguousarray(self.means, dtype=np.float32)
        self.log_scales = np.ascontiguousarray(self.log_scales, dtype=np.float32)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float32)
        self.opacity_logits = np.ascontiguousarray(self.opacity_logits, dtype=np.float32)
        self.colors = np.ascontiguousarray(self.colors, dtype=np.float32)
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        n = self.means.shape[0]
        for name in ("log_scales", "rotations", "opacity_logits", "colors", "features"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} has {getattr(self, name).shape[0]} rows, expected {n}")
        if self.features.ndim != 2 or self.features.shape[1] < 1:
            raise ValueError("features must be (n_splats, C) with C >= 1")
        if n:
            check_unit_quaternions(self.rotations)
        if not self.scene_unit > 0:
            raise ValueError(f"scene_unit must be positive, got {self.scene_unit}")
        self.scene_unit = float(self.scene_unit)
        self._local_frame_cache = None

    @property
    def n_splats(self) -> int:
        return self.means.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def opacities(self) -> np.ndarray:
        return _sigmoid(self.opacity_logits)

    def splat(self, i: int) -> GaussianSplat:
        return GaussianSplat(
            mean=self.means[i], log_scales=self.log_scales[i], rotation_q=self.rotations[i],
            opacity_logit=float(self.opacity_logits[i]), color=self.colors[i], feature=self.features[i],
        )

    @property
    def splats(self) -> list[GaussianSplat]:
        return [self.splat(i) for i in range(self.n_splats)]

    @classmethod
    def from_splats(cls, splats: list[GaussianSplat], scene_unit: float = 1.0) -> "GaussianScene":
        return cls(
            means=np.array([s.mean for s in splats], dtype=np.float32).reshape(len(splats), 3),
            log_scales=np.array([s.log_scales for s in splats], dtype=np.float32).reshape(len(splats), 3),
            rotations=np.array([s.rotation_q for s in splats], dtype=np.float32).reshape(len(splats), 4),
            opacity_logits=np.array([s.opacity_logit for s in splats], dtype=np.float32),
            colors=np.array([s.color for s in splats], dtype=np.float32).reshape(len(splats), 3),
            features=np.array([s.feature for s in splats], dtype=np.float32),
            scene_unit=scene_unit,
        )

    def with_features(self, features: np.ndarray) -> "GaussianScene":
        """Same geometry, new feature vectors."""
        return GaussianScene(
            means=self.means, log_scales=self.log_scales, rotations=self.rotations,
            opacity_logits=self.opacity_logits, colors=self.colors,
            features=np.asarray(features, dtype=np.float32), scene_unit=self.scene_unit,
        )

    def geometry_bytes(self) -> bytes:
        return b"".join(
            np.ascontiguousarray(a).tobytes()
            for a in (self.means, self.log_scales, self.rotations, self.opacity_logits, self.colors)
        )


# PLY I/O. Binary little-endian; per-vertex float32 properties
# x y z scale_0..2 rot_0..3 opacity f_dc_0..2 feature_0..{C-1}.

_BASE_PROPERTIES = (
    "x", "y", "z",
    "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
    "opacity",
    "f_dc_0", "f_dc_1", "f_dc_2",
)


def scene_to_ply_bytes(scene: GaussianScene) -> bytes:
    c = scene.feature_dim
    names = list(_BASE_PROPERTIES) + [f"feature_{i}" for i in range(c)]
    header = [
        "ply",
        "format binary_little_endian 1.0",
        f"comment feature_dim {c}",
        f"comment scene_unit {scene.scene_unit!r}",
        f"element vertex {scene.n_splats}",
    ]
    header += [f"property float {n}" for n in names]
    header.append("end_header")
    table = np.concatenate(
        [scene.means, scene.log_scales, scene.rotations,
         scene.opacity_logits[:, None], scene.colors, scene.features],
        axis=1,
    ).astype("<f4")
    return ("\n".join(header) + "\n").encode("ascii") + np.ascontiguousarray(table).tobytes()


def scene_from_ply_bytes(blob: bytes) -> GaussianScene:
    end_marker = b"end_header\n"
    end = blob.find(end_marker)
    if not blob.startswith(b"ply\n"):
        raise FormatError("not a PLY file", offset=0)
    if end < 0:
        raise FormatError("missing end_header", offset=len(blob))
    header_len = end + len(end_marker)
    lines = blob[:end].decode("ascii", errors="replace").splitlines()

    feature_dim: int | None = None
    scene_unit = 1.0
    n_vertices: int | None = None
    properties: list[str] = []
    offset = 0
    for line in lines:
        stripped = line.strip()
        fields = stripped.split()
        if stripped == "ply" or not fields:
            pass
        elif fields[0] == "format":
            if stripped != "format binary_little_endian 1.0":
                raise FormatError(f"unsupported format line {stripped!r}", offset=offset)
        elif fields[0] == "comment":
            if len(fields) >= 3 and fields[1] == "feature_dim":
                feature_dim = int(fields[2])
            elif len(fields) >= 3 and fields[1] == "scene_unit":
                scene_unit = float(fields[2])
        elif fields[0] == "element":
            if fields[1] != "vertex" or len(fields) != 3:
                raise FormatError(f"unsupported element {stripped!r}", offset=offset)
            n_vertices = int(fields[2])
        elif fields[0] == "property":
            if len(fields) != 3 or fields[1] != "float":
                raise FormatError(f"unsupported property {stripped!r}", offset=offset)
            properties.append(fields[2])
        else:
            raise FormatError(f"unexpected header line {stripped!r}", offset=offset)
        offset += len(line) + 1

    if n_vertices is None:
        raise FormatError("missing 'element vertex' line", offset=header_len)
    if feature_dim is None:
        raise FormatError("missing 'comment feature_dim' line", offset=header_len)
    expected_props = list(_BASE_PROPERTIES) + [f"feature_{i}" for i in range(feature_dim)]
    if properties != expected_props:
        n_features = sum(1 for p in properties if p.startswith("feature_"))
        if properties[: len(_BASE_PROPERTIES)] == list(_BASE_PROPERTIES) and n_features != feature_dim:
            raise DimensionMismatch(
                f"header declares feature_dim {feature_dim} but file has {n_features} feature properties"
            )
        raise FormatError(f"unexpected property layout {properties}", offset=header_len)

    stride = len(expected_props) * 4
    expected_bytes = n_vertices * stride
    actual = len(blob) - header_len
    if actual != expected_bytes:
        raise FormatError(
            f"payload has {actual} bytes, expected {expected_bytes}",
            offset=header_len + min(actual, expected_bytes),
        )
    table = np.frombuffer(blob, dtype="<f4", offset=header_len).reshape(n_vertices, len(expected_props))
    return GaussianScene(
        means=table[:, 0:3], log_scales=table[:, 3:6], rotations=table[:, 6:10],
        opacity_logits=table[:, 10], colors=table[:, 11:14], features=table[:, 14:],
        scene_unit=scene_unit,
    )


def save_scene_ply(scene: GaussianScene, path) -> None:
    from pathlib import Path

    Path(path).write_bytes(scene_to_ply_bytes(scene))


def load_scene_ply(path) -> GaussianScene:
    from pathlib import Path

    return scene_from_ply_bytes(Path(path).read_bytes())


# Benchmark sidecar: one line per meta-image,
#   id  gt rho(3) omega(3) lambda  init rho(3) omega(3) lambda  occluded-indices-csv|-
# Tangent coordinates are log_sim3 of the respective transforms.


def format_sidecar(
    ids: list[str],
    gts: list[Sim3Transform],
    inits: list[Sim3Transform],
    outlier_indices: list[tuple[int, ...]],
) -> str:
    lines = ["# id gt_rho(3) gt_omega(3) gt_logscale init_rho(3) init_omega(3) init_logscale occluded"]
    for mid, gt, init, marks in zip(ids, gts, inits, outlier_indices):
        gt_v = " ".join(repr(float(v)) for v in log_sim3(gt).as_vector())
        init_v = " ".join(repr(float(v)) for v in log_sim3(init).as_vector())
        occ = ",".join(str(i) for i in marks) if marks else "-"
        lines.append(f"{mid} {gt_v} {init_v} {occ}")
    return "\n".join(lines) + "\n"


class SidecarRecord(NamedTuple):
    id: str
    gt: Sim3Transform
    init: Sim3Transform
    outlier_indices: tuple[int, ...]


def parse_sidecar(text: str) -> list[SidecarRecord]:
    from .errors import ParseError
    from .geometry import exp_sim3

    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 16:
            raise ParseError(f"sidecar line expects 16 fields, got {len(fields)}", lineno)
        try:
            gt = exp_sim3(Tangent7.from_vector([float(v) for v in fields[1:8]]))
            init = exp_sim3(Tangent7.from_vector([float(v) for v in fields[8:15]]))
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        occ = () if fields[15] == "-" else tuple(int(v) for v in fields[15].split(","))
        out.append(SidecarRecord(fields[0], gt, init, occ))
    return out


@dataclasses.dataclass(frozen=True)
class SyntheticBenchSpec:
    """Recipe for a procedural landmark benchmark.

    Init noise fields bound the perturbation composed onto the ground truth:
    per-axis Euler rotation offsets, the norm of the stored translation offset
    (as a fraction of the scene unit), and the scale interval. Rotation noise
    above roughly 10 degrees per axis leaves the basin the aligner is designed
    for.
    """

    n_splats: int = 400
    feature_dim: int = 8
    n_reference_cameras: int = 20
    n_meta_images: int = 3
    images_per_meta: int = 8
    outlier_fraction: float = 0.0
    occluder_coverage: float = 0.4
    floater_fraction: float = 0.0
    rotation_noise_deg: float = 10.0
    translation_noise: float = 0.05
    scale_noise: tuple[float, float] = (0.9, 1.1)
    image_size: int = 32
    seed: int = 0

    def validate(self) -> None:
        for name in ("n_splats", "feature_dim", "n_reference_cameras", "n_meta_images", "images_per_meta"):
            if getattr(self, name) < 1:
                raise SpecInvalid(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.images_per_meta < 4:
            raise SpecInvalid("images_per_meta must be >= 4 (benchmark inclusion rule)")
        for name in ("outlier_fraction", "occluder_coverage", "floater_fraction"):
            try:
                check_probability(getattr(self, name), name)
            except ValueError as exc:
                raise SpecInvalid(str(exc)) from None
        if self.rotation_noise_deg < 0 or self.translation_noise < 0:
            raise SpecInvalid("noise magnitudes must be non-negative")
        lo, hi = self.scale_noise
        if not (0 < lo <= hi):
            raise SpecInvalid(f"scale_noise must satisfy 0 < lo <= hi, got {self.scale_noise}")
        if self.image_size < 8:
            raise SpecInvalid(f"image_size must be >= 8, got {self.image_size}")


class SyntheticBench(NamedTuple):
    scene: GaussianScene
    metas: list[MetaImage]
    inits: list[Sim3Transform]
    reference_cameras: list[Camera]


def _feature_prototypes(rng: np.random.Generator, k: int, dim: int) -> np.ndarray:
    """k unit prototypes, each dominated by one coordinate axis.

    The noise budget (0.15 of a unit vector) bounds pairwise cosine similarity
    below 0.5 by construction.
    """
    protos = np.zeros((k, dim))
    for i in range(k):
        noise = rng.normal(size=dim)
        noise /= np.linalg.norm(noise)
        v = np.eye(dim)[i % dim] + 0.15 * noise
        protos[i] = v / np.linalg.norm(v)
    return protos


def _arc_positions(rng, count: int, arc_deg: float, start_rad: float, distance: float):
    """Camera centers along a mostly low arc looking roughly at the origin.

    Low elevations keep ground-level floaters inside some sightlines, the
    outlier source the robust optimization exists for.
    """
    span = math.radians(arc_deg)
    az = start_rad + np.linspace(0.0, span, count) + rng.uniform(-0.03, 0.03, count)
    elev = rng.uniform(math.radians(3.0), math.radians(25.0), count)
    radius = distance * rng.uniform(0.92, 1.08, count)
    centers = np.stack(
        [radius * np.cos(elev) * np.cos(az), radius * np.cos(elev) * np.sin(az), radius * np.sin(elev)],
        axis=1,
    )
    targets = rng.uniform(-0.05, 0.05, (count, 3))
    return centers, targets


def generate_synthetic_bench(spec: SyntheticBenchSpec) -> SyntheticBench:
    """Deterministic procedural benchmark: clustered landmark, orbiting cameras,
    per-meta ground-truth transforms, and perturbed initializations.

    Target feature images are rendered at the ground-truth transforms from the
    pre-floater scene; occluders overwrite a rectangle of the chosen targets
    with an off-manifold feature vector; floaters are appended to the scene
    afterwards, below the landmark bounding box.
    """
    from . import renderer

    spec.validate()
    rng = np.random.default_rng(spec.seed)

    k = min(6, spec.feature_dim)
    protos = _feature_prototypes(rng, k, spec.feature_dim)
    cos = protos @ protos.T - np.eye(k)
    assert cos.max() < 0.5, "prototype construction must keep pairwise cosine below 0.5"

    # Landmark splats around cluster centers (rig units: landmark radius ~ 1).
    centers = rng.normal(size=(k, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers *= 0.62
    cluster = rng.integers(0, k, spec.n_splats)
    means = centers[cluster] + 0.34 * rng.normal(size=(spec.n_splats, 3))
    sigma = rng.uniform(0.10, 0.16, spec.n_splats)
    log_scales = np.log(sigma[:, None] * rng.uniform(0.75, 1.3, (spec.n_splats, 3)))
    quats = rng.normal(size=(spec.n_splats, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    opacity_logits = _logit(rng.uniform(0.60, 0.92, spec.n_splats))
    # colors are deliberately duller than the features: appearance carries far
    # less alignment signal than semantics, as in real cross-domain imagery
    cluster_colors = 0.45 + 0.12 * rng.uniform(0.0, 1.0, (k, 3))
    colors = np.clip(cluster_colors[cluster] + 0.06 * rng.normal(size=(spec.n_splats, 3)), 0.0, 1.0)
    features = protos[cluster] + 0.06 * rng.normal(size=(spec.n_splats, spec.feature_dim))

    # Reference arc fixes the scene unit.
    ref_centers, ref_targets = _arc_positions(
        rng, spec.n_reference_cameras, _REFERENCE_ARC_DEG, rng.uniform(0.0, 2 * math.pi), _CAMERA_DISTANCE
    )
    meta_geom = []
    for _ in range(spec.n_meta_images):
        c, t = _arc_positions(
            rng, spec.images_per_meta, _META_ARC_DEG, rng.uniform(0.0, 2 * math.pi), _CAMERA_DISTANCE
        )
        meta_geom.append((c, t))

    # Normalize so the RMS reference-camera radius about its centroid is 1.
    # Look-at targets are points near the landmark center and normalize as points.
    centroid = ref_centers.mean(axis=0)
    rms = float(np.sqrt(np.mean(np.sum((ref_centers - centroid) ** 2, axis=1))))
    means = (means - centroid) / rms
    log_scales = log_scales - math.log(rms)
    ref_centers = (ref_centers - centroid) / rms
    ref_targets = (ref_targets - centroid) / rms
    meta_geom = [((c - centroid) / rms, (t - centroid) / rms) for c, t in meta_geom]

    check = float(np.sqrt(np.mean(np.sum((ref_centers - ref_centers.mean(axis=0)) ** 2, axis=1))))
    assert abs(check - 1.0) < 1e-9, "scene unit normalization failed"

    size = spec.image_size
    focal = _FOCAL_FACTOR * size
    pp = (size - 1) / 2.0

    def make_camera(center, target):
        return look_at_camera(center, target, fx=focal, fy=focal, cx=pp, cy=pp, width=size, height=size)

    reference_cameras = [make_camera(c, t) for c, t in zip(ref_centers, ref_targets)]

    scene = GaussianScene(
        means=means, log_scales=log_scales, rotations=quats,
        opacity_logits=opacity_logits, colors=colors, features=features, scene_unit=1.0,
    )

    # Occluders are written as a constant vector far off the feature manifold;
    # magnitude 2 keeps corrupted images at the top of any loss ranking.
    occluder_feature = -protos.sum(axis=0)
    occluder_feature *= 2.0 / np.linalg.norm(occluder_feature)
    occluder_color = np.array([0.95, 0.08, 0.9])

    metas: list[MetaImage] = []
    inits: list[Sim3Transform] = []
    for m, (centers_m, targets_m) in enumerate(meta_geom):
        gt_angles = rng.uniform(-math.radians(30.0), math.radians(30.0), 3)
        gt_dir = rng.normal(size=3)
        gt_dir /= np.linalg.norm(gt_dir)
        gt_translation = gt_dir * rng.uniform(0.0, 0.4)
        gt_log_scale = rng.uniform(math.log(0.9), math.log(1.1))
        gt = Sim3Transform(euler_xyz_to_rotmat(*gt_angles), gt_translation, gt_log_scale)

        ref_placements = [make_camera(c, t) for c, t in zip(centers_m, targets_m)]
        cams = [transform_camera(gt, cam) for cam in ref_placements]

        n_out = int(round(spec.outlier_fraction * spec.images_per_meta))
        occluded = tuple(sorted(rng.choice(spec.images_per_meta, size=n_out, replace=False))) if n_out else ()

        entries = []
        for i, cam in enumerate(cams):
            target = renderer.render(scene, cam, gt)
            color_target = renderer.render(scene, cam, gt, values=scene.colors)
            if i in occluded:
                h = max(1, int(round(size * math.sqrt(spec.occluder_coverage))))
                w = max(1, int(round(size * math.sqrt(spec.occluder_coverage))))
                oy = int(rng.integers(0, size - h + 1))
                ox = int(rng.integers(0, size - w + 1))
                target.data[oy : oy + h, ox : ox + w, :] = occluder_feature
                color_target.data[oy : oy + h, ox : ox + w, :] = occluder_color
            entries.append(ImageEntry(camera=cam, target=target, color_target=color_target))
        metas.append(MetaImage(id=f"meta{m:03d}", images=entries, gt_transform=gt, outlier_indices=occluded))

        noise_angles = rng.uniform(-math.radians(spec.rotation_noise_deg), math.radians(spec.rotation_noise_deg), 3)
        noise_dir = rng.normal(size=3)
        noise_dir /= np.linalg.norm(noise_dir)
        noise_translation = noise_dir * rng.uniform(0.0, spec.translation_noise)
        noise_log_scale = math.log(rng.uniform(spec.scale_noise[0], spec.scale_noise[1]))
        perturb = Sim3Transform(euler_xyz_to_rotmat(*noise_angles), noise_translation, noise_log_scale)
        inits.append(compose(perturb, gt))

    # Floaters: dense low clumps in a few camera corridors, to the side of or
    # below the landmark box. A clump forms a near-opaque wall across the
    # handful of sightlines that cross it while leaving the rest clean, which
    # is the outlier pattern the robust optimization exists for.
    n_floaters = int(round(spec.floater_fraction * spec.n_splats))
    if n_floaters:
        bbox_min = means.min(axis=0)
        bbox_max = means.max(axis=0)
        extent = bbox_max - bbox_min
        # Anchor each clump in the corridor of a low camera whose target is NOT
        # already occluded, so floaters always corrupt otherwise-clean images;
        # low sightlines are the ones that graze the ground band.
        clean_centers = []
        for m_img in metas:
            for i, cam in enumerate(m_img.cameras):
                if i not in m_img.outlier_indices:
                    clean_centers.append(cam.center)
        clean_centers = np.asarray(clean_centers)
        low = clean_centers[np.argsort(clean_centers[:, 2])[: max(2, len(clean_centers) * 2 // 5)]]
        landmark_center = means.mean(axis=0)
        n_clumps = max(1, int(round(n_floaters / 30)))
        anchors = np.empty((n_clumps, 3))
        for j in range(n_clumps):
            cam_center = low[rng.integers(0, low.shape[0])]
            t = rng.uniform(0.40, 0.60)
            anchors[j] = cam_center + t * (landmark_center - cam_center)
        f_means = np.empty((n_floaters, 3))
        clump_of = rng.integers(0, n_clumps, n_floaters)
        for i in range(n_floaters):
            pos = anchors[clump_of[i]] + rng.uniform(-0.13, 0.13, 3)
            pos[2] = bbox_min[2] + rng.uniform(0.0, 0.35) * extent[2]
            # corridor points sit well outside the box in xy; push out if jitter
            # ever lands one inside
            rel = (pos[:2] - landmark_center[:2]) / np.maximum(extent[:2] / 2, 1e-9)
            m = np.abs(rel).max()
            if m < 1.2:
                pos[:2] = landmark_center[:2] + (pos[:2] - landmark_center[:2]) * (1.25 / max(m, 1e-9))
            f_means[i] = pos
        f_sigma = rng.uniform(0.10, 0.17, n_floaters)
        f_log_scales = np.log(f_sigma[:, None] * rng.uniform(0.8, 1.25, (n_floaters, 3)))
        f_quats = rng.normal(size=(n_floaters, 4))
        f_quats /= np.linalg.norm(f_quats, axis=1, keepdims=True)
        f_opacity = _logit(rng.uniform(0.12, 0.26, n_floaters))
        f_colors = np.clip(0.45 + 0.1 * rng.normal(size=(n_floaters, 3)), 0.0, 1.0)
        # distinctly wrong semantics: one consistent random direction per clump,
        # deliberately unrelated to the occluder vector so walls and occluders
        # never look like each other
        clump_dirs = rng.normal(size=(n_clumps, spec.feature_dim))
        clump_dirs /= np.linalg.norm(clump_dirs, axis=1, keepdims=True)
        f_features = 0.8 * clump_dirs[clump_of] + 0.15 * rng.normal(size=(n_floaters, spec.feature_dim))
        scene = GaussianScene(
            means=np.concatenate([means, f_means]),
            log_scales=np.concatenate([log_scales, f_log_scales]),
            rotations=np.concatenate([quats, f_quats]),
            opacity_logits=np.concatenate([opacity_logits, f_opacity]),
            colors=np.concatenate([colors, f_colors]),
            features=np.concatenate([features, f_features]),
            scene_unit=1.0,
        )

    return SyntheticBench(scene=scene, metas=metas, inits=inits, reference_cameras=reference_cameras)
