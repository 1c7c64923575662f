"""Ingestion and serialization: COLMAP text models, FMAP feature maps, config.

FMAP layout (bit exact): magic ``FMAP`` (4 bytes), u8 version = 1, then
little-endian u32 height, width, channels, then height * width * channels
float32 little-endian values, row major with the channel fastest. Alpha is
not stored; targets carry no alpha. The round trip ``read(write(x))`` is
bitwise for any float32-representable payload.
"""

from __future__ import annotations

import dataclasses
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    ParseError,
    TruncatedPayload,
    UnknownCameraId,
    UnsupportedCameraModel,
    VersionUnsupported,
)
from .geometry import DEFAULT_NEAR_PLANE, Camera, Sim3Transform, quat_to_rotmat, rotmat_to_quat
from .renderer import FeatureImage

FMAP_MAGIC = b"FMAP"
FMAP_VERSION = 1


@dataclasses.dataclass
class ImageEntry:
    """One image of a bundle: its camera, the target feature map, and optionally
    a color target for photometric runs."""

    camera: Camera
    target: FeatureImage
    color_target: FeatureImage | None = None


@dataclasses.dataclass
class MetaImage:
    """A rigid bundle of posed images sharing one unknown global transform.

    Cameras are posed in the bundle's own frame; the ground-truth transform
    and the indices of deliberately occluded images exist on benchmarks only.
    """

    id: str
    images: list[ImageEntry]
    frame: str = "meta"
    gt_transform: Sim3Transform | None = None
    outlier_indices: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.images:
            raise ValueError(f"meta-image {self.id!r} has no images")
        channels = {e.target.channels for e in self.images}
        if len(channels) != 1:
            raise ValueError(f"meta-image {self.id!r} mixes target channel counts {sorted(channels)}")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def channels(self) -> int:
        return self.images[0].target.channels

    @property
    def cameras(self) -> list[Camera]:
        return [e.camera for e in self.images]


@dataclasses.dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int


def _meaningful_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def parse_colmap_cameras(text: str) -> dict[int, CameraIntrinsics]:
    """Parse COLMAP cameras.txt. Supports PINHOLE and SIMPLE_PINHOLE only."""
    out: dict[int, CameraIntrinsics] = {}
    for lineno, line in _meaningful_lines(text):
        fields = line.split()
        if len(fields) < 4:
            raise ParseError(f"camera record needs at least 4 fields, got {len(fields)}", lineno)
        try:
            cam_id = int(fields[0])
            width = int(fields[2])
            height = int(fields[3])
            params = [float(p) for p in fields[4:]]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        model = fields[1]
        if model == "PINHOLE":
            if len(params) != 4:
                raise ParseError(f"PINHOLE expects 4 params, got {len(params)}", lineno)
            fx, fy, cx, cy = params
        elif model == "SIMPLE_PINHOLE":
            if len(params) != 3:
                raise ParseError(f"SIMPLE_PINHOLE expects 3 params, got {len(params)}", lineno)
            f, cx, cy = params
            fx = fy = f
        else:
            raise UnsupportedCameraModel(model, lineno)
        if cam_id in out:
            raise ParseError(f"duplicate camera id {cam_id}", lineno)
        out[cam_id] = CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)
    return out


def parse_colmap_images(
    text: str,
    intrinsics: dict[int, CameraIntrinsics],
    near_plane: float = DEFAULT_NEAR_PLANE,
) -> list[tuple[str, Camera]]:
    """Parse COLMAP images.txt into (name, camera) pairs in file order.

    Records come in line pairs; the second line (2D points) is skipped and may
    be empty. Quaternions are world-to-camera, COLMAP convention.
    """
    out: list[tuple[str, Camera]] = []
    lines = text.splitlines()
    lineno = 0
    expecting_points = False
    for raw in lines:
        lineno += 1
        line = raw.strip()
        if expecting_points:
            # 2D observations line; content ignored.
            expecting_points = False
            continue
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 10:
            raise ParseError(f"image record expects 10 fields, got {len(fields)}", lineno)
        try:
            qw, qx, qy, qz, tx, ty, tz = (float(v) for v in fields[1:8])
            cam_id = int(fields[8])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        name = fields[9]
        if cam_id not in intrinsics:
            raise UnknownCameraId(f"line {lineno}: image {name!r} references unknown camera id {cam_id}")
        intr = intrinsics[cam_id]
        cam = Camera(
            fx=intr.fx, fy=intr.fy, cx=intr.cx, cy=intr.cy,
            width=intr.width, height=intr.height,
            rotation=quat_to_rotmat([qw, qx, qy, qz]),
            translation=np.array([tx, ty, tz]),
            near_plane=near_plane,
        )
        out.append((name, cam))
        expecting_points = True
    return out


def emit_colmap_cameras(intrinsics: dict[int, CameraIntrinsics]) -> str:
    lines = ["# Camera list: CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]"]
    for cam_id in sorted(intrinsics):
        c = intrinsics[cam_id]
        lines.append(
            f"{cam_id} PINHOLE {c.width} {c.height} {c.fx!r} {c.fy!r} {c.cx!r} {c.cy!r}"
        )
    return "\n".join(lines) + "\n"


def emit_colmap_images(images: list[tuple[str, Camera]], camera_ids: list[int]) -> str:
    """Emit images.txt; the 2D-points line of each record is left empty."""
    lines = ["# Image list: IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME"]
    for idx, ((name, cam), cam_id) in enumerate(zip(images, camera_ids), start=1):
        q = rotmat_to_quat(cam.rotation)
        t = cam.translation
        qs = " ".join(repr(float(v)) for v in q)
        ts = " ".join(repr(float(v)) for v in t)
        lines.append(f"{idx} {qs} {ts} {cam_id} {name}")
        lines.append("")
    return "\n".join(lines) + "\n"


def fmap_to_bytes(img: FeatureImage) -> bytes:
    header = FMAP_MAGIC + struct.pack("<BIII", FMAP_VERSION, img.height, img.width, img.channels)
    payload = np.ascontiguousarray(img.data, dtype="<f4").tobytes()
    return header + payload


def fmap_from_bytes(blob: bytes) -> FeatureImage:
    if blob[:4] != FMAP_MAGIC:
        raise BadMagic(f"expected {FMAP_MAGIC!r}, found {blob[:4]!r}")
    if len(blob) < 17:
        raise TruncatedPayload(17, len(blob))
    version, height, width, channels = struct.unpack("<BIII", blob[4:17])
    if version != FMAP_VERSION:
        raise VersionUnsupported(f"FMAP version {version} not supported")
    expected = height * width * channels * 4
    actual = len(blob) - 17
    if actual != expected:
        raise TruncatedPayload(expected, actual)
    data = np.frombuffer(blob, dtype="<f4", offset=17).reshape(height, width, channels).astype(float)
    return FeatureImage(width, height, channels, data, np.zeros((height, width)))


def write_fmap(img: FeatureImage, path) -> None:
    Path(path).write_bytes(fmap_to_bytes(img))


def read_fmap(path) -> FeatureImage:
    return fmap_from_bytes(Path(path).read_bytes())


def read_config(path) -> dict[str, str]:
    """Line-oriented ``key = value`` configuration with ``#`` comments."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw!r}", lineno)
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ParseError("empty key", lineno)
        out[key] = value.strip()
    return out
