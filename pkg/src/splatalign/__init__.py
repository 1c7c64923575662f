"""Robust Sim(3) alignment of posed image bundles to feature splat scenes."""

from .distill import DistillOptions, distill_features
from .errors import SplatAlignError
from .estimators import FeatureDistiller, SplatAligner
from .geometry import (
    Camera,
    Sim3Transform,
    Tangent7,
    compose,
    exp_sim3,
    geodesic_angle_deg,
    log_sim3,
    transform_camera,
)
from .io import ImageEntry, MetaImage, read_fmap, write_fmap
from .metrics import MetaImageErrors, Thresholds, aggregate, classify, meta_errors, pairwise_geodesic
from .objective import LossKind, LossTable, image_loss, image_loss_and_grad, meta_loss
from .optimizer import AlignOptions, AlignmentResult, RobustMode, adam_step, align, select_active
from .renderer import FeatureImage, Splat2D, project_splats, render, render_with_jacobian
from .scene import (
    GaussianScene,
    GaussianSplat,
    SyntheticBenchSpec,
    generate_synthetic_bench,
    load_scene_ply,
    save_scene_ply,
)

__version__ = "0.1.0"
