"""Estimator-style facade over the alignment and distillation loops.

Both classes follow the scikit-learn parameter protocol (plain ``__init__``
attributes, ``get_params`` / ``set_params``, trailing-underscore fitted
attributes), so they clone cleanly inside parameter sweeps and pipelines.
The sample objects are domain types (scenes, bundles, posed images), not
feature matrices.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .distill import DistillOptions, distill_features
from .geometry import Camera, Sim3Transform, transform_camera
from .io import MetaImage
from .objective import LossKind, meta_losses
from .optimizer import AlignOptions, RobustMode, align
from .validation import check_finite


def _loss_kind(value) -> LossKind:
    return value if isinstance(value, LossKind) else LossKind(value)


def _robust_mode(value) -> RobustMode:
    return value if isinstance(value, RobustMode) else RobustMode(value)


class SplatAligner(BaseEstimator):
    """Fits the global similarity transform grounding a posed image bundle in a
    frozen feature splat scene.

    Parameters mirror :class:`splatalign.optimizer.AlignOptions`; ``loss`` and
    ``robust`` accept the enum values or their string names. After ``fit`` the
    estimate is in ``transform_`` and the full run record in ``result_``.
    """

    def __init__(
        self,
        steps: int = 2000,
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        loss="semantic-l1",
        robust="lts",
        early_stop_window: int = 50,
        early_stop_tol: float = 1e-6,
        seed: int = 0,
    ):
        self.steps = steps
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.loss = loss
        self.robust = robust
        self.early_stop_window = early_stop_window
        self.early_stop_tol = early_stop_tol
        self.seed = seed

    def _options(self) -> AlignOptions:
        return AlignOptions(
            steps=self.steps,
            lr=self.lr,
            betas=tuple(self.betas),
            eps=self.eps,
            loss=_loss_kind(self.loss),
            robust=_robust_mode(self.robust),
            early_stop_window=self.early_stop_window,
            early_stop_tol=self.early_stop_tol,
            seed=self.seed,
        )

    def fit(self, X: MetaImage, y=None, *, scene, init: Sim3Transform | None = None):
        """Align the bundle ``X`` to ``scene`` starting from ``init``
        (identity when omitted)."""
        if scene.n_splats == 0:
            raise ValueError("cannot align against an empty scene")
        init = init if init is not None else Sim3Transform.identity()
        self.result_ = align(scene, X, init, self._options())
        self.transform_ = self.result_.transform
        self.n_iter_ = self.result_.iterations
        return self

    def predict(self, cameras: list[Camera]) -> list[Camera]:
        """Map cameras through the fitted transform."""
        if not hasattr(self, "transform_"):
            raise AttributeError("SplatAligner is not fitted yet; call fit first")
        return [transform_camera(self.transform_, cam) for cam in cameras]

    def score(self, X: MetaImage, y=None, *, scene) -> float:
        """Negative mean per-image loss at the fitted transform (higher is better)."""
        if not hasattr(self, "transform_"):
            raise AttributeError("SplatAligner is not fitted yet; call fit first")
        table = meta_losses(scene, X, self.transform_, _loss_kind(self.loss))
        return -float(np.mean(table.losses))


class FeatureDistiller(BaseEstimator):
    """Bakes per-splat features from posed target feature maps with geometry
    frozen. After ``fit`` the distilled scene is in ``scene_`` and the raw
    feature matrix in ``features_``; ``transform`` re-applies the learned
    features to a geometry-identical scene."""

    def __init__(self, steps: int = 1500, lr: float = 0.05, decoder=None, loss: str = "l1"):
        self.steps = steps
        self.lr = lr
        self.decoder = decoder
        self.loss = loss

    def _options(self) -> DistillOptions:
        return DistillOptions(steps=self.steps, lr=self.lr, decoder=self.decoder, loss=self.loss)

    def fit(self, X, y=None, *, scene):
        """``X`` is a list of (camera, target feature image) pairs."""
        self.scene_ = distill_features(scene, X, self._options())
        self.features_ = self.scene_.features
        check_finite(self.features_, "distilled features")
        return self

    def transform(self, scene):
        if not hasattr(self, "features_"):
            raise AttributeError("FeatureDistiller is not fitted yet; call fit first")
        if scene.n_splats != self.features_.shape[0]:
            raise ValueError(
                f"scene has {scene.n_splats} splats but {self.features_.shape[0]} features were learned"
            )
        return scene.with_features(self.features_)

    def fit_transform(self, X, y=None, *, scene):
        return self.fit(X, scene=scene).scene_
