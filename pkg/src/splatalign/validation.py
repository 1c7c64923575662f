"""Input validation helpers used at the public API boundaries."""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch


def as_float_array(x, shape: tuple[int, ...], name: str) -> np.ndarray:
    """Coerce to a float64 array of the exact shape, raising ValueError otherwise."""
    arr = np.asarray(x, dtype=float)
    if arr.shape != shape:
        try:
            arr = arr.reshape(shape)
        except ValueError:
            raise ValueError(f"{name} must have shape {shape}, got {arr.shape}") from None
    return arr


def check_finite(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")


def check_rotation(R: np.ndarray, name: str = "rotation", tol: float = 1e-8) -> None:
    """Require an orthonormal matrix with determinant +1."""
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err >= tol:
        raise ValueError(f"{name} is not orthonormal (max |R^T R - I| = {err:.3g})")
    if np.linalg.det(R) <= 0:
        raise ValueError(f"{name} has non-positive determinant")


def check_unit_quaternions(q: np.ndarray, tol: float = 1e-6) -> None:
    norms = np.linalg.norm(np.asarray(q, dtype=float), axis=-1)
    err = np.abs(norms - 1.0).max() if norms.size else 0.0
    if err >= tol:
        raise ValueError(f"quaternions are not unit length (max deviation {err:.3g})")


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "images") -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{what} have different shapes: {a.shape} vs {b.shape}")


def check_probability(value: float, name: str) -> None:
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
