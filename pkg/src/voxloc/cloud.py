"""Point cloud container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transform import RigidTransform


@dataclass(eq=False)
class PointCloud:
    """Points with optional per-point colors and class labels.

    points: (N, 3) float64, finite
    colors: (N, 3) uint8 or None
    labels: (N,) int64 or None
    """

    points: np.ndarray
    colors: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must have shape (N, 3)")
        if pts.size and not np.isfinite(pts).all():
            raise ValueError("points contain non-finite coordinates")
        self.points = pts
        if self.colors is not None:
            colors = np.asarray(self.colors)
            if colors.shape != (len(pts), 3):
                raise ValueError("colors must have shape (N, 3)")
            self.colors = colors.astype(np.uint8)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (len(pts),):
                raise ValueError("labels must have shape (N,)")
            self.labels = labels.astype(np.int64)

    def __len__(self) -> int:
        return len(self.points)

    def transformed(self, transform: RigidTransform) -> PointCloud:
        return PointCloud(transform.apply(self.points), self.colors, self.labels)

    def select(self, index) -> PointCloud:
        """Sub-cloud at the given indices or boolean mask."""
        return PointCloud(
            self.points[index],
            None if self.colors is None else self.colors[index],
            None if self.labels is None else self.labels[index],
        )


def concat_clouds(clouds: list[PointCloud]) -> PointCloud:
    """Concatenate clouds; colors/labels kept only if every part has them."""
    if not clouds:
        raise ValueError("no clouds to concatenate")
    points = np.vstack([c.points for c in clouds])
    colors = None
    if all(c.colors is not None for c in clouds):
        colors = np.vstack([c.colors for c in clouds])
    labels = None
    if all(c.labels is not None for c in clouds):
        labels = np.concatenate([c.labels for c in clouds])
    return PointCloud(points, colors, labels)
