"""Parking space extraction and occupancy updates.

Car-labelled points are clustered by Euclidean connectivity, each cluster gets
a yaw-oriented bounding box, and later scans flip each space between Occupied
and Vacant by counting the car points that fall inside its box.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .config import PipelineConfig
from .errors import DegenerateGeometryError

CONTAINMENT_SLACK = 1e-9  # absolute slack on box boundaries, in meters


class OccupancyState(Enum):
    OCCUPIED = "occupied"
    VACANT = "vacant"


@dataclass(frozen=True)
class Cluster:
    indices: np.ndarray  # sorted ascending


@dataclass(frozen=True)
class OrientedBox:
    centroid: np.ndarray  # (3,)
    dims: np.ndarray      # (length, width, height), length >= width > 0
    yaw: float            # [0, pi)


@dataclass(frozen=True)
class ParkingSpace:
    space_id: int
    box: OrientedBox
    state: OccupancyState


def extract_class(cloud: PointCloud, class_id: int) -> PointCloud:
    """Sub-cloud of points labelled class_id."""
    if cloud.labels is None:
        raise ValueError("cloud has no labels")
    return cloud.select(cloud.labels == class_id)


def euclidean_cluster(cloud: PointCloud, distance: float, min_points: int) -> list[Cluster]:
    """Connected components of the <=distance neighbor graph.

    Components smaller than min_points are discarded. Clusters are ordered by
    their smallest contained index; indices within a cluster are sorted.
    """
    if not distance > 0:
        raise ValueError("distance must be strictly positive")
    if min_points < 1:
        raise ValueError("min_points must be at least 1")
    pts = cloud.points
    n = len(pts)
    if n == 0:
        return []
    tree = cKDTree(pts)
    visited = np.zeros(n, bool)
    clusters = []
    for seed in range(n):
        if visited[seed]:
            continue
        visited[seed] = True
        component = [seed]
        frontier = [seed]
        while frontier:
            neighbor_lists = tree.query_ball_point(pts[frontier], distance)
            frontier = []
            for neighbors in neighbor_lists:
                for j in neighbors:
                    if not visited[j]:
                        visited[j] = True
                        component.append(j)
                        frontier.append(j)
        if len(component) >= min_points:
            clusters.append(Cluster(np.sort(np.array(component, dtype=np.int64))))
    return clusters


def _rot2(yaw: float) -> tuple[float, float]:
    return float(np.cos(yaw)), float(np.sin(yaw))


def fit_oriented_box(points: np.ndarray) -> OrientedBox:
    """Yaw-oriented bounding box of a cluster.

    Yaw comes from the principal eigenvector of the 2-D xy covariance, folded
    into [0, pi); when the xy covariance is isotropic the box is axis-aligned.
    Dims are the extents in the yaw frame plus raw z, reordered so that
    length >= width.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 3:
        raise DegenerateGeometryError("box fitting needs at least 3 points")
    xy = pts[:, :2]
    centered = xy - xy.mean(axis=0)
    cov = centered.T @ centered / (len(pts) - 1)
    w, v = np.linalg.eigh(cov)
    if w[1] < 1e-18:
        raise DegenerateGeometryError("cluster has zero planar variance")
    if w[1] - w[0] <= 1e-12 * w[1]:
        yaw = 0.0  # isotropic spread: orientation is arbitrary, keep axes
    else:
        principal = v[:, 1]
        yaw = float(np.arctan2(principal[1], principal[0])) % np.pi

    c, s = _rot2(yaw)
    local = xy @ np.array([[c, -s], [s, c]])
    lo = np.array([local[:, 0].min(), local[:, 1].min(), pts[:, 2].min()])
    hi = np.array([local[:, 0].max(), local[:, 1].max(), pts[:, 2].max()])
    dims = hi - lo
    center_local = 0.5 * (lo + hi)
    if dims[1] > dims[0]:
        dims = dims[[1, 0, 2]]
        yaw = (yaw + np.pi / 2.0) % np.pi
    centroid_xy = center_local[:2] @ np.array([[c, s], [-s, c]])
    centroid = np.array([centroid_xy[0], centroid_xy[1], center_local[2]])
    dims = np.maximum(dims, 1e-9)
    return OrientedBox(centroid=centroid, dims=dims, yaw=float(yaw))


def points_in_box(box: OrientedBox, points: np.ndarray) -> int:
    """Count points inside the box (boundary inclusive, 1e-9 slack)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("expected an (N, 3) array")
    if len(pts) == 0:
        return 0
    c, s = _rot2(box.yaw)
    rel = pts[:, :2] - box.centroid[:2]
    local = rel @ np.array([[c, -s], [s, c]])
    dz = pts[:, 2] - box.centroid[2]
    half = box.dims / 2.0 + CONTAINMENT_SLACK
    inside = (
        (np.abs(local[:, 0]) <= half[0])
        & (np.abs(local[:, 1]) <= half[1])
        & (np.abs(dz) <= half[2])
    )
    return int(inside.sum())


def update_occupancy(
    spaces: list[ParkingSpace], car_points: np.ndarray, min_points: int
) -> list[ParkingSpace]:
    """New space list with states refreshed from the given car points.

    A space is Occupied iff at least min_points car points fall inside its
    box. Pure: ids and boxes are preserved, inputs are never mutated.
    """
    if min_points < 1:
        raise ValueError("min_points must be at least 1")
    updated = []
    for space in spaces:
        count = points_in_box(space.box, car_points)
        state = OccupancyState.OCCUPIED if count >= min_points else OccupancyState.VACANT
        updated.append(ParkingSpace(space.space_id, space.box, state))
    return updated


def spaces_from_reference(cloud: PointCloud, config: PipelineConfig) -> list[ParkingSpace]:
    """Derive parking spaces from a labelled reference cloud.

    Car points are clustered; each cluster becomes an Occupied space with a
    fitted box. Ids follow cluster order."""
    cars = extract_class(cloud, config.car_label)
    clusters = euclidean_cluster(cars, config.cluster_distance, config.cluster_min_points)
    spaces = []
    for i, cluster in enumerate(clusters):
        box = fit_oriented_box(cars.points[cluster.indices])
        spaces.append(ParkingSpace(i, box, OccupancyState.OCCUPIED))
    return spaces


def save_spaces(path: str | Path, spaces: list[ParkingSpace]) -> None:
    payload = [
        {
            "id": space.space_id,
            "centroid": [float(v) for v in space.box.centroid],
            "dims": [float(v) for v in space.box.dims],
            "yaw": float(space.box.yaw),
            "state": space.state.value,
        }
        for space in spaces
    ]
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_spaces(path: str | Path) -> list[ParkingSpace]:
    payload = json.loads(Path(path).read_text())
    spaces = []
    for entry in payload:
        box = OrientedBox(
            centroid=np.array(entry["centroid"], dtype=float),
            dims=np.array(entry["dims"], dtype=float),
            yaw=float(entry["yaw"]),
        )
        spaces.append(ParkingSpace(int(entry["id"]), box, OccupancyState(entry["state"])))
    return spaces
