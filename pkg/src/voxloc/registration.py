"""Rigid registration: closed-form estimation, RANSAC over feature matches,
and point-to-plane ICP against a voxel grid."""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .config import PipelineConfig
from .errors import DegenerateGeometryError, InsufficientOverlapError
from .spatial import SpatialIndex
from .transform import RigidTransform, rotation_exp
from .voxel import VoxelGrid

EDGE_PRUNE_RATIO = 0.10   # pairwise source edge must match target edge to 10%
MIN_ICP_CORRESPONDENCES = 6
SPECTRAL_CUTOFF = 1e-12   # relative eigenvalue cutoff for the 6x6 solve

# planar-cell views (means, normals, index) per grid, keyed by grid version so
# repeated refinements against one map do not rebuild the spatial index
_PLANAR_CACHE: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def _planar_cells(grid: VoxelGrid):
    cached = _PLANAR_CACHE.get(grid)
    if cached is not None and cached[0] == grid.version:
        return cached[1], cached[2], cached[3]
    mask = grid.has_normal
    means = grid.means[mask]
    normals = grid.normals[mask]
    index = SpatialIndex(means) if len(means) else None
    _PLANAR_CACHE[grid] = (grid.version, means, normals, index)
    return means, normals, index


@dataclass
class RegistrationResult:
    transform: RigidTransform
    fitness: float
    inlier_rmse: float
    iterations: int
    converged: bool


def estimate_rigid(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Least-squares rigid motion mapping source points onto target points.

    Closed form via SVD of the cross-covariance with determinant-sign
    correction, so the result is always a proper rotation.
    """
    a = np.asarray(source, dtype=float)
    b = np.asarray(target, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise ValueError("source and target must be matching (N, 3) arrays")
    if len(a) < 3:
        raise ValueError("need at least 3 point pairs")
    centroid_a = a.mean(axis=0)
    centroid_b = b.mean(axis=0)
    a0 = a - centroid_a
    b0 = b - centroid_b

    spread = np.linalg.svd(a0, compute_uv=False)
    if not spread[0] > 0.0 or spread[1] < 1e-12 * spread[0]:
        raise DegenerateGeometryError("source points are coincident or collinear")

    h = a0.T @ b0
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0.0:
        d = 1.0
    rotation = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    translation = centroid_b - rotation @ centroid_a
    return RigidTransform(rotation, translation)


def match_fpfh(source_desc: np.ndarray, target_desc: np.ndarray):
    """Nearest target descriptor per source descriptor, ties to the lower
    target index. Returns (target_indices, distances)."""
    s = np.asarray(source_desc, dtype=float)
    t = np.asarray(target_desc, dtype=float)
    if s.ndim != 2 or t.ndim != 2 or s.shape[1] != t.shape[1]:
        raise ValueError("descriptor sets must share their second dimension")
    if len(s) == 0 or len(t) == 0:
        raise ValueError("descriptor sets must be non-empty")
    # squared-distance expansion; argmin takes the first (lowest-index) minimum
    sq = (s * s).sum(axis=1)[:, None] + (t * t).sum(axis=1)[None, :] - 2.0 * (s @ t.T)
    matches = np.argmin(sq, axis=1)
    distances = np.linalg.norm(s - t[matches], axis=1)
    return matches, distances


def evaluate_alignment(
    source: PointCloud,
    target: PointCloud | SpatialIndex,
    transform: RigidTransform,
    threshold: float,
) -> tuple[float, float]:
    """Fraction of transformed source points with a target neighbor within
    threshold, and the RMSE of those inlier distances."""
    if not threshold > 0:
        raise ValueError("threshold must be strictly positive")
    if len(source) == 0:
        return 0.0, 0.0
    index = target if isinstance(target, SpatialIndex) else SpatialIndex(target.points)
    moved = transform.apply(source.points)
    _, dist = index.nearest(moved)
    inlier = dist <= threshold
    fitness = float(inlier.mean())
    if not inlier.any():
        return fitness, 0.0
    rmse = float(np.sqrt(np.mean(dist[inlier] ** 2)))
    return fitness, rmse


def ransac_coarse(
    source: PointCloud,
    target: PointCloud,
    source_desc: np.ndarray,
    target_desc: np.ndarray,
    config: PipelineConfig,
    seed: int,
    matches: np.ndarray | None = None,
) -> RegistrationResult:
    """Feature-based coarse alignment.

    Each iteration samples 3 distinct source points, takes their descriptor
    matches, prunes samples whose pairwise edges disagree with the matched
    target edges by more than 10%, estimates the rigid motion, and scores it
    against the full source cloud. Candidates rank by (fitness, lower rmse).

    ``matches`` may carry a precomputed match_fpfh result for callers that
    retry with unchanged descriptor sets; by default it is computed here.
    """
    if len(source) < 3 or len(target) < 3:
        raise ValueError("coarse registration needs at least 3 points per side")
    if len(source_desc) != len(source) or len(target_desc) != len(target):
        raise ValueError("descriptors must align with their point clouds")

    if matches is None:
        matches, _ = match_fpfh(source_desc, target_desc)
    elif len(matches) != len(source):
        raise ValueError("matches must align with the source cloud")
    target_index = SpatialIndex(target.points)
    src = source.points
    tgt = target.points
    threshold = config.ransac_distance_threshold
    rng = np.random.default_rng(seed)

    best: RegistrationResult | None = None
    iteration = 0
    converged = False
    while iteration < config.ransac_max_iterations:
        iteration += 1
        sample = rng.choice(len(src), size=3, replace=False)
        s3 = src[sample]
        t3 = tgt[matches[sample]]

        ok = True
        for i in range(3):
            j = (i + 1) % 3
            ds = np.linalg.norm(s3[i] - s3[j])
            dt = np.linalg.norm(t3[i] - t3[j])
            if abs(ds - dt) > EDGE_PRUNE_RATIO * dt:
                ok = False
                break
        if ok:
            try:
                candidate = estimate_rigid(s3, t3)
            except DegenerateGeometryError:
                ok = False
        if ok:
            fitness, rmse = evaluate_alignment(source, target_index, candidate, threshold)
            if (
                best is None
                or fitness > best.fitness
                or (fitness == best.fitness and rmse < best.inlier_rmse)
            ):
                best = RegistrationResult(candidate, fitness, rmse, iteration, False)

        if best is not None and best.fitness > 0.0:
            confidence = 1.0 - (1.0 - best.fitness**3) ** iteration
            if confidence >= config.ransac_confidence:
                converged = True
                break

    if best is None:
        return RegistrationResult(RigidTransform.identity(), 0.0, 0.0, iteration, False)
    return RegistrationResult(best.transform, best.fitness, best.inlier_rmse, iteration, converged)


def _solve_normal_equations(n: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve N x = g over the observable subspace.

    Eigen-directions below the relative spectral cutoff receive no update, so
    under-constrained geometry (a single plane) still yields the exact update
    in the constrained directions.
    """
    w, v = np.linalg.eigh(n)
    wmax = float(w[-1])
    if not np.isfinite(wmax) or wmax <= 1e-12:
        raise DegenerateGeometryError("normal equations have no observable direction")
    keep = w > wmax * SPECTRAL_CUTOFF
    vk = v[:, keep]
    return vk @ ((vk.T @ g) / w[keep])


def icp_point_to_plane(
    source: PointCloud,
    target_grid: VoxelGrid,
    init: RigidTransform,
    config: PipelineConfig,
) -> RegistrationResult:
    """Refine an alignment of a cloud against a voxel grid's planar cells.

    Correspondences run from transformed source points to the nearest cell
    mean (cells with normals only) within the configured distance; each
    iteration minimizes the sum of squared point-to-plane residuals through
    the small-angle linearization and composes the increment on the left.
    """
    if len(source) == 0:
        raise ValueError("source cloud is empty")
    means, normals, index = _planar_cells(target_grid)
    if index is None:
        raise ValueError("target grid has no cells with normals")

    max_dist = config.icp_max_correspondence_distance
    transform = init
    converged = False
    iterations = 0
    for _ in range(config.icp_max_iterations):
        iterations += 1
        moved = transform.apply(source.points)
        idx, _ = index.nearest(moved, max_distance=max_dist)
        found = idx >= 0
        if int(found.sum()) < MIN_ICP_CORRESPONDENCES:
            raise InsufficientOverlapError(
                f"only {int(found.sum())} correspondences within {max_dist} m"
            )
        p = moved[found]
        q = means[idx[found]]
        nrm = normals[idx[found]]
        residual = ((p - q) * nrm).sum(axis=1)
        jac = np.hstack([np.cross(p, nrm), nrm])
        system = jac.T @ jac
        gradient = jac.T @ (-residual)
        x = _solve_normal_equations(system, gradient)
        step = RigidTransform(rotation_exp(x[:3]), x[3:])
        transform = step @ transform
        if float(np.linalg.norm(x)) < config.icp_convergence_eps:
            converged = True
            break

    moved = transform.apply(source.points)
    idx, _ = index.nearest(moved, max_distance=max_dist)
    found = idx >= 0
    fitness = float(found.mean())
    if found.any():
        residual = ((moved[found] - means[idx[found]]) * normals[idx[found]]).sum(axis=1)
        rmse = float(np.sqrt(np.mean(residual**2)))
    else:
        rmse = 0.0
    return RegistrationResult(transform, fitness, rmse, iterations, converged)
