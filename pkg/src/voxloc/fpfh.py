"""Fast point feature histograms over oriented points.

For a point pair, the local frame is ``u = n_source``, ``v = normalize(d x u)``,
``w = u x v`` with ``d`` running from source to target. The source role goes to
the point whose normal is less aligned with the pair direction: when
``|n_i . d_hat| > |n_j . d_hat|`` the roles of i and j are swapped first. The
three angles are

    alpha = v . n_target        in [-1, 1]
    phi   = u . d_hat           in [-1, 1]
    theta = atan2(w . n_target, u . n_target)   in (-pi, pi]

Each angle is histogrammed into 11 uniform bins, giving 33 bins total; the
final descriptor re-weights neighbor histograms by inverse distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DegenerateGeometryError
from .spatial import SpatialIndex

BINS_PER_FEATURE = 11
DESCRIPTOR_SIZE = 3 * BINS_PER_FEATURE
PARALLEL_TOL = 1e-9  # |d_hat x u| below this means the frame is undefined


@dataclass
class PairAngles:
    alpha: float
    phi: float
    theta: float


@dataclass
class SpfhHistogram:
    bins: np.ndarray  # (33,) float, each 11-block sums to 1 or is all zero
    skipped: int = 0  # degenerate pairs left out of the histogram


def _pair_angles_batch(p: np.ndarray, n: np.ndarray, pts: np.ndarray, nrm: np.ndarray):
    """Pair angles of (p, n) against rows of (pts, nrm).

    ``p`` and ``n`` may be a single point (3,) or per-row arrays matching
    ``pts``. Returns (alpha, phi, theta, valid); invalid rows are coincident
    points or pairs whose direction is parallel to the source normal.
    """
    d = pts - p
    dist = np.sqrt((d * d).sum(axis=1))
    valid = dist > 0.0
    safe = np.where(valid, dist, 1.0)
    dhat = d / safe[:, None]

    align_i = np.abs((dhat * n).sum(axis=1))
    align_j = np.abs((dhat * nrm).sum(axis=1))
    swap = align_i > align_j

    u = np.where(swap[:, None], nrm, n)
    n_target = np.where(swap[:, None], np.broadcast_to(n, nrm.shape), nrm)
    direction = np.where(swap[:, None], -dhat, dhat)

    cross = np.cross(direction, u)
    cross_norm = np.sqrt((cross * cross).sum(axis=1))
    valid &= cross_norm >= PARALLEL_TOL
    v = cross / np.where(cross_norm > 0.0, cross_norm, 1.0)[:, None]
    w = np.cross(u, v)

    alpha = np.clip((v * n_target).sum(axis=1), -1.0, 1.0)
    phi = np.clip((u * direction).sum(axis=1), -1.0, 1.0)
    theta = np.arctan2((w * n_target).sum(axis=1), (u * n_target).sum(axis=1))
    theta = np.where(theta <= -np.pi, np.pi, theta)
    return alpha, phi, theta, valid


def pair_angles(p_i, n_i, p_j, n_j) -> PairAngles:
    """Darboux-frame angles for a single oriented point pair."""
    p_i = np.asarray(p_i, dtype=float).reshape(3)
    n_i = np.asarray(n_i, dtype=float).reshape(3)
    p_j = np.asarray(p_j, dtype=float).reshape(3)
    n_j = np.asarray(n_j, dtype=float).reshape(3)
    alpha, phi, theta, valid = _pair_angles_batch(p_i, n_i, p_j[None], n_j[None])
    if not valid[0]:
        if not np.linalg.norm(p_j - p_i) > 0.0:
            raise ValueError("pair angles are undefined for coincident points")
        raise DegenerateGeometryError("pair direction is parallel to the source normal")
    return PairAngles(float(alpha[0]), float(phi[0]), float(theta[0]))


def _bin_indices(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    idx = np.floor((values - lo) / (hi - lo) * BINS_PER_FEATURE).astype(np.int64)
    return np.clip(idx, 0, BINS_PER_FEATURE - 1)


def _histogram33(alpha, phi, theta, valid) -> tuple[np.ndarray, int]:
    bins = np.zeros(DESCRIPTOR_SIZE)
    kept = int(valid.sum())
    if kept:
        for block, (values, lo, hi) in enumerate(
            ((alpha, -1.0, 1.0), (phi, -1.0, 1.0), (theta, -np.pi, np.pi))
        ):
            idx = _bin_indices(values[valid], lo, hi)
            counts = np.bincount(idx, minlength=BINS_PER_FEATURE)
            bins[block * BINS_PER_FEATURE:(block + 1) * BINS_PER_FEATURE] = counts / kept
    return bins, int(len(valid) - kept)


def spfh(
    points: np.ndarray,
    normals: np.ndarray,
    point_index: int,
    radius: float,
    index: SpatialIndex | None = None,
) -> SpfhHistogram:
    """Simplified point feature histogram of one point against its radius
    neighborhood (self excluded). Degenerate pairs are skipped and counted."""
    points = np.asarray(points, dtype=float)
    normals = np.asarray(normals, dtype=float)
    if points.shape != normals.shape or points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points and normals must both be (N, 3)")
    n_query = normals[point_index]
    if not np.isfinite(n_query).all() or not np.linalg.norm(n_query) > 0.0:
        raise ValueError(f"point {point_index} has no usable normal")
    if index is None:
        index = SpatialIndex(points)
    neighbors, _ = index.radius_query(points[point_index], radius)
    neighbors = neighbors[neighbors != point_index]
    if neighbors.size == 0:
        return SpfhHistogram(np.zeros(DESCRIPTOR_SIZE), 0)
    alpha, phi, theta, valid = _pair_angles_batch(
        points[point_index], n_query, points[neighbors], normals[neighbors]
    )
    bins, skipped = _histogram33(alpha, phi, theta, valid)
    return SpfhHistogram(bins, skipped)


def fpfh_descriptor(
    points: np.ndarray,
    spfh_bins: np.ndarray,
    point_index: int,
    radius: float,
    index: SpatialIndex | None = None,
) -> np.ndarray:
    """Final descriptor: own SPFH plus the inverse-distance-weighted mean of
    the neighbors' SPFH blocks. Zero-distance duplicates are dropped."""
    points = np.asarray(points, dtype=float)
    spfh_bins = np.asarray(spfh_bins, dtype=float)
    if spfh_bins.shape != (len(points), DESCRIPTOR_SIZE):
        raise ValueError("spfh_bins must be (N, 33) aligned with points")
    if index is None:
        index = SpatialIndex(points)
    neighbors, dist = index.radius_query(points[point_index], radius)
    keep = (neighbors != point_index) & (dist > 0.0)
    neighbors, dist = neighbors[keep], dist[keep]
    own = spfh_bins[point_index].copy()
    if neighbors.size == 0:
        return own
    weighted = (spfh_bins[neighbors] / dist[:, None]).sum(axis=0)
    return own + weighted / len(neighbors)


def compute_fpfh(points: np.ndarray, normals: np.ndarray, radius: float) -> np.ndarray:
    """FPFH descriptors for a whole oriented cloud: (N, 33).

    All radius pairs are processed in one flat batch; results match the
    per-point spfh/fpfh_descriptor path up to summation order.
    """
    points = np.asarray(points, dtype=float)
    normals = np.asarray(normals, dtype=float)
    n = len(points)
    if n == 0:
        return np.empty((0, DESCRIPTOR_SIZE))
    index = SpatialIndex(points)
    pairs, pair_dist = index.pairs_within(radius)
    src = np.concatenate([pairs[:, 0], pairs[:, 1]])
    nbr = np.concatenate([pairs[:, 1], pairs[:, 0]])
    dist = np.concatenate([pair_dist, pair_dist])

    spfh_all = np.zeros((n, DESCRIPTOR_SIZE))
    if len(src):
        alpha, phi, theta, valid = _pair_angles_batch(
            points[src], normals[src], points[nbr], normals[nbr]
        )
        rows = src[valid]
        kept = np.bincount(rows, minlength=n).astype(float)
        base = rows * DESCRIPTOR_SIZE
        flat = np.concatenate(
            [
                base + _bin_indices(alpha[valid], -1.0, 1.0),
                base + BINS_PER_FEATURE + _bin_indices(phi[valid], -1.0, 1.0),
                base + 2 * BINS_PER_FEATURE + _bin_indices(theta[valid], -np.pi, np.pi),
            ]
        )
        spfh_all = np.bincount(flat, minlength=n * DESCRIPTOR_SIZE).astype(float)
        spfh_all = spfh_all.reshape(n, DESCRIPTOR_SIZE)
        nonzero = kept > 0
        spfh_all[nonzero] /= kept[nonzero, None]

    descriptors = spfh_all.copy()
    keep = dist > 0.0
    if keep.any():
        s, nb, dd = src[keep], nbr[keep], dist[keep]
        weights = sparse.csr_matrix((1.0 / dd, (s, nb)), shape=(n, n))
        acc = weights @ spfh_all
        counts = np.bincount(s, minlength=n).astype(float)
        nonzero = counts > 0
        descriptors[nonzero] += acc[nonzero] / counts[nonzero, None]
    return descriptors
