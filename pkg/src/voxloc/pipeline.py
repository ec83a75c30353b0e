"""End-to-end localization pipeline and scene export.

run_pipeline chains the stages: voxelize the reference, combine the scans by
odometry, coarse-align the combined cloud with FPFH + RANSAC, then refine
every raw scan with point-to-plane ICP against the fine reference grid.
Outputs land in a run directory together with a manifest naming them; a
failed run removes whatever it had already written.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cloud import PointCloud
from .config import PipelineConfig, config_hash
from .errors import DataError, ParseError
from .evaluation import (
    XY_BIN_WIDTH,
    Z_BIN_WIDTH,
    PoseErrors,
    error_histogram,
    evaluate_trajectory,
    write_errors_csv,
    write_histogram_csv,
)
from .fpfh import compute_fpfh
from .io import read_ply, read_poses, write_ply, write_poses
from .odometry import OdometryState, combine_scans
from .parking import ParkingSpace, save_spaces, spaces_from_reference
from .registration import RegistrationResult, icp_point_to_plane, ransac_coarse
from .spatial import SpatialIndex
from .synthetic import SceneSpec, generate_synthetic_scene
from .transform import RigidTransform, Trajectory
from .voxel import VoxelGrid, downsample, voxelize

EXIT_OK = 0
EXIT_STAGE_ERROR = 1
EXIT_INPUT_ERROR = 2

_DEFAULT_VOXEL_COLOR = (128, 128, 128)
_PLANARITY_RATIO = 0.03  # max smallest/largest eigenvalue for a feature cell
_ANCHOR_SCALE = 4.0      # normal-orientation anchor radius over fpfh_radius
_ANCHOR_RADIUS_CAP = 20.0  # beyond this the anchor centroid barely moves

SCENE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["voxel_size", "voxels", "boxes"],
    "additionalProperties": False,
    "properties": {
        "voxel_size": {"type": "number", "exclusiveMinimum": 0},
        "voxels": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["key", "center", "color"],
                "additionalProperties": False,
                "properties": {
                    "key": {
                        "type": "array",
                        "items": {"type": "integer"},
                        "minItems": 3,
                        "maxItems": 3,
                    },
                    "center": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 3,
                        "maxItems": 3,
                    },
                    "color": {
                        "type": "array",
                        "items": {"type": "integer", "minimum": 0, "maximum": 255},
                        "minItems": 3,
                        "maxItems": 3,
                    },
                },
            },
        },
        "boxes": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "centroid", "dims", "yaw", "state"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "centroid": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 3,
                        "maxItems": 3,
                    },
                    "dims": {
                        "type": "array",
                        "items": {"type": "number", "minimum": 0},
                        "minItems": 3,
                        "maxItems": 3,
                    },
                    "yaw": {"type": "number"},
                    "state": {"enum": ["occupied", "vacant"]},
                },
            },
        },
    },
}


class PipelineInputError(ValueError):
    """An input file is missing, unreadable, or inconsistent."""


@dataclass
class PipelineRun:
    """Everything one pipeline invocation needs."""

    config: PipelineConfig
    reference_path: str | Path
    scan_dir: str | Path
    out_dir: str | Path
    gt_poses_path: str | Path | None = None
    seed: int = 0


@dataclass
class PipelineResult:
    status: str
    exit_code: int
    message: str = ""
    artifacts: dict[str, Path] = field(default_factory=dict)
    odometry_poses: Trajectory | None = None
    refined_poses: Trajectory | None = None
    coarse: RegistrationResult | None = None
    fine: list[RegistrationResult] = field(default_factory=list)
    errors: PoseErrors | None = None
    rejected_scans: list[int] = field(default_factory=list)


def list_scan_files(scan_dir: str | Path) -> list[Path]:
    """PLY files of a scan directory in filename order."""
    return sorted(Path(scan_dir).glob("*.ply"))


def export_scene(grid: VoxelGrid, spaces: list[ParkingSpace], path: str | Path) -> None:
    """Write a grid plus parking boxes as a renderer-friendly JSON document.

    Voxel centers are key * size + size / 2 per axis; cells without color
    information get a neutral gray.
    """
    if len(grid) == 0:
        raise ValueError("cannot export an empty grid")
    size = grid.voxel_size
    keys = grid.keys_array
    centers = keys * size + size / 2.0
    colors = grid.colors
    voxels = []
    for row in range(len(grid)):
        color = _DEFAULT_VOXEL_COLOR if colors is None else tuple(int(c) for c in colors[row])
        voxels.append(
            {
                "key": [int(k) for k in keys[row]],
                "center": [float(c) for c in centers[row]],
                "color": list(color),
            }
        )
    boxes = []
    for space in spaces:
        boxes.append(
            {
                "id": int(space.space_id),
                "centroid": [float(c) for c in space.box.centroid],
                "dims": [float(d) for d in space.box.dims],
                "yaw": float(space.box.yaw),
                "state": space.state.value,
            }
        )
    document = {"voxel_size": float(size), "voxels": voxels, "boxes": boxes}
    with open(path, "w", encoding="ascii") as handle:
        json.dump(document, handle, sort_keys=True)
        handle.write("\n")


def load_scene(path: str | Path) -> dict:
    """Parse a scene document back, checking its basic shape."""
    with open(path, "r", encoding="ascii") as handle:
        try:
            document = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc.msg), line=exc.lineno) from exc
    if not isinstance(document, dict):
        raise DataError("scene document must be a JSON object")
    for key in ("voxel_size", "voxels", "boxes"):
        if key not in document:
            raise DataError(f"scene document lacks '{key}'")
    if not isinstance(document["voxels"], list) or not isinstance(document["boxes"], list):
        raise DataError("'voxels' and 'boxes' must be arrays")
    for entry in document["voxels"]:
        for key in ("key", "center", "color"):
            if key not in entry:
                raise DataError(f"voxel entry lacks '{key}'")
    for entry in document["boxes"]:
        for key in ("id", "centroid", "dims", "yaw", "state"):
            if key not in entry:
                raise DataError(f"box entry lacks '{key}'")
    return document


def two_level_grids(cloud: PointCloud, config: PipelineConfig) -> tuple[VoxelGrid, VoxelGrid]:
    """Fine grid of the cloud plus the coarse grid of the fine-cell means."""
    fine = voxelize(cloud, config.voxel_size_fine)
    coarse = voxelize(downsample(fine), config.voxel_size_coarse)
    return fine, coarse


def coarse_features(coarse: VoxelGrid, config: PipelineConfig) -> tuple[PointCloud, np.ndarray]:
    """Feature cloud for coarse matching: normal-bearing cell means + FPFH.

    Each normal is oriented toward the centroid of the cell means inside its
    own descriptor radius. That anchor moves rigidly with the cloud and
    depends only on nearby geometry, so two partially overlapping grids of
    the same scene orient shared cells the same way regardless of their
    frames.
    """
    means = coarse.means
    index = SpatialIndex(means)
    anchor_radius = min(_ANCHOR_SCALE * config.fpfh_radius, _ANCHOR_RADIUS_CAP)
    pairs, _ = index.pairs_within(anchor_radius)
    sums = means.copy()
    counts = np.ones(len(means))
    np.add.at(sums, pairs[:, 0], means[pairs[:, 1]])
    np.add.at(sums, pairs[:, 1], means[pairs[:, 0]])
    np.add.at(counts, pairs[:, 0], 1.0)
    np.add.at(counts, pairs[:, 1], 1.0)
    anchors = sums / counts[:, None]
    coarse.compute_normals(viewpoint=anchors)
    mask = coarse.has_normal.copy()
    # keep only strongly planar cells: cells straddling surface edges have
    # normals that are unstable under re-voxelization and only add noise
    rows = np.flatnonzero(coarse.has_covariance)
    if rows.size:
        w = np.linalg.eigvalsh(coarse.covariances[rows])
        planar = w[:, 0] <= _PLANARITY_RATIO * w[:, 2]
        keep = np.zeros(len(means), dtype=bool)
        keep[rows] = planar
        mask &= keep
    if int(mask.sum()) < 3:
        raise DataError("coarse grid has fewer than 3 cells with stable normals")
    points = coarse.means[mask]
    normals = coarse.normals[mask]
    descriptors = compute_fpfh(points, normals, config.fpfh_radius)
    return PointCloud(points), descriptors


def _check_inputs(run: PipelineRun) -> None:
    reference = Path(run.reference_path)
    if not reference.is_file():
        raise PipelineInputError(f"reference cloud not found: {reference}")
    scan_dir = Path(run.scan_dir)
    if not scan_dir.is_dir():
        raise PipelineInputError(f"scan directory not found: {scan_dir}")
    if not list_scan_files(scan_dir):
        raise PipelineInputError(f"no .ply scans in {scan_dir}")
    if run.gt_poses_path is not None and not Path(run.gt_poses_path).is_file():
        raise PipelineInputError(f"ground-truth pose file not found: {run.gt_poses_path}")


def run_pipeline(run: PipelineRun) -> PipelineResult:
    """Execute the full localization pipeline and write its artifacts.

    Returns a result whose exit_code is 0 on success, 2 when inputs are
    missing or unreadable (status "input-error"), and 1 when a stage fails
    (status names the stage). On failure every file already written is
    removed.
    """
    config = run.config
    out_dir = Path(run.out_dir)
    written: list[Path] = []

    def _target(name: str) -> Path:
        path = out_dir / name
        written.append(path)
        return path

    stage = "inputs"
    try:
        _check_inputs(run)
        try:
            reference = read_ply(run.reference_path)
            scan_files = list_scan_files(run.scan_dir)
            scans = [read_ply(path) for path in scan_files]
            ground_truth = None
            if run.gt_poses_path is not None:
                ground_truth = read_poses(run.gt_poses_path)
                if len(ground_truth) != len(scans):
                    raise PipelineInputError(
                        f"{len(ground_truth)} ground-truth poses for {len(scans)} scans"
                    )
        except (ParseError, DataError) as exc:
            raise PipelineInputError(str(exc)) from exc
    except PipelineInputError as exc:
        return PipelineResult("input-error", EXIT_INPUT_ERROR, str(exc))

    try:
        stage = "voxelize"
        reference_fine, reference_coarse = two_level_grids(reference, config)
        reference_fine.compute_normals()

        stage = "odometry"
        odometry_state = OdometryState(local_map=VoxelGrid(config.voxel_size_fine))
        combined, odometry_poses = combine_scans(scans, config, state=odometry_state)

        stage = "coarse"
        target_cloud, target_desc = coarse_features(reference_coarse, config)
        _, combined_coarse = two_level_grids(combined, config)
        source_cloud, source_desc = coarse_features(combined_coarse, config)
        coarse = ransac_coarse(
            source_cloud, target_cloud, source_desc, target_desc, config, run.seed
        )

        stage = "fine"
        fine_results = []
        refined = []
        for scan, pose in zip(scans, odometry_poses):
            init = coarse.transform @ pose
            result = icp_point_to_plane(scan, reference_fine, init, config)
            fine_results.append(result)
            refined.append(result.transform)
        refined_poses = Trajectory(refined)

        stage = "evaluate"
        errors = None
        if ground_truth is not None:
            errors = evaluate_trajectory(refined_poses, ground_truth)

        stage = "write"
        out_dir.mkdir(parents=True, exist_ok=True)
        artifacts: dict[str, Path] = {}

        artifacts["refined_poses"] = _target("refined_poses.txt")
        write_poses(artifacts["refined_poses"], refined_poses)
        artifacts["odometry_poses"] = _target("odometry_poses.txt")
        write_poses(artifacts["odometry_poses"], odometry_poses)
        artifacts["coarse_transform"] = _target("coarse_transform.txt")
        write_poses(artifacts["coarse_transform"], Trajectory([coarse.transform]))
        artifacts["combined_cloud"] = _target("combined.ply")
        write_ply(artifacts["combined_cloud"], combined)

        spaces: list[ParkingSpace] = []
        if reference.labels is not None:
            spaces = spaces_from_reference(reference, config)
            artifacts["spaces"] = _target("spaces.json")
            save_spaces(artifacts["spaces"], spaces)

        artifacts["scene"] = _target("scene.json")
        export_scene(reference_coarse, spaces, artifacts["scene"])

        if errors is not None:
            artifacts["errors_csv"] = _target("errors.csv")
            write_errors_csv(artifacts["errors_csv"], errors)
            artifacts["hist_xy_csv"] = _target("hist_xy.csv")
            write_histogram_csv(artifacts["hist_xy_csv"], error_histogram(errors.xy, XY_BIN_WIDTH))
            artifacts["hist_z_csv"] = _target("hist_z.csv")
            write_histogram_csv(artifacts["hist_z_csv"], error_histogram(errors.z, Z_BIN_WIDTH))

        manifest_path = _target("manifest.json")
        manifest = {
            "config": asdict(config),
            "config_hash": config_hash(config),
            "seed": int(run.seed),
            "scan_count": len(scans),
            "rejected_scans": [int(i) for i in odometry_state.rejected],
            "status": "ok",
            "outputs": {name: path.name for name, path in artifacts.items()},
        }
        with open(manifest_path, "w", encoding="ascii") as handle:
            json.dump(manifest, handle, sort_keys=True, indent=2)
            handle.write("\n")
        artifacts["manifest"] = manifest_path
    except Exception as exc:  # noqa: BLE001 - any stage failure aborts the run
        for path in written:
            try:
                path.unlink(missing_ok=True)
            except OSError:
                pass
        return PipelineResult(f"error:{stage}", EXIT_STAGE_ERROR, f"{stage}: {exc}")

    return PipelineResult(
        "ok",
        EXIT_OK,
        artifacts=artifacts,
        odometry_poses=odometry_poses,
        refined_poses=refined_poses,
        coarse=coarse,
        fine=fine_results,
        errors=errors,
        rejected_scans=[int(i) for i in odometry_state.rejected],
    )


def write_synthetic_dataset(
    out_dir: str | Path, seed: int, spec: SceneSpec | None = None
) -> dict[str, Path]:
    """Materialize a synthetic scene as pipeline-ready input files."""
    out_dir = Path(out_dir)
    scan_dir = out_dir / "scans"
    scan_dir.mkdir(parents=True, exist_ok=True)
    reference, scans, trajectory = generate_synthetic_scene(seed, spec)
    paths = {
        "reference": out_dir / "reference.ply",
        "scans": scan_dir,
        "gt_poses": out_dir / "gt_poses.txt",
    }
    write_ply(paths["reference"], reference)
    for index, scan in enumerate(scans):
        write_ply(scan_dir / f"scan_{index:04d}.ply", scan)
    write_poses(paths["gt_poses"], trajectory)
    return paths
