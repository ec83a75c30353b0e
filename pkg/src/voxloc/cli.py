"""Command-line entry point.

Each pipeline stage is exposed as its own subcommand so runs can be chained
through intermediate files, plus `pipeline` for the whole thing in one go.
Exit codes: 0 success, 1 stage failure, 2 input error (missing, unreadable,
or inconsistent inputs).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import PipelineConfig, load_config
from .errors import ConfigError, DataError, ParseError
from .evaluation import (
    XY_BIN_WIDTH,
    Z_BIN_WIDTH,
    error_histogram,
    evaluate_trajectory,
    write_errors_csv,
    write_histogram_csv,
)
from .io import read_ply, read_poses, write_ply, write_poses
from .odometry import combine_scans
from .parking import extract_class, load_spaces, save_spaces, spaces_from_reference, update_occupancy
from .pipeline import (
    EXIT_INPUT_ERROR,
    EXIT_STAGE_ERROR,
    PipelineRun,
    coarse_features,
    export_scene,
    list_scan_files,
    run_pipeline,
    two_level_grids,
    write_synthetic_dataset,
)
from .registration import icp_point_to_plane, ransac_coarse
from .synthetic import SceneSpec
from .transform import Trajectory


class _InputError(ValueError):
    pass


def _load_cloud(path: str) -> "PointCloud":
    target = Path(path)
    if not target.is_file():
        raise _InputError(f"cloud file not found: {target}")
    return read_ply(target)


def _load_trajectory(path: str) -> Trajectory:
    target = Path(path)
    if not target.is_file():
        raise _InputError(f"pose file not found: {target}")
    return read_poses(target)


def _load_scans(scan_dir: str) -> list:
    target = Path(scan_dir)
    if not target.is_dir():
        raise _InputError(f"scan directory not found: {target}")
    files = list_scan_files(target)
    if not files:
        raise _InputError(f"no .ply scans in {target}")
    return [read_ply(f) for f in files]


def _resolve_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise _InputError(f"config file not found: {path}")
        return load_config(path)
    return PipelineConfig()


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_synth(args) -> int:
    spec = SceneSpec(
        street_length=args.street_length,
        surface_density=args.surface_density,
        car_count=args.car_count,
        scan_count=args.scan_count,
        points_per_scan=args.points_per_scan,
        noise_sigma=args.noise_sigma,
    )
    paths = write_synthetic_dataset(_out_dir(args), args.seed, spec)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _cmd_voxelize(args) -> int:
    config = _resolve_config(args)
    cloud = _load_cloud(args.reference)
    fine, coarse = two_level_grids(cloud, config)
    out = _out_dir(args) / "voxels.json"
    export_scene(coarse, [], out)
    print(f"fine cells: {len(fine)}")
    print(f"coarse cells: {len(coarse)}")
    print(f"scene: {out}")
    return 0


def _cmd_odometry(args) -> int:
    config = _resolve_config(args)
    scans = _load_scans(args.scans)
    combined, trajectory = combine_scans(scans, config)
    out = _out_dir(args)
    write_ply(out / "combined.ply", combined)
    write_poses(out / "odometry_poses.txt", trajectory)
    print(f"combined {len(scans)} scans, {len(combined)} points")
    print(f"combined cloud: {out / 'combined.ply'}")
    print(f"poses: {out / 'odometry_poses.txt'}")
    return 0


def _cmd_coarse(args) -> int:
    config = _resolve_config(args)
    reference = _load_cloud(args.reference)
    combined = _load_cloud(args.combined)
    _, reference_coarse = two_level_grids(reference, config)
    target_cloud, target_desc = coarse_features(reference_coarse, config)
    _, combined_coarse = two_level_grids(combined, config)
    source_cloud, source_desc = coarse_features(combined_coarse, config)
    result = ransac_coarse(source_cloud, target_cloud, source_desc, target_desc, config, args.seed)
    out = _out_dir(args) / "coarse_transform.txt"
    write_poses(out, Trajectory([result.transform]))
    print(f"fitness: {result.fitness:.6f}")
    print(f"inlier_rmse: {result.inlier_rmse:.6f}")
    print(f"iterations: {result.iterations}")
    print(f"transform: {out}")
    return 0


def _cmd_fine(args) -> int:
    config = _resolve_config(args)
    reference = _load_cloud(args.reference)
    scans = _load_scans(args.scans)
    odometry_poses = _load_trajectory(args.odom_poses)
    coarse_list = _load_trajectory(args.coarse_transform)
    if len(odometry_poses) != len(scans):
        raise _InputError(f"{len(odometry_poses)} poses for {len(scans)} scans")
    if len(coarse_list) != 1:
        raise _InputError("coarse transform file must hold exactly one pose")
    coarse_transform = coarse_list[0]
    fine_grid, _ = two_level_grids(reference, config)
    fine_grid.compute_normals()
    refined = []
    for scan, pose in zip(scans, odometry_poses):
        result = icp_point_to_plane(scan, fine_grid, coarse_transform @ pose, config)
        refined.append(result.transform)
    out = _out_dir(args) / "refined_poses.txt"
    write_poses(out, Trajectory(refined))
    print(f"refined {len(refined)} poses")
    print(f"poses: {out}")
    return 0


def _cmd_pipeline(args) -> int:
    config = _resolve_config(args)
    run = PipelineRun(
        config=config,
        reference_path=args.reference,
        scan_dir=args.scans,
        out_dir=args.out_dir,
        gt_poses_path=args.gt_poses,
        seed=args.seed,
    )
    result = run_pipeline(run)
    if result.exit_code != 0:
        print(f"error: {result.status}: {result.message}", file=sys.stderr)
        return result.exit_code
    for name, path in sorted(result.artifacts.items()):
        print(f"{name}: {path}")
    if result.errors is not None:
        print(f"mean_xy_error: {float(result.errors.xy.mean()):.6f}")
        print(f"max_xy_error: {float(result.errors.xy.max()):.6f}")
        print(f"mean_z_error: {float(result.errors.z.mean()):.6f}")
    return 0


def _cmd_parking(args) -> int:
    config = _resolve_config(args)
    if args.spaces:
        spaces_path = Path(args.spaces)
        if not spaces_path.is_file():
            raise _InputError(f"spaces file not found: {spaces_path}")
        spaces = load_spaces(spaces_path)
    else:
        reference = _load_cloud(args.reference)
        spaces = spaces_from_reference(reference, config)
    update = _load_cloud(args.update_cloud)
    if update.labels is not None:
        car_points = extract_class(update, config.car_label).points
    else:
        car_points = update.points
    updated = update_occupancy(spaces, car_points, config.occupancy_min_points)
    out = _out_dir(args) / "spaces.json"
    save_spaces(out, updated)
    occupied = sum(1 for s in updated if s.state.value == "occupied")
    print(f"spaces: {len(updated)}")
    print(f"occupied: {occupied}")
    print(f"vacant: {len(updated) - occupied}")
    print(f"spaces file: {out}")
    return 0


def _cmd_eval(args) -> int:
    estimated = _load_trajectory(args.est)
    ground_truth = _load_trajectory(args.gt_poses)
    if len(estimated) != len(ground_truth):
        raise _InputError(f"{len(estimated)} estimated poses vs {len(ground_truth)} ground truth")
    errors = evaluate_trajectory(estimated, ground_truth)
    out = _out_dir(args)
    write_errors_csv(out / "errors.csv", errors)
    write_histogram_csv(out / "hist_xy.csv", error_histogram(errors.xy, XY_BIN_WIDTH))
    write_histogram_csv(out / "hist_z.csv", error_histogram(errors.z, Z_BIN_WIDTH))
    print(f"mean_xy_error: {float(errors.xy.mean()):.6f}")
    print(f"max_xy_error: {float(errors.xy.max()):.6f}")
    print(f"mean_z_error: {float(errors.z.mean()):.6f}")
    print(f"errors: {out / 'errors.csv'}")
    return 0


def _cmd_export_scene(args) -> int:
    config = _resolve_config(args)
    cloud = _load_cloud(args.reference)
    _, coarse = two_level_grids(cloud, config)
    spaces = []
    if args.spaces:
        spaces_path = Path(args.spaces)
        if not spaces_path.is_file():
            raise _InputError(f"spaces file not found: {spaces_path}")
        spaces = load_spaces(spaces_path)
    out = _out_dir(args) / "scene.json"
    export_scene(coarse, spaces, out)
    print(f"voxels: {len(coarse)}")
    print(f"boxes: {len(spaces)}")
    print(f"scene: {out}")
    return 0


def _add_common(parser, *, config=True, seed=False, out_dir=True):
    if config:
        parser.add_argument("--config", help="JSON pipeline configuration")
    if seed:
        parser.add_argument("--seed", type=int, default=0, help="RNG seed")
    if out_dir:
        parser.add_argument("--out-dir", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxloc", description="Voxel-based point-cloud localization pipeline."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic street dataset")
    _add_common(p, config=False, seed=True)
    p.add_argument("--scan-count", type=int, default=20)
    p.add_argument("--car-count", type=int, default=8)
    p.add_argument("--points-per-scan", type=int, default=8000)
    p.add_argument("--noise-sigma", type=float, default=0.02)
    p.add_argument("--street-length", type=float, default=40.0)
    p.add_argument("--surface-density", type=float, default=400.0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("voxelize", help="voxelize a cloud and export its coarse grid")
    _add_common(p)
    p.add_argument("--reference", required=True, help="input PLY cloud")
    p.set_defaults(func=_cmd_voxelize)

    p = sub.add_parser("odometry", help="combine a scan directory into one cloud")
    _add_common(p)
    p.add_argument("--scans", required=True, help="directory of per-scan PLY files")
    p.set_defaults(func=_cmd_odometry)

    p = sub.add_parser("coarse", help="coarse-align a combined cloud to a reference")
    _add_common(p, seed=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--combined", required=True, help="combined scan cloud (PLY)")
    p.set_defaults(func=_cmd_coarse)

    p = sub.add_parser("fine", help="refine per-scan poses against the reference grid")
    _add_common(p)
    p.add_argument("--reference", required=True)
    p.add_argument("--scans", required=True)
    p.add_argument("--odom-poses", required=True, help="odometry pose file")
    p.add_argument("--coarse-transform", required=True, help="single-pose file from coarse")
    p.set_defaults(func=_cmd_fine)

    p = sub.add_parser("pipeline", help="run the full pipeline")
    _add_common(p, seed=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--scans", required=True)
    p.add_argument("--gt-poses", help="optional ground-truth pose file")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("parking", help="update parking occupancy from a new cloud")
    _add_common(p)
    p.add_argument("--reference", help="labelled reference cloud (to derive spaces)")
    p.add_argument("--spaces", help="existing spaces JSON (instead of --reference)")
    p.add_argument("--update-cloud", required=True, help="cloud in the reference frame")
    p.set_defaults(func=_cmd_parking)

    p = sub.add_parser("eval", help="compare estimated poses against ground truth")
    _add_common(p, config=False)
    p.add_argument("--est", required=True, help="estimated pose file")
    p.add_argument("--gt-poses", required=True, help="ground-truth pose file")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("export-scene", help="export a cloud (and spaces) as scene JSON")
    _add_common(p)
    p.add_argument("--reference", required=True)
    p.add_argument("--spaces", help="optional spaces JSON to embed")
    p.set_defaults(func=_cmd_export_scene)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "parking" and not args.spaces and not args.reference:
        print("error: input-error: parking needs --reference or --spaces", file=sys.stderr)
        return EXIT_INPUT_ERROR
    try:
        return args.func(args)
    except (_InputError, ParseError, DataError, ConfigError, FileNotFoundError) as exc:
        print(f"error: input-error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except Exception as exc:  # noqa: BLE001 - stage failures map to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
