"""Command-line entry point.

Subcommands: simulate, slam, render, eval. Config files are flat key=value
text; every resolved setting is echoed into the run manifest so a run can be
reproduced exactly from its outputs.

Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 algorithm-2
degeneracy termination (partial outputs and manifest are still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time

import numpy as np

from . import io as gio
from .algorithms import (DeadReckoning, MapAgreementSlam, MotionOnlySlam,
                         StrictConsistencySlam)
from .errors import GridSlamError
from .eval import free_space_components, map_accuracy, path_error
from .geometry import GridGeometry, Pose
from .mapping import LabelingParams, labels_from_grayscale, render
from .models import MapPrior, MotionParams, PerceptionParams
from .simulator import SimConfig, simulate


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _read_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    out: dict[str, str] = {}
    with open(path) as f:
        for ln, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _take(cfg: dict[str, str], key: str, default, kind=float):
    if key not in cfg:
        return default
    return kind(cfg.pop(key))


def _check_consumed(cfg: dict[str, str]) -> None:
    if cfg:
        raise ValueError(f"unknown config keys: {', '.join(sorted(cfg))}")


def _parse_waypoints(text: str) -> tuple[Pose, ...]:
    poses = []
    for part in text.split(";"):
        fields = [float(tok) for tok in part.split(",")]
        if len(fields) == 2:
            poses.append(Pose(fields[0], fields[1]))
        elif len(fields) == 3:
            poses.append(Pose(*fields))
        else:
            raise ValueError(f"waypoint {part!r} must be x,y or x,y,heading")
    return tuple(poses)


def _motion_from(cfg: dict[str, str]) -> MotionParams:
    return MotionParams(
        rot_std_base=_take(cfg, "rot_std_base", 0.01),
        rot_std_per_rad=_take(cfg, "rot_std_per_rad", 0.1),
        trans_std_base=_take(cfg, "trans_std_base", 0.005),
        trans_std_per_meter=_take(cfg, "trans_std_per_meter", 0.05))


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _write_manifest(path: str, payload: dict) -> None:
    with open(path, "w", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _cmd_simulate(args) -> int:
    cfg = _read_config(args.config)
    world = gio.read_world(args.world)
    waypoints = _parse_waypoints(cfg.pop("waypoints"))
    n_beams = int(_take(cfg, "n_beams", 180))
    pp = PerceptionParams(sigma=_take(cfg, "sigma", 0.02),
                          d_max=_take(cfg, "d_max", 10.0))
    sc = SimConfig(
        waypoints=waypoints,
        step_trans=_take(cfg, "step_trans", 0.09),
        step_rot_cap=_take(cfg, "step_rot_cap", 0.15),
        odo_noise=MotionParams(
            rot_std_base=_take(cfg, "rot_std_base", 0.002),
            rot_std_per_rad=_take(cfg, "rot_std_per_rad", 0.0),
            trans_std_base=_take(cfg, "trans_std_base", 0.002),
            trans_std_per_meter=_take(cfg, "trans_std_per_meter", 0.0)),
        rot_bias=_take(cfg, "rot_bias", 0.0009),
        laser_sigma=_take(cfg, "laser_sigma", 0.02),
        rate_hint=_take(cfg, "rate_hint", 10.0),
        seed=args.seed)
    _check_consumed(cfg)
    dataset, truth = simulate(world, sc, pp, n_beams)
    gio.write_dataset(dataset, args.out)
    gio.write_path_csv(truth, args.truth)
    print(f"simulated {len(dataset)} records over {len(truth)} poses",
          file=sys.stderr)
    return 0


_ALGOS = {1: MotionOnlySlam, 2: StrictConsistencySlam, 3: MapAgreementSlam}


def _cmd_slam(args) -> int:
    cfg = _read_config(args.config)
    dataset = gio.read_dataset(args.data)
    start = Pose(_take(cfg, "start_x", 0.0), _take(cfg, "start_y", 0.0),
                 _take(cfg, "start_heading", 0.0))
    resolution = _take(cfg, "grid_resolution", dataset.resolution)
    dataset.resolution = resolution
    rows = _take(cfg, "grid_rows", None, int)
    cols = _take(cfg, "grid_cols", None, int)
    ox = _take(cfg, "grid_origin_x", 0.0)
    oy = _take(cfg, "grid_origin_y", 0.0)
    geometry = GridGeometry(rows, cols, resolution, ox, oy) if rows and cols else None
    n_samples = args.n if args.n is not None else int(_take(cfg, "n_samples", 100))
    params = dict(
        n_samples=n_samples,
        motion=_motion_from(cfg),
        perception=PerceptionParams(sigma=_take(cfg, "sigma", 0.02),
                                    d_max=dataset.d_max),
        prior=MapPrior(_take(cfg, "p", 0.05)),
        geometry=geometry,
        start=start,
        min_trans=_take(cfg, "min_trans", 0.0),
        min_rot=_take(cfg, "min_rot", 0.0),
        seed=args.seed,
        verbose=1 if args.verbose else 0)
    labeling = LabelingParams(_take(cfg, "pi", 0.2))
    if args.algo == 3:
        params["labeling"] = labeling
    _check_consumed(cfg)
    est = _ALGOS[args.algo](**params)
    t0 = time.perf_counter()
    est.fit(dataset)
    elapsed = time.perf_counter() - t0

    if args.out_map:
        grid = render(est.map_, labeling) if args.algo == 3 else render(est.map_)
        gio.write_map_pgm(grid, args.out_map)
    if args.out_path:
        gio.write_path_csv(est.path_, args.out_path)

    degeneracy = getattr(est, "degeneracy_", None)
    ess = [d.ess for d in est.diagnostics_ if not np.isnan(d.ess)]
    if args.manifest:
        _write_manifest(args.manifest, {
            "algorithm": args.algo,
            "seed": args.seed,
            "data": args.data,
            "config": _jsonable(est.get_params()),
            "diagnostics": {
                "timesteps": len(est.path_) - 1,
                "degenerate": degeneracy is not None,
                "degeneracy_timestep": degeneracy.timestep if degeneracy else None,
                "mean_ess": float(np.mean(ess)) if ess else None,
                "fallback_beams": int(sum(d.fallback_beams for d in est.diagnostics_)),
                "max_agreement_fallbacks": int(sum(
                    d.max_agreement_fallback for d in est.diagnostics_)),
            },
            "timing_seconds": elapsed,
        })
    if degeneracy is not None:
        print(f"degenerate at timestep {degeneracy.timestep}", file=sys.stderr)
        return 3
    print(f"slam finished: {len(est.path_) - 1} timesteps in {elapsed:.1f}s",
          file=sys.stderr)
    return 0


def _cmd_render(args) -> int:
    dataset = gio.read_dataset(args.data)
    est = DeadReckoning().fit(dataset)
    gio.write_map_pgm(render(est.map_), args.out)
    print(f"rendered dead-reckoned map {est.geometry_.rows}x{est.geometry_.cols}",
          file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    truth_world = gio.read_world(args.truth)
    labels = labels_from_grayscale(gio.read_map_pgm(args.map))
    score = map_accuracy(labels, truth_world)
    est_path = gio.read_path_csv(args.est_path)
    truth_path = gio.read_path_csv(args.truth_path)
    err = path_error(est_path, truth_path)
    rows = [
        "labeled_cells,correct,accuracy,rmse_position,final_error,"
        "final_heading_error,free_components_est,free_components_truth",
        f"{score.labeled_cells},{score.correct},{score.accuracy:.6f},"
        f"{err.rmse_position:.6f},{err.final_error:.6f},"
        f"{err.final_heading_error:.6f},{free_space_components(labels)},"
        f"{free_space_components(truth_world)}",
    ]
    with open(args.out, "w", newline="\n") as f:
        f.write("\n".join(rows) + "\n")
    print(f"accuracy {score.accuracy:.3f}, final error {err.final_error:.3f} m",
          file=sys.stderr)
    return 0


def _build_parser() -> _Parser:
    p = _Parser(prog="gridslam", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="generate a synthetic dataset")
    ps.add_argument("--world", required=True)
    ps.add_argument("--config", required=True)
    ps.add_argument("--out", required=True)
    ps.add_argument("--truth", required=True)
    ps.add_argument("--seed", type=int, default=0)
    ps.set_defaults(func=_cmd_simulate)

    pl = sub.add_parser("slam", help="run a SLAM algorithm over a log")
    pl.add_argument("--algo", type=int, choices=(1, 2, 3), default=3)
    pl.add_argument("--n", type=int, default=None,
                    help="IS sample size (default 100)")
    pl.add_argument("--data", required=True)
    pl.add_argument("--config", default=None)
    pl.add_argument("--out-map", default=None)
    pl.add_argument("--out-path", default=None)
    pl.add_argument("--manifest", default=None)
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("-v", "--verbose", action="store_true")
    pl.set_defaults(func=_cmd_slam)

    pr = sub.add_parser("render", help="dead-reckoned raw map from a log")
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=_cmd_render)

    pe = sub.add_parser("eval", help="score a map and path against ground truth")
    pe.add_argument("--map", required=True)
    pe.add_argument("--truth", required=True)
    pe.add_argument("--est-path", required=True)
    pe.add_argument("--truth-path", required=True)
    pe.add_argument("--out", required=True)
    pe.set_defaults(func=_cmd_eval)
    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (GridSlamError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
