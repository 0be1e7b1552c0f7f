"""Command-line entry point: ``brickyard <command> ...``.

Clouds are ASCII PLY, images PPM (RGB) or 16-bit PGM (thermal, centi-degrees),
single results JSON, logs JSONL and tables CSV. Every command writes a
manifest next to its output recording the resolved config, paths, seed,
tool version and runtime.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BrickyardError, MissionFailed
from .geometry import RigidTransform
from .io import (
    atomic_write,
    read_json,
    read_pgm16,
    read_ply,
    read_ppm,
    write_json,
    write_pgm16,
    write_ply,
    write_ppm,
)
from .model import Blueprint
from .synth import Camera, HeatSource, LidarModel, Scene, look_at, simulate_lidar_scan, sweep_trajectory

log = logging.getLogger("brickyard")


@dataclasses.dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict
    outputs: list
    seed: int | None
    version: str = __version__
    runtime_s: float = 0.0

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def _plain(obj):
    """JSON-safe view of a (possibly nested) config dataclass."""
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(getattr(k, "value", k)): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if hasattr(obj, "value"):
        return obj.value
    return obj


def _load_config(cls, args, section: str):
    """Config dataclass from defaults overridden by the ``section`` of --config."""
    if not getattr(args, "config", None):
        return cls()
    data = read_json(args.config)
    data = data.get(section, data) if isinstance(data, dict) else {}
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {section} config keys: {sorted(unknown)}")
    kw = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            v = data[f.name]
            kw[f.name] = tuple(v) if isinstance(v, list) else v
    return cls(**kw)


def _pose_arg(v, default: RigidTransform) -> RigidTransform:
    if v is None:
        return default
    x, y, yaw = v
    return RigidTransform.from_xyz_yaw(x, y, 0.0, math.radians(yaw))


def _manifest_path(out: Path) -> Path:
    return out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")


# ---------------------------------------------------------------- commands


def cmd_gen_scene(args):
    from .scenarios import lab_task_scene, pile_estimation_case, wall_registration_case

    if args.kind == "lab":
        scene = lab_task_scene(args.seed)
    elif args.kind == "pile":
        scene = pile_estimation_case(args.seed).truth
    elif args.kind == "wall":
        scene = wall_registration_case(args.seed).scene
    else:
        rng = np.random.default_rng([23, args.seed])
        d = rng.uniform(1.0, 4.0)
        pos = (float(rng.uniform(-0.1, 0.1)), float(rng.uniform(-0.1, 0.1)), float(d))
        scene = Scene(heat_sources=(HeatSource(pos),))
    write_json(args.out, scene.to_json())
    return [args.out], {"kind": args.kind}


def cmd_gen_blueprint(args):
    from .planner import generate_blueprint

    counts = {}
    for item in args.counts.split(","):
        name, _, n = item.partition("=")
        counts[name.strip()] = int(n)
    bp = generate_blueprint(counts, args.layers, args.length, seed=args.seed)
    write_json(args.out, bp.to_json())
    return [args.out], {"counts": counts, "layers": args.layers, "length": args.length}


def _default_camera(scene: Scene, kind: str) -> Camera:
    if kind == "camera":
        m = RigidTransform.from_planar(scene.marker.pose)
        eye = m.apply([0.75, -4.0, 1.5])
        return Camera.simple(525.0, 640, 480, look_at(eye, m.apply([0.75, 0.5, 0.0])))
    return Camera.simple(200.0, 160, 120)


def _lidar_for(scene: Scene, target: str, sigma: float = 0.01) -> LidarModel:
    """The sweep ``scan`` uses for a target; register/estimate render the model with it."""
    from .scenarios import pile_sweep

    bricks = [b for b in scene.bricks if b.frame == target]
    if not bricks:
        raise BrickyardError(f"scene has no {target} bricks")
    if target == "pile":
        return pile_sweep(scene.pile_frame, bricks, sigma=sigma)
    wf = scene.wall_frame
    xs = [b.pose.x for b in bricks]
    cx = 0.5 * (min(xs) + max(xs))
    # oblique, past the left end: a head-on view cannot see sliding along the wall
    eye = wf.apply([min(xs) - 1.0, -3.0, 1.8])
    return LidarModel(sweep_trajectory(eye, wf.apply([cx, 0.0, 0.2])), sigma=sigma)


def cmd_scan(args):
    scene = Scene.from_json(read_json(args.scene))
    out = Path(args.out)
    if args.sensor in ("camera", "thermal"):
        cam = Camera.from_json(read_json(args.camera)) if args.camera else _default_camera(scene, args.sensor)
        if args.sensor == "camera":
            from .synth import synth_marker_image

            write_ppm(out, synth_marker_image(scene, cam))
        else:
            from .synth import synth_thermal_image

            write_pgm16(out, synth_thermal_image(scene, cam))
        cam_path = out.with_name(out.name + ".camera.json")
        write_json(cam_path, cam.to_json())
        return [str(out), str(cam_path)], {"sensor": args.sensor}
    sensor = _lidar_for(scene, args.sensor, args.sigma)
    pc = simulate_lidar_scan(scene, sensor, seed=args.seed)
    write_ply(out, pc)
    return [str(out)], {"sensor": args.sensor, "sigma": args.sigma}


def cmd_detect_pile(args):
    from .pile import Geofence, PileConfig, detect_pile

    cfg = _load_config(PileConfig, args, "pile")
    hyp = detect_pile(read_ply(args.cloud), Geofence(*args.fence), seed=args.seed or 0, cfg=cfg)
    write_json(args.out, hyp.to_json())
    return [args.out], _plain(cfg)


def cmd_register(args):
    from .register import RegistrationConfig, register_target

    cfg = _load_config(RegistrationConfig, args, "registration")
    scene = Scene.from_json(read_json(args.scene))
    init = _pose_arg(args.init, scene.frame(args.target))
    est = register_target(scene, read_ply(args.cloud), init, args.target, cfg, seed=args.seed or 0,
                          sensor=_lidar_for(scene, args.target))
    write_json(args.out, est.to_json())
    return [args.out], _plain(cfg)


def cmd_estimate_bricks(args):
    from .bricks import MultiBrickConfig, estimate_bricks_full

    cfg = _load_config(MultiBrickConfig, args, "bricks")
    scene = Scene.from_json(read_json(args.scene))
    init = _pose_arg(args.init, scene.pile_frame)
    res = estimate_bricks_full(scene, init, read_ply(args.cloud), cfg=cfg, sensor=_lidar_for(scene, "pile"))
    write_json(args.out, {"bricks": [e.to_json() for e in res.estimates],
                          "initial_cost": res.initial_cost, "final_cost": res.final_cost})
    return [args.out], _plain(cfg)


def cmd_plan(args):
    from .planner import PlannerConfig, plan

    cfg = _load_config(PlannerConfig, args, "planner")
    bp = Blueprint.from_json(read_json(args.blueprint))
    p = plan(bp, args.mode, cfg)
    write_json(args.out, p.to_json())
    return [args.out], {"mode": args.mode, **_plain(cfg)}


def cmd_bench(args):
    from .planner import BenchConfig, PlannerConfig, bench_csv, run_bench, summary_table_csv

    pcfg = _load_config(PlannerConfig, args, "planner")
    cfg = BenchConfig(n=args.n, seed=args.seed, planner=pcfg)
    rows = run_bench(cfg, jobs=args.jobs)
    atomic_write(args.out, bench_csv(rows, timing=args.timing))
    outs = [args.out]
    if args.summary:
        atomic_write(args.summary, summary_table_csv(rows, timing=args.timing))
        outs.append(args.summary)
    return outs, {"timing": args.timing, **_plain(cfg)}


def _marker_frames(args) -> list[tuple[float, Path, dict]]:
    """(stamp, image path, camera JSON) from --images/--poses or repeated --image/--camera."""
    if args.images:
        if not args.poses:
            raise ValueError("--images needs --poses")
        paths = sorted(Path(args.images).glob("*.ppm"))
        poses = read_json(args.poses)
        poses = poses.get("cameras", poses) if isinstance(poses, dict) else poses
        if len(poses) != len(paths):
            raise ValueError(f"{len(paths)} images but {len(poses)} poses")
        return [(float(c.get("stamp", i * args.period)), path, c) for i, (path, c) in enumerate(zip(paths, poses))]
    if not args.image or not args.camera:
        raise ValueError("give --images DIR --poses FILE, or --image/--camera pairs")
    cams = args.camera
    if len(cams) not in (1, len(args.image)):
        raise ValueError("give one --camera, or one per --image")
    return [(i * args.period, Path(path), read_json(cams[i if len(cams) > 1 else 0]))
            for i, path in enumerate(args.image)]


def cmd_detect_marker(args):
    from .marker import MarkerAccumulator, MarkerConfig

    cfg = _load_config(MarkerConfig, args, "marker")
    acc = MarkerAccumulator(cfg=cfg)
    frames = _marker_frames(args)
    found = 0
    for stamp, path, cam in frames:
        found += acc.process(stamp, read_ppm(path), Camera.from_json(cam))
    det = acc.fit(max(f[0] for f in frames))
    out = det.to_json()
    out["frames_detected"] = found
    write_json(args.out, out)
    return [args.out], _plain(cfg)


def cmd_detect_heat(args):
    from .thermal import detect_heat

    cam = Camera.from_json(read_json(args.camera))
    det = detect_heat(read_pgm16(args.image), args.threshold, cam, k=args.k)
    write_json(args.out, {"detection": None if det is None else det.to_json()})
    return [args.out], {"threshold_centi_c": args.threshold, "k": args.k}


def cmd_run_mission(args):
    from .mission import MissionConfig, run_mission

    cfg = _load_config(MissionConfig, args, "mission")
    if args.noisy:
        cfg = dataclasses.replace(cfg, odometry_drift=0.01, heading_drift=0.005, lidar_sigma=0.01)
    scene = Scene.from_json(read_json(args.scene))
    bp = Blueprint.from_json(read_json(args.blueprint))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failure = None
    try:
        result = run_mission(scene, bp, cfg, args.seed)
    except MissionFailed as e:
        failure, result = e, e.result
    atomic_write(out / "mission.log.jsonl", result.log.to_jsonl())
    write_json(out / "final_state.json", result.state.to_json())
    snap_dir = out / "snapshots"
    outs = [str(out / "mission.log.jsonl"), str(out / "final_state.json")]
    for i, (name, data) in enumerate(result.snapshots):
        p = snap_dir / f"{i:04d}_{name}.snap"
        atomic_write(p, data)
    outs.append(str(snap_dir))
    if failure is not None:
        raise failure
    return outs, _plain(cfg)


COMMANDS = {
    "gen-scene": cmd_gen_scene,
    "gen-blueprint": cmd_gen_blueprint,
    "scan": cmd_scan,
    "detect-pile": cmd_detect_pile,
    "register": cmd_register,
    "estimate-bricks": cmd_estimate_bricks,
    "plan": cmd_plan,
    "bench": cmd_bench,
    "detect-marker": cmd_detect_marker,
    "detect-heat": cmd_detect_heat,
    "run-mission": cmd_run_mission,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brickyard", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, help, seed_required=False, config=True):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--seed", type=int, required=seed_required, default=None)
        if config:
            sp.add_argument("--config", help="JSON file; a section per config or flat keys")
        return sp

    sp = add("gen-scene", "synthetic scene JSON", seed_required=True, config=False)
    sp.add_argument("--kind", choices=("lab", "pile", "wall", "thermal"), default="lab")
    sp.add_argument("--out", default="scene.json")

    sp = add("gen-blueprint", "random blueprint JSON", seed_required=True, config=False)
    sp.add_argument("--counts", default="red=20,green=10,blue=5", help="e.g. red=20,green=10,blue=5")
    sp.add_argument("--layers", type=int, default=2)
    sp.add_argument("--length", type=float, default=9.0)
    sp.add_argument("--out", default="blueprint.json")

    sp = add("scan", "simulate a LiDAR sweep (PLY) or a camera/thermal image", seed_required=True,
             config=False)
    sp.add_argument("--scene", required=True)
    sp.add_argument("--sensor", choices=("pile", "wall", "camera", "thermal"), default="pile")
    sp.add_argument("--camera", help="camera JSON for image sensors")
    sp.add_argument("--sigma", type=float, default=0.01)
    sp.add_argument("--out", required=True)

    sp = add("detect-pile", "pile frame from a cloud")
    sp.add_argument("--cloud", required=True)
    sp.add_argument("--fence", type=float, nargs=4, required=True, metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    sp.add_argument("--out", default="pile.json")

    for name, help in (("register", "align a wall or pile model to a cloud"),
                       ("estimate-bricks", "per-brick poses on the pile")):
        sp = add(name, help)
        sp.add_argument("--scene", required=True, help="scene JSON holding the model bricks and frames")
        sp.add_argument("--cloud", required=True)
        sp.add_argument("--init", type=float, nargs=3, metavar=("X", "Y", "YAW_DEG"))
        if name == "register":
            sp.add_argument("--target", choices=("wall", "pile"), default="wall")
        sp.add_argument("--out", default=f"{name}.json")

    sp = add("plan", "build order for a blueprint")
    sp.add_argument("--blueprint", required=True)
    sp.add_argument("--mode", choices=("optimal", "greedy"), default="optimal")
    sp.add_argument("--out", default="plan.json")

    sp = add("bench", "planner benchmark over generated blueprints", seed_required=True)
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--timing", action=argparse.BooleanOptionalAction, default=False,
                    help="write measured runtimes (breaks byte-identical reruns)")
    sp.add_argument("--summary", help="also write the per-method summary table here")
    sp.add_argument("--out", default="bench.csv")

    sp = add("detect-marker", "wall marker from one or more RGB frames")
    sp.add_argument("--images", help="directory of .ppm frames, taken in name order")
    sp.add_argument("--poses", help="JSON list of camera objects, one per frame (optional 'stamp')")
    sp.add_argument("--image", action="append", help="single frame; repeat in time order")
    sp.add_argument("--camera", action="append", help="camera JSON; one, or one per --image")
    sp.add_argument("--period", type=float, default=1.0, help="seconds between frames")
    sp.add_argument("--out", default="marker.json")

    sp = add("detect-heat", "range a hot opening in a thermal frame", config=False)
    sp.add_argument("--image", required=True)
    sp.add_argument("--camera", required=True)
    sp.add_argument("--threshold", type=int, default=8000, help="centi-degrees Celsius (8000 = 80 C)")
    sp.add_argument("--k", type=float, default=None, help="ranging constant f*D (px*m)")
    sp.add_argument("--out", default="heat.json")

    sp = add("run-mission", "simulate the pick-and-build mission", seed_required=True)
    sp.add_argument("--scene", required=True)
    sp.add_argument("--blueprint", required=True)
    sp.add_argument("--noisy", action="store_true", help="odometry drift 0.01 m/m, LiDAR sigma 0.01 m")
    sp.add_argument("--out", default="mission")
    return p


def dispatch(argv=None) -> int:
    """Run one command; 0 on success, 1 on a domain error, 2 on a usage error."""
    logging.basicConfig(level=os.environ.get("BRICKYARD_LOG", "error").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    t0 = time.perf_counter()
    inputs = {k: v for k, v in vars(args).items()
              if k in ("scene", "cloud", "blueprint", "image", "camera", "images", "poses", "config")}
    try:
        outputs, config = COMMANDS[args.command](args)
    except MissionFailed as e:
        print(f"mission failed: {e.reason}: {e.detail}", file=sys.stderr)
        _write_manifest(args, inputs, {}, [args.out], t0, failure=e.reason)
        return 1
    except (BrickyardError, ValueError, KeyError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    _write_manifest(args, inputs, config, outputs, t0)
    return 0


def _write_manifest(args, inputs, config, outputs, t0, failure=None) -> None:
    m = RunManifest(args.command, config, inputs, [str(o) for o in outputs], args.seed,
                    runtime_s=round(time.perf_counter() - t0, 6))
    d = m.to_json()
    if failure:
        d["failure"] = failure
    write_json(_manifest_path(Path(args.out)), d)


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
