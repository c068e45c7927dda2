"""Command-line pipeline: synth, superpoints, priors, cluster, extract, eval, run, info.

Configuration precedence is defaults < JSON config file < explicit flags.
Logs go to stderr (P2O_LOG controls verbosity); artifacts and reports go to
files only. Exit codes: 0 ok, 2 bad input, 3 stage failure.
"""

import argparse
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import evaluation, hierarchy, objectness, scene_io, superpoints, synth
from .errors import FormatError
from .spatial import PriorBox

log = logging.getLogger("p2o")

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_STAGE_FAILURE = 3


class StageFailure(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"stage={stage}: {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    """Every tunable of the pipeline with its default, echoed on each run."""

    # super-points
    voxel_size: float = 0.02
    seed_resolution: float = 0.25
    w_spatial: float = 0.4
    w_color: float = 0.2
    w_normal: float = 1.0
    normals_k: int = 16
    # objectness priors
    tau: float = 0.3
    depth_tol: float = 0.05
    min_track_frames: int = 2
    min_track_points: int = 30
    mutual: bool = False
    # hierarchical clustering
    K: float = 0.6
    T: float = 0.05
    max_layers: int = 10
    inside_frac: float = 0.9
    outside_frac: float = 0.1
    min_object_points: int = 50
    l2_normalize_features: bool = False
    include_stalled: bool = False
    drop_largest_planar: int = 0
    # synth only
    seed: int = 0

    def superpoint_params(self):
        return superpoints.SuperpointParams(
            voxel_size=self.voxel_size,
            seed_resolution=self.seed_resolution,
            w_spatial=self.w_spatial,
            w_color=self.w_color,
            w_normal=self.w_normal,
        )

    def match_params(self):
        return objectness.MatchParams(
            tau=self.tau,
            depth_tol=self.depth_tol,
            min_track_frames=self.min_track_frames,
            min_track_points=self.min_track_points,
        )

    def merge_params(self):
        return hierarchy.MergeParams(
            K_fraction=self.K,
            T=self.T,
            max_layers=self.max_layers,
            inside_frac=self.inside_frac,
            outside_frac=self.outside_frac,
            min_object_points=self.min_object_points,
        )


_CONFIG_FIELDS = {f.name: f.type for f in dataclasses.fields(PipelineConfig)}


def load_config(args):
    """Materialize a PipelineConfig from defaults, config file, then flags."""
    cfg = PipelineConfig()
    path = getattr(args, "config", None)
    if path:
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: {exc}") from exc
        unknown = set(data) - set(_CONFIG_FIELDS)
        if unknown:
            raise FormatError(f"{path}: unknown config keys {sorted(unknown)}")
        for key, value in data.items():
            setattr(cfg, key, type(getattr(cfg, key))(value))
    for name in _CONFIG_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    return cfg


def _add_config_flags(parser, names):
    flags = {
        "voxel_size": dict(type=float),
        "seed_resolution": dict(type=float),
        "w_spatial": dict(type=float),
        "w_color": dict(type=float),
        "w_normal": dict(type=float),
        "normals_k": dict(type=int),
        "tau": dict(type=float),
        "depth_tol": dict(type=float),
        "min_track_frames": dict(type=int),
        "min_track_points": dict(type=int),
        "mutual": dict(action="store_true"),
        "K": dict(type=float),
        "T": dict(type=float),
        "max_layers": dict(type=int),
        "inside_frac": dict(type=float),
        "outside_frac": dict(type=float),
        "min_object_points": dict(type=int),
        "l2_normalize_features": dict(action="store_true"),
        "include_stalled": dict(action="store_true"),
        "drop_largest_planar": dict(type=int),
        "seed": dict(type=int),
    }
    for name in names:
        opts = dict(flags[name])
        opts["default"] = None
        opts["dest"] = name
        parser.add_argument("--" + name.replace("_", "-"), **opts)
    parser.add_argument("--config", default=None, help="JSON config file")


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


def priors_to_json(boxes, tracks):
    return [
        {
            "min": [float(v) for v in box.min_corner],
            "max": [float(v) for v in box.max_corner],
            "track_size": int(track.point_ids.size),
            "frame_span": len({fid for fid, _ in track.members}),
        }
        for box, track in zip(boxes, tracks)
    ]


def load_priors(path):
    with open(path) as fh:
        data = json.load(fh)
    return [PriorBox(np.asarray(e["min"]), np.asarray(e["max"])) for e in data]


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    with open(args.spec) as fh:
        spec = synth.SynthSpec.from_dict(json.load(fh))
    if args.seed is not None:
        spec.seed = args.seed
    cloud, gt, frames = synth.generate(spec)
    out = Path(args.out)
    scene_io.write_scene(out, cloud)
    scene_io.write_frames(out, frames)
    scene_io.write_instances(out / "ground_truth.txt", gt)
    log.info("wrote %d points, %d frames, %d gt instances to %s",
             cloud.n_points, len(frames), len(gt), out)
    return EXIT_OK


def cmd_superpoints(args):
    cfg = load_config(args)
    cloud = scene_io.load_scene(args.scene, normals_k=cfg.normals_k)
    parts = superpoints.build_superpoints(cloud, cfg.superpoint_params())
    write_json(args.out, [[int(i) for i in ids] for ids in parts])
    log.info("%d super-points over %d points", len(parts), cloud.n_points)
    return EXIT_OK


def cmd_priors(args):
    cfg = load_config(args)
    cloud = scene_io.load_scene(args.scene, normals_k=cfg.normals_k)
    frames = scene_io.load_frames(args.frames or args.scene)
    tracks = objectness.build_tracks(cloud, frames, cfg.match_params(), mutual=cfg.mutual)
    pos = cloud.positions.astype(np.float64)
    boxes = [PriorBox(pos[t.point_ids].min(axis=0), pos[t.point_ids].max(axis=0))
             for t in tracks]
    write_json(args.out, priors_to_json(boxes, tracks))
    log.info("%d prior boxes from %d frames", len(boxes), len(frames))
    return EXIT_OK


def cmd_cluster(args):
    cfg = load_config(args)
    cloud = scene_io.load_scene(args.scene, normals_k=cfg.normals_k)
    with open(args.superpoints) as fh:
        layer0 = [np.asarray(ids, dtype=np.int64) for ids in json.load(fh)]
    boxes = load_priors(args.priors) if args.priors else []
    h = hierarchy.run_hierarchy(
        layer0, cloud, boxes, cfg.merge_params(), l2_normalize=cfg.l2_normalize_features
    )
    write_json(args.out, hierarchy.hierarchy_to_dict(h))
    log.info("%d layers, terminal layer has %d clusters",
             len(h.layers), len(h.layers[-1]))
    return EXIT_OK


def cmd_extract(args):
    cfg = load_config(args)
    with open(args.hierarchy) as fh:
        h = hierarchy.hierarchy_from_dict(json.load(fh))
    objects = hierarchy.collect_objects(h, cfg.merge_params(),
                                        include_stalled=cfg.include_stalled)
    if cfg.drop_largest_planar > 0:
        if not args.scene:
            raise FormatError("--drop-largest-planar needs --scene for positions")
        cloud = scene_io.load_scene(args.scene, normals_k=cfg.normals_k)
        objects = hierarchy.drop_most_planar(objects, cloud, cfg.drop_largest_planar)
    parts = hierarchy.collect_parts(h, objects)
    scene_io.write_instances(args.objects, objects)
    scene_io.write_instances(args.parts, parts)
    log.info("%d objects, %d parts", len(objects), len(parts))
    return EXIT_OK


def cmd_eval(args):
    if len(args.pred) != len(args.gt):
        raise FormatError("--pred and --gt must be given the same number of times")
    pairs = []
    for pred_path, gt_path in zip(args.pred, args.gt):
        preds = scene_io.load_instances(pred_path)
        gt = scene_io.load_instances(gt_path)
        preds = scene_io.InstanceSet(
            [i for i in preds.instances if i.kind == args.kind]
        )
        gt = scene_io.InstanceSet([i for i in gt.instances if i.kind == args.kind])
        pairs.append((preds, gt))
    if len(pairs) == 1:
        report = evaluation.evaluate(*pairs[0])
    else:
        report = evaluation.evaluate_multi(pairs)
    write_json(args.out, report.to_dict())
    log.info("ap25=%.4f ap50=%.4f mean_ap=%.4f", report.ap25, report.ap50, report.mean_ap)
    return EXIT_OK


def _run_one_scene(scene_dir, out_dir, cfg, args):
    scene_dir = Path(scene_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def stage(name, fn):
        try:
            return fn()
        except Exception as exc:
            raise StageFailure(name, str(exc)) from exc

    cloud = stage("load", lambda: scene_io.load_scene(scene_dir, normals_k=cfg.normals_k))

    layer0 = stage(
        "superpoints",
        lambda: superpoints.build_superpoints(cloud, cfg.superpoint_params()),
    )
    write_json(out_dir / "superpoints.json", [[int(i) for i in ids] for ids in layer0])

    frames_dir = Path(args.frames) if args.frames else scene_dir
    has_frames = bool(list(frames_dir.glob("frame_*.cam")))
    if has_frames:
        frames = stage("priors", lambda: scene_io.load_frames(frames_dir))
        tracks = stage(
            "priors",
            lambda: objectness.build_tracks(cloud, frames, cfg.match_params(),
                                            mutual=cfg.mutual),
        )
        pos = cloud.positions.astype(np.float64)
        boxes = [PriorBox(pos[t.point_ids].min(axis=0), pos[t.point_ids].max(axis=0))
                 for t in tracks]
    elif args.require_priors:
        raise StageFailure("priors", f"no frames found in {frames_dir}")
    else:
        log.warning("no frames in %s; clustering without priors", frames_dir)
        tracks, boxes = [], []
    write_json(out_dir / "priors.json", priors_to_json(boxes, tracks))

    h = stage(
        "cluster",
        lambda: hierarchy.run_hierarchy(
            layer0, cloud, boxes, cfg.merge_params(),
            l2_normalize=cfg.l2_normalize_features,
        ),
    )
    write_json(out_dir / "hierarchy.json", hierarchy.hierarchy_to_dict(h))

    def extract():
        objects = hierarchy.collect_objects(h, cfg.merge_params(),
                                            include_stalled=cfg.include_stalled)
        if cfg.drop_largest_planar > 0:
            objects = hierarchy.drop_most_planar(objects, cloud, cfg.drop_largest_planar)
        parts = hierarchy.collect_parts(h, objects)
        return objects, parts

    objects, parts = stage("extract", extract)
    scene_io.write_instances(out_dir / "objects.txt", objects)
    scene_io.write_instances(out_dir / "parts.txt", parts)

    gt_path = Path(args.gt) if args.gt else scene_dir / "ground_truth.txt"
    if gt_path.exists():
        gt = stage("eval", lambda: scene_io.load_instances(gt_path))
        gt = scene_io.InstanceSet([i for i in gt.instances if i.kind == "object"])
        report = stage("eval", lambda: evaluation.evaluate(objects, gt))
        write_json(out_dir / "report.json", report.to_dict())
        return report, (objects, gt)
    return None, None


def cmd_run(args):
    cfg = load_config(args)
    scenes = [Path(s) for s in args.scene]
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    write_json(out_root / "effective_config.json", dataclasses.asdict(cfg))

    if len(scenes) == 1:
        report, _ = _run_one_scene(scenes[0], out_root, cfg, args)
        if report is not None:
            log.info("ap50=%.4f", report.ap50)
        return EXIT_OK

    jobs = max(1, args.jobs)
    results = [None] * len(scenes)

    # Unique output subdir per scene even when directory names collide.
    names, used = [], set()
    for scene in scenes:
        base = scene.name or "scene"
        name, k = base, 1
        while name in used:
            name = f"{base}_{k}"
            k += 1
        used.add(name)
        names.append(name)

    def work(k):
        results[k] = _run_one_scene(scenes[k], out_root / names[k], cfg, args)

    if jobs == 1:
        for k in range(len(scenes)):
            work(k)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, range(len(scenes))))

    pairs = [pair for _, pair in results if pair is not None]
    if pairs:
        pooled = evaluation.evaluate_multi(pairs)
        write_json(out_root / "report.json", pooled.to_dict())
        log.info("pooled ap50=%.4f over %d scenes", pooled.ap50, len(pairs))
    return EXIT_OK


def cmd_info(args):
    if args.json:
        print(json.dumps({"formats": scene_io.FORMAT_VERSIONS}, indent=2))
    else:
        print("on-disk format versions:")
        for name, version in scene_io.FORMAT_VERSIONS.items():
            print(f"  {name:<20} {version}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="p2o",
        description="Unsupervised 3D instance segmentation by prior-guided "
                    "hierarchical clustering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--spec", required=True, help="scene spec JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("superpoints", help="build layer-0 super-points")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p, ["voxel_size", "seed_resolution", "w_spatial", "w_color",
                          "w_normal", "normals_k"])
    p.set_defaults(fn=cmd_superpoints)

    p = sub.add_parser("priors", help="extract 3D objectness priors from frames")
    p.add_argument("--scene", required=True)
    p.add_argument("--frames", default=None, help="frames dir (default: scene dir)")
    p.add_argument("--out", required=True)
    _add_config_flags(p, ["tau", "depth_tol", "min_track_frames", "min_track_points",
                          "mutual", "normals_k"])
    p.set_defaults(fn=cmd_priors)

    p = sub.add_parser("cluster", help="run hierarchical clustering")
    p.add_argument("--scene", required=True)
    p.add_argument("--superpoints", required=True)
    p.add_argument("--priors", default=None)
    p.add_argument("--out", required=True)
    _add_config_flags(p, ["K", "T", "max_layers", "inside_frac", "outside_frac",
                          "min_object_points", "l2_normalize_features", "normals_k"])
    p.set_defaults(fn=cmd_cluster)

    p = sub.add_parser("extract", help="collect objects and parts from a hierarchy")
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--scene", default=None, help="needed for --drop-largest-planar")
    p.add_argument("--objects", required=True, help="output objects manifest")
    p.add_argument("--parts", required=True, help="output parts manifest")
    _add_config_flags(p, ["min_object_points", "include_stalled",
                          "drop_largest_planar", "normals_k"])
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", action="append", required=True)
    p.add_argument("--gt", action="append", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=scene_io.KINDS, default="object")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("run", help="full pipeline on one or more scenes")
    p.add_argument("--scene", action="append", required=True)
    p.add_argument("--frames", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--gt", default=None, help="ground truth manifest "
                   "(default: <scene>/ground_truth.txt if present)")
    p.add_argument("--require-priors", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p, list(_CONFIG_FIELDS))
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("info", help="print on-disk format versions")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_info)

    return parser


def main(argv=None):
    level = os.environ.get("P2O_LOG", "WARNING").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "WARNING"
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except StageFailure as exc:
        log.error("%s", exc)
        print(str(exc), file=sys.stderr)
        return EXIT_STAGE_FAILURE
    except (FileNotFoundError, FormatError, ValueError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
