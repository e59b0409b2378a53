"""``synthseg`` command line: generate, fuse, remap, stats, train, eval, predict, bench-pipe.

Every subcommand accepts ``--config FILE`` holding ``key=value`` lines whose
keys are option names (``-`` or ``_`` both accepted). Config values replace the
built-in defaults and explicit flags replace config values. The effective
configuration is echoed to stderr in the same ``key=value`` format, so any run
can be repeated from its echo.

Exit codes: 0 ok, 1 usage or invalid configuration, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("synthseg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ------------------------------------------------------------ value types

def _pair(kind):
    def parse(text: str):
        parts = text.split(",")
        if len(parts) != 2:
            raise argparse.ArgumentTypeError(f"expected 'lo,hi', got '{text}'")
        try:
            return kind(parts[0]), kind(parts[1])
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected two numbers, got '{text}'") from None
    return parse


def _names(text: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got '{text}'")


# ------------------------------------------------------------ parser

def _pipe_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--queue-limit", dest="queue_limit", type=int, default=4)
    p.add_argument("--buffer-limit", dest="buffer_limit", type=int, default=2)
    p.add_argument("--poll-interval-s", dest="poll_interval_s", type=float, default=0.01)
    p.add_argument("--sample-size", dest="sample_size", type=int, default=8192)
    p.add_argument("--modality", default="RGB-D", choices=["RGB-D", "D", "rgb-d", "d"])
    p.add_argument("--wait-mode", dest="wait_mode", default="event", choices=["event", "sleep"])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="synthseg", description="Synthetic point cloud segmentation pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=Path, default=None, help="key=value defaults file")
        return p

    g = command("generate", "generate a synthetic dataset or run a scenario script")
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--scenes", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--vehicles", type=_pair(int), default=(40, 80))
    g.add_argument("--pedestrians", type=_pair(int), default=(10, 30))
    g.add_argument("--town-extent", dest="town_extent", type=float, default=120.0)
    g.add_argument("--building-density", dest="building_density", type=_pair(float), default=(0.5, 0.9))
    g.add_argument("--vegetation-density", dest="vegetation_density", type=_pair(float),
                   default=(0.3, 0.7))
    g.add_argument("--script", type=Path, default=None, help="scenario script (replaces --scenes)")
    g.add_argument("--crop-to-camera", dest="crop_to_camera", type=_bool, default=True)

    f = command("fuse", "back-project each frame's depth image and fuse semantic/color labels")
    f.add_argument("--manifest", type=Path, required=True)
    f.add_argument("--out", type=Path, required=True)
    f.add_argument("--stride", type=int, default=1, help="use every n-th pixel row and column")

    r = command("remap", "translate point labels into another taxonomy")
    r.add_argument("--manifest", type=Path, required=True)
    r.add_argument("--source", required=True, help="taxonomy name or taxonomy file")
    r.add_argument("--target", required=True, help="taxonomy name or taxonomy file")
    r.add_argument("--table", type=Path, default=None, help="remap table file for custom taxonomies")
    r.add_argument("--out", type=Path, required=True)

    s = command("stats", "print the per-class point histogram")
    s.add_argument("--manifest", type=Path, required=True)

    t = command("train", "train the point-wise classifier")
    t.add_argument("--train", type=Path, required=True, help="training manifest")
    t.add_argument("--val", type=Path, default=None, help="validation manifest (else split --train)")
    t.add_argument("--train-fraction", dest="train_fraction", type=float, default=0.8)
    t.add_argument("--split-seed", dest="split_seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=50)
    t.add_argument("--steps-per-epoch", dest="steps_per_epoch", type=int, default=0,
                   help="0 means one batch per training frame")
    t.add_argument("--hidden", type=int, default=64)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--learning-rate", dest="learning_rate", type=float, default=0.001)
    t.add_argument("--lr-decay", dest="lr_decay", type=float, default=0.7)
    t.add_argument("--decay-interval", dest="decay_interval", type=int, default=10)
    t.add_argument("--class-weighting", dest="class_weighting", type=_bool, default=True)
    t.add_argument("--classes", type=_names, default=None, help="scored classes, comma-separated")
    t.add_argument("--model-out", dest="model_out", type=Path, required=True)
    t.add_argument("--log-out", dest="log_out", type=Path, default=None)
    _pipe_options(t)

    e = command("eval", "score a model on a manifest")
    e.add_argument("--model", type=Path, required=True)
    e.add_argument("--manifest", type=Path, required=True)
    e.add_argument("--classes", type=_names, default=None, help="scored classes, comma-separated")
    e.add_argument("--csv", type=Path, default=None, help="also write class,iou lines here")

    p = command("predict", "label a PLY file with a trained model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--paint", type=_bool, default=True, help="color points by predicted class")

    b = command("bench-pipe", "compare prefetched and synchronous batch throughput")
    b.add_argument("--manifest", type=Path, required=True)
    b.add_argument("--batches", type=int, default=200)
    b.add_argument("--latency-ms", dest="latency_ms", type=float, default=5.0)
    b.add_argument("--seed", type=int, default=0)
    _pipe_options(b)
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def read_config_file(path: Path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(sub: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, text in values.items():
        action = actions.get(key)
        if action is None:
            raise UsageError(f"config key '{key}': unknown option")
        if text in ("", "None") and action.default is None:
            defaults[key] = None
            continue
        try:
            value = action.type(text) if action.type else text
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"config key '{key}': {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key '{key}': '{value}' not in {list(action.choices)}")
        defaults[key] = value
        action.required = False
    sub.set_defaults(**defaults)


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    command = next((a for a in argv if a in COMMANDS), None)
    config = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            config = Path(argv[i + 1])
        elif a.startswith("--config="):
            config = Path(a.split("=", 1)[1])
    if command is not None and config is not None:
        if not config.is_file():
            raise UsageError(f"config file {config} not found")
        _apply_config(_subparser(parser, command), read_config_file(config))
    return parser.parse_args(argv)


def _fmt(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return "" if value is None else str(value)


def echo_config(args: argparse.Namespace) -> None:
    print(f"# synthseg {args.command}", file=sys.stderr)
    for key, value in sorted(vars(args).items()):
        if key in ("command", "config", "verbose"):
            continue
        print(f"{key}={_fmt(value)}", file=sys.stderr)


def _positive(args, *names) -> None:
    for name in names:
        if getattr(args, name) is not None and not getattr(args, name) > 0:
            raise UsageError(f"config key '{name}': must be > 0")


def _nonnegative(args, *names) -> None:
    for name in names:
        if getattr(args, name) < 0:
            raise UsageError(f"config key '{name}': must be >= 0")


def _pipe_config(args, latency: float = 0.0):
    from synthseg.batchpipe import PipeConfig
    try:
        return PipeConfig(queue_limit=args.queue_limit, buffer_limit=args.buffer_limit,
                          poll_interval=args.poll_interval_s, sample_size=args.sample_size,
                          modality=args.modality, rng_seed=getattr(args, "seed", 0),
                          wait_mode=args.wait_mode, load_latency=latency)
    except ValueError as exc:
        raise UsageError(f"pipe configuration: {exc}") from None


def validate(args: argparse.Namespace) -> None:
    """Check option values before any work starts."""
    cmd = args.command
    if cmd == "generate":
        _positive(args, "scenes", "town_extent")
        for key in ("vehicles", "pedestrians", "building_density", "vegetation_density"):
            lo, hi = getattr(args, key)
            if lo < 0 or lo > hi:
                raise UsageError(f"config key '{key}': need 0 <= lo <= hi")
        for key in ("building_density", "vegetation_density"):
            if getattr(args, key)[1] > 1:
                raise UsageError(f"config key '{key}': densities lie in [0, 1]")
    elif cmd == "fuse":
        _positive(args, "stride")
    elif cmd == "train":
        if not 0 < args.train_fraction < 1:
            raise UsageError("config key 'train_fraction': must lie in (0, 1)")
        _nonnegative(args, "epochs", "steps_per_epoch")
        _positive(args, "hidden", "learning_rate", "lr_decay", "decay_interval")
        _pipe_config(args)
    elif cmd == "bench-pipe":
        _positive(args, "batches")
        _nonnegative(args, "latency_ms")
        _pipe_config(args)


# ------------------------------------------------------------ commands

def _manifest(path: Path):
    from synthseg.manifest import read_manifest
    return read_manifest(path)


def cmd_generate(args) -> int:
    from synthseg.synthworld import DatasetConfig, generate_dataset, generate_scene
    from synthseg.synthworld.dataset import write_scenario_dataset
    from synthseg.synthworld.scenario import parse_script, run_scenario

    config = DatasetConfig(seed=args.seed, vehicle_range=args.vehicles,
                           pedestrian_range=args.pedestrians, town_extent=args.town_extent,
                           building_density_range=args.building_density,
                           vegetation_density_range=args.vegetation_density,
                           crop_to_camera=args.crop_to_camera)
    if args.script is not None:
        script = parse_script(args.script.read_text())
        base = generate_scene(replace(config.scene_config(0), vehicle_count=0, pedestrian_count=0))
        frames = run_scenario(script, base)
        manifest = write_scenario_dataset(frames, script.ego.rig, args.out,
                                          crop_to_camera=args.crop_to_camera)
    else:
        manifest = generate_dataset(config, args.scenes, args.out)
    print(f"wrote {len(manifest)} frames to {args.out}")
    return EXIT_OK


def cmd_fuse(args) -> int:
    import numpy as np

    from synthseg.fusion import backproject, fuse
    from synthseg.io import write_ply
    from synthseg.manifest import DatasetManifest, ManifestEntry, write_manifest
    from synthseg.pcdcore import CameraIntrinsics, DepthImage, Pose
    from synthseg.synthworld.dataset import SENSORS_NAME, load_frame_images, read_rig
    from synthseg.taxonomy import get_taxonomy

    manifest = _manifest(args.manifest)
    rig_dir = args.manifest.parent
    if (rig_dir / SENSORS_NAME).is_file():
        rig = read_rig(rig_dir)
        intr, cam_pose = rig.camera, rig.camera_in_lidar
    else:
        intr, cam_pose = None, Pose.identity()
    args.out.mkdir(parents=True, exist_ok=True)
    entries = []
    for entry in manifest:
        tax = get_taxonomy(entry.taxonomy)
        depth, sem, color = load_frame_images(manifest, entry, tax)
        frame_intr = intr or CameraIntrinsics.from_fov(depth.width, depth.height)
        d = depth.depths
        if args.stride > 1:
            keep = np.zeros_like(d, dtype=bool)
            keep[::args.stride, ::args.stride] = True
            d = np.where(keep, d, 0.0)
        cloud = backproject(DepthImage(d), frame_intr, cam_pose)
        fused = fuse(cloud, sem, color, frame_intr, cam_pose).with_(taxonomy=tax)
        name = f"{entry.frame_id}.fused.ply"
        write_ply(fused, args.out / name)
        entries.append(ManifestEntry(entry.frame_id, name, "-", "-", "-", len(fused), tax.name))
    write_manifest(DatasetManifest(tuple(entries), args.out), args.out / "manifest.tsv")
    print(f"fused {len(entries)} frames into {args.out}")
    return EXIT_OK


def cmd_remap(args) -> int:
    from synthseg.io import read_ply, write_ply
    from synthseg.manifest import DatasetManifest, write_manifest
    from synthseg.taxonomy import RemapTable, get_remap, get_taxonomy, remap_cloud

    source, target = get_taxonomy(args.source), get_taxonomy(args.target)
    if args.table is not None:
        table = RemapTable.from_text(source, target, args.table.read_text())
    else:
        table = get_remap(source, target)
    manifest = _manifest(args.manifest)
    args.out.mkdir(parents=True, exist_ok=True)
    entries = []
    for entry in manifest:
        cloud = read_ply(manifest.resolve(entry.ply), {source.name: source})
        out = remap_cloud(cloud.with_(taxonomy=source), table)
        name = Path(entry.ply).name
        write_ply(out, args.out / name)
        entries.append(replace(entry, ply=name, depth="-", semantic="-", color="-",
                               taxonomy=target.name))
    write_manifest(DatasetManifest(tuple(entries), args.out), args.out / "manifest.tsv")
    print(f"remapped {len(entries)} frames {source.name} -> {target.name} into {args.out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    from synthseg.io import read_ply
    from synthseg.taxonomy import get_taxonomy, histogram

    manifest = _manifest(args.manifest)
    names = {e.taxonomy for e in manifest}
    if len(names) != 1:
        raise ValueError(f"manifest mixes taxonomies: {sorted(names)}")
    tax = get_taxonomy(names.pop())
    clouds = (read_ply(manifest.resolve(e.ply), {tax.name: tax}).with_(taxonomy=tax)
              for e in manifest)
    hist = histogram(clouds, tax)
    print(hist.format_table())
    print(f"total {hist.total} points in {len(manifest)} frames")
    return EXIT_OK


def cmd_train(args) -> int:
    from synthseg.model import TrainConfig, save_checkpoint, train
    from synthseg.sampler import SplitSpec, split_manifest

    manifest = _manifest(args.train)
    if args.val is not None:
        train_m, val_m = manifest, _manifest(args.val)
    else:
        train_m, val_m = split_manifest(manifest, SplitSpec(args.train_fraction, args.split_seed))
    config = TrainConfig(modality=args.modality, max_epochs=args.epochs,
                         steps_per_epoch=args.steps_per_epoch or None, hidden=args.hidden,
                         seed=args.seed, sample_size=args.sample_size,
                         learning_rate=args.learning_rate, lr_decay=args.lr_decay,
                         decay_interval=args.decay_interval, class_weighting=args.class_weighting,
                         scored_classes=args.classes, pipe=_pipe_config(args))
    result = train(train_m, val_m if len(val_m) else None, config, args.log_out)
    save_checkpoint(result.model, args.model_out)
    sys.stdout.write(result.log_csv())
    note = " (validation mIoU saturated)" if result.stopped_early else ""
    print(f"trained {len(result.log)} epochs{note}; model written to {args.model_out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from synthseg.io import atomic_write
    from synthseg.model import evaluate, load_checkpoint

    model = load_checkpoint(args.model)
    report = evaluate(model, _manifest(args.manifest), args.classes)
    print(report.format_table())
    if args.csv is not None:
        atomic_write(args.csv, report.to_csv().encode())
    return EXIT_OK


def cmd_predict(args) -> int:
    from synthseg.io import read_ply, write_ply
    from synthseg.model import load_checkpoint, predict_cloud
    from synthseg.taxonomy import paint_by_label

    model = load_checkpoint(args.model)
    cloud = read_ply(args.input)
    out = predict_cloud(model, cloud)
    if args.paint:
        out = paint_by_label(out)
    write_ply(out, args.output)
    print(f"labeled {len(out)} points into {args.output}")
    return EXIT_OK


def cmd_bench_pipe(args) -> int:
    from synthseg.batchpipe import benchmark

    config = _pipe_config(args, args.latency_ms / 1000.0)
    result = benchmark(_manifest(args.manifest), config, args.batches)
    print(f"synchronous  {result.sync_throughput:10.2f} batches/s")
    print(f"prefetched   {result.prefetch_throughput:10.2f} batches/s")
    print(f"speedup      {result.speedup:10.2f}x")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate, "fuse": cmd_fuse, "remap": cmd_remap, "stats": cmd_stats,
    "train": cmd_train, "eval": cmd_eval, "predict": cmd_predict, "bench-pipe": cmd_bench_pipe,
}


def _data_errors() -> tuple:
    from synthseg.batchpipe import PipeError
    from synthseg.io import EncodingRangeError, FormatError
    from synthseg.manifest import ManifestError
    from synthseg.metrics import MetricsError
    from synthseg.model import ModelError
    from synthseg.pcdcore import GeometryError
    from synthseg.sampler import SamplingError
    from synthseg.synthworld.dataset import DatasetError
    from synthseg.synthworld.scenario import ScriptError
    from synthseg.synthworld.scene import SceneError
    from synthseg.taxonomy import TaxonomyError
    return (OSError, FormatError, EncodingRangeError, ManifestError, MetricsError, ModelError,
            GeometryError, SamplingError, DatasetError, ScriptError, SceneError, TaxonomyError,
            PipeError, ValueError)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        validate(args)
    except UsageError as exc:
        print(f"synthseg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    echo_config(args)
    try:
        return COMMANDS[args.command](args)
    except _data_errors() as exc:
        print(f"synthseg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        print(f"synthseg: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
