"""Command-line surface: synth / train / eval / gradcheck / bench / profile.

Every command reads an optional flat key-value config file (``key = value``
per line, dotted keys, ``#`` comments) overridable with repeated
``--set key=value`` flags; a handful of common flags override both.
Machine-readable outputs land in a run directory under ``$STAR_RUN_ROOT``
(default ``./runs``); a human summary goes to stdout.  The config key set
is documented in docs/formats.md.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, fields

from . import bench as bench_mod
from .data import (load_manifest_clips, synth_dataset, write_manifest,
                   write_ntu_skeleton)
from .errors import StarError
from .gradcheck import run_gradcheck
from .graph import load_skeleton, ntu25_graph
from .model import (StarConfig, StarModel, format_param_table, init_model,
                    load_checkpoint, preset, toy_batch)
from .temporal import KernelSpec
from .train import TrainConfig, evaluate, run_training

RUN_ROOT_ENV = "STAR_RUN_ROOT"

_MODEL_KEYS = {
    "d_model": int, "num_layers": int, "num_heads": int, "ffn_hidden": int,
    "mlp_hidden": int, "num_classes": int, "dropout": float, "max_hops": int,
    "spatial_variant": str, "segment_per": str, "final_norm": bool, "seed": int,
}
_KERNEL_KEYS = {"kind": str, "num_features": int, "feature_map": str,
                "constant": float, "seed": int}
_TRAIN_KEYS = {
    "max_epochs": int, "batch_clips": int, "beta1": float, "beta2": float,
    "eps": float, "warmup_steps": int, "seed": int, "eval_every": int,
    "grad_clip": float,
}
_DATA_KEYS = {"classes": int, "clips_per_class": int, "len_min": int,
              "len_max": int, "noise_sigma": float, "seed": int,
              "manifest": str}
_PROFILE_KEYS = {"frames": int, "segments": int, "warmup": int, "iters": int}


def _run_root() -> str:
    return os.environ.get(RUN_ROOT_ENV, "runs")


def load_config_file(path) -> dict[str, str]:
    """Flat dotted-key config: `key = value` lines, '#' comments."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise StarError(f"{path}:{lineno}: expected 'key = value'")
            values[key.strip()] = value.strip()
    return values


def _coerce(key: str, raw: str, kind):
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise StarError(f"config key {key}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError:
        raise StarError(f"config key {key}: cannot parse {raw!r} as "
                        f"{kind.__name__}") from None


def _collect_config(args) -> dict[str, str]:
    values: dict[str, str] = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for item in getattr(args, "set", None) or []:
        key, eq, value = item.partition("=")
        if not eq:
            raise StarError(f"--set {item!r}: expected key=value")
        values[key.strip()] = value.strip()
    known = {f"model.{k}" for k in _MODEL_KEYS}
    known |= {f"model.kernel.{k}" for k in _KERNEL_KEYS}
    known |= {f"train.{k}" for k in _TRAIN_KEYS}
    known |= {f"data.{k}" for k in _DATA_KEYS}
    known |= {f"profile.{k}" for k in _PROFILE_KEYS}
    for key in values:
        if key not in known:
            raise StarError(f"unknown config key {key!r}")
    return values


def _section(values: dict[str, str], prefix: str, casts: dict) -> dict:
    out = {}
    for key, raw in values.items():
        if key.startswith(prefix):
            name = key[len(prefix):]
            if name in casts:
                out[name] = _coerce(key, raw, casts[name])
    return out


def _model_config(args, values: dict[str, str]) -> StarConfig:
    base = preset(args.preset) if getattr(args, "preset", None) else StarConfig()
    kwargs = {f.name: getattr(base, f.name) for f in fields(StarConfig)}
    kernel_kwargs = _section(values, "model.kernel.", _KERNEL_KEYS)
    if kernel_kwargs:
        kwargs["kernel"] = KernelSpec(**kernel_kwargs)
    kwargs.update(_section(values, "model.", _MODEL_KEYS))
    return StarConfig(**kwargs)


def _build_model(args, values: dict[str, str]) -> StarModel:
    cfg = _model_config(args, values)
    graph = (load_skeleton(args.skeleton) if getattr(args, "skeleton", None)
             else ntu25_graph())
    return init_model(cfg, graph)


def _pick(flag_value, values: dict[str, str], key: str, kind, default):
    """Flag beats config beats default."""
    if flag_value is not None:
        return flag_value
    if key in values:
        return _coerce(key, values[key], kind)
    return default


# ---------------------------------------------------------------------------
# commands

def _cmd_synth(args) -> int:
    values = _collect_config(args)
    out_dir = args.out or os.path.join(_run_root(), "synth")
    os.makedirs(out_dir, exist_ok=True)
    classes = _pick(args.classes, values, "data.classes", int, 3)
    clips_per_class = _pick(args.clips, values, "data.clips_per_class", int, 10)
    clips = synth_dataset(
        classes=classes,
        clips_per_class=clips_per_class,
        len_range=(_pick(args.len_min, values, "data.len_min", int, 20),
                   _pick(args.len_max, values, "data.len_max", int, 60)),
        noise_sigma=_pick(args.noise, values, "data.noise_sigma", float, 0.01),
        seed=_pick(args.seed, values, "data.seed", int, 0))
    entries = []
    for i, clip in enumerate(clips):
        path = os.path.join(out_dir, f"clip{i:04d}A{clip.label + 1:03d}.skeleton")
        write_ntu_skeleton(clip, path)
        entries.append((path, clip.label))
    manifest = os.path.join(out_dir, "manifest.txt")
    write_manifest(entries, manifest)
    print(f"wrote {len(clips)} clips ({classes} classes) to {out_dir}")
    print(f"manifest: {manifest}")
    return 0


def _cmd_train(args) -> int:
    values = _collect_config(args)
    if args.epochs is not None:
        values["train.max_epochs"] = str(args.epochs)
    model = _build_model(args, values)
    train_cfg = TrainConfig(**_section(values, "train.", _TRAIN_KEYS))
    data = args.data or values.get("data.manifest")
    if not data:
        raise StarError("train needs --data or config key data.manifest")
    clips = load_manifest_clips(data)
    run_dir = args.out or os.path.join(_run_root(), "train")
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump({"model": asdict(model.config), "train": asdict(train_cfg),
                   "data": data}, fh, indent=2)
    log = None if args.quiet else print
    rows = run_training(model, clips, train_cfg, run_dir, log=log)
    print(f"final train loss {rows[-1]['train_loss']:.4f}  "
          f"acc {rows[-1]['eval_acc']:.3f}  run dir {run_dir}")
    return 0


def _cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    clips = load_manifest_clips(args.data)
    result = evaluate(model, clips, batch_clips=args.batch_clips)
    out = {"top1_accuracy": result.top1, "loss": result.loss,
           "confusion": result.confusion.tolist()}
    print(json.dumps(out, indent=2))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=2)
    return 0


def _cmd_gradcheck(args) -> int:
    values = _collect_config(args)
    cfg = _model_config(args, values)
    report = run_gradcheck(cfg, seed=args.seed or 0, step=args.step)
    print(report.format_table())
    print(f"max relative error {report.worst:.3e} over "
          f"{report.checked} parameters: {'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def _cmd_bench(args) -> int:
    out_dir = args.out or os.path.join(_run_root(), "bench")
    os.makedirs(out_dir, exist_ok=True)
    if args.kernels:
        rows = bench_mod.bench_kernels(warmup=args.warmup, iters=args.iters)
        path = os.path.join(out_dir, "kernels.csv")
        bench_mod.write_kernel_csv(rows, path)
        for row in rows:
            print(f"{row['kernel']:<18}{row['backend']:<8}"
                  f"{row['rows']:>8} rows  {row['wall_us']:>10.1f} us")
        print(f"csv: {path}")
        return 0
    lengths = [int(s) for s in args.sweep.split(",")]
    model = init_model(preset("star64", num_heads=2, num_layers=1))
    points = bench_mod.bench_attention(lengths, model=model,
                                       num_segments=args.segments,
                                       warmup=args.warmup, iters=args.iters,
                                       parallel=args.parallel)
    path = os.path.join(out_dir, "attention.csv")
    bench_mod.write_bench_csv(points, path)
    for p in points:
        print(f"{p.variant:<18}N={p.n_frames:<6}core={p.core_macs:<12}"
              f"{p.wall_ms:>9.2f} ms")
    sparse = [p for p in points if p.variant == "sparse-spatial"]
    dense = [p for p in points if p.variant == "dense-spatial"]
    if sparse and dense:
        ratio = sum(p.core_macs for p in sparse) / sum(p.core_macs for p in dense)
        print(f"sparse/dense attention MAC ratio {ratio:.4f} "
              f"(published ablation: 15.58 vs 73.33 GMACs, ratio 0.2125)")
    print(f"csv: {path}")
    return 0


def _cmd_profile(args) -> int:
    values = _collect_config(args)
    model = _build_model(args, values)
    frames = _pick(args.frames, values, "profile.frames", int, 300)
    segments = _pick(args.persons, values, "profile.segments", int, 2)
    batch = toy_batch(model, num_frames=frames, num_segments=segments,
                      seed=args.seed or 0)
    report, prof = bench_mod.profile_model(model, batch)
    print(prof.format_table())
    print()
    print(format_param_table(model))
    out_dir = args.out or os.path.join(_run_root(), "profile")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "profile.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2)
    print(f"json: {path}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="star",
        description="sparse spatial + segmented linear temporal attention "
                    "over skeleton clips")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_preset=True):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one config key (repeatable)")
        if with_preset:
            p.add_argument("--preset", choices=["tiny", "star64", "star128"],
                           help="model preset")
        p.add_argument("--skeleton", help="topology file (default: bundled 25-joint)")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("synth", help="emit a synthetic labelled dataset")
    common(p, with_preset=False)
    p.add_argument("--out", help="output directory")
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--clips", type=int, default=None, help="clips per class")
    p.add_argument("--len-min", type=int, default=None)
    p.add_argument("--len-max", type=int, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train on a manifest dataset")
    common(p)
    p.add_argument("--data", help="manifest file")
    p.add_argument("--out", help="run directory")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--batch-clips", type=int, default=16)
    p.add_argument("--out", help="write metrics JSON here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    common(p)
    p.add_argument("--step", type=float, default=1e-5,
                   help="central-difference step")
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("bench", help="attention / kernel-backend benchmarks")
    p.add_argument("--sweep", default="64,128,256,512",
                   help="comma-separated clip lengths")
    p.add_argument("--segments", type=int, default=1)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--kernels", action="store_true",
                   help="compare numba vs numpy kernel backends instead")
    p.add_argument("--parallel", action="store_true",
                   help="run sweep points concurrently (timings indicative)")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("profile", help="per-op MAC/latency/param breakdown")
    common(p)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--persons", type=int, default=None,
                   help="segments in the profiled clip")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=_cmd_profile)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command == "gradcheck" and not args.preset:
        args.preset = "tiny"
    try:
        return args.func(args)
    except (StarError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
