"""Command-line entry point: ``xray-fusion <subcommand> ...``.

Results go to stdout or files, diagnostics to stderr. Any failure exits with
status 1 (2 for bad usage) and a single JSON line ``{"error": ..., "message": ...}``
on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .completion import FusionConfig, run_pipeline
from .core import points_in_box_mask
from .distill import DistillationConfig, distillation_loss, project_channels
from .evaluation import evaluate_sequence
from .simulate import generate
from .tracking import greedy_track, track_instances_from_ids

ADDED_COLOR = (255, 60, 40)
ORIGINAL_COLOR = (200, 200, 200)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("usage", message, status=2)


def _fail(kind: str, message: str, status: int = 1):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    raise SystemExit(status)


def _factor(text: str) -> float:
    value = float(text)
    if math.isnan(value) or value < 0:
        raise argparse.ArgumentTypeError("subsample factor must be >= 0 or 'inf'")
    return value


def cmd_simulate(args) -> None:
    cfg = io.load_scene_config(args.config)
    seq, truth = generate(cfg)
    io.write_sequence(seq, args.out)
    io.write_truth(truth, args.out)
    print(json.dumps({"sequence": seq.name, "frames": len(seq.frames), "objects": len(truth.full_surfaces)}))


def cmd_track(args) -> None:
    seq = io.read_sequence(args.input)
    seq.check_time_order()
    tracks = greedy_track(seq) if args.mode == "greedy" else track_instances_from_ids(seq)
    io.write_tracks(tracks, args.out, seq.name)
    print(json.dumps({"tracks": len(tracks)}))


def cmd_fuse(args) -> None:
    seq = io.read_sequence(args.input)
    cfg = FusionConfig(strategy=args.strategy, subsample_factor=args.subsample_factor, seed=args.seed)
    tracks = io.read_tracks(args.tracks) if args.tracks else None
    fused, tracks, full = run_pipeline(seq, cfg, "greedy", tracks)
    io.write_sequence(fused, args.out)
    full["seed"] = args.seed
    Path(args.out, "fusion_report.json").write_text(json.dumps(full, indent=2, sort_keys=True) + "\n")
    print(json.dumps({"sequence": seq.name, "tracks": len(tracks), **full["totals"]}, sort_keys=True))


def cmd_eval(args) -> None:
    fused = io.read_sequence(args.fused)
    truth = io.read_truth(args.truth)
    tracks = io.read_tracks(args.tracks) if args.tracks else None
    report = evaluate_sequence(fused, truth, args.coverage_radius, tracks)
    Path(args.out).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    print("\n".join(report.summary_lines()))


def cmd_losses(args) -> None:
    t_cls, s_cls = io.read_tensor(args.teacher_cls), io.read_tensor(args.student_cls)
    t_reg, s_reg = io.read_tensor(args.teacher_reg), io.read_tensor(args.student_reg)
    t_feat, s_feat = io.read_tensor(args.teacher_feat), io.read_tensor(args.student_feat)
    if args.projection:
        weights = io.read_tensor(args.projection)
        bias = io.read_tensor(args.projection_bias) if args.projection_bias else None
        s_feat = project_channels(s_feat, weights, bias)
    cfg = DistillationConfig(args.alpha1, args.alpha2, args.lambda1, args.lambda2, args.lambda3, args.heads_pairing)
    out = distillation_loss(s_cls, t_cls, s_reg, t_reg, t_feat, s_feat, args.l_det, cfg)
    print(json.dumps(out.to_dict()))


def cmd_export_ply(args) -> None:
    seq = io.read_sequence(args.input)
    frames = {f.index: f for f in seq.frames}
    if args.frame not in frames:
        raise ValueError(f"frame {args.frame} not in sequence (0..{len(seq.frames) - 1})")
    frame = frames[args.frame]
    colors = np.tile(np.array(ORIGINAL_COLOR), (len(frame.cloud), 1))
    if args.highlight_added:
        if frame.original_count is None:
            raise ValueError("frame has no original_count; --highlight-added needs a fused sequence")
        colors[frame.original_count :] = ADDED_COLOR
    io.export_ply(frame.cloud, args.out, colors)
    in_boxes = np.zeros(len(frame.cloud), dtype=bool)
    for inst in frame.instances:
        in_boxes |= points_in_box_mask(inst.box, frame.cloud.xyz)
    print(json.dumps({"points": len(frame.cloud), "object_points": int(in_boxes.sum())}))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="xray-fusion", description="Object-complete LiDAR frames and distillation losses.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic sequence and its ground truth")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("track", help="link instances across frames")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--mode", choices=("greedy", "ids"), default="greedy")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("fuse", help="write object-complete frames")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--tracks")
    s.add_argument("--strategy", choices=("geometry", "icp"), default="geometry")
    s.add_argument("--subsample-factor", type=_factor, default=1.5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("eval", help="score fused frames against ground truth")
    s.add_argument("--fused", required=True)
    s.add_argument("--truth", required=True)
    s.add_argument("--coverage-radius", type=float, default=0.1)
    s.add_argument("--tracks")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("losses", help="evaluate the distillation loss on tensor files")
    for name in ("teacher-cls", "student-cls", "teacher-reg", "student-reg", "teacher-feat", "student-feat"):
        s.add_argument(f"--{name}", required=True)
    s.add_argument("--projection", help="C_t x C_s weights applied to the student features")
    s.add_argument("--projection-bias")
    s.add_argument("--l-det", type=float, required=True)
    s.add_argument("--alpha1", type=float, default=2.0)
    s.add_argument("--alpha2", type=float, default=1.0)
    s.add_argument("--lambda1", type=float, default=0.7)
    s.add_argument("--lambda2", type=float, default=0.3)
    s.add_argument("--lambda3", type=float, default=1.0)
    s.add_argument("--heads-pairing", choices=("expanded", "named"), default="expanded")
    s.set_defaults(func=cmd_losses)

    s = sub.add_parser("export-ply", help="write one frame as ASCII PLY")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--frame", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--highlight-added", action="store_true")
    s.set_defaults(func=cmd_export_ply)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except io.FormatError as exc:
        _fail("format", str(exc))
    except (ValueError, KeyError, TypeError) as exc:
        _fail("invalid", str(exc))
    except OSError as exc:
        _fail("io", f"{exc.strerror or exc}: {exc.filename}" if exc.filename else str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
