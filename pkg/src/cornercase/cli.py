"""Command-line entry points.

Subcommands:
  score      offline corner-case scoring of a frame directory
  stream     online scoring, one causally final CSV row per frame
  synth      render a synthetic scenario to frames/masks/events
  eval-pred  frame-prediction quality metrics (MSE/PSNR/SSIM)
  eval-seg   segmentation quality (per-class IoU) for two mask directories

Options resolve as: built-in defaults, then the --config file, then
explicit flags.  All outputs land in the --out directory.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import detector, prediction, segmentation, synth
from .imaging import BlurConfig, FrameDir, save_frame
from .metrics import confusion_matrix, iou
from .segmentation import MaskDir, class_name

SCORE_HEADER = ["frame_index", "raw_score", "normalized_score", "warmup_flag", "event_id"]
EVENT_HEADER = ["event_id", "start_frame", "end_frame", "peak_frame", "peak_score"]

BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}

# Option name -> (type coercion, default) for everything the config file may set.
RUN_OPTIONS = {
    "frames": (str, None),
    "masks": (str, None),
    "out": (str, None),
    "threshold": (float, 0.5),
    "patch_size": (int, 32),
    "blur_size": (int, 10),
    "blur_sigma": (float, 2.0),
    "no_blur": (bool, False),
    "predictor": (str, "linear"),
    "window_n": (int, 2),
    "mode": (str, "offline"),
    "workers": (int, 1),
    "heatmaps": (bool, False),
    "plot": (bool, False),
    "id_convention": (str, "paper"),
    "external": (str, None),
    "patch_norm": (str, "per_patch"),
}


def _coerce(key: str, value: str):
    kind, _ = RUN_OPTIONS[key]
    if kind is bool:
        word = value.strip().lower()
        if word not in BOOL_WORDS:
            raise ValueError(f"config key {key!r} wants a boolean, got {value!r}")
        return BOOL_WORDS[word]
    return kind(value)


def read_config(path) -> dict:
    """Flat 'key = value' file; '#' starts a comment."""
    options = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw_line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in RUN_OPTIONS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        options[key] = _coerce(key, value)
    return options


def resolve_options(args: argparse.Namespace) -> dict:
    """Defaults, overridden by the config file, overridden by explicit flags."""
    merged = {key: default for key, (_, default) in RUN_OPTIONS.items()}
    if getattr(args, "config", None):
        merged.update(read_config(args.config))
    for key in RUN_OPTIONS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return merged


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _build_detector_config(opts: dict) -> detector.DetectorConfig:
    return detector.DetectorConfig(
        blur=BlurConfig(kernel_size=opts["blur_size"], sigma=opts["blur_sigma"]),
        apply_blur=not opts["no_blur"],
        predictor=opts["predictor"],
        window=opts["window_n"],
        external_dir=opts["external"],
        mode=opts["mode"],
        threshold=opts["threshold"],
        patch_size=opts["patch_size"],
        patch_norm=opts["patch_norm"],
    )


def _open_sources(opts: dict):
    if not opts["frames"]:
        raise ValueError("no frames directory given (flag --frames or config key 'frames')")
    if not opts["masks"]:
        raise ValueError("no masks directory given (flag --masks or config key 'masks')")
    cache = max(4, opts["window_n"] + 2)
    frames = FrameDir(opts["frames"], force_grayscale=True, cache_size=cache)
    masks = MaskDir(opts["masks"], id_convention=opts["id_convention"], cache_size=2)
    return frames, masks


def _out_dir(opts: dict) -> Path:
    if not opts["out"]:
        raise ValueError("no output directory given (flag --out or config key 'out')")
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_heatmaps(out: Path, frame_indices, grids, height, width, patch_size):
    heat_dir = out / "heatmaps"
    heat_dir.mkdir(exist_ok=True)
    for index, grid in zip(frame_indices, grids):
        img = detector.patch_heatmap(grid, height, width, patch_size)
        save_frame(img, heat_dir / f"{index:06d}.png")


def _write_plot(out: Path, series: detector.ScoreSeries, threshold: float):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = series.frame_indices
    fig, (ax_score, ax_mse) = plt.subplots(2, 1, sharex=True, figsize=(10, 6))
    ax_score.plot(t, series.normalized, "r-", label="corner-case score")
    ax_score.axhline(threshold, color="k", linestyle=":", linewidth=1, label="threshold")
    ax_score.set_ylabel("normalized score")
    ax_score.set_ylim(-0.05, 1.05)
    ax_score.legend(loc="upper left")
    ax_mse.plot(t, series.mse_unblurred, "b--", label="MSE, unblurred")
    ax_mse.plot(t, series.mse_blurred, "g-", label="MSE, blurred")
    ax_mse.set_ylabel("prediction MSE")
    ax_mse.set_xlabel("frame")
    ax_mse.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig(out / "plot.png", dpi=120)
    plt.close(fig)


def cmd_score(args: argparse.Namespace) -> int:
    opts = resolve_options(args)
    frames, masks = _open_sources(opts)
    config = _build_detector_config(opts)
    series = detector.run_detector(
        frames, masks, config, workers=opts["workers"], collect_mse=opts["plot"]
    )
    events = detector.threshold_events(series, opts["threshold"])
    event_of = {}
    for event in events:
        for pos, index in enumerate(series.frame_indices):
            if event.start_frame <= index <= event.end_frame:
                event_of[index] = event.event_id

    out = _out_dir(opts)
    with open(out / "scores.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORE_HEADER)
        for pos, index in enumerate(series.frame_indices):
            writer.writerow(
                [
                    index,
                    _fmt(float(series.raw[pos])),
                    _fmt(float(series.normalized[pos])),
                    int(series.warmup[pos]),
                    event_of.get(index, ""),
                ]
            )
    with open(out / "events.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENT_HEADER)
        for event in events:
            writer.writerow(
                [event.event_id, event.start_frame, event.end_frame,
                 event.peak_frame, _fmt(event.peak_score)]
            )
    if opts["heatmaps"]:
        height, width = frames.load_at(0).shape[:2]
        _write_heatmaps(out, series.frame_indices, series.patch_norm,
                        height, width, opts["patch_size"])
    if opts["plot"]:
        _write_plot(out, series, opts["threshold"])
    print(f"scored {len(series.frame_indices)} frames, {len(events)} event(s) -> {out}")
    return 0


def cmd_stream(args: argparse.Namespace) -> int:
    opts = resolve_options(args)
    frames, masks = _open_sources(opts)
    config = _build_detector_config(opts)
    out = _out_dir(opts)
    height, width = frames.load_at(0).shape[:2]
    heat_dir = None
    if opts["heatmaps"]:
        heat_dir = out / "heatmaps"
        heat_dir.mkdir(exist_ok=True)
    count = 0
    in_event = False
    event_id = 0
    with open(out / "scores.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORE_HEADER)
        fh.flush()
        for record in detector.stream_detector(frames, masks, config):
            if record.normalized >= opts["threshold"]:
                if not in_event:
                    event_id += 1
                    in_event = True
                current = event_id
            else:
                in_event = False
                current = ""
            writer.writerow(
                [record.frame_index, _fmt(record.raw), _fmt(record.normalized),
                 int(record.warmup), current]
            )
            fh.flush()
            if heat_dir is not None:
                img = detector.patch_heatmap(record.patch_norm, height, width,
                                             opts["patch_size"])
                save_frame(img, heat_dir / f"{record.frame_index:06d}.png")
            count += 1
    print(f"streamed {count} frames -> {out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    spec = synth.load_scenario(args.spec)
    frames, masks, events = synth.generate_scenario(spec)
    out = Path(args.out)
    frames_dir = out / "frames"
    masks_dir = out / "masks"
    frames_dir.mkdir(parents=True, exist_ok=True)
    masks_dir.mkdir(parents=True, exist_ok=True)
    for t, (frame, mask) in enumerate(zip(frames, masks), start=1):
        save_frame(frame, frames_dir / f"{t:06d}.png")
        segmentation.save_mask(mask, masks_dir / f"{t:06d}.png", id_convention="paper")
    with open(out / "events.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_start", "frame_end", "class_id", "base_row"])
        for event in events:
            writer.writerow([event.start_frame, event.end_frame, event.class_id, event.base_row])
    print(f"rendered {len(frames)} frames, {len(events)} scripted event(s) -> {out}")
    return 0


def cmd_eval_pred(args: argparse.Namespace) -> int:
    opts = resolve_options(args)
    if not opts["frames"]:
        raise ValueError("no frames directory given (flag --frames or config key 'frames')")
    frames = FrameDir(opts["frames"], force_grayscale=True,
                      cache_size=max(4, opts["window_n"] + 2))
    report = prediction.evaluate_predictor(
        frames, opts["predictor"], n=opts["window_n"], external_dir=opts["external"]
    )
    out = _out_dir(opts)
    with open(out / "pred_metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame_index", "mse", "psnr", "ssim"])
        for row in report.rows:
            writer.writerow([row.frame_index, _fmt(row.mse), _fmt(row.psnr), _fmt(row.ssim)])
        writer.writerow(["mean", _fmt(report.mean_mse), _fmt(report.mean_psnr),
                         _fmt(report.mean_ssim)])
        writer.writerow(["psnr_of_mean_mse", "", _fmt(report.psnr_of_mean_mse), ""])
    print(
        f"evaluated {len(report.rows)} frames: mean MSE {report.mean_mse:.2f}, "
        f"mean PSNR {report.mean_psnr:.2f} dB, PSNR of mean MSE "
        f"{report.psnr_of_mean_mse:.2f} dB, mean SSIM {report.mean_ssim:.3f}"
    )
    return 0


def cmd_eval_seg(args: argparse.Namespace) -> int:
    opts = resolve_options(args)
    pred_dir = MaskDir(args.pred, id_convention=opts["id_convention"], cache_size=2)
    truth_dir = MaskDir(args.truth, id_convention=opts["id_convention"], cache_size=2)
    pred_pos = {index: pos for pos, index in enumerate(pred_dir.frame_indices)}
    total = None
    for pos, index in enumerate(truth_dir.frame_indices):
        if index not in pred_pos:
            raise ValueError(f"missing predicted mask for frame index {index}")
        truth = truth_dir.load_at(pos)
        pred = pred_dir.load_at(pred_pos[index])
        if pred.shape != truth.shape:
            raise ValueError(f"mask shape mismatch at frame index {index}")
        matrix = confusion_matrix(pred, truth)
        total = matrix if total is None else total + matrix
    result = iou(total)
    out = _out_dir(opts)
    with open(out / "seg_metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "class_name", "iou"])
        for label in sorted(result.per_class):
            writer.writerow([label, class_name(label), _fmt(result.per_class[label])])
        writer.writerow(["mean", "", _fmt(result.mean)])
        writer.writerow(["frame_wise", "", _fmt(result.frame_wise)])
    print(
        f"evaluated {len(truth_dir)} mask pairs: mean IoU {result.mean:.4f}, "
        f"frame-wise IoU {result.frame_wise:.4f}"
    )
    return 0


def _add_run_flags(parser: argparse.ArgumentParser, with_masks: bool = True):
    parser.add_argument("--frames", help="directory of numbered frame images")
    if with_masks:
        parser.add_argument("--masks", help="directory of numbered mask images")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--config", help="flat key = value config file; flags win")
    parser.add_argument("--threshold", type=float, help="event threshold in (0, 1)")
    parser.add_argument("--patch-size", dest="patch_size", type=int,
                        help="heatmap tile size in pixels")
    parser.add_argument("--blur-size", dest="blur_size", type=int,
                        help="Gaussian pre-blur kernel size")
    parser.add_argument("--blur-sigma", dest="blur_sigma", type=float,
                        help="Gaussian pre-blur sigma")
    parser.add_argument("--no-blur", dest="no_blur", action="store_true", default=None,
                        help="difference raw images instead of blurred ones")
    parser.add_argument("--predictor", choices=prediction.PREDICTOR_KINDS,
                        help="frame predictor")
    parser.add_argument("--window-n", dest="window_n", type=int,
                        help="prediction window length (warm-up length)")
    parser.add_argument("--external", help="directory of external predictions")
    parser.add_argument("--mode", choices=detector.NORMALIZATION_MODES,
                        help="normalization set: whole run or causal")
    parser.add_argument("--workers", type=int, help="scoring worker threads")
    parser.add_argument("--heatmaps", action="store_true", default=None,
                        help="write per-frame patch heatmap PNGs")
    parser.add_argument("--plot", action="store_true", default=None,
                        help="write a score/MSE overview plot")
    parser.add_argument("--id-convention", dest="id_convention",
                        choices=segmentation.ID_CONVENTIONS,
                        help="label convention of mask files")
    parser.add_argument("--patch-norm", dest="patch_norm",
                        choices=detector.PATCH_NORM_SCOPES,
                        help="normalize heatmap tiles per position or globally")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cornercase",
        description="Corner-case scoring for front-camera driving video.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser("score", help="offline scoring of a recorded sequence")
    _add_run_flags(p_score)
    p_score.set_defaults(func=cmd_score)

    p_stream = sub.add_parser("stream", help="online scoring, causally final rows")
    _add_run_flags(p_stream)
    p_stream.set_defaults(func=cmd_stream)

    p_synth = sub.add_parser("synth", help="render a synthetic scenario")
    p_synth.add_argument("--spec", required=True, help="scenario spec file")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.set_defaults(func=cmd_synth)

    p_pred = sub.add_parser("eval-pred", help="prediction quality metrics")
    _add_run_flags(p_pred, with_masks=False)
    p_pred.set_defaults(func=cmd_eval_pred)

    p_seg = sub.add_parser("eval-seg", help="segmentation IoU for two mask directories")
    p_seg.add_argument("--pred", required=True, help="predicted masks directory")
    p_seg.add_argument("--truth", required=True, help="ground-truth masks directory")
    p_seg.add_argument("--out", help="output directory")
    p_seg.add_argument("--config", help="flat key = value config file; flags win")
    p_seg.add_argument("--id-convention", dest="id_convention",
                       choices=segmentation.ID_CONVENTIONS,
                       help="label convention of both mask directories")
    p_seg.set_defaults(func=cmd_eval_seg)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
