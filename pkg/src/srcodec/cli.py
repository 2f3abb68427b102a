"""Command-line entry points for encoding, decoding, evaluation, and sweeps.

Exit codes: 0 success, 2 invalid arguments, 3 content-codec failure,
4 training failure, 5 model-stream corruption. stdout carries human-readable
text only; machine-readable results go to files.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from .codecs import ExternalCodec, register_codec, registered_codecs
from .errors import CodecError, StreamDecodeError, StreamFormatError, TrainingError
from .frames import (
    VideoSequence,
    load_png_sequence,
    read_raw_video,
    save_png_sequence,
)
from .metrics import evaluate_quality
from .model import ModelConfig
from .pipeline import (
    MANIFEST_FILE,
    MODEL_FILE,
    EncodeJob,
    bits_per_pixel,
    decode,
    encode,
    load_encoded,
    save_encoded,
)
from .stream import inspect_stream
from .sweep import SweepGrid, benchmark_inference, plot_rd_csv, run_sweep
from .training import TrainingConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CODEC = 3
EXIT_TRAINING = 4
EXIT_STREAM = 5


def _parse_tau(text: str) -> float:
    if text.strip().lower() in ("inf", "infinity", "oneshot"):
        return math.inf
    return float(text)


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def load_video_input(path: str | Path, fps: float) -> VideoSequence:
    """A video from a PNG directory, a .raw file with sidecar, or an encoded dir."""
    path = Path(path)
    if path.is_dir():
        if (path / MANIFEST_FILE).exists():
            return decode(load_encoded(path))
        return load_png_sequence(path, fps)
    if path.suffix == ".raw":
        return read_raw_video(path)
    raise ValueError(f"cannot load video from {path}: expected a PNG directory, "
                     f"a .raw file with sidecar, or an encoded directory")


def _model_config(args) -> ModelConfig:
    return ModelConfig(feature_channels=args.feature_channels,
                       patch_size=args.patch, scale=args.scale,
                       generator_width=args.generator_width,
                       regular_width=args.regular_width)


def _training_config(args, eta: float | None = None) -> TrainingConfig:
    return TrainingConfig(learning_rate=args.lr,
                          update_fraction=args.eta if eta is None else eta,
                          epochs_per_segment=args.epochs,
                          crop=not args.no_crop, seed=args.seed,
                          pretrain_epochs=args.pretrain_epochs)


def _register_external(args) -> None:
    if args.encode_cmd or args.decode_cmd:
        if not (args.encode_cmd and args.decode_cmd):
            raise ValueError("--encode-cmd and --decode-cmd must be given together")
        register_codec("external", ExternalCodec(args.encode_cmd, args.decode_cmd))


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--feature-channels", "-F", type=int, default=32,
                        help="adaptive block output channels (default 32)")
    parser.add_argument("--patch", "-P", type=int, default=5,
                        help="patch side in pixels (default 5)")
    parser.add_argument("--scale", "-k", type=int, default=4,
                        help="integer upscale factor (default 4)")
    parser.add_argument("--generator-width", type=int, default=256,
                        help="kernel-generator hidden width (default 256)")
    parser.add_argument("--regular-width", type=int, default=128,
                        help="regular block hidden width (default 128)")


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--eta", type=float, default=0.01,
                        help="fraction of parameters updated per segment")
    parser.add_argument("--lr", type=float, default=1e-4, help="Adam learning rate")
    parser.add_argument("--epochs", type=int, default=16,
                        help="training epochs per segment (default 16)")
    parser.add_argument("--pretrain-epochs", type=int, default=None,
                        help="epochs for the initial whole-video pass "
                             "(default: same as --epochs)")
    parser.add_argument("--no-crop", action="store_true",
                        help="train on full frames instead of half-size crops")


def _add_codec_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--codec", default="lossless",
                        help=f"content codec id (registered: {registered_codecs()})")
    parser.add_argument("--quality", type=float, default=None,
                        help="codec quality setting (codec-specific)")
    parser.add_argument("--encode-cmd", default=None,
                        help="external encoder command template; registers the "
                             "'external' codec")
    parser.add_argument("--decode-cmd", default=None,
                        help="external decoder command template")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srcodec",
        description="Super-resolution video codec: encode a clip as a "
                    "low-resolution content stream plus a sparse model stream.")
    parser.add_argument("--config", default=None, metavar="FILE",
                        help="key=value file of default flag values "
                             "(explicit flags take precedence)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode a video into an output directory")
    p.add_argument("--input", required=True, help="PNG directory or .raw file")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--fps", type=float, default=30.0,
                   help="frame rate for PNG-directory inputs (default 30)")
    p.add_argument("--tau", type=_parse_tau, default=5.0,
                   help="model update interval in seconds, or 'inf' for one-shot")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint", default=None,
                   help="resumable encoder checkpoint file")
    p.add_argument("--train-report", default=None, metavar="CSV",
                   help="write per-segment training telemetry to a CSV file")
    _add_model_flags(p)
    _add_training_flags(p)
    _add_codec_flags(p)

    p = sub.add_parser("decode", help="decode an encoded directory to PNG frames")
    p.add_argument("--input", required=True, help="encoded directory")
    p.add_argument("--output", required=True, help="directory for decoded frames")
    p.add_argument("--frames", default=None, metavar="A:B",
                   help="decode only frames [A, B)")
    p.add_argument("--encode-cmd", default=None, help=argparse.SUPPRESS)
    p.add_argument("--decode-cmd", default=None,
                   help="external decoder command template (for 'external' streams)")

    p = sub.add_parser("eval", help="quality metrics of a test video vs a reference")
    p.add_argument("--reference", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--out", default=None, metavar="CSV",
                   help="write per-frame PSNR/SSIM rows to a CSV file")
    p.add_argument("--encode-cmd", default=None, help=argparse.SUPPRESS)
    p.add_argument("--decode-cmd", default=None, help=argparse.SUPPRESS)

    p = sub.add_parser("sweep", help="rate-distortion sweep over a parameter grid")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, metavar="CSV")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--qualities", type=_float_list, default=[16.0],
                   help="comma-separated codec quality settings")
    p.add_argument("--etas", type=_float_list, default=[0.01])
    p.add_argument("--taus", type=_float_list, default=[5.0])
    p.add_argument("--feature-channel-list", type=_int_list, default=[32],
                   metavar="F1,F2,...")
    p.add_argument("--cdf", default=None, metavar="CSV",
                   help="write the first cell's per-frame CDF CSV")
    p.add_argument("--plot", default=None, metavar="PNG",
                   help="render rate-distortion curves (needs matplotlib)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    _add_model_flags(p)
    _add_training_flags(p)
    _add_codec_flags(p)

    p = sub.add_parser("inspect", help="print model-stream header and update stats")
    p.add_argument("--input", required=True,
                   help="model stream file or encoded directory")

    p = sub.add_parser("bench", help="median forward-pass latency (informational)")
    p.add_argument("--height", type=int, default=120)
    p.add_argument("--width", type=int, default=160)
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    _add_model_flags(p)

    return parser


def _apply_config_file(argv: list[str]) -> list[str]:
    """Splice key=value file entries in as flags right after the subcommand."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        return argv  # argparse will report the missing value
    path = Path(argv[i + 1])
    rest = argv[:i] + argv[i + 2:]
    tokens: list[str] = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        flag = "--" + key.strip().replace("_", "-")
        value = value.strip()
        if value.lower() == "true":
            tokens.append(flag)
        else:
            tokens.extend([flag, value])
    for pos, token in enumerate(rest):
        if not token.startswith("-"):
            return rest[:pos + 1] + tokens + rest[pos + 1:]
    return rest + tokens


def cmd_encode(args) -> int:
    _register_external(args)
    source = load_video_input(args.input, args.fps)
    job = EncodeJob(source=source, model=_model_config(args),
                    training=_training_config(args), tau_seconds=args.tau,
                    codec_id=args.codec, quality=args.quality)
    encoded = encode(job, checkpoint=args.checkpoint)
    save_encoded(encoded, args.output)
    content_bits = 8 * encoded.content.byte_count
    model_bits = 8 * len(encoded.model_stream)
    bpp = bits_per_pixel(content_bits, model_bits, source.n_frames,
                         encoded.manifest.hr_h, encoded.manifest.hr_w)
    print(f"encoded {source.n_frames} frames "
          f"({source.width}x{source.height} @ {source.fps:g} fps) -> {args.output}")
    print(f"content stream: {encoded.content.byte_count} bytes")
    print(f"model stream:   {len(encoded.model_stream)} bytes "
          f"({len(encoded.report.segment_reports)} update records)")
    print(f"combined rate:  {bpp:.6f} bits/pixel")
    if args.train_report:
        import csv as _csv
        with open(args.train_report, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["segment_index", "loss_before", "loss_after",
                             "selected_count", "epochs_run"])
            for i, r in enumerate(encoded.report.segment_reports, start=1):
                writer.writerow([i, f"{r.loss_before:.8e}", f"{r.loss_after:.8e}",
                                 r.selected_count, r.epochs_run])
    return EXIT_OK


def _parse_frame_range(text: str | None, total: int) -> tuple[int, int]:
    if text is None:
        return 0, total
    first, _, last = text.partition(":")
    start = int(first) if first else 0
    end = int(last) if last else total
    if not 0 <= start < end <= total:
        raise ValueError(f"frame range {text!r} is invalid for {total} frames")
    return start, end


def cmd_decode(args) -> int:
    _register_external(args)
    encoded = load_encoded(args.input)
    video = decode(encoded)
    start, end = _parse_frame_range(args.frames, video.n_frames)
    save_png_sequence(video.segment(start, end), args.output)
    print(f"decoded frames [{start}, {end}) of {video.n_frames} -> {args.output}")
    return EXIT_OK


def cmd_eval(args) -> int:
    reference = load_video_input(args.reference, args.fps)
    test = load_video_input(args.test, args.fps)
    report = evaluate_quality(reference.frames, test.frames)
    print(f"aggregate PSNR: {report.aggregate_psnr:.4f} dB")
    print(f"mean SSIM:      {report.mean_ssim:.6f}")
    if args.out:
        import csv as _csv
        with open(args.out, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["frame_index", "psnr_db", "ssim"])
            for i, (p, s) in enumerate(zip(report.per_frame_psnr,
                                           report.per_frame_ssim)):
                writer.writerow([i, f"{p:.4f}", f"{s:.6f}"])
    return EXIT_OK


def cmd_sweep(args) -> int:
    _register_external(args)
    source = load_video_input(args.input, args.fps)
    grid = SweepGrid(quality_settings=tuple(args.qualities),
                     etas=tuple(args.etas), taus=tuple(args.taus),
                     feature_channels=tuple(args.feature_channel_list))
    points = run_sweep(source, grid, base_model=_model_config(args),
                       base_training=_training_config(args),
                       codec_id=args.codec, csv_path=args.output,
                       cdf_csv_path=args.cdf, workers=args.workers)
    failures = sum(1 for p in points if p.error)
    print(f"swept {len(grid.cells())} cells -> {len(points)} rows "
          f"({failures} failures) -> {args.output}")
    if args.plot:
        plot_rd_csv(args.output, args.plot)
        print(f"plots -> {args.plot}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = Path(args.input)
    if path.is_dir():
        path = path / MODEL_FILE
    print(inspect_stream(path.read_bytes()))
    return EXIT_OK


def cmd_bench(args) -> int:
    ms = benchmark_inference(_model_config(args), (args.height, args.width),
                             repetitions=args.reps, seed=args.seed)
    print(f"median forward latency at {args.width}x{args.height}: {ms:.2f} ms/frame")
    return EXIT_OK


_COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "inspect": cmd_inspect,
    "bench": cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(argv)
    except OSError as exc:
        parser.exit(EXIT_USAGE, f"cannot read config file: {exc}\n")
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (StreamFormatError, StreamDecodeError) as exc:
        print(f"error: corrupt model stream: {exc}", file=sys.stderr)
        return EXIT_STREAM
    except CodecError as exc:
        print(f"error: content codec failed: {exc}", file=sys.stderr)
        return EXIT_CODEC
    except TrainingError as exc:
        print(f"error: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
