#!/usr/bin/env python3
"""Desk-scale rate-distortion demo: sweep quality x eta on a synthetic clip.

Produces rd.csv, cdf.csv, and (with matplotlib installed) rd.png under the
output directory. Runtime is a few minutes on a laptop CPU.

Example:
    python scripts/demo_sweep.py --output out/demo
"""

import argparse
from pathlib import Path

from make_clip import tiled_video

from srcodec import ModelConfig, SweepGrid, TrainingConfig, run_sweep
from srcodec.sweep import plot_rd_csv


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--output", required=True, help="output directory")
    parser.add_argument("--frames", type=int, default=40)
    parser.add_argument("--epochs", type=int, default=25)
    parser.add_argument("--pretrain-epochs", type=int, default=120)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    video = tiled_video(args.frames, 64, 64, fps=10.0, seed=args.seed,
                        velocity=(2, 1), tile=20, block=2)
    model = ModelConfig(feature_channels=8, patch_size=4, scale=4,
                        generator_width=32, regular_width=32)
    training = TrainingConfig(learning_rate=2e-3,
                              epochs_per_segment=args.epochs,
                              pretrain_epochs=args.pretrain_epochs,
                              seed=args.seed)
    grid = SweepGrid(quality_settings=(8, 16, 64), etas=(0.01, 0.05),
                     taus=(2.0,), feature_channels=(8,))
    points = run_sweep(video, grid, base_model=model, base_training=training,
                       codec_id="quant16", csv_path=out / "rd.csv",
                       cdf_csv_path=out / "cdf.csv", workers=args.workers)
    for p in points:
        label = f"{p.method:9s} q={p.quality} eta={p.eta} tau={p.tau_seconds}"
        if p.error:
            print(f"{label}: FAILED ({p.error})")
        else:
            print(f"{label}: bpp={p.bpp:.5f} psnr={p.psnr_db:.2f} ssim={p.ssim:.4f}")
    try:
        plot_rd_csv(out / "rd.csv", out / "rd.png")
        print(f"plots -> {out / 'rd.png'}")
    except ImportError:
        print("matplotlib not installed; skipping plots")


if __name__ == "__main__":
    main()
