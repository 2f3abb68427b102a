#!/usr/bin/env python3
"""Generate a synthetic test clip as a PNG frame directory.

The clip is a sharp periodic motif translating across the frame: detail sits
above the Nyquist limit of the downsampler, so classical upsampling cannot
recover it, while the periodicity keeps it learnable by a small model.

Example:
    python scripts/make_clip.py --output clips/tiled --frames 60 --size 64x64
"""

import argparse
from pathlib import Path

import numpy as np

from srcodec import VideoSequence, save_png_sequence


def tiled_video(n_frames, height, width, fps, seed, velocity, tile, block):
    vy, vx = velocity
    rng = np.random.default_rng(seed)
    motif = np.kron(rng.random((tile // block, tile // block, 3)).astype(np.float32),
                    np.ones((block, block, 1), np.float32))
    span_y = height + abs(vy) * n_frames + tile
    span_x = width + abs(vx) * n_frames + tile
    sheet = np.tile(motif, ((span_y + tile - 1) // tile,
                            (span_x + tile - 1) // tile, 1))
    frames = np.empty((n_frames, height, width, 3), dtype=np.float32)
    for j in range(n_frames):
        frames[j] = sheet[abs(vy) * j:abs(vy) * j + height,
                          abs(vx) * j:abs(vx) * j + width]
    return VideoSequence(frames, fps)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--output", required=True, help="directory for PNG frames")
    parser.add_argument("--frames", type=int, default=60)
    parser.add_argument("--size", default="64x64", help="WIDTHxHEIGHT")
    parser.add_argument("--fps", type=float, default=10.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--velocity", default="2,1", help="dy,dx pixels per frame")
    parser.add_argument("--tile", type=int, default=20, help="motif period in pixels")
    parser.add_argument("--block", type=int, default=2, help="detail scale in pixels")
    args = parser.parse_args()

    width, height = (int(v) for v in args.size.lower().split("x"))
    vy, vx = (int(v) for v in args.velocity.split(","))
    video = tiled_video(args.frames, height, width, args.fps, args.seed,
                        (vy, vx), args.tile, args.block)
    save_png_sequence(video, args.output)
    print(f"wrote {args.frames} frames ({width}x{height} @ {args.fps:g} fps) "
          f"to {Path(args.output).resolve()}")


if __name__ == "__main__":
    main()
