"""Rate-distortion sweep harness, CSV emission, and the inference benchmark.

For every grid cell (quality x eta x tau x feature channels) three methods are
measured: the adaptive codec, its one-shot variant (single whole-video model,
no updates), and the bicubic baseline (content stream only, classical
upsampling). Rows are emitted in grid order x method order, so a fixed grid
and seed always produce the identical CSV.
"""

from __future__ import annotations

import csv
import itertools
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .codecs import content_decode, content_encode
from .frames import VideoSequence, downsample_video
from .metrics import bicubic_upsample_video, evaluate_quality
from .model import ModelConfig, forward, init_params
from .pipeline import EncodeJob, bits_per_pixel, decode, encode
from .training import TrainingConfig

METHODS = ("adaptive", "oneshot", "bicubic")

CSV_COLUMNS = ("method", "eta", "tau_ms", "quality", "F", "bpp",
               "psnr_db", "ssim", "error")
CDF_COLUMNS = ("method", "frame_index", "psnr_db", "ssim")


@dataclass(frozen=True)
class SweepGrid:
    """Axes of the rate-distortion sweep."""

    quality_settings: tuple
    etas: tuple[float, ...]
    taus: tuple[float, ...]
    feature_channels: tuple[int, ...]

    def __post_init__(self):
        for name in ("quality_settings", "etas", "taus", "feature_channels"):
            value = tuple(getattr(self, name))
            if not value:
                raise ValueError(f"sweep axis {name} must be non-empty")
            object.__setattr__(self, name, value)

    def cells(self) -> list[tuple]:
        return list(itertools.product(self.quality_settings, self.etas,
                                      self.taus, self.feature_channels))


@dataclass
class RDPoint:
    """One (bpp, PSNR, SSIM) measurement and where it came from."""

    method: str
    quality: float | None
    eta: float | None
    tau_seconds: float | None
    feature_channels: int | None
    bpp: float
    psnr_db: float
    ssim: float
    content_bytes: int
    model_bytes: int
    per_frame_psnr: list[float]
    per_frame_ssim: list[float]
    error: str = ""

    def csv_row(self) -> list:
        tau_ms = ""
        if self.tau_seconds is not None and math.isfinite(self.tau_seconds):
            tau_ms = int(round(self.tau_seconds * 1000))
        return [self.method,
                "" if self.eta is None else self.eta,
                tau_ms,
                "" if self.quality is None else self.quality,
                "" if self.feature_channels is None else self.feature_channels,
                f"{self.bpp:.8f}" if self.error == "" else "",
                f"{self.psnr_db:.4f}" if self.error == "" else "",
                f"{self.ssim:.6f}" if self.error == "" else "",
                self.error]


def _failed_point(method, quality, eta, tau, channels, error) -> RDPoint:
    return RDPoint(method=method, quality=quality, eta=eta, tau_seconds=tau,
                   feature_channels=channels, bpp=float("nan"),
                   psnr_db=float("nan"), ssim=float("nan"), content_bytes=0,
                   model_bytes=0, per_frame_psnr=[], per_frame_ssim=[],
                   error=str(error))


def _codec_point(source: VideoSequence, encoded, method, quality, eta, tau,
                 channels) -> RDPoint:
    decoded = decode(encoded)
    report = evaluate_quality(source.frames, decoded.frames)
    content_bytes = encoded.content.byte_count
    model_bytes = len(encoded.model_stream)
    bpp = bits_per_pixel(8 * content_bytes, 8 * model_bytes, source.n_frames,
                         encoded.manifest.hr_h, encoded.manifest.hr_w)
    return RDPoint(method=method, quality=quality, eta=eta, tau_seconds=tau,
                   feature_channels=channels, bpp=bpp,
                   psnr_db=report.aggregate_psnr, ssim=report.mean_ssim,
                   content_bytes=content_bytes, model_bytes=model_bytes,
                   per_frame_psnr=report.per_frame_psnr,
                   per_frame_ssim=report.per_frame_ssim)


def _evaluate_cell(source: VideoSequence, quality, eta: float, tau: float,
                   channels: int, base_model: ModelConfig,
                   base_training: TrainingConfig, codec_id: str) -> list[RDPoint]:
    model_cfg = replace(base_model, feature_channels=channels)
    points = []

    training = replace(base_training, update_fraction=eta)
    try:
        job = EncodeJob(source=source, model=model_cfg, training=training,
                        tau_seconds=tau, codec_id=codec_id, quality=quality)
        points.append(_codec_point(source, encode(job), "adaptive",
                                   quality, eta, tau, channels))
    except Exception as exc:  # recorded per cell, sweep continues
        points.append(_failed_point("adaptive", quality, eta, tau, channels, exc))

    try:
        job = EncodeJob(source=source, model=model_cfg, training=base_training,
                        tau_seconds=math.inf, codec_id=codec_id, quality=quality)
        points.append(_codec_point(source, encode(job), "oneshot",
                                   quality, None, None, channels))
    except Exception as exc:
        points.append(_failed_point("oneshot", quality, None, None, channels, exc))

    try:
        lr_video = downsample_video(source, model_cfg.scale)
        content = content_encode(lr_video, codec_id, quality)
        upsampled = bicubic_upsample_video(content_decode(content),
                                           (source.height, source.width))
        report = evaluate_quality(source.frames, upsampled.frames)
        bpp = bits_per_pixel(8 * content.byte_count, 0, source.n_frames,
                             source.height, source.width)
        points.append(RDPoint(method="bicubic", quality=quality, eta=None,
                              tau_seconds=None, feature_channels=None, bpp=bpp,
                              psnr_db=report.aggregate_psnr,
                              ssim=report.mean_ssim,
                              content_bytes=content.byte_count, model_bytes=0,
                              per_frame_psnr=report.per_frame_psnr,
                              per_frame_ssim=report.per_frame_ssim))
    except Exception as exc:
        points.append(_failed_point("bicubic", quality, None, None, None, exc))

    return points


def run_sweep(source: VideoSequence, grid: SweepGrid,
              base_model: ModelConfig = ModelConfig(),
              base_training: TrainingConfig = TrainingConfig(),
              codec_id: str = "lossless",
              csv_path: str | Path | None = None,
              cdf_csv_path: str | Path | None = None,
              workers: int = 1) -> list[RDPoint]:
    """Measure every grid cell with all three methods, in deterministic order.

    The optional per-frame CDF CSV is produced from the first grid cell only.
    """
    cells = grid.cells()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_evaluate_cell, source, q, eta, tau, ch,
                                   base_model, base_training, codec_id)
                       for q, eta, tau, ch in cells]
            per_cell = [f.result() for f in futures]
    else:
        per_cell = [_evaluate_cell(source, q, eta, tau, ch, base_model,
                                   base_training, codec_id)
                    for q, eta, tau, ch in cells]
    points = [p for cell_points in per_cell for p in cell_points]

    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for p in points:
                writer.writerow(p.csv_row())
    if cdf_csv_path is not None:
        with open(cdf_csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CDF_COLUMNS)
            for p in per_cell[0]:
                for i, (pf_psnr, pf_ssim) in enumerate(
                        zip(p.per_frame_psnr, p.per_frame_ssim)):
                    writer.writerow([p.method, i, f"{pf_psnr:.4f}",
                                     f"{pf_ssim:.6f}"])
    return points


def benchmark_inference(config: ModelConfig, frame_dims: tuple[int, int],
                        repetitions: int = 30, warmup: int = 3,
                        seed: int = 0) -> float:
    """Median wall-clock milliseconds per forward call. Informational only:
    the number depends entirely on the host."""
    if repetitions < 10:
        raise ValueError(f"need at least 10 repetitions, got {repetitions}")
    rng = np.random.default_rng(seed)
    frame = rng.random((frame_dims[0], frame_dims[1], 3)).astype(np.float32)
    params = init_params(config, seed)
    for _ in range(warmup):
        forward(frame, params, config)
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter()
        forward(frame, params, config)
        samples.append((time.perf_counter() - start) * 1000.0)
    return float(statistics.median(samples))


def plot_rd_csv(csv_path: str | Path, out_path: str | Path) -> None:
    """Render PSNR/SSIM-vs-bpp curves from a sweep CSV (needs matplotlib)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = []
    with open(csv_path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["error"] or not row["bpp"]:
                continue
            rows.append(row)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for method in METHODS:
        pts = sorted(((float(r["bpp"]), float(r["psnr_db"]), float(r["ssim"]))
                      for r in rows if r["method"] == method))
        if not pts:
            continue
        bpp = [p[0] for p in pts]
        axes[0].plot(bpp, [p[1] for p in pts], marker="o", label=method)
        axes[1].plot(bpp, [p[2] for p in pts], marker="o", label=method)
    axes[0].set_xlabel("bits per pixel")
    axes[0].set_ylabel("PSNR (dB)")
    axes[1].set_xlabel("bits per pixel")
    axes[1].set_ylabel("SSIM")
    for ax in axes:
        ax.grid(True, alpha=0.4)
        ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
