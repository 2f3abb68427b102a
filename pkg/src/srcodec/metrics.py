"""Quality metrics and the classical bicubic upsampling baseline.

PSNR is reported two ways: an aggregate computed from the mean squared error
pooled over every pixel of every frame, and a per-frame list. Zero error is
reported as a 99 dB sentinel so CSV outputs stay numeric. SSIM follows the
original convention (11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03) on
unit-range data, computed per channel over the valid interior and averaged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .frames import VideoSequence

PSNR_CAP_DB = 99.0

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _as_frame_stack(video) -> np.ndarray:
    frames = video.frames if isinstance(video, VideoSequence) else np.asarray(video)
    if frames.ndim == 3:
        frames = frames[None]
    if frames.ndim != 4:
        raise ValueError(f"expected frames shaped (n, h, w, c), got {frames.shape}")
    return frames.astype(np.float64)


def _mse_to_db(mse: float) -> float:
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP_DB)


def psnr(reference, test) -> tuple[float, list[float]]:
    """(aggregate dB over pooled MSE, per-frame dB list) on unit-range video."""
    ref = _as_frame_stack(reference)
    out = _as_frame_stack(test)
    if ref.shape != out.shape:
        raise ValueError(f"shape mismatch: reference {ref.shape} vs test {out.shape}")
    err2 = (ref - out) ** 2
    per_frame = [_mse_to_db(float(e.mean())) for e in err2]
    return _mse_to_db(float(err2.mean())), per_frame


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _windowed_mean(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    half = kernel.size // 2
    smoothed = correlate1d(correlate1d(plane, kernel, axis=0, mode="nearest"),
                           kernel, axis=1, mode="nearest")
    return smoothed[half:plane.shape[0] - half, half:plane.shape[1] - half]


def ssim(reference: np.ndarray, test: np.ndarray) -> float:
    """Structural similarity of two frames, averaged over the RGB channels."""
    ref = np.asarray(reference, dtype=np.float64)
    out = np.asarray(test, dtype=np.float64)
    if ref.shape != out.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {out.shape}")
    if ref.ndim == 2:
        ref = ref[:, :, None]
        out = out[:, :, None]
    h, w = ref.shape[:2]
    if h < _SSIM_WINDOW or w < _SSIM_WINDOW:
        raise ValueError(f"frame {h}x{w} smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} window")
    kernel = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)
    c1 = _SSIM_K1 ** 2
    c2 = _SSIM_K2 ** 2
    scores = []
    for c in range(ref.shape[2]):
        x = ref[:, :, c]
        y = out[:, :, c]
        mu_x = _windowed_mean(x, kernel)
        mu_y = _windowed_mean(y, kernel)
        var_x = _windowed_mean(x * x, kernel) - mu_x ** 2
        var_y = _windowed_mean(y * y, kernel) - mu_y ** 2
        cov = _windowed_mean(x * y, kernel) - mu_x * mu_y
        s = (((2 * mu_x * mu_y + c1) * (2 * cov + c2))
             / ((mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)))
        scores.append(float(s.mean()))
    return float(np.mean(scores))


def ssim_video(reference, test) -> tuple[float, list[float]]:
    """(mean SSIM over frames, per-frame SSIM list)."""
    ref = _as_frame_stack(reference)
    out = _as_frame_stack(test)
    if ref.shape != out.shape:
        raise ValueError(f"shape mismatch: reference {ref.shape} vs test {out.shape}")
    per_frame = [ssim(r, t) for r, t in zip(ref, out)]
    return float(np.mean(per_frame)), per_frame


@dataclass(frozen=True)
class QualityReport:
    """Pooled-MSE PSNR, mean SSIM, and the per-frame breakdowns."""

    aggregate_psnr: float
    mean_ssim: float
    per_frame_psnr: list[float]
    per_frame_ssim: list[float]


def evaluate_quality(reference, test) -> QualityReport:
    aggregate, per_psnr = psnr(reference, test)
    mean_s, per_s = ssim_video(reference, test)
    return QualityReport(aggregate_psnr=aggregate, mean_ssim=mean_s,
                         per_frame_psnr=per_psnr, per_frame_ssim=per_s)


# ---------------------------------------------------------------------------
# Catmull-Rom bicubic resampling (a = -0.5), half-pixel-centre mapping,
# edge-clamped taps.
# ---------------------------------------------------------------------------

def _cubic_kernel(t: np.ndarray) -> np.ndarray:
    t = np.abs(t)
    t2 = t * t
    t3 = t2 * t
    near = 1.5 * t3 - 2.5 * t2 + 1.0
    far = -0.5 * t3 + 2.5 * t2 - 4.0 * t + 2.0
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


def _axis_weights(n_src: int, n_dst: int) -> np.ndarray:
    """(n_dst, n_src) row-stochastic resampling matrix for one axis."""
    centres = (np.arange(n_dst, dtype=np.float64) + 0.5) * (n_src / n_dst) - 0.5
    base = np.floor(centres).astype(np.int64)
    weights = np.zeros((n_dst, n_src), dtype=np.float64)
    for tap in (-1, 0, 1, 2):
        src = base + tap
        w = _cubic_kernel(centres - src)
        np.add.at(weights, (np.arange(n_dst), np.clip(src, 0, n_src - 1)), w)
    return weights


def bicubic_resize(frame: np.ndarray, target_dims: tuple[int, int]) -> np.ndarray:
    """Resize a frame to (height, width) with the Catmull-Rom kernel."""
    frame = np.asarray(frame)
    th, tw = target_dims
    if th < 1 or tw < 1:
        raise ValueError(f"target dims must be positive, got {target_dims}")
    squeeze = frame.ndim == 2
    if squeeze:
        frame = frame[:, :, None]
    wy = _axis_weights(frame.shape[0], th)
    wx = _axis_weights(frame.shape[1], tw)
    tmp = np.tensordot(wy, frame.astype(np.float64), axes=(1, 0))   # (th, w, c)
    out = np.tensordot(tmp, wx, axes=(1, 1)).transpose(0, 2, 1)      # (th, tw, c)
    out = np.clip(out, 0.0, 1.0).astype(np.float32)
    return out[:, :, 0] if squeeze else out


def bicubic_upsample(frame: np.ndarray, target_dims: tuple[int, int]) -> np.ndarray:
    """Bicubic upsampling baseline; the target must not shrink either axis."""
    frame = np.asarray(frame)
    th, tw = target_dims
    if th < frame.shape[0] or tw < frame.shape[1]:
        raise ValueError(f"target {target_dims} is smaller than the source "
                         f"{frame.shape[:2]}; this op only upsamples")
    return bicubic_resize(frame, target_dims)


def bicubic_upsample_video(video: VideoSequence,
                           target_dims: tuple[int, int]) -> VideoSequence:
    frames = np.stack([bicubic_upsample(f, target_dims) for f in video.frames])
    return VideoSequence(frames, video.fps)
