"""Frames, videos, resampling, segmentation, and raw/PNG interchange.

A frame is a numpy float32 array of shape (height, width, 3) with RGB values
in [0, 1]. A video is a stack of frames plus a frame rate. Conversion to and
from 8-bit uses round-half-away-from-zero so that a round trip never moves a
value by more than 1/510.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

Frame = np.ndarray  # (height, width, 3) float32 in [0, 1]


@dataclass(frozen=True)
class VideoSequence:
    """An ordered stack of equally-sized RGB frames and a frame rate."""

    frames: np.ndarray  # (n, height, width, 3) float32
    fps: float

    def __post_init__(self):
        f = np.asarray(self.frames)
        if f.ndim != 4 or f.shape[-1] != 3:
            raise ValueError(f"frames must have shape (n, h, w, 3), got {f.shape}")
        if f.shape[0] < 1 or f.shape[1] < 1 or f.shape[2] < 1:
            raise ValueError("video must contain at least one non-empty frame")
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if f.dtype != np.float32:
            f = f.astype(np.float32)
        object.__setattr__(self, "frames", f)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def segment(self, start: int, end: int) -> "VideoSequence":
        """Frames [start, end) as a new video at the same frame rate."""
        if not 0 <= start < end <= self.n_frames:
            raise ValueError(f"invalid segment [{start}, {end}) for {self.n_frames} frames")
        return VideoSequence(self.frames[start:end], self.fps)


@dataclass(frozen=True)
class SegmentPlan:
    """Fixed-length segmentation of a video into training/update windows."""

    tau_seconds: float
    boundaries: tuple[tuple[int, int], ...]  # half-open frame intervals
    n_segments: int


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Unit-interval floats to 8-bit, rounding half away from zero."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def from_uint8(values: np.ndarray) -> np.ndarray:
    """8-bit samples back to unit-interval float32."""
    return np.asarray(values, dtype=np.float32) / np.float32(255.0)


def area_downsample(frame: np.ndarray, factor: int) -> np.ndarray:
    """Shrink a frame by an integer factor with block-mean (area) resampling.

    Non-divisible dimensions are edge-replicated up to the next multiple of
    ``factor`` before averaging, so the output always has ceil(dim/factor)
    pixels per axis.
    """
    if not isinstance(factor, (int, np.integer)) or isinstance(factor, bool) or factor <= 0:
        raise ValueError(f"downsample factor must be a positive integer, got {factor!r}")
    frame = np.asarray(frame)
    squeeze = frame.ndim == 2
    if squeeze:
        frame = frame[:, :, None]
    h, w = frame.shape[:2]
    pad_b = (-h) % factor
    pad_r = (-w) % factor
    if pad_b or pad_r:
        frame = np.pad(frame, ((0, pad_b), (0, pad_r), (0, 0)), mode="edge")
    hh = frame.shape[0] // factor
    ww = frame.shape[1] // factor
    out = frame.astype(np.float64).reshape(hh, factor, ww, factor, -1).mean(axis=(1, 3))
    out = out.astype(np.float32)
    return out[:, :, 0] if squeeze else out


def downsample_video(video: VideoSequence, factor: int) -> VideoSequence:
    """Area-downsample every frame of a video."""
    lr = np.stack([area_downsample(f, factor) for f in video.frames])
    return VideoSequence(lr, video.fps)


def plan_segments(video: VideoSequence, tau_seconds: float) -> SegmentPlan:
    """Partition a video into back-to-back windows of ``tau_seconds`` each.

    ``tau_seconds = inf`` yields a single segment spanning the whole video
    (one-shot mode). A remainder shorter than tau becomes its own final
    segment.
    """
    n = video.n_frames
    if n < 1:
        raise ValueError("cannot plan segments of an empty video")
    if math.isinf(tau_seconds) and tau_seconds > 0:
        return SegmentPlan(tau_seconds, ((0, n),), 1)
    if not tau_seconds > 0:
        raise ValueError(f"segment length must be positive, got {tau_seconds}")
    per = max(1, int(math.floor(tau_seconds * video.fps + 0.5)))
    boundaries = tuple((s, min(s + per, n)) for s in range(0, n, per))
    return SegmentPlan(tau_seconds, boundaries, len(boundaries))


# ---------------------------------------------------------------------------
# Raw interchange: planar RGB, 8 bits per channel, frame-major, plus a JSON
# sidecar header (width, height, fps, frames). This is the format exchanged
# with external encoder processes.
# ---------------------------------------------------------------------------

def video_to_planar_bytes(video: VideoSequence) -> bytes:
    """Serialize to planar 8-bit RGB: per frame, the R plane then G then B."""
    u = to_uint8(video.frames)  # (n, h, w, 3)
    return np.ascontiguousarray(u.transpose(0, 3, 1, 2)).tobytes()


def video_from_planar_bytes(data: bytes, width: int, height: int,
                            n_frames: int, fps: float) -> VideoSequence:
    """Parse planar 8-bit RGB bytes back into a video."""
    expected = n_frames * 3 * height * width
    if len(data) != expected:
        raise ValueError(f"planar payload has {len(data)} bytes, expected {expected}")
    u = np.frombuffer(data, dtype=np.uint8).reshape(n_frames, 3, height, width)
    return VideoSequence(from_uint8(u.transpose(0, 2, 3, 1)), fps)


def raw_sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def write_raw_video(path: str | Path, video: VideoSequence) -> None:
    """Write planar RGB8 frames plus the JSON geometry/fps sidecar."""
    path = Path(path)
    path.write_bytes(video_to_planar_bytes(video))
    header = {
        "width": video.width,
        "height": video.height,
        "fps": video.fps,
        "frames": video.n_frames,
    }
    raw_sidecar_path(path).write_text(json.dumps(header))


def read_raw_video(path: str | Path) -> VideoSequence:
    """Read a planar RGB8 file via its JSON sidecar."""
    path = Path(path)
    header = json.loads(raw_sidecar_path(path).read_text())
    return video_from_planar_bytes(
        path.read_bytes(), header["width"], header["height"],
        header["frames"], header["fps"])


def save_png_sequence(video: VideoSequence, directory: str | Path) -> None:
    """Write frames as frame_00000.png, frame_00001.png, ..."""
    from PIL import Image

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(video.frames):
        Image.fromarray(to_uint8(frame)).save(directory / f"frame_{i:05d}.png")


def load_png_sequence(directory: str | Path, fps: float) -> VideoSequence:
    """Load all *.png files of a directory, sorted by name."""
    from PIL import Image

    directory = Path(directory)
    paths = sorted(directory.glob("*.png"))
    if not paths:
        raise ValueError(f"no .png frames found in {directory}")
    frames = np.stack([from_uint8(np.asarray(Image.open(p).convert("RGB"))) for p in paths])
    return VideoSequence(frames, fps)
