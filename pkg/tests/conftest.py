import numpy as np
import pytest

from srcodec import ModelConfig, TrainingConfig, VideoSequence
from srcodec.metrics import bicubic_resize


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(feature_channels=4, patch_size=4, scale=2,
                       generator_width=8, regular_width=8)


@pytest.fixture
def fast_training() -> TrainingConfig:
    return TrainingConfig(update_fraction=0.1, epochs_per_segment=2, seed=0)


def smooth_texture(height: int, width: int, seed: int, detail: int = 3) -> np.ndarray:
    """A band-limited random RGB texture: coarse noise upsampled bicubically."""
    rng = np.random.default_rng(seed)
    coarse = rng.random((max(2, height // detail), max(2, width // detail), 3))
    return bicubic_resize(coarse.astype(np.float32), (height, width))


def make_texture_video(n_frames: int, height: int, width: int, fps: float,
                       seed: int = 0, velocity: tuple[int, int] = (2, 1),
                       detail: int = 3) -> VideoSequence:
    """A textured pattern translating by integer pixels per frame."""
    vy, vx = velocity
    span_y = height + abs(vy) * n_frames + 1
    span_x = width + abs(vx) * n_frames + 1
    sheet = smooth_texture(span_y, span_x, seed, detail)
    frames = np.empty((n_frames, height, width, 3), dtype=np.float32)
    for j in range(n_frames):
        oy = abs(vy) * j
        ox = abs(vx) * j
        frames[j] = sheet[oy:oy + height, ox:ox + width]
    return VideoSequence(frames, fps)


def make_tiled_video(n_frames: int, height: int, width: int, fps: float,
                     seed: int = 0, velocity: tuple[int, int] = (2, 1),
                     tile: int = 20, block: int = 2) -> VideoSequence:
    """A sharp periodic motif translating by integer pixels per frame.

    Piecewise-constant detail at ``block`` pixels sits well above the Nyquist
    limit of a 4x downsample, so classical upsampling cannot recover it, while
    the periodicity keeps the content memorizable by a small model.
    """
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
        oy = abs(vy) * j
        ox = abs(vx) * j
        frames[j] = sheet[oy:oy + height, ox:ox + width]
    return VideoSequence(frames, fps)


def make_scene_change_video(n_frames: int, height: int, width: int, fps: float,
                            seed: int = 0) -> VideoSequence:
    """Two different moving textures, switching at the midpoint frame."""
    half = n_frames // 2
    a = make_tiled_video(half, height, width, fps, seed=seed, velocity=(2, 1),
                         tile=20)
    b = make_tiled_video(n_frames - half, height, width, fps, seed=seed + 1000,
                         velocity=(1, 2), tile=24)
    return VideoSequence(np.concatenate([a.frames, b.frames]), fps)


def make_static_video(n_frames: int, height: int, width: int, fps: float,
                      seed: int = 0) -> VideoSequence:
    """The same textured frame repeated (a static scene)."""
    frame = smooth_texture(height, width, seed)
    return VideoSequence(np.repeat(frame[None], n_frames, axis=0), fps)
