"""Spatially-adaptive super-resolution network with a flat parameter layout.

The network upscales an RGB frame by an integer factor ``k``:

  1. the frame is split into non-overlapping P x P patches (space-to-batch,
     edge-replicated up to a multiple of P);
  2. a two-layer kernel-generator CNN (3x3 conv 3->C_g, rectifier, 3x3 conv
     C_g->27F, mean pool over the patch) turns each patch into its own 3x3
     convolution kernel with 3 input and F output channels;
  3. that generated kernel (no bias) is applied to the patch, rectified;
  4. patches are reassembled (batch-to-space) and cropped to the input extent;
  5. a regular two-layer CNN (5x5 conv F->C_r, rectifier, 3x3 conv C_r->3k^2)
     runs at low resolution, and a pixel shuffle rearranges the 3k^2 channels
     into the k-times-larger RGB frame, clamped to [0, 1].

All convolutions use zero padding and stride 1; patches never see their
neighbours. Parameters live in one flat float32 vector whose canonical order
is given by :func:`param_shapes`; each tensor is flattened C-contiguously.
The 27F generator outputs map to a kernel in (out=F, in=3, row, col) order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as nnf

Tensor = torch.Tensor


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    feature_channels is the adaptive block's output width F, patch_size the
    patch side P, scale the integer upscale factor k, generator_width and
    regular_width the hidden widths of the two two-layer CNNs.
    """

    feature_channels: int = 32
    patch_size: int = 5
    scale: int = 4
    generator_width: int = 256
    regular_width: int = 128

    def __post_init__(self):
        for name in ("feature_channels", "patch_size", "scale",
                     "generator_width", "regular_width"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")


@dataclass(frozen=True)
class PatchGrid:
    """Non-overlapping PxP tiles of a frame, plus the padding that was added."""

    patches: np.ndarray  # (n_patches, P, P, C)
    grid_rows: int
    grid_cols: int
    pad_bottom: int
    pad_right: int


def param_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical parameter tensors, in flat-vector order."""
    f = config.feature_channels
    cg = config.generator_width
    cr = config.regular_width
    out_ch = 3 * config.scale ** 2
    return [
        ("generator.conv1.weight", (cg, 3, 3, 3)),
        ("generator.conv1.bias", (cg,)),
        ("generator.conv2.weight", (27 * f, cg, 3, 3)),
        ("generator.conv2.bias", (27 * f,)),
        ("regular.conv1.weight", (cr, f, 5, 5)),
        ("regular.conv1.bias", (cr,)),
        ("regular.conv2.weight", (out_ch, cr, 3, 3)),
        ("regular.conv2.bias", (out_ch,)),
    ]


def param_count(config: ModelConfig) -> int:
    """Total number of model parameters M for a configuration."""
    return sum(math.prod(shape) for _, shape in param_shapes(config))


def init_params(config: ModelConfig, seed: int) -> np.ndarray:
    """He-style fan-in uniform weights and zero biases, from a fixed seed."""
    rng = np.random.default_rng(seed)
    parts = []
    for name, shape in param_shapes(config):
        n = math.prod(shape)
        if name.endswith("weight"):
            fan_in = math.prod(shape[1:])
            bound = math.sqrt(6.0 / fan_in)
            parts.append(rng.uniform(-bound, bound, size=n))
        else:
            parts.append(np.zeros(n))
    return np.concatenate(parts).astype(np.float32)


def validate_params(params: np.ndarray, config: ModelConfig) -> np.ndarray:
    params = np.asarray(params)
    m = param_count(config)
    if params.shape != (m,):
        raise ValueError(f"parameter vector has shape {params.shape}, expected ({m},)")
    return params


# ---------------------------------------------------------------------------
# torch internals (shared by the public ops, the forward pass, and training)
# ---------------------------------------------------------------------------

def _unflatten(params: Tensor, config: ModelConfig) -> list[Tensor]:
    views = []
    offset = 0
    for _, shape in param_shapes(config):
        n = math.prod(shape)
        views.append(params[offset:offset + n].view(shape))
        offset += n
    return views


def _extract_patches(frames: Tensor, patch_size: int) -> tuple[Tensor, int, int]:
    """(n, C, H, W) -> (n*rows*cols, C, P, P) with edge-replication padding."""
    p = patch_size
    n, c, h, w = frames.shape
    pad_b = (-h) % p
    pad_r = (-w) % p
    if pad_b or pad_r:
        frames = nnf.pad(frames, (0, pad_r, 0, pad_b), mode="replicate")
    rows = frames.shape[2] // p
    cols = frames.shape[3] // p
    tiles = frames.unfold(2, p, p).unfold(3, p, p)          # (n, C, rows, cols, P, P)
    tiles = tiles.permute(0, 2, 3, 1, 4, 5).reshape(n * rows * cols, c, p, p)
    return tiles, rows, cols


def _generate_kernels(patches: Tensor, params: Tensor, config: ModelConfig) -> Tensor:
    """(B, 3, P, P) patches -> (B*F, 3, 3, 3) per-patch kernels."""
    g1w, g1b, g2w, g2b = _unflatten(params, config)[:4]
    g = nnf.relu(nnf.conv2d(patches, g1w, g1b, padding=1))
    g = nnf.conv2d(g, g2w, g2b, padding=1)
    return g.mean(dim=(2, 3)).reshape(-1, 3, 3, 3)


def _adaptive_block(patches: Tensor, params: Tensor, config: ModelConfig) -> Tensor:
    """(B, 3, P, P) -> (B, F, P, P): rectified per-patch generated convolution."""
    b = patches.shape[0]
    kernels = _generate_kernels(patches, params, config)
    stacked = patches.reshape(1, b * 3, *patches.shape[2:])
    y = nnf.conv2d(stacked, kernels, bias=None, padding=1, groups=b)
    return nnf.relu(y).view(b, config.feature_channels, *patches.shape[2:])


def _forward(frames: Tensor, params: Tensor, config: ModelConfig,
             clamp: bool = True) -> Tensor:
    """(n, 3, H, W) in [0,1] -> (n, 3, kH, kW)."""
    _, _, _, _, r1w, r1b, r2w, r2b = _unflatten(params, config)
    n, _, h, w = frames.shape
    patches, rows, cols = _extract_patches(frames, config.patch_size)
    feats = _adaptive_block(patches, params, config)
    p = config.patch_size
    f = config.feature_channels
    feats = (feats.view(n, rows, cols, f, p, p)
                  .permute(0, 3, 1, 4, 2, 5)
                  .reshape(n, f, rows * p, cols * p))[:, :, :h, :w]
    z = nnf.relu(nnf.conv2d(feats, r1w, r1b, padding=2))
    z = nnf.conv2d(z, r2w, r2b, padding=1)
    out = nnf.pixel_shuffle(z, config.scale)
    return out.clamp(0.0, 1.0) if clamp else out


def _to_torch_frames(frames: np.ndarray, dtype: torch.dtype) -> Tensor:
    arr = np.ascontiguousarray(np.asarray(frames).transpose(0, 3, 1, 2))
    return torch.from_numpy(arr).to(dtype)


def _params_tensor(params: np.ndarray, config: ModelConfig) -> Tensor:
    params = validate_params(params, config)
    if params.dtype not in (np.float32, np.float64):
        params = params.astype(np.float32)
    return torch.from_numpy(np.ascontiguousarray(params))


# ---------------------------------------------------------------------------
# public operations (numpy in, numpy out)
# ---------------------------------------------------------------------------

def space_to_batch(frame: np.ndarray, patch_size: int) -> PatchGrid:
    """Partition a frame into non-overlapping PxP tiles, edge-padding as needed."""
    if not isinstance(patch_size, (int, np.integer)) or patch_size < 1:
        raise ValueError(f"patch size must be a positive integer, got {patch_size!r}")
    frame = np.asarray(frame)
    if frame.ndim != 3:
        raise ValueError(f"frame must be (h, w, c), got shape {frame.shape}")
    h, w, c = frame.shape
    p = patch_size
    pad_b = (-h) % p
    pad_r = (-w) % p
    padded = np.pad(frame, ((0, pad_b), (0, pad_r), (0, 0)), mode="edge")
    rows = padded.shape[0] // p
    cols = padded.shape[1] // p
    tiles = (padded.reshape(rows, p, cols, p, c)
                   .transpose(0, 2, 1, 3, 4)
                   .reshape(rows * cols, p, p, c))
    return PatchGrid(patches=tiles, grid_rows=rows, grid_cols=cols,
                     pad_bottom=pad_b, pad_right=pad_r)


def batch_to_space(grid: PatchGrid, original_dims: tuple[int, int]) -> np.ndarray:
    """Reassemble a PatchGrid onto the original (height, width) extent."""
    h, w = original_dims
    b, p, _, c = grid.patches.shape
    if b != grid.grid_rows * grid.grid_cols:
        raise ValueError("patch count does not match the grid dimensions")
    if grid.grid_rows * p - grid.pad_bottom != h or grid.grid_cols * p - grid.pad_right != w:
        raise ValueError(f"grid does not cover original dims {original_dims}")
    full = (grid.patches.reshape(grid.grid_rows, grid.grid_cols, p, p, c)
                        .transpose(0, 2, 1, 3, 4)
                        .reshape(grid.grid_rows * p, grid.grid_cols * p, c))
    return full[:h, :w]


def generate_kernel(patch: np.ndarray, params: np.ndarray,
                    config: ModelConfig) -> np.ndarray:
    """Per-patch kernel of shape (3, 3, 3, F): (row, col, in_channel, out_channel)."""
    patch = np.asarray(patch, dtype=np.float32)
    p = config.patch_size
    if patch.shape != (p, p, 3):
        raise ValueError(f"patch must be ({p}, {p}, 3), got {patch.shape}")
    params_t = _params_tensor(params, config)
    with torch.no_grad():
        tiles = _to_torch_frames(patch[None], params_t.dtype)
        kernels = _generate_kernels(tiles, params_t, config)
    w = kernels.numpy().reshape(config.feature_channels, 3, 3, 3)
    return np.ascontiguousarray(w.transpose(2, 3, 1, 0))


def adaptive_conv_block(patch: np.ndarray, params: np.ndarray,
                        config: ModelConfig) -> np.ndarray:
    """Rectified convolution of a patch with its own generated kernel: (P, P, F)."""
    patch = np.asarray(patch, dtype=np.float32)
    p = config.patch_size
    if patch.shape != (p, p, 3):
        raise ValueError(f"patch must be ({p}, {p}, 3), got {patch.shape}")
    params_t = _params_tensor(params, config)
    with torch.no_grad():
        tiles = _to_torch_frames(patch[None], params_t.dtype)
        feats = _adaptive_block(tiles, params_t, config)
    return np.ascontiguousarray(feats[0].numpy().transpose(1, 2, 0).astype(np.float32))


def pixel_shuffle(features: np.ndarray, scale: int) -> np.ndarray:
    """Depth-to-space: (H, W, 3k^2) -> (kH, kW, 3).

    Output pixel (y, x, c) reads input channel c*k^2 + (y mod k)*k + (x mod k)
    at position (y // k, x // k).
    """
    features = np.asarray(features)
    if features.ndim != 3:
        raise ValueError(f"features must be (h, w, c), got shape {features.shape}")
    k = int(scale)
    if k < 1:
        raise ValueError(f"scale must be a positive integer, got {scale!r}")
    h, w, c = features.shape
    if c != 3 * k * k:
        raise ValueError(f"expected 3*k^2 = {3 * k * k} channels, got {c}")
    out = (features.reshape(h, w, 3, k, k)
                   .transpose(0, 3, 1, 4, 2)
                   .reshape(h * k, w * k, 3))
    return np.ascontiguousarray(out)


def forward(lr_frame: np.ndarray, params: np.ndarray, config: ModelConfig) -> np.ndarray:
    """Upscale one frame by the configured factor; output clamped to [0, 1]."""
    lr_frame = np.asarray(lr_frame, dtype=np.float32)
    if lr_frame.ndim != 3 or lr_frame.shape[2] != 3:
        raise ValueError(f"lr frame must be (h, w, 3), got shape {lr_frame.shape}")
    params_t = _params_tensor(params, config)
    with torch.no_grad():
        frames_t = _to_torch_frames(lr_frame[None], params_t.dtype)
        out = _forward(frames_t, params_t, config, clamp=True)
    return np.ascontiguousarray(out[0].numpy().transpose(1, 2, 0).astype(np.float32))


def forward_video(lr_frames: np.ndarray, params: np.ndarray,
                  config: ModelConfig) -> np.ndarray:
    """Batched :func:`forward` over a stack of frames (n, h, w, 3)."""
    lr_frames = np.asarray(lr_frames, dtype=np.float32)
    if lr_frames.ndim != 4 or lr_frames.shape[3] != 3:
        raise ValueError(f"lr frames must be (n, h, w, 3), got shape {lr_frames.shape}")
    params_t = _params_tensor(params, config)
    with torch.no_grad():
        out = _forward(_to_torch_frames(lr_frames, params_t.dtype),
                       params_t, config, clamp=True)
    return np.ascontiguousarray(out.numpy().transpose(0, 2, 3, 1).astype(np.float32))
