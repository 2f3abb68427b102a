"""Per-segment model adaptation: loss, masked Adam, and sparse-update selection.

Each segment is trained from the previously *transmitted* state so encoder and
decoder stay bit-for-bit in sync: the emitted deltas are float16 roundings of
the trained changes, and the next segment starts from the state obtained by
applying exactly those deltas.

Selection is gradient-guided coordinate descent: one probe epoch of dense Adam
from a saved copy, keep the ceil(eta*M) coordinates that moved the most
(ties broken by lower index), restore the copy, then train only those
coordinates. One epoch means one Adam step per frame, in frame order, each on
a half-size random crop when cropping is enabled.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import TrainingError
from .model import (
    ModelConfig,
    _forward,
    _params_tensor,
    _to_torch_frames,
    param_count,
    validate_params,
)
from .stream import SparseUpdate, apply_update


@dataclass(frozen=True)
class TrainingConfig:
    """Optimizer and adaptation settings for one encoding run."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    update_fraction: float = 0.01     # fraction of parameters shipped per segment
    epochs_per_segment: int = 16
    crop: bool = True                 # half-size random crops during training
    seed: int = 0
    pretrain_epochs: int | None = None  # dense pass budget; defaults to epochs_per_segment

    def __post_init__(self):
        if not 0.0 < self.update_fraction <= 1.0:
            raise ValueError(f"update fraction must be in (0, 1], got {self.update_fraction}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("momentum decay rates must be in [0, 1)")
        if self.epochs_per_segment < 0:
            raise ValueError("epochs_per_segment must be non-negative")


@dataclass
class SegmentTrainReport:
    """Telemetry for one segment's adaptation."""

    loss_before: float
    loss_after: float
    selected_count: int
    epochs_run: int


@dataclass
class AdamState:
    """First/second moment accumulators and the shared step counter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def fresh(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size, dtype=np.float32),
                   v=np.zeros(size, dtype=np.float32))


def masked_adam_step(params: np.ndarray, grads: np.ndarray,
                     mask_indices: np.ndarray, state: AdamState,
                     config: TrainingConfig) -> None:
    """One Adam step restricted to ``mask_indices``; mutates params and state.

    Parameters outside the mask stay bit-identical and their moments are not
    advanced. Bias correction uses the shared step counter, which is valid
    because the mask is fixed for the lifetime of a state.
    """
    g = grads[mask_indices]
    if not np.all(np.isfinite(g)):
        bad = int(np.count_nonzero(~np.isfinite(g)))
        raise TrainingError(
            f"non-finite gradient at {bad} of {g.size} masked coordinates "
            f"(step {state.step + 1})")
    state.step += 1
    b1 = np.float32(config.beta1)
    b2 = np.float32(config.beta2)
    m = b1 * state.m[mask_indices] + (np.float32(1) - b1) * g
    v = b2 * state.v[mask_indices] + (np.float32(1) - b2) * g * g
    state.m[mask_indices] = m
    state.v[mask_indices] = v
    m_hat = m / np.float32(1 - config.beta1 ** state.step)
    v_hat = v / np.float32(1 - config.beta2 ** state.step)
    step = np.float32(config.learning_rate) * m_hat / (np.sqrt(v_hat) + np.float32(config.epsilon))
    params[mask_indices] -= step


def random_half_crop(hr_frame: np.ndarray, lr_frame: np.ndarray,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """An aligned (lr_crop, hr_crop) pair at half the frame size per dimension.

    Offsets are sampled on the low-resolution grid so the high-resolution crop
    is exactly the upscale factor times the low-resolution crop.
    """
    lh, lw = lr_frame.shape[:2]
    hh, hw = hr_frame.shape[:2]
    if lh < 1 or lw < 1 or hh % lh or hw % lw or hh // lh != hw // lw:
        raise ValueError(f"hr dims {(hh, hw)} are not an integer multiple of lr dims {(lh, lw)}")
    k = hh // lh
    ch, cw = lh // 2, lw // 2
    if ch < 1 or cw < 1:
        raise ValueError(f"lr frame {(lh, lw)} too small for a half-size crop")
    oy = int(rng.integers(0, lh - ch + 1))
    ox = int(rng.integers(0, lw - cw + 1))
    lr_crop = lr_frame[oy:oy + ch, ox:ox + cw]
    hr_crop = hr_frame[k * oy:k * (oy + ch), k * ox:k * (ox + cw)]
    return lr_crop, hr_crop


def l2_segment_error(outputs: np.ndarray, targets: np.ndarray) -> float:
    """Mean over frames and pixels of the channel-summed squared error."""
    outputs = np.asarray(outputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if outputs.shape != targets.shape:
        raise ValueError(f"shape mismatch {outputs.shape} vs {targets.shape}")
    diff2 = (outputs - targets) ** 2
    return float(diff2.sum(axis=-1).mean())


def _check_segment(lr_frames: np.ndarray, hr_frames: np.ndarray,
                   config: ModelConfig) -> None:
    lr_frames = np.asarray(lr_frames)
    hr_frames = np.asarray(hr_frames)
    if lr_frames.ndim != 4 or hr_frames.ndim != 4:
        raise ValueError("segment frames must be stacked as (n, h, w, 3)")
    if lr_frames.shape[0] < 1:
        raise ValueError("segment must contain at least one frame")
    if lr_frames.shape[0] != hr_frames.shape[0]:
        raise ValueError(f"{lr_frames.shape[0]} lr frames vs {hr_frames.shape[0]} hr frames")
    k = config.scale
    expected = (hr_frames.shape[0], lr_frames.shape[1] * k, lr_frames.shape[2] * k, 3)
    if hr_frames.shape != expected:
        raise ValueError(f"hr frames have shape {hr_frames.shape}, expected {expected}")


def _loss_and_grad(params: np.ndarray, lr_frames: np.ndarray,
                   hr_frames: np.ndarray, config: ModelConfig,
                   clamp: bool, need_grad: bool = True):
    """Segment loss (and its gradient) via automatic differentiation."""
    dtype = torch.float64 if np.asarray(params).dtype == np.float64 else torch.float32
    params_t = _params_tensor(params, config).clone().requires_grad_(need_grad)
    lrs = _to_torch_frames(np.asarray(lr_frames, dtype=np.float32), dtype)
    hrs = _to_torch_frames(np.asarray(hr_frames, dtype=np.float32), dtype)
    out = _forward(lrs, params_t, config, clamp=clamp)
    loss = (out - hrs).square().sum(dim=1).mean()
    if not need_grad:
        return float(loss.detach()), None
    loss.backward()
    return float(loss.detach()), params_t.grad.numpy().astype(np.asarray(params).dtype)


def segment_loss(params: np.ndarray, lr_frames: np.ndarray,
                 hr_frames: np.ndarray, config: ModelConfig) -> float:
    """Mean squared RGB reconstruction error of the model over a segment."""
    _check_segment(lr_frames, hr_frames, config)
    validate_params(params, config)
    loss, _ = _loss_and_grad(params, lr_frames, hr_frames, config,
                             clamp=True, need_grad=False)
    return loss


def segment_loss_grad(params: np.ndarray, lr_frames: np.ndarray,
                      hr_frames: np.ndarray, config: ModelConfig,
                      clamp: bool = True) -> tuple[float, np.ndarray]:
    """Segment loss and its analytic gradient with respect to the parameters."""
    _check_segment(lr_frames, hr_frames, config)
    validate_params(params, config)
    return _loss_and_grad(params, lr_frames, hr_frames, config,
                          clamp=clamp, need_grad=True)


def select_top_changes(changes: np.ndarray, update_fraction: float) -> np.ndarray:
    """Indices of the ceil(eta*M) largest |changes|, ties to the lower index.

    The result is sorted ascending.
    """
    if not 0.0 < update_fraction <= 1.0:
        raise ValueError(f"update fraction must be in (0, 1], got {update_fraction}")
    changes = np.abs(np.asarray(changes))
    count = math.ceil(update_fraction * changes.size)
    order = np.argsort(-changes, kind="stable")  # stable: ties keep index order
    return np.sort(order[:count]).astype(np.int64)


def _train_loop(theta_start: np.ndarray, lr_frames: np.ndarray,
                hr_frames: np.ndarray, model_config: ModelConfig,
                train_config: TrainingConfig, mask_indices: np.ndarray,
                epochs: int, rng: np.random.Generator) -> np.ndarray:
    """Masked Adam over the segment; one step per frame per epoch, frame order."""
    params = np.array(theta_start, dtype=np.float32, copy=True)
    state = AdamState.fresh(params.size)
    n = lr_frames.shape[0]
    for _ in range(epochs):
        for i in range(n):
            lr_f, hr_f = lr_frames[i], hr_frames[i]
            if train_config.crop:
                try:
                    lr_f, hr_f = random_half_crop(hr_f, lr_f, rng)
                except ValueError:
                    pass  # frame too small to crop; train on the full frame
            _, grad = _loss_and_grad(params, lr_f[None], hr_f[None],
                                     model_config, clamp=False)
            masked_adam_step(params, grad, mask_indices, state, train_config)
    return params


def probe_and_select(theta: np.ndarray, lr_frames: np.ndarray,
                     hr_frames: np.ndarray, model_config: ModelConfig,
                     train_config: TrainingConfig,
                     rng: np.random.Generator) -> np.ndarray:
    """One dense probe epoch from a saved copy; returns the top-moving indices.

    Model parameters, optimizer moments, and the RNG position are restored to
    their pre-probe snapshot before returning.
    """
    _check_segment(lr_frames, hr_frames, model_config)
    theta = validate_params(theta, model_config)
    rng_state = copy.deepcopy(rng.bit_generator.state)
    all_indices = np.arange(theta.size, dtype=np.int64)
    probed = _train_loop(theta, lr_frames, hr_frames, model_config,
                         train_config, all_indices, epochs=1, rng=rng)
    rng.bit_generator.state = rng_state
    return select_top_changes(probed - theta.astype(np.float32),
                              train_config.update_fraction)


def train_dense(theta_start: np.ndarray, lr_frames: np.ndarray,
                hr_frames: np.ndarray, model_config: ModelConfig,
                train_config: TrainingConfig, rng: np.random.Generator,
                epochs: int | None = None) -> np.ndarray:
    """Train every parameter (used for the transmitted initial model)."""
    _check_segment(lr_frames, hr_frames, model_config)
    theta_start = validate_params(theta_start, model_config)
    if epochs is None:
        epochs = (train_config.pretrain_epochs
                  if train_config.pretrain_epochs is not None
                  else train_config.epochs_per_segment)
    all_indices = np.arange(theta_start.size, dtype=np.int64)
    return _train_loop(theta_start, lr_frames, hr_frames, model_config,
                       train_config, all_indices, epochs, rng)


def adapt_segment(theta_prev: np.ndarray, lr_frames: np.ndarray,
                  hr_frames: np.ndarray, model_config: ModelConfig,
                  train_config: TrainingConfig,
                  rng: np.random.Generator | None = None,
                  segment_index: int = 1,
                  ) -> tuple[SparseUpdate, np.ndarray, SegmentTrainReport]:
    """Adapt one segment from the transmitted state ``theta_prev``.

    Returns the sparse update, the next transmitted state (theta_prev with the
    float16 deltas applied exactly as the decoder will apply them), and a
    training report. Parameters outside the selected set are bit-identical
    between the two states.
    """
    _check_segment(lr_frames, hr_frames, model_config)
    theta_prev = np.asarray(validate_params(theta_prev, model_config),
                            dtype=np.float32)
    if rng is None:
        rng = np.random.default_rng(train_config.seed)
    loss_before = segment_loss(theta_prev, lr_frames, hr_frames, model_config)
    selected = probe_and_select(theta_prev, lr_frames, hr_frames,
                                model_config, train_config, rng)
    trained = _train_loop(theta_prev, lr_frames, hr_frames, model_config,
                          train_config, selected,
                          train_config.epochs_per_segment, rng)
    deltas = (trained[selected] - theta_prev[selected]).astype(np.float16)
    if not np.all(np.isfinite(deltas.astype(np.float32))):
        raise TrainingError("trained deltas overflow float16")
    update = SparseUpdate(segment_index, selected, deltas)
    theta_next = apply_update(theta_prev, update)
    loss_after = segment_loss(theta_next, lr_frames, hr_frames, model_config)
    report = SegmentTrainReport(loss_before=loss_before, loss_after=loss_after,
                                selected_count=int(selected.size),
                                epochs_run=train_config.epochs_per_segment)
    return update, theta_next, report
