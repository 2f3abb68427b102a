"""End-to-end encode/decode orchestration and rate accounting.

Encoding produces two bitstreams. The content stream is the area-downsampled
video pushed through a registered codec. The model stream starts with a full
float16 snapshot of a model trained once on the entire clip (the one-shot
customization), followed by one sparse update per segment that re-specializes
the model to that segment. Update records are numbered 1..N; record j is
applied before upscaling the j-th segment, so a zero-update stream upsamples
everything with the initial model.

Both sides operate on the *decoded* content stream and on transmitted
(float16-quantized) parameter states, so the decoder's replay reproduces the
encoder's states bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .codecs import ContentStream, content_decode, content_encode
from .errors import StreamDecodeError
from .frames import VideoSequence, downsample_video, plan_segments
from .metrics import bicubic_resize
from .model import ModelConfig, forward, init_params
from .stream import (
    SparseUpdate,
    StreamHeader,
    apply_update,
    decode_stream,
    encode_stream,
)
from .training import SegmentTrainReport, TrainingConfig, adapt_segment, train_dense

CHECKPOINT_VERSION = 1

MANIFEST_KEYS = ("fps", "frames", "hr_w", "hr_h", "k", "tau_ms",
                 "codec_id", "quality", "lr_w", "lr_h")

CONTENT_FILE = "content.bin"
MODEL_FILE = "model.srvc"
MANIFEST_FILE = "manifest.txt"


@dataclass(frozen=True)
class EncodeJob:
    """Everything needed to encode one clip."""

    source: VideoSequence
    model: ModelConfig = ModelConfig()
    training: TrainingConfig = TrainingConfig()
    tau_seconds: float = 5.0          # math.inf selects one-shot mode
    codec_id: str = "lossless"
    quality: float | None = None
    target_height: int | None = None  # defaults to the source dims
    target_width: int | None = None

    def resolved_target(self) -> tuple[int, int]:
        return (self.target_height or self.source.height,
                self.target_width or self.source.width)


@dataclass(frozen=True)
class Manifest:
    """The key-value sidecar binding the two streams together."""

    fps: float
    frames: int
    hr_w: int
    hr_h: int
    k: int
    tau_ms: int
    codec_id: str
    quality: float | None
    lr_w: int
    lr_h: int

    def to_text(self) -> str:
        values = {"fps": repr(self.fps), "frames": self.frames,
                  "hr_w": self.hr_w, "hr_h": self.hr_h, "k": self.k,
                  "tau_ms": self.tau_ms, "codec_id": self.codec_id,
                  "quality": "" if self.quality is None else repr(self.quality),
                  "lr_w": self.lr_w, "lr_h": self.lr_h}
        return "".join(f"{key}={values[key]}\n" for key in MANIFEST_KEYS)

    @classmethod
    def from_text(cls, text: str) -> "Manifest":
        entries: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            entries[key.strip()] = value.strip()
        missing = [k for k in MANIFEST_KEYS if k not in entries]
        if missing:
            raise ValueError(f"manifest is missing keys: {missing}")
        return cls(fps=float(entries["fps"]), frames=int(entries["frames"]),
                   hr_w=int(entries["hr_w"]), hr_h=int(entries["hr_h"]),
                   k=int(entries["k"]), tau_ms=int(entries["tau_ms"]),
                   codec_id=entries["codec_id"],
                   quality=float(entries["quality"]) if entries["quality"] else None,
                   lr_w=int(entries["lr_w"]), lr_h=int(entries["lr_h"]))

    @property
    def tau_seconds(self) -> float:
        return math.inf if self.tau_ms == 0 else self.tau_ms / 1000.0


@dataclass
class EncodeReport:
    """Encoder-side telemetry (never serialized into the streams)."""

    pretrain_epochs: int
    segment_reports: list[SegmentTrainReport] = field(default_factory=list)
    state_hashes: list[str] = field(default_factory=list)  # theta_hat_0..N


@dataclass
class EncodedVideo:
    """The two bitstreams plus their manifest."""

    content: ContentStream
    model_stream: bytes
    manifest: Manifest
    report: EncodeReport | None = None


def state_hash(theta: np.ndarray) -> str:
    """sha256 of the float32 transmitted-state bytes."""
    return hashlib.sha256(np.ascontiguousarray(theta, dtype=np.float32)
                          .tobytes()).hexdigest()


def tau_to_ms(tau_seconds: float) -> int:
    """Milliseconds for the stream header; 0 encodes the one-shot interval."""
    if math.isinf(tau_seconds) and tau_seconds > 0:
        return 0
    if not tau_seconds > 0:
        raise ValueError(f"update interval must be positive, got {tau_seconds}")
    ms = int(round(tau_seconds * 1000))
    if ms < 1:
        raise ValueError(f"update interval {tau_seconds}s is below 1 ms resolution")
    return ms


def bits_per_pixel(content_bits: float, model_bits: float, frames: int,
                   out_height: int, out_width: int) -> float:
    """Combined rate of both streams per decoded output pixel."""
    if frames < 1:
        raise ValueError(f"frame count must be positive, got {frames}")
    if out_height < 1 or out_width < 1:
        raise ValueError(f"output dims must be positive, got {out_height}x{out_width}")
    if content_bits < 0 or model_bits < 0:
        raise ValueError("bit counts must be non-negative")
    return (content_bits + model_bits) / (frames * out_height * out_width)


def _pad_to_multiple(frames: np.ndarray, multiple_h: int, multiple_w: int) -> np.ndarray:
    h, w = frames.shape[1:3]
    pad_b = (-h) % multiple_h
    pad_r = (-w) % multiple_w
    if not (pad_b or pad_r):
        return frames
    return np.pad(frames, ((0, 0), (0, pad_b), (0, pad_r), (0, 0)), mode="edge")


# ---------------------------------------------------------------------------
# encoding, with an internal resumable checkpoint written after each segment
# ---------------------------------------------------------------------------

def _job_fingerprint(job: EncodeJob) -> str:
    src = job.source
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(src.frames).tobytes())
    meta = (src.fps, repr(job.model), repr(job.training), job.tau_seconds,
            job.codec_id, job.quality, job.resolved_target())
    h.update(repr(meta).encode())
    return h.hexdigest()


def _save_checkpoint(path: Path, fingerprint: str, theta0: np.ndarray,
                     theta_hat: np.ndarray, updates: list[SparseUpdate],
                     reports: list[SegmentTrainReport], hashes: list[str],
                     next_segment: int, rng: np.random.Generator) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "fingerprint": fingerprint,
        "next_segment": next_segment,
        "rng_state": rng.bit_generator.state,
        "hashes": hashes,
        "reports": [[r.loss_before, r.loss_after, r.selected_count, r.epochs_run]
                    for r in reports],
        "segments": [u.segment_index for u in updates],
    }
    arrays = {"theta0": theta0, "theta_hat": theta_hat}
    for i, u in enumerate(updates):
        arrays[f"idx_{i}"] = u.indices
        arrays[f"delta_{i}"] = u.deltas
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, meta=json.dumps(meta), **arrays)
    os.replace(tmp, path)


def _load_checkpoint(path: Path, fingerprint: str):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            return None
        if meta.get("fingerprint") != fingerprint:
            return None
        updates = [SparseUpdate(seg, data[f"idx_{i}"], data[f"delta_{i}"])
                   for i, seg in enumerate(meta["segments"])]
        reports = [SegmentTrainReport(*vals) for vals in meta["reports"]]
        return {
            "theta0": data["theta0"].astype(np.float16),
            "theta_hat": data["theta_hat"].astype(np.float32),
            "updates": updates,
            "reports": reports,
            "hashes": list(meta["hashes"]),
            "next_segment": int(meta["next_segment"]),
            "rng_state": meta["rng_state"],
        }


def encode(job: EncodeJob, checkpoint: str | Path | None = None) -> EncodedVideo:
    """Encode a clip into (content stream, model stream, manifest).

    When ``checkpoint`` names a file, encoder state is persisted there after
    the initial training pass and after every segment, and a matching
    interrupted run resumes instead of restarting. The file is removed once
    encoding completes.
    """
    src = job.source
    k = job.model.scale
    lr_video = downsample_video(src, k)
    content = content_encode(lr_video, job.codec_id, job.quality)
    decoded_lr = content_decode(content).frames
    # Training targets must be exactly k x the LR dims; edge-pad the source
    # like the downsampler did. The decoder resizes back to the target dims.
    hr_frames = _pad_to_multiple(src.frames, k, k)
    if hr_frames.shape[1:3] != (lr_video.height * k, lr_video.width * k):
        raise ValueError("downsampled geometry is inconsistent with the source")
    plan = plan_segments(src, job.tau_seconds)
    one_shot = math.isinf(job.tau_seconds)

    checkpoint = Path(checkpoint) if checkpoint is not None else None
    fingerprint = _job_fingerprint(job) if checkpoint is not None else ""
    resumed = None
    if checkpoint is not None and checkpoint.exists():
        resumed = _load_checkpoint(checkpoint, fingerprint)

    rng = np.random.default_rng(job.training.seed)
    if resumed is None:
        theta_init = init_params(job.model, job.training.seed)
        pretrain = train_dense(theta_init, decoded_lr, hr_frames,
                               job.model, job.training, rng)
        theta0 = pretrain.astype(np.float16)
        theta_hat = theta0.astype(np.float32)
        updates: list[SparseUpdate] = []
        reports: list[SegmentTrainReport] = []
        hashes = [state_hash(theta_hat)]
        next_segment = 1
        if checkpoint is not None:
            _save_checkpoint(checkpoint, fingerprint, theta0, theta_hat,
                             updates, reports, hashes, next_segment, rng)
    else:
        theta0 = resumed["theta0"]
        theta_hat = resumed["theta_hat"]
        updates = resumed["updates"]
        reports = resumed["reports"]
        hashes = resumed["hashes"]
        next_segment = resumed["next_segment"]
        rng.bit_generator.state = resumed["rng_state"]

    if not one_shot:
        for j in range(next_segment, plan.n_segments + 1):
            start, end = plan.boundaries[j - 1]
            update, theta_hat, report = adapt_segment(
                theta_hat, decoded_lr[start:end], hr_frames[start:end],
                job.model, job.training, rng, segment_index=j)
            updates.append(update)
            reports.append(report)
            hashes.append(state_hash(theta_hat))
            if checkpoint is not None:
                _save_checkpoint(checkpoint, fingerprint, theta0, theta_hat,
                                 updates, reports, hashes, j + 1, rng)

    header = StreamHeader.for_config(job.model, tau_to_ms(job.tau_seconds),
                                     job.training.seed)
    model_bytes = encode_stream(theta0, updates, header)
    target_h, target_w = job.resolved_target()
    manifest = Manifest(fps=src.fps, frames=src.n_frames, hr_w=target_w,
                        hr_h=target_h, k=k, tau_ms=header.tau_ms,
                        codec_id=job.codec_id, quality=job.quality,
                        lr_w=lr_video.width, lr_h=lr_video.height)
    if checkpoint is not None and checkpoint.exists():
        checkpoint.unlink()
    pretrain_epochs = (job.training.pretrain_epochs
                       if job.training.pretrain_epochs is not None
                       else job.training.epochs_per_segment)
    return EncodedVideo(content=content, model_stream=model_bytes,
                        manifest=manifest,
                        report=EncodeReport(pretrain_epochs=pretrain_epochs,
                                            segment_reports=reports,
                                            state_hashes=hashes))


def replay_states(encoded: EncodedVideo) -> list[np.ndarray]:
    """Decoder-side transmitted states theta_hat_0..N, in order."""
    header, theta0, updates = decode_stream(encoded.model_stream)
    states = [theta0.astype(np.float32)]
    for update in updates:
        states.append(apply_update(states[-1], update))
    return states


def decode(encoded: EncodedVideo) -> VideoSequence:
    """Reconstruct the high-resolution video from the two streams."""
    manifest = encoded.manifest
    lr_video = content_decode(encoded.content)
    if lr_video.n_frames != manifest.frames:
        raise StreamDecodeError(
            f"content stream has {lr_video.n_frames} frames but the manifest "
            f"says {manifest.frames}")
    header, theta0, updates = decode_stream(encoded.model_stream)
    config = header.to_model_config()
    plan = plan_segments(lr_video, manifest.tau_seconds)
    if updates:
        if len(updates) != plan.n_segments:
            raise StreamDecodeError(
                f"model stream has {len(updates)} update records for "
                f"{plan.n_segments} segments")
        for j, update in enumerate(updates, start=1):
            if update.segment_index != j:
                raise StreamDecodeError(
                    f"update record {j} is labelled segment {update.segment_index}")
    theta_hat = theta0.astype(np.float32)
    target = (manifest.hr_h, manifest.hr_w)
    k = config.scale
    out = np.empty((manifest.frames, manifest.hr_h, manifest.hr_w, 3),
                   dtype=np.float32)
    for j, (start, end) in enumerate(plan.boundaries, start=1):
        if updates:
            theta_hat = apply_update(theta_hat, updates[j - 1])
        for i in range(start, end):
            frame = forward(lr_video.frames[i], theta_hat, config)
            if frame.shape[:2] != target:
                frame = bicubic_resize(frame, target)
            out[i] = frame
    return VideoSequence(out, manifest.fps)


# ---------------------------------------------------------------------------
# on-disk layout: a directory with the content payload, the model stream,
# and the manifest
# ---------------------------------------------------------------------------

def save_encoded(encoded: EncodedVideo, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / CONTENT_FILE).write_bytes(encoded.content.payload)
    (directory / MODEL_FILE).write_bytes(encoded.model_stream)
    (directory / MANIFEST_FILE).write_text(encoded.manifest.to_text())


def load_encoded(directory: str | Path) -> EncodedVideo:
    directory = Path(directory)
    manifest = Manifest.from_text((directory / MANIFEST_FILE).read_text())
    payload = (directory / CONTENT_FILE).read_bytes()
    content = ContentStream(payload=payload, codec_id=manifest.codec_id,
                            lr_height=manifest.lr_h, lr_width=manifest.lr_w,
                            frame_count=manifest.frames, fps=manifest.fps)
    return EncodedVideo(content=content,
                        model_stream=(directory / MODEL_FILE).read_bytes(),
                        manifest=manifest)


def encoded_bpp(encoded: EncodedVideo) -> float:
    """Bits per output pixel from the actual serialized byte counts."""
    manifest = encoded.manifest
    return bits_per_pixel(8 * encoded.content.byte_count,
                          8 * len(encoded.model_stream),
                          manifest.frames, manifest.hr_h, manifest.hr_w)
