"""Content-stream codecs: in-process test codecs and the external wrapper.

The content stream carries the low-resolution video. Two deterministic
in-process codecs ship for CI (a lossless float32 codec and a uniform
quantizer), so no test depends on an installed encoder binary. Real encoders
plug in through :class:`ExternalCodec`, which exchanges raw planar RGB8 files
with a configurable command line.
"""

from __future__ import annotations

import os
import shlex
import struct
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bitpack import pack_uint_bits, unpack_uint_bits
from .errors import CodecError
from .frames import (
    VideoSequence,
    video_from_planar_bytes,
    write_raw_video,
)

#: Environment variable naming the external encoder binary; substituted for
#: the {encoder} placeholder in command templates.
ENCODER_ENV = "SRCODEC_ENCODER"

# magic (4s), height (H), width (H), frames (I), fps (d), levels (H)
_PAYLOAD_HEADER = struct.Struct(">4sHHIdH")


@dataclass(frozen=True)
class ContentStream:
    """One encoded low-resolution video payload plus its geometry."""

    payload: bytes
    codec_id: str
    lr_height: int
    lr_width: int
    frame_count: int
    fps: float

    @property
    def byte_count(self) -> int:
        return len(self.payload)


class LosslessCodec:
    """Stores float32 samples verbatim; decode(encode(v)) == v exactly."""

    magic = b"RAWF"

    def encode(self, video: VideoSequence, quality=None) -> bytes:
        header = _PAYLOAD_HEADER.pack(self.magic, video.height, video.width,
                                      video.n_frames, video.fps, 0)
        return header + video.frames.astype(">f4").tobytes()

    def decode(self, stream: "ContentStream") -> VideoSequence:
        h, w, n, fps, _ = _parse_payload_header(stream.payload, self.magic)
        body = stream.payload[_PAYLOAD_HEADER.size:]
        expected = n * h * w * 3 * 4
        if len(body) != expected:
            raise CodecError(f"lossless payload has {len(body)} bytes, expected {expected}")
        frames = np.frombuffer(body, dtype=">f4").astype(np.float32).reshape(n, h, w, 3)
        return VideoSequence(frames, fps)


class QuantizerCodec:
    """Uniform scalar quantizer onto the grid {i/levels : 0 <= i <= levels}.

    Values round half away from zero to the nearest grid level, so 0.5 maps
    to level 8/16 at the default of 16. Samples are bit-packed at the
    smallest width that holds ``levels``.
    """

    magic = b"QNTU"

    def __init__(self, levels: int = 16):
        if not 1 <= levels <= 65535:
            raise ValueError(f"levels must be in [1, 65535], got {levels}")
        self.levels = levels

    def encode(self, video: VideoSequence, quality=None) -> bytes:
        levels = int(quality) if quality is not None else self.levels
        if not 1 <= levels <= 65535:
            raise ValueError(f"quantizer levels must be in [1, 65535], got {levels}")
        header = _PAYLOAD_HEADER.pack(self.magic, video.height, video.width,
                                      video.n_frames, video.fps, levels)
        x = np.clip(video.frames.astype(np.float64), 0.0, 1.0)
        idx = np.floor(x * levels + 0.5).astype(np.uint64).reshape(-1)
        return header + pack_uint_bits(idx, levels.bit_length())

    def decode(self, stream: "ContentStream") -> VideoSequence:
        h, w, n, fps, levels = _parse_payload_header(stream.payload, self.magic)
        body = stream.payload[_PAYLOAD_HEADER.size:]
        count = n * h * w * 3
        try:
            idx = unpack_uint_bits(body, count, levels.bit_length())
        except ValueError as exc:
            raise CodecError(f"quantizer payload undecodable: {exc}") from exc
        frames = (idx.astype(np.float32) / np.float32(levels)).reshape(n, h, w, 3)
        return VideoSequence(frames, fps)


class ExternalCodec:
    """Subprocess wrapper around an off-the-shelf encoder/decoder pair.

    Frames are exchanged as planar RGB8 files (see ``frames.write_raw_video``).
    The command lines are configuration, not hardcoded: templates may use the
    placeholders {input}, {output}, {width}, {height}, {fps}, {frames},
    {quality}, and {encoder} (the binary named by ``SRCODEC_ENCODER``).
    The decode command must write planar RGB8 at the stream's geometry.
    """

    def __init__(self, encode_cmd: str, decode_cmd: str):
        self.encode_cmd = encode_cmd
        self.decode_cmd = decode_cmd

    def _run(self, template: str, **fields) -> None:
        fields.setdefault("encoder", os.environ.get(ENCODER_ENV, ""))
        cmd = template.format(**fields)
        argv = shlex.split(cmd)
        if not argv:
            raise CodecError("external codec command template is empty")
        try:
            proc = subprocess.run(argv, capture_output=True, text=True)
        except OSError as exc:
            raise CodecError(f"failed to launch {argv[0]!r}: {exc}") from exc
        if proc.returncode != 0:
            raise CodecError(
                f"{argv[0]!r} exited with status {proc.returncode}: "
                f"{proc.stderr.strip()}")

    def encode(self, video: VideoSequence, quality=None) -> bytes:
        with tempfile.TemporaryDirectory(prefix="srcodec_enc_") as td:
            raw_in = Path(td) / "input.raw"
            encoded = Path(td) / "encoded.bin"
            write_raw_video(raw_in, video)
            self._run(self.encode_cmd, input=raw_in, output=encoded,
                      width=video.width, height=video.height, fps=video.fps,
                      frames=video.n_frames,
                      quality="" if quality is None else quality)
            if not encoded.exists():
                raise CodecError("external encoder produced no output file")
            return encoded.read_bytes()

    def decode(self, stream: "ContentStream") -> VideoSequence:
        with tempfile.TemporaryDirectory(prefix="srcodec_dec_") as td:
            encoded = Path(td) / "encoded.bin"
            raw_out = Path(td) / "decoded.raw"
            encoded.write_bytes(stream.payload)
            self._run(self.decode_cmd, input=encoded, output=raw_out,
                      width=stream.lr_width, height=stream.lr_height,
                      fps=stream.fps, frames=stream.frame_count, quality="")
            if not raw_out.exists():
                raise CodecError("external decoder produced no output file")
            return video_from_planar_bytes(
                raw_out.read_bytes(), stream.lr_width, stream.lr_height,
                stream.frame_count, stream.fps)


def _parse_payload_header(payload: bytes, magic: bytes):
    if len(payload) < _PAYLOAD_HEADER.size:
        raise CodecError("content payload shorter than its header")
    got, h, w, n, fps, levels = _PAYLOAD_HEADER.unpack_from(payload)
    if got != magic:
        raise CodecError(f"content payload magic {got!r} does not match {magic!r}")
    return h, w, n, fps, levels


_REGISTRY: dict[str, object] = {}


def register_codec(codec_id: str, codec) -> None:
    _REGISTRY[codec_id] = codec


def get_codec(codec_id: str):
    try:
        return _REGISTRY[codec_id]
    except KeyError:
        raise ValueError(f"codec {codec_id!r} is not registered "
                         f"(known: {sorted(_REGISTRY)})") from None


def registered_codecs() -> list[str]:
    return sorted(_REGISTRY)


register_codec("lossless", LosslessCodec())
register_codec("quant16", QuantizerCodec(16))


def content_encode(lr_video: VideoSequence, codec_id: str, quality=None) -> ContentStream:
    """Encode a low-resolution video with a registered codec."""
    codec = get_codec(codec_id)
    payload = codec.encode(lr_video, quality)
    return ContentStream(payload=payload, codec_id=codec_id,
                         lr_height=lr_video.height, lr_width=lr_video.width,
                         frame_count=lr_video.n_frames, fps=lr_video.fps)


def content_decode(stream: ContentStream) -> VideoSequence:
    """Decode a content stream; both encoder and decoder sides call this."""
    codec = get_codec(stream.codec_id)
    video = codec.decode(stream)
    if (video.height, video.width, video.n_frames) != (
            stream.lr_height, stream.lr_width, stream.frame_count):
        raise CodecError(
            f"decoded geometry {(video.height, video.width, video.n_frames)} "
            f"does not match the stream header "
            f"{(stream.lr_height, stream.lr_width, stream.frame_count)}")
    return video
