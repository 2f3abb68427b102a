import math

import numpy as np
import pytest

import srcodec.pipeline as pipeline_mod
from srcodec import (
    EncodeJob,
    Manifest,
    ModelConfig,
    TrainingConfig,
    VideoSequence,
    bits_per_pixel,
    decode,
    decode_stream,
    encode,
    encoded_bpp,
    load_encoded,
    param_count,
    save_encoded,
    state_hash,
)
from srcodec.pipeline import replay_states
from srcodec.stream import HEADER_NBYTES, index_bits_for, update_record_nbytes

from conftest import make_static_video, make_texture_video


def tiny_job(video, tau=2.0, eta=0.1, epochs=2, seed=0, codec="lossless",
             quality=None, scale=2):
    cfg = ModelConfig(feature_channels=4, patch_size=4, scale=scale,
                      generator_width=8, regular_width=8)
    tc = TrainingConfig(update_fraction=eta, epochs_per_segment=epochs, seed=seed)
    return EncodeJob(source=video, model=cfg, training=tc, tau_seconds=tau,
                     codec_id=codec, quality=quality)


@pytest.fixture(scope="module")
def small_video():
    return make_texture_video(8, 16, 16, fps=2.0, seed=0)


class TestEncode:
    def test_one_shot_has_zero_update_records(self, small_video):
        encoded = encode(tiny_job(small_video, tau=math.inf))
        _, _, updates = decode_stream(encoded.model_stream)
        assert updates == []
        assert encoded.manifest.tau_ms == 0

    def test_two_segments_two_records_with_ceil_eta_m(self, small_video):
        job = tiny_job(small_video, tau=2.0, eta=0.5)  # 8 frames @ 2 fps -> 2 segs
        encoded = encode(job)
        _, _, updates = decode_stream(encoded.model_stream)
        m = param_count(job.model)
        assert [u.segment_index for u in updates] == [1, 2]
        assert all(u.indices.size == math.ceil(0.5 * m) for u in updates)

    def test_encode_deterministic(self, small_video):
        job = tiny_job(small_video)
        a = encode(job)
        b = encode(job)
        assert a.model_stream == b.model_stream
        assert a.content.payload == b.content.payload
        assert a.manifest == b.manifest

    def test_manifest_counts(self, small_video):
        encoded = encode(tiny_job(small_video))
        assert encoded.manifest.frames == small_video.n_frames
        assert encoded.content.frame_count == small_video.n_frames
        assert encoded.manifest.lr_h == small_video.height // 2


class TestDecode:
    def test_frame_count_and_dims_preserved(self, small_video):
        encoded = encode(tiny_job(small_video))
        out = decode(encoded)
        assert out.frames.shape == small_video.frames.shape
        assert out.fps == small_video.fps

    def test_decoder_replay_matches_encoder_hashes(self, small_video):
        job = tiny_job(small_video, tau=1.0)  # 4 segments
        encoded = encode(job)
        replayed = [state_hash(s) for s in replay_states(encoded)]
        assert replayed == encoded.report.state_hashes
        assert len(replayed) == 5  # theta_hat_0..4

    def test_zero_update_stream_uses_initial_model_everywhere(self, small_video):
        from srcodec.model import forward

        encoded = encode(tiny_job(small_video, tau=math.inf))
        header, theta0, _ = decode_stream(encoded.model_stream)
        out = decode(encoded)
        config = header.to_model_config()
        theta = theta0.astype(np.float32)
        # check one frame against a direct forward with theta_0
        from srcodec.codecs import content_decode
        lr_video = content_decode(encoded.content)
        expected = forward(lr_video.frames[5], theta, config)
        np.testing.assert_array_equal(out.frames[5], expected)

    def test_decode_deterministic(self, small_video):
        encoded = encode(tiny_job(small_video))
        assert decode(encoded).frames.tobytes() == decode(encoded).frames.tobytes()

    def test_update_per_segment_improves_its_segment(self):
        # trained improvement: the segment decoded with its own update beats
        # the previous state on the same frames (static scene, lossless codec)
        from srcodec.codecs import content_decode
        from srcodec.metrics import psnr
        from srcodec.model import forward_video

        video = make_static_video(6, 16, 16, fps=2.0, seed=3)
        job = tiny_job(video, tau=1.5, eta=0.2, epochs=12, seed=1)
        encoded = encode(job)
        states = replay_states(encoded)
        lr_video = content_decode(encoded.content)
        start, end = 0, 3  # first segment
        lr = lr_video.frames[start:end]
        hr = video.frames[start:end]
        with_update = forward_video(lr, states[1], job.model)
        without = forward_video(lr, states[0], job.model)
        assert psnr(hr, with_update)[0] >= psnr(hr, without)[0]

    def test_corrupt_stream_names_failing_record(self, small_video):
        from srcodec.errors import StreamDecodeError

        encoded = encode(tiny_job(small_video, tau=2.0))
        truncated = encoded.__class__(content=encoded.content,
                                      model_stream=encoded.model_stream[:-10],
                                      manifest=encoded.manifest)
        with pytest.raises(StreamDecodeError, match="segment"):
            decode(truncated)


class TestNonDivisibleDims:
    def test_encode_decode_odd_dims(self):
        video = make_texture_video(4, 15, 13, fps=2.0, seed=5)
        encoded = encode(tiny_job(video, tau=math.inf))
        out = decode(encoded)
        assert out.frames.shape == video.frames.shape


class TestBitsPerPixel:
    def test_arithmetic_example(self):
        assert bits_per_pixel(1000, 500, 10, 10, 10) == pytest.approx(1.5)

    def test_content_only(self):
        assert bits_per_pixel(1000, 0, 10, 10, 10) == pytest.approx(1.0)

    def test_zero_frames_rejected(self):
        with pytest.raises(ValueError):
            bits_per_pixel(1000, 0, 0, 10, 10)

    def test_accounting_matches_serialized_sizes(self, small_video):
        encoded = encode(tiny_job(small_video, tau=2.0))
        manifest = encoded.manifest
        formula = bits_per_pixel(8 * encoded.content.byte_count,
                                 8 * len(encoded.model_stream),
                                 manifest.frames, manifest.hr_h, manifest.hr_w)
        assert encoded_bpp(encoded) == pytest.approx(formula, abs=0)

    def test_one_shot_model_bits_formula(self, small_video):
        encoded = encode(tiny_job(small_video, tau=math.inf))
        m = param_count(ModelConfig(feature_channels=4, patch_size=4, scale=2,
                                    generator_width=8, regular_width=8))
        assert len(encoded.model_stream) == HEADER_NBYTES + 2 * m

    def test_halving_update_frequency_halves_update_bytes(self):
        video = make_texture_video(16, 16, 16, fps=2.0, seed=6)  # 8 seconds
        sizes = {}
        for tau in (2.0, 4.0):
            encoded = encode(tiny_job(video, tau=tau, eta=0.05, epochs=1))
            _, _, updates = decode_stream(encoded.model_stream)
            bits = index_bits_for(param_count(ModelConfig(
                feature_channels=4, patch_size=4, scale=2,
                generator_width=8, regular_width=8)))
            sizes[tau] = sum(update_record_nbytes(u.indices.size, bits)
                             for u in updates)
        assert sizes[2.0] == pytest.approx(2 * sizes[4.0], rel=0.02)


class TestPersistence:
    def test_directory_round_trip(self, small_video, tmp_path):
        encoded = encode(tiny_job(small_video))
        save_encoded(encoded, tmp_path / "out")
        files = sorted(p.name for p in (tmp_path / "out").iterdir())
        assert files == ["content.bin", "manifest.txt", "model.srvc"]
        loaded = load_encoded(tmp_path / "out")
        assert loaded.model_stream == encoded.model_stream
        assert loaded.content.payload == encoded.content.payload
        assert loaded.manifest == encoded.manifest
        np.testing.assert_array_equal(decode(loaded).frames,
                                      decode(encoded).frames)

    def test_manifest_text_round_trip(self):
        manifest = Manifest(fps=23.976, frames=120, hr_w=64, hr_h=48, k=4,
                            tau_ms=5000, codec_id="quant16", quality=12.0,
                            lr_w=16, lr_h=12)
        assert Manifest.from_text(manifest.to_text()) == manifest

    def test_manifest_documented_keys_present(self, small_video, tmp_path):
        encoded = encode(tiny_job(small_video, quality=None))
        text = encoded.manifest.to_text()
        for key in ("fps", "frames", "hr_w", "hr_h", "k", "tau_ms",
                    "codec_id", "quality"):
            assert f"{key}=" in text


class TestCheckpoint:
    def test_resume_reproduces_uninterrupted_run(self, tmp_path, monkeypatch):
        video = make_texture_video(9, 16, 16, fps=3.0, seed=7)
        job = tiny_job(video, tau=1.0, epochs=2, seed=2)  # 3 segments
        straight = encode(job)

        ckpt = tmp_path / "job.ckpt"
        real_adapt = pipeline_mod.adapt_segment
        calls = {"n": 0}

        def exploding_adapt(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] == 2:
                raise RuntimeError("simulated crash")
            return real_adapt(*args, **kwargs)

        monkeypatch.setattr(pipeline_mod, "adapt_segment", exploding_adapt)
        with pytest.raises(RuntimeError, match="simulated crash"):
            encode(job, checkpoint=ckpt)
        monkeypatch.setattr(pipeline_mod, "adapt_segment", real_adapt)
        assert ckpt.exists()

        resumed = encode(job, checkpoint=ckpt)
        assert resumed.model_stream == straight.model_stream
        assert resumed.content.payload == straight.content.payload
        assert not ckpt.exists()  # removed on success

    def test_mismatched_job_restarts_cleanly(self, tmp_path):
        video = make_texture_video(6, 16, 16, fps=3.0, seed=8)
        ckpt = tmp_path / "job.ckpt"
        encode(tiny_job(video, tau=1.0, seed=3), checkpoint=ckpt)
        # different seed -> different fingerprint; stale checkpoint ignored
        other = tiny_job(video, tau=1.0, seed=4)
        straight = encode(other)
        # leave a stale checkpoint behind by interrupting nothing: simply
        # write one from a different job and then encode with it present
        encode(tiny_job(video, tau=1.0, seed=5), checkpoint=ckpt)
        assert not ckpt.exists()
        resumed = encode(other, checkpoint=ckpt)
        assert resumed.model_stream == straight.model_stream
