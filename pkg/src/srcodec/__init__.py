"""srcodec: video compression via a content stream plus a sparse SR model stream."""

from .codecs import (
    ContentStream,
    ExternalCodec,
    LosslessCodec,
    QuantizerCodec,
    content_decode,
    content_encode,
    get_codec,
    register_codec,
)
from .errors import (
    CodecError,
    StreamCorruptionError,
    StreamDecodeError,
    StreamFormatError,
    TrainingError,
)
from .frames import (
    Frame,
    SegmentPlan,
    VideoSequence,
    area_downsample,
    downsample_video,
    from_uint8,
    load_png_sequence,
    plan_segments,
    read_raw_video,
    save_png_sequence,
    to_uint8,
    write_raw_video,
)
from .metrics import (
    QualityReport,
    bicubic_resize,
    bicubic_upsample,
    evaluate_quality,
    psnr,
    ssim,
    ssim_video,
)
from .model import (
    ModelConfig,
    PatchGrid,
    adaptive_conv_block,
    batch_to_space,
    forward,
    forward_video,
    generate_kernel,
    init_params,
    param_count,
    param_shapes,
    pixel_shuffle,
    space_to_batch,
)
from .pipeline import (
    EncodedVideo,
    EncodeJob,
    Manifest,
    bits_per_pixel,
    decode,
    encode,
    encoded_bpp,
    load_encoded,
    replay_states,
    save_encoded,
    state_hash,
)
from .stream import (
    SparseUpdate,
    StreamHeader,
    apply_update,
    decode_stream,
    encode_stream,
    inspect_stream,
    model_bitrate,
)
from .sweep import RDPoint, SweepGrid, benchmark_inference, run_sweep
from .training import (
    AdamState,
    SegmentTrainReport,
    TrainingConfig,
    adapt_segment,
    l2_segment_error,
    masked_adam_step,
    probe_and_select,
    random_half_crop,
    segment_loss,
    segment_loss_grad,
    select_top_changes,
    train_dense,
)

__version__ = "0.1.0"
