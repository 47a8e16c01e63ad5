"""Desk-scale CTC speech recognition with staged transfer learning."""

from .alphabet import Alphabet, AlphabetError, build_alphabet, simplification_map, strip_diacritics
from .augment import CutoutConfig, cutout
from .ctc import CtcError, ctc_loss, greedy_decode, log_softmax, required_frames
from .data import (
    DataError,
    SynthConfig,
    Utterance,
    clean_transcript,
    load_samples,
    make_batches,
    read_manifest,
    simplify_manifest,
    synth_corpus,
    write_manifest,
)
from .frontend import (
    AudioError,
    FeatureSequence,
    FrontendConfig,
    Waveform,
    extract_features,
    frame_count,
    load_wav,
    mel_filterbank,
    write_wav,
)
from .metrics import EvalResult, corpus_rates, edit_distance, evaluate, wer
from .model import (
    Model,
    ModelConfig,
    ModelError,
    backward,
    build_model,
    fingerprint,
    forward,
    micro_config,
    output_length,
    quartznet15x5_config,
    set_trainable,
    swap_decoder,
)
from .optim import OptimConfig, OptimError, OptimState, lr_at_step, novograd_step
from .rng import stream
from .transfer import (
    CheckpointError,
    StagePlan,
    StageSpec,
    TransferError,
    build_preset,
    load_checkpoint,
    parse_plan,
    run_plan,
    run_stage,
    save_checkpoint,
    transfer_init,
    write_plan,
)

__version__ = "0.1.0"
