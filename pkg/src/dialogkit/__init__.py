"""Corpus engineering and evaluation toolkit for multi-speaker
spoken-dialogue speech synthesis."""

from .script import (
    DialogueScript,
    Fragment,
    SpeakerTag,
    augment_punctuation,
    chunk_turns,
    normalize_for_wer,
    parse_script,
    split_fragments,
    strip_tags,
)
from .delay_codec import (
    DelayedGrid,
    TokenGrid,
    apply_delay,
    frame_accounting,
    revert_delay,
    select_layers,
)
from .corpus import (
    AudioClipMeta,
    DiarizationSegment,
    StageConfig,
    build_synthetic_multispeaker,
    filter_clip,
    heuristic_ok,
    merge_segments,
    route_denoise,
    stage_select,
)
from .adapters import AdapterRole, AdapterSet
from .prompting import (
    AudioRef,
    ReferenceSet,
    RenderedPrompt,
    build_inference_prompt,
    render_common_tts_prompt,
    render_voice_clone_prompt,
)
from .objective import (
    EvalCase,
    EvalReport,
    attribute_speaker,
    compute_acc,
    compute_sim,
    compute_wer,
    run_eval,
)
from .subjective import (
    EloResult,
    PairwiseJudgment,
    compute_elo,
    compute_win_rates,
    segment_for_rating,
    segment_pair_for_rating,
)

__version__ = "0.1.0"
