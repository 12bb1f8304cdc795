"""Corpus construction: merge diarized segments into clips, annotate, filter,
build synthetic multi-speaker samples, and select per-stage training subsets.

The pipeline operates on metadata and concatenation plans only; waveform
cutting/denoising is delegated to adapter backends.
"""

from __future__ import annotations

import json
import logging
import random
import warnings
from dataclasses import dataclass, field, replace

from .script import MAX_SPEAKERS, SpeakerTag, strip_tags

logger = logging.getLogger(__name__)

MAX_CLIP_DURATION_S = 3600.0
DEFAULT_MAX_GAP_S = 10.0

STAGE1_MIN_DNSMOS = 2.8
STAGE2_MIN_DNSMOS = 3.4
STAGE2_MIN_SAMPLE_RATE_HZ = 24000
SYNTHETIC_MIN_DNSMOS = 3.4

DOMAIN_TAGS = ("podcast", "movie", "tv", "sports_commentary", "esports_commentary", "other")
NOISY_DOMAINS = frozenset({"movie", "tv", "sports_commentary", "esports_commentary"})

# Speaking-rate sanity bounds for the heuristic filter.
ZH_CHARS_PER_S = (1.0, 35.0)
EN_WORDS_PER_S = (0.3, 6.0)
REPETITION_MAX_REPEATS = 8
REPETITION_MAX_PERIOD = 8


class CorpusError(ValueError):
    pass


class UnsortedInput(CorpusError):
    pass


class SampleRateMismatch(CorpusError):
    pass


class QualityBelowThreshold(CorpusError):
    pass


class InsufficientMaterial(CorpusError):
    pass


class OverlappingSameSpeaker(UserWarning):
    pass


@dataclass
class DiarizationSegment:
    recording_id: str
    speaker_label: str
    start_s: float
    end_s: float
    audio_path: str | None = None
    domain_tag: str = "other"

    def __post_init__(self):
        if self.end_s <= self.start_s:
            raise CorpusError(
                f"segment {self.recording_id}[{self.start_s},{self.end_s}] is empty"
            )

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass
class AudioClipMeta:
    """Descriptor of one training clip assembled from diarization segments."""

    clip_id: str
    recording_id: str
    spans: list[tuple[float, float]]
    duration_s: float
    speaker_count: int
    dnsmos: float | None = None
    language: str | None = None
    true_sample_rate_hz: int | None = None
    domain_tag: str = "other"
    transcript: str | None = None
    audio_path: str | None = None

    def __post_init__(self):
        if self.duration_s > MAX_CLIP_DURATION_S:
            raise CorpusError(
                f"{self.clip_id}: duration {self.duration_s:.1f}s exceeds "
                f"{MAX_CLIP_DURATION_S:.0f}s cap"
            )
        if not 1 <= self.speaker_count <= MAX_SPEAKERS:
            raise CorpusError(
                f"{self.clip_id}: speaker count {self.speaker_count} outside "
                f"[1, {MAX_SPEAKERS}]"
            )
        if self.dnsmos is not None and not 1.0 <= self.dnsmos <= 5.0:
            raise CorpusError(f"{self.clip_id}: dnsmos {self.dnsmos} outside [1, 5]")
        if self.domain_tag not in DOMAIN_TAGS:
            raise CorpusError(f"{self.clip_id}: unknown domain tag {self.domain_tag!r}")

    def to_json_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "recording_id": self.recording_id,
            "spans": [list(span) for span in self.spans],
            "duration_s": self.duration_s,
            "speaker_count": self.speaker_count,
            "dnsmos": self.dnsmos,
            "language": self.language,
            "true_sample_rate_hz": self.true_sample_rate_hz,
            "domain_tag": self.domain_tag,
            "transcript": self.transcript,
            "audio_path": self.audio_path,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "AudioClipMeta":
        return cls(
            clip_id=doc["clip_id"],
            recording_id=doc["recording_id"],
            spans=[tuple(span) for span in doc["spans"]],
            duration_s=doc["duration_s"],
            speaker_count=doc["speaker_count"],
            dnsmos=doc.get("dnsmos"),
            language=doc.get("language"),
            true_sample_rate_hz=doc.get("true_sample_rate_hz"),
            domain_tag=doc.get("domain_tag", "other"),
            transcript=doc.get("transcript"),
            audio_path=doc.get("audio_path"),
        )


@dataclass
class StageConfig:
    """Per-stage data gates and sampling weights."""

    stage: int
    min_dnsmos: float
    min_sample_rate_hz: int
    single_speaker_weight: float = 1.0
    include_multi_speaker: bool = False
    include_synthetic: bool = False

    def __post_init__(self):
        if self.stage not in (1, 2, 3):
            raise CorpusError(f"stage must be 1, 2 or 3, got {self.stage}")
        if not 0.0 <= self.single_speaker_weight <= 1.0:
            raise CorpusError("single_speaker_weight must be in [0, 1]")
        if self.stage == 1 and self.min_dnsmos != STAGE1_MIN_DNSMOS:
            raise CorpusError(f"stage 1 requires min_dnsmos == {STAGE1_MIN_DNSMOS}")
        if self.stage in (2, 3) and (
            self.min_dnsmos != STAGE2_MIN_DNSMOS
            or self.min_sample_rate_hz != STAGE2_MIN_SAMPLE_RATE_HZ
        ):
            raise CorpusError(
                f"stage {self.stage} requires min_dnsmos == {STAGE2_MIN_DNSMOS} "
                f"and min_sample_rate_hz == {STAGE2_MIN_SAMPLE_RATE_HZ}"
            )

    @classmethod
    def for_stage(cls, stage: int) -> "StageConfig":
        if stage == 1:
            return cls(1, STAGE1_MIN_DNSMOS, 0)
        if stage == 2:
            return cls(2, STAGE2_MIN_DNSMOS, STAGE2_MIN_SAMPLE_RATE_HZ, 0.3)
        if stage == 3:
            return cls(
                3,
                STAGE2_MIN_DNSMOS,
                STAGE2_MIN_SAMPLE_RATE_HZ,
                0.3,
                include_multi_speaker=True,
                include_synthetic=True,
            )
        raise CorpusError(f"unknown stage {stage}")


@dataclass
class MergeResult:
    clips: list[AudioClipMeta]
    rejected: list[dict] = field(default_factory=list)


def merge_segments(
    segments: list[DiarizationSegment],
    max_gap_s: float = DEFAULT_MAX_GAP_S,
    max_duration_s: float = MAX_CLIP_DURATION_S,
) -> MergeResult:
    """Greedily merge sorted same-recording segments into clips.

    A clip closes when the next segment would push its covered time past
    ``max_duration_s`` or when the inter-segment gap exceeds ``max_gap_s``.
    Windows that end up with more than five distinct speakers, and single
    segments longer than the cap, are rejected with a diagnostic.
    """
    result = MergeResult(clips=[])
    if not segments:
        return result
    recording = segments[0].recording_id
    for prev, cur in zip(segments, segments[1:]):
        if cur.recording_id != recording:
            raise CorpusError("merge_segments expects segments of one recording")
        if cur.start_s < prev.start_s:
            raise UnsortedInput("segments must be sorted by start time")
        if cur.speaker_label == prev.speaker_label and cur.start_s < prev.end_s:
            warnings.warn(
                f"{recording}: overlapping segments for speaker {cur.speaker_label}",
                OverlappingSameSpeaker,
                stacklevel=2,
            )

    clip_index = 0

    def close(group: list[DiarizationSegment]):
        nonlocal clip_index
        speakers = {s.speaker_label for s in group}
        duration = sum(s.duration_s for s in group)
        clip_id = f"{recording}-{clip_index:04d}"
        clip_index += 1
        if len(speakers) > MAX_SPEAKERS:
            result.rejected.append(
                {"clip_id": clip_id, "reject_reason": "speaker_count"}
            )
            logger.warning("%s rejected: %d speakers", clip_id, len(speakers))
            return
        result.clips.append(
            AudioClipMeta(
                clip_id=clip_id,
                recording_id=recording,
                spans=[(s.start_s, s.end_s) for s in group],
                duration_s=duration,
                speaker_count=len(speakers),
                domain_tag=group[0].domain_tag,
                audio_path=group[0].audio_path,
            )
        )

    group: list[DiarizationSegment] = []
    group_duration = 0.0
    for seg in segments:
        if seg.duration_s > max_duration_s:
            result.rejected.append(
                {
                    "clip_id": f"{recording}-{clip_index:04d}",
                    "reject_reason": "segment_exceeds_max_duration",
                }
            )
            clip_index += 1
            if group:
                close(group)
                group, group_duration = [], 0.0
            continue
        if group:
            gap = seg.start_s - group[-1].end_s
            if gap > max_gap_s or group_duration + seg.duration_s > max_duration_s:
                close(group)
                group, group_duration = [], 0.0
        group.append(seg)
        group_duration += seg.duration_s
    if group:
        close(group)
    return result


def annotate(clip: AudioClipMeta, adapters) -> AudioClipMeta:
    """Fill dnsmos, language and true sample rate from adapter backends.

    Also fills the transcript when a speaker-tagged ASR backend is registered.
    """
    from .adapters import AdapterRole

    req = {"audio_path": clip.audio_path}
    dnsmos = adapters.invoke(AdapterRole.QSCORE, req)["dnsmos"]
    language = adapters.invoke(AdapterRole.LANGID, req)["language"]
    srate = adapters.invoke(AdapterRole.SRATE, req)["true_sample_rate_hz"]
    transcript = clip.transcript
    if adapters.has(AdapterRole.ASR_DIARIZE):
        transcript = adapters.invoke(
            AdapterRole.ASR_DIARIZE,
            {"audio_path": clip.audio_path, "language": language},
        )["text"]
    return replace(
        clip,
        dnsmos=dnsmos,
        language=language,
        true_sample_rate_hz=srate,
        transcript=transcript,
    )


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    reject_reason: str | None = None


def _is_cjk(ch: str) -> bool:
    code = ord(ch)
    return 0x3400 <= code <= 0x9FFF or 0xF900 <= code <= 0xFAFF


def heuristic_reject_reason(transcript: str | None, duration_s: float) -> str | None:
    """First failed heuristic gate, or None when the transcript looks sane."""
    text = strip_tags(transcript or "")
    if not text:
        return "empty_transcript"
    compact = "".join(text.split())
    if _has_periodic_repetition(compact):
        return "repetition"
    cjk = sum(_is_cjk(ch) for ch in compact)
    if duration_s <= 0:
        return "speaking_rate"
    if cjk * 2 >= len(compact):
        rate = len(compact) / duration_s
        low, high = ZH_CHARS_PER_S
    else:
        rate = len(text.split()) / duration_s
        low, high = EN_WORDS_PER_S
    if not low <= rate <= high:
        return "speaking_rate"
    return None


def heuristic_ok(transcript: str | None, duration_s: float) -> bool:
    return heuristic_reject_reason(transcript, duration_s) is None


def _has_periodic_repetition(
    compact: str,
    max_period: int = REPETITION_MAX_PERIOD,
    max_repeats: int = REPETITION_MAX_REPEATS,
) -> bool:
    """True when some pattern of period <= max_period tiles more than
    max_repeats times in a row (an ASR-hallucination fingerprint)."""
    n = len(compact)
    for period in range(1, max_period + 1):
        run = 0
        best = 0
        for i in range(period, n):
            if compact[i] == compact[i - period]:
                run += 1
                best = max(best, run)
            else:
                run = 0
        # run of matching positions L corresponds to (L + period) / period tiles
        if best + period > max_repeats * period:
            return True
    return False


def filter_clip(
    meta: AudioClipMeta, stage: StageConfig, transcript_language: str
) -> FilterDecision:
    """Stage gates: quality score, true sample rate, language consistency,
    transcript heuristics. Reports the first failed gate."""
    if meta.dnsmos is None or meta.dnsmos < stage.min_dnsmos:
        return FilterDecision(False, "dnsmos")
    if (meta.true_sample_rate_hz or 0) < stage.min_sample_rate_hz:
        return FilterDecision(False, "sample_rate")
    if meta.language != transcript_language:
        return FilterDecision(False, "language_mismatch")
    reason = heuristic_reject_reason(meta.transcript, meta.duration_s)
    if reason is not None:
        return FilterDecision(False, reason)
    return FilterDecision(True)


def route_denoise(meta: AudioClipMeta) -> bool:
    """True when the clip's domain is noise-heavy and should be denoised."""
    return meta.domain_tag in NOISY_DOMAINS


@dataclass
class SyntheticSample:
    """Concatenation plan for a synthetic multi-speaker conversation."""

    sample_id: str
    sample_rate_hz: int
    plan: list[tuple[str, str]]  # (speaker label, clip_id) in playback order
    transcript: str
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "sample_rate_hz": self.sample_rate_hz,
            "plan": [list(step) for step in self.plan],
            "transcript": self.transcript,
            "seed": self.seed,
        }


def build_synthetic_multispeaker(
    groups: list[list[AudioClipMeta]],
    n_speakers: int,
    seed: int,
    sample_id: str | None = None,
) -> SyntheticSample:
    """Interleave per-speaker clip groups into one synthetic conversation.

    Groups are assigned tags S1..Sn in order. Turns are generated round-robin
    with a seeded run length of 1-3 consecutive clips per turn, until some
    group runs dry. All clips must share one sample rate and score at least
    DNSMOS 3.4.
    """
    if not 3 <= n_speakers <= MAX_SPEAKERS:
        raise CorpusError(f"n_speakers must be in [3, {MAX_SPEAKERS}]")
    if len(groups) != n_speakers:
        raise CorpusError(f"expected {n_speakers} groups, got {len(groups)}")
    if any(not g for g in groups):
        raise InsufficientMaterial("every speaker group needs at least one clip")

    rates = {c.true_sample_rate_hz for g in groups for c in g}
    if len(rates) != 1 or None in rates:
        raise SampleRateMismatch(f"constituent sample rates differ: {sorted(map(str, rates))}")
    for g in groups:
        for c in g:
            if c.dnsmos is None or c.dnsmos < SYNTHETIC_MIN_DNSMOS:
                raise QualityBelowThreshold(
                    f"{c.clip_id}: dnsmos {c.dnsmos} below {SYNTHETIC_MIN_DNSMOS}"
                )

    rng = random.Random(seed)
    remaining = [list(g) for g in groups]
    tags = [SpeakerTag(i + 1) for i in range(n_speakers)]
    plan: list[tuple[str, str]] = []
    turn_texts: list[tuple[str, str]] = []
    spoken: set[int] = set()
    done = False
    while not done:
        for idx in range(n_speakers):
            run = rng.randint(1, 3)
            if not remaining[idx]:
                if len(spoken) < n_speakers:
                    raise InsufficientMaterial(
                        f"group {idx + 1} exhausted before all speakers spoke"
                    )
                done = True
                break
            take = remaining[idx][: run]
            del remaining[idx][: run]
            spoken.add(idx)
            plan.extend((tags[idx].label, c.clip_id) for c in take)
            text = " ".join(strip_tags(c.transcript or "") for c in take).strip()
            turn_texts.append((tags[idx].rendered, text))

    transcript = "".join(tag + text for tag, text in turn_texts)
    sid = sample_id or f"synth-{seed}"
    return SyntheticSample(
        sample_id=sid,
        sample_rate_hz=next(iter(rates)),
        plan=plan,
        transcript=transcript,
        seed=seed,
    )


@dataclass(frozen=True)
class PlanEntry:
    ref_id: str
    weight: float
    source: str  # "real" or "synthetic"


@dataclass
class SamplePlan:
    stage: int
    seed: int
    entries: list[PlanEntry]

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {"ref_id": e.ref_id, "weight": e.weight, "source": e.source},
                sort_keys=True,
            )
            for e in self.entries
        ]
        return "\n".join(lines) + ("\n" if lines else "")


def stage_select(
    dataset: list[AudioClipMeta],
    stage: StageConfig,
    seed: int,
    synthetic: list[SyntheticSample] = (),
) -> SamplePlan:
    """Select and weight clips for one curriculum stage.

    Stage 1 keeps 1-2 speaker clips at DNSMOS >= 2.8 (voice-clone variants are
    prompt-time renderings of these same clips, not separate entries). Stage 2
    tightens to DNSMOS >= 3.4 and true sample rate >= 24 kHz and down-weights
    single-speaker clips. Stage 3 adds real 3-5 speaker clips passing the same
    gates, plus synthetic samples. Entry order is a seeded shuffle.
    """
    entries: list[PlanEntry] = []
    for clip in sorted(dataset, key=lambda c: c.clip_id):
        if clip.dnsmos is None or clip.dnsmos < stage.min_dnsmos:
            continue
        if (clip.true_sample_rate_hz or 0) < stage.min_sample_rate_hz:
            continue
        if clip.speaker_count <= 2:
            weight = (
                stage.single_speaker_weight if clip.speaker_count == 1 else 1.0
            )
            entries.append(PlanEntry(clip.clip_id, weight, "real"))
        elif stage.include_multi_speaker:
            entries.append(PlanEntry(clip.clip_id, 1.0, "real"))
    if stage.include_synthetic:
        for sample in sorted(synthetic, key=lambda s: s.sample_id):
            entries.append(PlanEntry(sample.sample_id, 1.0, "synthetic"))
    rng = random.Random(seed)
    rng.shuffle(entries)
    return SamplePlan(stage=stage.stage, seed=seed, entries=entries)


def read_segments_jsonl(path) -> list[DiarizationSegment]:
    segments = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            segments.append(
                DiarizationSegment(
                    recording_id=doc["recording_id"],
                    speaker_label=doc["speaker_label"],
                    start_s=doc["start_s"],
                    end_s=doc["end_s"],
                    audio_path=doc.get("audio_path"),
                    domain_tag=doc.get("domain_tag", "other"),
                )
            )
    return segments


def write_manifest_jsonl(path, clips: list[AudioClipMeta]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for clip in clips:
            fh.write(json.dumps(clip.to_json_dict(), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_manifest_jsonl(path) -> list[AudioClipMeta]:
    clips = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                clips.append(AudioClipMeta.from_json_dict(json.loads(line)))
    return clips


def write_rejects_jsonl(path, rejects: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in rejects:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
            fh.write("\n")
