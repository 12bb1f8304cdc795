"""Objective dialogue-synthesis evaluation: forced-alignment fragmentation,
speaker attribution accuracy (ACC), speaker similarity (SIM), and WER.

Pipeline per case: align script words to the generated audio, time-stamp the
punctuation fragments, embed fragments and per-speaker prompt audio, attribute
each fragment to the nearest prompt voice, and transcribe for WER. Ground
truth speakers come straight from the script's tags, so no diarization model
is involved.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .adapters import AdapterFailure, AdapterRole, AdapterSet, WordAlignment, alignments_from_artifact
from .script import (
    DialogueScript,
    Fragment,
    SpeakerTag,
    normalize_for_wer,
    split_fragments,
    strip_tags,
)

logger = logging.getLogger(__name__)

ALIGNMENT_GAP_THRESHOLD = 0.20
MIN_FRAGMENT_S = 0.5


class EvalError(ValueError):
    pass


class EmptyEval(EvalError):
    pass


class EmptyReference(EvalError):
    pass


class AlignmentGap(EvalError):
    """More than the tolerated share of words failed to align."""

    def __init__(self, unaligned: int, total: int):
        super().__init__(f"{unaligned}/{total} words unaligned")
        self.unaligned = unaligned
        self.total = total


@dataclass
class EvalCase:
    case_id: str
    script: DialogueScript
    generated_audio: str
    prompt_audio: dict[SpeakerTag, str]
    language: str = "en"

    def __post_init__(self):
        for tag in self.script.speakers():
            if tag not in self.prompt_audio:
                from .prompting import MissingReference

                raise MissingReference(tag)


@dataclass
class ScoredFragment:
    fragment: Fragment
    embedding: np.ndarray
    prediction: SpeakerTag | None = None


@dataclass
class CaseResult:
    case_id: str
    language: str
    fragment_count: int = 0
    scored_fragments: int = 0
    correct_fragments: int = 0
    sim: float | None = None
    wer: float | None = None
    edit_distance: int = 0
    ref_tokens: int = 0
    dropped_fragments: int = 0
    excluded_from_attribution: bool = False
    error: str | None = None

    @property
    def acc(self) -> float | None:
        if self.scored_fragments == 0:
            return None
        return self.correct_fragments / self.scored_fragments


@dataclass
class EvalReport:
    acc: float | None
    sim: float | None
    wer: float | None
    fragment_count: int
    per_case: list[CaseResult] = field(default_factory=list)
    per_language: dict[str, dict] = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "acc": self.acc,
            "sim": self.sim,
            "wer": self.wer,
            "fragment_count": self.fragment_count,
            "per_language": self.per_language,
            "per_case": [
                {
                    "case_id": c.case_id,
                    "language": c.language,
                    "fragment_count": c.fragment_count,
                    "scored_fragments": c.scored_fragments,
                    "correct_fragments": c.correct_fragments,
                    "acc": c.acc,
                    "sim": c.sim,
                    "wer": c.wer,
                    "edit_distance": c.edit_distance,
                    "ref_tokens": c.ref_tokens,
                    "dropped_fragments": c.dropped_fragments,
                    "excluded_from_attribution": c.excluded_from_attribution,
                    "error": c.error,
                }
                for c in self.per_case
            ],
        }
        return json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=2)

    def to_table(self) -> str:
        """Aligned text table, one row per language plus an overall row."""
        rows = []
        for lang in sorted(self.per_language):
            stats = self.per_language[lang]
            rows.append((lang.upper(), stats["acc"], stats["sim"], stats["wer"]))
        rows.append(("ALL", self.acc, self.sim, self.wer))

        def fmt(value, pct=False):
            if value is None:
                return "-"
            return f"{100 * value:.2f}%" if pct else f"{value:.4f}"

        lines = [f"{'Language':<10}{'ACC↑':>9}{'SIM↑':>9}{'WER↓':>9}"]
        for name, acc, sim, wer in rows:
            lines.append(
                f"{name:<10}{fmt(acc):>9}{fmt(sim):>9}{fmt(wer, pct=True):>9}"
            )
        return "\n".join(lines)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0:
        return 0.0
    return float(np.dot(a, b) / denom)


def fragment_tokens(fragment_text: str, language: str) -> list[str]:
    """Aligner word units for one fragment (EN: words, ZH: characters)."""
    return normalize_for_wer(strip_tags(fragment_text), language)


def align_case(case: EvalCase, adapters: AdapterSet) -> list[WordAlignment | None]:
    """Word alignments for the case script, positionally matched to the
    request word list (None where a word failed to align).

    Raises AlignmentGap when more than 20% of words are unaligned.
    """
    words: list[str] = []
    for frag in split_fragments(case.script):
        words.extend(fragment_tokens(frag.text, case.language))
    if not words:
        raise EmptyEval(f"{case.case_id}: script has no alignable words")
    artifact = adapters.invoke(
        AdapterRole.ALIGNER,
        {"audio_path": case.generated_audio, "words": words,
         "language": case.language},
    )
    returned = alignments_from_artifact(artifact)

    matched: list[WordAlignment | None] = [None] * len(words)
    j = 0
    for rec in returned:
        while j < len(words) and words[j] != rec.word:
            j += 1
        if j == len(words):
            break
        matched[j] = rec
        j += 1
    unaligned = sum(1 for m in matched if m is None)
    if unaligned > ALIGNMENT_GAP_THRESHOLD * len(words):
        raise AlignmentGap(unaligned, len(words))
    return matched


def fragment_spans(
    fragments: list[Fragment],
    alignments: list[WordAlignment | None],
    language: str,
) -> tuple[list[Fragment], int]:
    """Assign start/end times to fragments from their aligned words.

    Fragments whose words all failed to align are dropped. Returns the
    time-stamped fragments and the dropped count.
    """
    spanned: list[Fragment] = []
    dropped = 0
    cursor = 0
    for frag in fragments:
        n_words = len(fragment_tokens(frag.text, language))
        window = [a for a in alignments[cursor : cursor + n_words] if a is not None]
        cursor += n_words
        if n_words == 0 or not window:
            dropped += 1
            continue
        spanned.append(
            Fragment(
                text=frag.text,
                turn_index=frag.turn_index,
                gt_speaker=frag.gt_speaker,
                start_s=window[0].start_s,
                end_s=window[-1].end_s,
            )
        )
    return spanned, dropped


def merge_short_fragments(
    fragments: list[Fragment], min_duration_s: float = MIN_FRAGMENT_S
) -> list[Fragment]:
    """Fold fragments shorter than the minimum into the preceding fragment of
    the same speaker (very short spans embed unreliably)."""
    merged: list[Fragment] = []
    for frag in fragments:
        if (
            merged
            and frag.duration_s is not None
            and frag.duration_s < min_duration_s
            and merged[-1].gt_speaker == frag.gt_speaker
        ):
            prev = merged[-1]
            merged[-1] = Fragment(
                text=f"{prev.text} {frag.text}",
                turn_index=prev.turn_index,
                gt_speaker=prev.gt_speaker,
                start_s=prev.start_s,
                end_s=frag.end_s,
            )
        else:
            merged.append(frag)
    return merged


def attribute_speaker(
    frag_embedding: np.ndarray,
    prompt_embeddings: dict[SpeakerTag, np.ndarray],
) -> SpeakerTag:
    """Nearest prompt voice by cosine similarity; ties go to the lowest index."""
    if not prompt_embeddings:
        raise EvalError("no candidate speakers")
    best_tag = None
    best_score = -np.inf
    for tag in sorted(prompt_embeddings, key=lambda t: t.index):
        score = cosine_similarity(frag_embedding, prompt_embeddings[tag])
        if score > best_score:
            best_tag, best_score = tag, score
    return best_tag


def compute_acc(
    predictions: list[SpeakerTag], ground_truth: list[SpeakerTag]
) -> float:
    if len(predictions) != len(ground_truth):
        raise EvalError("prediction/ground-truth length mismatch")
    if not predictions:
        raise EmptyEval("no fragments to score")
    correct = sum(p == g for p, g in zip(predictions, ground_truth))
    return correct / len(predictions)


def compute_sim(
    fragments: list[ScoredFragment],
    prompt_embeddings: dict[SpeakerTag, np.ndarray],
) -> float:
    """Mean cosine similarity of fragments to their true speaker's prompt."""
    if not fragments:
        raise EmptyEval("no fragments to score")
    sims = [
        cosine_similarity(f.embedding, prompt_embeddings[f.fragment.gt_speaker])
        for f in fragments
    ]
    return float(np.mean(sims))


def edit_distance(ref: list[str], hyp: list[str]) -> int:
    """Levenshtein distance over tokens (two-row dynamic programming)."""
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        cur = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (r != h),
            )
        prev = cur
    return prev[-1]


def compute_wer(ref: str, hyp: str, language: str) -> float:
    """Token error rate after tag stripping and normalization.

    English scores over words, Chinese over characters.
    """
    ref_tokens = normalize_for_wer(strip_tags(ref), language)
    hyp_tokens = normalize_for_wer(strip_tags(hyp), language)
    if not ref_tokens:
        raise EmptyReference("reference text has no tokens after normalization")
    return edit_distance(ref_tokens, hyp_tokens) / len(ref_tokens)


def _embed(adapters: AdapterSet, request: dict) -> np.ndarray:
    artifact = adapters.invoke(AdapterRole.EMBEDDER, request)
    return np.asarray(artifact["vector"], dtype=float)


def evaluate_case(
    case: EvalCase,
    adapters: AdapterSet,
    min_fragment_s: float = MIN_FRAGMENT_S,
) -> CaseResult:
    """Run the full objective pipeline for one case."""
    result = CaseResult(case_id=case.case_id, language=case.language)

    # intelligibility: ASR on the generated audio vs the script text
    try:
        asr = adapters.invoke(
            AdapterRole.ASR,
            {"audio_path": case.generated_audio, "language": case.language},
        )
        ref_tokens = normalize_for_wer(strip_tags(case.script.render()), case.language)
        hyp_tokens = normalize_for_wer(strip_tags(asr["text"]), case.language)
        if ref_tokens:
            result.edit_distance = edit_distance(ref_tokens, hyp_tokens)
            result.ref_tokens = len(ref_tokens)
            result.wer = result.edit_distance / result.ref_tokens
    except AdapterFailure as exc:
        result.error = str(exc)

    # attribution and similarity
    try:
        matched = align_case(case, adapters)
        fragments = split_fragments(case.script)
        spanned, dropped = fragment_spans(fragments, matched, case.language)
        result.dropped_fragments = dropped
        spanned = merge_short_fragments(spanned, min_fragment_s)
        result.fragment_count = len(spanned)
        if not spanned:
            result.excluded_from_attribution = True
            return result

        prompt_embeddings = {
            tag: _embed(
                adapters,
                {"audio_path": path, "true_speaker": tag.index},
            )
            for tag, path in case.prompt_audio.items()
        }
        speakers = case.script.speakers()
        scored: list[ScoredFragment] = []
        for index, frag in enumerate(spanned):
            embedding = _embed(
                adapters,
                {
                    "audio_path": case.generated_audio,
                    "start_s": frag.start_s,
                    "end_s": frag.end_s,
                    "true_speaker": frag.gt_speaker.index,
                    "fragment_index": index,
                },
            )
            prediction = (
                attribute_speaker(embedding, prompt_embeddings)
                if len(speakers) >= 2
                else frag.gt_speaker
            )
            scored.append(ScoredFragment(frag, embedding, prediction))

        result.scored_fragments = len(scored)
        result.correct_fragments = sum(
            s.prediction == s.fragment.gt_speaker for s in scored
        )
        result.sim = compute_sim(scored, prompt_embeddings)
    except AlignmentGap as exc:
        result.excluded_from_attribution = True
        result.error = f"alignment_gap: {exc}"
    except (AdapterFailure, EvalError) as exc:
        result.excluded_from_attribution = True
        result.error = result.error or str(exc)
    return result


def run_eval(
    cases: list[EvalCase],
    adapters: AdapterSet,
    min_fragment_s: float = MIN_FRAGMENT_S,
) -> EvalReport:
    """Evaluate a batch of cases; per-case failures become diagnostics.

    ACC and WER pool across all fragments/tokens (micro average); SIM averages
    per-case means.
    """
    if not cases:
        raise EmptyEval("no cases to evaluate")
    results = [evaluate_case(case, adapters, min_fragment_s) for case in cases]
    return build_report(results)


def build_report(results: list[CaseResult]) -> EvalReport:
    def summarize(subset: list[CaseResult]) -> dict:
        scored = sum(c.scored_fragments for c in subset)
        correct = sum(c.correct_fragments for c in subset)
        sims = [c.sim for c in subset if c.sim is not None]
        edits = sum(c.edit_distance for c in subset)
        tokens = sum(c.ref_tokens for c in subset)
        return {
            "acc": correct / scored if scored else None,
            "sim": float(np.mean(sims)) if sims else None,
            "wer": edits / tokens if tokens else None,
            "fragment_count": scored,
            "cases": len(subset),
            "excluded_cases": sum(c.excluded_from_attribution for c in subset),
            "dropped_fragments": sum(c.dropped_fragments for c in subset),
        }

    overall = summarize(results)
    languages = sorted({c.language for c in results})
    per_language = {
        lang: summarize([c for c in results if c.language == lang])
        for lang in languages
    }
    return EvalReport(
        acc=overall["acc"],
        sim=overall["sim"],
        wer=overall["wer"],
        fragment_count=overall["fragment_count"],
        per_case=results,
        per_language=per_language,
    )


def read_testset_jsonl(path) -> list[dict]:
    """Read an eval manifest: {case_id, script_path, prompt_audio, language}."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
