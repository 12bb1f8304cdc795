"""Speaker-tagged dialogue scripts: parsing, normalization, splitting, augmentation.

A script is UTF-8 text with inline speaker tags, e.g. ``[S1]Hi there.[S2]Hello!``.
Text between two tags belongs to the preceding tag. Bracketed spans that are not
speaker tags (``[laugh]``, ``[music]``) are treated as sound-event annotations.
"""

from __future__ import annotations

import json
import random
import re
import unicodedata
from dataclasses import dataclass

MAX_SPEAKERS = 5

_TAG_RE = re.compile(r"\[S(\d+)\]")
_BRACKET_RE = re.compile(r"\[[^\]]*\]")

# Sentence-final delimiters used for fragment splitting. Commas intentionally
# excluded so fragments stay utterance-sized.
SENTENCE_DELIMITERS = ".?!…。？！；;\n"

_COMMA_TOKENS = (",", "，")
_PERIOD_TOKENS = (".", "。")

# Replacement inventories for punctuation augmentation. Keep the member order
# stable: it is part of the seeded-RNG contract.
COMMA_REPLACEMENTS = (
    "、",  # 、
    ";",
    "；",  # ；
    "：",  # ：
    ":",
    "-",
    "_",
    "---",
    "--",
    "―",  # ―
    "\n",
    " ",
)
PERIOD_REPLACEMENTS = (
    "……",  # ……
    "......",
    "…",  # …
    "...",
    "～",  # ～
    "~",
    "\n",
    " ",
)
COMMA_REPLACE_PROB = 0.10
PERIOD_REPLACE_PROB = 0.05


class ScriptError(ValueError):
    """Base class for script parsing/validation errors."""


class NoSpeakerTag(ScriptError):
    pass


class SpeakerIndexOutOfRange(ScriptError):
    pass


class GappedSpeakerSet(ScriptError):
    pass


class EmptyTurn(ScriptError):
    pass


class UnattributedText(ScriptError):
    """Non-whitespace text appears before the first speaker tag."""


class UnsupportedLanguage(ScriptError):
    pass


@dataclass(frozen=True, order=True)
class SpeakerTag:
    """A speaker slot; rendered form is ``[S<index>]``."""

    index: int

    def __post_init__(self):
        if not 1 <= self.index <= MAX_SPEAKERS:
            raise SpeakerIndexOutOfRange(
                f"speaker index {self.index} outside [1, {MAX_SPEAKERS}]"
            )

    @property
    def label(self) -> str:
        return f"S{self.index}"

    @property
    def rendered(self) -> str:
        return f"[S{self.index}]"

    @classmethod
    def from_label(cls, label: str) -> "SpeakerTag":
        m = re.fullmatch(r"\[?S(\d+)\]?", label.strip())
        if not m:
            raise ScriptError(f"not a speaker label: {label!r}")
        return cls(int(m.group(1)))


@dataclass
class Turn:
    speaker: SpeakerTag
    text: str


@dataclass
class DialogueScript:
    """Ordered speaker-tagged turns plus a language code (BCP-47 primary subtag)."""

    turns: list[Turn]
    language: str = "en"

    def speakers(self) -> list[SpeakerTag]:
        """Distinct speakers in first-appearance order."""
        seen: dict[SpeakerTag, None] = {}
        for t in self.turns:
            seen.setdefault(t.speaker)
        return list(seen)

    def render(self) -> str:
        return "".join(t.speaker.rendered + t.text for t in self.turns)

    def text_only(self) -> str:
        """All turn text, tags and sound events stripped."""
        return strip_tags(self.render())


@dataclass
class Fragment:
    """A punctuation-delimited utterance span of one turn.

    ``start_s``/``end_s`` stay None until the fragment is aligned to audio.
    """

    text: str
    turn_index: int
    gt_speaker: SpeakerTag
    start_s: float | None = None
    end_s: float | None = None

    @property
    def duration_s(self) -> float | None:
        if self.start_s is None or self.end_s is None:
            return None
        return self.end_s - self.start_s


def parse_script(raw: str, language: str = "en") -> DialogueScript:
    """Parse raw tagged text into a DialogueScript.

    Text between two tags belongs to the preceding tag; sound-event spans are
    kept verbatim inside turn text. The distinct speaker set must be S1..Sn
    with no gaps.
    """
    matches = list(_TAG_RE.finditer(raw))
    if not matches:
        raise NoSpeakerTag("no [S<k>] speaker tag found")
    if raw[: matches[0].start()].strip():
        raise UnattributedText("text before the first speaker tag")

    turns: list[Turn] = []
    for i, m in enumerate(matches):
        index = int(m.group(1))
        if not 1 <= index <= MAX_SPEAKERS:
            raise SpeakerIndexOutOfRange(
                f"speaker index {index} outside [1, {MAX_SPEAKERS}]"
            )
        end = matches[i + 1].start() if i + 1 < len(matches) else len(raw)
        text = raw[m.end() : end].strip()
        if not text:
            raise EmptyTurn(f"empty text for tag [S{index}] at offset {m.start()}")
        turns.append(Turn(SpeakerTag(index), text))

    indices = {t.speaker.index for t in turns}
    if indices != set(range(1, max(indices) + 1)):
        raise GappedSpeakerSet(f"speaker set {sorted(indices)} has gaps")
    return DialogueScript(turns=turns, language=language)


def strip_tags(raw: str) -> str:
    """Remove speaker tags and sound-event spans, collapsing whitespace.

    Any ``[...]`` span is dropped (speaker tags and sound events alike);
    remaining whitespace runs collapse to single spaces. Idempotent.
    """
    return " ".join(_BRACKET_RE.sub(" ", raw).split())


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in ("P", "S")


def _strip_punct(text: str) -> str:
    # Apostrophes vanish in place ("don't" -> "dont"); other punctuation and
    # symbols become spaces so they can't glue neighbouring words together.
    out = []
    for ch in text:
        if ch in ("'", "’"):
            continue
        out.append(" " if _is_punct(ch) else ch)
    return "".join(out)


def _normalize_words(text: str) -> list[str]:
    return _strip_punct(text.lower()).split()


def _normalize_chars(text: str) -> list[str]:
    return list("".join(_strip_punct(text.lower()).split()))


_WER_NORMALIZERS = {
    "en": _normalize_words,
    "zh": _normalize_chars,
}


def register_wer_normalizer(language: str, fn) -> None:
    """Register a tokenizer for an additional primary language subtag."""
    _WER_NORMALIZERS[language.lower()] = fn


def normalize_for_wer(text: str, language: str) -> list[str]:
    """Tokenize text for error-rate scoring.

    Lowercases and removes punctuation; English yields whitespace words,
    Chinese yields individual characters. Digit runs stay literal. The input
    is expected to be tag-stripped already.
    """
    primary = language.split("-")[0].lower()
    try:
        normalizer = _WER_NORMALIZERS[primary]
    except KeyError:
        raise UnsupportedLanguage(f"no WER normalizer registered for {language!r}")
    return normalizer(text)


def split_fragments(script: DialogueScript) -> list[Fragment]:
    """Split each turn at sentence-final punctuation into Fragments.

    Delimiters stay attached to the preceding text; delimiter-only spans merge
    into the previous fragment of the turn. Fragments inherit the turn's
    speaker and 0-based turn index.
    """
    fragments: list[Fragment] = []
    for turn_index, turn in enumerate(script.turns):
        pieces = _split_turn(turn.text)
        for piece in pieces:
            fragments.append(Fragment(piece, turn_index, turn.speaker))
    return fragments


def _split_turn(text: str) -> list[str]:
    delims = set(SENTENCE_DELIMITERS)
    spans: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        if text[i] in delims:
            # extend through the whole delimiter run
            j = i
            while j < n and text[j] in delims:
                j += 1
            spans.append(text[start:j])
            start = j
            i = j
        else:
            i += 1
    if start < n:
        spans.append(text[start:])

    pieces: list[str] = []
    for span in spans:
        stripped = span.strip()
        if not stripped:
            continue
        if all(ch in delims for ch in stripped) and pieces:
            # delimiter-only continuation ("..." after a sentence) sticks to
            # the previous fragment
            pieces[-1] = (pieces[-1] + span).strip()
        else:
            pieces.append(stripped)
    return pieces


def chunk_turns(script: DialogueScript, turns_per_chunk: int) -> list[DialogueScript]:
    """Split a script into consecutive chunks of ``turns_per_chunk`` turns.

    The last chunk may be shorter. Speaker indexing is left untouched, so
    chunks may start at a tag other than S1 and are not re-validated.
    """
    if turns_per_chunk < 1:
        raise ValueError("turns_per_chunk must be >= 1")
    chunks = []
    for i in range(0, len(script.turns), turns_per_chunk):
        chunks.append(
            DialogueScript(
                turns=list(script.turns[i : i + turns_per_chunk]),
                language=script.language,
            )
        )
    return chunks


def augment_punctuation(text: str, seed: int) -> str:
    """Randomly diversify comma/period tokens, deterministically per seed.

    Each ``,``/``，`` is independently replaced with probability 0.10 and each
    ``.``/``。`` with probability 0.05, by a uniform draw from the matching
    replacement inventory. All other characters pass through untouched.
    """
    rng = random.Random(seed)
    out: list[str] = []
    for ch in text:
        if ch in _COMMA_TOKENS:
            if rng.random() < COMMA_REPLACE_PROB:
                out.append(rng.choice(COMMA_REPLACEMENTS))
            else:
                out.append(ch)
        elif ch in _PERIOD_TOKENS:
            if rng.random() < PERIOD_REPLACE_PROB:
                out.append(rng.choice(PERIOD_REPLACEMENTS))
            else:
                out.append(ch)
        else:
            out.append(ch)
    return "".join(out)


def fragments_to_json(fragments: list[Fragment]) -> str:
    """Serialize fragments to the canonical JSON document."""
    doc = {
        "fragments": [
            {
                "text": f.text,
                "turn_index": f.turn_index,
                "speaker": f.gt_speaker.label,
                "start_s": f.start_s,
                "end_s": f.end_s,
            }
            for f in fragments
        ]
    }
    return json.dumps(doc, ensure_ascii=False, indent=2)


def fragments_from_json(payload: str) -> list[Fragment]:
    doc = json.loads(payload)
    out = []
    for rec in doc["fragments"]:
        out.append(
            Fragment(
                text=rec["text"],
                turn_index=rec["turn_index"],
                gt_speaker=SpeakerTag.from_label(rec["speaker"]),
                start_s=rec.get("start_s"),
                end_s=rec.get("end_s"),
            )
        )
    return out
