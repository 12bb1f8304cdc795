"""Chat-template rendering for dialogue synthesis prompts.

Two training templates exist: the voice-clone form with per-speaker reference
audio slots, and the common form without references. Inference prompts combine
reference slots and/or an audio prefix that generation continues. Rendering is
byte-stable; golden copies of the training templates live in ``templates/``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .script import MAX_SPEAKERS, DialogueScript, SpeakerTag

TEMPLATES_DIR = Path(__file__).parent / "templates"

GENERATED_MARKER = "<generated_audio>"
PREFIX_MARKER = "<prefix_audio>"

INFERENCE_MODES = ("voice_clone", "continuation", "voice_clone_and_continuation")
DEFAULT_INFERENCE_MODE = "voice_clone_and_continuation"


class PromptError(ValueError):
    pass


class MissingReference(PromptError):
    def __init__(self, tag: SpeakerTag):
        super().__init__(f"no reference audio for {tag.rendered}")
        self.tag = tag


class MissingPrefix(PromptError):
    pass


class OrphanReference(UserWarning):
    pass


@dataclass(frozen=True)
class AudioRef:
    """Opaque handle to a reference/prefix audio clip."""

    handle: str
    duration_s: float = 0.0


@dataclass
class ReferenceSet:
    """Ordered speaker tag -> reference audio mapping, contiguous from S1."""

    entries: dict[SpeakerTag, AudioRef]

    def __post_init__(self):
        if len(self.entries) > MAX_SPEAKERS:
            raise PromptError(f"at most {MAX_SPEAKERS} references allowed")
        indices = sorted(tag.index for tag in self.entries)
        if indices != list(range(1, len(indices) + 1)):
            raise PromptError(f"reference tags must be contiguous from S1, got {indices}")

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class DialoguePrefix:
    """Already-spoken dialogue head: its tagged transcript and audio."""

    transcript: str
    audio: AudioRef


@dataclass
class RenderedPrompt:
    text: str
    placeholders: dict[str, AudioRef | None] = field(default_factory=dict)

    def placeholder_map_json(self) -> str:
        doc = {
            marker: (
                None
                if ref is None
                else {"handle": ref.handle, "duration_s": ref.duration_s}
            )
            for marker, ref in self.placeholders.items()
        }
        return json.dumps(doc, ensure_ascii=False, indent=2, sort_keys=True)


def _reference_block(refs: ReferenceSet) -> tuple[list[str], dict[str, AudioRef | None]]:
    lines = ["Reference(s):"]
    placeholders: dict[str, AudioRef | None] = {}
    for tag in sorted(refs.entries, key=lambda t: t.index):
        marker = f"<audio_{tag.index}>"
        lines.append(f"{tag.rendered}: {marker}")
        placeholders[marker] = refs.entries[tag]
    return lines, placeholders


def _assemble(
    reference_lines: list[str],
    text_line: str,
    assistant_audio: list[str],
) -> str:
    lines = ["<|im_start|>user", "<user_inst>"]
    lines.extend(reference_lines)
    lines.append("{other fields: None}")
    lines.append("Text:")
    lines.append(text_line)
    lines.append("</user_inst><|im_end|>")
    lines.append("<|im_start|>assistant")
    lines.extend(assistant_audio)
    lines.append("<|im_end|>")
    return "\n".join(lines)


def _check_refs_cover_script(script: DialogueScript, refs: ReferenceSet) -> None:
    script_tags = set(script.speakers())
    for tag in script_tags:
        if tag not in refs.entries:
            raise MissingReference(tag)
    for tag in refs.entries:
        if tag not in script_tags:
            warnings.warn(
                f"reference {tag.rendered} is unused by the script",
                OrphanReference,
                stacklevel=3,
            )


def render_voice_clone_prompt(
    script: DialogueScript, refs: ReferenceSet
) -> RenderedPrompt:
    """Training prompt with one reference slot per speaker."""
    if not refs.entries:
        raise PromptError("voice-clone prompt needs at least one reference")
    _check_refs_cover_script(script, refs)
    ref_lines, placeholders = _reference_block(refs)
    text = _assemble(ref_lines, script.render(), [GENERATED_MARKER])
    placeholders[GENERATED_MARKER] = None
    return RenderedPrompt(text=text, placeholders=placeholders)


def render_common_tts_prompt(script: DialogueScript) -> RenderedPrompt:
    """Training prompt without reference audio."""
    text = _assemble(["Reference(s): None"], script.render(), [GENERATED_MARKER])
    return RenderedPrompt(text=text, placeholders={GENERATED_MARKER: None})


def build_inference_prompt(
    mode: str,
    script: DialogueScript,
    refs: ReferenceSet | None = None,
    prefix: DialoguePrefix | None = None,
) -> RenderedPrompt:
    """Assemble an inference prompt for one of the cloning paradigms.

    ``voice_clone`` fills reference slots only. ``continuation`` renders the
    no-reference template with the prefix audio heading the assistant stream
    (and the prefix transcript heading the text). The combined mode does both
    and is the default configuration.
    """
    if mode not in INFERENCE_MODES:
        raise PromptError(f"unknown inference mode {mode!r}")
    use_refs = mode in ("voice_clone", "voice_clone_and_continuation")
    use_prefix = mode in ("continuation", "voice_clone_and_continuation")

    if use_refs:
        if refs is None or not refs.entries:
            raise MissingReference(SpeakerTag(1))
        _check_refs_cover_script(script, refs)
        ref_lines, placeholders = _reference_block(refs)
    else:
        ref_lines, placeholders = ["Reference(s): None"], {}

    text_line = script.render()
    assistant_audio = []
    if use_prefix:
        if prefix is None:
            raise MissingPrefix(f"mode {mode!r} requires a dialogue prefix")
        text_line = prefix.transcript + text_line
        assistant_audio.append(PREFIX_MARKER)
        placeholders[PREFIX_MARKER] = prefix.audio
    assistant_audio.append(GENERATED_MARKER)
    placeholders[GENERATED_MARKER] = None

    text = _assemble(ref_lines, text_line, assistant_audio)
    return RenderedPrompt(text=text, placeholders=placeholders)


def load_golden_template(name: str) -> str:
    """Read a shipped golden template (canonical byte form, no trailing newline)."""
    return (TEMPLATES_DIR / name).read_text(encoding="utf-8")
