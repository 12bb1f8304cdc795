"""Language-identification backend.

Request  {text | audio_path}
Artifact {language}

Text requests use Unicode script ranges (a fastText-style character heuristic
without the model): CJK -> zh, kana -> ja, hangul -> ko, cyrillic -> ru,
otherwise en. Audio requests need a real model; without one the honest answer
is the BCP-47 undetermined tag "und".
"""

from __future__ import annotations

import sys

from .common import run_backend

_RANGES = (
    ((0x3040, 0x30FF), "ja"),  # hiragana + katakana, checked before CJK
    ((0x4E00, 0x9FFF), "zh"),
    ((0x3400, 0x4DBF), "zh"),
    ((0xAC00, 0xD7AF), "ko"),
    ((0x0400, 0x04FF), "ru"),
)


def detect_text_language(text: str) -> str:
    counts: dict[str, int] = {}
    letters = 0
    for ch in text:
        if not ch.strip():
            continue
        code = ord(ch)
        letters += 1
        for (lo, hi), lang in _RANGES:
            if lo <= code <= hi:
                counts[lang] = counts.get(lang, 0) + 1
                break
    if not letters:
        return "und"
    best = max(counts.items(), key=lambda kv: kv[1], default=(None, 0))
    if best[1] * 5 >= letters:  # a fifth of the characters decides the script
        return best[0]
    return "en"


def handle(request: dict) -> dict:
    if "text" in request and request["text"] is not None:
        return {"language": detect_text_language(request["text"])}
    return {"language": "und"}


MANIFEST = {
    "model": "unicode-script heuristic (text); und for audio without a model",
    "version": "0.1.0",
}


def main(argv=None) -> int:
    return run_backend("langid", handle, MANIFEST, argv)


if __name__ == "__main__":
    sys.exit(main())
