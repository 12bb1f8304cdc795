"""Speech-recognition backend.

Request  {audio_path, language}
Artifact {text}

Engines (env ``DIALOGKIT_ASR_ENGINE``):
  null (default) - returns an empty transcript. Transcription genuinely
      requires a model; the null engine keeps offline runs schema-valid and
      deterministic (downstream WER then measures pure deletion).
  whisper - Whisper via the transformers pipeline, when the checkpoint is
      available locally (env ``WHISPER_MODEL`` selects it).
"""

from __future__ import annotations

import os
import sys

from .common import run_backend


def _whisper_transcript(request: dict) -> dict:
    from transformers import pipeline

    model = os.environ.get("WHISPER_MODEL", "openai/whisper-large-v3")
    asr = pipeline("automatic-speech-recognition", model=model)
    out = asr(
        request["audio_path"],
        generate_kwargs={"language": request.get("language")},
    )
    return {"text": out["text"]}


def handle(request: dict) -> dict:
    engine = os.environ.get("DIALOGKIT_ASR_ENGINE", "null")
    if engine == "whisper":
        return _whisper_transcript(request)
    if engine != "null":
        raise ValueError(f"unknown asr engine {engine!r}")
    return {"text": ""}


MANIFEST = {
    "model": "whisper (opt-in) / null transcript fallback",
    "version": "0.1.0",
}


def main(argv=None) -> int:
    return run_backend("asr", handle, MANIFEST, argv)


if __name__ == "__main__":
    sys.exit(main())
