"""Forced-alignment backend.

Request  {audio_path, words: [string], language}
Artifact {alignments: [{word, start_s, end_s, score}]}

Engines (env ``DIALOGKIT_ALIGNER_ENGINE``):
  dsp (default) - deterministic fallback: the energy-gated voiced region is
      distributed across the words, each span weighted by word length. Coarse
      but monotone and schema-valid; scores sit below 1.0 to mark the
      approximation.
  mms - torchaudio's multilingual forced-alignment pipeline; requires torch,
      torchaudio, and the checkpoint available locally.
"""

from __future__ import annotations

import os
import sys

import numpy as np

from .common import read_wav, run_backend

FALLBACK_SCORE = 0.5


def _voiced_region(rate: int, samples: np.ndarray) -> tuple[float, float]:
    if not len(samples):
        return 0.0, 0.0
    frame = max(1, rate // 100)
    n_frames = len(samples) // frame
    if n_frames == 0:
        return 0.0, len(samples) / rate
    energy = np.abs(samples[: n_frames * frame]).reshape(n_frames, frame).mean(axis=1)
    threshold = 0.05 * energy.max()
    voiced = np.nonzero(energy > threshold)[0]
    if not len(voiced):
        return 0.0, len(samples) / rate
    return voiced[0] * frame / rate, (voiced[-1] + 1) * frame / rate


def _length_weighted_alignment(request: dict) -> dict:
    rate, samples = read_wav(request["audio_path"])
    words = request["words"]
    if not words:
        return {"alignments": []}
    start, end = _voiced_region(rate, samples)
    if end <= start:
        end = start + 1e-3 * len(words)
    weights = np.array([max(len(w), 1) for w in words], dtype=float)
    edges = np.concatenate([[0.0], np.cumsum(weights)]) / weights.sum()
    times = start + edges * (end - start)
    alignments = []
    for i, word in enumerate(words):
        alignments.append(
            {
                "word": word,
                "start_s": float(times[i]),
                "end_s": float(times[i + 1]),
                "score": FALLBACK_SCORE,
            }
        )
    return {"alignments": alignments}


def _torchaudio_alignment(request: dict) -> dict:
    import torch
    import torchaudio

    bundle = torchaudio.pipelines.MMS_FA
    model = bundle.get_model()
    tokenizer = bundle.get_tokenizer()
    aligner = bundle.get_aligner()
    waveform, rate = torchaudio.load(request["audio_path"])
    waveform = torchaudio.functional.resample(waveform, rate, bundle.sample_rate)
    with torch.inference_mode():
        emission, _ = model(waveform)
        spans = aligner(emission[0], tokenizer(request["words"]))
    ratio = waveform.shape[1] / emission.shape[1] / bundle.sample_rate
    alignments = []
    for word, word_spans in zip(request["words"], spans):
        alignments.append(
            {
                "word": word,
                "start_s": word_spans[0].start * ratio,
                "end_s": word_spans[-1].end * ratio,
                "score": float(np.mean([s.score for s in word_spans])),
            }
        )
    return {"alignments": alignments}


def handle(request: dict) -> dict:
    engine = os.environ.get("DIALOGKIT_ALIGNER_ENGINE", "dsp")
    if engine == "mms":
        return _torchaudio_alignment(request)
    if engine != "dsp":
        raise ValueError(f"unknown aligner engine {engine!r}")
    return _length_weighted_alignment(request)


MANIFEST = {
    "model": "mms-fa (opt-in) / length-weighted dsp fallback",
    "version": "0.1.0",
}


def main(argv=None) -> int:
    return run_backend("aligner", handle, MANIFEST, argv)


if __name__ == "__main__":
    sys.exit(main())
