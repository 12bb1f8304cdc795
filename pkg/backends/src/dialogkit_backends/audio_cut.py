"""Waveform-cutting backend.

Request  {audio_path, spans: [[start_s, end_s], ...]}
Artifact {output_path}

Concatenates the requested spans, in order, into a sibling ``.cut.wav`` file.
Without spans the file is copied through unchanged (useful for plan replay).
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from .common import read_wav, run_backend, write_wav


def handle(request: dict) -> dict:
    path = Path(request["audio_path"])
    rate, samples = read_wav(str(path))
    spans = request.get("spans")
    if spans:
        pieces = []
        for start_s, end_s in spans:
            a = max(0, int(start_s * rate))
            b = min(len(samples), int(end_s * rate))
            if b <= a:
                raise ValueError(f"empty span [{start_s}, {end_s}]")
            pieces.append(samples[a:b])
        samples = np.concatenate(pieces)
    out_path = path.with_suffix(".cut.wav")
    write_wav(str(out_path), rate, samples)
    return {"output_path": str(out_path)}


MANIFEST = {
    "model": "sample-accurate span concatenation",
    "version": "0.1.0",
}


def main(argv=None) -> int:
    return run_backend("audio_cut", handle, MANIFEST, argv)


if __name__ == "__main__":
    sys.exit(main())
