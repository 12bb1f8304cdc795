"""Denoising backend.

Request  {audio_path, spans?}
Artifact {output_path}

Spectral gating: the per-frequency noise floor is taken as a low percentile
of the magnitude spectrogram over time, and a soft mask attenuates content
near that floor. A basic stationary-noise reducer, deterministic and fully
offline; heavyweight separation models plug in behind the same envelope.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
from scipy.signal import istft, stft

from .common import read_wav, run_backend, write_wav

FLOOR_PERCENTILE = 10.0
OVERSUBTRACT = 2.0
MASK_FLOOR = 0.1


def spectral_gate(rate: int, samples: np.ndarray) -> np.ndarray:
    if len(samples) < 64:
        return samples
    nperseg = min(1024, len(samples))
    _, _, zxx = stft(samples, fs=rate, nperseg=nperseg)
    magnitude = np.abs(zxx)
    floor = np.percentile(magnitude, FLOOR_PERCENTILE, axis=1, keepdims=True)
    mask = np.clip(1.0 - OVERSUBTRACT * floor / (magnitude + 1e-12), MASK_FLOOR, 1.0)
    _, cleaned = istft(zxx * mask, fs=rate, nperseg=nperseg)
    if len(cleaned) < len(samples):
        cleaned = np.pad(cleaned, (0, len(samples) - len(cleaned)))
    return cleaned[: len(samples)]


def handle(request: dict) -> dict:
    path = Path(request["audio_path"])
    rate, samples = read_wav(str(path))
    cleaned = spectral_gate(rate, samples)
    out_path = path.with_suffix(".denoised.wav")
    write_wav(str(out_path), rate, cleaned)
    return {"output_path": str(out_path)}


MANIFEST = {
    "model": "stft spectral gating",
    "version": "0.1.0",
}


def main(argv=None) -> int:
    return run_backend("denoise", handle, MANIFEST, argv)


if __name__ == "__main__":
    sys.exit(main())
