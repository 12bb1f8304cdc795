"""True-sample-rate estimation backend.

Request  {audio_path}
Artifact {true_sample_rate_hz: int}

Estimates the effective bandwidth from the spectrum: the highest frequency
whose power stays within 60 dB of the peak. Upsampled or band-limited audio
reveals itself by a bandwidth well below the container Nyquist; the estimate
is twice the bandwidth, snapped to the nearest standard rate and capped at
the container rate.
"""

from __future__ import annotations

import sys

import numpy as np
from scipy.signal import welch

from .common import read_wav, run_backend

STANDARD_RATES = (8000, 11025, 16000, 22050, 24000, 32000, 44100, 48000)
FLOOR_DB = 60.0


def estimate_bandwidth_hz(rate: int, samples: np.ndarray) -> float:
    if len(samples) < 64 or np.abs(samples).max() < 1e-8:
        return rate / 2.0
    nperseg = min(2048, len(samples))
    freqs, psd = welch(samples, fs=rate, nperseg=nperseg)
    threshold = psd.max() * 10 ** (-FLOOR_DB / 10.0)
    occupied = np.nonzero(psd > threshold)[0]
    if not len(occupied):
        return rate / 2.0
    return float(freqs[occupied[-1]])


def handle(request: dict) -> dict:
    rate, samples = read_wav(request["audio_path"])
    bandwidth = estimate_bandwidth_hz(rate, samples)
    target = 2.0 * bandwidth
    candidates = [r for r in STANDARD_RATES if r <= rate]
    if not candidates:
        candidates = [rate]
    best = min(candidates, key=lambda r: abs(r - target))
    return {"true_sample_rate_hz": int(best)}


MANIFEST = {
    "model": "welch-psd bandwidth estimate",
    "version": "0.1.0",
}


def main(argv=None) -> int:
    return run_backend("srate", handle, MANIFEST, argv)


if __name__ == "__main__":
    sys.exit(main())
