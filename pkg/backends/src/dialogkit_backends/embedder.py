"""Speaker-embedding backend.

Request  {audio_path, start_s?, end_s?}
Artifact {vector: [f64], dim, norm}

Engines (env ``DIALOGKIT_EMBEDDER_ENGINE``):
  dsp (default) - log-energy statistics over geometrically spaced frequency
      bands: a real, deterministic spectral voice signature (band means +
      band deviations), adequate for separating timbres that differ in
      spectral shape. No claim of speaker-verification quality.
  wespeaker - a speaker-verification model via the wespeaker package, when
      installed with a local checkpoint.
"""

from __future__ import annotations

import os
import sys

import numpy as np
from scipy.signal import stft

from .common import read_wav, run_backend, slice_samples

N_BANDS = 16
F_MIN = 60.0


def _band_edges(rate: int) -> np.ndarray:
    nyquist = rate / 2.0
    return np.geomspace(F_MIN, nyquist, N_BANDS + 1)


def _spectral_embedding(request: dict) -> dict:
    rate, samples = read_wav(request["audio_path"])
    samples = slice_samples(rate, samples, request)
    if len(samples) < 32:
        vector = np.zeros(2 * N_BANDS)
    else:
        nperseg = min(512, len(samples))
        freqs, _, zxx = stft(samples, fs=rate, nperseg=nperseg)
        power = np.abs(zxx) ** 2
        edges = _band_edges(rate)
        means, stds = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            band = power[(freqs >= lo) & (freqs < hi)]
            if band.size == 0:
                means.append(0.0)
                stds.append(0.0)
                continue
            log_band = np.log10(band.mean(axis=0) + 1e-12)
            means.append(float(log_band.mean()))
            stds.append(float(log_band.std()))
        vector = np.array(means + stds)
    return {
        "vector": [float(x) for x in vector],
        "dim": int(vector.size),
        "norm": float(np.linalg.norm(vector)),
    }


def _wespeaker_embedding(request: dict) -> dict:
    import wespeaker

    model = wespeaker.load_model(os.environ.get("WESPEAKER_MODEL", "english"))
    vector = model.extract_embedding(request["audio_path"])
    vector = np.asarray(vector, dtype=float).ravel()
    return {
        "vector": [float(x) for x in vector],
        "dim": int(vector.size),
        "norm": float(np.linalg.norm(vector)),
    }


def handle(request: dict) -> dict:
    engine = os.environ.get("DIALOGKIT_EMBEDDER_ENGINE", "dsp")
    if engine == "wespeaker":
        return _wespeaker_embedding(request)
    if engine != "dsp":
        raise ValueError(f"unknown embedder engine {engine!r}")
    return _spectral_embedding(request)


MANIFEST = {
    "model": "wespeaker (opt-in) / log-band spectral statistics fallback",
    "version": "0.1.0",
}


def main(argv=None) -> int:
    return run_backend("embedder", handle, MANIFEST, argv)


if __name__ == "__main__":
    sys.exit(main())
