"""Perceptual-quality-score backend.

Request  {audio_path}
Artifact {dnsmos: f64 in [1, 5]}

The default engine is a documented proxy, not the DNSMOS network: it maps
spectral flatness (noise-likeness) into the [1, 5] range, so tonal/structured
audio scores high and broadband noise or silence scores low. Scores are
comparable against the usual 2.8/3.4 retention thresholds but are not DNSMOS
values. Set ``DIALOGKIT_QSCORE_ENGINE=dnsmos`` to use an ONNX DNSMOS model
from ``DNSMOS_ONNX_PATH``.
"""

from __future__ import annotations

import os
import sys

import numpy as np
from scipy.signal import stft

from .common import read_wav, run_backend


def _flatness_proxy(request: dict) -> dict:
    rate, samples = read_wav(request["audio_path"])
    if len(samples) < 64 or np.abs(samples).max() < 1e-6:
        return {"dnsmos": 1.0}
    nperseg = min(1024, len(samples))
    _, _, zxx = stft(samples, fs=rate, nperseg=nperseg)
    power = np.abs(zxx) ** 2 + 1e-12
    # frame-wise spectral flatness: geometric mean over arithmetic mean
    flatness = np.exp(np.log(power).mean(axis=0)) / power.mean(axis=0)
    # active frames only, so leading/trailing silence does not dominate
    frame_energy = power.mean(axis=0)
    active = frame_energy > 0.01 * frame_energy.max()
    score = 1.0 + 4.0 * float(np.clip(1.0 - flatness[active].mean(), 0.0, 1.0))
    return {"dnsmos": round(min(max(score, 1.0), 5.0), 4)}


def _dnsmos_onnx(request: dict) -> dict:
    import onnxruntime  # noqa: F401

    raise NotImplementedError(
        "DNSMOS ONNX inference requires the model file from the DNS challenge "
        "release; point DNSMOS_ONNX_PATH at it and extend this hook."
    )


def handle(request: dict) -> dict:
    engine = os.environ.get("DIALOGKIT_QSCORE_ENGINE", "flatness")
    if engine == "dnsmos":
        return _dnsmos_onnx(request)
    if engine != "flatness":
        raise ValueError(f"unknown qscore engine {engine!r}")
    return _flatness_proxy(request)


MANIFEST = {
    "model": "dnsmos-onnx (opt-in) / spectral-flatness proxy",
    "version": "0.1.0",
}


def main(argv=None) -> int:
    return run_backend("qscore", handle, MANIFEST, argv)


if __name__ == "__main__":
    sys.exit(main())
