import numpy as np
import pytest
from scipy.io import wavfile


def synth_tone(path, freq_hz, seconds=1.0, rate=16000, amplitude=0.6):
    t = np.arange(int(seconds * rate)) / rate
    samples = amplitude * np.sin(2 * np.pi * freq_hz * t)
    wavfile.write(str(path), rate, (samples * 32767).astype(np.int16))
    return str(path)


def synth_noise(path, seconds=1.0, rate=16000, lowpass_hz=None, seed=0):
    rng = np.random.default_rng(seed)
    samples = rng.normal(0, 0.2, int(seconds * rate))
    if lowpass_hz is not None:
        from scipy.signal import butter, filtfilt

        b, a = butter(8, lowpass_hz / (rate / 2))
        samples = filtfilt(b, a, samples)
    wavfile.write(str(path), rate, (np.clip(samples, -1, 1) * 32767).astype(np.int16))
    return str(path)


@pytest.fixture
def tone_wav(tmp_path):
    return synth_tone(tmp_path / "tone.wav", 440.0)


@pytest.fixture
def noise_wav(tmp_path):
    return synth_noise(tmp_path / "noise.wav")


@pytest.fixture
def lowpass_wav(tmp_path):
    return synth_noise(tmp_path / "lowpass.wav", lowpass_hz=3000.0, seed=1)


@pytest.fixture
def silence_wav(tmp_path):
    path = tmp_path / "silence.wav"
    wavfile.write(str(path), 16000, np.zeros(16000, dtype=np.int16))
    return str(path)
