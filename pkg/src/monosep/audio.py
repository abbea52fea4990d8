"""WAV file reading and writing: mono 16-bit PCM only."""

from __future__ import annotations

import wave

import numpy as np

from .errors import WavFormatError

_SCALE = 32768.0


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a mono 16-bit PCM WAV; returns (samples in [-1, 1), sample rate)."""
    try:
        reader = wave.open(str(path), "rb")
    except wave.Error as exc:
        raise WavFormatError(f"{path}: not a readable WAV file ({exc})") from exc
    with reader:
        if reader.getnchannels() != 1:
            raise WavFormatError(
                f"{path}: expected mono, got {reader.getnchannels()} channels"
            )
        if reader.getsampwidth() != 2:
            raise WavFormatError(
                f"{path}: expected 16-bit samples, got {8 * reader.getsampwidth()}-bit"
            )
        rate = reader.getframerate()
        raw = reader.readframes(reader.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _SCALE
    return samples, rate


def write_wav(path, samples, rate: int) -> None:
    """Write float samples as mono 16-bit PCM, clipping to the valid range."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise WavFormatError(f"expected a 1-D signal, got shape {samples.shape}")
    clipped = np.clip(samples, -1.0, (_SCALE - 1.0) / _SCALE)
    pcm = np.round(clipped * _SCALE).astype("<i2")
    with wave.open(str(path), "wb") as writer:
        writer.setnchannels(1)
        writer.setsampwidth(2)
        writer.setframerate(rate)
        writer.writeframes(pcm.tobytes())
