"""STFT / inverse STFT over subband streams.

Frames are Hann-windowed (periodic window), length 512, hop 110, FFT
size 512, one-sided. Signals are zero-padded by win_length/2 on each
side before framing; the inverse uses weighted overlap-add with
window-squared normalization (floored at 1e-8), which is exact on
interior samples even though hop 110 is not a COLA hop for Hann.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filterbank import SubbandSignal

WIN_LENGTH = 512
HOP = 110
NORM_FLOOR = 1e-8


@dataclass(frozen=True)
class ComplexSpectrogram:
    """One-sided complex STFT, [channels, frames, fft_size//2 + 1]."""

    data: np.ndarray  # complex [channels, T, F]
    win_length: int
    hop: int
    fft_size: int

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3:
            raise ValueError(f"data must be [channels, frames, bins], got {d.shape}")
        if d.shape[2] != self.fft_size // 2 + 1:
            raise ValueError(f"expected {self.fft_size // 2 + 1} bins, got {d.shape[2]}")
        if not np.all(np.isfinite(d.real)) or not np.all(np.isfinite(d.imag)):
            raise ValueError("spectrogram entries must be finite")
        object.__setattr__(self, "data", d)

    @property
    def num_channels(self) -> int:
        return self.data.shape[0]

    @property
    def num_frames(self) -> int:
        return self.data.shape[1]

    @property
    def num_bins(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class MagPhase:
    """Magnitude plus unit phase vector (cos, sin) per bin.

    Phase at zero-magnitude bins is the documented convention (1, 0).
    """

    magnitude: np.ndarray
    phase_cos: np.ndarray
    phase_sin: np.ndarray
    win_length: int
    hop: int
    fft_size: int


def _hann(n: int) -> np.ndarray:
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def stft(sb: SubbandSignal, win_length: int = WIN_LENGTH, hop: int = HOP) -> ComplexSpectrogram:
    """STFT of every channel x band stream, stacked channel-major.

    A stereo 4-band input yields 8 spectrogram channels ordered
    (ch0 band0..3, ch1 band0..3).
    """
    streams = sb.stacked()
    return stft_streams(streams, win_length, hop)


def stft_streams(streams: np.ndarray, win_length: int = WIN_LENGTH, hop: int = HOP) -> ComplexSpectrogram:
    """STFT of raw streams [channels, length]."""
    streams = np.atleast_2d(np.asarray(streams))
    n = streams.shape[1]
    if n < win_length:
        raise ValueError(f"signal length {n} < window length {win_length}")
    pad = win_length // 2
    dtype = np.float32 if streams.dtype == np.float32 else np.float64
    x = np.pad(streams.astype(dtype), ((0, 0), (pad, pad)))
    padded_len = x.shape[1]
    frames = (padded_len - win_length) // hop + 1
    win = _hann(win_length).astype(dtype)

    idx = np.arange(win_length)[None, :] + hop * np.arange(frames)[:, None]
    framed = x[:, idx] * win[None, None, :]  # [C, T, win]
    spec = np.fft.rfft(framed, n=win_length, axis=2)
    return ComplexSpectrogram(spec, win_length=win_length, hop=hop, fft_size=win_length)


def istft(spec: ComplexSpectrogram, out_length: int) -> np.ndarray:
    """Weighted overlap-add inverse; returns streams [channels, out_length]."""
    win_length, hop = spec.win_length, spec.hop
    pad = win_length // 2
    buf_len = win_length + (spec.num_frames - 1) * hop
    if out_length + pad > buf_len:
        raise ValueError(
            f"requested {out_length} samples but frames only cover {buf_len - pad}"
        )

    real_dtype = np.float32 if spec.data.dtype == np.complex64 else np.float64
    win = _hann(win_length).astype(real_dtype)
    frames = np.fft.irfft(spec.data, n=spec.fft_size, axis=2).astype(real_dtype)
    frames *= win[None, None, :]

    out = np.zeros((spec.num_channels, buf_len), dtype=real_dtype)
    norm = np.zeros(buf_len, dtype=np.float64)
    for t in range(spec.num_frames):
        start = t * hop
        out[:, start : start + win_length] += frames[:, t]
        norm[start : start + win_length] += win.astype(np.float64) ** 2
    out = out / np.maximum(norm, NORM_FLOOR).astype(real_dtype)[None, :]
    return out[:, pad : pad + out_length]


def to_magphase(spec: ComplexSpectrogram, eps: float = 1e-12) -> MagPhase:
    re, im = spec.data.real, spec.data.imag
    mag = np.sqrt(re**2 + im**2)
    nonzero = mag > eps
    safe = np.where(nonzero, mag, 1.0)
    cos = np.where(nonzero, re / safe, 1.0)
    sin = np.where(nonzero, im / safe, 0.0)
    return MagPhase(
        magnitude=mag,
        phase_cos=cos,
        phase_sin=sin,
        win_length=spec.win_length,
        hop=spec.hop,
        fft_size=spec.fft_size,
    )


def from_magphase(mp: MagPhase) -> ComplexSpectrogram:
    data = mp.magnitude * (mp.phase_cos + 1j * mp.phase_sin)
    return ComplexSpectrogram(data, win_length=mp.win_length, hop=mp.hop, fft_size=mp.fft_size)
