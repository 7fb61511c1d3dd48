"""Range-Doppler processing and exponential-forgetting MTI."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import get_window


def _window(n: int, enabled: bool) -> np.ndarray:
    if not enabled:
        return np.ones(n)
    return get_window("hann", n)


def range_fft(frame: np.ndarray, window: bool = True, full_spectrum: bool = False) -> np.ndarray:
    """Fast-time FFT of a ``[..., rx, chirp, sample]`` block.

    Returns ``[..., range, chirp, rx]``. Only the non-negative beat
    frequencies (the first ``samples/2`` bins) are kept unless
    ``full_spectrum`` is set. The transform is unitary, so energy is
    preserved on the full spectrum.
    """
    frame = np.asarray(frame)
    n = frame.shape[-1]
    if n < 2:
        raise ValueError("range FFT needs at least 2 samples per chirp")
    spectrum = np.fft.fft(frame * _window(n, window), axis=-1, norm="ortho")
    if not full_spectrum:
        spectrum = spectrum[..., : n // 2]
    # [..., rx, chirp, range] -> [..., range, chirp, rx]
    return np.swapaxes(spectrum, -1, -3)


def doppler_axis(chirps: int) -> np.ndarray:
    """FFT-shifted normalized Doppler axis in cycles/chirp, zero at index N/2."""
    return np.fft.fftshift(np.fft.fftfreq(chirps))


@dataclass
class RdCube:
    """One frame of complex range-Doppler data, ``data[range, doppler, rx]``.

    ``doppler_axis`` is normalized (cycles per chirp, in [-0.5, 0.5));
    multiply by ``1 / chirp_repetition`` for Hz.
    """

    data: np.ndarray
    doppler_axis: np.ndarray
    chirp_repetition: float = 1.0

    def __post_init__(self):
        if self.data.ndim < 3 or self.data.shape[-2] != self.doppler_axis.shape[0]:
            raise ValueError("doppler axis length does not match the cube")

    @property
    def range_bin_count(self) -> int:
        return self.data.shape[-3]

    @property
    def doppler_bin_count(self) -> int:
        return self.data.shape[-2]

    @property
    def rx_count(self) -> int:
        return self.data.shape[-1]

    @property
    def doppler_hz(self) -> np.ndarray:
        return self.doppler_axis / self.chirp_repetition

    def with_data(self, data: np.ndarray) -> "RdCube":
        return RdCube(data=data, doppler_axis=self.doppler_axis, chirp_repetition=self.chirp_repetition)


def doppler_fft(block: np.ndarray, window: bool = True, chirp_repetition: float = 1.0) -> RdCube:
    """Slow-time FFT of ``[..., range, chirp, rx]``, shifted so bin N/2 is DC."""
    block = np.asarray(block)
    n = block.shape[-2]
    if n < 2:
        raise ValueError("Doppler FFT needs at least 2 chirps")
    w = _window(n, window)[:, None]
    spectrum = np.fft.fftshift(np.fft.fft(block * w, axis=-2, norm="ortho"), axes=-2)
    return RdCube(data=spectrum, doppler_axis=doppler_axis(n), chirp_repetition=chirp_repetition)


def range_doppler(frame: np.ndarray, chirp_repetition: float = 1.0, window: bool = True) -> RdCube:
    """ADC frame ``[rx, chirp, sample]`` to an RdCube; leading frame axes allowed."""
    return doppler_fft(range_fft(frame, window=window), window=window, chirp_repetition=chirp_repetition)


@dataclass
class MtiState:
    """Running clutter estimate C_k with forgetting factor ``alpha``."""

    clutter: np.ndarray
    alpha: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"forgetting factor must lie in [0, 1], got {self.alpha}")

    @classmethod
    def from_frame(cls, frame: RdCube | np.ndarray, alpha: float = 0.01) -> "MtiState":
        data = frame.data if isinstance(frame, RdCube) else np.asarray(frame)
        return cls(clutter=np.array(data, dtype=np.complex128, copy=True), alpha=alpha)


def mti_update(state: MtiState, frame: RdCube | np.ndarray):
    """One MTI step.

    ``C_k = alpha * C_{k-1} + (1 - alpha) * RDM_k`` and ``Y_k = RDM_k - C_k``.
    Returns ``(new_state, residual)``; the residual has the input's type.

    Both recursions are evaluated in the equivalent increment form
    ``Y_k = alpha * (RDM_k - C_{k-1})``, ``C_k = C_{k-1} + (1 - alpha) * (RDM_k - C_{k-1})``
    so that a constant stream, alpha = 0 and alpha = 1 are exact in floating point.
    """
    data = frame.data if isinstance(frame, RdCube) else np.asarray(frame)
    if data.shape != state.clutter.shape:
        raise ValueError(f"frame shape {data.shape} does not match MTI state {state.clutter.shape}")
    a = state.alpha
    innovation = data - state.clutter
    clutter = state.clutter + (1.0 - a) * innovation
    residual = a * innovation
    new_state = MtiState(clutter=clutter, alpha=a)
    if isinstance(frame, RdCube):
        return new_state, frame.with_data(residual)
    return new_state, residual


def mti_stream(frames: np.ndarray, alpha: float = 0.01, initial: Optional[np.ndarray] = None) -> np.ndarray:
    """Apply MTI over a ``[frame, ...]`` stack, seeding C_0 with the first frame."""
    frames = np.asarray(frames)
    out = np.empty(frames.shape, dtype=np.complex128)
    if frames.shape[0] == 0:
        return out
    state = MtiState.from_frame(frames[0] if initial is None else initial, alpha)
    for i in range(frames.shape[0]):
        state, out[i] = mti_update(state, frames[i])
    return out
