"""Synthetic SIMO FMCW scene simulator.

Produces complex baseband IF cubes indexed ``[frame][rx][chirp][sample]`` for
scenes made of point scatterers. A scatterer may breathe: its range is
modulated by a single sinusoid, which shows up as a slow phase progression
across chirps and frames.

Scene coordinates live on a horizontal plane: ``x`` is lateral, ``y`` points
along the radar boresight. The array frame has its x axis along the Rx1 arm,
y along the Rx2 (elevation) arm and z along boresight, so a scene point at
azimuth ``theta = atan2(x, y)`` has array-frame direction
``(sin theta, 0, cos theta)``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class RadarConfig:
    """Waveform and array parameters of a 1Tx-3Rx FMCW sensor.

    Defaults follow the BGT60TR13C configuration: 60 GHz carrier, ~500 MHz
    sweep (tuned so the range resolution is 0.30 m), 64 samples x 128 chirps
    per frame at 10 Hz, and a chirp repetition interval giving a 3 m/s
    unambiguous speed.

    ``chirp_duration`` is the sampled part of the ramp; fast-time samples are
    spaced ``chirp_duration / samples_per_chirp`` apart.
    """

    center_frequency: float = 60e9
    bandwidth: float = 499.654e6
    chirp_duration: float = 32e-6
    chirp_repetition: float = 416.4e-6
    samples_per_chirp: int = 64
    chirps_per_frame: int = 128
    rx_count: int = 3
    frame_rate: float = 10.0
    rx_positions: Optional[tuple] = None

    def __post_init__(self):
        for name in ("center_frequency", "bandwidth", "chirp_duration",
                     "chirp_repetition", "frame_rate"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if self.samples_per_chirp < 2 or self.chirps_per_frame < 2:
            raise ValueError("need at least 2 samples per chirp and 2 chirps per frame")
        if self.rx_count < 1:
            raise ValueError("rx_count must be >= 1")
        if self.chirp_duration > self.chirp_repetition:
            raise ValueError("chirp_duration exceeds chirp_repetition")
        if self.chirps_per_frame * self.chirp_repetition > 1.0 / self.frame_rate:
            raise ValueError("chirp train does not fit in one frame period")
        if self.rx_positions is None:
            half = self.wavelength / 2
            positions = ((half, 0.0, 0.0), (0.0, half, 0.0), (0.0, 0.0, 0.0))
            if self.rx_count != 3:
                raise ValueError("default rx_positions assume rx_count = 3")
            object.__setattr__(self, "rx_positions", positions)
        else:
            positions = tuple(tuple(float(v) for v in p) for p in self.rx_positions)
            if len(positions) != self.rx_count or any(len(p) != 3 for p in positions):
                raise ValueError("rx_positions must hold rx_count (x, y, z) triples")
            object.__setattr__(self, "rx_positions", positions)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.center_frequency

    @property
    def chirp_slope(self) -> float:
        return self.bandwidth / self.chirp_duration

    @property
    def sample_rate(self) -> float:
        return self.samples_per_chirp / self.chirp_duration

    @property
    def range_resolution(self) -> float:
        return SPEED_OF_LIGHT / (2 * self.bandwidth)

    @property
    def range_bin_count(self) -> int:
        return self.samples_per_chirp // 2

    @property
    def max_range(self) -> float:
        return self.range_bin_count * self.range_resolution

    @property
    def max_speed(self) -> float:
        return self.wavelength / (4 * self.chirp_repetition)

    @property
    def rx_array(self) -> np.ndarray:
        return np.asarray(self.rx_positions, dtype=float)


@dataclass(frozen=True)
class Target:
    """Point scatterer on the scene plane, optionally breathing.

    ``reflectivity`` is a linear amplitude in arbitrary units;
    ``breathing_amplitude`` is the chest displacement semi-amplitude in
    meters.
    """

    position: tuple[float, float]
    reflectivity: float = 1.0
    breathing_amplitude: float = 0.0
    breathing_rate: float = 0.0
    breathing_phase: float = 0.0

    def __post_init__(self):
        if self.breathing_amplitude < 0 or self.breathing_rate < 0:
            raise ValueError("breathing amplitude and rate must be non-negative")
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))

    @property
    def range(self) -> float:
        return math.hypot(*self.position)

    @property
    def azimuth(self) -> float:
        """Azimuth in radians, positive towards +x."""
        return math.atan2(self.position[0], self.position[1])


@dataclass(frozen=True)
class Scene:
    targets: Sequence[Target] = ()
    static_clutter: Sequence[Target] = ()
    noise_std: float = 0.0
    frame_count: int = 0
    rng_seed: int = 0
    range_falloff: bool = False

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "static_clutter", tuple(self.static_clutter))
        if any(c.breathing_amplitude != 0 for c in self.static_clutter):
            raise ValueError("static clutter must not breathe")
        if self.noise_std < 0 or self.frame_count < 0:
            raise ValueError("noise_std and frame_count must be non-negative")

    def scatterers(self) -> tuple[Target, ...]:
        return tuple(self.targets) + tuple(self.static_clutter)


@dataclass
class AdcCube:
    """Raw cube ``data[frame, rx, chirp, sample]`` plus the config that made it."""

    data: np.ndarray
    config: RadarConfig = field(default_factory=RadarConfig)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        cfg = self.config
        expected = (cfg.rx_count, cfg.chirps_per_frame, cfg.samples_per_chirp)
        if self.data.ndim != 4 or self.data.shape[1:] != expected:
            raise ValueError(f"cube shape {self.data.shape} does not match config {expected}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("cube contains non-finite samples")

    @property
    def frame_count(self) -> int:
        return self.data.shape[0]


def beat_frequency(range_m: float, config: RadarConfig) -> float:
    """Beat tone S_w * 2r / c of a stationary target at ``range_m``."""
    if not (0.0 <= range_m < config.max_range):
        raise ValueError(f"range {range_m} m outside [0, {config.max_range}) m")
    return config.chirp_slope * 2.0 * range_m / SPEED_OF_LIGHT


def frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    # Counter-based stream: frame i always draws the same noise, whatever order
    # frames are produced in.
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(frame_index),)))


def _check_scene(scene: Scene, config: RadarConfig) -> None:
    for target in scene.scatterers():
        r_max = target.range + target.breathing_amplitude
        if not (0.0 <= target.range - target.breathing_amplitude and r_max < config.max_range):
            raise ValueError(f"target at {target.position} leaves [0, {config.max_range}) m")


def synthesize_frame(scene: Scene, frame_index: int, config: RadarConfig) -> np.ndarray:
    """Complex IF samples ``[rx, chirp, sample]`` for one frame."""
    if not (0 <= frame_index < scene.frame_count):
        raise IndexError(f"frame {frame_index} outside scene of {scene.frame_count} frames")
    _check_scene(scene, config)
    lam = config.wavelength
    n = np.arange(config.samples_per_chirp)
    fast_time = n * (config.chirp_duration / config.samples_per_chirp)
    chirp_time = frame_index / config.frame_rate + np.arange(config.chirps_per_frame) * config.chirp_repetition
    rx = config.rx_array

    out = np.zeros((config.rx_count, config.chirps_per_frame, config.samples_per_chirp), dtype=np.complex128)
    for target in scene.scatterers():
        r_k = target.range + target.breathing_amplitude * np.sin(
            2 * np.pi * target.breathing_rate * chirp_time + target.breathing_phase
        )
        f_b = config.chirp_slope * 2.0 * r_k / SPEED_OF_LIGHT
        beat = 2 * np.pi * f_b[:, None] * fast_time[None, :]
        carrier = 4 * np.pi * r_k / lam
        theta = target.azimuth
        direction = np.array([np.sin(theta), 0.0, np.cos(theta)])
        array_phase = (2 * np.pi / lam) * (rx @ direction)
        amplitude = target.reflectivity
        if scene.range_falloff:
            amplitude = amplitude / max(target.range, 1e-3) ** 2
        phase = array_phase[:, None, None] + (carrier[:, None] + beat)[None, :, :]
        out += amplitude * np.exp(1j * phase)

    if scene.noise_std > 0:
        rng = frame_rng(scene.rng_seed, frame_index)
        scale = scene.noise_std / np.sqrt(2.0)
        noise = rng.standard_normal((2,) + out.shape)
        out += scale * (noise[0] + 1j * noise[1])
    return out


def worker_count(requested: Optional[int] = None) -> int:
    """Thread budget: explicit request, else ``RASSO_THREADS`` (0 = auto)."""
    if requested is None:
        try:
            requested = int(os.environ.get("RASSO_THREADS", "0"))
        except ValueError:
            requested = 0
    if requested <= 0:
        requested = os.cpu_count() or 1
    return max(1, requested)


def synthesize_scene(scene: Scene, config: RadarConfig, workers: Optional[int] = None) -> AdcCube:
    """All frames of ``scene``; frame timestamps advance by ``1 / frame_rate``."""
    _check_scene(scene, config)
    shape = (scene.frame_count, config.rx_count, config.chirps_per_frame, config.samples_per_chirp)
    data = np.zeros(shape, dtype=np.complex128)
    n_workers = min(worker_count(workers), max(scene.frame_count, 1))
    if n_workers == 1:
        for i in range(scene.frame_count):
            data[i] = synthesize_frame(scene, i, config)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            for i, frame in enumerate(pool.map(lambda k: synthesize_frame(scene, k, config),
                                               range(scene.frame_count))):
                data[i] = frame
    return AdcCube(data=data, config=config, metadata={"seed": str(scene.rng_seed)})
