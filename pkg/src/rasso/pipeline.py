"""End-to-end session processing: ADC cube -> normalized RA maps -> decisions."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .beamform import MapSmoother, SteeringTable, capon_ra, dbf_ra
from .cfar import CfarConfig, detect, presence_over_k
from .evaluation import PERSON, FrameRecord, EMPTY, SweepSession, snr_zscore
from .rdproc import MtiState, mti_update, range_doppler
from .sim import AdcCube, RadarConfig
from .warp import WarpConfig, build_grid, rasso_resample

PROCESSORS = ("dbf", "capon")


@dataclass(frozen=True)
class PipelineConfig:
    processor: str = "capon"
    mti_alpha: float = 0.01
    warp: WarpConfig = field(default_factory=lambda: WarpConfig(enabled=False))
    azimuth_points: int = 64
    azimuth_span_deg: float = 60.0
    elevation_points: int = 16
    elevation_span_deg: float = 30.0
    smooth_frames: int = 5
    snapshot_bins: Optional[int] = None
    warmup_frames: int = 10

    def __post_init__(self):
        if self.processor not in PROCESSORS:
            raise ValueError(f"processor must be one of {PROCESSORS}, got {self.processor!r}")
        if self.warmup_frames < 0:
            raise ValueError("warmup_frames must be non-negative")

    @property
    def tag(self) -> str:
        if self.processor == "capon" and self.warp.enabled:
            return "capon+rasso"
        return self.processor + ("+rasso" if self.warp.enabled else "")

    def steering(self) -> SteeringTable:
        return SteeringTable.create(self.azimuth_points, self.azimuth_span_deg,
                                    self.elevation_points, self.elevation_span_deg)


PIPELINE_NAMES = ("dbf", "capon", "rasso", "capon+rasso", "dbf+rasso")


def named_pipeline(name: str, base: Optional[PipelineConfig] = None) -> PipelineConfig:
    """Pipeline by tag: ``dbf``, ``capon``, ``rasso`` (alias ``capon+rasso``) or ``dbf+rasso``."""
    base = base or PipelineConfig()
    table = {
        "dbf": ("dbf", False), "capon": ("capon", False), "rasso": ("capon", True),
        "capon+rasso": ("capon", True), "dbf+rasso": ("dbf", True),
    }
    if name not in table:
        raise ValueError(f"unknown pipeline {name!r}; expected one of {PIPELINE_NAMES}")
    processor, warped = table[name]
    return replace(base, processor=processor, warp=replace(base.warp, enabled=warped))


@dataclass
class SessionMaps:
    """Raw and smoothed/normalized RA maps, ``[frame, range, azimuth]``."""

    raw: np.ndarray
    normalized: np.ndarray
    tag: str
    warmup_frames: int = 0

    @property
    def evaluated(self) -> np.ndarray:
        return self.normalized[self.warmup_frames:]


def process_cube(cube: AdcCube, pipe: PipelineConfig, counter: Optional[Counter] = None) -> SessionMaps:
    """Run RD processing, MTI, the optional warp, beamforming and smoothing."""
    cfg: RadarConfig = cube.config
    table = pipe.steering()
    n_frames = cube.frame_count
    raw = np.zeros((n_frames, cfg.range_bin_count, table.azimuth_deg.size))
    norm = np.zeros_like(raw)
    if n_frames == 0:
        return SessionMaps(raw, norm, pipe.tag, pipe.warmup_frames)

    rd_all = range_doppler(cube.data, chirp_repetition=cfg.chirp_repetition)
    grid = build_grid(rd_all.doppler_axis, pipe.warp) if pipe.warp.enabled else None
    state = MtiState.from_frame(rd_all.data[0], pipe.mti_alpha)
    smoother = MapSmoother(pipe.smooth_frames)
    for i in range(n_frames):
        state, residual = mti_update(state, rd_all.data[i])
        rd = rd_all.with_data(residual)
        if grid is not None:
            rd = rasso_resample(rd, grid, counter)
        if pipe.processor == "dbf":
            ra = dbf_ra(rd, table, cfg.rx_array, cfg.wavelength, frame_index=i)
        else:
            ra = capon_ra(rd, table, pipe.snapshot_bins, frame_index=i, processor=pipe.tag)
        raw[i] = ra.values
        norm[i] = smoother.push(ra)
    return SessionMaps(raw, norm, pipe.tag, min(pipe.warmup_frames, n_frames))


def sweep_session(maps: SessionMaps, session_id: str, label: str, cfar: CfarConfig,
                  k_grid: np.ndarray) -> SweepSession:
    presence = np.array([presence_over_k(m, cfar, k_grid) for m in maps.evaluated])
    return SweepSession(session_id, label, presence.reshape(-1, len(k_grid)))


def frame_records(maps: SessionMaps, session_id: str, label: str, cfar: CfarConfig,
                  k: Optional[float] = None) -> list[FrameRecord]:
    """One record per evaluated frame at sensitivity ``k`` (default ``cfar.k``)."""
    out = []
    for j, m in enumerate(maps.evaluated):
        res = detect(m, cfar, k)
        big = res.largest
        snr = snr_zscore(m, big.bbox, cfar) if big is not None else math.nan
        out.append(FrameRecord(session_id, maps.warmup_frames + j, label,
                               PERSON if res.presence else EMPTY, res.max_component_area, snr))
    return out
