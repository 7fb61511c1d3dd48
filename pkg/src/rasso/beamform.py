"""Range-azimuth beamformers: delay-and-sum DBF and 2-element Capon/MVDR.

Angles follow the broadside convention: azimuth 0 is boresight, positive
towards the Rx1 arm. A far-field source at azimuth theta puts a phase of
``pi * sin(theta)`` on Rx1 relative to Rx3 (half-wavelength spacing).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .rdproc import RdCube

#: Rows of the Capon snapshot matrix: Rx1 and Rx3 (the azimuth arm).
AZIMUTH_SUBARRAY = (0, 2)

_EIG_CUTOFF = 1e-12


@dataclass(frozen=True)
class SteeringTable:
    azimuth_deg: np.ndarray
    elevation_deg: np.ndarray = field(default_factory=lambda: np.linspace(-30.0, 30.0, 16))

    def __post_init__(self):
        for grid in (self.azimuth_deg, self.elevation_deg):
            if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
                raise ValueError("angle grids must be non-empty and strictly increasing")

    @classmethod
    def create(cls, azimuth_points: int = 64, azimuth_span_deg: float = 60.0,
               elevation_points: int = 16, elevation_span_deg: float = 30.0) -> "SteeringTable":
        az = np.linspace(-azimuth_span_deg, azimuth_span_deg, azimuth_points)
        el = np.linspace(-elevation_span_deg, elevation_span_deg, elevation_points)
        return cls(az, el)

    @property
    def step_deg(self) -> float:
        return float(self.azimuth_deg[1] - self.azimuth_deg[0]) if self.azimuth_deg.size > 1 else 0.0

    def capon_steering(self) -> np.ndarray:
        """``a(theta) = [1, exp(-j pi sin theta)]`` for each azimuth, shape (A, 2)."""
        u = np.sin(np.deg2rad(self.azimuth_deg))
        return np.stack([np.ones_like(u, dtype=complex), np.exp(-1j * np.pi * u)], axis=-1)

    def dbf_weights(self, rx_positions: np.ndarray, wavelength: float) -> np.ndarray:
        """Phase weights ``w[el, az, rx]`` that co-phase a plane wave from (az, el).

        Direction cosines are ``sin(az) cos(el)`` along x (Rx1 arm) and
        ``sin(el)`` along y (Rx2 arm); Rx3 at the origin has unit weight.
        """
        az = np.deg2rad(self.azimuth_deg)[None, :]
        el = np.deg2rad(self.elevation_deg)[:, None]
        ux = np.sin(az) * np.cos(el)
        uy = np.broadcast_to(np.sin(el), ux.shape)
        pos = np.asarray(rx_positions, dtype=float)
        phase = (2 * np.pi / wavelength) * (ux[..., None] * pos[:, 0] + uy[..., None] * pos[:, 1])
        return np.exp(-1j * phase)


@dataclass
class RaMap:
    values: np.ndarray
    frame_index: int = 0
    processor: str = "capon"


def dbf_ra(rd: RdCube, table: SteeringTable, rx_positions: np.ndarray, wavelength: float,
           frame_index: int = 0) -> RaMap:
    """Delay-and-sum RA map with non-coherent integration over elevation.

    For each look direction the three channels are phased and summed per
    Doppler cell; magnitudes are summed over Doppler cells and then over the
    elevation grid.
    """
    if rd.rx_count != 3:
        raise ValueError(f"DBF expects the 3-element L-shaped array, got {rd.rx_count} channels")
    w = table.dbf_weights(rx_positions, wavelength)  # (E, A, 3)
    z = rd.data  # (R, D, 3)
    out = np.zeros(z.shape[:-2] + (table.azimuth_deg.size,))
    for w_el in w:
        out += np.abs(z @ w_el.T).sum(axis=-2)
    return RaMap(out, frame_index, "dbf")


def capon_snapshot(rd: RdCube, r: int, snapshot_bins: Optional[int] = None,
                   subarray: Sequence[int] = AZIMUTH_SUBARRAY) -> np.ndarray:
    """Snapshot matrix ``X_r`` (subarray channels x Doppler cells) at range bin ``r``.

    ``snapshot_bins=None`` uses every Doppler cell; an integer keeps that many
    cells centred on zero Doppler.
    """
    cols = _doppler_slice(rd.doppler_bin_count, snapshot_bins)
    return rd.data[r, cols][:, list(subarray)].T


def _doppler_slice(n: int, snapshot_bins: Optional[int]) -> slice:
    if snapshot_bins is None or snapshot_bins >= n:
        return slice(0, n)
    if snapshot_bins < 1:
        raise ValueError("snapshot_bins must be >= 1")
    start = n // 2 - snapshot_bins // 2
    return slice(start, start + snapshot_bins)


def _capon_power(cov: np.ndarray, steering: np.ndarray) -> np.ndarray:
    """``1 / (a^H R^+ a)`` for a stack of Hermitian ``cov[..., M, M]``.

    R^+ is the Moore-Penrose pseudoinverse from the eigendecomposition, with
    eigenvalues below ``1e-12 * lambda_max`` treated as zero. Where the
    quadratic form vanishes (steering vector outside the signal subspace)
    the power is reported as 0.
    """
    cov = 0.5 * (cov + np.conj(np.swapaxes(cov, -1, -2)))
    evals, evecs = np.linalg.eigh(cov)
    lam_max = evals[..., -1:]
    keep = evals > _EIG_CUTOFF * lam_max
    inv = np.where(keep, 1.0 / np.where(keep, evals, 1.0), 0.0)
    # |v_i^H a|^2 for every eigenvector i and steering vector a
    proj = np.abs(np.einsum("...mi,am->...ai", np.conj(evecs), steering)) ** 2
    den = np.einsum("...ai,...i->...a", proj, inv)
    a_norm = np.sum(np.abs(steering) ** 2, axis=-1)
    tiny = den * lam_max <= _EIG_CUTOFF * a_norm
    return np.where(tiny, 0.0, 1.0 / np.where(tiny, 1.0, den))


def sample_covariance(x: np.ndarray) -> np.ndarray:
    """``X X^H / N`` over the last axis of ``x[..., M, N]``."""
    return (x @ np.conj(np.swapaxes(x, -1, -2))) / x.shape[-1]


def capon_spectrum(x: np.ndarray, table: SteeringTable) -> np.ndarray:
    """Capon RA row ``|P(theta)|`` from one snapshot matrix ``X_r``."""
    x = np.asarray(x, dtype=complex)
    if not np.all(np.isfinite(x)):
        raise ValueError("snapshot matrix must be finite")
    return np.abs(_capon_power(sample_covariance(x), table.capon_steering()))


def capon_ra(rd: RdCube, table: SteeringTable, snapshot_bins: Optional[int] = None,
             frame_index: int = 0, processor: str = "capon") -> RaMap:
    """Capon RA map over all range bins at once (same math as ``capon_spectrum``)."""
    cols = _doppler_slice(rd.doppler_bin_count, snapshot_bins)
    x = np.swapaxes(rd.data[..., cols, :][..., list(AZIMUTH_SUBARRAY)], -1, -2)  # (..., R, 2, N)
    power = np.abs(_capon_power(sample_covariance(x), table.capon_steering()))
    return RaMap(power, frame_index, processor)


def normalize(values: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant map becomes all zeros."""
    values = np.asarray(values, dtype=float)
    lo, hi = values.min(), values.max()
    if hi <= lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def smooth_normalize(maps: Iterable[np.ndarray | RaMap]) -> np.ndarray:
    """Element-wise mean of the given maps followed by min-max normalization."""
    arrays = [m.values if isinstance(m, RaMap) else np.asarray(m) for m in maps]
    if not arrays:
        raise ValueError("need at least one map to smooth")
    return normalize(np.mean(arrays, axis=0))


class MapSmoother:
    """Sliding mean over the last ``window`` maps, normalized on output.

    During startup the mean runs over whatever history is available.
    """

    def __init__(self, window: int = 5):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.window = window
        self._history: deque = deque(maxlen=window)

    def push(self, ra: np.ndarray | RaMap) -> np.ndarray:
        self._history.append(ra.values if isinstance(ra, RaMap) else np.asarray(ra))
        return smooth_normalize(self._history)


def mainlobe_width(row: np.ndarray, angles_deg: np.ndarray, level: float = 0.5) -> float:
    """Width in degrees of the contiguous region around the peak above ``level * peak``.

    Edges are located by linear interpolation between grid points. ``level``
    is 0.5 for power-like maps (-3 dB) and ``1/sqrt(2)`` for amplitude maps.
    """
    row = np.asarray(row, dtype=float)
    peak = int(np.argmax(row))
    thr = level * row[peak]
    lo = peak
    while lo > 0 and row[lo - 1] >= thr:
        lo -= 1
    hi = peak
    while hi < row.size - 1 and row[hi + 1] >= thr:
        hi += 1

    def cross(i_in, i_out):
        v_in, v_out = row[i_in], row[i_out]
        t = (v_in - thr) / (v_in - v_out) if v_in != v_out else 0.0
        return angles_deg[i_in] + t * (angles_deg[i_out] - angles_deg[i_in])

    left = cross(lo, lo - 1) if lo > 0 else angles_deg[0]
    right = cross(hi, hi + 1) if hi < row.size - 1 else angles_deg[-1]
    return float(right - left)
