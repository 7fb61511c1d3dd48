import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from rasso.rdproc import (MtiState, RdCube, doppler_axis, doppler_fft, mti_stream, mti_update,
                          range_doppler, range_fft)
from rasso.sim import synthesize_scene

from conftest import point_scene


def tone(n_samples=64, chirps=8, rx=3, cycles=10.0):
    n = np.arange(n_samples)
    x = np.exp(2j * np.pi * cycles * n / n_samples)
    return np.broadcast_to(x, (rx, chirps, n_samples)).copy()


def test_range_fft_zero():
    out = range_fft(np.zeros((3, 4, 64), complex))
    assert out.shape == (32, 4, 3)
    assert not np.any(out)


def test_range_fft_tone_peak():
    mag = np.abs(range_fft(tone(cycles=10)))
    assert np.all(mag.argmax(axis=0) == 10)
    # periodic Hann: main lobe is bins 9..11, everything else is zero
    assert np.max(np.delete(mag, [9, 10, 11], axis=0)) < 1e-12 * mag.max()


@settings(max_examples=25, deadline=None)
@given(arrays(np.complex128, (2, 3, 16), elements=st.complex_numbers(max_magnitude=1e3, allow_nan=False)))
def test_range_fft_parseval(x):
    out = range_fft(x, full_spectrum=True)
    w = np.hanning(17)[:16]  # periodic Hann
    ref = np.sum(np.abs(x * w) ** 2)
    assert np.sum(np.abs(out) ** 2) == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_doppler_axis():
    ax = doppler_axis(128)
    assert ax[64] == 0.0
    assert ax[0] == -0.5
    np.testing.assert_allclose(ax[1:], -ax[1:][::-1])
    rd = RdCube(np.zeros((1, 128, 1)), ax, chirp_repetition=416.4e-6)
    assert rd.doppler_hz[-1] == pytest.approx(ax[-1] / 416.4e-6)


def test_doppler_constant_goes_to_dc():
    block = np.ones((4, 16, 3), complex)
    rd = doppler_fft(block, window=False)
    energy = np.abs(rd.data) ** 2
    assert energy[:, 8].sum() == pytest.approx(energy.sum())
    # with the Hann window the energy stays within one bin of DC
    energy = np.abs(doppler_fft(block).data) ** 2
    assert energy[:, 7:10].sum() == pytest.approx(energy.sum())


@pytest.mark.parametrize("q", [-5, 1, 7])
def test_doppler_ramp_lands_on_bin(q):
    k = np.arange(32)
    block = np.exp(2j * np.pi * k * q / 32)[None, :, None] * np.ones((2, 1, 3))
    energy = np.abs(doppler_fft(block, window=False).data) ** 2
    assert energy[:, 16 + q].sum() == pytest.approx(energy.sum())


def test_range_doppler_shapes(radar):
    cube = synthesize_scene(point_scene(frames=2), radar)
    rd = range_doppler(cube.data, radar.chirp_repetition)
    assert rd.data.shape == (2, 32, 128, 3)
    assert rd.range_bin_count == 32 and rd.doppler_bin_count == 128 and rd.rx_count == 3


def test_mti_constant_stream_zero():
    frame = np.random.default_rng(0).standard_normal((4, 8, 3)) + 0j
    res = mti_stream(np.stack([frame] * 20), alpha=0.01)
    assert not np.any(res)


def test_mti_alpha_limits(rng):
    frames = rng.standard_normal((6, 4, 8, 3)) + 1j * rng.standard_normal((6, 4, 8, 3))
    assert not np.any(mti_stream(frames, alpha=0.0))
    frozen = mti_stream(frames, alpha=1.0)
    assert np.array_equal(frozen, frames - frames[0])


def test_mti_recursion_exact(rng):
    frames = rng.standard_normal((5, 2, 4, 3)) + 0j
    a = 0.3
    c = frames[0].copy()
    res = mti_stream(frames, a)
    for k in range(5):
        c = a * c + (1 - a) * frames[k]
        np.testing.assert_allclose(res[k], frames[k] - c, rtol=0, atol=1e-14)


def test_mti_shape_mismatch():
    state = MtiState.from_frame(np.zeros((2, 4, 3)))
    with pytest.raises(ValueError):
        mti_update(state, np.zeros((2, 5, 3)))
    with pytest.raises(ValueError):
        MtiState(np.zeros(1), alpha=1.5)


def test_mti_keeps_rdcube_type():
    rd = doppler_fft(np.ones((2, 8, 3), complex))
    state, out = mti_update(MtiState.from_frame(rd), rd)
    assert isinstance(out, RdCube) and np.array_equal(out.doppler_axis, rd.doppler_axis)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_mti_linear(a, b, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((5, 2, 4, 2)) + 1j * r.standard_normal((5, 2, 4, 2))
    y = r.standard_normal((5, 2, 4, 2)) + 1j * r.standard_normal((5, 2, 4, 2))
    lhs = mti_stream(a * x + b * y, 0.01)
    rhs = a * mti_stream(x, 0.01) + b * mti_stream(y, 0.01)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.max(np.abs(rhs)))


def test_static_target_suppressed(radar):
    cube = synthesize_scene(point_scene(r=4.0, frames=200), radar)
    rd = range_doppler(cube.data, radar.chirp_repetition).data
    # start from an empty clutter estimate so there is a transient to decay
    res = mti_stream(rd, 0.01, initial=np.zeros_like(rd[0]))
    assert np.max(np.abs(res[-1])) < 1e-3 * np.max(np.abs(rd[-1]))


def test_breathing_survives_mti(radar):
    # MTI output is alpha * (RDM_k - C_{k-1}); compare energies after undoing that gain
    alpha = 0.01
    cube = synthesize_scene(point_scene(r=3.0, frames=60, breathing_amplitude=0.005,
                                        breathing_rate=0.25), radar)
    rd = range_doppler(cube.data, radar.chirp_repetition).data
    rb = round(3.0 / radar.range_resolution)
    res = mti_stream(rd, alpha)[10:, rb] / alpha
    pre = rd[10:, rb]
    dc = pre.shape[1] // 2
    non_dc = np.sum(np.abs(pre) ** 2) - np.sum(np.abs(pre[:, dc]) ** 2)
    assert np.sum(np.abs(res) ** 2) >= 0.5 * non_dc


def test_breathing_energy_within_two_bins_of_dc(radar):
    cube = synthesize_scene(point_scene(r=3.0, frames=30, breathing_amplitude=0.005,
                                        breathing_rate=0.25), radar)
    rd = range_doppler(cube.data, radar.chirp_repetition).data
    res = mti_stream(rd, 0.01)[10:, round(3.0 / radar.range_resolution)]
    energy = np.sum(np.abs(res) ** 2, axis=(0, 2))
    dc = energy.size // 2
    assert energy[dc - 2: dc + 3].sum() > 0.95 * energy.sum()
