import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rasso.rdproc import mti_stream, range_doppler, range_fft
from rasso.sim import (SPEED_OF_LIGHT, AdcCube, RadarConfig, Scene, Target, beat_frequency, frame_rng,
                       synthesize_frame, synthesize_scene, worker_count)

from conftest import point_scene, polar


def test_default_waveform_derivations(radar):
    assert radar.wavelength == pytest.approx(SPEED_OF_LIGHT / 60e9)
    assert f"{radar.range_resolution:.3g}" == "0.3"
    assert radar.range_bin_count == 32
    assert f"{radar.max_range:.3g}" == "9.6"
    assert f"{radar.max_speed:.3g}" == "3"
    assert radar.max_speed == pytest.approx(radar.wavelength / (4 * radar.chirp_repetition))


def test_default_l_shape(radar):
    half = radar.wavelength / 2
    np.testing.assert_allclose(radar.rx_array, [[half, 0, 0], [0, half, 0], [0, 0, 0]])


@pytest.mark.parametrize("kw", [
    {"bandwidth": 0.0}, {"center_frequency": -1.0}, {"chirp_duration": 1e-3},
    {"samples_per_chirp": 1}, {"rx_count": 2}, {"frame_rate": 100.0},
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        RadarConfig(**kw)


def test_beat_frequency(radar):
    assert beat_frequency(0.0, radar) == 0.0
    # one range bin = one beat cycle over the sampled chirp
    assert beat_frequency(radar.range_resolution, radar) * radar.chirp_duration == pytest.approx(1.0, abs=1e-12)
    assert beat_frequency(0.30, radar) * radar.chirp_duration == pytest.approx(1.0, abs=1e-5)
    # 9.6 m sits on the Nyquist edge of the 64-sample FFT
    assert round(beat_frequency(9.6, radar) * radar.chirp_duration) == 32


@pytest.mark.parametrize("r", [-0.1, "max", 20.0])
def test_beat_frequency_domain(radar, r):
    with pytest.raises(ValueError):
        beat_frequency(radar.max_range if r == "max" else r, radar)


def test_target_validation():
    with pytest.raises(ValueError):
        Target((0, 1), breathing_amplitude=-1e-3)
    with pytest.raises(ValueError):
        Scene(static_clutter=[Target((0, 1), breathing_amplitude=1e-3)])


def test_out_of_range_target(radar):
    with pytest.raises(ValueError):
        synthesize_scene(point_scene(r=9.7), radar)


def test_empty_noiseless_scene_is_zero(radar):
    cube = synthesize_scene(Scene(frame_count=3), radar)
    assert cube.data.shape == (3, 3, 128, 64)
    assert not np.any(cube.data)


def test_zero_frames(radar):
    cube = synthesize_scene(Scene(frame_count=0), radar)
    assert cube.data.shape == (0, 3, 128, 64)


def test_static_target_range_peak(radar):
    for r in (1.2, 3.37, 7.9):
        cube = synthesize_scene(point_scene(r=r, az_deg=10.0), radar)
        mag = np.abs(range_fft(cube.data[0]))
        peak = mag.argmax(axis=0)  # per chirp, rx
        assert np.all(peak == round(r / radar.range_resolution))


def test_two_targets_two_peaks(radar):
    scene = Scene([Target(polar(2.0, 0)), Target(polar(4.0, 15))], [], 0.0, 1, 0)
    row = np.abs(range_fft(synthesize_scene(scene, radar).data[0]))[:, 0, 2]
    bins = sorted(np.argsort(row)[-2:])
    assert bins == [round(2.0 / radar.range_resolution), round(4.0 / radar.range_resolution)]
    assert row[10] < 0.1 * row.max()


def test_breathing_phase_peak_to_peak(radar):
    amp, rate = 0.005, 0.25
    frames = int(radar.frame_rate / rate) + 1
    scene = point_scene(r=3.0, frames=frames, breathing_amplitude=amp, breathing_rate=rate)
    cube = synthesize_scene(scene, radar)
    rb = round(3.0 / radar.range_resolution)
    slow = np.stack([range_fft(f)[rb, :, 2] for f in cube.data]).ravel()
    phase = np.unwrap(np.angle(slow))
    expected = 4 * np.pi * (2 * amp) / radar.wavelength
    assert np.ptp(phase) == pytest.approx(expected, rel=0.01)


@settings(max_examples=40, deadline=None)
@given(st.floats(-80, 80))
def test_inter_element_phase(az):
    cfg = RadarConfig()
    frame = synthesize_frame(point_scene(r=4.0, az_deg=az), 0, cfg)
    measured = np.angle(frame[0] / frame[2])
    expected = np.angle(np.exp(1j * np.pi * np.sin(np.deg2rad(az))))
    assert np.max(np.abs(measured - expected)) < 1e-6


def test_linearity(radar):
    a = Scene([Target(polar(2.5, 20), 0.7, 0.004, 0.3)], [], 0.0, 4, 0)
    b = Scene([], [Target(polar(5.0, -35), 1.3)], 0.0, 4, 0)
    both = Scene(a.targets, b.static_clutter, 0.0, 4, 0)
    lhs = synthesize_scene(a, radar).data + synthesize_scene(b, radar).data
    rhs = synthesize_scene(both, radar).data
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * np.max(np.abs(rhs))


def test_noise_statistics(radar):
    cube = synthesize_scene(Scene(noise_std=2.0, frame_count=4, rng_seed=9), radar).data
    assert np.mean(np.abs(cube) ** 2) == pytest.approx(4.0, rel=0.02)
    assert np.var(cube.real) == pytest.approx(2.0, rel=0.02)
    assert abs(np.mean(cube.real * cube.imag)) < 0.02


def test_determinism_and_seed(radar):
    s = Scene([Target(polar(3, 5), 1, 0.005, 0.25)], [Target(polar(6, -20))], 1.0, 5, 77)
    a = synthesize_scene(s, radar).data
    b = synthesize_scene(s, radar).data
    assert np.array_equal(a, b)
    c = synthesize_scene(Scene(s.targets, s.static_clutter, 1.0, 5, 78), radar).data
    assert not np.array_equal(a, c)


def test_serial_parallel_bit_identical(radar):
    s = Scene([Target(polar(3, 5), 1, 0.005, 0.25)], [], 1.0, 12, 5)
    serial = synthesize_scene(s, radar, workers=1).data
    parallel = synthesize_scene(s, radar, workers=4).data
    assert np.array_equal(serial, parallel)


def test_frames_are_counter_seeded(radar):
    s = Scene(noise_std=1.0, frame_count=6, rng_seed=3)
    full = synthesize_scene(s, radar).data
    assert np.array_equal(full[4], synthesize_frame(s, 4, radar))
    a = frame_rng(3, 4).standard_normal(5)
    assert np.array_equal(a, frame_rng(3, 4).standard_normal(5))


def test_frame_index_bounds(radar):
    with pytest.raises(IndexError):
        synthesize_frame(Scene(frame_count=2), 2, radar)


def test_range_falloff(radar):
    near = synthesize_frame(Scene([Target(polar(2.0, 0))], [], 0, 1, 0, range_falloff=True), 0, radar)
    assert np.abs(near).max() == pytest.approx(0.25)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("RASSO_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("RASSO_THREADS", "0")
    assert worker_count() >= 1
    assert worker_count(2) == 2


def test_adc_cube_validation(radar):
    with pytest.raises(ValueError):
        AdcCube(np.zeros((1, 3, 128, 63), complex), radar)
    bad = np.zeros((1, 3, 128, 64), complex)
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        AdcCube(bad, radar)


def test_breathing_energy_near_zero_doppler(radar):
    # default breathing parameters, amplitude <= 10 mm and rate <= 0.5 Hz
    for amp, rate in ((0.005, 0.25), (0.010, 0.5), (0.003, 0.2)):
        cube = synthesize_scene(point_scene(r=3.0, frames=40, breathing_amplitude=amp, breathing_rate=rate), radar)
        rd = range_doppler(cube.data, radar.chirp_repetition)
        res = mti_stream(rd.data, 0.01)[10:, round(3.0 / radar.range_resolution)]
        energy = np.sum(np.abs(res) ** 2, axis=(0, 2))
        c = energy.size // 2
        assert energy[c - 2: c + 3].sum() >= 0.95 * energy.sum()
        assert math.isfinite(energy.sum()) and energy.sum() > 0
