"""Channel synthesis, envelope extraction, DAS beamforming, beam profiles."""

import math

import numpy as np
import pytest

from goatfocus.errors import RoiError
from goatfocus.focusing import linear_array
from goatfocus.imaging import (
    Image,
    ImageGrid,
    Pulse,
    beam_profile,
    das_beamform,
    envelope,
    peak_position,
    quantize_db_image,
    read_channels,
    synthesize_channels,
    write_channels,
    write_p5,
)
from goatfocus.medium import Point2

from cases import MM, homogeneous_medium, proxon_medium

US = 1e-6
FS = 100e6
PULSE = Pulse(5e6, 0.6)


def small_homog_setup():
    med = homogeneous_medium()
    arr = linear_array(8, 1.0 * MM)
    scat = [(Point2(0.0, 25 * MM), 1.0)]
    return med, arr, scat


class TestPulse:
    def test_envelope_peak_at_zero(self):
        t = np.linspace(-1 * US, 1 * US, 2001)
        y = PULSE(t)
        assert abs(t[np.argmax(np.abs(y))]) <= 1e-8

    def test_support_bounds_amplitude(self):
        s = PULSE.support
        assert abs(PULSE(s)) <= 1e-7
        assert s < 1 * US

    def test_minus_6db_bandwidth(self):
        # The spectrum magnitude at f0*(1 +/- bw/2) must sit at -6 dB.
        fs = 400e6
        t = (np.arange(16384) - 8192) / fs
        y = PULSE(t)
        spec = np.abs(np.fft.rfft(y))
        freq = np.fft.rfftfreq(t.size, 1 / fs)
        peak = np.max(spec)
        for edge in (5e6 * (1 - 0.3), 5e6 * (1 + 0.3)):
            val = np.interp(edge, freq, spec) / peak
            assert 20 * math.log10(val) == pytest.approx(-6.0, abs=0.1)

    def test_validation(self):
        with pytest.raises(ValueError):
            Pulse(-1.0, 0.6)
        with pytest.raises(ValueError):
            Pulse(5e6, 2.5)


class TestSynthesizeChannels:
    def test_on_axis_peak_at_round_trip_time(self):
        med, arr, scat = small_homog_setup()
        ch = synthesize_channels(med, arr, scat, PULSE, FS, 60 * US)
        m = 3  # element near the axis
        trace = ch.samples[m, m]
        tof = (Point2(arr.xs[m], 0.0).dist(scat[0][0])) / 1540.0
        peak_idx = np.argmax(envelope(trace))
        assert abs(peak_idx / FS - 2 * tof) <= 1.0 / FS

    def test_reciprocity_bit_identical(self):
        med, arr, scat = small_homog_setup()
        ch = synthesize_channels(med, arr, scat, PULSE, FS, 60 * US)
        assert np.array_equal(ch.samples, ch.samples.swapaxes(0, 1))

    def test_slow_layer_delays_arrivals(self):
        # A 9 mm slower slab shifts the on-axis round trip by
        # 2 * 9 mm * (1/1393.5 - 1/1540) relative to the homogeneous case.
        arr = linear_array(4, 0.5 * MM)
        scat = [(Point2(0.0, 25 * MM), 1.0)]
        hom = homogeneous_medium(dom=(-20 * MM, 20 * MM))
        ch_h = synthesize_channels(hom, arr, scat, PULSE, FS, 70 * US)
        ch_p = synthesize_channels(proxon_medium(), arr, scat, PULSE, FS, 70 * US)
        shift_expected = 2 * 9 * MM * (1 / 1393.5 - 1 / 1540.0)
        for m in range(4):
            ph = np.argmax(envelope(ch_h.samples[m, m]))
            pp = np.argmax(envelope(ch_p.samples[m, m]))
            assert (pp - ph) / FS == pytest.approx(shift_expected, abs=2.5 / FS)

    def test_additive_in_scatterers(self):
        med, arr, _ = small_homog_setup()
        s1 = [(Point2(-2 * MM, 22 * MM), 1.0)]
        s2 = [(Point2(3 * MM, 28 * MM), 0.7)]
        both = synthesize_channels(med, arr, s1 + s2, PULSE, FS, 60 * US)
        a = synthesize_channels(med, arr, s1, PULSE, FS, 60 * US)
        b = synthesize_channels(med, arr, s2, PULSE, FS, 60 * US)
        assert np.array_equal(both.samples, a.samples + b.samples)

    def test_duration_must_cover_round_trip(self):
        med, arr, scat = small_homog_setup()
        with pytest.raises(ValueError):
            synthesize_channels(med, arr, scat, PULSE, FS, 10 * US)

    def test_sample_rate_validation(self):
        med, arr, scat = small_homog_setup()
        with pytest.raises(ValueError):
            synthesize_channels(med, arr, scat, PULSE, 12e6, 60 * US)


class TestEnvelope:
    def test_cosine_burst_interior_is_flat(self):
        fs = 100e6
        n = 4096
        t = np.arange(n) / fs
        trace = np.zeros(n)
        burst = slice(n // 4, 3 * n // 4)
        trace[burst] = np.cos(2 * np.pi * 5e6 * t[burst])
        env = envelope(trace)
        interior = env[n // 4 + n // 8: 3 * n // 4 - n // 8]
        assert np.max(np.abs(interior - 1.0)) <= 0.05

    def test_zero_trace(self):
        assert np.all(envelope(np.zeros(64)) == 0.0)

    def test_gaussian_pulse_peak_preserved(self):
        fs = 100e6
        t = (np.arange(2048) - 700) / fs
        env = envelope(PULSE(t))
        assert abs(int(np.argmax(env)) - 700) <= 1

    def test_too_short(self):
        with pytest.raises(ValueError):
            envelope(np.zeros(8))


class TestDasBeamform:
    def test_single_scatterer_peak_at_true_position(self):
        med, arr, scat = small_homog_setup()
        ch = synthesize_channels(med, arr, scat, PULSE, FS, 60 * US)
        grid = ImageGrid.from_extent(-6 * MM, 6 * MM, 20 * MM, 30 * MM, 0.1 * MM)
        img = das_beamform(ch, med, arr, grid, "goat")
        pk = peak_position(img, (-6 * MM, 6 * MM, 20 * MM, 30 * MM))
        wavelength = 1540.0 / 5e6
        assert pk.dist(scat[0][0]) <= wavelength / 2

    def test_homogeneous_engines_identical(self):
        med, arr, scat = small_homog_setup()
        ch = synthesize_channels(med, arr, scat, PULSE, FS, 60 * US)
        grid = ImageGrid.from_extent(-5 * MM, 5 * MM, 20 * MM, 30 * MM, 0.2 * MM)
        img_g = das_beamform(ch, med, arr, grid, "goat")
        img_h = das_beamform(ch, None, arr, grid, "hmfa")
        assert np.max(np.abs(img_g.intensity - img_h.intensity)) <= 1e-12

    def test_linearity_pre_envelope(self):
        med, arr, _ = small_homog_setup()
        s1 = [(Point2(-2 * MM, 22 * MM), 1.0)]
        s2 = [(Point2(3 * MM, 27 * MM), 0.6)]
        grid = ImageGrid.from_extent(-5 * MM, 5 * MM, 20 * MM, 30 * MM, 0.25 * MM)
        both = das_beamform(
            synthesize_channels(med, arr, s1 + s2, PULSE, FS, 60 * US),
            med, arr, grid, "goat", scale="linear")
        a = das_beamform(synthesize_channels(med, arr, s1, PULSE, FS, 60 * US),
                         med, arr, grid, "goat", scale="linear")
        b = das_beamform(synthesize_channels(med, arr, s2, PULSE, FS, 60 * US),
                         med, arr, grid, "goat", scale="linear")
        scale = np.max(np.abs(both.intensity))
        assert np.max(np.abs(both.intensity - (a.intensity + b.intensity))) \
            <= 1e-10 * scale

    def test_matched_engine_aligns_contributions(self):
        # Beamforming with the same engine that synthesized the data must
        # gather each trace within one sample of its peak at the scatterer.
        med, arr, scat = small_homog_setup()
        ch = synthesize_channels(med, arr, scat, PULSE, FS, 60 * US)
        p = scat[0][0]
        for i in range(len(arr)):
            for j in range(len(arr)):
                ti = Point2(arr.xs[i], 0.0).dist(p) / 1540.0
                tj = Point2(arr.xs[j], 0.0).dist(p) / 1540.0
                idx = (ti + tj) * FS
                peak = np.argmax(envelope(ch.samples[i, j]))
                assert abs(idx - peak) <= 1.0

    def test_db_image_normalization(self):
        med, arr, scat = small_homog_setup()
        ch = synthesize_channels(med, arr, scat, PULSE, FS, 60 * US)
        grid = ImageGrid.from_extent(-5 * MM, 5 * MM, 20 * MM, 30 * MM, 0.2 * MM)
        img = das_beamform(ch, med, arr, grid, "goat")
        assert img.scale == "db"
        assert np.max(img.intensity) == 0.0
        assert np.min(img.intensity) >= -60.0


class TestBeamProfile:
    def test_gaussian_ridge_fwhm(self):
        # Synthetic dB image holding a Gaussian ridge of known width.
        sigma = 0.8 * MM
        grid = ImageGrid.from_extent(-8 * MM, 8 * MM, 0.0, 4 * MM, 0.05 * MM)
        gx, gz = np.meshgrid(grid.x, grid.z, indexing="xy")
        amp = np.exp(-gx**2 / (2 * sigma**2))
        db = 20 * np.log10(np.maximum(amp, 1e-6))
        img = Image(grid, np.maximum(db, -60.0), "db")
        prof = beam_profile(img, (-8 * MM, 8 * MM, 0.0, 4 * MM))
        assert prof.fwhm == pytest.approx(2.3548 * sigma, rel=0.02)

    def test_symmetric_profile(self):
        med, arr, scat = small_homog_setup()
        ch = synthesize_channels(med, arr, scat, PULSE, FS, 60 * US)
        grid = ImageGrid.from_extent(-4 * MM, 4 * MM, 22 * MM, 28 * MM, 0.1 * MM)
        img = das_beamform(ch, med, arr, grid, "goat")
        prof = beam_profile(img, (-4 * MM, 4 * MM, 22 * MM, 28 * MM))
        ipk = int(np.argmax(prof.values_db))
        center = prof.lateral_axis[ipk]
        assert abs(center - 0.0) <= 0.1 * MM + 1e-12

    def test_profile_without_peak_raises(self):
        grid = ImageGrid.from_extent(-5 * MM, 5 * MM, 0.0, 2 * MM, 0.1 * MM)
        flat = np.full((grid.z.size, grid.x.size), -3.0)
        with pytest.raises(RoiError):
            beam_profile(Image(grid, flat, "db"), (-5 * MM, 5 * MM, 0, 2 * MM))


class TestFileFormats:
    def test_channel_round_trip(self, tmp_path):
        med, arr, scat = small_homog_setup()
        ch = synthesize_channels(med, arr, scat, PULSE, FS, 60 * US)
        path = tmp_path / "channels.goatcd"
        write_channels(ch, path, provenance="test")
        back = read_channels(path)
        assert back.samples.shape == ch.samples.shape
        assert back.sample_rate == ch.sample_rate
        # float32 storage quantizes the samples
        assert np.max(np.abs(back.samples - ch.samples)) <= 1e-6
        with open(path, "rb") as fh:
            assert fh.read(8) == b"GOATCD1\n"

    def test_p5_layout(self, tmp_path):
        grid = ImageGrid.from_extent(0.0, 3 * MM, 0.0, 2 * MM, 1 * MM)
        db = np.full((grid.z.size, grid.x.size), -60.0)
        db[1, 2] = 0.0
        img = Image(grid, db, "db")
        path = tmp_path / "img.pgm"
        write_p5(img, path, provenance="test")
        raw = path.read_bytes()
        assert raw.startswith(b"P5\n# test\n4 3\n255\n")
        pixels = np.frombuffer(raw[raw.index(b"255\n") + 4:], dtype=np.uint8)
        assert pixels.reshape(3, 4)[1, 2] == 255
        assert pixels.sum() == 255

    def test_quantization_range(self):
        grid = ImageGrid.from_extent(0.0, 1 * MM, 0.0, 1 * MM, 1 * MM)
        img = Image(grid, np.array([[-60.0, -30.0], [0.0, -75.0]]), "db")
        q = quantize_db_image(img)
        assert q[0, 0] == 0 and q[1, 0] == 255
        assert q[0, 1] == 128 or q[0, 1] == 127
        assert q[1, 1] == 0
