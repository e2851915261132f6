"""Synthetic full-synthetic-aperture imaging harness.

Point-scatterer channel data is generated from two-point times of flight
through the layered medium (each element transmits alone, every element
receives), beamformed by delay-and-sum with either the straight-ray or the
refraction-corrected delay engine, and evaluated through lateral beam
profiles around the targets.  Everything is deterministic: fixed evaluation
order, no noise sources.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import hilbert

from .batch import tof_maps
from .errors import RoiError
from .focusing import ElementArray
from .goatsolve import SolverOptions
from .medium import Medium, Point2

DB_FLOOR = -60.0
_PULSE_SUPPORT_FLOOR = 1e-8  # envelope fraction treated as zero


@dataclass(frozen=True)
class Pulse:
    """Gaussian-modulated sinusoid; bandwidth is fractional at -6 dB."""

    center_frequency: float
    fractional_bandwidth: float = 0.6

    def __post_init__(self):
        if self.center_frequency <= 0:
            raise ValueError("center frequency must be positive")
        if not (0.0 < self.fractional_bandwidth < 2.0):
            raise ValueError("fractional bandwidth must be in (0, 2)")

    @property
    def _gauss_a(self) -> float:
        ref = 10.0 ** (-6.0 / 20.0)
        bwf = self.fractional_bandwidth * self.center_frequency
        return -((math.pi * bwf) ** 2) / (4.0 * math.log(ref))

    @property
    def support(self) -> float:
        """Half-width outside which the envelope is below 1e-8 of peak."""
        return math.sqrt(math.log(1.0 / _PULSE_SUPPORT_FLOOR) / self._gauss_a)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-self._gauss_a * t * t) * np.cos(
            2.0 * math.pi * self.center_frequency * t)


@dataclass(frozen=True)
class ChannelDataSet:
    """Full-synthetic-aperture traces: samples[tx, rx, time]."""

    samples: np.ndarray
    sample_rate: float
    t0: float = 0.0
    omitted: tuple[tuple[int, int, str], ...] = field(default=())

    @property
    def n_elements(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[2]


@dataclass(frozen=True)
class ImageGrid:
    x: np.ndarray  # lateral pixel centers (m)
    z: np.ndarray  # depth pixel centers (m)

    @classmethod
    def from_extent(cls, x_lo, x_hi, z_lo, z_hi, spacing):
        nx = int(round((x_hi - x_lo) / spacing)) + 1
        nz = int(round((z_hi - z_lo) / spacing)) + 1
        return cls(x_lo + np.arange(nx) * spacing, z_lo + np.arange(nz) * spacing)


@dataclass(frozen=True)
class Image:
    grid: ImageGrid
    intensity: np.ndarray  # (nz, nx)
    scale: str  # "linear" | "db"


@dataclass(frozen=True)
class BeamProfile:
    lateral_axis: np.ndarray
    values_db: np.ndarray
    fwhm: float
    peak_to_background_db: float
    roi: tuple[float, float, float, float]  # x_lo, x_hi, z_lo, z_hi


def synthesize_channels(medium: Medium, array: ElementArray, scatterers,
                        pulse: Pulse, sample_rate: float, duration: float,
                        t0: float = 0.0,
                        opts: SolverOptions = SolverOptions()) -> ChannelDataSet:
    """Noise-free channel data for unit point scatterers.

    trace(tx, rx, t) = sum_k amp_k * pulse(t - tof(tx -> k) - tof(k -> rx)),
    with both legs along refraction-corrected paths (the synthesis engine is
    always the layered-medium one; it is the ground-truth physics here).
    Failed (element, scatterer) solves contribute nothing and are recorded
    in ``omitted``.
    """
    scatterers = [(p, float(a)) for p, a in scatterers]
    if sample_rate <= 2.0 * pulse.center_frequency * (1.0 + pulse.fractional_bandwidth):
        raise ValueError("sample rate too low for the pulse bandwidth")
    M = len(array)
    nt = int(round(duration * sample_rate))
    sx = np.array([p.x for p, _ in scatterers])
    sz = np.array([p.z for p, _ in scatterers])
    tofs = tof_maps(medium, array.element_positions, sx, sz, opts)  # (M, K)
    omitted = [(int(m), int(k), "no refracted path")
               for m, k in zip(*np.nonzero(~np.isfinite(tofs)))]
    cut = pulse.support
    finite_tofs = tofs[np.isfinite(tofs)]
    if finite_tofs.size:
        t_max = 2.0 * float(np.max(finite_tofs)) + cut
        if t0 + duration < t_max:
            raise ValueError(
                f"duration {duration:.3e} s does not cover the round trip "
                f"plus pulse support ({t_max - t0:.3e} s)")
    samples = np.zeros((M, M, nt))
    win = int(math.ceil(cut * sample_rate))
    for k, (_, amp) in enumerate(scatterers):
        for i in range(M):
            ti = tofs[i, k]
            if not np.isfinite(ti):
                continue
            for j in range(M):
                tj = tofs[j, k]
                if not np.isfinite(tj):
                    continue
                tau = ti + tj
                center = (tau - t0) * sample_rate
                a = max(0, int(math.ceil(center)) - win)
                b = min(nt, int(math.floor(center)) + win + 1)
                if a >= b:
                    continue
                tt = t0 + np.arange(a, b) / sample_rate - tau
                samples[i, j, a:b] += amp * pulse(tt)
    return ChannelDataSet(samples, sample_rate, t0, tuple(omitted))


def envelope(trace) -> np.ndarray:
    """Magnitude of the discrete analytic signal (negative frequencies
    zeroed); same length as the input."""
    trace = np.asarray(trace, dtype=float)
    if trace.shape[-1] < 16:
        raise ValueError("trace too short for envelope extraction")
    return np.abs(hilbert(trace, axis=-1))


def _das_sum(channels: ChannelDataSet, idx_maps: np.ndarray) -> np.ndarray:
    """Delay-and-sum accumulation: for every pixel, gather each trace at the
    two-way delay with linear interpolation and sum over all pairs.

    ``idx_maps[m]`` holds (one-way delay * sample_rate) per pixel for element
    m.  Symmetric channel sets are folded over unordered pairs.
    """
    M = channels.n_elements
    nt = channels.n_samples
    base = -channels.t0 * channels.sample_rate
    npix = idx_maps.shape[1]
    acc = np.zeros(npix)
    symmetric = np.array_equal(channels.samples,
                               channels.samples.swapaxes(0, 1))

    def add(i, j, weight):
        t = idx_maps[i] + idx_maps[j] + base
        i0 = np.floor(t).astype(np.int64)
        valid = (i0 >= 0) & (i0 < nt - 1)
        i0c = np.where(valid, i0, 0)
        w = t - i0
        tr = channels.samples[i, j]
        vals = tr[i0c] * (1.0 - w) + tr[i0c + 1] * w
        np.add(acc, np.where(valid, vals, 0.0) * weight, out=acc)

    if symmetric:
        for i in range(M):
            add(i, i, 1.0)
            for j in range(i + 1, M):
                add(i, j, 2.0)
    else:
        for i in range(M):
            for j in range(M):
                add(i, j, 1.0)
    return acc


def das_beamform(channels: ChannelDataSet, medium: Medium | None,
                 array: ElementArray, grid: ImageGrid, engine: str,
                 scale: str = "db",
                 opts: SolverOptions = SolverOptions(),
                 reference_speed: float = 1540.0) -> Image:
    """Delay-and-sum image over the pixel grid.

    Per pixel, every (tx, rx) trace is sampled at the two-way delay under
    the chosen engine and summed (tx-major accumulation; bit-stable).  With
    ``scale="linear"`` the raw pre-envelope sums are returned; the default
    applies the per-column envelope and dB compression with the peak at
    exactly 0 dB and a -60 dB display floor.  Pixels whose delays failed are
    absent: NaN in linear scale, floor value in dB, excluded from the
    normalization.
    """
    gx, gz = np.meshgrid(grid.x, grid.z, indexing="xy")
    if engine == "hmfa":
        ex = array.xs[:, None, None]
        ez = array.zs[:, None, None]
        maps = np.hypot(gx[None] - ex, gz[None] - ez) / reference_speed
    elif engine == "goat":
        if medium is None:
            raise ValueError("the goat engine requires a medium")
        maps = tof_maps(medium, array.element_positions, gx, gz, opts)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    nz, nx = gx.shape
    flat = maps.reshape(len(array), -1) * channels.sample_rate
    absent = np.any(~np.isfinite(flat), axis=0)
    flat = np.where(np.isfinite(flat), flat, 0.0)
    raw = _das_sum(channels, flat).reshape(nz, nx)
    absent = absent.reshape(nz, nx)
    if scale == "linear":
        out = raw.copy()
        out[absent] = np.nan
        return Image(grid, out, "linear")
    env = envelope(raw.T).T  # per lateral column, along depth
    env[absent] = np.nan
    peak = np.nanmax(env) if np.any(np.isfinite(env)) else 0.0
    if peak <= 0.0:
        db = np.full_like(env, DB_FLOOR)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            db = 20.0 * np.log10(env / peak)
        db = np.where(np.isfinite(db), np.maximum(db, DB_FLOOR), DB_FLOOR)
    return Image(grid, db, "db")


def beam_profile(image: Image, roi) -> BeamProfile:
    """Lateral beam profile: per-column maximum over the ROI depth range,
    normalized to a 0 dB peak; width at -6 dB by linear interpolation of the
    crossings; background level from the median of the outer quarter of the
    columns."""
    if image.scale != "db":
        raise ValueError("beam profiles are extracted from dB images")
    x_lo, x_hi, z_lo, z_hi = roi
    eps = 1e-9  # absorb float jitter at pixel-aligned ROI edges
    xsel = (image.grid.x >= x_lo - eps) & (image.grid.x <= x_hi + eps)
    zsel = (image.grid.z >= z_lo - eps) & (image.grid.z <= z_hi + eps)
    if np.count_nonzero(xsel) < 8 or np.count_nonzero(zsel) < 2:
        raise RoiError("region of interest too small")
    sub = image.intensity[np.ix_(zsel, xsel)]
    lateral = image.grid.x[xsel]
    prof = np.max(sub, axis=0)
    prof = prof - np.max(prof)  # 0 dB peak
    n = prof.size
    outer = max(1, n // 8)
    background = float(np.median(np.concatenate([prof[:outer], prof[-outer:]])))
    if 0.0 < background + 6.0:
        raise RoiError(
            f"no peak 6 dB above the background ({background:.1f} dB)")
    ipk = int(np.argmax(prof))

    def crossing(direction):
        i = ipk
        while 0 <= i + direction < n and prof[i + direction] > -6.0:
            i += direction
        j = i + direction
        if j < 0 or j >= n:
            raise RoiError("-6 dB crossing not inside the region of interest")
        frac = (-6.0 - prof[i]) / (prof[j] - prof[i])
        return lateral[i] + frac * (lateral[j] - lateral[i])

    left = crossing(-1)
    right = crossing(+1)
    return BeamProfile(lateral, prof, float(right - left),
                       0.0 - background, tuple(roi))


def peak_position(image: Image, roi) -> Point2:
    """Pixel-grid position of the ROI's intensity maximum."""
    x_lo, x_hi, z_lo, z_hi = roi
    xsel = (image.grid.x >= x_lo) & (image.grid.x <= x_hi)
    zsel = (image.grid.z >= z_lo) & (image.grid.z <= z_hi)
    sub = image.intensity[np.ix_(zsel, xsel)]
    iz, ix = np.unravel_index(int(np.argmax(sub)), sub.shape)
    return Point2(float(image.grid.x[xsel][ix]), float(image.grid.z[zsel][iz]))


# ---------------------------------------------------------------------------
# File formats

CHANNEL_MAGIC = b"GOATCD1\n"


def write_channels(channels: ChannelDataSet, path, provenance: str = ""):
    """Binary channel format: magic, one JSON header line, then raw
    little-endian float32 samples in (tx, rx, time) order."""
    header = {
        "n_tx": int(channels.samples.shape[0]),
        "n_rx": int(channels.samples.shape[1]),
        "n_samples": int(channels.samples.shape[2]),
        "sample_rate_hz": channels.sample_rate,
        "t0_s": channels.t0,
        "dtype": "<f4",
        "provenance": provenance,
    }
    with open(path, "wb") as fh:
        fh.write(CHANNEL_MAGIC)
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(np.ascontiguousarray(channels.samples, dtype="<f4").tobytes())


def read_channels(path) -> ChannelDataSet:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHANNEL_MAGIC))
        if magic != CHANNEL_MAGIC:
            raise ValueError(f"not a channel data file: bad magic {magic!r}")
        header = json.loads(fh.readline().decode())
        raw = np.frombuffer(fh.read(), dtype="<f4")
    shape = (header["n_tx"], header["n_rx"], header["n_samples"])
    samples = raw.reshape(shape).astype(float)
    return ChannelDataSet(samples, header["sample_rate_hz"], header["t0_s"])


def quantize_db_image(image: Image) -> np.ndarray:
    """Map the [-60, 0] dB range linearly onto uint8 [0, 255]."""
    if image.scale != "db":
        raise ValueError("only dB images are exported")
    scaled = (image.intensity - DB_FLOOR) / (0.0 - DB_FLOOR) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def write_p5(image: Image, path, provenance: str = ""):
    """8-bit binary graymap of a dB image, row-major with x fastest."""
    data = quantize_db_image(image)
    nz, nx = data.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n")
        if provenance:
            fh.write(f"# {provenance}\n".encode())
        fh.write(f"{nx} {nz}\n255\n".encode())
        fh.write(data.tobytes())


def write_image_metadata(image: Image, path, engine: str, provenance: str = ""):
    grid = image.grid
    meta = {
        "x_lo_m": float(grid.x[0]), "x_hi_m": float(grid.x[-1]),
        "z_lo_m": float(grid.z[0]), "z_hi_m": float(grid.z[-1]),
        "spacing_x_m": float(grid.x[1] - grid.x[0]) if grid.x.size > 1 else 0.0,
        "spacing_z_m": float(grid.z[1] - grid.z[0]) if grid.z.size > 1 else 0.0,
        "n_x": int(grid.x.size), "n_z": int(grid.z.size),
        "engine": engine, "scale": image.scale,
        "db_floor": DB_FLOOR, "provenance": provenance,
    }
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_profile_csv(profile: BeamProfile, path, provenance: str = ""):
    lines = []
    if provenance:
        lines.append(f"# {provenance}")
    lines.append(f"# fwhm_m={profile.fwhm!r}")
    lines.append(f"# peak_to_background_db={profile.peak_to_background_db!r}")
    lines.append(f"# roi_m={','.join(repr(float(v)) for v in profile.roi)}")
    lines.append("lateral_m,value_db")
    for x, v in zip(profile.lateral_axis, profile.values_db):
        lines.append(f"{float(x)!r},{float(v)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
