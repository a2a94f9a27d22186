"""Nanostructure height-fields: generators, Gaussian windowing, and storage.

Elevations are kept in micrometers so that surface height and wavelength
share units throughout the forward model. Grids are stored as float32,
row-major with the y axis outermost; sample (ix, iy) sits at the physical
position (ix * extent_x / samples_x, iy * extent_y / samples_y).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

MAGIC = b"DFRQHF1\x00"

__all__ = [
    "HeightField",
    "generate_blazed",
    "generate_synthetic_cd",
    "generate_random",
    "apply_gaussian_window",
    "store",
    "load",
    "save_file",
    "load_file",
]


@dataclass(frozen=True)
class HeightField:
    """A 2D grid of nano-elevations (micrometers) over a rectangular patch.

    ``elevations`` has shape (samples_y, samples_x), float32, finite and
    non-negative. ``extent_x``/``extent_y`` are the physical patch sides in
    micrometers; spacing is uniform per axis.
    """

    elevations: np.ndarray
    extent_x: float
    extent_y: float

    def __post_init__(self):
        elev = np.asarray(self.elevations, dtype=np.float32)
        if elev.ndim != 2:
            raise ValueError("elevations must be a 2D grid")
        if elev.shape[0] < 2 or elev.shape[1] < 2:
            raise ValueError("height-field needs at least 2 samples per axis")
        if not np.all(np.isfinite(elev)):
            raise ValueError("elevations must be finite")
        if np.any(elev < 0):
            raise ValueError("elevations must be non-negative")
        if not (self.extent_x > 0 and self.extent_y > 0):
            raise ValueError("extents must be positive")
        elev.setflags(write=False)
        object.__setattr__(self, "elevations", elev)

    @property
    def samples_x(self) -> int:
        return self.elevations.shape[1]

    @property
    def samples_y(self) -> int:
        return self.elevations.shape[0]

    @property
    def spacing_x(self) -> float:
        return self.extent_x / self.samples_x

    @property
    def spacing_y(self) -> float:
        return self.extent_y / self.samples_y

    @property
    def max_elevation(self) -> float:
        return float(self.elevations.max())

    def content_hash(self) -> str:
        return hashlib.sha256(store(self)).hexdigest()

    def __eq__(self, other) -> bool:
        if not isinstance(other, HeightField):
            return NotImplemented
        return (
            self.extent_x == other.extent_x
            and self.extent_y == other.extent_y
            and self.elevations.shape == other.elevations.shape
            and bool(np.all(self.elevations == other.elevations))
        )


def _check_positive(**kwargs):
    for name, value in kwargs.items():
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")


def generate_blazed(period: float, peak_height: float, extent: float, samples: int) -> HeightField:
    """Sawtooth ramp profile along x, constant along y.

    Each tooth ramps from 0 at its first sample to ``peak_height`` at its
    last; ``period`` must divide ``extent`` to within one grid cell.
    """
    _check_positive(period=period, peak_height=peak_height, extent=extent, samples=samples)
    samples = int(samples)
    teeth = extent / period
    if abs(extent - round(teeth) * period) > extent / samples:
        raise ValueError("period must divide extent to within one grid cell")
    spp = samples * period / extent
    if abs(spp - round(spp)) > 1.0:
        raise ValueError("period must span a whole number of samples to within one cell")
    spp = int(round(spp))
    i = np.arange(samples)
    profile = peak_height * (i % spp) / (spp - 1)
    elev = np.broadcast_to(profile, (samples, samples)).copy()
    return HeightField(elev, extent, extent)


def generate_synthetic_cd(
    track_pitch: float,
    pit_depth: float,
    bit_length: float,
    extent: float,
    samples: int,
    seed: int,
) -> HeightField:
    """Parallel tracks with pseudo-random pit/land runs.

    Tracks run along x and repeat every ``track_pitch`` in y. Pits are
    rectangular depressions of width ``track_pitch / 2`` whose lengths are
    whole multiples (3..11, uniform per ``seed``) of ``bit_length``. Land
    level is ``pit_depth``, pit bottoms sit at elevation 0.
    """
    _check_positive(track_pitch=track_pitch, bit_length=bit_length, extent=extent, samples=samples)
    if pit_depth < 0:
        raise ValueError("pit_depth must be non-negative")
    if track_pitch > extent:
        raise ValueError("track_pitch exceeds the patch extent")
    samples = int(samples)
    rng = np.random.Generator(np.random.PCG64(seed))
    dx = extent / samples
    elev = np.full((samples, samples), pit_depth, dtype=np.float64)

    n_tracks = int(np.floor(extent / track_pitch))
    pit_width = track_pitch / 2.0
    bits_total = int(np.ceil(extent / bit_length))
    for t in range(n_tracks):
        yc = (t + 0.5) * track_pitch
        y0 = int(np.ceil((yc - pit_width / 2) / dx))
        y1 = int(np.floor((yc + pit_width / 2) / dx))
        y0, y1 = max(y0, 0), min(y1, samples - 1)
        if y1 < y0:
            continue
        # Alternate land/pit runs of 3..11 bit-lengths along the track.
        in_pit = bool(rng.integers(0, 2))
        bit = 0
        while bit < bits_total:
            run = int(rng.integers(3, 12))
            if in_pit:
                x0 = int(np.ceil(bit * bit_length / dx))
                x1 = int(np.floor(min((bit + run) * bit_length, extent) / dx))
                x1 = min(x1, samples - 1)
                if x1 >= x0 >= 0:
                    elev[y0 : y1 + 1, x0 : x1 + 1] = 0.0
            bit += run
            in_pit = not in_pit
    return HeightField(elev, extent, extent)


def generate_random(max_height: float, extent: float, samples: int, seed: int) -> HeightField:
    """Uniform pseudo-random elevations in [0, max_height], seeded."""
    _check_positive(max_height=max_height, extent=extent, samples=samples)
    samples = int(samples)
    rng = np.random.Generator(np.random.PCG64(seed))
    elev = rng.uniform(0.0, max_height, size=(samples, samples))
    return HeightField(elev, extent, extent)


def apply_gaussian_window(hf: HeightField, sigma: float) -> HeightField:
    """Damp elevations by exp(-r^2 / (2 sigma^2)), r measured from patch center."""
    _check_positive(sigma=sigma)
    x = np.arange(hf.samples_x) * hf.spacing_x - hf.extent_x / 2.0
    y = np.arange(hf.samples_y) * hf.spacing_y - hf.extent_y / 2.0
    r2 = x[np.newaxis, :] ** 2 + y[:, np.newaxis] ** 2
    window = np.exp(-r2 / (2.0 * sigma * sigma))
    return HeightField(hf.elevations * window, hf.extent_x, hf.extent_y)


def store(hf: HeightField) -> bytes:
    header = MAGIC + struct.pack(
        "<IIdd", hf.samples_x, hf.samples_y, hf.extent_x, hf.extent_y
    )
    payload = hf.elevations.astype("<f4").tobytes(order="C")
    return header + payload


def load(data: bytes) -> HeightField:
    if len(data) < len(MAGIC) + 24:
        raise FormatError("height-field payload truncated")
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError("not a height-field file (bad magic)")
    sx, sy, ex, ey = struct.unpack_from("<IIdd", data, len(MAGIC))
    if sx < 2 or sy < 2:
        raise FormatError("height-field grid too small")
    expected = len(MAGIC) + 24 + 4 * sx * sy
    if len(data) != expected:
        raise FormatError(f"height-field payload has {len(data)} bytes, expected {expected}")
    elev = np.frombuffer(data, dtype="<f4", offset=len(MAGIC) + 24).reshape(sy, sx)
    return HeightField(elev, ex, ey)


def save_file(hf: HeightField, path) -> str:
    """Write a height-field file; returns its content hash."""
    blob = store(hf)
    with open(path, "wb") as f:
        f.write(blob)
    return hashlib.sha256(blob).hexdigest()


def load_file(path) -> HeightField:
    with open(path, "rb") as f:
        return load(f.read())
