"""Spectral integration against the CIE 1931 2-degree observer under D65,
plus the color-space conversions used for display and quality metrics.

The embedded tables are the CIE 1931 2-degree color matching functions and
the D65 relative spectral power distribution, both tabulated at 5 nm from
380 nm to 780 nm (81 entries; source: CIE 15:2004, tables T.1 and T.2).
Tristimulus integration is normalized so that a unit-reflectance spectrum
maps to Y = 1 exactly; X and Z of that spectrum land on the D65 white point.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "WAVELENGTHS_NM",
    "WAVELENGTHS_UM",
    "CMF_X",
    "CMF_Y",
    "CMF_Z",
    "D65_SPD",
    "SPECTRUM_SIZE",
    "ColorSpace",
    "ColorTriple",
    "SpectralTables",
    "TABLES",
    "spectrum_to_xyz",
    "xyz_to_linear_rgb",
    "linear_to_srgb",
    "srgb_to_ycbcr",
    "convert_pixels",
]

SPECTRUM_SIZE = 81

WAVELENGTHS_NM = np.arange(380.0, 781.0, 5.0)
WAVELENGTHS_UM = WAVELENGTHS_NM / 1000.0

CMF_X = np.array([
    0.001368, 0.002236, 0.004243, 0.007650, 0.014310, 0.023190,
    0.043510, 0.077630, 0.134380, 0.214770, 0.283900, 0.328500,
    0.348280, 0.348060, 0.336200, 0.318700, 0.290800, 0.251100,
    0.195360, 0.142100, 0.095640, 0.058010, 0.032010, 0.014700,
    0.004900, 0.002400, 0.009300, 0.029100, 0.063270, 0.109600,
    0.165500, 0.225750, 0.290400, 0.359700, 0.433450, 0.512050,
    0.594500, 0.678400, 0.762100, 0.842500, 0.916300, 0.978600,
    1.026300, 1.056700, 1.062200, 1.045600, 1.002600, 0.938400,
    0.854450, 0.751400, 0.642400, 0.541900, 0.447900, 0.360800,
    0.283500, 0.218700, 0.164900, 0.121200, 0.087400, 0.063600,
    0.046770, 0.032900, 0.022700, 0.015840, 0.011359, 0.008111,
    0.005790, 0.004109, 0.002899, 0.002049, 0.001440, 0.001000,
    0.000690, 0.000476, 0.000332, 0.000235, 0.000166, 0.000117,
    0.000083, 0.000059, 0.000042,
])

CMF_Y = np.array([
    0.000039, 0.000064, 0.000120, 0.000217, 0.000396, 0.000640,
    0.001210, 0.002180, 0.004000, 0.007300, 0.011600, 0.016840,
    0.023000, 0.029800, 0.038000, 0.048000, 0.060000, 0.073900,
    0.090980, 0.112600, 0.139020, 0.169300, 0.208020, 0.258600,
    0.323000, 0.407300, 0.503000, 0.608200, 0.710000, 0.793200,
    0.862000, 0.914850, 0.954000, 0.980300, 0.994950, 1.000000,
    0.995000, 0.978600, 0.952000, 0.915400, 0.870000, 0.816300,
    0.757000, 0.694900, 0.631000, 0.566800, 0.503000, 0.441200,
    0.381000, 0.321000, 0.265000, 0.217000, 0.175000, 0.138200,
    0.107000, 0.081600, 0.061000, 0.044580, 0.032000, 0.023200,
    0.017000, 0.011920, 0.008210, 0.005723, 0.004102, 0.002929,
    0.002091, 0.001484, 0.001047, 0.000740, 0.000520, 0.000361,
    0.000249, 0.000172, 0.000120, 0.000085, 0.000060, 0.000042,
    0.000030, 0.000021, 0.000015,
])

CMF_Z = np.array([
    0.006450, 0.010550, 0.020050, 0.036210, 0.067850, 0.110200,
    0.207400, 0.371300, 0.645600, 1.039050, 1.385600, 1.622960,
    1.747060, 1.782600, 1.772110, 1.744100, 1.669200, 1.528100,
    1.287640, 1.041900, 0.812950, 0.616200, 0.465180, 0.353300,
    0.272000, 0.212300, 0.158200, 0.111700, 0.078250, 0.057250,
    0.042160, 0.029840, 0.020300, 0.013400, 0.008750, 0.005750,
    0.003900, 0.002750, 0.002100, 0.001800, 0.001650, 0.001400,
    0.001100, 0.001000, 0.000800, 0.000600, 0.000340, 0.000240,
    0.000190, 0.000100, 0.000050, 0.000030, 0.000020, 0.000010,
    0.000000, 0.000000, 0.000000, 0.000000, 0.000000, 0.000000,
    0.000000, 0.000000, 0.000000, 0.000000, 0.000000, 0.000000,
    0.000000, 0.000000, 0.000000, 0.000000, 0.000000, 0.000000,
    0.000000, 0.000000, 0.000000, 0.000000, 0.000000, 0.000000,
    0.000000, 0.000000, 0.000000,
])

D65_SPD = np.array([
    49.9755, 52.3118, 54.6482, 68.7015, 82.7549, 87.1204,
    91.4860, 92.4589, 93.4318, 90.0570, 86.6823, 95.7736,
    104.8650, 110.9360, 117.0080, 117.4100, 117.8120, 116.3360,
    114.8610, 115.3920, 115.9230, 112.3670, 108.8110, 109.0820,
    109.3540, 108.5780, 107.8020, 106.2960, 104.7900, 106.2390,
    107.6890, 106.0470, 104.4050, 104.2250, 104.0460, 102.0230,
    100.0000, 98.1671, 96.3342, 96.0611, 95.7880, 92.2368,
    88.6856, 89.3459, 90.0062, 89.8026, 89.5991, 88.6489,
    87.6987, 85.4936, 83.2886, 83.4939, 83.6992, 81.8630,
    80.0268, 80.1207, 80.2146, 81.2462, 82.2778, 80.2810,
    78.2842, 74.0027, 69.7213, 70.6652, 71.6091, 72.9790,
    74.3490, 67.9765, 61.6040, 65.7448, 69.8856, 72.4863,
    75.0870, 69.3398, 63.5927, 55.0054, 46.4182, 56.6118,
    66.8054, 65.0941, 63.3828,
])

# Unit-reflectance spectrum integrates to Y = 1 exactly: the integration
# weights are pre-divided by the D65/y-bar dot product so the unit spectrum
# reproduces 1.0 through the same dot-product code path (the re-division
# loop irons out the last-ulp rounding of the first pass).
_DELTA_NM = 5.0
_ONES = np.ones(SPECTRUM_SIZE)
_norm = float(_ONES @ (D65_SPD * CMF_Y))
K_NORM = 1.0 / (_norm * _DELTA_NM)
_WEIGHT_X = D65_SPD * CMF_X / _norm
_WEIGHT_Y = D65_SPD * CMF_Y / _norm
_WEIGHT_Z = D65_SPD * CMF_Z / _norm
for _ in range(4):
    _y_unit = float(_ONES @ _WEIGHT_Y)
    if _y_unit == 1.0:
        break
    _WEIGHT_Y = _WEIGHT_Y / _y_unit

# D65 white point under the normalization above (X, Y, Z with Y = 1).
WHITE_POINT = (
    float(_ONES @ _WEIGHT_X),
    float(_ONES @ _WEIGHT_Y),
    float(_ONES @ _WEIGHT_Z),
)


class ColorSpace(enum.Enum):
    XYZ = "xyz"
    LINEAR_RGB = "linear_rgb"
    SRGB = "srgb"
    YCBCR = "ycbcr"


@dataclass(frozen=True)
class SpectralTables:
    """Bundle of the spectral sampling grid and integration tables."""

    wavelengths_nm: np.ndarray
    wavelengths_um: np.ndarray
    cmf_x: np.ndarray
    cmf_y: np.ndarray
    cmf_z: np.ndarray
    d65: np.ndarray
    k_norm: float


TABLES = SpectralTables(
    wavelengths_nm=WAVELENGTHS_NM,
    wavelengths_um=WAVELENGTHS_UM,
    cmf_x=CMF_X,
    cmf_y=CMF_Y,
    cmf_z=CMF_Z,
    d65=D65_SPD,
    k_norm=K_NORM,
)


@dataclass(frozen=True)
class ColorTriple:
    c0: float
    c1: float
    c2: float
    space: ColorSpace = ColorSpace.XYZ

    def as_array(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2])


def _require_space(c: ColorTriple, expected: ColorSpace) -> None:
    if c.space is not expected:
        raise ValueError(f"expected a {expected.value} triple, got {c.space.value}")


def spectrum_to_xyz(spectral_values) -> ColorTriple:
    """Integrate an 81-sample reflectance spectrum to CIE XYZ under D65.

    The input must be aligned to the 5 nm grid (380..780 nm inclusive).
    """
    s = np.asarray(spectral_values, dtype=np.float64)
    if s.shape != (SPECTRUM_SIZE,):
        raise ValueError(f"spectrum must have {SPECTRUM_SIZE} samples, got shape {s.shape}")
    xyz = spectra_to_xyz_array(s[np.newaxis, :])[0]
    return ColorTriple(float(xyz[0]), float(xyz[1]), float(xyz[2]), ColorSpace.XYZ)


def spectra_to_xyz_array(spectra: np.ndarray) -> np.ndarray:
    """Vector form of :func:`spectrum_to_xyz` for shape (..., 81) arrays."""
    spectra = np.asarray(spectra, dtype=np.float64)
    if spectra.shape[-1] != SPECTRUM_SIZE:
        raise ValueError(f"last axis must have {SPECTRUM_SIZE} samples")
    return np.stack(
        [spectra @ _WEIGHT_X, spectra @ _WEIGHT_Y, spectra @ _WEIGHT_Z], axis=-1
    )


# Matrices for the sRGB primaries with D65 white (IEC 61966-2-1).
XYZ_TO_LRGB_MATRIX = np.array([
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
])
LRGB_TO_XYZ_MATRIX = np.linalg.inv(XYZ_TO_LRGB_MATRIX)


def _xyz_to_lrgb_array(xyz: np.ndarray) -> np.ndarray:
    return np.asarray(xyz, dtype=np.float64) @ XYZ_TO_LRGB_MATRIX.T


def _lrgb_to_srgb_array(lrgb: np.ndarray) -> np.ndarray:
    # Diffraction spectra are spiky and routinely leave the gamut: clamp
    # negatives before the transfer curve and the encoded result to [0, 1].
    lin = np.clip(np.asarray(lrgb, dtype=np.float64), 0.0, None)
    low = lin <= 0.0031308
    out = np.where(low, 12.92 * lin, 1.055 * np.power(lin, 1.0 / 2.4, where=~low, out=np.ones_like(lin)) - 0.055)
    return np.clip(out, 0.0, 1.0)


def _srgb_to_ycbcr_array(srgb: np.ndarray) -> np.ndarray:
    # BT.601 luma with full-range chroma offsets of 0.5.
    srgb = np.asarray(srgb, dtype=np.float64)
    r, g, b = srgb[..., 0], srgb[..., 1], srgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 0.5 + (b - y) / 1.772
    cr = 0.5 + (r - y) / 1.402
    return np.clip(np.stack([y, cb, cr], axis=-1), 0.0, 1.0)


def xyz_to_linear_rgb(c: ColorTriple) -> ColorTriple:
    _require_space(c, ColorSpace.XYZ)
    r, g, b = _xyz_to_lrgb_array(c.as_array())
    return ColorTriple(float(r), float(g), float(b), ColorSpace.LINEAR_RGB)


def linear_to_srgb(c: ColorTriple) -> ColorTriple:
    _require_space(c, ColorSpace.LINEAR_RGB)
    r, g, b = _lrgb_to_srgb_array(c.as_array())
    return ColorTriple(float(r), float(g), float(b), ColorSpace.SRGB)


def srgb_to_ycbcr(c: ColorTriple) -> ColorTriple:
    _require_space(c, ColorSpace.SRGB)
    y, cb, cr = _srgb_to_ycbcr_array(c.as_array())
    return ColorTriple(float(y), float(cb), float(cr), ColorSpace.YCBCR)


_CONVERT_STEPS = {
    ColorSpace.XYZ: [],
    ColorSpace.LINEAR_RGB: [_xyz_to_lrgb_array],
    ColorSpace.SRGB: [_xyz_to_lrgb_array, _lrgb_to_srgb_array],
    ColorSpace.YCBCR: [_xyz_to_lrgb_array, _lrgb_to_srgb_array, _srgb_to_ycbcr_array],
}


def convert_pixels(pixels: np.ndarray, src: ColorSpace, dst: ColorSpace) -> np.ndarray:
    """Convert an array of shape (..., 3) between color spaces.

    Conversions run along the XYZ -> LinearRGB -> sRGB -> YCbCr chain;
    converting backwards along the chain is not supported here.
    """
    chain = {s: i for i, s in enumerate(
        [ColorSpace.XYZ, ColorSpace.LINEAR_RGB, ColorSpace.SRGB, ColorSpace.YCBCR])}
    if chain[dst] < chain[src]:
        raise ValueError(f"cannot convert {src.value} back to {dst.value}")
    out = np.asarray(pixels, dtype=np.float64)
    for step in _CONVERT_STEPS[dst][chain[src]:]:
        out = step(out)
    return out
