"""Fourier-optics forward model for far-field diffraction from height-fields.

The surface response to one spectral band is the phasor exp(i*w*k*h(x,y))
with k = 2*pi/lambda and w the third half-vector component. Its transform
is approximated by the truncated power series

    sum_n (i*w*k)^n / n! * DFT{h^n},

each term blurred by a Gaussian coherence window in frequency space and
evaluated at the continuous frequency (u/lambda, v/lambda) as a truncated
Gaussian-weighted sum over nearby DFT bins with periodic (wrap-around)
indexing. Window weights peak at 1 so spectral content sitting exactly on
the query frequency passes through with unit gain; in particular a flat
field has amplitude exactly 1 at the specular frequency. Squared magnitudes
integrated over the 81-band visible grid under D65 give the stored XYZ
reflectance; the four-direction attenuation factor is kept separate.

All lengths are micrometers; frequencies are cycles per micrometer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import colorimetry
from .errors import NumericError, OutOfBandError
from .heightfield import HeightField

__all__ = [
    "CoherenceWindow",
    "TaylorSpectra",
    "AttenuationParams",
    "choose_taylor_order",
    "precompute_taylor_spectra",
    "windowed_spectrum_sums",
    "combine_amplitudes",
    "eval_amplitude",
    "eval_amplitude_batch",
    "reflectance_xyz",
    "reflectance_xyz_batch",
    "fresnel_unpolarized",
    "attenuation",
    "attenuation_batch",
]


@dataclass(frozen=True)
class CoherenceWindow:
    """Isotropic Gaussian coherence area of spatial std ``sigma_s`` (um).

    In frequency space the window has std sigma_f = 1/(2*pi*sigma_s); the
    weighted bin sum is truncated at ``truncation_radius`` sigma_f.
    """

    sigma_s: float
    truncation_radius: float = 3.0

    def __post_init__(self):
        if not self.sigma_s > 0:
            raise ValueError("sigma_s must be positive")
        if not self.truncation_radius > 0:
            raise ValueError("truncation_radius must be positive")

    @property
    def sigma_f(self) -> float:
        return 1.0 / (2.0 * math.pi * self.sigma_s)


@dataclass(frozen=True)
class AttenuationParams:
    ior: float = 1.5
    w_epsilon: float = 1e-6
    include_fresnel: bool = True

    def __post_init__(self):
        if self.ior < 1.0:
            raise ValueError("ior must be at least 1")
        if not self.w_epsilon > 0:
            raise ValueError("w_epsilon must be positive")


@dataclass(frozen=True)
class TaylorSpectra:
    """Sample-count-normalized DFTs of elementwise powers of a height-field.

    ``dfts[n]`` holds DFT{h^n} / (samples_x * samples_y); grid 0 is the
    exact unit impulse at frequency (0, 0). Shapes follow the source grid
    (samples_y, samples_x).
    """

    dfts: np.ndarray
    extent_x: float
    extent_y: float
    max_elevation: float
    heightfield_hash: str = ""

    @property
    def order(self) -> int:
        return self.dfts.shape[0] - 1

    @property
    def samples_x(self) -> int:
        return self.dfts.shape[2]

    @property
    def samples_y(self) -> int:
        return self.dfts.shape[1]

    @property
    def freq_step_x(self) -> float:
        return 1.0 / self.extent_x

    @property
    def freq_step_y(self) -> float:
        return 1.0 / self.extent_y

    @property
    def nyquist_x(self) -> float:
        return self.samples_x / (2.0 * self.extent_x)

    @property
    def nyquist_y(self) -> float:
        return self.samples_y / (2.0 * self.extent_y)


def choose_taylor_order(max_elevation: float, lambda_min: float, epsilon: float) -> int:
    """Smallest series order whose next term is below ``epsilon`` relative
    to the series scale exp(B), with B = 2 * (2*pi/lambda_min) * max_elevation
    bounding |w*k*h| over the key domain (|w| <= 2).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if max_elevation < 0:
        raise ValueError("max_elevation must be non-negative")
    if not lambda_min > 0:
        raise ValueError("lambda_min must be positive")
    if max_elevation == 0.0:
        return 0
    b = 2.0 * (2.0 * math.pi / lambda_min) * max_elevation
    log_eps = math.log(epsilon)
    n = 0
    while (n + 1) * math.log(b) - math.lgamma(n + 2) - b >= log_eps:
        n += 1
        if n > 10_000:
            raise NumericError("Taylor order selection did not converge")
    return n


def precompute_taylor_spectra(hf: HeightField, order: int) -> TaylorSpectra:
    """DFT{h^n} for n = 0..order, normalized by the sample count."""
    if order < 0:
        raise ValueError("order must be non-negative")
    h = hf.elevations.astype(np.float64)
    count = h.size
    dfts = np.empty((order + 1, hf.samples_y, hf.samples_x), dtype=np.complex128)
    dfts[0] = 0.0
    dfts[0, 0, 0] = 1.0  # DFT of the all-ones field: exact unit impulse
    power = None
    for n in range(1, order + 1):
        power = h if n == 1 else power * h
        if not np.all(np.isfinite(power)):
            raise NumericError(f"h^{n} overflowed for max elevation {hf.max_elevation}")
        dfts[n] = np.fft.fft2(power) / count
    return TaylorSpectra(
        dfts=dfts,
        extent_x=hf.extent_x,
        extent_y=hf.extent_y,
        max_elevation=hf.max_elevation,
        heightfield_hash=hf.content_hash(),
    )


def _check_in_band(spectra: TaylorSpectra, xi0: np.ndarray, psi0: np.ndarray) -> None:
    tol = 1e-12
    bad = (np.abs(xi0) > spectra.nyquist_x + tol) | (np.abs(psi0) > spectra.nyquist_y + tol)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise OutOfBandError(
            f"frequency ({xi0.flat[i]:.4f}, {psi0.flat[i]:.4f}) cycles/um exceeds the "
            f"height-field Nyquist limit ({spectra.nyquist_x:.4f}, {spectra.nyquist_y:.4f})"
        )


def windowed_spectrum_sums(
    spectra: TaylorSpectra, window: CoherenceWindow, xi0, psi0
) -> np.ndarray:
    """Gaussian-weighted bin sums of every dfts[n] at continuous frequencies.

    ``xi0``/``psi0`` are arrays of shape (K,); the result has shape
    (order+1, K). Bins are indexed periodically; weights are the raw window
    Gaussian (peak 1), zeroed beyond the truncation radius.
    """
    xi0 = np.atleast_1d(np.asarray(xi0, dtype=np.float64))
    psi0 = np.atleast_1d(np.asarray(psi0, dtype=np.float64))
    _check_in_band(spectra, xi0, psi0)

    sf = window.sigma_f
    radius = window.truncation_radius * sf
    fx, fy = spectra.freq_step_x, spectra.freq_step_y
    rx = max(1, int(math.ceil(radius / fx)))
    ry = max(1, int(math.ceil(radius / fy)))
    off_x = np.arange(-rx, rx + 1)
    off_y = np.arange(-ry, ry + 1)

    base_x = np.round(xi0 / fx).astype(np.int64)
    base_y = np.round(psi0 / fy).astype(np.int64)
    dxi = (base_x[:, None] + off_x[None, :]) * fx - xi0[:, None]  # (K, SX)
    dpsi = (base_y[:, None] + off_y[None, :]) * fy - psi0[:, None]  # (K, SY)

    dist2 = dpsi[:, :, None] ** 2 + dxi[:, None, :] ** 2  # (K, SY, SX)
    weights = np.exp(-dist2 / (2.0 * sf * sf))
    weights[dist2 > radius * radius] = 0.0

    ix = np.mod(base_x[:, None] + off_x[None, :], spectra.samples_x)
    iy = np.mod(base_y[:, None] + off_y[None, :], spectra.samples_y)
    flat_idx = (iy[:, :, None] * spectra.samples_x + ix[:, None, :]).reshape(len(xi0), -1)
    weights = weights.reshape(len(xi0), -1)

    n_bins = spectra.samples_x * spectra.samples_y
    flat_spectra = spectra.dfts.reshape(spectra.order + 1, n_bins)
    sums = np.empty((spectra.order + 1, len(xi0)), dtype=np.complex128)
    for n in range(spectra.order + 1):
        gathered = flat_spectra[n].take(flat_idx)
        sums[n] = np.einsum("ks,ks->k", gathered, weights)
    return sums


def combine_amplitudes(sums: np.ndarray, w, lam: float, max_order: int | None = None) -> np.ndarray:
    """Fold windowed sums into amplitudes sum_n (i*w*k)^n/n! * sums[n].

    ``sums`` has shape (N+1, K); ``w`` broadcasts against shape (..., K).
    """
    order = sums.shape[0] - 1 if max_order is None else int(max_order)
    if order > sums.shape[0] - 1:
        raise ValueError(f"max_order {order} exceeds precomputed order {sums.shape[0] - 1}")
    k = 2.0 * math.pi / lam
    w = np.asarray(w, dtype=np.float64)
    if w.ndim > 0 and w.shape[-1] != sums.shape[1]:
        raise ValueError("trailing axis of w must match the key axis of sums")
    t = 1j * k * w
    term = np.ones_like(t, dtype=np.complex128)
    amp = term * sums[0]
    for n in range(1, order + 1):
        term = term * t / n
        amp = amp + term * sums[n]
    return amp


def _validate_lambda(lam: float) -> None:
    if not np.any(np.abs(colorimetry.WAVELENGTHS_UM - lam) < 1e-9):
        raise ValueError(f"wavelength {lam} um is not on the 5 nm spectral grid")


def eval_amplitude_batch(
    u, v, w, lam: float, spectra: TaylorSpectra, window: CoherenceWindow,
    max_order: int | None = None,
) -> np.ndarray:
    """Complex diffraction amplitudes for arrays of keys at one wavelength."""
    _validate_lambda(lam)
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    w = np.atleast_1d(np.asarray(w, dtype=np.float64))
    sums = windowed_spectrum_sums(spectra, window, u / lam, v / lam)
    return combine_amplitudes(sums, w, lam, max_order)


def eval_amplitude(
    key, lam: float, spectra: TaylorSpectra, window: CoherenceWindow,
    max_order: int | None = None,
) -> complex:
    """Amplitude for a single key (u, v, w)."""
    u, v, w = float(key[0]), float(key[1]), float(key[2])
    return complex(eval_amplitude_batch([u], [v], [w], lam, spectra, window, max_order)[0])


def reflectance_xyz_batch(
    u, v, w, spectra: TaylorSpectra, window: CoherenceWindow,
    max_order: int | None = None,
) -> np.ndarray:
    """Spectrally integrated XYZ reflectance (no attenuation) for keys (K,)."""
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    w = np.atleast_1d(np.asarray(w, dtype=np.float64))
    if np.any(w > 0):
        raise ValueError("keys must have w <= 0")
    response = np.empty((len(u), colorimetry.SPECTRUM_SIZE))
    for j, lam in enumerate(colorimetry.WAVELENGTHS_UM):
        amp = eval_amplitude_batch(u, v, w, float(lam), spectra, window, max_order)
        response[:, j] = np.abs(amp) ** 2
    return colorimetry.spectra_to_xyz_array(response)


def reflectance_xyz(key, spectra: TaylorSpectra, window: CoherenceWindow) -> colorimetry.ColorTriple:
    """XYZ reflectance of a single key; the stored ground-truth quantity."""
    u, v, w = float(key[0]), float(key[1]), float(key[2])
    x, y, z = reflectance_xyz_batch([u], [v], [w], spectra, window)[0]
    return colorimetry.ColorTriple(float(x), float(y), float(z), colorimetry.ColorSpace.XYZ)


def fresnel_unpolarized(cos_i, ior: float):
    """Average of s/p dielectric Fresnel reflectances entering from vacuum."""
    cos_i = np.clip(cos_i, 0.0, 1.0)
    sin_t2 = (1.0 - cos_i**2) / (ior * ior)
    cos_t = np.sqrt(np.clip(1.0 - sin_t2, 0.0, None))
    rs = ((cos_i - ior * cos_t) / (cos_i + ior * cos_t)) ** 2
    rp = ((ior * cos_i - cos_t) / (ior * cos_i + cos_t)) ** 2
    return (rs + rp) / 2.0


def attenuation_batch(omega_i, omega_o, params: AttenuationParams) -> np.ndarray:
    """Net attenuation for one incident direction and (P, 3) view directions.

    Zero for |w| at or below w_epsilon and for grazing cosines below 1e-9;
    otherwise R^2 * G / (R0^2 * w^2) with G = (1 + wi.wo)^2 / (cos_i cos_o).
    """
    wi = np.asarray(omega_i, dtype=np.float64)
    wo = np.atleast_2d(np.asarray(omega_o, dtype=np.float64))
    if wi[2] < 0 or np.any(wo[:, 2] < 0):
        raise ValueError("directions must lie in the upper hemisphere")
    cos_i = wi[2]
    cos_o = wo[:, 2]
    w = -(cos_i + cos_o)
    out = np.zeros(len(wo))
    live = (np.abs(w) > params.w_epsilon) & (cos_o >= 1e-9) & (cos_i >= 1e-9)
    if not np.any(live):
        return out
    dot = wo[live] @ wi
    g = (1.0 + dot) ** 2 / (cos_i * cos_o[live])
    r0 = ((params.ior - 1.0) / (params.ior + 1.0)) ** 2
    if params.include_fresnel:
        half = wi + wo[live]
        half /= np.linalg.norm(half, axis=1, keepdims=True)
        r = fresnel_unpolarized(half @ wi, params.ior)
    else:
        r = r0
    out[live] = (r * r) * g / (r0 * r0 * w[live] ** 2)
    return out


def attenuation(omega_i, omega_o, params: AttenuationParams) -> float:
    return float(attenuation_batch(omega_i, np.asarray(omega_o)[np.newaxis, :], params)[0])
