"""PSNR and SSIM between ground-truth and predicted reflectance images.

Images are exposure-scaled; PSNR clamps to [0, 1] with peak 1 and is capped
at 99 dB for identical inputs. SSIM uses the standard 11x11 Gaussian window
(sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1) computed per channel over
the region where the window fits entirely, then averaged. An optional pixel
mask restricts both metrics to foreground pixels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .colorimetry import ColorSpace, convert_pixels

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

__all__ = ["EvalImage", "psnr", "ssim", "report", "emit_report"]


@dataclass(frozen=True)
class EvalImage:
    """An (height, width, 3) pixel grid with one shared color-space tag."""

    pixels: np.ndarray
    space: ColorSpace = ColorSpace.XYZ
    exposure_ru: float = 1.0

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError("pixels must have shape (height, width, 3)")
        if not np.all(np.isfinite(px)):
            raise ValueError("pixels must be finite")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _check_pair(a: EvalImage, b: EvalImage, spaces=None) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise ValueError("images must share dimensions")
    if a.space is not b.space:
        raise ValueError("images must share a color space")
    if spaces is not None and a.space not in spaces:
        raise ValueError(f"metric not defined for {a.space.value} images")


def psnr(a: EvalImage, b: EvalImage, mask=None) -> float:
    """10 log10(1 / MSE) with peak 1 over clamped pixels; 99 dB cap."""
    _check_pair(a, b)
    pa = np.clip(a.pixels, 0.0, 1.0)
    pb = np.clip(b.pixels, 0.0, 1.0)
    se = (pa - pb) ** 2
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.pixels.shape[:2]:
            raise ValueError("mask shape must match the image")
        se = se[mask]
    mse = float(se.mean())
    if mse <= 10.0 ** (-PSNR_CAP_DB / 10.0):
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_window() -> np.ndarray:
    r = SSIM_WINDOW // 2
    g = np.exp(-np.arange(-r, r + 1) ** 2 / (2.0 * SSIM_SIGMA**2))
    w = np.outer(g, g)
    return w / w.sum()


_WINDOW = _gaussian_window()


def _ssim_map_channel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-pixel SSIM over the valid (fully covered) window positions."""
    win = _WINDOW
    xs = np.lib.stride_tricks.sliding_window_view(x, win.shape)
    ys = np.lib.stride_tricks.sliding_window_view(y, win.shape)
    mu_x = np.einsum("ijkl,kl->ij", xs, win)
    mu_y = np.einsum("ijkl,kl->ij", ys, win)
    xx = np.einsum("ijkl,kl->ij", xs * xs, win)
    yy = np.einsum("ijkl,kl->ij", ys * ys, win)
    xy = np.einsum("ijkl,kl->ij", xs * ys, win)
    var_x = xx - mu_x**2
    var_y = yy - mu_y**2
    cov = xy - mu_x * mu_y
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    return ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    )


def ssim(a: EvalImage, b: EvalImage, mask=None) -> float:
    """Mean SSIM over channels and valid window positions."""
    _check_pair(a, b, spaces=(ColorSpace.YCBCR, ColorSpace.SRGB))
    if min(a.height, a.width) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW} pixels per side")
    maps = np.stack(
        [_ssim_map_channel(a.pixels[:, :, c], b.pixels[:, :, c]) for c in range(3)],
        axis=-1,
    )
    if mask is None:
        return float(maps.mean())
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.pixels.shape[:2]:
        raise ValueError("mask shape must match the image")
    r = SSIM_WINDOW // 2
    inner = mask[r:-r, r:-r]
    if not inner.any():
        raise ValueError("mask leaves no valid window positions")
    return float(maps[inner].mean())


def report(gt: EvalImage, pred: EvalImage, mask=None) -> dict:
    """PSNR in XYZ and LinearRGB plus SSIM in YCbCr and sRGB, as one record.

    Both inputs must be XYZ images at the same exposure; conversions and
    per-space clamping happen here.
    """
    _check_pair(gt, pred, spaces=(ColorSpace.XYZ,))
    if gt.exposure_ru != pred.exposure_ru:
        raise ValueError("images must share an exposure")

    def as_space(img: EvalImage, space: ColorSpace) -> EvalImage:
        return EvalImage(convert_pixels(img.pixels, ColorSpace.XYZ, space), space, img.exposure_ru)

    record = {
        "psnr_xyz": psnr(gt, pred, mask),
        "psnr_linear_rgb": psnr(as_space(gt, ColorSpace.LINEAR_RGB), as_space(pred, ColorSpace.LINEAR_RGB), mask),
        "ssim_ycbcr": ssim(as_space(gt, ColorSpace.YCBCR), as_space(pred, ColorSpace.YCBCR), mask),
        "ssim_srgb": ssim(as_space(gt, ColorSpace.SRGB), as_space(pred, ColorSpace.SRGB), mask),
        "flip": None,  # reserved; external perceptual flip metric not bundled
        "width": gt.width,
        "height": gt.height,
        "exposure_ru": gt.exposure_ru,
    }
    return record


def emit_report(record: dict, stream) -> None:
    """Write one metrics record as a JSON line."""
    stream.write(json.dumps(record, sort_keys=True) + "\n")
