"""BRDF slice rendering: fix the incident direction, project the hemisphere
of view directions orthographically onto the base-plane disk, and shade each
pixel from either the wave-optics forward model or a trained network.

Pixel (px, py) has its center mapped to (x, y) in [-1, 1]^2 (y grows with
the row index); centers outside the unit disk are background. The view
direction is (x, y, sqrt(1 - x^2 - y^2)) and the shading key is
-(omega_i + omega_o). Stored pixel values are the reflectance times the
attenuation term times the exposure, clamped per output space.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .colorimetry import ColorSpace, convert_pixels
from .errors import FormatError
from .metrics import EvalImage
from .neuralnet import NetworkModel, predict_reflectance
from .sampling import SamplingScheme
from .waveoptics import (
    AttenuationParams,
    CoherenceWindow,
    TaylorSpectra,
    attenuation_batch,
    reflectance_xyz_batch,
)

MAGIC = b"DFRQIM1\x00"

__all__ = [
    "SliceSpec",
    "SliceImage",
    "ForwardModelSource",
    "pixel_to_key",
    "render_slice",
    "compare_slices",
    "write_ppm",
    "store_slice",
    "load_slice",
    "save_slice_file",
    "load_slice_file",
]


@dataclass(frozen=True)
class SliceSpec:
    theta_i_deg: float
    phi_i_deg: float
    resolution: int = 256
    exposure_ru: float = 2000.0
    attenuation: AttenuationParams = field(default_factory=AttenuationParams)
    output_space: ColorSpace = ColorSpace.SRGB

    def __post_init__(self):
        if not 0.0 <= self.theta_i_deg < 90.0:
            raise ValueError("theta_i_deg must lie in [0, 90)")
        if self.resolution < 16:
            raise ValueError("resolution must be at least 16")
        if not self.exposure_ru > 0:
            raise ValueError("exposure_ru must be positive")
        if self.output_space not in (ColorSpace.SRGB, ColorSpace.XYZ):
            raise ValueError("output space must be sRGB or XYZ")

    def incident_direction(self) -> np.ndarray:
        t = math.radians(self.theta_i_deg)
        p = math.radians(self.phi_i_deg)
        return np.array([math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), math.cos(t)])


@dataclass(frozen=True)
class SliceImage:
    """Rendered slice: display image, metric-grade XYZ, disk mask, coverage."""

    image: EvalImage
    xyz: EvalImage
    mask: np.ndarray
    coverage: np.ndarray
    theta_i_deg: float
    phi_i_deg: float

    @property
    def exposure_ru(self) -> float:
        return self.xyz.exposure_ru


@dataclass(frozen=True)
class ForwardModelSource:
    """Ground-truth shading source: precomputed spectra plus window."""

    spectra: TaylorSpectra
    window: CoherenceWindow


def _pixel_xy(px, py, resolution: int):
    x = (np.asarray(px, dtype=np.float64) + 0.5) * 2.0 / resolution - 1.0
    y = (np.asarray(py, dtype=np.float64) + 0.5) * 2.0 / resolution - 1.0
    return x, y


def pixel_to_key(px, py, spec: SliceSpec):
    """Half-vector key shaded at pixel (px, py), or None outside the disk."""
    if not (0 <= px < spec.resolution and 0 <= py < spec.resolution):
        raise ValueError("pixel outside image bounds")
    x, y = _pixel_xy(px, py, spec.resolution)
    if x * x + y * y > 1.0:
        return None
    omega_o = np.array([x, y, math.sqrt(max(0.0, 1.0 - x * x - y * y))])
    key = -(spec.incident_direction() + omega_o)
    return float(key[0]), float(key[1]), float(key[2])


def _coverage_mask(source, u, v, w) -> np.ndarray:
    """Keys inside the domain the source was fitted on; forward-model
    sources cover every physical key."""
    physical = (u * u + v * v + w * w) <= 4.0 + 1e-12
    if isinstance(source, NetworkModel):
        scheme = source.provenance.get("dataset_scheme")
        if scheme == SamplingScheme.SIMPLE_MAX.value:
            return (u * u + v * v) < 4.0
    return physical


def _eval_source(source, u, v, w, chunk_size: int = 16384) -> np.ndarray:
    if isinstance(source, NetworkModel):
        return predict_reflectance(source, np.stack([u, v, w], axis=-1))
    if isinstance(source, ForwardModelSource):
        out = np.empty((len(u), 3))
        for lo in range(0, len(u), chunk_size):
            s = slice(lo, lo + chunk_size)
            out[s] = reflectance_xyz_batch(u[s], v[s], w[s], source.spectra, source.window)
        return out
    raise TypeError("source must be a NetworkModel or ForwardModelSource")


def render_slice(source, spec: SliceSpec) -> SliceImage:
    """Shade one slice from the given source. Deterministic; the forward
    model and a trained network share this exact pixel-to-key mapping."""
    res = spec.resolution
    px, py = np.meshgrid(np.arange(res), np.arange(res), indexing="xy")
    x, y = _pixel_xy(px.reshape(-1), py.reshape(-1), res)
    inside = x * x + y * y <= 1.0

    omega_i = spec.incident_direction()
    xs, ys = x[inside], y[inside]
    omega_o = np.stack([xs, ys, np.sqrt(np.clip(1.0 - xs * xs - ys * ys, 0.0, None))], axis=-1)
    keys = -(omega_i[np.newaxis, :] + omega_o)
    u, v, w = keys[:, 0], keys[:, 1], keys[:, 2]

    xyz = _eval_source(source, u, v, w)
    att = attenuation_batch(omega_i, omega_o, spec.attenuation)
    shaded = xyz * (att * spec.exposure_ru)[:, np.newaxis]

    flat_xyz = np.zeros((res * res, 3))
    flat_xyz[inside] = np.clip(shaded, 0.0, 1.0)
    xyz_img = flat_xyz.reshape(res, res, 3)

    cover = np.ones(res * res, dtype=bool)
    cover[inside] = _coverage_mask(source, u, v, w)

    if spec.output_space is ColorSpace.XYZ:
        display = xyz_img
    else:
        display = convert_pixels(xyz_img, ColorSpace.XYZ, ColorSpace.SRGB)
        display = display * inside.reshape(res, res)[:, :, np.newaxis]
    return SliceImage(
        image=EvalImage(display, spec.output_space, spec.exposure_ru),
        xyz=EvalImage(xyz_img, ColorSpace.XYZ, spec.exposure_ru),
        mask=inside.reshape(res, res),
        coverage=cover.reshape(res, res),
        theta_i_deg=spec.theta_i_deg,
        phi_i_deg=spec.phi_i_deg,
    )


def compare_slices(gt: SliceImage, pred: SliceImage):
    """Metrics record plus the absolute-difference image (shared space)."""
    if gt.mask.shape != pred.mask.shape or not np.array_equal(gt.mask, pred.mask):
        raise ValueError("slice masks must agree")
    if (gt.theta_i_deg, gt.phi_i_deg) != (pred.theta_i_deg, pred.phi_i_deg):
        raise ValueError("slices were rendered for different incident directions")
    record = metrics.report(gt.xyz, pred.xyz, mask=gt.mask)
    record["theta_i_deg"] = gt.theta_i_deg
    record["phi_i_deg"] = gt.phi_i_deg
    record["coverage_fraction"] = float(pred.coverage[pred.mask].mean()) if pred.mask.any() else 1.0
    diff = EvalImage(
        np.abs(gt.image.pixels - pred.image.pixels), gt.image.space, gt.exposure_ru
    )
    return record, diff


def write_ppm(img: EvalImage, path) -> None:
    """Binary P6 at maxval 255; input must be sRGB-encoded."""
    if img.space is not ColorSpace.SRGB:
        raise ValueError("PPM output expects sRGB pixels")
    data = np.clip(np.round(img.pixels * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        f.write(data.tobytes(order="C"))


def store_slice(sl: SliceImage) -> bytes:
    meta = {
        "theta_i_deg": sl.theta_i_deg,
        "phi_i_deg": sl.phi_i_deg,
        "exposure_ru": sl.exposure_ru,
        "space": "xyz",
        "coverage_fraction": float(sl.coverage[sl.mask].mean()) if sl.mask.any() else 1.0,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    head = MAGIC + struct.pack("<III", sl.xyz.width, sl.xyz.height, len(blob))
    return head + blob + sl.xyz.pixels.astype("<f4").tobytes(order="C")


def _disk_mask(resolution: int) -> np.ndarray:
    px, py = np.meshgrid(np.arange(resolution), np.arange(resolution), indexing="xy")
    x, y = _pixel_xy(px, py, resolution)
    return x * x + y * y <= 1.0


def load_slice(data: bytes) -> SliceImage:
    if len(data) < len(MAGIC) + 12 or data[: len(MAGIC)] != MAGIC:
        raise FormatError("not a slice file (bad magic)")
    width, height, mlen = struct.unpack_from("<III", data, len(MAGIC))
    off = len(MAGIC) + 12
    try:
        meta = json.loads(data[off : off + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad slice header: {exc}") from exc
    off += mlen
    expected = off + 12 * width * height
    if len(data) != expected:
        raise FormatError(f"slice payload has {len(data)} bytes, expected {expected}")
    if width != height:
        raise FormatError("slice images are square")
    xyz = np.frombuffer(data, dtype="<f4", offset=off).reshape(height, width, 3).astype(np.float64)
    mask = _disk_mask(width)
    img = EvalImage(xyz, ColorSpace.XYZ, float(meta["exposure_ru"]))
    return SliceImage(
        image=img,
        xyz=img,
        mask=mask,
        coverage=np.ones((height, width), dtype=bool),
        theta_i_deg=float(meta["theta_i_deg"]),
        phi_i_deg=float(meta["phi_i_deg"]),
    )


def save_slice_file(sl: SliceImage, path) -> None:
    with open(path, "wb") as f:
        f.write(store_slice(sl))


def load_slice_file(path) -> SliceImage:
    with open(path, "rb") as f:
        return load_slice(f.read())
