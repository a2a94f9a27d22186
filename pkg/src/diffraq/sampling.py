"""Half-vector sampling grids, dataset generation, and train/test splits.

Grid-to-key reconstruction is part of the dataset file contract: with
endpoint-inclusive axes

    u*_i = -2 + 4 i / (res_u - 1),    v*_j = -2 + 4 j / (res_v - 1),

the Regular scheme samples keys at (u*, v*) directly while Simple and
SimpleMax first apply the squaring transform u = 2 sign(u*) (u*/2)^2.
The w axis holds res_w endpoint-inclusive uniform samples over [-2, 0]
(Regular/Simple) or over [-sqrt(4 - u^2 - v^2), 0] (SimpleMax); w-slice
numbering is 1-based starting at the most negative w. Entries whose key
cannot come from two unit directions are flagged invalid and stored as
exact zeros.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import colorimetry
from .errors import FormatError, NumericError
from .heightfield import HeightField
from .waveoptics import (
    CoherenceWindow,
    choose_taylor_order,
    combine_amplitudes,
    precompute_taylor_spectra,
    windowed_spectrum_sums,
)

MAGIC = b"DFRQDS1\x00"

__all__ = [
    "SamplingScheme",
    "SplitStrategy",
    "DataSplit",
    "ReflectanceGrid",
    "domain_transform",
    "w_samples",
    "validity_mask",
    "invalid_fraction",
    "build_dataset",
    "reconstruct_keys",
    "split",
    "store",
    "load",
    "save_file",
    "load_file",
]


class SamplingScheme(enum.Enum):
    REGULAR = "regular"
    SIMPLE = "simple"
    SIMPLE_MAX = "simple-max"


def domain_transform(u_star, v_star):
    """Squash uniform (u*, v*) toward the origin: u = 2 sign(u*) (u*/2)^2."""
    us = np.asarray(u_star, dtype=np.float64)
    vs = np.asarray(v_star, dtype=np.float64)
    if np.any(np.abs(us) > 2.0) or np.any(np.abs(vs) > 2.0):
        raise ValueError("u*, v* must lie in [-2, 2]")
    u = 2.0 * np.sign(us) * (us / 2.0) ** 2
    v = 2.0 * np.sign(vs) * (vs / 2.0) ** 2
    if np.ndim(u_star) == 0 and np.ndim(v_star) == 0:
        return float(u), float(v)
    return u, v


def w_samples(scheme: SamplingScheme, u: float, v: float, res_w: int):
    """The res_w w-values sampled through (u, v), or None when the point
    admits no physically valid key (SimpleMax outside the u^2+v^2 < 4 disk)."""
    if res_w < 2:
        raise ValueError("res_w must be at least 2")
    if scheme in (SamplingScheme.REGULAR, SamplingScheme.SIMPLE):
        return np.linspace(-2.0, 0.0, res_w)
    r2 = u * u + v * v
    if r2 >= 4.0:
        return None
    return np.linspace(-np.sqrt(4.0 - r2), 0.0, res_w)


def _axes(scheme: SamplingScheme, res_u: int, res_v: int):
    """Sampled (u, v) axis values after any domain transform."""
    u_star = np.linspace(-2.0, 2.0, res_u)
    v_star = np.linspace(-2.0, 2.0, res_v)
    if scheme is SamplingScheme.REGULAR:
        return u_star, v_star
    u, _ = domain_transform(u_star, np.zeros_like(u_star))
    v, _ = domain_transform(v_star, np.zeros_like(v_star))
    return u, v


def _w_grid(scheme: SamplingScheme, res_u: int, res_v: int, res_w: int):
    """w values of every cell, shape (res_w, res_v, res_u)."""
    u, v = _axes(scheme, res_u, res_v)
    frac = np.linspace(0.0, 1.0, res_w)  # 0 -> deepest w, 1 -> w = 0
    if scheme in (SamplingScheme.REGULAR, SamplingScheme.SIMPLE):
        w = np.broadcast_to(
            (-2.0 * (1.0 - frac))[:, None, None], (res_w, res_v, res_u)
        ).copy()
        return w
    r2 = v[:, None] ** 2 + u[None, :] ** 2
    w_max = np.sqrt(np.clip(4.0 - r2, 0.0, None))
    return -(1.0 - frac)[:, None, None] * w_max[None, :, :]


def validity_mask(scheme: SamplingScheme, res_u: int, res_v: int, res_w: int) -> np.ndarray:
    """Boolean validity of every grid cell, shape (res_w, res_v, res_u)."""
    u, v = _axes(scheme, res_u, res_v)
    r2 = v[:, None] ** 2 + u[None, :] ** 2
    if scheme is SamplingScheme.SIMPLE_MAX:
        # Degenerate zero-measure w ranges on the rim count as invalid.
        col = r2 < 4.0
        return np.broadcast_to(col[None, :, :], (res_w, res_v, res_u)).copy()
    w = _w_grid(scheme, res_u, res_v, res_w)
    return r2[None, :, :] + w * w <= 4.0


def invalid_fraction(scheme: SamplingScheme, res_u: int, res_v: int, res_w: int = 2) -> float:
    """Fraction of grid cells that carry no physical key."""
    return float(1.0 - validity_mask(scheme, res_u, res_v, res_w).mean())


@dataclass(frozen=True)
class ReflectanceGrid:
    """A (u, v, w)-sampled XYZ reflectance dataset with scheme metadata."""

    scheme: SamplingScheme
    xyz: np.ndarray  # (res_w, res_v, res_u, 3) float32
    valid: np.ndarray  # (res_w, res_v, res_u) bool
    sigma_s: float
    heightfield_id: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float32)
        valid = np.asarray(self.valid, dtype=bool)
        if xyz.ndim != 4 or xyz.shape[-1] != 3:
            raise ValueError("xyz must have shape (res_w, res_v, res_u, 3)")
        if valid.shape != xyz.shape[:3]:
            raise ValueError("valid mask shape must match the grid")
        if np.any(xyz[~valid] != 0.0):
            raise ValueError("invalid entries must hold exactly (0, 0, 0)")
        if not np.all(np.isfinite(xyz)):
            raise ValueError("grid values must be finite")
        if np.any(xyz[valid] < 0.0):
            raise ValueError("valid reflectance entries must be non-negative")
        xyz.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "valid", valid)

    @property
    def res_u(self) -> int:
        return self.xyz.shape[2]

    @property
    def res_v(self) -> int:
        return self.xyz.shape[1]

    @property
    def res_w(self) -> int:
        return self.xyz.shape[0]

    def axes_uv(self):
        return _axes(self.scheme, self.res_u, self.res_v)

    def w_grid(self) -> np.ndarray:
        return _w_grid(self.scheme, self.res_u, self.res_v, self.res_w)

    def slice_xyz(self, slice_no: int) -> np.ndarray:
        """XYZ image of 1-based w-slice ``slice_no``, shape (res_v, res_u, 3)."""
        if not 1 <= slice_no <= self.res_w:
            raise ValueError(f"slice {slice_no} out of range 1..{self.res_w}")
        return np.asarray(self.xyz[slice_no - 1], dtype=np.float64)

    def slice_valid(self, slice_no: int) -> np.ndarray:
        if not 1 <= slice_no <= self.res_w:
            raise ValueError(f"slice {slice_no} out of range 1..{self.res_w}")
        return self.valid[slice_no - 1]


def reconstruct_keys(grid: ReflectanceGrid, flat_indices) -> np.ndarray:
    """Keys (u, v, w) for flat cell indices in w-major, v, u-fastest order."""
    idx = np.asarray(flat_indices, dtype=np.int64)
    per_slice = grid.res_v * grid.res_u
    iw, rem = np.divmod(idx, per_slice)
    iv, iu = np.divmod(rem, grid.res_u)
    u, v = grid.axes_uv()
    w = grid.w_grid()
    return np.stack([u[iu], v[iv], w[iw, iv, iu]], axis=-1)


class SplitStrategy(enum.Enum):
    RANDOM_FRACTION = "random-fraction"
    HELD_OUT_SLICES = "held-out-slices"


@dataclass(frozen=True)
class DataSplit:
    """Train/test partition spec over the valid samples of a grid."""

    strategy: SplitStrategy = SplitStrategy.HELD_OUT_SLICES
    train_fraction: float = 0.73
    test_slices: tuple = (4, 7, 10)
    seed: int = 0

    def __post_init__(self):
        if self.strategy is SplitStrategy.RANDOM_FRACTION and not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")

    @classmethod
    def random_fraction(cls, train_fraction: float, seed: int = 0) -> "DataSplit":
        return cls(SplitStrategy.RANDOM_FRACTION, train_fraction, (), seed)

    @classmethod
    def held_out_slices(cls, test_slices=(4, 7, 10)) -> "DataSplit":
        return cls(SplitStrategy.HELD_OUT_SLICES, 0.73, tuple(test_slices), 0)


def split(grid: ReflectanceGrid, split_spec: DataSplit):
    """Disjoint, exhaustive (train, test) flat indices over valid samples."""
    valid_flat = np.flatnonzero(grid.valid.reshape(-1))
    if split_spec.strategy is SplitStrategy.HELD_OUT_SLICES:
        slices = tuple(split_spec.test_slices)
        for s in slices:
            if not 1 <= s <= grid.res_w:
                raise ValueError(f"test slice {s} out of range 1..{grid.res_w}")
        per_slice = grid.res_v * grid.res_u
        slice_of = valid_flat // per_slice + 1
        is_test = np.isin(slice_of, slices)
        return valid_flat[~is_test], valid_flat[is_test]
    rng = np.random.Generator(np.random.PCG64(split_spec.seed))
    perm = rng.permutation(len(valid_flat))
    n_train = int(round(split_spec.train_fraction * len(valid_flat)))
    train = np.sort(valid_flat[perm[:n_train]])
    test = np.sort(valid_flat[perm[n_train:]])
    return train, test


def build_dataset(
    hf: HeightField,
    scheme: SamplingScheme,
    sigma_s: float,
    res_u: int,
    res_v: int,
    res_w: int,
    epsilon: float = 1e-8,
    truncation_radius: float = 3.0,
    provenance: dict | None = None,
    chunk_size: int = 8192,
) -> ReflectanceGrid:
    """Evaluate the forward model over the sampled keys into a dataset.

    Deterministic for identical inputs; invalid cells are stored as exact
    zeros. Columns share their windowed spectrum sums across all w samples,
    which is what makes dense w sampling cheap.
    """
    if min(res_u, res_v, res_w) < 2:
        raise ValueError("resolutions must be at least 2")
    order = choose_taylor_order(
        hf.max_elevation, float(colorimetry.WAVELENGTHS_UM[0]), epsilon
    )
    spectra = precompute_taylor_spectra(hf, order)
    window = CoherenceWindow(sigma_s, truncation_radius)

    u, v = _axes(scheme, res_u, res_v)
    w_grid = _w_grid(scheme, res_u, res_v, res_w)
    valid = validity_mask(scheme, res_u, res_v, res_w)

    # Evaluate every (u, v) column that contains at least one valid sample.
    col_live = valid.any(axis=0).reshape(-1)
    live_idx = np.flatnonzero(col_live)
    iu = live_idx % res_u
    iv = live_idx // res_u
    xyz = np.zeros((res_w, res_v, res_u, 3), dtype=np.float64)

    lams = colorimetry.WAVELENGTHS_UM
    for start in range(0, len(live_idx), chunk_size):
        sel = slice(start, start + chunk_size)
        cu, cv = u[iu[sel]], v[iv[sel]]
        cw = w_grid[:, iv[sel], iu[sel]]  # (res_w, C)
        response = np.empty((res_w, len(cu), colorimetry.SPECTRUM_SIZE))
        for j, lam in enumerate(lams):
            sums = windowed_spectrum_sums(spectra, window, cu / lam, cv / lam)
            amp = combine_amplitudes(sums, cw, float(lam))
            response[:, :, j] = np.abs(amp) ** 2
        if not np.all(np.isfinite(response)):
            bad = np.argwhere(~np.isfinite(response))[0]
            key = (cu[bad[1]], cv[bad[1]], cw[bad[0], bad[1]])
            raise NumericError(f"non-finite reflectance at key {key}")
        xyz[:, iv[sel], iu[sel], :] = colorimetry.spectra_to_xyz_array(response)

    xyz[~valid] = 0.0
    params = {
        "taylor_order": order,
        "epsilon": epsilon,
        "truncation_radius": truncation_radius,
        "lambda_min_um": float(lams[0]),
        "lambda_max_um": float(lams[-1]),
        "spectral_samples": colorimetry.SPECTRUM_SIZE,
    }
    if provenance:
        params["provenance"] = dict(provenance)
    return ReflectanceGrid(
        scheme=scheme,
        xyz=xyz.astype(np.float32),
        valid=valid,
        sigma_s=sigma_s,
        heightfield_id=spectra.heightfield_hash,
        params=params,
    )


def store(grid: ReflectanceGrid) -> bytes:
    header = {
        "scheme": grid.scheme.value,
        "res_u": grid.res_u,
        "res_v": grid.res_v,
        "res_w": grid.res_w,
        "sigma_s": grid.sigma_s,
        "heightfield_id": grid.heightfield_id,
        "params": grid.params,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    mask = np.packbits(grid.valid.reshape(-1), bitorder="little").tobytes()
    data = grid.xyz.astype("<f4").tobytes(order="C")
    return MAGIC + struct.pack("<I", len(blob)) + blob + mask + data


def load(data: bytes) -> ReflectanceGrid:
    if len(data) < len(MAGIC) + 4 or data[: len(MAGIC)] != MAGIC:
        raise FormatError("not a reflectance dataset file (bad magic)")
    (hlen,) = struct.unpack_from("<I", data, len(MAGIC))
    off = len(MAGIC) + 4
    try:
        header = json.loads(data[off : off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad dataset header: {exc}") from exc
    off += hlen
    res_u, res_v, res_w = header["res_u"], header["res_v"], header["res_w"]
    n = res_u * res_v * res_w
    mask_bytes = (n + 7) // 8
    expected = off + mask_bytes + 12 * n
    if len(data) != expected:
        raise FormatError(f"dataset payload has {len(data)} bytes, expected {expected}")
    valid = np.unpackbits(
        np.frombuffer(data, dtype=np.uint8, count=mask_bytes, offset=off),
        count=n,
        bitorder="little",
    ).astype(bool).reshape(res_w, res_v, res_u)
    off += mask_bytes
    xyz = np.frombuffer(data, dtype="<f4", offset=off).reshape(res_w, res_v, res_u, 3)
    return ReflectanceGrid(
        scheme=SamplingScheme(header["scheme"]),
        xyz=xyz,
        valid=valid,
        sigma_s=float(header["sigma_s"]),
        heightfield_id=header["heightfield_id"],
        params=header.get("params", {}),
    )


def save_file(grid: ReflectanceGrid, path) -> None:
    with open(path, "wb") as f:
        f.write(store(grid))


def load_file(path) -> ReflectanceGrid:
    with open(path, "rb") as f:
        return load(f.read())
