"""Sinusoidal input-feature expansion of half-vector keys.

A key (u, v, w) is expanded to the base vector (u, v, u+v, u-v, w') with
w' = w/2 + 1 remapping [-2, 0] to [0, 1] (the diagonal terms u+v and u-v
are optional phase-rotation dimensions). Each encoded dimension d then
contributes sin(s^j * pi * d), cos(s^j * pi * d) for j = 1..m, where the
geometric base s is picked so s^m lands on the Nyquist index of the grid
the data was sampled on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["EncodingSpec", "base_vector", "select_s", "encode", "input_size"]


def select_s(m: int, grid_res: int) -> float:
    """Geometric base with s^m equal to half the grid sampling resolution."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if grid_res < 4:
        raise ValueError("grid_res must be at least 4")
    return float((grid_res / 2.0) ** (1.0 / m))


def input_size(m_uv: int, m_w: int, diagonal: bool) -> int:
    """Feature-vector length: 3 raw coordinates plus sin/cos ladders."""
    uv_dims = 4 if diagonal else 2
    return 3 + 2 * m_uv * uv_dims + 2 * m_w


@dataclass(frozen=True)
class EncodingSpec:
    """Frequency counts, geometric bases, and the grid they were tuned for."""

    m_uv: int = 19
    m_w: int = 4
    diagonal: bool = True
    s_uv: float = 1.0
    s_w: float = 1.0
    grid_res_uv: int = 0
    grid_res_w: int = 0

    def __post_init__(self):
        if self.m_uv < 0 or self.m_w < 0:
            raise ValueError("frequency counts must be non-negative")
        if self.m_uv > 0 and not self.s_uv > 1.0:
            raise ValueError("s_uv must exceed 1 when m_uv > 0")
        if self.m_w > 0 and not self.s_w > 1.0:
            raise ValueError("s_w must exceed 1 when m_w > 0")

    @classmethod
    def for_grid(cls, m_uv: int, m_w: int, diagonal: bool, grid_res_uv: int, grid_res_w: int):
        """Build a spec with Nyquist-matched bases for the given sampling grid."""
        s_uv = select_s(m_uv, grid_res_uv) if m_uv > 0 else 1.0
        s_w = select_s(m_w, grid_res_w) if m_w > 0 else 1.0
        return cls(m_uv, m_w, diagonal, s_uv, s_w, grid_res_uv, grid_res_w)

    @property
    def size(self) -> int:
        return input_size(self.m_uv, self.m_w, self.diagonal)

    def to_json(self) -> dict:
        return {
            "m_uv": self.m_uv,
            "m_w": self.m_w,
            "diagonal": self.diagonal,
            "s_uv": self.s_uv,
            "s_w": self.s_w,
            "grid_res_uv": self.grid_res_uv,
            "grid_res_w": self.grid_res_w,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EncodingSpec":
        return cls(
            int(obj["m_uv"]),
            int(obj["m_w"]),
            bool(obj["diagonal"]),
            float(obj["s_uv"]),
            float(obj["s_w"]),
            int(obj["grid_res_uv"]),
            int(obj["grid_res_w"]),
        )


def base_vector(key) -> np.ndarray:
    """(u, v, u+v, u-v, w') for one key; w' = w/2 + 1."""
    u, v, w = (float(key[0]), float(key[1]), float(key[2]))
    return np.array([u, v, u + v, u - v, w / 2.0 + 1.0])


def _ladder(values: np.ndarray, s: float, m: int) -> list:
    """sin/cos pairs at frequencies s^1..s^m for each column of ``values``."""
    out = []
    freq = 1.0
    for _ in range(m):
        freq *= s
        phase = freq * np.pi * values
        out.append(np.sin(phase))
        out.append(np.cos(phase))
    return out


def encode(keys, spec: EncodingSpec) -> np.ndarray:
    """Feature vectors for one key (shape (3,)) or a batch (shape (K, 3)).

    Layout: raw (u, v, w'), then per u/v-derived dimension in order
    (u, v[, u+v, u-v]) the sin/cos ladder over s_uv^1..s_uv^m_uv, then the
    w' ladder over s_w^1..s_w^m_w.
    """
    arr = np.asarray(keys, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[np.newaxis, :]
    if arr.shape[-1] != 3:
        raise ValueError("keys must have 3 components (u, v, w)")
    u, v, w = arr[:, 0], arr[:, 1], arr[:, 2]
    wp = w / 2.0 + 1.0
    cols = [u, v, wp]
    uv_dims = [u, v] + ([u + v, u - v] if spec.diagonal else [])
    for dim in uv_dims:
        cols.extend(_ladder(dim, spec.s_uv, spec.m_uv))
    cols.extend(_ladder(wp, spec.s_w, spec.m_w))
    feats = np.stack(cols, axis=-1)
    assert feats.shape[-1] == spec.size
    return feats[0] if single else feats
