"""Range-space transforms that squash reflectance values into [0, 1] for
training, and their inverses for decoding network outputs.

The bit-plane family maps x to 1 + log2(x)/b_max (optionally raised to a
power n); anything at or below 2**-b_max collapses to 0, which is the lossy
clamp the formulation implies. Defaults b_max=48, n=8.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = ["RangeTransformKind", "RangeTransformSpec", "forward", "inverse"]


class RangeTransformKind(enum.Enum):
    IDENTITY = "identity"
    LOG1P = "log1p"
    BIT_PLANE = "bit_plane"
    POWER = "power"
    BIT_PLANE_POWER = "bit_plane_power"


@dataclass(frozen=True)
class RangeTransformSpec:
    kind: RangeTransformKind = RangeTransformKind.BIT_PLANE_POWER
    b_max: float = 48.0
    n: float = 8.0

    def __post_init__(self):
        if not self.b_max > 0:
            raise ValueError("b_max must be positive")
        if not self.n > 0:
            raise ValueError("n must be positive")

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "b_max": self.b_max, "n": self.n}

    @classmethod
    def from_json(cls, obj: dict) -> "RangeTransformSpec":
        return cls(RangeTransformKind(obj["kind"]), float(obj["b_max"]), float(obj["n"]))


def _bit_plane(x: np.ndarray, b_max: float) -> np.ndarray:
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = 1.0 + np.log2(x[pos]) / b_max
    return np.clip(out, 0.0, 1.0)


def forward(x, spec: RangeTransformSpec):
    """Map non-negative reflectance values into [0, 1]. Accepts scalars or arrays."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("range transform input must be non-negative")
    kind = spec.kind
    if kind is RangeTransformKind.IDENTITY:
        out = np.clip(arr, 0.0, 1.0)
    elif kind is RangeTransformKind.LOG1P:
        out = np.clip(np.log2(1.0 + arr), 0.0, 1.0)
    elif kind is RangeTransformKind.POWER:
        out = np.clip(np.power(arr, spec.n), 0.0, 1.0)
    elif kind is RangeTransformKind.BIT_PLANE:
        out = _bit_plane(arr, spec.b_max)
    elif kind is RangeTransformKind.BIT_PLANE_POWER:
        out = np.power(_bit_plane(arr, spec.b_max), spec.n)
    else:  # pragma: no cover
        raise ValueError(f"unknown transform kind {kind}")
    return float(out) if np.ndim(x) == 0 else out


def inverse(y, spec: RangeTransformSpec):
    """Decode values from [0, 1] back to reflectance; exact on the unclamped
    region, with y = 0 decoding to 0 for the log-based kinds."""
    arr = np.asarray(y, dtype=np.float64)
    arr = np.clip(arr, 0.0, 1.0)
    kind = spec.kind
    if kind is RangeTransformKind.IDENTITY:
        out = arr.copy()
    elif kind is RangeTransformKind.LOG1P:
        out = np.exp2(arr) - 1.0
    elif kind is RangeTransformKind.POWER:
        out = np.power(arr, 1.0 / spec.n)
    elif kind in (RangeTransformKind.BIT_PLANE, RangeTransformKind.BIT_PLANE_POWER):
        root = arr if kind is RangeTransformKind.BIT_PLANE else np.power(arr, 1.0 / spec.n)
        out = np.exp2(spec.b_max * (root - 1.0))
        out[arr == 0.0] = 0.0
    else:  # pragma: no cover
        raise ValueError(f"unknown transform kind {kind}")
    return float(out) if np.ndim(y) == 0 else out
