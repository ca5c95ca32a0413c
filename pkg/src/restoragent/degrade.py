"""Synthetic degradation generators used as test and acceptance fixtures.

Each op is deterministic under (spec, seed); composites apply ops in
listed order sharing one seeded RNG. All outputs are clamped to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import ImageBuf
from .errors import InvalidParam


@dataclass(frozen=True)
class GammaDark:
    gamma: float

    def __post_init__(self):
        if not 1.0 <= self.gamma <= 5.0:
            raise InvalidParam(f"gamma {self.gamma} outside [1, 5]")

    def apply(self, arr: np.ndarray, rng) -> np.ndarray:
        return arr**self.gamma


@dataclass(frozen=True)
class Haze:
    t: float  # transmission
    a: float  # atmospheric light

    def __post_init__(self):
        if not 0.0 < self.t <= 1.0:
            raise InvalidParam(f"t {self.t} outside (0, 1]")
        if not 0.0 <= self.a <= 1.0:
            raise InvalidParam(f"A {self.a} outside [0, 1]")

    def apply(self, arr: np.ndarray, rng) -> np.ndarray:
        return self.t * arr + (1.0 - self.t) * self.a


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float

    def __post_init__(self):
        if not 0.0 <= self.sigma <= 0.3:
            raise InvalidParam(f"sigma {self.sigma} outside [0, 0.3]")

    def apply(self, arr: np.ndarray, rng) -> np.ndarray:
        return arr + rng.normal(0.0, self.sigma, size=arr.shape)


@dataclass(frozen=True)
class MotionBlur:
    length: int
    angle: float  # degrees

    def __post_init__(self):
        if self.length < 1:
            raise InvalidParam(f"length {self.length} < 1")

    def apply(self, arr: np.ndarray, rng) -> np.ndarray:
        kernel = _line_kernel(self.length, self.angle)
        out = np.empty_like(arr)
        for c in range(3):
            out[..., c] = ndimage.convolve(arr[..., c], kernel, mode="reflect")
        return out


@dataclass(frozen=True)
class RainStreaks:
    density: float
    length: int = 9
    angle: float = 80.0

    def __post_init__(self):
        if not 0.0 <= self.density <= 1.0:
            raise InvalidParam(f"density {self.density} outside [0, 1]")
        if self.length < 1:
            raise InvalidParam(f"length {self.length} < 1")

    def apply(self, arr: np.ndarray, rng) -> np.ndarray:
        h, w = arr.shape[:2]
        mask = (rng.random((h, w)) < self.density * 0.05).astype(np.float64)
        streaks = ndimage.convolve(mask, _line_kernel(self.length, self.angle) * self.length, mode="constant")
        return arr + 0.6 * np.clip(streaks, 0.0, 1.0)[..., None]


@dataclass(frozen=True)
class SnowDots:
    density: float
    radius: int = 1

    def __post_init__(self):
        if not 0.0 <= self.density <= 1.0:
            raise InvalidParam(f"density {self.density} outside [0, 1]")
        if self.radius < 1:
            raise InvalidParam(f"radius {self.radius} < 1")

    def apply(self, arr: np.ndarray, rng) -> np.ndarray:
        h, w = arr.shape[:2]
        mask = rng.random((h, w)) < self.density * 0.03
        dots = ndimage.maximum_filter(mask.astype(np.float64), size=2 * self.radius + 1)
        out = arr.copy()
        out[dots > 0.0] = 1.0
        return out


def _line_kernel(length: int, angle_deg: float) -> np.ndarray:
    """Normalized 1-pixel-wide line kernel of the given length and angle."""
    size = length if length % 2 == 1 else length + 1
    kernel = np.zeros((size, size))
    center = size // 2
    rad = np.deg2rad(angle_deg)
    dx, dy = np.cos(rad), -np.sin(rad)
    for i in range(length):
        t = i - (length - 1) / 2.0
        r = int(round(center + t * dy))
        c = int(round(center + t * dx))
        if 0 <= r < size and 0 <= c < size:
            kernel[r, c] = 1.0
    return kernel / kernel.sum()


DegradationOp = GammaDark | Haze | GaussianNoise | MotionBlur | RainStreaks | SnowDots


@dataclass(frozen=True)
class DegradationSpec:
    """An ordered pipeline of degradation ops with one seed."""

    ops: tuple = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))


def apply_degradation(img: ImageBuf, spec: DegradationSpec) -> ImageBuf:
    rng = np.random.default_rng(spec.seed)
    arr = img.data.copy()
    for op in spec.ops:
        if not isinstance(op, DegradationOp):
            raise InvalidParam(f"unknown degradation op {op!r}")
        arr = np.clip(op.apply(arr, rng), 0.0, 1.0)
    return ImageBuf.from_array(arr)
