"""Deterministic synthetic scenes used as fixtures by tests and demos."""

from __future__ import annotations

import numpy as np

from .core import ImageBuf
from .degrade import DegradationSpec, GammaDark, GaussianNoise, Haze, apply_degradation


def reference_scene(width: int = 96, height: int = 96, seed: int = 7) -> ImageBuf:
    """Colorful blocky scene with strong saturation.

    Each 8x8 block is a saturated color with one near-zero channel, so
    the scene's dark channel density is near zero (reads as haze-free)
    while contrast and colorfulness are high.
    """
    rng = np.random.default_rng(seed)
    block = 8
    by, bx = height // block + 1, width // block + 1
    palette = rng.random((by, bx, 3)) * 0.6 + 0.25
    zero_channel = rng.integers(0, 3, size=(by, bx))
    for i in range(by):
        for j in range(bx):
            palette[i, j, zero_channel[i, j]] = 0.02
    arr = np.zeros((height, width, 3))
    for i in range(height):
        for j in range(width):
            arr[i, j] = palette[i // block, j // block]
    # mild gradient keeps the histogram rich
    ramp = np.linspace(0.0, 0.12, width)[None, :, None]
    return ImageBuf.from_array(np.clip(arr + ramp, 0.0, 1.0))


def dark_hazy_scene(seed: int = 7) -> tuple[ImageBuf, ImageBuf]:
    """(clean reference, GammaDark(3) + Haze(t=0.6, A=1.0) composite)."""
    ref = reference_scene(seed=seed)
    spec = DegradationSpec(ops=(GammaDark(3.0), Haze(0.6, 1.0)), seed=seed)
    return ref, apply_degradation(ref, spec)


def noisy_scene(seed: int = 7, sigma: float = 0.08) -> ImageBuf:
    """Bright colorful scene plus Gaussian noise; low dark channel, so
    quality metrics read it as noisy, not hazy."""
    ref = reference_scene(seed=seed)
    bright = ImageBuf.from_array(np.clip(ref.data * 1.3, 0.0, 1.0))
    spec = DegradationSpec(ops=(GaussianNoise(sigma),), seed=seed)
    return apply_degradation(bright, spec)


def hazy_scene(seed: int = 7, t: float = 0.5) -> ImageBuf:
    """Clean colorful scene under uniform haze."""
    ref = reference_scene(seed=seed)
    spec = DegradationSpec(ops=(Haze(t, 1.0),), seed=seed)
    return apply_degradation(ref, spec)
