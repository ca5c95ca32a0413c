"""No-reference quality metrics.

Seven classical proxies (sharpness, noise_sigma, dark_channel_density,
mean_luminance, rms_contrast, colorfulness, entropy) fill the same
"vector of named scores" role a learned NR-IQA stack would; MetricBackend
is the slot where learned models plug in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy import ndimage

from .core import ImageBuf
from .errors import InvalidParam

METRIC_NAMES = (
    "sharpness",
    "noise_sigma",
    "dark_channel_density",
    "mean_luminance",
    "rms_contrast",
    "colorfulness",
    "entropy",
)

DEFAULT_WEIGHTS = {name: 1.0 for name in METRIC_NAMES}

_LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


def sharpness(img: ImageBuf) -> float:
    """Variance of the 3x3 Laplacian response on luma. Higher = sharper."""
    resp = ndimage.convolve(img.luma(), _LAPLACIAN, mode="reflect")
    return float(np.var(resp))


def noise_sigma(img: ImageBuf) -> float:
    """Robust noise estimate: median(|luma - median3x3(luma)|) / 0.6745."""
    luma = img.luma()
    highpass = luma - ndimage.median_filter(luma, size=3, mode="reflect")
    return float(np.median(np.abs(highpass)) / 0.6745)


def dark_channel(img: ImageBuf, patch: int = 15) -> np.ndarray:
    """Per-pixel min over channels then min over a patch window.

    Window is clamped at image borders (replicate-edge min filter is
    equivalent to minimum over the truncated window).
    """
    if patch < 1 or patch % 2 == 0:
        raise InvalidParam(f"patch must be odd and positive, got {patch}")
    per_pixel_min = img.data.min(axis=2)
    return ndimage.minimum_filter(per_pixel_min, size=patch, mode="nearest")


def dark_channel_density(img: ImageBuf, patch: int = 15) -> float:
    """Mean dark channel; near 0 for haze-free scenes, near 1 under haze."""
    return float(dark_channel(img, patch).mean())


def mean_luminance(img: ImageBuf) -> float:
    return float(img.luma().mean())


def rms_contrast(img: ImageBuf) -> float:
    return float(img.luma().std())


def colorfulness(img: ImageBuf) -> float:
    """Hasler-Suesstrunk colorfulness on [0,1] channels."""
    r, g, b = img.data[..., 0], img.data[..., 1], img.data[..., 2]
    rg = r - g
    yb = 0.5 * (r + g) - b
    std_root = np.sqrt(rg.std() ** 2 + yb.std() ** 2)
    mean_root = np.sqrt(rg.mean() ** 2 + yb.mean() ** 2)
    return float(std_root + 0.3 * mean_root)


def entropy(img: ImageBuf) -> float:
    """Shannon entropy (bits) of the 256-bin luma histogram."""
    hist, _ = np.histogram(img.luma(), bins=256, range=(0.0, 1.0))
    p = hist[hist > 0] / hist.sum()
    return float(-(p * np.log2(p)).sum())


_METRIC_FNS: Mapping[str, Callable[[ImageBuf], float]] = {
    "sharpness": sharpness,
    "noise_sigma": noise_sigma,
    "dark_channel_density": dark_channel_density,
    "mean_luminance": mean_luminance,
    "rms_contrast": rms_contrast,
    "colorfulness": colorfulness,
    "entropy": entropy,
}


def orient_scores(scores: Mapping[str, float]) -> dict:
    """Flip each raw metric so that larger always means better.

    noise_sigma and dark_channel_density are negated; mean_luminance
    becomes -|v - 0.5| (mid exposure is best); the rest pass through.
    """
    oriented = {}
    for name, value in scores.items():
        if name not in METRIC_NAMES:
            raise InvalidParam(f"unknown metric name {name!r}")
        if name in ("noise_sigma", "dark_channel_density"):
            oriented[name] = -value
        elif name == "mean_luminance":
            oriented[name] = -abs(value - 0.5)
        else:
            oriented[name] = value
    return oriented


def aggregate_quality(scores: Mapping[str, float], weights: Mapping[str, float] | None = None) -> float:
    """Weighted sum of already-oriented metric scores (default weights 1)."""
    if weights is None:
        weights = DEFAULT_WEIGHTS
    for name in scores:
        if name not in METRIC_NAMES:
            raise InvalidParam(f"unknown metric name {name!r}")
    for name in weights:
        if name not in METRIC_NAMES:
            raise InvalidParam(f"unknown metric name {name!r} in weights")
    return sum(weights.get(name, 1.0) * value for name, value in scores.items())


@dataclass(frozen=True)
class QualityVector:
    """Named metric scores plus their signed aggregate."""

    scores: tuple  # sorted (name, value) pairs in registry order
    aggregate: float

    def __post_init__(self):
        for name, value in self.scores:
            if name not in METRIC_NAMES:
                raise InvalidParam(f"unknown metric name {name!r}")
            if not np.isfinite(value):
                raise InvalidParam(f"metric {name} is not finite")

    def as_dict(self) -> dict:
        return dict(self.scores)

    def __getitem__(self, name: str) -> float:
        return dict(self.scores)[name]

    def to_json_obj(self) -> dict:
        obj = {name: value for name, value in self.scores}
        obj["aggregate"] = self.aggregate
        return obj


def evaluate_quality(img: ImageBuf, weights: Mapping[str, float] | None = None) -> QualityVector:
    """Compute every registry metric on the image. Deterministic."""
    scores = tuple((name, _METRIC_FNS[name](img)) for name in METRIC_NAMES)
    aggregate = aggregate_quality(orient_scores(dict(scores)), weights)
    return QualityVector(scores=scores, aggregate=aggregate)


class MetricBackend:
    """Pluggable quality evaluator: (ImageBuf) -> QualityVector."""

    def evaluate(self, img: ImageBuf) -> QualityVector:
        raise NotImplementedError


class ClassicalMetricBackend(MetricBackend):
    def __init__(self, weights: Mapping[str, float] | None = None):
        self.weights = dict(weights) if weights is not None else None

    def evaluate(self, img: ImageBuf) -> QualityVector:
        return evaluate_quality(img, self.weights)
