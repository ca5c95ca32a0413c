"""Full-reference metrics: PSNR and SSIM against a ground-truth image."""

from __future__ import annotations

import numpy as np
from scipy import signal

from .core import ImageBuf
from .errors import ShapeMismatch, TooSmall

PSNR_CAP_DB = 99.0

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def psnr(x: ImageBuf, y: ImageBuf) -> float:
    """10*log10(1/MSE) over all channels, peak 1.0; identical images cap at 99 dB."""
    if (x.width, x.height) != (y.width, y.height):
        raise ShapeMismatch(f"{x.width}x{x.height} vs {y.width}x{y.height}")
    mse = float(np.mean((x.data - y.data) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(1.0 / mse)))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(x: ImageBuf, y: ImageBuf) -> float:
    """Mean SSIM on luma: 11x11 Gaussian window sigma=1.5, K1=0.01, K2=0.03, L=1."""
    if (x.width, x.height) != (y.width, y.height):
        raise ShapeMismatch(f"{x.width}x{x.height} vs {y.width}x{y.height}")
    if min(x.width, x.height) < _SSIM_WINDOW:
        raise TooSmall(f"min side {min(x.width, x.height)} < {_SSIM_WINDOW}")
    a = x.luma()
    b = y.luma()
    win = _gaussian_window(_SSIM_WINDOW, _SSIM_SIGMA)

    def filt(z):
        return signal.correlate2d(z, win, mode="valid")

    mu_a = filt(a)
    mu_b = filt(b)
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    var_a = filt(a * a) - mu_aa
    var_b = filt(b * b) - mu_bb
    cov = filt(a * b) - mu_ab

    c1 = _SSIM_K1**2  # L = 1
    c2 = _SSIM_K2**2
    ssim_map = ((2 * mu_ab + c1) * (2 * cov + c2)) / (
        (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    )
    return float(ssim_map.mean())
