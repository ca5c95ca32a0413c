import numpy as np
import pytest

from restoragent.core import ImageBuf
from restoragent.degrade import (
    DegradationSpec,
    GammaDark,
    GaussianNoise,
    Haze,
    MotionBlur,
    RainStreaks,
    SnowDots,
    apply_degradation,
)
from restoragent.errors import InvalidParam, ShapeMismatch, TooSmall
from restoragent.fullref import psnr, ssim


def flat(value, h=16, w=16):
    return ImageBuf.from_array(np.full((h, w, 3), value))


def rand_img(seed, h=16, w=16):
    return ImageBuf.from_array(np.random.default_rng(seed).random((h, w, 3)))


def test_psnr_identity_cap():
    img = rand_img(0)
    assert psnr(img, img) == 99.0


def test_psnr_black_vs_white():
    assert psnr(flat(0.0), flat(1.0)) == pytest.approx(0.0, abs=1e-12)


def test_psnr_uniform_offset_closed_form():
    base = ImageBuf.from_array(np.full((8, 8, 3), 100 / 255))
    shifted = ImageBuf.from_array(base.data + 16 / 255)
    expected = 10 * np.log10(255**2 / 256)  # MSE = (16/255)^2
    assert psnr(base, shifted) == pytest.approx(expected, abs=1e-9)
    assert expected == pytest.approx(24.0482, abs=1e-3)


def test_psnr_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        psnr(flat(0.5, 8, 8), flat(0.5, 8, 9))


def test_ssim_identity():
    img = rand_img(1)
    assert ssim(img, img) == pytest.approx(1.0, abs=1e-9)


def test_ssim_constant_closed_form():
    # zero variance: SSIM = (2*mu_x*mu_y + C1) / (mu_x^2 + mu_y^2 + C1)
    x = flat(0.2)
    y = flat(0.8)
    c1 = 1e-4
    expected = (2 * 0.2 * 0.8 + c1) / (0.04 + 0.64 + c1)
    assert ssim(x, y) == pytest.approx(expected, abs=1e-6)
    assert expected == pytest.approx(0.4706, abs=1e-4)


def test_ssim_symmetry():
    for seed in range(5):
        x = rand_img(seed, 16, 20)
        y = rand_img(seed + 100, 16, 20)
        assert ssim(x, y) == pytest.approx(ssim(y, x), abs=1e-12)


def test_ssim_too_small():
    with pytest.raises(TooSmall):
        ssim(flat(0.5, 10, 20), flat(0.5, 10, 20))


def test_haze_identity_when_t_one():
    img = rand_img(2)
    out = apply_degradation(img, DegradationSpec(ops=(Haze(1.0, 0.7),)))
    assert out == img


def test_gamma_identity():
    img = rand_img(3)
    out = apply_degradation(img, DegradationSpec(ops=(GammaDark(1.0),)))
    assert out == img


def test_haze_on_black():
    img = flat(0.0)
    out = apply_degradation(img, DegradationSpec(ops=(Haze(0.6, 1.0),)))
    assert np.allclose(out.data, 0.4, atol=1e-12)


def test_degradation_deterministic_under_seed():
    img = rand_img(4, 24, 24)
    spec = DegradationSpec(ops=(GaussianNoise(0.1), RainStreaks(0.5), SnowDots(0.4)), seed=9)
    assert apply_degradation(img, spec) == apply_degradation(img, spec)
    other = DegradationSpec(ops=spec.ops, seed=10)
    assert apply_degradation(img, other) != apply_degradation(img, spec)


@pytest.mark.parametrize(
    "op",
    [
        GammaDark(2.0),
        Haze(0.5, 0.9),
        GaussianNoise(0.1),
        MotionBlur(5, 30.0),
        RainStreaks(0.5),
        SnowDots(0.4, 2),
    ],
)
def test_degraders_preserve_shape_and_range(op):
    img = rand_img(5, 24, 20)
    out = apply_degradation(img, DegradationSpec(ops=(op,), seed=3))
    assert (out.width, out.height) == (img.width, img.height)
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0


@pytest.mark.parametrize(
    "op",
    [GammaDark(2.0), Haze(0.5, 1.0), GaussianNoise(0.15), MotionBlur(7, 0.0)],
)
def test_nonidentity_degradation_lowers_psnr(op):
    img = rand_img(6, 24, 24)
    out = apply_degradation(img, DegradationSpec(ops=(op,), seed=1))
    assert psnr(img, out) < 99.0


def test_param_validation():
    with pytest.raises(InvalidParam):
        GammaDark(0.5)
    with pytest.raises(InvalidParam):
        Haze(0.0, 0.5)
    with pytest.raises(InvalidParam):
        Haze(0.5, 1.5)
    with pytest.raises(InvalidParam):
        GaussianNoise(0.5)
    with pytest.raises(InvalidParam):
        RainStreaks(2.0)
    with pytest.raises(InvalidParam):
        SnowDots(0.5, 0)


def test_composite_applies_in_order():
    img = rand_img(7)
    spec = DegradationSpec(ops=(GammaDark(3.0), Haze(0.6, 1.0)), seed=0)
    manual = np.clip((np.clip(img.data**3.0, 0, 1)) * 0.6 + 0.4, 0, 1)
    assert np.allclose(apply_degradation(img, spec).data, manual, atol=1e-12)
