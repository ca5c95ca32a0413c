"""Tool registry, built-in classical restoration tools, and the external
tool wire protocol client (JSON over HTTP with base64 PNG payloads)."""

from __future__ import annotations

import base64
import io
import json
from dataclasses import dataclass
from typing import Callable

import cv2
import numpy as np
import requests
from PIL import Image
from scipy import ndimage

from .core import ImageBuf, RestorationTask, ToolDescriptor, save_image
from .errors import (
    BackendUnavailable,
    ProtocolError,
    ShapeViolation,
    ToolFailure,
    UnknownTool,
)
from .iqa import dark_channel

DCP_PATCH = 15
DCP_OMEGA = 0.95
DCP_T_FLOOR = 0.1


def identity(img: ImageBuf) -> ImageBuf:
    return img


def gamma_llie(img: ImageBuf) -> ImageBuf:
    """Inverse-gamma lift for low-light images: v -> v^(1/2.2)."""
    return ImageBuf.from_array(img.data ** (1.0 / 2.2))


def clahe_llie(img: ImageBuf) -> ImageBuf:
    """CLAHE on the luminance plane (8x8 tiles, clip 2.0); chroma scaled."""
    luma = img.luma()
    luma8 = np.floor(luma * 255.0 + 0.5).astype(np.uint8)
    clahe = cv2.createCLAHE(clipLimit=2.0, tileGridSize=(8, 8))
    eq = clahe.apply(luma8).astype(np.float64) / 255.0
    gain = np.divide(eq, luma, out=np.ones_like(luma), where=luma > 1e-6)
    return ImageBuf.from_array(np.clip(img.data * gain[..., None], 0.0, 1.0))


def _dcp_estimate(img: ImageBuf):
    """(atmospheric light, floored transmission map) via the dark channel."""
    dark = dark_channel(img, DCP_PATCH)
    flat = dark.ravel()
    n_top = max(1, int(flat.size * 0.001))
    top_idx = np.argsort(flat)[-n_top:]
    pixels = img.data.reshape(-1, 3)[top_idx]
    atmos = np.maximum(pixels.mean(axis=0), 1e-6)
    normalized = ImageBuf.from_array(np.clip(img.data / atmos, 0.0, 1.0))
    t = 1.0 - DCP_OMEGA * dark_channel(normalized, DCP_PATCH)
    return atmos, np.maximum(t, DCP_T_FLOOR)


def dcp_dehaze(img: ImageBuf) -> ImageBuf:
    """Dark-channel-prior dehazing (patch 15, omega 0.95, t floor 0.1)."""
    atmos, t = _dcp_estimate(img)
    restored = (img.data - atmos) / t[..., None] + atmos
    return ImageBuf.from_array(np.clip(restored, 0.0, 1.0))


def dcp_dehaze_weak(img: ImageBuf) -> ImageBuf:
    """Deliberately deficient dehazer for ablation runs: subtracts the
    airlight veil without compensating transmission, so the veil goes
    but the scene comes out darkened by roughly a factor of t."""
    atmos, t = _dcp_estimate(img)
    restored = img.data - (1.0 - t[..., None]) * atmos
    return ImageBuf.from_array(np.clip(restored, 0.0, 1.0))


def bilateral_denoise(img: ImageBuf) -> ImageBuf:
    """5x5 bilateral filter, sigma_s=2, sigma_r=0.1, per channel."""
    out = np.zeros_like(img.data)
    weight = np.zeros(img.data.shape[:2])
    sigma_s2 = 2.0 * 2.0**2
    sigma_r2 = 2.0 * 0.1**2
    padded = np.pad(img.data, ((2, 2), (2, 2), (0, 0)), mode="reflect")
    h, w = img.height, img.width
    luma = img.luma()
    luma_pad = np.pad(luma, 2, mode="reflect")
    for dy in range(-2, 3):
        for dx in range(-2, 3):
            spatial = np.exp(-(dy * dy + dx * dx) / sigma_s2)
            shifted_luma = luma_pad[2 + dy : 2 + dy + h, 2 + dx : 2 + dx + w]
            rng_w = np.exp(-((shifted_luma - luma) ** 2) / sigma_r2)
            wgt = spatial * rng_w
            weight += wgt
            out += wgt[..., None] * padded[2 + dy : 2 + dy + h, 2 + dx : 2 + dx + w]
    return ImageBuf.from_array(np.clip(out / weight[..., None], 0.0, 1.0))


def median_derain(img: ImageBuf) -> ImageBuf:
    """Directional 1x5 median across columns; removes thin vertical streaks."""
    out = np.empty_like(img.data)
    for c in range(3):
        out[..., c] = ndimage.median_filter(img.data[..., c], size=(1, 5), mode="reflect")
    return ImageBuf.from_array(out)


def median_desnow(img: ImageBuf) -> ImageBuf:
    """3x3 median; removes isolated bright dots."""
    out = np.empty_like(img.data)
    for c in range(3):
        out[..., c] = ndimage.median_filter(img.data[..., c], size=(3, 3), mode="reflect")
    return ImageBuf.from_array(out)


def unsharp_deblur(img: ImageBuf) -> ImageBuf:
    """Unsharp mask: img + 0.8 * (img - gaussian(sigma=1.5))."""
    blurred = np.empty_like(img.data)
    for c in range(3):
        blurred[..., c] = ndimage.gaussian_filter(img.data[..., c], sigma=1.5, mode="reflect")
    return ImageBuf.from_array(np.clip(img.data + 0.8 * (img.data - blurred), 0.0, 1.0))


def composite_enhance(img: ImageBuf) -> ImageBuf:
    """gamma_llie then dcp_dehaze, for mixed low-light + haze scenes."""
    return dcp_dehaze(gamma_llie(img))


_ALL_TASKS = frozenset(RestorationTask)

_BUILTIN_FNS: dict[str, Callable[[ImageBuf], ImageBuf]] = {
    "identity": identity,
    "gamma_llie": gamma_llie,
    "clahe_llie": clahe_llie,
    "dcp_dehaze": dcp_dehaze,
    "dcp_dehaze_weak": dcp_dehaze_weak,
    "bilateral_denoise": bilateral_denoise,
    "median_derain": median_derain,
    "median_desnow": median_desnow,
    "unsharp_deblur": unsharp_deblur,
    "composite_enhance": composite_enhance,
}

_DEFAULT_TASKS: dict[str, frozenset] = {
    "gamma_llie": frozenset({RestorationTask.LowLightEnhance}),
    "clahe_llie": frozenset({RestorationTask.LowLightEnhance}),
    "dcp_dehaze": frozenset({RestorationTask.Dehaze}),
    "bilateral_denoise": frozenset({RestorationTask.Denoise}),
    "median_derain": frozenset({RestorationTask.Derain}),
    "median_desnow": frozenset({RestorationTask.Desnow}),
    "unsharp_deblur": frozenset({RestorationTask.Deblur}),
    "composite_enhance": frozenset({RestorationTask.CompositeEnhance}),
}


@dataclass
class RegisteredTool:
    descriptor: ToolDescriptor
    invoker: Callable[[ImageBuf], ImageBuf]


class ToolRegistry:
    """Immutable-after-startup map tool_id -> descriptor + invoker."""

    def __init__(self):
        self._tools: dict[str, RegisteredTool] = {}

    def register(self, descriptor: ToolDescriptor, invoker=None) -> None:
        if descriptor.mode == "Builtin":
            if invoker is None:
                try:
                    invoker = _BUILTIN_FNS[descriptor.tool_id]
                except KeyError as exc:
                    raise UnknownTool(f"no builtin named {descriptor.tool_id}") from exc
        else:
            endpoint = descriptor.endpoint
            timeout = dict(descriptor.params).get("timeout", "30")

            def invoker(img, _e=endpoint, _d=descriptor, _t=float(timeout)):
                task = sorted(_d.supported_tasks)[0]
                return call_external(_e, task, img, timeout=_t)

        self._tools[descriptor.tool_id] = RegisteredTool(descriptor, invoker)

    def descriptors(self) -> list[ToolDescriptor]:
        return [t.descriptor for _, t in sorted(self._tools.items())]

    def supporting(self, task: RestorationTask) -> list[ToolDescriptor]:
        return [d for d in self.descriptors() if task in d.supported_tasks]

    def get(self, tool_id: str) -> RegisteredTool:
        try:
            return self._tools[tool_id]
        except KeyError as exc:
            raise UnknownTool(tool_id) from exc

    def __contains__(self, tool_id: str) -> bool:
        return tool_id in self._tools


def invoke(registry: ToolRegistry, tool_id: str, img: ImageBuf) -> ImageBuf:
    """Run a tool; output must match input dimensions and stay in [0, 1]."""
    tool = registry.get(tool_id)
    out = tool.invoker(img)
    if (out.width, out.height) != (img.width, img.height):
        raise ShapeViolation(
            f"{tool_id}: returned {out.width}x{out.height} for {img.width}x{img.height}"
        )
    return out


def default_registry() -> ToolRegistry:
    """Builtins covering every RestorationTask."""
    reg = ToolRegistry()
    for tool_id, tasks in _DEFAULT_TASKS.items():
        reg.register(ToolDescriptor(tool_id=tool_id, supported_tasks=tasks))
    return reg


def registry_from_config(entries: list[dict]) -> ToolRegistry:
    """Build a registry from parsed config entries
    [{"tool_id":…, "tasks":[…], "mode":…, "endpoint":…, "params":{…}}]."""
    reg = ToolRegistry()
    for entry in entries:
        tasks = frozenset(RestorationTask.from_name(t) for t in entry["tasks"])
        reg.register(
            ToolDescriptor(
                tool_id=entry["tool_id"],
                supported_tasks=tasks,
                mode=entry.get("mode", "Builtin"),
                endpoint=entry.get("endpoint"),
                params=tuple(sorted((entry.get("params") or {}).items())),
            )
        )
    return reg


def encode_png_b64(img: ImageBuf) -> str:
    buf = io.BytesIO()
    save_image(img, buf)
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_png_b64(data: str) -> ImageBuf:
    from .core import load_image

    try:
        raw = base64.b64decode(data, validate=True)
    except Exception as exc:
        raise ProtocolError(f"bad base64 payload: {exc}") from exc
    return load_image(io.BytesIO(raw))


def call_external(
    endpoint: str,
    task: RestorationTask,
    img: ImageBuf,
    params: dict | None = None,
    timeout: float = 30.0,
) -> ImageBuf:
    """POST /restore with a base64 PNG; decode and validate the reply."""
    payload = {
        "task": task.name,
        "image_png_b64": encode_png_b64(img),
        "params": params or {},
    }
    try:
        resp = requests.post(endpoint.rstrip("/") + "/restore", json=payload, timeout=timeout)
    except requests.RequestException as exc:
        raise BackendUnavailable(f"{endpoint}: {exc}") from exc
    if resp.status_code != 200:
        raise ToolFailure(f"{endpoint}: HTTP {resp.status_code}: {resp.text[:200]}")
    try:
        body = resp.json()
        out = decode_png_b64(body["image_png_b64"])
    except (json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
        raise ProtocolError(f"{endpoint}: malformed response") from exc
    if (out.width, out.height) != (img.width, img.height):
        raise ShapeViolation(
            f"{endpoint}: returned {out.width}x{out.height} for {img.width}x{img.height}"
        )
    return out
