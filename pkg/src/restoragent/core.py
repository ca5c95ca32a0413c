"""Domain types shared by every module, plus lossless PNG I/O.

Pixel convention: planar RGB, values stored as float64 in [0, 1]
(raw byte / 255 on load). Saving quantizes with round-half-away-from-zero
to the nearest 1/255 step, so load(save(img)) == quantize(img) exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, InvalidParam, IoError


class RestorationTask(enum.IntEnum):
    """The seven task categories a tool can address. Codes are stable."""

    Denoise = 0
    Dehaze = 1
    Derain = 2
    Deblur = 3
    Desnow = 4
    LowLightEnhance = 5
    CompositeEnhance = 6

    @classmethod
    def from_code(cls, code: int) -> "RestorationTask":
        try:
            return cls(code)
        except ValueError as exc:
            raise InvalidParam(f"unknown task code {code}") from exc

    @classmethod
    def from_name(cls, name: str) -> "RestorationTask":
        try:
            return cls[name]
        except KeyError as exc:
            raise InvalidParam(f"unknown task name {name!r}") from exc


@dataclass(frozen=True)
class ImageBuf:
    """Immutable RGB raster with normalized float intensities."""

    width: int
    height: int
    data: np.ndarray  # shape (height, width, 3), float64 in [0, 1]

    channels: int = field(default=3, init=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise InvalidParam("image dimensions must be positive")
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.shape != (self.height, self.width, 3):
            raise InvalidParam(
                f"data shape {arr.shape} != ({self.height}, {self.width}, 3)"
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidParam("image values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InvalidParam("image values must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageBuf":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise InvalidParam(f"expected (H, W, 3) array, got {arr.shape}")
        return cls(width=arr.shape[1], height=arr.shape[0], data=arr)

    def luma(self) -> np.ndarray:
        """BT.601 luminance plane, shape (height, width)."""
        r, g, b = self.data[..., 0], self.data[..., 1], self.data[..., 2]
        return 0.299 * r + 0.587 * g + 0.114 * b

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageBuf):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.data, other.data)
        )

    def __hash__(self):
        return hash((self.width, self.height, self.data.tobytes()))


def quantize(img: ImageBuf) -> ImageBuf:
    """Snap every value to the nearest 1/255 step, half away from zero."""
    return ImageBuf.from_array(_to_bytes(img.data) / 255.0)


def _to_bytes(arr: np.ndarray) -> np.ndarray:
    # values are non-negative, so floor(v*255 + 0.5) is half-away-from-zero
    return np.floor(arr * 255.0 + 0.5).astype(np.uint8)


def load_image(path) -> ImageBuf:
    """Load an 8-bit RGB(A) PNG; alpha is dropped; values are byte/255."""
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise FormatError(f"{path}: not a PNG file (format={im.format})")
            if im.mode == "RGBA":
                im = im.convert("RGB")
            elif im.mode != "RGB":
                raise FormatError(f"{path}: unsupported mode {im.mode}")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except FileNotFoundError as exc:
        raise IoError(f"{path}: file not found") from exc
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not an image") from exc
    except OSError as exc:
        raise IoError(f"{path}: {exc}") from exc
    return ImageBuf.from_array(arr)


def save_image(img: ImageBuf, path) -> None:
    """Write an 8-bit RGB PNG. Exact 1/255 multiples round-trip bit-exactly."""
    pil = Image.fromarray(_to_bytes(img.data), mode="RGB")
    try:
        pil.save(path, format="PNG")
    except (OSError, ValueError) as exc:
        raise IoError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class Detection:
    task: RestorationTask
    severity: float  # in [0, 1]
    extent: str = "global"


@dataclass(frozen=True)
class DegradationReport:
    """Output of a perception backend.

    detections are kept sorted by severity descending, ties by task code.
    terminate=True means the image needs no further restoration.
    """

    detections: tuple
    description: str
    recommended_next: Optional[RestorationTask]
    terminate: bool

    def __post_init__(self):
        if self.terminate and self.recommended_next is not None:
            raise InvalidParam("terminate implies no recommended_next")
        ordered = tuple(
            sorted(self.detections, key=lambda d: (-d.severity, int(d.task)))
        )
        object.__setattr__(self, "detections", ordered)


@dataclass(frozen=True)
class ToolDescriptor:
    tool_id: str
    supported_tasks: frozenset
    mode: str = "Builtin"  # "Builtin" | "External"
    endpoint: Optional[str] = None
    params: tuple = ()  # sorted (key, value) string pairs

    def __post_init__(self):
        if not self.supported_tasks:
            raise InvalidParam(f"{self.tool_id}: supported_tasks is empty")
        if self.mode not in ("Builtin", "External"):
            raise InvalidParam(f"{self.tool_id}: bad mode {self.mode!r}")
        if self.mode == "External" and not self.endpoint:
            raise InvalidParam(f"{self.tool_id}: External tool needs endpoint")
        object.__setattr__(self, "supported_tasks", frozenset(self.supported_tasks))
        object.__setattr__(self, "params", tuple(sorted(self.params)))


@dataclass(frozen=True)
class HistoryStep:
    task: RestorationTask
    tool_id: str
    reward: int  # 0 | 1
    quality_before: "QualityVector"
    quality_after: "QualityVector"


class ExecutionHistory:
    """Append-only record of executed steps within one session."""

    def __init__(self):
        self._steps: list[HistoryStep] = []

    def append(self, step: HistoryStep) -> None:
        self._steps.append(step)

    @property
    def steps(self) -> tuple:
        return tuple(self._steps)

    def tasks_with_reward(self, reward: int) -> set:
        return {s.task for s in self._steps if s.reward == reward}

    def __len__(self):
        return len(self._steps)
