"""Depth frames, frame stacks and the DPF1 on-disk container.

DPF1 layout (little-endian)::

    b"DPF1" | u32 width | u32 height | u32 frame_count |
    frame_count * height * width float32 depths in meters, row-major

NaN marks an invalid pixel. Capture metadata lives in a UTF-8 JSON sidecar at
``<path>.meta.json``.
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .model import MODE_RANGES

MAGIC = b"DPF1"
HEADER = struct.Struct("<4sIII")
SIDECAR_SUFFIX = ".meta.json"
MAX_DEPTH = 100.0
MAX_ANGLE_DEG = 75.0

FLEXX2_RESOLUTION = (224, 172)
FLEXX2_FOV_DEG = (56.0, 44.0)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; pixel (col, row) looks along ((col-cx)/fx, (row-cy)/fy, 1)."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("image dimensions must be positive")
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError("focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise ValidationError("principal point must lie inside the image")

    def rays(self) -> np.ndarray:
        """(H, W, 3) un-normalized viewing rays with unit z component."""
        u = (np.arange(self.width) - self.cx) / self.fx
        v = (np.arange(self.height) - self.cy) / self.fy
        uu, vv = np.meshgrid(u, v)
        return np.stack([uu, vv, np.ones_like(uu)], axis=-1)

    def backproject(self, depth: np.ndarray) -> np.ndarray:
        """Re-project a Z-depth image to an (H, W, 3) point cloud."""
        return self.rays() * np.asarray(depth, dtype=np.float64)[..., None]

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CameraIntrinsics:
        return cls(
            int(d["width"]), int(d["height"]),
            float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
        )


def default_intrinsics() -> CameraIntrinsics:
    """Flexx2 geometry: 224 x 172 pixels over a 56 x 44 degree field of view."""
    w, h = FLEXX2_RESOLUTION
    fov_x, fov_y = FLEXX2_FOV_DEG
    return CameraIntrinsics(
        width=w,
        height=h,
        fx=(w / 2) / math.tan(math.radians(fov_x / 2)),
        fy=(h / 2) / math.tan(math.radians(fov_y / 2)),
        cx=w / 2,
        cy=h / 2,
    )


@dataclass(frozen=True)
class CaptureCondition:
    mode_id: str
    nominal_distance: float
    nominal_angle: float  # degrees
    intrinsics: CameraIntrinsics
    # synthetic scene description, absent for real captures
    plane_extent: float | None = None
    background_depth: float | None = None

    def __post_init__(self):
        if self.mode_id not in MODE_RANGES:
            raise ValidationError(f"unknown mode {self.mode_id!r}")
        _, lo, hi = MODE_RANGES[self.mode_id]
        if not lo <= self.nominal_distance <= hi:
            raise ValidationError(
                f"distance {self.nominal_distance} m outside {self.mode_id} range [{lo}, {hi}]"
            )
        if not 0.0 <= self.nominal_angle <= MAX_ANGLE_DEG:
            raise ValidationError(f"angle {self.nominal_angle} deg outside [0, {MAX_ANGLE_DEG}]")
        if self.plane_extent is not None and not self.plane_extent > 0:
            raise ValidationError("plane_extent must be > 0")
        if self.background_depth is not None and not 0 < self.background_depth < MAX_DEPTH:
            raise ValidationError("background_depth must be a depth in (0, 100) m or invalid")

    @property
    def key(self) -> tuple[str, float, float]:
        return (self.mode_id, self.nominal_angle, self.nominal_distance)

    def to_dict(self) -> dict:
        d = {
            "mode_id": self.mode_id,
            "nominal_distance": self.nominal_distance,
            "nominal_angle": self.nominal_angle,
            "intrinsics": self.intrinsics.to_dict(),
        }
        if self.plane_extent is not None:
            d["plane_extent"] = None if math.isinf(self.plane_extent) else self.plane_extent
            d["background"] = "invalid" if self.background_depth is None else self.background_depth
        return d

    @classmethod
    def from_dict(cls, d: dict) -> CaptureCondition:
        if not isinstance(d, dict):
            raise ValidationError("sidecar must hold a JSON object")
        try:
            extent = None
            background = None
            if "plane_extent" in d:
                extent = math.inf if d["plane_extent"] is None else float(d["plane_extent"])
                bg = d.get("background", "invalid")
                background = None if bg == "invalid" else float(bg)
            return cls(
                mode_id=str(d["mode_id"]),
                nominal_distance=float(d["nominal_distance"]),
                nominal_angle=float(d["nominal_angle"]),
                intrinsics=CameraIntrinsics.from_dict(d["intrinsics"]),
                plane_extent=extent,
                background_depth=background,
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"malformed capture condition: {exc!r}") from None


def _check_depths(depths: np.ndarray):
    finite = depths[np.isfinite(depths)]
    if finite.size and not (finite.min() > 0 and finite.max() < MAX_DEPTH):
        raise ValidationError("finite depths must lie in (0, 100) m")
    if np.isinf(depths).any():
        raise ValidationError("depths must be finite or NaN")


@dataclass(frozen=True, eq=False)
class DepthFrame:
    """One depth image in meters, shape (height, width); NaN = invalid."""

    depths: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.depths)
        if d.ndim != 2:
            raise ValidationError(f"depth frame must be 2-D, got shape {d.shape}")
        if d.dtype not in (np.float32, np.float64):
            d = d.astype(np.float64)
        _check_depths(d)
        d = d.view()
        d.setflags(write=False)
        object.__setattr__(self, "depths", d)

    @property
    def height(self) -> int:
        return self.depths.shape[0]

    @property
    def width(self) -> int:
        return self.depths.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return ~np.isnan(self.depths)

    def __eq__(self, other):
        if not isinstance(other, DepthFrame):
            return NotImplemented
        return _bit_equal(self.depths, other.depths)


def _bit_equal(x: np.ndarray, y: np.ndarray) -> bool:
    return x.shape == y.shape and x.dtype == y.dtype and x.tobytes() == y.tobytes()


@dataclass(frozen=True, eq=False)
class FrameStack:
    """Temporal stack of same-sized frames of one capture condition.

    ``data`` has shape (frames, height, width).
    """

    data: np.ndarray
    condition: CaptureCondition | None = None

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3:
            raise ValidationError(f"frame stack must be 3-D, got shape {d.shape}")
        if d.shape[0] < 1:
            raise ValidationError("frame stack must hold at least one frame")
        if d.dtype not in (np.float32, np.float64):
            d = d.astype(np.float64)
        _check_depths(d)
        if self.condition is not None:
            intr = self.condition.intrinsics
            if (intr.height, intr.width) != d.shape[1:]:
                raise ValidationError(
                    f"frames are {d.shape[2]}x{d.shape[1]} but intrinsics say "
                    f"{intr.width}x{intr.height}"
                )
        d = d.view()
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @classmethod
    def from_frames(cls, frames, condition=None) -> FrameStack:
        frames = list(frames)
        shapes = {f.depths.shape for f in frames}
        if len(shapes) > 1:
            raise ValidationError(f"frames differ in size: {sorted(shapes)}")
        return cls(np.stack([f.depths for f in frames]), condition)

    def __len__(self):
        return self.data.shape[0]

    def __getitem__(self, i) -> DepthFrame:
        return DepthFrame(self.data[i])

    @property
    def frames(self) -> list[DepthFrame]:
        return [DepthFrame(f) for f in self.data]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other):
        if not isinstance(other, FrameStack):
            return NotImplemented
        return self.condition == other.condition and _bit_equal(self.data, other.data)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + SIDECAR_SUFFIX)


def atomic_write(path, payload: bytes | str):
    """Write via a temp file in the target directory and rename into place."""
    path = Path(path)
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_stack(stack: FrameStack) -> bytes:
    data = np.ascontiguousarray(stack.data, dtype="<f4")
    n, h, w = data.shape
    return HEADER.pack(MAGIC, w, h, n) + data.tobytes()


def decode_stack(raw: bytes) -> np.ndarray:
    if len(raw) < HEADER.size:
        raise FormatError(f"file too short for DPF1 header ({len(raw)} bytes)")
    magic, w, h, n = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if w == 0 or h == 0 or n == 0:
        raise FormatError(f"header declares an empty stack ({w}x{h}x{n})")
    expected = HEADER.size + 4 * w * h * n
    if len(raw) != expected:
        raise FormatError(
            f"payload length mismatch: header {w}x{h}x{n} needs {expected} bytes, file has {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=HEADER.size).reshape(n, h, w)
    return data.astype(np.float32)


def write_stack(stack: FrameStack, path) -> None:
    """Write ``stack`` as DPF1 plus its metadata sidecar.

    Depths are stored as float32; float64 stacks are rounded on write.
    """
    if stack.condition is None:
        raise ValidationError("a stack needs a capture condition to be written")
    meta = json.dumps(stack.condition.to_dict(), indent=2, sort_keys=True) + "\n"
    atomic_write(path, encode_stack(stack))
    atomic_write(sidecar_path(path), meta)


def read_stack(path) -> FrameStack:
    path = Path(path)
    raw = path.read_bytes()
    data = decode_stack(raw)
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise FormatError(f"metadata sidecar missing: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"malformed sidecar {meta_path}: {exc}") from None
    return FrameStack(data, CaptureCondition.from_dict(meta))


def list_stacks(directory) -> list[Path]:
    """``*.dpf`` files in ``directory``, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"dataset directory not found: {directory}")
    return sorted(p for p in directory.glob("*.dpf") if p.is_file())
