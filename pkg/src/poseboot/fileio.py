"""On-disk formats: line-delimited pose records, binary heatmaps and models,
P5 grayscale images, and flat key=value config files.

All writers go through an atomic write-temp-then-rename so partially
written files never appear under the target name.

Binary layouts (all little-endian):
  heatmap record: magic b"PBHMAP01", joint u32, width u32, height u32,
                  stride f64, origin_x f64, origin_y f64,
                  height*width f32 row-major. Records may be concatenated.
  model file:     magic b"PBSVMD01", feature_dim u32, reg f64,
                  mean[d] f64, std[d] f64, weights[d] f64, bias f64.
"""
from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .dpmm import OutlierReport, format_outlier_report
from .heatmaps import Heatmap
from .skeleton import N_JOINTS, ActionLabel, JointId, Skeleton
from .svm import SvmModel

__all__ = [
    "PoseRecord",
    "read_pose_records",
    "write_pose_records",
    "atomic_write",
    "read_pgm",
    "write_pgm",
    "read_heatmaps",
    "write_heatmaps",
    "save_svm_model",
    "load_svm_model",
    "load_config",
    "coerce_config_value",
    "write_outlier_report",
]

_HEATMAP_MAGIC = b"PBHMAP01"
_MODEL_MAGIC = b"PBSVMD01"


def atomic_write(path: Union[str, Path], data: Union[bytes, str]) -> None:
    """Write to a temp file in the target directory, then rename over path."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


# --- pose records -----------------------------------------------------------


class PoseRecord:
    """One pose line: image id, 14 keypoints, optional action/score/provenance."""

    __slots__ = ("image_id", "keypoints", "action", "score", "provenance")

    def __init__(
        self,
        image_id: str,
        keypoints: np.ndarray,
        action: Optional[ActionLabel] = None,
        score: Optional[float] = None,
        provenance: Optional[str] = None,
    ):
        kp = np.asarray(keypoints, dtype=np.float64)
        if kp.shape != (N_JOINTS, 2):
            raise ValueError(f"keypoints must be ({N_JOINTS}, 2), got {kp.shape}")
        self.image_id = image_id
        self.keypoints = kp
        self.action = action
        self.score = None if score is None else float(score)
        self.provenance = provenance

    def skeleton(self) -> Skeleton:
        return Skeleton(self.keypoints)

    def to_dict(self) -> dict:
        d: dict = {
            "image_id": self.image_id,
            "keypoints": [[float(x), float(y)] for x, y in self.keypoints],
        }
        if self.action is not None:
            d["action"] = self.action.value
        if self.score is not None:
            d["score"] = self.score
        if self.provenance is not None:
            d["provenance"] = self.provenance
        return d

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PoseRecord)
            and self.image_id == other.image_id
            and np.array_equal(self.keypoints, other.keypoints)
            and self.action == other.action
            and self.score == other.score
            and self.provenance == other.provenance
        )


def _record_from_dict(d: dict, where: str) -> PoseRecord:
    if not isinstance(d, dict):
        raise ValueError(f"{where}: expected an object")
    try:
        image_id = d["image_id"]
        keypoints = d["keypoints"]
    except KeyError as e:
        raise ValueError(f"{where}: missing field {e.args[0]!r}") from None
    if not isinstance(image_id, str) or not image_id:
        raise ValueError(f"{where}: image_id must be a non-empty string")
    kp = np.asarray(keypoints, dtype=np.float64)
    if kp.shape != (N_JOINTS, 2):
        raise ValueError(f"{where}: keypoints must be {N_JOINTS} [x, y] pairs")
    action = None
    if d.get("action") is not None:
        try:
            action = ActionLabel.parse(d["action"])
        except (TypeError, ValueError) as e:
            raise ValueError(f"{where}: {e}") from None
    score = d.get("score")
    if score is not None and not isinstance(score, (int, float)):
        raise ValueError(f"{where}: score must be numeric")
    if score is not None and not math.isfinite(float(score)):
        raise ValueError(f"{where}: score must be finite")
    provenance = d.get("provenance")
    if provenance is not None and not isinstance(provenance, str):
        raise ValueError(f"{where}: provenance must be a string")
    return PoseRecord(image_id, kp, action, score, provenance)


def read_pose_records(path: Union[str, Path]) -> list[PoseRecord]:
    """Parse a line-delimited pose file; errors name the offending line."""
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"line {lineno}: invalid JSON ({e.msg})") from None
            out.append(_record_from_dict(obj, f"line {lineno}"))
    return out


def write_pose_records(path: Union[str, Path], records: Sequence[PoseRecord]) -> None:
    text = "".join(json.dumps(r.to_dict(), separators=(",", ":")) + "\n" for r in records)
    atomic_write(path, text)


# --- P5 grayscale -----------------------------------------------------------


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    """Binary (P5) 8-bit grayscale to float array in [0, 1]."""
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError("not a binary PGM (P5) file")
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed between them
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # the single whitespace after maxval
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ValueError("malformed PGM header") from None
    if maxval != 255:
        raise ValueError(f"unsupported PGM maxval {maxval}, expected 255")
    need = width * height
    raster = data[pos : pos + need]
    if len(raster) != need:
        raise ValueError("truncated PGM raster")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return img.astype(np.float64) / 255.0


def write_pgm(path: Union[str, Path], image: np.ndarray) -> None:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    raw = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    atomic_write(path, header + raw.tobytes())


# --- heatmap binary ---------------------------------------------------------

_HM_HEADER = struct.Struct("<8sIII3d")  # magic, joint, width, height, stride, ox, oy


def _pack_heatmap(h: Heatmap) -> bytes:
    rows, cols = h.grid.shape
    header = _HM_HEADER.pack(
        _HEATMAP_MAGIC, int(h.joint), cols, rows, h.stride, h.origin[0], h.origin[1]
    )
    return header + h.grid.astype("<f4").tobytes()


def write_heatmaps(path: Union[str, Path], maps: Union[Heatmap, Sequence[Heatmap]]) -> None:
    if isinstance(maps, Heatmap):
        maps = [maps]
    atomic_write(path, b"".join(_pack_heatmap(h) for h in maps))


def read_heatmaps(path: Union[str, Path]) -> list[Heatmap]:
    """Read all concatenated heatmap records in a file."""
    data = Path(path).read_bytes()
    out = []
    pos = 0
    while pos < len(data):
        if len(data) - pos < _HM_HEADER.size:
            raise ValueError(f"truncated heatmap header at offset {pos}")
        magic, joint, width, height, stride, ox, oy = _HM_HEADER.unpack_from(data, pos)
        if magic != _HEATMAP_MAGIC:
            raise ValueError(f"bad heatmap magic at offset {pos}")
        if not 0 <= joint < N_JOINTS:
            raise ValueError(f"bad joint id {joint} at offset {pos}")
        pos += _HM_HEADER.size
        need = width * height * 4
        if len(data) - pos < need:
            raise ValueError(f"truncated heatmap grid at offset {pos}")
        grid = (
            np.frombuffer(data[pos : pos + need], dtype="<f4")
            .reshape(height, width)
            .astype(np.float64)
        )
        pos += need
        out.append(Heatmap(joint=JointId(joint), grid=grid, stride=stride, origin=(ox, oy)))
    return out


# --- model binary -----------------------------------------------------------


def save_svm_model(path: Union[str, Path], model: SvmModel) -> None:
    d = model.dim
    parts = [
        _MODEL_MAGIC,
        struct.pack("<I", d),
        struct.pack("<d", model.reg),
        model.mean.astype("<f8").tobytes(),
        model.std.astype("<f8").tobytes(),
        model.weights.astype("<f8").tobytes(),
        struct.pack("<d", model.bias),
    ]
    atomic_write(path, b"".join(parts))


def load_svm_model(path: Union[str, Path]) -> SvmModel:
    data = Path(path).read_bytes()
    if len(data) < 20 or data[:8] != _MODEL_MAGIC:
        raise ValueError("not a model file (bad magic)")
    (d,) = struct.unpack_from("<I", data, 8)
    (reg,) = struct.unpack_from("<d", data, 12)
    expected = 20 + 8 * (3 * d + 1)
    if len(data) != expected:
        raise ValueError(f"model file length {len(data)} != expected {expected}")
    vecs = np.frombuffer(data, dtype="<f8", count=3 * d, offset=20)
    mean, std, weights = vecs[:d].copy(), vecs[d : 2 * d].copy(), vecs[2 * d :].copy()
    (bias,) = struct.unpack_from("<d", data, 20 + 24 * d)
    return SvmModel(mean=mean, std=std, weights=weights, bias=float(bias), reg=float(reg))


# --- config -----------------------------------------------------------------


def load_config(path: Union[str, Path]) -> dict[str, str]:
    """Flat key=value lines; blank lines and '#' comments are skipped."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            if not key:
                raise ValueError(f"line {lineno}: empty key")
            out[key] = value.strip()
    return out


def coerce_config_value(value: str):
    """int, then float, then bool, else the raw string."""
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    return value


def write_outlier_report(path: Union[str, Path], report: OutlierReport) -> None:
    atomic_write(path, format_outlier_report(report))
