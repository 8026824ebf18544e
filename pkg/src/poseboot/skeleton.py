"""Core pose types: joints, skeletons, candidates, actions, dataset splits."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "JointId",
    "N_JOINTS",
    "LIMBS",
    "N_LIMBS",
    "Skeleton",
    "CandidatePose",
    "ActionLabel",
    "FsExample",
    "WsExample",
    "DatasetSplit",
    "SplitViolation",
    "validate_split",
]


class JointId(IntEnum):
    """Keypoint indices, 14-joint convention."""

    HEAD = 0
    NECK = 1
    L_SHOULDER = 2
    R_SHOULDER = 3
    L_ELBOW = 4
    R_ELBOW = 5
    L_WRIST = 6
    R_WRIST = 7
    L_HIP = 8
    R_HIP = 9
    L_KNEE = 10
    R_KNEE = 11
    L_ANKLE = 12
    R_ANKLE = 13


N_JOINTS = 14

# 13 edges forming a connected tree over the 14 joints. The torso is the two
# neck-hip edges, so torso length stays defined as neck to hip midpoint.
LIMBS: tuple[tuple[JointId, JointId], ...] = (
    (JointId.HEAD, JointId.NECK),
    (JointId.NECK, JointId.L_SHOULDER),
    (JointId.NECK, JointId.R_SHOULDER),
    (JointId.L_SHOULDER, JointId.L_ELBOW),
    (JointId.R_SHOULDER, JointId.R_ELBOW),
    (JointId.L_ELBOW, JointId.L_WRIST),
    (JointId.R_ELBOW, JointId.R_WRIST),
    (JointId.NECK, JointId.L_HIP),
    (JointId.NECK, JointId.R_HIP),
    (JointId.L_HIP, JointId.L_KNEE),
    (JointId.R_HIP, JointId.R_KNEE),
    (JointId.L_KNEE, JointId.L_ANKLE),
    (JointId.R_KNEE, JointId.R_ANKLE),
)

N_LIMBS = len(LIMBS)


@dataclass(frozen=True)
class Skeleton:
    """A 2-D pose: one (x, y) position per joint.

    Coordinates may be non-finite; validity is checked by validate_split /
    is_valid, not at construction, so bad data can be loaded and reported.
    """

    keypoints: np.ndarray  # (14, 2) float64

    def __post_init__(self) -> None:
        kp = np.asarray(self.keypoints, dtype=np.float64)
        if kp.shape != (N_JOINTS, 2):
            raise ValueError(f"keypoints must have shape ({N_JOINTS}, 2), got {kp.shape}")
        kp = kp.copy()
        kp.setflags(write=False)
        object.__setattr__(self, "keypoints", kp)

    def is_valid(self) -> bool:
        return bool(np.all(np.isfinite(self.keypoints)))

    def joint(self, j: JointId) -> np.ndarray:
        return self.keypoints[int(j)]

    def limb_lengths(self) -> np.ndarray:
        """Euclidean length of each edge in LIMBS order, shape (13,)."""
        a = self.keypoints[[int(i) for i, _ in LIMBS]]
        b = self.keypoints[[int(j) for _, j in LIMBS]]
        return np.linalg.norm(a - b, axis=1)

    def torso_length(self) -> float:
        hip_mid = 0.5 * (self.joint(JointId.L_HIP) + self.joint(JointId.R_HIP))
        return float(np.linalg.norm(self.joint(JointId.NECK) - hip_mid))


@dataclass(frozen=True)
class CandidatePose:
    """One pose hypothesis for one image."""

    skeleton: Skeleton
    score: float
    image_id: str
    stage: int = 1  # inference stage the hypothesis came from, >= 1
    action: Optional["ActionLabel"] = None

    def __post_init__(self) -> None:
        if not np.isfinite(self.score):
            raise ValueError("candidate score must be finite")
        if self.stage < 1:
            raise ValueError("stage must be >= 1")


class ActionLabel(Enum):
    ATHLETICS = "athletics"
    BADMINTON = "badminton"
    BASEBALL = "baseball"
    GYMNASTICS = "gymnastics"
    SOCCER = "soccer"
    TENNIS = "tennis"
    VOLLEYBALL = "volleyball"
    GENERAL = "general"

    @classmethod
    def parse(cls, name: str) -> "ActionLabel":
        s = name.strip().lower()
        if s == "parkour":  # folded into gymnastics
            return cls.GYMNASTICS
        for a in cls:
            if a.value == s:
                return a
        raise ValueError(f"unknown action label: {name!r}")


@dataclass(frozen=True)
class FsExample:
    """Fully supervised example: pose annotation plus action label."""

    image_id: str
    skeleton: Skeleton
    action: ActionLabel


@dataclass(frozen=True)
class WsExample:
    """Weakly supervised example: action label only."""

    image_id: str
    action: ActionLabel


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint image sets: annotated, action-only, unlabeled, background."""

    fs: tuple[FsExample, ...] = ()
    ws: tuple[WsExample, ...] = ()
    us: tuple[str, ...] = ()
    backgrounds: tuple[str, ...] = ()

    def fs_ids(self) -> tuple[str, ...]:
        return tuple(e.image_id for e in self.fs)

    def ws_ids(self) -> tuple[str, ...]:
        return tuple(e.image_id for e in self.ws)

    def ws_actions(self) -> dict[str, ActionLabel]:
        return {e.image_id: e.action for e in self.ws}


@dataclass(frozen=True)
class SplitViolation:
    kind: str  # "overlap" | "duplicate" | "nonfinite"
    message: str
    image_id: str = ""
    joint: Optional[JointId] = None


def validate_split(split: DatasetSplit) -> list[SplitViolation]:
    """Check split invariants; returns an empty list iff the split is clean.

    Checks: the four id sets are pairwise disjoint, no set repeats an id,
    and every FS annotation has finite coordinates.
    """
    out: list[SplitViolation] = []
    sets = {
        "fs": list(split.fs_ids()),
        "ws": list(split.ws_ids()),
        "us": list(split.us),
        "backgrounds": list(split.backgrounds),
    }
    for name, ids in sets.items():
        seen: set[str] = set()
        for i in ids:
            if i in seen:
                out.append(SplitViolation("duplicate", f"image {i!r} appears twice in {name}", i))
            seen.add(i)
    names = list(sets)
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            both = set(sets[names[a]]) & set(sets[names[b]])
            for i in sorted(both):
                out.append(
                    SplitViolation(
                        "overlap",
                        f"image {i!r} is in both {names[a]} and {names[b]}",
                        i,
                    )
                )
    for ex in split.fs:
        bad = ~np.isfinite(ex.skeleton.keypoints)
        if bad.any():
            j = JointId(int(np.argwhere(bad.any(axis=1))[0][0]))
            out.append(
                SplitViolation(
                    "nonfinite",
                    f"annotation for image {ex.image_id!r} has a non-finite "
                    f"coordinate at joint {j.name}",
                    ex.image_id,
                    j,
                )
            )
    return out
