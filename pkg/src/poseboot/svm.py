"""Linear pose selector: L2-regularized hinge loss trained by dual
coordinate descent, plus training-set construction from annotations
(jittered positives) and background detections (negatives).

Objective: 0.5*||w||^2 + reg * sum_i max(0, 1 - y_i (w.x_i + b)).
The bias is carried as a constant-1 feature, so it shares the
regularizer (the usual feature-augmentation approximation). Features are
standardized per dimension before training; the transform is stored in
the model and applied inside decision().
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .skeleton import LIMBS, N_JOINTS, CandidatePose, Skeleton

__all__ = [
    "TrainSet",
    "SvmModel",
    "synthesize_positives",
    "mine_negatives",
    "train",
    "select",
]


@dataclass(frozen=True)
class TrainSet:
    """Feature matrix with +/-1 labels; both labels must be present."""

    features: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,) values in {-1, +1}

    def __post_init__(self) -> None:
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.float64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("features must be (n, d) aligned with (n,) labels")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @classmethod
    def from_parts(cls, positives: Sequence[np.ndarray], negatives: Sequence[np.ndarray]) -> "TrainSet":
        X = np.vstack([np.asarray(v, dtype=np.float64) for v in (*positives, *negatives)])
        y = np.concatenate([np.ones(len(positives)), -np.ones(len(negatives))])
        return cls(X, y)


@dataclass(frozen=True)
class SvmModel:
    """Trained selector: standardization plus weights in standardized space."""

    mean: np.ndarray  # (d,)
    std: np.ndarray  # (d,), zero-variance dims stored as 1
    weights: np.ndarray  # (d,)
    bias: float
    reg: float
    objective_history: tuple[float, ...] = ()  # solver primal per epoch
    gap_history: tuple[float, ...] = ()

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    def decision(self, feature: np.ndarray) -> float:
        x = np.asarray(feature, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValueError(f"feature has dim {x.shape}, model expects ({self.dim},)")
        return float(self.weights @ ((x - self.mean) / self.std) + self.bias)

    def decisions(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"features have dim {X.shape}, model expects (*, {self.dim})")
        return (X - self.mean) / self.std @ self.weights + self.bias

    def effective_weights(self) -> np.ndarray:
        """Weights acting on raw (unstandardized) features."""
        return self.weights / self.std

    def effective_bias(self) -> float:
        return float(self.bias - np.sum(self.weights * self.mean / self.std))


def _incident_limb_lengths(skel: Skeleton) -> np.ndarray:
    """Min annotated length over limbs touching each joint, shape (14,)."""
    lengths = skel.limb_lengths()
    out = np.full(N_JOINTS, np.inf)
    for li, (i, j) in enumerate(LIMBS):
        out[int(i)] = min(out[int(i)], lengths[li])
        out[int(j)] = min(out[int(j)], lengths[li])
    return out


def synthesize_positives(
    annotation: Skeleton,
    n: int,
    eps: float,
    rng: np.random.Generator,
) -> list[Skeleton]:
    """n jittered copies of an annotation, each correct at PCP threshold eps.

    Every joint moves once, uniformly inside a disk whose radius is eps times
    the shortest annotated limb incident to that joint, so each limb keeps
    both endpoints within eps of its own length. Joints on zero-length limbs
    stay put.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    radii = eps * _incident_limb_lengths(annotation)
    radii[~np.isfinite(radii)] = 0.0
    out = []
    for _ in range(n):
        theta = rng.random(N_JOINTS) * 2.0 * np.pi
        # u in [0, 1) keeps the draw strictly inside the disk
        r = radii * np.sqrt(rng.random(N_JOINTS))
        delta = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
        out.append(Skeleton(annotation.keypoints + delta))
    return out


def mine_negatives(
    candidates: Sequence[CandidatePose],
    background_ids: Iterable[str],
) -> list[Skeleton]:
    """Negatives are detections on background images: false by definition.

    Raises when any candidate comes from an image outside background_ids.
    """
    allowed = set(background_ids)
    out = []
    for cand in candidates:
        if cand.image_id not in allowed:
            raise ValueError(f"non-background source: image {cand.image_id!r}")
        out.append(cand.skeleton)
    return out


def train(
    ts: TrainSet,
    reg: float = 1.0,
    tol: float = 1e-4,
    max_iter: Optional[int] = None,
    standardize: bool = True,
) -> SvmModel:
    """Dual coordinate descent on the box-constrained hinge dual.

    Samples are visited in fixed cyclic order, so the result is
    deterministic. Stops when the primal-dual gap falls to tol or after
    max_iter epochs (default 1000).
    """
    if reg <= 0:
        raise ValueError("reg must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    y = ts.labels
    n, d = ts.features.shape
    if np.all(y == y[0]):
        raise ValueError("degenerate training set: only one class present")
    if max_iter is None:
        max_iter = 1000
    if standardize:
        mean = ts.features.mean(axis=0)
        std = ts.features.std(axis=0)
        std[std == 0.0] = 1.0
    else:
        mean = np.zeros(d)
        std = np.ones(d)
    X = np.concatenate([(ts.features - mean) / std, np.ones((n, 1))], axis=1)

    C = reg
    q_diag = np.einsum("ij,ij->i", X, X)  # constant-1 column keeps this >= 1
    alpha = np.zeros(n)
    w = np.zeros(d + 1)
    obj_hist: list[float] = []
    gap_hist: list[float] = []
    for _ in range(max_iter):
        for i in range(n):
            g = y[i] * (w @ X[i]) - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = min(g, 0.0)
            elif a == C:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg != 0.0:
                new_a = min(max(a - g / q_diag[i], 0.0), C)
                if new_a != a:
                    w += (new_a - a) * y[i] * X[i]
                    alpha[i] = new_a
        margins = y * (X @ w)
        primal = 0.5 * (w @ w) + C * np.sum(np.maximum(0.0, 1.0 - margins))
        dual = np.sum(alpha) - 0.5 * (w @ w)
        obj_hist.append(float(primal))
        gap_hist.append(float(primal - dual))
        if primal - dual <= tol:
            break
    return SvmModel(
        mean=mean,
        std=std,
        weights=w[:d].copy(),
        bias=float(w[d]),
        reg=reg,
        objective_history=tuple(obj_hist),
        gap_history=tuple(gap_hist),
    )


def select(
    model: SvmModel,
    candidates: Sequence[tuple[CandidatePose, np.ndarray]],
    margin: float = 0.0,
) -> Optional[CandidatePose]:
    """Pick at most one candidate: decision strictly above margin, best score.

    Ties on score keep the earliest candidate. Returns None when nothing
    clears the margin.
    """
    best: Optional[CandidatePose] = None
    for cand, feat in candidates:
        if model.decision(feat) > margin:
            if best is None or cand.score > best.score:
                best = cand
    return best
