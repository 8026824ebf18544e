"""Iterative self-training: train a selector on annotated poses, pick
trustworthy candidate poses for the unannotated images, fold them back in
as annotations, and repeat. Three schemes:

  semi:  one shared selector over unlabeled images;
  weak:  one selector per action over action-labeled images;
  weakC: weak, plus cluster-based recovery over what the selectors rejected.

Acceptance is append-only within a run and capped at max_iterations
(default 2, more invites drift toward the selector's own mistakes).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dpmm import DpmmConfig, recover_poses
from .features import relational_feature
from .metrics import MetricsReport, selection_stats
from .skeleton import ActionLabel, CandidatePose, DatasetSplit, Skeleton, validate_split
from .svm import SvmModel, TrainSet, mine_negatives, select, synthesize_positives, train

__all__ = [
    "Scheme",
    "PipelineConfig",
    "AcceptedPose",
    "IterationState",
    "specialize_models",
    "run_iteration",
    "stop_check",
    "run_pipeline",
    "write_iteration_files",
    "read_candidate_dir",
]


class Scheme(Enum):
    SEMI = "semi"
    WEAK = "weak"
    WEAKC = "weakC"

    @classmethod
    def parse(cls, name: str) -> "Scheme":
        for s in cls:
            if s.value.lower() == name.strip().lower():
                return s
        raise ValueError(f"unknown scheme: {name!r}")


@dataclass(frozen=True)
class PipelineConfig:
    scheme: Scheme = Scheme.WEAK
    max_iterations: int = 2
    eps: float = 0.7  # jitter radius for synthesized positives, PCP units
    n_synth: int = 10  # synthesized positives per annotation
    margin: float = 0.0  # selector acceptance margin
    reg: float = 1.0
    tol: float = 1e-3
    max_iter: Optional[int] = 100
    max_negatives: int = 256  # evenly thinned mined-negative cap per round
    recover_per_image: int = 3  # best candidates per abstained image fed to clustering
    min_action_annotations: int = 5  # below this an action uses the general model
    dpmm: DpmmConfig = field(default_factory=DpmmConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.n_synth < 0 or self.eps < 0:
            raise ValueError("n_synth and eps must be non-negative")
        if self.max_negatives < 1:
            raise ValueError("max_negatives must be >= 1")


@dataclass(frozen=True)
class AcceptedPose:
    image_id: str
    skeleton: Skeleton
    action: ActionLabel
    provenance: str  # "svm" | "cluster"


@dataclass(frozen=True)
class IterationState:
    iteration: int = 0
    accepted: tuple[AcceptedPose, ...] = ()
    models: dict[ActionLabel, SvmModel] = field(default_factory=dict)
    general_model: Optional[SvmModel] = None
    reports: tuple[MetricsReport, ...] = ()

    def accepted_ids(self) -> set[str]:
        return {a.image_id for a in self.accepted}


def specialize_models(
    positives_by_action: dict[ActionLabel, list[np.ndarray]],
    negatives: Sequence[np.ndarray],
    annotation_counts: dict[ActionLabel, int],
    reg: float = 1.0,
    tol: float = 1e-4,
    max_iter: Optional[int] = None,
    min_annotations: int = 5,
) -> tuple[SvmModel, dict[ActionLabel, SvmModel]]:
    """General selector from the pooled positives, plus one per action.

    An action's selector retrains on its own positives against the shared
    negatives; actions with fewer than min_annotations annotations reuse
    the general model.
    """
    pooled = [f for feats in positives_by_action.values() for f in feats]
    if not pooled:
        raise ValueError("no positive features")
    general = train(
        TrainSet.from_parts(pooled, list(negatives)), reg=reg, tol=tol, max_iter=max_iter
    )
    models: dict[ActionLabel, SvmModel] = {}
    for action, feats in positives_by_action.items():
        if annotation_counts.get(action, 0) < min_annotations or not feats:
            models[action] = general
        elif action is ActionLabel.GENERAL:
            models[action] = general
        else:
            models[action] = train(
                TrainSet.from_parts(feats, list(negatives)),
                reg=reg,
                tol=tol,
                max_iter=max_iter,
            )
    return general, models


def _candidate_features(cands: Sequence[CandidatePose]) -> list[np.ndarray]:
    return [relational_feature(c.skeleton, normalize=True) for c in cands]


def run_iteration(
    state: IterationState,
    split: DatasetSplit,
    candidates_in: dict[str, Sequence[CandidatePose]],
    cfg: PipelineConfig,
    gt: Optional[dict[str, Skeleton]] = None,
) -> IterationState:
    """One training-selection round; returns the successor state.

    candidates_in maps image ids to candidate lists and must cover the
    background images (their detections are the negative pool). Target
    images are the non-background, non-annotated ids; under weak/weakC each
    target must carry an action label in the split.
    """
    it = state.iteration + 1
    rng = np.random.default_rng([cfg.seed, it])
    fs_ids = set(split.fs_ids())
    bg_ids = set(split.backgrounds)
    accepted_ids = state.accepted_ids()
    ws_action = split.ws_actions()

    targets = [i for i in sorted(candidates_in) if i not in bg_ids and i not in fs_ids]
    if cfg.scheme in (Scheme.WEAK, Scheme.WEAKC):
        for i in targets:
            if i not in ws_action:
                raise ValueError(f"missing action grouping for image {i!r}")

    # positive pool: annotations plus previously accepted poses, jittered
    annotations: list[tuple[Skeleton, ActionLabel]] = [
        (e.skeleton, e.action) for e in split.fs
    ] + [(a.skeleton, a.action) for a in state.accepted]
    positives_by_action: dict[ActionLabel, list[np.ndarray]] = {}
    counts: dict[ActionLabel, int] = {}
    for skel, action in annotations:
        feats = positives_by_action.setdefault(action, [])
        counts[action] = counts.get(action, 0) + 1
        feats.append(relational_feature(skel, normalize=True))
        for jittered in synthesize_positives(skel, cfg.n_synth, cfg.eps, rng):
            feats.append(relational_feature(jittered, normalize=True))

    bg_cands = [c for i in split.backgrounds for c in candidates_in.get(i, ())]
    mined = mine_negatives(bg_cands, split.backgrounds)
    if len(mined) > cfg.max_negatives:
        # even thinning keeps coverage across background images deterministic
        idx = np.linspace(0, len(mined) - 1, cfg.max_negatives).round().astype(int)
        mined = [mined[i] for i in idx]
    negatives = [relational_feature(s, normalize=True) for s in mined]

    if cfg.scheme is Scheme.SEMI:
        pooled = [f for feats in positives_by_action.values() for f in feats]
        general = train(
            TrainSet.from_parts(pooled, negatives),
            reg=cfg.reg,
            tol=cfg.tol,
            max_iter=cfg.max_iter,
        )
        models: dict[ActionLabel, SvmModel] = {}
    else:
        general, models = specialize_models(
            positives_by_action,
            negatives,
            counts,
            reg=cfg.reg,
            tol=cfg.tol,
            max_iter=cfg.max_iter,
            min_annotations=cfg.min_action_annotations,
        )

    feats_by_image = {i: _candidate_features(candidates_in[i]) for i in targets}
    selected: dict[str, CandidatePose] = {}
    for i in targets:
        cands = list(candidates_in[i])
        if not cands:
            continue
        model = general if cfg.scheme is Scheme.SEMI else models.get(ws_action[i], general)
        pick = select(model, list(zip(cands, feats_by_image[i])), cfg.margin)
        if pick is not None:
            selected[i] = pick

    new_accepted = list(state.accepted)
    fresh: dict[str, CandidatePose] = {}
    for i in targets:
        pick = selected.get(i)
        if pick is None or i in accepted_ids:
            continue
        action = ws_action.get(i, pick.action or ActionLabel.GENERAL)
        new_accepted.append(AcceptedPose(i, pick.skeleton, action, "svm"))
        fresh[i] = pick

    if cfg.scheme is Scheme.WEAKC:
        # second chance for images the selector left empty: their best few
        # candidates are clustered per action and plausible ones recovered
        by_action: dict[ActionLabel, list[tuple[CandidatePose, np.ndarray]]] = {}
        for i in targets:
            if i in selected or i in accepted_ids:
                continue  # the selector already spoke for this image
            pool = sorted(
                zip(candidates_in[i], feats_by_image[i]),
                key=lambda cf: -cf[0].score,
            )[: cfg.recover_per_image]
            by_action.setdefault(ws_action[i], []).extend(pool)
        for ai, action in enumerate(sorted(by_action, key=lambda a: a.value)):
            seed = int(np.random.SeedSequence([cfg.seed, it, ai]).generate_state(1)[0])
            dp = replace(cfg.dpmm, seed=seed)
            for cand in recover_poses(by_action[action], dp):
                i = cand.image_id
                if i in selected or i in accepted_ids or i in fresh:
                    continue  # selector wins conflicts; acceptance is append-only
                new_accepted.append(AcceptedPose(i, cand.skeleton, action, "cluster"))
                fresh[i] = cand
                selected[i] = cand

    reports = state.reports
    if gt is not None:
        ws_truth = [(i, gt.get(i)) for i in targets]
        report = selection_stats(
            ws_truth,
            {i: list(candidates_in[i]) for i in targets},
            _carried_selected(selected, state, targets, candidates_in),
            cfg.eps,
            actions={i: ws_action[i] for i in targets if i in ws_action},
        )
        reports = reports + (report,)

    return IterationState(
        iteration=it,
        accepted=tuple(new_accepted),
        models=models,
        general_model=general,
        reports=reports,
    )


def _carried_selected(
    selected: dict[str, CandidatePose],
    state: IterationState,
    targets: Sequence[str],
    candidates_in: dict[str, Sequence[CandidatePose]],
) -> dict[str, CandidatePose]:
    """This iteration's picks plus earlier acceptances, as selection output."""
    out = dict(selected)
    target_set = set(targets)
    for a in state.accepted:
        if a.image_id in target_set and a.image_id not in out:
            out[a.image_id] = CandidatePose(
                skeleton=a.skeleton, score=0.0, image_id=a.image_id, action=a.action
            )
    return out


def stop_check(prev: IterationState, cur: IterationState, cfg: PipelineConfig) -> bool:
    """Stop when an iteration accepted nothing new, or at the cap."""
    no_new = cur.accepted_ids() <= prev.accepted_ids()
    return no_new or cur.iteration >= cfg.max_iterations


def write_iteration_files(
    exchange_dir: Path,
    state: IterationState,
    split: DatasetSplit,
    cfg: PipelineConfig,
) -> None:
    """Emit annotations_iter<t>.jsonl and report_iter<t>.txt for one state."""
    from .fileio import PoseRecord, atomic_write, write_pose_records

    t = state.iteration
    records = [
        PoseRecord(e.image_id, e.skeleton.keypoints, e.action, provenance="fs")
        for e in split.fs
    ] + [
        PoseRecord(a.image_id, a.skeleton.keypoints, a.action, provenance=a.provenance)
        for a in state.accepted
    ]
    write_pose_records(exchange_dir / f"annotations_iter{t}.jsonl", records)

    by_prov: dict[str, int] = {}
    by_action: dict[str, int] = {}
    for a in state.accepted:
        by_prov[a.provenance] = by_prov.get(a.provenance, 0) + 1
        by_action[a.action.value] = by_action.get(a.action.value, 0) + 1
    lines = [
        f"iteration {t} scheme {cfg.scheme.value}",
        f"accepted_total {len(state.accepted)}",
        "accepted_by_provenance "
        + (",".join(f"{k}={v}" for k, v in sorted(by_prov.items())) or "-"),
        "accepted_by_action "
        + (",".join(f"{k}={v}" for k, v in sorted(by_action.items())) or "-"),
    ]
    if state.reports:
        r = state.reports[-1]
        atp, stp, atp_stp, cp_atp = r.counts
        lines.append(f"counts atp={atp} stp={stp} atp_stp={atp_stp} cp_atp={cp_atp}")
        if r.detected_tp_rate is not None:
            lines.append(f"detected_tp_rate {r.detected_tp_rate:.4f}")
        if r.selected_tp_rate is not None:
            lines.append(f"selected_tp_rate {r.selected_tp_rate:.4f}")
        if r.precision is not None:
            lines.append(f"precision {r.precision:.4f}")
        if r.recall is not None:
            lines.append(f"recall {r.recall:.4f}")
    atomic_write(exchange_dir / f"report_iter{t}.txt", "\n".join(lines) + "\n")


def read_candidate_dir(path: Path) -> dict[str, list[CandidatePose]]:
    """Ingest refreshed candidates: one <image_id>.jsonl per image."""
    from .fileio import read_pose_records

    out: dict[str, list[CandidatePose]] = {}
    for f in sorted(path.glob("*.jsonl")):
        image_id = f.stem
        cands = []
        for rec in read_pose_records(f):
            cands.append(
                CandidatePose(
                    skeleton=rec.skeleton(),
                    score=rec.score if rec.score is not None else 0.0,
                    image_id=image_id,
                    action=rec.action,
                )
            )
        out[image_id] = cands
    return out


def run_pipeline(
    split: DatasetSplit,
    candidates_in: dict[str, Sequence[CandidatePose]],
    cfg: PipelineConfig,
    exchange_dir: Optional[Path] = None,
    gt: Optional[dict[str, Skeleton]] = None,
) -> list[IterationState]:
    """Drive run_iteration until stop_check fires.

    When exchange_dir is given, each iteration writes its annotation and
    report files there, and a candidates_iter<t>/ directory, if present, is
    ingested before iteration t; otherwise candidates are replayed as-is.
    """
    violations = validate_split(split)
    if violations:
        raise ValueError(f"invalid split: {violations[0].message}")
    if exchange_dir is not None:
        exchange_dir.mkdir(parents=True, exist_ok=True)
    states = [IterationState()]
    cands = candidates_in
    while True:
        t = states[-1].iteration + 1
        if exchange_dir is not None:
            refresh = exchange_dir / f"candidates_iter{t}"
            if refresh.is_dir():
                incoming = read_candidate_dir(refresh)
                cands = {**cands, **incoming}
        new = run_iteration(states[-1], split, cands, cfg, gt=gt)
        if exchange_dir is not None:
            write_iteration_files(exchange_dir, new, split, cfg)
        prev = states[-1]
        states.append(new)
        if stop_check(prev, new, cfg):
            break
    return states
