"""Command-line front end.

Exit codes: 0 success, 1 usage errors, 2 data/processing errors.
Every subcommand takes --seed and --config; a config file holds flat
key=value lines whose keys are the long option names (dashes or
underscores). Explicit flags beat config values, which beat defaults.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import fileio
from .dpmm import DpmmConfig, detect_outliers, gibbs_cluster, sample_partitions
from .features import HogConfig, pr_feature, relational_feature
from .heatmaps import CandidateGenConfig, enumerate_candidates
from .metrics import ReferenceLength, format_pck_table, pck_report
from .pipeline import PipelineConfig, Scheme, run_pipeline
from .skeleton import (
    ActionLabel,
    CandidatePose,
    DatasetSplit,
    FsExample,
    JointId,
    Skeleton,
    WsExample,
)
from .svm import TrainSet, select, synthesize_positives, train
from .synth import SynthConfig, synth_corpus


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        raise _UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    p = _Parser(prog="poseboot", description=__doc__)
    sub = p.add_subparsers(dest="command", metavar="COMMAND")

    def common(sp):
        sp.add_argument("--seed", type=int, default=None, help="RNG seed")
        sp.add_argument("--config", type=Path, default=None, help="key=value config file")

    sp = sub.add_parser("synth", help="generate a synthetic corpus")
    common(sp)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--actions", type=int, default=None)
    sp.add_argument("--poses", type=int, default=None)
    sp.add_argument("--noise", type=float, default=None)
    sp.add_argument("--outlier-rate", type=float, default=None)
    sp.add_argument("--ws-fraction", type=float, default=None)
    sp.add_argument("--backgrounds", type=int, default=None)

    sp = sub.add_parser("features", help="pose records to feature matrix (.npz)")
    common(sp)
    sp.add_argument("--poses", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--raw", action="store_true", help="skip torso normalization")
    sp.add_argument("--image", type=Path, default=None, help="PGM for appearance")

    sp = sub.add_parser("train-svm", help="train a selector from pose records")
    common(sp)
    sp.add_argument("--positives", type=Path, required=True)
    sp.add_argument("--negatives", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--reg", type=float, default=None)
    sp.add_argument("--tol", type=float, default=None)
    sp.add_argument("--synth", type=int, default=None, help="jittered copies per positive")
    sp.add_argument("--eps", type=float, default=None)

    sp = sub.add_parser("candidates", help="heatmaps to candidate pose records")
    common(sp)
    sp.add_argument("--heatmaps", type=Path, required=True, help=".hm file or directory")
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--threshold", type=float, default=None)
    sp.add_argument("--top-k", type=int, default=None)
    sp.add_argument("--beam", type=int, default=None)
    sp.add_argument("--nms-radius", type=float, default=None)

    sp = sub.add_parser("select", help="pick at most one candidate per image")
    common(sp)
    sp.add_argument("--model", type=Path, required=True)
    sp.add_argument("--candidates", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--margin", type=float, default=None)

    sp = sub.add_parser("cluster", help="partition pose records by feature clusters")
    common(sp)
    sp.add_argument("--poses", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--pca-dim", type=int, default=None)
    sp.add_argument("--iters", type=int, default=None)
    sp.add_argument("--burn-in", type=int, default=None)

    sp = sub.add_parser("outliers", help="flag implausible poses among records")
    common(sp)
    sp.add_argument("--poses", type=Path, required=True)
    sp.add_argument("--out", type=Path, required=True)
    sp.add_argument("--alpha", type=float, default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--pca-dim", type=int, default=None)
    sp.add_argument("--small-max", type=int, default=None)
    sp.add_argument("--iters", type=int, default=None)
    sp.add_argument("--burn-in", type=int, default=None)

    sp = sub.add_parser("pipeline", help="run the self-training loop on a corpus")
    common(sp)
    sp.add_argument("--corpus", type=Path, required=True)
    sp.add_argument("--exchange", type=Path, required=True)
    sp.add_argument("--scheme", type=str, required=True, help="semi | weak | weakC")
    sp.add_argument("--iterations", type=int, default=None)
    sp.add_argument("--margin", type=float, default=None)
    sp.add_argument("--reg", type=float, default=None)
    sp.add_argument("--eps", type=float, default=None)
    sp.add_argument("--n-synth", type=int, default=None)
    sp.add_argument("--gibbs-iters", type=int, default=None)
    sp.add_argument("--burn-in", type=int, default=None)
    sp.add_argument("--audit", action="store_true", help="score against corpus truth")

    sp = sub.add_parser("eval", help="compare estimated poses against ground truth")
    common(sp)
    sp.add_argument("--gt", type=Path, required=True)
    sp.add_argument("--est", type=Path, required=True)
    sp.add_argument("--metric", choices=("pck", "pckh"), default="pck")
    sp.add_argument("--frac", type=float, default=None)
    return p


def _merged(args: argparse.Namespace) -> dict:
    """Config-file values fill in for options left at None."""
    cfg: dict[str, str] = {}
    if args.config is not None:
        cfg = fileio.load_config(args.config)
    out = {}
    for key, val in vars(args).items():
        if val is None:
            for alias in (key, key.replace("_", "-")):
                if alias in cfg:
                    val = fileio.coerce_config_value(cfg[alias])
                    break
        out[key] = val
    unknown = set(cfg) - {
        k.replace("_", "-") for k in vars(args)
    } - set(vars(args))
    if unknown:
        raise ValueError(f"unknown config key {sorted(unknown)[0]!r}")
    return out


def _pick(d: dict, key: str, default):
    v = d.get(key)
    return default if v is None else v


# --- corpus layout ------------------------------------------------------------


def _save_corpus(out: Path, corpus) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "heatmaps").mkdir(exist_ok=True)
    split = corpus.split
    manifest = {
        "fs": list(split.fs_ids()),
        "ws": {e.image_id: e.action.value for e in split.ws},
        "us": list(split.us),
        "backgrounds": list(split.backgrounds),
    }
    fileio.atomic_write(out / "split.json", json.dumps(manifest, indent=1) + "\n")
    records = [
        fileio.PoseRecord(i, skel.keypoints, action)
        for i, (skel, action) in corpus.truth.items()
    ]
    fileio.write_pose_records(out / "truth.jsonl", records)
    for image_id, maps in corpus.heatmaps.items():
        fileio.write_heatmaps(
            out / "heatmaps" / f"{image_id}.hm", [maps[j] for j in JointId]
        )


def _load_corpus(corpus_dir: Path):
    manifest = json.loads((corpus_dir / "split.json").read_text())
    records = {r.image_id: r for r in fileio.read_pose_records(corpus_dir / "truth.jsonl")}
    fs = []
    for i in manifest["fs"]:
        rec = records[i]
        if rec.action is None:
            raise ValueError(f"truth record for {i!r} lacks an action")
        fs.append(FsExample(i, rec.skeleton(), rec.action))
    ws = tuple(
        WsExample(i, ActionLabel.parse(a)) for i, a in manifest["ws"].items()
    )
    split = DatasetSplit(
        fs=tuple(fs),
        ws=ws,
        us=tuple(manifest.get("us", ())),
        backgrounds=tuple(manifest.get("backgrounds", ())),
    )
    heatmaps = {}
    for f in sorted((corpus_dir / "heatmaps").glob("*.hm")):
        heatmaps[f.stem] = {h.joint: h for h in fileio.read_heatmaps(f)}
    truth = {i: r.skeleton() for i, r in records.items()}
    return split, truth, heatmaps


# --- subcommands --------------------------------------------------------------


def _cmd_synth(a: dict) -> int:
    cfg = SynthConfig(
        n_actions=_pick(a, "actions", 8),
        poses_per_action=_pick(a, "poses", 50),
        base_noise=_pick(a, "noise", 2.0),
        outlier_rate=_pick(a, "outlier_rate", 0.1),
        seed=_pick(a, "seed", 0),
        ws_fraction=_pick(a, "ws_fraction", 0.5),
        n_backgrounds=_pick(a, "backgrounds", 20),
    )
    corpus = synth_corpus(cfg)
    _save_corpus(a["out"], corpus)
    print(
        f"wrote corpus: {len(corpus.split.fs)} fs, {len(corpus.split.ws)} ws, "
        f"{len(corpus.split.backgrounds)} backgrounds -> {a['out']}"
    )
    return 0


def _cmd_features(a: dict) -> int:
    records = fileio.read_pose_records(a["poses"])
    if not records:
        raise ValueError("no pose records")
    image = fileio.read_pgm(a["image"]) if a.get("image") else None
    feats = []
    for r in records:
        if image is None:
            feats.append(relational_feature(r.skeleton(), normalize=not a["raw"]))
        else:
            feats.append(
                pr_feature(r.skeleton(), image=image, normalize=not a["raw"]).combined()
            )
    ids = np.array([r.image_id for r in records])
    np.savez(a["out"], ids=ids, features=np.vstack(feats))
    print(f"wrote {len(records)} feature vectors of dim {feats[0].shape[0]} -> {a['out']}")
    return 0


def _cmd_train_svm(a: dict) -> int:
    pos_records = fileio.read_pose_records(a["positives"])
    neg_records = fileio.read_pose_records(a["negatives"])
    if not pos_records or not neg_records:
        raise ValueError("need both positive and negative records")
    rng = np.random.default_rng(_pick(a, "seed", 0))
    n_synth = _pick(a, "synth", 0)
    eps = _pick(a, "eps", 0.7)
    positives = []
    for r in pos_records:
        skel = r.skeleton()
        positives.append(relational_feature(skel, normalize=True))
        for s in synthesize_positives(skel, n_synth, eps, rng):
            positives.append(relational_feature(s, normalize=True))
    negatives = [relational_feature(r.skeleton(), normalize=True) for r in neg_records]
    model = train(
        TrainSet.from_parts(positives, negatives),
        reg=_pick(a, "reg", 1.0),
        tol=_pick(a, "tol", 1e-4),
    )
    fileio.save_svm_model(a["out"], model)
    print(
        f"trained on {len(positives)}+{len(negatives)} samples, "
        f"{len(model.objective_history)} epochs, objective "
        f"{model.objective_history[-1]:.6f} -> {a['out']}"
    )
    return 0


def _cmd_candidates(a: dict) -> int:
    cfg = CandidateGenConfig(
        threshold=_pick(a, "threshold", 0.1),
        top_k=_pick(a, "top_k", 3),
        nms_radius=_pick(a, "nms_radius", 1.0),
        beam=_pick(a, "beam", 500),
    )
    src: Path = a["heatmaps"]
    files = sorted(src.glob("*.hm")) if src.is_dir() else [src]
    if not files:
        raise ValueError(f"no heatmap files under {src}")
    records = []
    for f in files:
        maps = {h.joint: h for h in fileio.read_heatmaps(f)}
        for cand in enumerate_candidates(maps, cfg, image_id=f.stem):
            records.append(
                fileio.PoseRecord(
                    cand.image_id, cand.skeleton.keypoints, score=cand.score
                )
            )
    fileio.write_pose_records(a["out"], records)
    print(f"wrote {len(records)} candidates from {len(files)} images -> {a['out']}")
    return 0


def _cmd_select(a: dict) -> int:
    model = fileio.load_svm_model(a["model"])
    records = fileio.read_pose_records(a["candidates"])
    margin = _pick(a, "margin", 0.0)
    by_image: dict[str, list] = {}
    for r in records:
        by_image.setdefault(r.image_id, []).append(r)
    out = []
    for image_id, recs in by_image.items():
        cands = [
            (
                CandidatePose(
                    skeleton=r.skeleton(),
                    score=r.score if r.score is not None else 0.0,
                    image_id=image_id,
                    action=r.action,
                ),
                relational_feature(r.skeleton(), normalize=True),
            )
            for r in recs
        ]
        pick = select(model, cands, margin=margin)
        if pick is not None:
            out.append(
                fileio.PoseRecord(
                    image_id,
                    pick.skeleton.keypoints,
                    pick.action,
                    score=pick.score,
                    provenance="svm",
                )
            )
    fileio.write_pose_records(a["out"], out)
    print(f"selected {len(out)} of {len(by_image)} images -> {a['out']}")
    return 0


def _features_and_scores(path: Path):
    records = fileio.read_pose_records(path)
    if len(records) < 4:
        raise ValueError("too few features")
    X = np.vstack([relational_feature(r.skeleton(), normalize=True) for r in records])
    scores = np.array([r.score if r.score is not None else 0.0 for r in records])
    return records, X, scores


def _dpmm_config(a: dict) -> DpmmConfig:
    return DpmmConfig(
        gamma=_pick(a, "gamma", 1.0),
        alpha=_pick(a, "alpha", 1.0 / 3.0),
        gibbs_iters=_pick(a, "iters", 2000),
        burn_in=_pick(a, "burn_in", 500),
        seed=_pick(a, "seed", 0),
        pca_dim=_pick(a, "pca_dim", 8),
        small_cluster_max=_pick(a, "small_max", 3),
    )


def _project_for_dpmm(X: np.ndarray, cfg: DpmmConfig) -> np.ndarray:
    from .dpmm import project

    if cfg.pca_dim is not None and cfg.pca_dim < X.shape[1]:
        X, _ = project(X, min(cfg.pca_dim, X.shape[0], X.shape[1]))
    return X


def _cmd_cluster(a: dict) -> int:
    _, X, _ = _features_and_scores(a["poses"])
    cfg = _dpmm_config(a)
    X = _project_for_dpmm(X, cfg)
    p = gibbs_cluster(X, cfg)
    sizes = ",".join(str(s) for s in p.sizes())
    text = (
        f"n_clusters {p.n_clusters}\n"
        f"sizes {sizes}\n"
        f"assignments {','.join(str(z) for z in p.assignments)}\n"
    )
    fileio.atomic_write(a["out"], text)
    print(f"clustered {p.n_items} poses into {p.n_clusters} clusters -> {a['out']}")
    return 0


def _cmd_outliers(a: dict) -> int:
    records, X, scores = _features_and_scores(a["poses"])
    cfg = _dpmm_config(a)
    X = _project_for_dpmm(X, cfg)
    p = gibbs_cluster(X, cfg)
    report = detect_outliers(X, scores, p, cfg)
    fileio.write_outlier_report(a["out"], report)
    flagged = [records[i].image_id for i in report.outlier_indices]
    print(
        f"{'flagged' if report.accepted else 'kept all'}: "
        f"{len(report.outlier_indices)} outliers {flagged} -> {a['out']}"
    )
    return 0


def _cmd_pipeline(a: dict) -> int:
    split, truth, heatmaps = _load_corpus(a["corpus"])
    scheme = Scheme.parse(a["scheme"])
    gen = CandidateGenConfig()
    candidates = {
        image_id: enumerate_candidates(maps, gen, image_id=image_id)
        for image_id, maps in heatmaps.items()
    }
    ws_action = split.ws_actions()
    candidates = {
        i: [
            CandidatePose(c.skeleton, c.score, c.image_id, c.stage, ws_action.get(i))
            for c in cands
        ]
        for i, cands in candidates.items()
    }
    dp = DpmmConfig(
        gibbs_iters=_pick(a, "gibbs_iters", 400),
        burn_in=_pick(a, "burn_in", 120),
    )
    cfg = PipelineConfig(
        scheme=scheme,
        max_iterations=_pick(a, "iterations", 2),
        eps=_pick(a, "eps", 0.7),
        n_synth=_pick(a, "n_synth", 10),
        margin=_pick(a, "margin", 0.0),
        reg=_pick(a, "reg", 1.0),
        dpmm=dp,
        seed=_pick(a, "seed", 0),
    )
    gt = truth if a["audit"] else None
    states = run_pipeline(split, candidates, cfg, exchange_dir=a["exchange"], gt=gt)
    prev = 0
    for st in states[1:]:
        total = len(st.accepted)
        line = f"iter {st.iteration} accepted {total} (+{total - prev})"
        if st.reports:
            r = st.reports[-1]
            if r.precision is not None:
                line += f" precision {r.precision:.4f}"
        print(line)
        prev = total
    return 0


def _cmd_eval(a: dict) -> int:
    gt = {r.image_id: r for r in fileio.read_pose_records(a["gt"])}
    est = {r.image_id: r for r in fileio.read_pose_records(a["est"])}
    shared = [i for i in est if i in gt]
    if not shared:
        raise ValueError("no shared image ids between gt and est")
    if a["metric"] == "pck":
        ref, frac = ReferenceLength.BBOX_MAX_SIDE, _pick(a, "frac", 0.2)
        title = f"PCK@{frac}"
    else:
        ref, frac = ReferenceLength.HEAD_SEGMENT, _pick(a, "frac", 0.5)
        title = f"PCKh@{frac}"
    pairs = [(gt[i].skeleton(), est[i].skeleton()) for i in shared]
    actions = [gt[i].action for i in shared]
    has_actions = all(x is not None for x in actions)
    report = pck_report(pairs, frac, ref, actions=actions if has_actions else None)
    print(format_pck_table(report, title=title))
    if report.per_action:
        for action, rate in report.per_action.items():
            print(f"{action.value}: {100.0 * rate:.1f}")
    print(f"mean {100.0 * report.mean_pck:.1f} over {len(shared)} images")
    return 0


_DISPATCH = {
    "synth": _cmd_synth,
    "features": _cmd_features,
    "train-svm": _cmd_train_svm,
    "candidates": _cmd_candidates,
    "select": _cmd_select,
    "cluster": _cmd_cluster,
    "outliers": _cmd_outliers,
    "pipeline": _cmd_pipeline,
    "eval": _cmd_eval,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("poseboot: a subcommand is required (see --help)")
        merged = _merged(args)
        return _DISPATCH[args.command](merged)
    except _UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
