"""Command-line behavior: exit codes, subcommand flows, config merging."""
import json

import numpy as np
import pytest

from poseboot import cli, fileio
from poseboot.features import HogConfig
from poseboot.skeleton import ActionLabel
from poseboot.synth import action_template


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    rc = cli.main(
        ["synth", "--out", str(d), "--actions", "2", "--poses", "6",
         "--backgrounds", "3", "--outlier-rate", "0.3", "--seed", "5"]
    )
    assert rc == 0
    return d


def write_junk_poses(path, rng, n, score=0.3, prefix="junk"):
    recs = [
        fileio.PoseRecord(
            f"{prefix}_{i:03d}", rng.uniform(10, 150, (14, 2)), score=score
        )
        for i in range(n)
    ]
    fileio.write_pose_records(path, recs)
    return recs


def write_template_poses(path, rng, n, action_index=0, score=0.9, prefix="good"):
    t = action_template(action_index)
    recs = [
        fileio.PoseRecord(
            f"{prefix}_{i:03d}",
            t.keypoints + rng.normal(0, 2.0, (14, 2)),
            ActionLabel.TENNIS,
            score=score,
        )
        for i in range(n)
    ]
    fileio.write_pose_records(path, recs)
    return recs


class TestExitCodes:
    def test_no_subcommand_is_usage_error(self, capsys):
        assert cli.main([]) == 1
        assert "subcommand" in capsys.readouterr().err

    def test_unknown_flag_is_usage_error(self, capsys):
        assert cli.main(["synth", "--out", "x", "--bogus"]) == 1
        assert "bogus" in capsys.readouterr().err

    def test_missing_required_flag_is_usage_error(self):
        assert cli.main(["synth"]) == 1

    def test_missing_input_file_is_data_error(self, tmp_path, capsys):
        rc = cli.main(
            ["features", "--poses", str(tmp_path / "nope.jsonl"),
             "--out", str(tmp_path / "o.npz")]
        )
        assert rc == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_corrupt_input_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{broken\n")
        rc = cli.main(
            ["features", "--poses", str(bad), "--out", str(tmp_path / "o.npz")]
        )
        assert rc == 2
        assert "line 1" in capsys.readouterr().err


class TestSynth:
    def test_writes_corpus_layout(self, corpus_dir, capsys):
        manifest = json.loads((corpus_dir / "split.json").read_text())
        assert set(manifest) == {"fs", "ws", "us", "backgrounds"}
        assert len(manifest["fs"]) == 2 * 3  # round(6 * 0.5) fs per action
        assert len(manifest["ws"]) == 2 * 3
        assert len(manifest["backgrounds"]) == 3
        truth = fileio.read_pose_records(corpus_dir / "truth.jsonl")
        assert len(truth) == 12
        hm_files = sorted((corpus_dir / "heatmaps").glob("*.hm"))
        assert len(hm_files) == 12 + 3

    def test_deterministic_output(self, tmp_path):
        args = ["synth", "--actions", "1", "--poses", "4", "--backgrounds", "2",
                "--seed", "9"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert cli.main(args + ["--out", str(a)]) == 0
        assert cli.main(args + ["--out", str(b)]) == 0
        assert (a / "split.json").read_bytes() == (b / "split.json").read_bytes()
        assert (a / "truth.jsonl").read_bytes() == (b / "truth.jsonl").read_bytes()
        for f in sorted((a / "heatmaps").iterdir()):
            assert f.read_bytes() == (b / "heatmaps" / f.name).read_bytes()


class TestFeatures:
    def test_relational_matrix(self, corpus_dir, tmp_path, capsys):
        out = tmp_path / "f.npz"
        rc = cli.main(
            ["features", "--poses", str(corpus_dir / "truth.jsonl"), "--out", str(out)]
        )
        assert rc == 0
        data = np.load(out)
        assert data["features"].shape == (12, 1274)
        assert len(data["ids"]) == 12
        assert "dim 1274" in capsys.readouterr().out

    def test_appearance_extends_dim(self, corpus_dir, tmp_path):
        img = tmp_path / "scene.pgm"
        fileio.write_pgm(img, np.linspace(0, 1, 160 * 160).reshape(160, 160))
        out = tmp_path / "f.npz"
        rc = cli.main(
            ["features", "--poses", str(corpus_dir / "truth.jsonl"),
             "--out", str(out), "--image", str(img)]
        )
        assert rc == 0
        dim = 1274 + 14 * HogConfig().length()
        assert np.load(out)["features"].shape == (12, dim)

    def test_raw_skips_normalization(self, corpus_dir, tmp_path):
        norm, raw = tmp_path / "n.npz", tmp_path / "r.npz"
        base = ["features", "--poses", str(corpus_dir / "truth.jsonl")]
        assert cli.main(base + ["--out", str(norm)]) == 0
        assert cli.main(base + ["--out", str(raw), "--raw"]) == 0
        assert not np.allclose(np.load(norm)["features"], np.load(raw)["features"])


class TestSelectionFlow:
    def test_candidates_train_select_eval(self, corpus_dir, tmp_path, rng, capsys):
        cands = tmp_path / "cands.jsonl"
        rc = cli.main(
            ["candidates", "--heatmaps", str(corpus_dir / "heatmaps"),
             "--out", str(cands)]
        )
        assert rc == 0
        cand_recs = fileio.read_pose_records(cands)
        pose_ids = {r.image_id for r in fileio.read_pose_records(corpus_dir / "truth.jsonl")}
        assert pose_ids <= {r.image_id for r in cand_recs}
        assert all(r.score is not None for r in cand_recs)

        negs = tmp_path / "negs.jsonl"
        write_junk_poses(negs, rng, 20)
        model = tmp_path / "sel.svm"
        rc = cli.main(
            ["train-svm", "--positives", str(corpus_dir / "truth.jsonl"),
             "--negatives", str(negs), "--out", str(model),
             "--synth", "3", "--seed", "2"]
        )
        assert rc == 0
        assert "trained on" in capsys.readouterr().out
        fileio.load_svm_model(model)

        picks = tmp_path / "picks.jsonl"
        rc = cli.main(
            ["select", "--model", str(model), "--candidates", str(cands),
             "--out", str(picks)]
        )
        assert rc == 0
        picked = fileio.read_pose_records(picks)
        assert picked, "selector rejected every image"
        assert len({r.image_id for r in picked}) == len(picked)
        # real images should dominate the background detections
        real = [r for r in picked if not r.image_id.startswith("bg_")]
        assert len(real) >= len(picked) - 1

        rc = cli.main(
            ["eval", "--gt", str(corpus_dir / "truth.jsonl"), "--est", str(picks)]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "PCK@0.2" in out and "Head" in out and "Mean" in out

    def test_candidates_single_file(self, corpus_dir, tmp_path):
        hm = sorted((corpus_dir / "heatmaps").glob("*.hm"))[0]
        out = tmp_path / "one.jsonl"
        assert cli.main(["candidates", "--heatmaps", str(hm), "--out", str(out)]) == 0
        recs = fileio.read_pose_records(out)
        assert recs and all(r.image_id == hm.stem for r in recs)

    def test_eval_identical_poses_scores_100(self, corpus_dir, capsys):
        truth = str(corpus_dir / "truth.jsonl")
        assert cli.main(["eval", "--gt", truth, "--est", truth]) == 0
        out = capsys.readouterr().out
        assert "mean 100.0 over 12 images" in out

    def test_eval_pckh_metric(self, corpus_dir, capsys):
        truth = str(corpus_dir / "truth.jsonl")
        assert cli.main(["eval", "--gt", truth, "--est", truth,
                         "--metric", "pckh"]) == 0
        assert "PCKh@0.5" in capsys.readouterr().out

    def test_eval_disjoint_ids_is_data_error(self, corpus_dir, tmp_path, rng, capsys):
        other = tmp_path / "other.jsonl"
        write_junk_poses(other, rng, 3)
        rc = cli.main(
            ["eval", "--gt", str(corpus_dir / "truth.jsonl"), "--est", str(other)]
        )
        assert rc == 2
        assert "no shared image ids" in capsys.readouterr().err


class TestClusterAndOutliers:
    def test_cluster_reports_partition(self, tmp_path, rng, capsys):
        poses = tmp_path / "p.jsonl"
        a = write_template_poses(poses, rng, 8, action_index=0)
        out = tmp_path / "clusters.txt"
        rc = cli.main(
            ["cluster", "--poses", str(poses), "--out", str(out),
             "--iters", "80", "--burn-in", "20", "--seed", "1"]
        )
        assert rc == 0
        text = out.read_text()
        assert text.startswith("n_clusters ")
        assert len(text.splitlines()[2].split(" ", 1)[1].split(",")) == len(a)
        assert "clustered 8 poses" in capsys.readouterr().out

    def test_outliers_flags_junk(self, tmp_path, rng, capsys):
        poses = tmp_path / "p.jsonl"
        good = write_template_poses(poses, rng, 12, score=0.9)
        junk = [
            fileio.PoseRecord("junk_000", rng.uniform(400, 600, (14, 2)), score=0.2),
            fileio.PoseRecord("junk_001", rng.uniform(400, 600, (14, 2)), score=0.2),
        ]
        fileio.write_pose_records(poses, good + junk)
        out = tmp_path / "report.txt"
        rc = cli.main(
            ["outliers", "--poses", str(poses), "--out", str(out),
             "--iters", "80", "--burn-in", "20", "--seed", "1"]
        )
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "junk_000" in stdout and "junk_001" in stdout
        assert "good_000" not in stdout
        assert out.exists()

    def test_too_few_records_is_data_error(self, tmp_path, rng, capsys):
        poses = tmp_path / "p.jsonl"
        write_template_poses(poses, rng, 3)
        rc = cli.main(["cluster", "--poses", str(poses),
                       "--out", str(tmp_path / "c.txt")])
        assert rc == 2
        assert "too few" in capsys.readouterr().err


class TestPipelineCommand:
    def test_runs_and_writes_exchange(self, corpus_dir, tmp_path, capsys):
        exchange = tmp_path / "exchange"
        rc = cli.main(
            ["pipeline", "--corpus", str(corpus_dir), "--exchange", str(exchange),
             "--scheme", "weak", "--audit", "--gibbs-iters", "40",
             "--burn-in", "10"]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "iter 1 accepted" in out
        assert "precision" in out
        assert (exchange / "annotations_iter1.jsonl").exists()
        assert (exchange / "report_iter1.txt").exists()
        report = (exchange / "report_iter1.txt").read_text()
        assert "scheme weak" in report

    def test_bad_scheme_is_data_error(self, corpus_dir, tmp_path, capsys):
        rc = cli.main(
            ["pipeline", "--corpus", str(corpus_dir),
             "--exchange", str(tmp_path / "x"), "--scheme", "turbo"]
        )
        assert rc == 2
        assert "unknown scheme" in capsys.readouterr().err


class TestConfigFile:
    def test_config_fills_unset_options(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("poses = 3\nbackgrounds = 2\nactions = 1\n")
        out = tmp_path / "corpus"
        rc = cli.main(["synth", "--out", str(out), "--config", str(cfg)])
        assert rc == 0
        manifest = json.loads((out / "split.json").read_text())
        assert len(manifest["fs"]) + len(manifest["ws"]) == 3
        assert len(manifest["backgrounds"]) == 2

    def test_explicit_flag_beats_config(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("poses = 3\nactions = 1\nbackgrounds = 0\n")
        out = tmp_path / "corpus"
        rc = cli.main(
            ["synth", "--out", str(out), "--poses", "5", "--config", str(cfg)]
        )
        assert rc == 0
        manifest = json.loads((out / "split.json").read_text())
        assert len(manifest["fs"]) + len(manifest["ws"]) == 5

    def test_dashed_keys_match_underscored_options(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("outlier-rate = 0.0\nws-fraction = 1.0\n")
        out = tmp_path / "corpus"
        rc = cli.main(
            ["synth", "--out", str(out), "--actions", "1", "--poses", "2",
             "--backgrounds", "0", "--config", str(cfg)]
        )
        assert rc == 0
        manifest = json.loads((out / "split.json").read_text())
        assert manifest["fs"] == [] and len(manifest["ws"]) == 2

    def test_unknown_config_key_is_data_error(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("warp-speed = 9\n")
        rc = cli.main(
            ["synth", "--out", str(tmp_path / "c"), "--config", str(cfg)]
        )
        assert rc == 2
        assert "unknown config key 'warp-speed'" in capsys.readouterr().err
