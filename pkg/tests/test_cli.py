import json

import numpy as np
import pytest
from PIL import Image

from scatshift import cli
from scatshift.rng import substream


def make_manifest(tmp_path, n=3, side=20, seed=0, corrupt_one=False):
    rng = substream(seed, "cli-images")
    paths = []
    for i in range(n):
        p = tmp_path / f"img{i}.png"
        arr = rng.integers(0, 256, size=(side, side)).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(p)
        paths.append(str(p))
    if corrupt_one:
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"garbage")
        paths.append(str(bad))
    m = tmp_path / "manifest.csv"
    m.write_text("path,label,labeler_a,labeler_b\n" + "\n".join(f"{p},," for p in paths) + "\n")
    return m


def run(argv):
    return cli.main([str(a) for a in argv])


def write_features(path, matrix):
    cli.write_feature_matrix(path, np.asarray(matrix, dtype=float), [f"f{i}" for i in range(np.shape(matrix)[1])])


class TestFeatures:
    def test_emits_417_columns(self, tmp_path):
        m = make_manifest(tmp_path, side=16)
        out = tmp_path / "run"
        assert run(["features", m, out, "--J", 4, "--L", 8, "--side", 16]) == 0
        mat = cli.read_feature_matrix(tmp_path / "run.features.csv")
        assert mat.shape == (3, 417)
        sidecar = json.loads((tmp_path / "run.json").read_text())
        assert sidecar["feature_count"] == 417
        assert sidecar["config"]["J"] == 4

    def test_rerun_byte_identical(self, tmp_path):
        m = make_manifest(tmp_path, side=16)
        run(["features", m, tmp_path / "a", "--J", 2, "--L", 2, "--side", 16])
        run(["features", m, tmp_path / "b", "--J", 2, "--L", 2, "--side", 16])
        assert (tmp_path / "a.features.csv").read_bytes() == (tmp_path / "b.features.csv").read_bytes()

    def test_thread_count_does_not_change_output(self, tmp_path):
        m = make_manifest(tmp_path, n=6, side=16)
        run(["--threads", 1, "features", m, tmp_path / "t1", "--J", 2, "--L", 2, "--side", 16])
        run(["--threads", 4, "features", m, tmp_path / "t4", "--J", 2, "--L", 2, "--side", 16])
        assert (tmp_path / "t1.features.csv").read_bytes() == (tmp_path / "t4.features.csv").read_bytes()

    def test_corrupt_file_fails_without_skip_bad(self, tmp_path):
        m = make_manifest(tmp_path, corrupt_one=True, side=16)
        assert run(["features", m, tmp_path / "x", "--J", 2, "--L", 2, "--side", 16]) == 1

    def test_skip_bad_drops_row(self, tmp_path):
        m = make_manifest(tmp_path, corrupt_one=True, side=16)
        assert run(["features", m, tmp_path / "x", "--J", 2, "--L", 2, "--side", 16, "--skip-bad"]) == 0
        mat = cli.read_feature_matrix(tmp_path / "x.features.csv")
        assert mat.shape[0] == 3
        sidecar = json.loads((tmp_path / "x.json").read_text())
        assert len(sidecar["skipped"]) == 1


class TestShiftTest:
    def test_identical_corpora_exit_0(self, tmp_path):
        rng = substream(1, "same")
        f = tmp_path / "f.csv"
        write_features(f, rng.standard_normal((64, 5)))
        code = run(["shift-test", f, f, tmp_path / "st", "--draws", 20])
        assert code == 0
        payload = json.loads((tmp_path / "st.btest.json").read_text())
        assert payload["p_value"] > 0.05

    def test_shifted_corpora_exit_2(self, tmp_path):
        rng = substream(2, "shifted")
        fa, fb = tmp_path / "a.csv", tmp_path / "b.csv"
        write_features(fa, rng.standard_normal((200, 5)))
        write_features(fb, rng.standard_normal((200, 5)) + 1.0)
        assert run(["shift-test", fa, fb, tmp_path / "st", "--draws", 20]) == 2
        lines = (tmp_path / "st.h0h1.csv").read_text().strip().splitlines()
        assert lines[0] == "hypothesis,value"
        assert sum(1 for ln in lines if ln.startswith("h0,")) == 20
        assert sum(1 for ln in lines if ln.startswith("h1,")) == 20

    def test_malformed_csv_exit_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("f0,f1\n1.0,2.0\n1.0,oops\n")
        ok = tmp_path / "ok.csv"
        write_features(ok, np.zeros((10, 2)))
        assert run(["shift-test", bad, ok, tmp_path / "st"]) == 1

    def test_rerun_byte_identical(self, tmp_path):
        rng = substream(3, "det")
        fa, fb = tmp_path / "a.csv", tmp_path / "b.csv"
        write_features(fa, rng.standard_normal((64, 3)))
        write_features(fb, rng.standard_normal((64, 3)))
        run(["--seed", 5, "shift-test", fa, fb, tmp_path / "r1", "--draws", 10])
        run(["--seed", 5, "shift-test", fa, fb, tmp_path / "r2", "--draws", 10])
        assert (tmp_path / "r1.btest.json").read_bytes() == (tmp_path / "r2.btest.json").read_bytes()
        assert (tmp_path / "r1.h0h1.csv").read_bytes() == (tmp_path / "r2.h0h1.csv").read_bytes()


class TestEmbedOod:
    def _features(self, tmp_path):
        rng = substream(4, "embed")
        fa, fb = tmp_path / "a.csv", tmp_path / "b.csv"
        write_features(fa, rng.standard_normal((100, 6)))
        write_features(fb, rng.standard_normal((100, 6)) + 2.0)
        return fa, fb

    def test_density_grid_rows(self, tmp_path):
        fa, fb = self._features(tmp_path)
        assert run(["embed", fa, fb, tmp_path / "e"]) == 0
        lines = (tmp_path / "e.density.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + 2 * 50 * 50  # header + both corpora
        model = json.loads((tmp_path / "e.model.json").read_text())
        assert len(model["components"]) == 6
        overlap = json.loads((tmp_path / "e.overlap.json").read_text())
        assert 0.0 <= overlap["bhattacharyya"] <= 1.0

    def test_ood_rectangle_recorded(self, tmp_path):
        fa, fb = self._features(tmp_path)
        assert run(["ood", fa, fb, tmp_path / "o", "--ood-rect", -4, -1, -4, -2]) == 0
        payload = json.loads((tmp_path / "o.ood.json").read_text())
        assert payload["criterion"]["kind"] == "rectangle"
        assert payload["criterion"]["x1"] == -1.0

    def test_ood_nonoverlap_fully_overlapping(self, tmp_path):
        rng = substream(5, "full")
        fa, fb = tmp_path / "a.csv", tmp_path / "b.csv"
        x = rng.standard_normal((200, 4))
        write_features(fa, x)
        write_features(fb, x + rng.normal(0, 0.01, x.shape))
        assert run(["ood", fa, fb, tmp_path / "o", "--ood-nonoverlap", "--bins", 2]) == 0
        payload = json.loads((tmp_path / "o.ood.json").read_text())
        assert payload["indices"] == []


class TestEval:
    def _predictions(self, tmp_path):
        p = tmp_path / "preds.csv"
        rng = substream(6, "preds")
        scores = rng.uniform(0, 1, 100)
        labels = (rng.uniform(0, 1, 100) < scores).astype(int)
        rows = ["id,score,label"] + [f"p{i},{s},{l}" for i, (s, l) in enumerate(zip(scores, labels))]
        p.write_text("\n".join(rows) + "\n")
        return p

    def test_metrics_files(self, tmp_path):
        p = self._predictions(tmp_path)
        assert run(["eval", p, tmp_path / "m", "--keep", 0.5]) == 0
        payload = json.loads((tmp_path / "m.metrics.json").read_text())
        assert payload["abstained"]["abstention_fraction"] == 0.5
        assert payload["full"]["abstention_fraction"] == 0.0
        csv_lines = (tmp_path / "m.metrics.csv").read_text().strip().splitlines()
        assert csv_lines[0] == "metric,full,abstained"
        assert len(csv_lines) == 8  # header + 7 metrics

    def test_missing_label_column_exit_1(self, tmp_path):
        p = tmp_path / "nolabel.csv"
        p.write_text("id,score\na,0.5\n")
        assert run(["eval", p, tmp_path / "m"]) == 1


class TestAdaptReport:
    def test_report_written(self, tmp_path):
        rng = substream(7, "adapt")
        target = rng.standard_normal((80, 5))
        src = rng.standard_normal((80, 5)) + 2.0
        adapted = rng.standard_normal((80, 5)) + 0.1
        for name, arr in [("src", src), ("adapted", adapted), ("target", target)]:
            write_features(tmp_path / f"{name}.csv", arr)
        code = run(
            ["adapt-report", tmp_path / "src.csv", tmp_path / "adapted.csv", tmp_path / "target.csv",
             tmp_path / "r", "--bins", 10, "--range", -8, 8, -8, 8]
        )
        assert code == 0
        payload = json.loads((tmp_path / "r.adapt.json").read_text())
        assert payload["adapted_vs_target"]["statistic"] < payload["source_vs_target"]["statistic"]
        assert "delta" in payload and "config" in payload


def test_artifacts_embed_seed(tmp_path):
    rng = substream(8, "seed")
    f = tmp_path / "f.csv"
    write_features(f, rng.standard_normal((64, 3)))
    run(["--seed", 123, "shift-test", f, f, tmp_path / "s", "--draws", 5])
    payload = json.loads((tmp_path / "s.btest.json").read_text())
    assert payload["config"]["seed"] == 123
    assert payload["seed"] == 123
