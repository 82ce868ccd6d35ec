import csv
import json
import subprocess

import numpy as np
import pytest

from diffpath.arch import tiny_conv
from diffpath.cli import main
from diffpath.datasets import (Preprocessing, load_manifest, write_idx_images,
                               write_idx_labels, write_manifest)
from diffpath.dpwn import write_model
from diffpath.imageio import read_pnm
from diffpath.pathways import load_result
from diffpath.runtime import forward_trace

from conftest import rand_weights


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Model file + self-labeled IDX dataset the commands run against."""
    root = tmp_path_factory.mktemp("cli")
    model = tiny_conv(input_shape=(1, 16, 16), classes=10)
    weights = rand_weights(model, seed=31, scale=0.3)
    write_model(root / "model.dpwn", model, weights)
    rng = np.random.default_rng(33)
    images = rng.integers(0, 256, (24, 16, 16), dtype=np.uint8)
    pre = Preprocessing()
    labels = np.array([forward_trace(model, weights, pre.apply(im[None])).predicted
                       for im in images], dtype=np.uint8)
    write_idx_images(root / "images.idx", images)
    write_idx_labels(root / "labels.idx", labels)
    write_manifest(root / "data.json", "idx", classes=10, split="fixture",
                   images="images.idx", labels="labels.idx")
    return {"root": root, "model": str(root / "model.dpwn"),
            "data": str(root / "data.json"), "spec": model,
            "weights": weights, "labels": labels}


def run(args):
    return main([str(a) for a in args])


def dir_bytes(path, skip=()):
    out = {}
    for p in sorted(path.rglob("*")):
        if p.is_file() and p.name not in skip:
            out[str(p.relative_to(path))] = p.read_bytes()
    return out


class TestClassify:
    def test_prints_prediction(self, ws, capsys, tmp_path):
        rc = run(["classify", "--model", ws["model"], "--dataset", ws["data"],
                  "--index", 0, "--out", tmp_path / "o"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["prediction"] == int(ws["labels"][0])
        assert len(payload["logits"]) == 10
        saved = json.loads((tmp_path / "o" / "prediction.json").read_text())
        assert saved == payload
        assert (tmp_path / "o" / "run.json").exists()

    def test_bad_index_exits_one(self, ws, capsys):
        rc = run(["classify", "--model", ws["model"], "--dataset", ws["data"],
                  "--index", 99])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_model_file_exits_one(self, ws, tmp_path, capsys):
        rc = run(["classify", "--model", tmp_path / "nope.dpwn",
                  "--dataset", ws["data"], "--index", 0])
        assert rc == 1

    def test_corrupt_model_exits_one(self, ws, tmp_path, capsys):
        bad = tmp_path / "bad.dpwn"
        bad.write_bytes(b"JUNKJUNKJUNKJUNKJUNK")
        rc = run(["classify", "--model", bad, "--dataset", ws["data"], "--index", 0])
        assert rc == 1

    def test_usage_errors_exit_two(self, ws):
        with pytest.raises(SystemExit) as e:
            run(["classify", "--model", ws["model"]])
        assert e.value.code == 2
        with pytest.raises(SystemExit) as e:
            run(["no-such-command"])
        assert e.value.code == 2

    def test_bad_channel_mask_exits_two(self, ws, tmp_path):
        with pytest.raises(SystemExit) as e:
            run(["pathways", "--model", ws["model"], "--dataset", ws["data"],
                 "--index", 0, "--out", tmp_path / "o", "--channel-mask", "topk:0"])
        assert e.value.code == 2


class TestPathways:
    def test_outputs(self, ws, tmp_path):
        out = tmp_path / "o"
        rc = run(["pathways", "--model", ws["model"], "--dataset", ws["data"],
                  "--index", 2, "--out", out, "--threads", 1])
        assert rc == 0
        res = load_result(out / "aggregates.dpwn")
        spec = ws["spec"]
        assert len(res.aggregates) == len(spec.pathway_layers)
        for agg, c in zip(res.aggregates, spec.pathway_channels()):
            assert agg.values.shape == (16, 16, c)
        sal = read_pnm(out / "saliency.pgm")
        assert sal.shape == (16, 16)
        with open(out / "portion_hot.csv") as f:
            rows = list(csv.reader(f))
        assert len(rows) == 2
        assert len(rows[1]) == 1 + sum(spec.pathway_channels())
        parts = sorted(out.glob("parts_L*.pgm"))
        assert len(parts) == len(spec.pathway_layers)
        opts = json.loads((out / "options.json").read_text())
        # execution settings stay out of saved files
        assert opts == {"channel_mask": None, "masks": True, "dtype": "f32"}

    def test_rerun_byte_identical(self, ws, tmp_path):
        out = tmp_path / "o"
        args = ["pathways", "--model", ws["model"], "--dataset", ws["data"],
                "--index", 1, "--out", out, "--threads", 1]
        assert run(args) == 0
        first = dir_bytes(out)
        assert run(args) == 0
        assert dir_bytes(out) == first

    def test_thread_count_invariant(self, ws, tmp_path):
        # same destination, different worker count: every byte must match
        out = tmp_path / "o"
        outs = []
        for t in (1, 2):
            rc = run(["pathways", "--model", ws["model"], "--dataset", ws["data"],
                      "--index", 3, "--out", out, "--threads", t])
            assert rc == 0
            outs.append(dir_bytes(out))
        assert outs[0] == outs[1]

    def test_channel_mask_runs(self, ws, tmp_path):
        out = tmp_path / "o"
        rc = run(["pathways", "--model", ws["model"], "--dataset", ws["data"],
                  "--index", 0, "--out", out, "--channel-mask", "topk:4",
                  "--no-masks-dump"])
        assert rc == 0
        assert json.loads((out / "options.json").read_text())["channel_mask"] == 4
        assert not list(out.glob("parts_L*.pgm"))


class TestPartsSaliency:
    def test_parts(self, ws, tmp_path):
        out = tmp_path / "o"
        rc = run(["parts", "--model", ws["model"], "--dataset", ws["data"],
                  "--index", 0, "--out", out, "--layer", "conv2", "--topk", 2])
        assert rc == 0
        info = json.loads((out / "parts.json").read_text())
        assert info["layer"] == "conv2" and info["k"] == 2
        assert len(info["area_ratios"]) == 32
        assert 0 <= sum(info["area_ratios"]) <= 2 + 1e-9
        assert read_pnm(out / "parts.pgm").shape == (16, 16)

    def test_parts_unknown_layer(self, ws, tmp_path):
        rc = run(["parts", "--model", ws["model"], "--dataset", ws["data"],
                  "--index", 0, "--out", tmp_path / "o", "--layer", "convZ"])
        assert rc == 1

    def test_saliency_layer(self, ws, tmp_path):
        out = tmp_path / "o"
        rc = run(["saliency", "--model", ws["model"], "--dataset", ws["data"],
                  "--index", 4, "--out", out, "--layer", "maxpl2"])
        assert rc == 0
        info = json.loads((out / "saliency.json").read_text())
        assert info["layer"] == "maxpl2"
        assert info["max"] >= info["min"]


class TestVectorPipeline:
    def test_portion_distance_center_anova_chain(self, ws, tmp_path):
        mat_dir = tmp_path / "mat"
        rc = run(["portion-hot", "--model", ws["model"], "--dataset", ws["data"],
                  "--out", mat_dir, "--indices", "0,1,2,3,4,5"])
        assert rc == 0
        matrix = mat_dir / "portion_hot_matrix.csv"
        with open(matrix) as f:
            rows = list(csv.reader(f))
        assert len(rows) == 7
        assert rows[0][:2] == ["id", "label"]
        assert [r[0] for r in rows[1:]] == ["0", "1", "2", "3", "4", "5"]

        d_dir = tmp_path / "dist"
        assert run(["distances", "--matrix", matrix, "--out", d_dir]) == 0
        with open(d_dir / "distances.csv") as f:
            drows = list(csv.reader(f))
        assert len(drows) - 1 == 15  # 6 choose 2
        assert all(float(r[2]) >= 0 for r in drows[1:])

        c_dir = tmp_path / "cent"
        assert run(["centers", "--matrix", matrix, "--out", c_dir]) == 0
        with open(c_dir / "centers.csv") as f:
            crows = list(csv.reader(f))
        assert crows[-1][0] == "all"
        n_labels = len({r[1] for r in rows[1:]})
        assert len(crows) - 2 == n_labels  # header + one row per label + all

        a_dir = tmp_path / "anova"
        rc = run(["anova", "--matrix", matrix, "--out", a_dir])
        if n_labels >= 2:
            assert rc == 0
            report = json.loads((a_dir / "anova.json").read_text())
            assert report["df_between"] == n_labels - 1
            assert report["significant"] == (report["f_stat"] > report["critical"]
                                             or report["infinite"])
        else:
            assert rc == 1

    def test_limit(self, ws, tmp_path):
        out = tmp_path / "o"
        rc = run(["portion-hot", "--model", ws["model"], "--dataset", ws["data"],
                  "--out", out, "--limit", 3])
        assert rc == 0
        with open(out / "portion_hot_matrix.csv") as f:
            assert len(list(csv.reader(f))) == 4


def check_study_dir(out, columns):
    with open(out / "distances.csv") as f:
        rows = list(csv.reader(f))
    assert rows[0] == columns
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["group_count"] == len(rows) - 1
    assert len(manifest["groups"]) == manifest["group_count"]
    for entry in manifest["files"].values():
        for rel in entry.values():
            assert (out / rel).is_file()
    assert (out / "anova.json").exists()
    assert (out / "run.json").exists()
    return manifest, rows


class TestStudies:
    def test_adversarial(self, ws, tmp_path):
        out = tmp_path / "o"
        rc = run(["study-adversarial", "--model", ws["model"], "--dataset",
                  ws["data"], "--out", out, "--count", 2, "--seed", 5,
                  "--eps", 0.05])
        assert rc == 0
        manifest, rows = check_study_dir(
            out, ["group", "d_orig_adv", "d_orig_target", "d_adv_target"])
        assert manifest["kind"] == "adversarial"
        assert rows[1:], "no adversarial groups found; pick another seed"
        for g in manifest["groups"]:
            assert g["adversarial_prediction"] != g["label"]
        if manifest["group_count"] >= 2:
            report = json.loads((out / "anova.json").read_text())
            assert report["df_between"] == 2
        for key in ("d_orig_adv", "d_orig_target", "d_adv_target"):
            assert key in manifest["medians"]

    def test_rotate(self, ws, tmp_path):
        out = tmp_path / "o"
        rc = run(["study-rotate", "--model", ws["model"], "--dataset", ws["data"],
                  "--out", out, "--count", 2, "--seed", 6])
        assert rc == 0
        manifest, rows = check_study_dir(
            out, ["group", "d_orig_inv", "d_orig_var", "d_inv_var",
                  "d_orig_target", "d_inv_target", "d_var_target"])
        assert manifest["kind"] == "rotate"
        assert rows[1:], "no rotation groups found; pick another seed"
        for g in manifest["groups"]:
            assert g["variant_prediction"] != g["label"]
            assert len(g["invariant_desc"]) == 1

    def test_occlude(self, ws, tmp_path):
        out = tmp_path / "o"
        rc = run(["study-occlude", "--model", ws["model"], "--dataset", ws["data"],
                  "--out", out, "--count", 2, "--seed", 7])
        assert rc == 0
        manifest, rows = check_study_dir(
            out, ["group", "d_orig_inv", "d_orig_var", "d_inv_var",
                  "d_orig_target", "d_inv_target", "d_var_target"])
        assert manifest["kind"] == "occlude"
        assert rows[1:], "no occlusion groups found; pick another seed"
        for g in manifest["groups"]:
            assert len(g["variant_desc"]) == 4

    def test_study_rerun_byte_identical(self, ws, tmp_path):
        out = tmp_path / "o"
        args = ["study-rotate", "--model", ws["model"], "--dataset", ws["data"],
                "--out", out, "--count", 1, "--seed", 6]
        assert run(args) == 0
        first = dir_bytes(out)
        assert run(args) == 0
        assert dir_bytes(out) == first


class TestGradcamOverlapM2nist:
    def test_gradcam(self, ws, tmp_path):
        out = tmp_path / "o"
        rc = run(["gradcam", "--model", ws["model"], "--dataset", ws["data"],
                  "--index", 1, "--out", out, "--layer", "conv3", "--class", 2])
        assert rc == 0
        assert read_pnm(out / "gradcam.pgm").shape == (16, 16)
        assert read_pnm(out / "saliency.pgm").shape == (16, 16)
        info = json.loads((out / "gradcam.json").read_text())
        assert info == {"layer": "conv3", "class_index": 2}

    def test_overlap(self, ws, tmp_path):
        out = tmp_path / "o"
        rc = run(["overlap", "--model", ws["model"], "--dataset", ws["data"],
                  "--out", out, "--count", 3, "--n", 4])
        assert rc == 0
        report = json.loads((out / "overlap.json").read_text())
        assert len(report["images"]) == 3
        assert len(report["layers"]) == len(ws["spec"].pathway_layers)
        for v in report["mean_overlap_largest"] + report["mean_overlap_smallest"]:
            assert 0 <= v <= 4

    def test_m2nist(self, ws, tmp_path):
        out = tmp_path / "o"
        rc = run(["m2nist", "--dataset", ws["data"], "--out", out,
                  "--count", 6, "--seed", 3, "--canvas", "32x40"])
        assert rc == 0
        ds, _ = load_manifest(out / "manifest.json")
        assert ds.multilabel
        assert ds.images.shape == (6, 1, 32, 40)
        assert ds.labels.shape == (6, 10)

        out2 = tmp_path / "o2"
        rc = run(["m2nist", "--dataset", ws["data"], "--out", out2,
                  "--count", 6, "--seed", 3, "--canvas", "32x40"])
        assert rc == 0
        a = (out / "m2nist-images.idx").read_bytes()
        b = (out2 / "m2nist-images.idx").read_bytes()
        assert a == b

    def test_m2nist_rejects_multilabel_source(self, ws, tmp_path):
        src = tmp_path / "src"
        rc = run(["m2nist", "--dataset", ws["data"], "--out", src,
                  "--count", 2, "--seed", 0, "--canvas", "32x40"])
        assert rc == 0
        rc = run(["m2nist", "--dataset", src / "manifest.json",
                  "--out", tmp_path / "o", "--count", 1, "--seed", 0])
        assert rc == 1


class TestConsoleScript:
    def test_entry_point_help(self):
        proc = subprocess.run(["diffpath", "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "subcommand" in proc.stdout or "classify" in proc.stdout

    def test_entry_point_classify(self, ws):
        proc = subprocess.run(
            ["diffpath", "classify", "--model", ws["model"],
             "--dataset", ws["data"], "--index", "0"],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["prediction"] == int(ws["labels"][0])
