import os

import numpy as np
import pytest

from portraitlab import comp, dataset, fuzzy
from portraitlab.cli import main

from synth import build_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    manifest = build_corpus(str(root), n=16, seed=21)
    return str(root), manifest


@pytest.fixture(scope="module")
def extracted(corpus, tmp_path_factory):
    _, manifest = corpus
    out = str(tmp_path_factory.mktemp("extract"))
    rc = main(["extract", "--manifest", manifest, "--out", out, "--seed", "3"])
    assert rc == 0
    return os.path.join(out, "features.csv")


# --- extract -----------------------------------------------------------------------

def test_extract_shape_and_order(corpus, extracted):
    _, manifest = corpus
    matrix, scores = dataset.load_matrix(extracted)
    assert matrix.values.shape == (16, 312)
    entries = dataset.load_manifest(manifest)
    assert matrix.ids == [e.id for e in entries]
    np.testing.assert_allclose(scores, [e.mean_score for e in entries], rtol=1e-8)
    # no semantics supplied: the whole block is zero
    sem = [i for i, n in enumerate(matrix.registry) if n.startswith("semantics:")]
    np.testing.assert_array_equal(matrix.values[:, sem], 0.0)


def test_extract_deterministic_and_worker_invariant(corpus, extracted, tmp_path):
    _, manifest = corpus
    ref = open(extracted, "rb").read()
    for workers in ("1", "3"):
        out = tmp_path / f"w{workers}"
        rc = main(["extract", "--manifest", manifest, "--out", str(out),
                   "--seed", "3", "--workers", workers])
        assert rc == 0
        assert (out / "features.csv").read_bytes() == ref


def test_extract_drops_corrupt_image(corpus, tmp_path):
    root, manifest = corpus
    rows = [l for l in open(manifest) if not l.startswith("#")]
    bad_png = tmp_path / "broken.png"
    bad_png.write_bytes(b"not a png at all")
    bad_ann = os.path.join(root, "img_0000.json")
    m2 = tmp_path / "manifest.tsv"
    with open(m2, "w") as f:
        f.writelines(rows)
        f.write(f"broken\t{bad_png}\t{bad_ann}\t5.0\tPortrait Challenge\t-\t-\n")
    out = tmp_path / "out"
    rc = main(["extract", "--manifest", str(m2), "--out", str(out), "--seed", "3"])
    assert rc == 0
    matrix, _ = dataset.load_matrix(str(out / "features.csv"))
    assert "broken" not in matrix.ids
    assert matrix.n == 16
    diag = (out / "extract_diagnostics.txt").read_text()
    assert "broken" in diag


def test_extract_groups_subset(corpus, tmp_path):
    _, manifest = corpus
    out = tmp_path / "subset"
    rc = main(["extract", "--manifest", manifest, "--out", str(out),
               "--seed", "3", "--groups", "quality,portrait"])
    assert rc == 0
    matrix, _ = dataset.load_matrix(str(out / "features.csv"))
    comp_cols = [i for i, n in enumerate(matrix.registry)
                 if n.startswith(("compositional:", "fuzzy:", "semantics:"))]
    np.testing.assert_array_equal(matrix.values[:, comp_cols], 0.0)
    qcols = [i for i, n in enumerate(matrix.registry) if n.startswith("quality:")]
    assert np.abs(matrix.values[:, qcols]).max() > 0


def test_extract_with_lighting_model(corpus, tmp_path):
    _, manifest = corpus
    lm_out = tmp_path / "lm"
    assert main(["train-lighting", "--manifest", manifest,
                 "--out", str(lm_out), "--seed", "5"]) == 0
    model_path = lm_out / "lighting_model.txt"
    model = comp.load_lighting_model(str(model_path))
    assert model.centroids.shape == (5, 625)
    out = tmp_path / "with_lm"
    rc = main(["extract", "--manifest", manifest, "--out", str(out), "--seed", "3",
               "--lighting-model", str(model_path)])
    assert rc == 0
    matrix, _ = dataset.load_matrix(str(out / "features.csv"))
    lp = [i for i, n in enumerate(matrix.registry)
          if n.startswith("compositional:lighting_pattern")]
    onehots = matrix.values[:, lp]
    np.testing.assert_array_equal(onehots.sum(axis=1), 1.0)


# --- error paths ------------------------------------------------------------------

def test_unknown_group_is_config_error(corpus, tmp_path):
    _, manifest = corpus
    rc = main(["extract", "--manifest", manifest, "--out", str(tmp_path / "x"),
               "--seed", "1", "--groups", "bogus"])
    assert rc == 2


def test_missing_manifest_is_data_error(tmp_path):
    rc = main(["extract", "--manifest", str(tmp_path / "none.tsv"),
               "--out", str(tmp_path / "x"), "--seed", "1"])
    assert rc == 3


def test_bad_arguments_exit_2(tmp_path):
    assert main(["extract", "--out", str(tmp_path)]) == 2
    assert main(["no-such-command"]) == 2


def test_bad_aux_model_pair(corpus, tmp_path):
    _, manifest = corpus
    rc = main(["extract", "--manifest", manifest, "--out", str(tmp_path / "x"),
               "--seed", "1", "--aux-model", "emotionmodel.json"])
    assert rc == 2
    rc = main(["extract", "--manifest", manifest, "--out", str(tmp_path / "x"),
               "--seed", "1", "--aux-model", "emotion=" + str(tmp_path / "no.json")])
    assert rc == 3


# --- aux training -----------------------------------------------------------------

def test_train_aux_splicing_and_use(corpus, tmp_path):
    _, manifest = corpus
    out = tmp_path / "aux"
    rc = main(["train-aux", "--kind", "splicing", "--manifest", manifest,
               "--out", str(out), "--seed", "9"])
    assert rc == 0
    model = fuzzy.load_aux_model(str(out / "aux_splicing.json"))
    assert model.kind == "classifier"
    ex = tmp_path / "ex"
    rc = main(["extract", "--manifest", manifest, "--out", str(ex), "--seed", "3",
               "--groups", "quality",
               "--aux-model", "splicing=" + str(out / "aux_splicing.json")])
    assert rc == 0
    matrix, _ = dataset.load_matrix(str(ex / "features.csv"))
    col = matrix.registry.index("quality:splicing_score")
    assert np.abs(matrix.values[:, col]).max() > 0


def test_train_aux_emotion_from_matrix(corpus, extracted, tmp_path):
    labels_path = tmp_path / "labels.txt"
    matrix, scores = dataset.load_matrix(extracted)
    labels = np.where(scores > scores.mean(), 1.0, -1.0)
    labels_path.write_text(" ".join(str(v) for v in labels))
    out = tmp_path / "aux"
    rc = main(["train-aux", "--kind", "emotion", "--matrix", extracted,
               "--labels", str(labels_path), "--out", str(out), "--seed", "2"])
    assert rc == 0
    model = fuzzy.load_aux_model(str(out / "aux_emotion.json"))
    assert model.kind == "classifier"
    assert all(n.startswith("compositional:") for n in model.input_registry)


def test_train_aux_missing_labels_is_config_error(extracted, tmp_path):
    rc = main(["train-aux", "--kind", "memorability", "--matrix", extracted,
               "--out", str(tmp_path / "x"), "--seed", "1"])
    assert rc == 2


# --- analyze / classify / report ------------------------------------------------------

@pytest.fixture(scope="module")
def analysis(extracted, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("analysis"))
    rc = main(["analyze", "--matrix", extracted, "--out", out,
               "--seed", "4", "--grid-size", "25"])
    assert rc == 0
    return out


def test_analyze_outputs(analysis):
    gc = open(os.path.join(analysis, "group_correlation.csv")).read().splitlines()
    assert gc[0] == "group,spearman_mean,spearman_std"
    assert len(gc) == 6  # header + 5 groups
    lr = open(os.path.join(analysis, "lasso_ranking.csv")).read().splitlines()
    assert lr[0] == "rank,feature,entry_index,weight"
    assert len(lr) > 1
    entry_indices = [int(l.split(",")[2]) for l in lr[1:]]
    assert entry_indices == sorted(entry_indices)
    fc = open(os.path.join(analysis, "feature_correlation.csv")).read().splitlines()
    assert len(fc) == 313
    cc = open(os.path.join(analysis, "correlation_curve.csv")).read().splitlines()
    assert len(cc) == 26


def test_analyze_deterministic(extracted, analysis, tmp_path):
    out = tmp_path / "again"
    rc = main(["analyze", "--matrix", extracted, "--out", str(out),
               "--seed", "4", "--grid-size", "25"])
    assert rc == 0
    for name in ("group_correlation.csv", "lasso_ranking.csv",
                 "feature_correlation.csv", "correlation_curve.csv"):
        assert (out / name).read_bytes() == \
            open(os.path.join(analysis, name), "rb").read()


def test_classify_outputs(extracted, tmp_path):
    out = tmp_path / "clf"
    rc = main(["classify", "--matrix", extracted, "--out", str(out),
               "--seed", "6", "--c-grid", "1,8"])
    assert rc == 0
    rows = open(out / "classification.csv").read().splitlines()
    assert rows[0] == "fold,accuracy,C,tp,tn,fp,fn"
    assert len(rows) == 8  # 5 folds + mean + std
    assert rows[6].startswith("mean,")
    accs = [float(r.split(",")[1]) for r in rows[1:6]]
    assert all(0.0 <= a <= 1.0 for a in accs)
    counts = [sum(int(v) for v in r.split(",")[3:]) for r in rows[1:6]]
    assert sum(counts) == 16  # confusion cells cover every sample once


def test_report(analysis, tmp_path):
    out = tmp_path / "report"
    rc = main(["report", "--analysis", analysis, "--out", str(out)])
    assert rc == 0
    text = (out / "report.md").read_text()
    assert "group_correlation.csv" in text
    assert (out / "correlation_curve.dat").exists()
    assert main(["report", "--analysis", str(tmp_path / "empty"),
                 "--out", str(out)]) == 3
