import csv
import io

import numpy as np
import pytest

import tripletlens as tl


def test_triplet_loss_examples():
    assert tl.triplet_loss([0, 0], [0.3, 0.4], [1, 0], 0.2) == pytest.approx(0.0, abs=1e-12)
    assert tl.triplet_loss([0, 0], [0.3, 0.4], [0.4, 0.3], 0.2) == pytest.approx(0.2, abs=1e-12)


def test_classify_nearest_class():
    support = [np.array([[0.0, 0.0], [0.1, 0.0]]), np.array([[5.0, 5.0], [5.0, 4.9]])]
    labels, scores = tl.classify(np.array([[0.2, 0.1], [4.0, 4.0]]), [3, 7], support)
    assert labels == [3, 7]
    assert scores.shape == (2, 2)
    assert scores[0, 0] == pytest.approx(0.02)


def test_classify_rejects_ragged_support():
    with pytest.raises(tl.SupportError):
        tl.classify(np.zeros((1, 2)), [0, 1], [np.zeros((2, 2)), np.zeros((3, 2))])


def test_metrics_binary():
    truth = [1] * 10 + [0] * 90
    pred = [1] * 9 + [0] + [1] + [0] * 89
    m = tl.metrics(truth, pred, 2)
    assert m["accuracy"] == pytest.approx(0.98)
    assert m["per_class"][1]["precision"] == pytest.approx(0.9)


def test_k_sweep_csv_on_clusters():
    rng = np.random.default_rng(0)
    centers = np.eye(3) * 10
    emb = np.concatenate([c + rng.normal(0, 0.1, (12, 3)) for c in centers])
    labels = [c for c in range(3) for _ in range(12)]
    text = tl.k_sweep_csv(emb, labels, ks=[1, 3], repeats=2, seed=1)
    rows = list(csv.DictReader(io.StringIO(text)))
    acc = [r for r in rows if r["repeat"] == "mean" and r["metric"] == "accuracy"]
    assert len(acc) == 2 and all(float(r["value"]) == 1.0 for r in acc)


def test_pipeline_through_cli(tmp_path):
    data = tmp_path / "data"
    n = tl.generate_dataset(data, n_per_class=6, size=32, seed=3, unseen_protocol=True)
    assert n == 30
    images, labels, splits, ids = tl.load_dataset(data / "manifest.csv")
    assert images.shape == (30, 3, 32, 32)
    assert "test" in splits

    png = tmp_path / "frame.png"
    tl.write_png(png, images[0])
    assert np.max(np.abs(tl.read_png(png) - images[0])) <= 0.5 / 255 + 1e-12

    ckpt = tmp_path / "m.ckpt"
    code, _, err = tl.run_cli(["train", "--data", str(data), "--epochs", "1", "--seed", "3",
                               "--out", str(ckpt), "--quiet"])
    assert code == 0, err
    model = tl.Checkpoint.load(ckpt)
    assert model.mode == "triplet" and model.output_dim == 128
    assert 4 not in model.trained_classes

    out = tmp_path / "emb.jsonl"
    code, _, err = tl.run_cli(["embed", "--checkpoint", str(ckpt), "--data", str(data),
                               "--split", "all", "--out", str(out)])
    assert code == 0, err
    got_ids, got_labels, vecs = tl.read_embeddings(out)
    assert got_ids == ids and got_labels == labels
    np.testing.assert_array_equal(vecs, model.embed(images))


def test_cli_usage_error():
    code, _, _ = tl.run_cli(["no-such-command"])
    assert code == 2
