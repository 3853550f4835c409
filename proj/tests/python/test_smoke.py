import io

import numpy as np
import pytest

import vitclust as vc


def fixture():
    return np.array([[0.0], [1.0], [10.0], [11.0]])


def test_metrics_on_fixture():
    x, labels = fixture(), [0, 0, 1, 1]
    assert vc.silhouette(x, labels) == pytest.approx(0.8997, abs=1e-4)
    assert vc.calinski_harabasz(x, labels) == pytest.approx(200.0, rel=1e-9)
    assert vc.davies_bouldin(x, labels) == pytest.approx(0.1, rel=1e-9)


def test_kmeans_fixture():
    model = vc.kmeans(fixture(), k=2, seed=3)
    assert model["inertia"] == pytest.approx(1.0)
    labels = model["labels"]
    assert labels[0] == labels[1] != labels[2] == labels[3]
    assert list(vc.predict(model["centroids"], fixture())) == labels


def test_umap_recovers_blobs():
    points, truth = vc.make_blobs(seed=1)
    y = vc.umap(points, target_dim=2, seed=1)
    assert y.shape == (60, 2)
    labels = vc.kmeans(y, k=3)["labels"]
    # Each predicted cluster maps onto exactly one blob.
    pairs = {(a, b) for a, b in zip(labels, truth)}
    assert len(pairs) == 3


def test_pca_shapes():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 5))
    assert vc.pca(x, 3).shape == (20, 3)


def test_fit_ab():
    a, b = vc.fit_ab(0.1)
    assert a == pytest.approx(1.577, rel=0.02)
    assert b == pytest.approx(0.895, rel=0.02)


def test_embed_toy_model():
    weights = vc.random_weights(vc.model_preset("toy"), seed=5)
    image = np.zeros((3, 32, 32), dtype=np.float32)
    e = vc.embed(weights, image)
    assert e.shape == (8,)
    assert np.linalg.norm(e) == pytest.approx(1.0, abs=1e-6)
    raw = vc.embed(weights, image, normalize=False)
    assert np.array_equal(raw, vc.embed(weights, image, normalize=False))


def test_attention_rows_sum_to_one():
    rng = np.random.default_rng(1)
    a = vc.attention_weights(rng.normal(size=(7, 4)).astype(np.float32), rng.normal(size=(7, 4)).astype(np.float32))
    assert np.allclose(a.sum(axis=1), 1.0, atol=1e-6)


def test_store_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    values = rng.normal(size=(10, 6)).astype(np.float32)
    records = [
        {"record_id": i, "source": "s", "image_path": f"img{i}.png", "content_hash": f"h{i}"} for i in range(10)
    ]
    vc.write_store(tmp_path / "e.embs", values, records)
    back, back_records, normalized = vc.read_store(tmp_path / "e.embs")
    assert np.array_equal(back, values)
    assert back_records == records
    assert normalized is False


def test_preprocess_white_png():
    pil = pytest.importorskip("PIL.Image")
    buf = io.BytesIO()
    pil.new("RGB", (40, 30), (255, 255, 255)).save(buf, format="PNG")
    t = vc.preprocess(buf.getvalue(), 16)
    assert t.shape == (3, 16, 16)
    assert np.allclose(t, 1.0)


def test_errors_carry_kind(tmp_path):
    with pytest.raises(vc.VitclustError) as err:
        vc.read_store(tmp_path / "missing.embs")
    assert err.value.kind == "IOError"
    with pytest.raises(vc.VitclustError) as err:
        vc.silhouette(fixture(), [0, 0, 0, 0])
    assert err.value.kind == "MetricError"


def test_format_table_matches_layout():
    text = vc.format_table([(16, 0.0126, 925.5, 4.412), (64, 0.0152, 942.4, 4.164)])
    lines = text.splitlines()
    assert lines[0] == "Dim.  Silhouette    C-H    D-B"
    assert lines[2].endswith(" *")
    assert lines[-1] == "* best silhouette"
