"""Tests for corpus preparation: normalization, splits, manifests, loading."""
import json

import numpy as np
import pytest

from pingrip.dataset import (MAX_SIDE, load_manifest, load_tasks,
                             prepare_dataset, split_counts, toy_meshes,
                             toy_tasks)
from pingrip.geom import load_mesh, save_obj
from pingrip import shapes


def _write_inputs(in_dir, names=("apple", "brick", "cone")):
    """A few small distinct meshes as corpus input files."""
    in_dir.mkdir()
    gens = {"apple": shapes.icosphere(0.03, subdivisions=1),
            "brick": shapes.box(0.06, 0.04, 0.02),
            "cone": shapes.wedge(0.05, 0.03, 0.05),
            "donut": shapes.cylinder(0.02, 0.06, segments=12)}
    for name in names:
        save_obj(gens[name], in_dir / f"{name}.obj")


# ---------------------------------------------------------------------------
# Built-in toy set
# ---------------------------------------------------------------------------
def test_toy_set_contents():
    meshes = toy_meshes()
    assert list(meshes) == ["cube", "cylinder", "sphere", "wedge", "tee"]
    for mesh in meshes.values():
        assert mesh.closed
        assert mesh.signed_volume() > 0.0


def test_toy_tasks_normalized_and_resting():
    tasks = toy_tasks(seed=3, cloud_points=32)
    assert [t.name for t in tasks] == ["cube", "cylinder", "sphere",
                                       "wedge", "tee"]
    for t in tasks:
        assert t.mesh.max_side() == pytest.approx(MAX_SIDE)
        # COM recentred at the body origin
        com, _ = t.mesh.mass_properties(t.mass)
        assert np.linalg.norm(com) < 1e-9
        # settled: lowest vertex sits at the ground within contact slop scale
        low = t.pose.apply(t.mesh.vertices)[:, 2].min()
        assert abs(low) < 2e-4
        assert t.cloud.shape == (32, 3)
        # cloud sampled from the body-frame surface, inside the 5.5 cm box
        assert np.abs(t.cloud).max() < MAX_SIDE


def test_toy_tasks_deterministic_per_seed():
    a = toy_tasks(seed=5, cloud_points=16)
    b = toy_tasks(seed=5, cloud_points=16)
    c = toy_tasks(seed=6, cloud_points=16)
    for ta, tb in zip(a, b):
        assert np.array_equal(ta.cloud, tb.cloud)
        assert np.array_equal(ta.mesh.vertices, tb.mesh.vertices)
        assert np.array_equal(ta.pose.to_array(), tb.pose.to_array())
    assert not np.array_equal(a[0].mesh.vertices, c[0].mesh.vertices)


# ---------------------------------------------------------------------------
# Split ratio
# ---------------------------------------------------------------------------
def test_split_counts_reference_and_small():
    assert split_counts(543) == (446, 97)
    assert split_counts(100) == (82, 18)
    assert split_counts(2) == (1, 1)
    assert split_counts(1) == (1, 0)


def test_split_counts_properties():
    for n in range(2, 200):
        tr, te = split_counts(n)
        assert tr + te == n
        assert tr >= 1 and te >= 1
        if n > 2:   # n=2 is clamped to (1, 1) to keep both splits nonempty
            assert abs(tr / n - 446 / 543) < 0.5 / n + 1e-12


# ---------------------------------------------------------------------------
# Corpus preparation
# ---------------------------------------------------------------------------
def test_prepare_writes_files_and_manifest(tmp_path):
    _write_inputs(tmp_path / "in")
    manifest = prepare_dataset(tmp_path / "in", tmp_path / "out", seed=1,
                               cloud_points=24)
    assert manifest["counts"] == {"input": 3, "accepted": 3, "train": 2,
                                  "test": 1, "skipped": 0}
    names = set(manifest["train"]) | set(manifest["test"])
    assert names == {"apple", "brick", "cone"}
    assert not set(manifest["train"]) & set(manifest["test"])
    for name in names:
        entry = manifest["objects"][name]
        mesh_path = tmp_path / "out" / "objects" / f"{name}.obj"
        cloud_path = tmp_path / "out" / "objects" / f"{name}.xyz"
        assert mesh_path.exists() and cloud_path.exists()
        import hashlib
        assert entry["mesh_sha256"] == \
            hashlib.sha256(mesh_path.read_bytes()).hexdigest()
        assert entry["cloud_sha256"] == \
            hashlib.sha256(cloud_path.read_bytes()).hexdigest()
        assert load_mesh(mesh_path).max_side() == pytest.approx(MAX_SIDE)
    on_disk = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert on_disk == manifest


def test_same_seed_identical_manifest_hashes(tmp_path):
    _write_inputs(tmp_path / "in")
    m1 = prepare_dataset(tmp_path / "in", tmp_path / "out1", seed=7,
                         cloud_points=16)
    m2 = prepare_dataset(tmp_path / "in", tmp_path / "out2", seed=7,
                         cloud_points=16)
    m3 = prepare_dataset(tmp_path / "in", tmp_path / "out3", seed=8,
                         cloud_points=16)
    assert m1["manifest_hash"] == m2["manifest_hash"]
    assert m1["manifest_hash"] != m3["manifest_hash"]


def test_corrupt_file_skipped_with_warning(tmp_path):
    _write_inputs(tmp_path / "in", names=("apple", "brick"))
    (tmp_path / "in" / "broken.obj").write_text("v 0 0\nnot a mesh\n")
    with pytest.warns(UserWarning, match="skipping broken.obj"):
        manifest = prepare_dataset(tmp_path / "in", tmp_path / "out",
                                   seed=1, cloud_points=16)
    assert manifest["counts"]["input"] == 3
    assert manifest["counts"]["accepted"] == 2
    assert manifest["counts"]["skipped"] == 1
    assert manifest["skipped"][0]["file"] == "broken.obj"
    assert "broken" not in manifest["objects"]


def test_non_mesh_files_ignored(tmp_path):
    _write_inputs(tmp_path / "in", names=("apple",))
    (tmp_path / "in" / "notes.txt").write_text("irrelevant\n")
    manifest = prepare_dataset(tmp_path / "in", tmp_path / "out", seed=1,
                               cloud_points=16)
    assert manifest["counts"]["input"] == 1


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------
def test_load_tasks_round_trip(tmp_path):
    _write_inputs(tmp_path / "in")
    manifest = prepare_dataset(tmp_path / "in", tmp_path / "out", seed=2,
                               cloud_points=24)
    train = load_tasks(tmp_path / "out", "train")
    test = load_tasks(tmp_path / "out", "test")
    assert [t.name for t in train] == manifest["train"]
    assert [t.name for t in test] == manifest["test"]
    for t in train + test:
        # OBJ writer uses repr floats: vertices round-trip bit-exactly
        entry = manifest["objects"][t.name]
        assert np.array_equal(t.pose.to_array(), np.array(entry["pose"]))
        assert t.cloud.shape == (24, 3)
        assert t.mass == 0.05
        low = t.pose.apply(t.mesh.vertices)[:, 2].min()
        assert abs(low) < 2e-4


def test_load_tasks_validates_split_and_tamper(tmp_path):
    _write_inputs(tmp_path / "in", names=("apple", "brick"))
    prepare_dataset(tmp_path / "in", tmp_path / "out", seed=2,
                    cloud_points=16)
    with pytest.raises(ValueError, match="split"):
        load_tasks(tmp_path / "out", "validation")
    path = tmp_path / "out" / "manifest.json"
    doc = json.loads(path.read_text())
    doc["counts"]["accepted"] = 99
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    with pytest.raises(ValueError, match="hash mismatch"):
        load_manifest(tmp_path / "out")


def test_save_obj_round_trips_exact_vertices(tmp_path):
    mesh = shapes.tee(0.05, 0.015, 0.018, 0.035, 0.018)
    save_obj(mesh, tmp_path / "t.obj")
    back = load_mesh(tmp_path / "t.obj")
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.faces, mesh.faces)
