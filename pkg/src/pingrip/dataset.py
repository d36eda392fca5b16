"""Object corpus preparation and loading.

``prepare_dataset`` canonicalizes a directory of meshes for grasping:
each object is randomly reoriented, resized so its bounding box's longest
side is 5.5 cm, recentred on its center of mass, and settled onto the
ground plane; a surface point cloud is sampled in the canonical body
frame.  Outputs are written with content hashes into a manifest, split
into train/test at the reference 446:97 ratio.  Unreadable meshes are
skipped with a warning and recorded.  ``load_tasks`` turns a prepared
directory — or the built-in five-primitive toy set — into episode setups.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from pathlib import Path

import numpy as np

from .geom import (MeshContentError, MeshFormatError, Pose, PointCloud,
                   TriMesh, load_mesh, normalize_object, save_obj)
from .mdp import EnvTask
from . import shapes

MAX_SIDE = 0.055                  # bounding-box cap for every object, m
_SPLIT_TRAIN, _SPLIT_TOTAL = 446, 543   # reference train/test proportions

_MESH_SUFFIXES = (".obj", ".stl")


# ---------------------------------------------------------------------------
# Built-in toy set
# ---------------------------------------------------------------------------
def toy_meshes() -> dict:
    """Five primitives spanning flat, round, tapered, and overhung shapes."""
    return {
        "cube": shapes.box(0.05, 0.05, 0.05),
        "cylinder": shapes.cylinder(0.018, 0.055),
        "sphere": shapes.icosphere(0.025),
        "wedge": shapes.wedge(0.05, 0.045, 0.04),
        "tee": shapes.tee(0.05, 0.015, 0.018, 0.035, 0.018),
    }


def toy_tasks(seed: int = 0, cloud_points: int = 128,
              mass: float = 0.05) -> list:
    """Episode setups for the built-in set; deterministic per seed."""
    tasks = []
    for name, mesh in toy_meshes().items():
        rng = _object_rng(seed, name)
        m, pose = normalize_object(mesh, MAX_SIDE, rng, mass=mass)
        cloud = PointCloud.sample(m, cloud_points, rng).points
        tasks.append(EnvTask(m, pose, cloud, mass, name))
    return tasks


# ---------------------------------------------------------------------------
# Corpus preparation
# ---------------------------------------------------------------------------
def _object_rng(seed: int, name: str) -> np.random.Generator:
    """Per-object stream keyed on (seed, name); unaffected by scan order."""
    tag = int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "big")
    return np.random.default_rng([seed, tag])


def split_counts(n: int) -> tuple:
    """Train/test sizes at the reference ratio; both nonempty when n >= 2."""
    if n <= 1:
        return n, 0
    n_train = round(n * _SPLIT_TRAIN / _SPLIT_TOTAL)
    return min(max(n_train, 1), n - 1), n - min(max(n_train, 1), n - 1)


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def prepare_dataset(in_dir, out_dir, seed: int = 0, cloud_points: int = 128,
                    mass: float = 0.05, max_side: float = MAX_SIDE) -> dict:
    """Normalize every readable mesh under ``in_dir``; returns the manifest."""
    in_dir, out_dir = Path(in_dir), Path(out_dir)
    obj_dir = out_dir / "objects"
    obj_dir.mkdir(parents=True, exist_ok=True)
    files = sorted(p for p in in_dir.iterdir()
                   if p.suffix.lower() in _MESH_SUFFIXES)

    objects: dict = {}
    skipped = []
    for path in files:
        name = path.stem
        rng = _object_rng(seed, name)
        try:
            mesh = load_mesh(path)
            m, pose = normalize_object(mesh, max_side, rng, mass=mass)
        except (MeshFormatError, MeshContentError, OSError,
                UnicodeDecodeError) as e:
            warnings.warn(f"skipping {path.name}: {e}")
            skipped.append({"file": path.name, "error": str(e)})
            continue
        cloud = PointCloud.sample(m, cloud_points, rng)
        mesh_path = obj_dir / f"{name}.obj"
        cloud_path = obj_dir / f"{name}.xyz"
        save_obj(m, mesh_path)
        cloud.save_xyz(cloud_path)
        objects[name] = {
            "pose": [float(x) for x in pose.to_array()],
            "mass": mass,
            "mesh_sha256": _sha256_file(mesh_path),
            "cloud_sha256": _sha256_file(cloud_path),
        }

    names = sorted(objects)
    n_train, _ = split_counts(len(names))
    order = np.random.default_rng(seed).permutation(len(names))
    shuffled = [names[i] for i in order]
    manifest = {
        "seed": seed,
        "max_side": max_side,
        "cloud_points": cloud_points,
        "counts": {"input": len(files), "accepted": len(names),
                   "train": n_train, "test": len(names) - n_train,
                   "skipped": len(skipped)},
        "train": sorted(shuffled[:n_train]),
        "test": sorted(shuffled[n_train:]),
        "skipped": skipped,
        "objects": objects,
    }
    manifest["manifest_hash"] = _manifest_hash(manifest)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _manifest_hash(manifest: dict) -> str:
    body = {k: v for k, v in manifest.items() if k != "manifest_hash"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Loading prepared corpora
# ---------------------------------------------------------------------------
def load_manifest(root) -> dict:
    with open(Path(root) / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("manifest_hash") != _manifest_hash(manifest):
        raise ValueError("manifest hash mismatch; dataset was modified")
    return manifest


def load_tasks(root, split: str = "train") -> list:
    """Episode setups for one split of a prepared dataset directory."""
    root = Path(root)
    manifest = load_manifest(root)
    if split not in ("train", "test"):
        raise ValueError(f"unknown split {split!r}")
    tasks = []
    for name in manifest[split]:
        entry = manifest["objects"][name]
        mesh = load_mesh(root / "objects" / f"{name}.obj")
        cloud = PointCloud.load_xyz(root / "objects" / f"{name}.xyz").points
        pose = Pose.from_array(np.array(entry["pose"]))
        tasks.append(EnvTask(mesh, pose, cloud, float(entry["mass"]), name))
    return tasks
