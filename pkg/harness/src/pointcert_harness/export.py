"""Export entry points: models and labeled clouds in the verifier formats."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .recipes import ModelRecipe, random_model_document
from .shapes import make_cloud, make_dataset


def export_model(recipe: ModelRecipe, trained: bool, out_path,
                 n_train_per_class: int = 64, epochs: int = 60) -> dict:
    """Write a model file; returns {"path", "trained", "accuracy"}.

    Untrained exports are seeded random weights generated without torch,
    so they are bitwise reproducible from the seed alone.  Trained exports
    fit the recipe on the synthetic shape task first.
    """
    if trained:
        from .train import train_recipe, trained_model_document
        clouds, labels = make_dataset(n_train_per_class, recipe.n_points,
                                      recipe.seed, recipe.n_classes)
        model, acc = train_recipe(recipe, clouds, labels, epochs=epochs)
        doc = trained_model_document(recipe, model)
    else:
        doc = random_model_document(recipe)
        acc = None
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as fh:
        json.dump(doc, fh)
    return {"path": str(out_path), "trained": trained, "accuracy": acc}


def export_clouds(generator: str, n: int, n_points: int, seed: int, out_dir,
                  n_classes: int = 4, modelnet_dir=None) -> list[str]:
    """Write n labeled cloud files; returns the paths in emission order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    if generator == "synthetic":
        for i in range(n):
            label = i % n_classes
            pts = make_cloud(label, n_points, rng)
            path = out_dir / f"cloud_{i:04d}.json"
            with open(path, "w") as fh:
                json.dump({"points": pts.tolist(), "label": label}, fh)
            paths.append(str(path))
        return paths
    if generator == "modelnet":
        if modelnet_dir is None:
            raise ValueError("modelnet generator needs --modelnet-dir")
        files = sorted(Path(modelnet_dir).rglob("*.off"))
        if not files:
            raise ValueError(f"no .off meshes under {modelnet_dir}")
        classes = sorted({f.parent.parent.name for f in files})
        for i in range(n):
            f = files[i % len(files)]
            verts = _read_off_vertices(f)
            idx = rng.choice(len(verts), size=n_points,
                             replace=len(verts) < n_points)
            pts = verts[idx]
            # center and scale to the unit sphere, as is conventional
            pts = pts - pts.mean(axis=0)
            scale = np.abs(pts).max()
            if scale > 0:
                pts = pts / scale
            label = classes.index(f.parent.parent.name)
            path = out_dir / f"cloud_{i:04d}.json"
            with open(path, "w") as fh:
                json.dump({"points": pts.tolist(), "label": label}, fh)
            paths.append(str(path))
        return paths
    raise ValueError(f"unknown generator {generator!r}")


def _read_off_vertices(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "OFF":
            # some files pack the counts onto the OFF line
            if not header.startswith("OFF"):
                raise ValueError(f"{path}: not an OFF mesh")
            counts = header[3:].split()
        else:
            counts = fh.readline().split()
        n_verts = int(counts[0])
        verts = [list(map(float, fh.readline().split()[:3]))
                 for _ in range(n_verts)]
    return np.asarray(verts, dtype=np.float64)
