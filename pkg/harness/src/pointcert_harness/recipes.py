"""Model recipes: desk-scale PointNet variants with and without the
alignment (T-Net + multiplication) block.

Recipes are abstract op lists; the same walk materializes either a torch
module for training or a model document in the verifier's file format.
Conv/dense widths follow the reference layer tables divided by a width
divisor.  Two structural additions the tables leave implicit: a final
classifier head, and (for the full model) a Dense(9) projection so the
alignment matrix reshapes to 3x3 against the raw input.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _w(width: int, div: int) -> int:
    return max(1, width // div)


def _conv(width, bn=True, relu=True, anchor=None):
    return {"op": "conv", "width": width, "bn": bn, "relu": relu, "anchor": anchor}


def _dense(width, bn=True, relu=True):
    return {"op": "dense", "width": width, "bn": bn, "relu": relu}


def tnet_ops(div: int) -> list[dict]:
    """Standalone T-Net table: conv 32/64/512, pool, dense 256/512, reshape,
    multiplication.  The 512/div-wide dense reshapes to (64/div) x 8 against
    the 64/div-feature conv trunk, so the block chains at any divisor."""
    dk = _w(64, div)
    flat = _w(512, div)
    dy = flat // dk
    if dk * dy != flat:
        raise ValueError(f"width divisor {div} breaks the reshape: {flat} vs {dk}x{dy}")
    return [
        _conv(_w(32, div)),
        _conv(dk, anchor="trunk"),
        _conv(flat),
        {"op": "maxpool"},
        _dense(_w(256, div)),
        _dense(flat),
        {"op": "reshape", "dk": dk, "dy": dy},
        {"op": "mul", "trunk": "trunk"},
        {"op": "maxpool"},
    ]


def full_janet_ops(div: int) -> list[dict]:
    """Full model: input-transform T-Net multiplying the raw cloud, then the
    conv/pool/dense trunk."""
    return [
        # T-Net branch on the input
        _conv(_w(32, div)),
        _conv(_w(64, div)),
        _conv(_w(512, div)),
        {"op": "maxpool"},
        _dense(_w(256, div)),
        _dense(_w(512, div)),
        # alignment-matrix projection, identity-initialized
        {"op": "dense", "width": 9, "bn": False, "relu": False, "proj": True},
        {"op": "reshape", "dk": 3, "dy": 3},
        {"op": "mul", "trunk": "input"},
        # trunk
        _conv(_w(32, div)),
        _conv(_w(64, div)),
        _conv(_w(512, div)),
        {"op": "maxpool"},
        _dense(_w(512, div)),
        _dense(_w(256, div)),
    ]


def no_janet_7_ops(div: int) -> list[dict]:
    return [
        _conv(_w(32, div)), _conv(_w(32, div)), _conv(_w(64, div)),
        _conv(_w(512, div)),
        {"op": "maxpool"},
        _dense(_w(512, div)), _dense(_w(256, div)),
    ]


def no_janet_12_ops(div: int) -> list[dict]:
    return [
        _conv(_w(32, div)), _conv(_w(32, div)), _conv(_w(64, div)),
        _conv(_w(64, div)), _conv(_w(512, div)), _conv(_w(512, div)),
        {"op": "maxpool"},
        _dense(_w(512, div)), _dense(_w(256, div)), _dense(_w(256, div)),
        _dense(_w(128, div)), _dense(_w(128, div)),
    ]


RECIPE_TABLES = {
    "tnet": tnet_ops,
    "full-janet": full_janet_ops,
    "no-janet-7": no_janet_7_ops,
    "no-janet-12": no_janet_12_ops,
}


@dataclass
class ModelRecipe:
    name: str
    width_div: int = 8
    n_points: int = 64
    n_classes: int = 4
    seed: int = 0
    ops: list = field(default_factory=list)

    def __post_init__(self):
        if self.name not in RECIPE_TABLES:
            raise ValueError(f"unknown recipe {self.name!r}; "
                             f"choose from {sorted(RECIPE_TABLES)}")
        if self.n_classes < 2:
            raise ValueError("a classifier needs at least 2 classes")
        if not self.ops:
            self.ops = RECIPE_TABLES[self.name](self.width_div)
            self.ops.append(_dense(self.n_classes, bn=False, relu=False))


def random_model_document(recipe: ModelRecipe) -> dict:
    """Seeded random weights in the verifier's model format (no torch)."""
    rng = np.random.default_rng(recipe.seed)
    layers = []
    d = 3
    act = 0
    anchors = {"input": 0}
    for op in recipe.ops:
        kind = op["op"]
        if kind in ("conv", "dense"):
            w_out = op["width"]
            weight = rng.normal(size=(w_out, d)) * np.sqrt(2.0 / d)
            bias = np.zeros(w_out)
            if op.get("proj"):
                # alignment projection: start near the identity transform
                weight = weight * 0.01
                bias = np.eye(int(np.sqrt(w_out))).ravel()
            entry_kind = "Conv1D" if kind == "conv" else "Dense"
            entry = {"kind": entry_kind, "weight": weight.tolist(),
                     "bias": bias.tolist()}
            if kind == "conv":
                entry["kernel"] = 1
            layers.append(entry)
            act += 1
            d = w_out
            if op["bn"]:
                layers.append({"kind": "BatchNorm", "gamma": [1.0] * d,
                               "beta": [0.0] * d, "mean": [0.0] * d,
                               "var": [1.0] * d, "eps": 1e-5})
                act += 1
            if op["relu"]:
                layers.append({"kind": "ReLU"})
                act += 1
            if op.get("anchor"):
                anchors[op["anchor"]] = act
        elif kind == "maxpool":
            layers.append({"kind": "GlobalMaxPool"})
            act += 1
        elif kind == "reshape":
            layers.append({"kind": "Reshape", "map": f"janet-{op['dk']}x{op['dy']}"})
            act += 1
            d = op["dy"]
        elif kind == "mul":
            layers.append({"kind": "Multiplication",
                           "operands": [anchors[op["trunk"]], act]})
            act += 1
    return {"input_shape": [recipe.n_points, 3], "num_classes": recipe.n_classes,
            "layers": layers}
