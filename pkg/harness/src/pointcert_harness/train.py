"""Torch models materialized from recipes, and the tiny training loop."""
from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from .recipes import ModelRecipe


class _BNLast(nn.Module):
    """BatchNorm over the last (feature) axis for (B, N, C) or (B, C)."""

    def __init__(self, width: int):
        super().__init__()
        self.bn = nn.BatchNorm1d(width)

    def forward(self, x):
        if x.ndim == 3:
            b, n, c = x.shape
            return self.bn(x.reshape(b * n, c)).reshape(b, n, c)
        return self.bn(x)


class RecipeNet(nn.Module):
    """Pointwise-conv / pool / dense network following a recipe's op list."""

    def __init__(self, recipe: ModelRecipe):
        super().__init__()
        self.recipe = recipe
        mods = []
        d = 3
        for op in recipe.ops:
            if op["op"] in ("conv", "dense"):
                lin = nn.Linear(d, op["width"])
                if op.get("proj"):
                    side = int(math.isqrt(op["width"]))
                    nn.init.normal_(lin.weight, std=1e-3)
                    with torch.no_grad():
                        lin.bias.copy_(torch.eye(side).reshape(-1))
                mods.append(lin)
                d = op["width"]
                if op["bn"]:
                    mods.append(_BNLast(d))
                if op["relu"]:
                    mods.append(nn.ReLU())
            elif op["op"] == "reshape":
                d = op["dy"]   # the product that follows keeps dy features
        self.mods = nn.ModuleList(mods)

    def forward(self, x):
        anchors = {"input": x}
        mi = 0
        for op in self.recipe.ops:
            if op["op"] in ("conv", "dense"):
                x = self.mods[mi](x)
                mi += 1
                if op["bn"]:
                    x = self.mods[mi](x)
                    mi += 1
                if op["relu"]:
                    x = self.mods[mi](x)
                    mi += 1
                if op.get("anchor"):
                    anchors[op["anchor"]] = x
            elif op["op"] == "maxpool":
                x = x.max(dim=1).values if x.ndim == 3 else x
            elif op["op"] == "reshape":
                x = x.reshape(x.shape[0], op["dk"], op["dy"])
            elif op["op"] == "mul":
                x = torch.bmm(anchors[op["trunk"]], x)
        return x


def _accuracy(model: nn.Module, clouds: torch.Tensor, labels: torch.Tensor) -> float:
    model.eval()
    with torch.no_grad():
        pred = model(clouds).argmax(dim=1)
    model.train()
    return float((pred == labels).float().mean())


def _run_training(model, clouds, labels, lr, epochs, batch, generator):
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    n = clouds.shape[0]
    for _ in range(epochs):
        order = torch.randperm(n, generator=generator)
        for s in range(0, n, batch):
            idx = order[s:s + batch]
            opt.zero_grad()
            loss = loss_fn(model(clouds[idx]), labels[idx])
            if not torch.isfinite(loss):
                return math.nan
            loss.backward()
            opt.step()
    return _accuracy(model, clouds, labels)


def train_recipe(recipe: ModelRecipe, clouds: np.ndarray, labels: np.ndarray,
                 lr: float = 1e-2, epochs: int = 60, batch: int = 32,
                 target_accuracy: float = 0.9) -> tuple[RecipeNet, float]:
    """Train a recipe net on the given dataset; retries once with a smaller
    learning rate on divergence, then fails with diagnostics."""
    xs = torch.as_tensor(clouds, dtype=torch.float32)
    ys = torch.as_tensor(labels, dtype=torch.long)
    attempts = []
    for attempt_lr in (lr, lr / 5.0):
        torch.manual_seed(recipe.seed)
        generator = torch.Generator().manual_seed(recipe.seed)
        model = RecipeNet(recipe)
        acc = _run_training(model, xs, ys, attempt_lr, epochs, batch, generator)
        attempts.append((attempt_lr, acc))
        if not math.isnan(acc) and acc >= target_accuracy:
            model.eval()
            return model, acc
    raise RuntimeError(
        f"training diverged or stalled for recipe {recipe.name!r}: "
        + ", ".join(f"lr={a_lr:g} -> acc={a_acc}" for a_lr, a_acc in attempts))


def trained_model_document(recipe: ModelRecipe, model: RecipeNet) -> dict:
    """Export a trained torch net into the verifier's model format."""
    model.eval()
    layers = []
    act = 0
    anchors = {"input": 0}
    mi = 0
    for op in recipe.ops:
        kind = op["op"]
        if kind in ("conv", "dense"):
            lin = model.mods[mi]
            mi += 1
            entry = {"kind": "Conv1D" if kind == "conv" else "Dense",
                     "weight": lin.weight.detach().numpy().astype(np.float64).tolist(),
                     "bias": lin.bias.detach().numpy().astype(np.float64).tolist()}
            if kind == "conv":
                entry["kernel"] = 1
            layers.append(entry)
            act += 1
            if op["bn"]:
                bn = model.mods[mi].bn
                mi += 1
                layers.append({
                    "kind": "BatchNorm",
                    "gamma": bn.weight.detach().numpy().astype(np.float64).tolist(),
                    "beta": bn.bias.detach().numpy().astype(np.float64).tolist(),
                    "mean": bn.running_mean.numpy().astype(np.float64).tolist(),
                    "var": bn.running_var.numpy().astype(np.float64).tolist(),
                    "eps": float(bn.eps)})
                act += 1
            if op["relu"]:
                mi += 1
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
        elif kind == "mul":
            layers.append({"kind": "Multiplication",
                           "operands": [anchors[op["trunk"]], act]})
            act += 1
    return {"input_shape": [recipe.n_points, 3], "num_classes": recipe.n_classes,
            "layers": layers}
