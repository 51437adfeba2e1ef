"""Layer-graph representation of point-cloud classifiers.

A network is an ordered list of typed layers operating on activations of
shape ``(positions, features)``.  The input activation is the point cloud
itself, ``(n_points, point_dim)``.  Multiplication layers (the alignment
blocks of PointNet-style models) reference two earlier activations by
index; every other layer consumes the immediately preceding activation.

Activations are indexed 0..m where 0 is the network input and i >= 1 is
the output of ``layers[i - 1]``.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError, ModelFormatError, ShapeChainError

AFFINE_KINDS = ("Conv1D", "Dense", "BatchNorm", "GlobalAvgPool", "Reshape", "Identity")
LAYER_KINDS = AFFINE_KINDS + ("ReLU", "GlobalMaxPool", "Multiplication")


@dataclass
class Layer:
    """One typed layer plus its parameters and resolved shapes.

    ``in_shape``/``out_shape`` are assigned when the owning network is
    built; they describe ``(positions, features)`` of the consumed and
    produced activation.
    """

    kind: str
    weight: Optional[np.ndarray] = None      # Conv1D: (K, d_out, d_in); Dense: (d_out, d_in)
    bias: Optional[np.ndarray] = None
    kernel: int = 1
    gamma: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    mean: Optional[np.ndarray] = None
    var: Optional[np.ndarray] = None
    eps_bn: float = 1e-5
    target_shape: Optional[tuple[int, int]] = None   # Reshape
    operands: Optional[tuple[int, int]] = None        # Multiplication: (trunk_act, matrix_act)
    mul_mode: Optional[str] = None                    # "matmul" | "elementwise" | None (auto)
    in_shape: tuple[int, int] = (0, 0)
    out_shape: tuple[int, int] = (0, 0)

    @property
    def in_size(self) -> int:
        return self.in_shape[0] * self.in_shape[1]

    @property
    def out_size(self) -> int:
        return self.out_shape[0] * self.out_shape[1]


@dataclass
class Network:
    """Shape-checked ordered layer graph."""

    layers: list[Layer]
    input_shape: tuple[int, int]
    num_classes: int
    # activation_shapes[i] is the shape of activation i (0 = input).
    activation_shapes: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.activation_shapes = _chain_shapes(self)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def activation_size(self, act: int) -> int:
        n, d = self.activation_shapes[act]
        return n * d

    def mul_layer_indices(self) -> list[int]:
        """Activation indices of all Multiplication layers."""
        return [i + 1 for i, ly in enumerate(self.layers) if ly.kind == "Multiplication"]


@dataclass
class PointCloud:
    """A point cloud with an optional class label."""

    points: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2:
            raise ModelFormatError("point cloud must be a 2-D array of coordinates")
        if not np.all(np.isfinite(self.points)):
            raise ModelFormatError("point cloud contains non-finite coordinates")


def _mul_out_shape(layer: Layer, shape_a: tuple[int, int], shape_b: tuple[int, int],
                   idx: int) -> tuple[int, int]:
    """Resolve the output shape and mode of a Multiplication layer.

    Operand A is the trunk branch, operand B the (reshaped) matrix
    branch.  Matching shapes multiply elementwise; otherwise A @ B must
    chain.  Square same-shape operands are ambiguous and default to
    matmul unless the layer says ``elementwise``.
    """
    matmul_ok = shape_a[1] == shape_b[0]
    elementwise_ok = shape_a == shape_b
    mode = layer.mul_mode
    if mode is None:
        if matmul_ok and elementwise_ok:
            mode = "matmul"
        elif matmul_ok:
            mode = "matmul"
        elif elementwise_ok:
            mode = "elementwise"
        else:
            raise ShapeChainError(
                f"layer {idx}: Multiplication operands {shape_a} x {shape_b} "
                "chain neither as matmul nor elementwise")
    if mode == "matmul" and not matmul_ok:
        raise ShapeChainError(
            f"layer {idx}: matmul Multiplication expects inner dims to agree, "
            f"got {shape_a} x {shape_b}")
    if mode == "elementwise" and not elementwise_ok:
        raise ShapeChainError(
            f"layer {idx}: elementwise Multiplication expects equal shapes, "
            f"got {shape_a} x {shape_b}")
    layer.mul_mode = mode
    return (shape_a[0], shape_b[1]) if mode == "matmul" else shape_a


def _chain_shapes(net: Network) -> list[tuple[int, int]]:
    """Walk the layer list assigning in/out shapes; raise on inconsistency."""
    if not net.layers:
        raise ModelFormatError("network has an empty layer list")
    shapes = [tuple(net.input_shape)]
    for i, layer in enumerate(net.layers):
        cur = shapes[-1]
        layer.in_shape = cur
        n, d = cur
        if layer.kind == "Conv1D":
            k, d_out, d_in = layer.weight.shape
            if d_in != d:
                raise ShapeChainError(
                    f"layer {i}: Conv1D expects {d_in} input features, activation has {d}")
            if n - k + 1 < 1:
                raise ShapeChainError(f"layer {i}: kernel {k} exceeds {n} positions")
            out = (n - k + 1, d_out)
        elif layer.kind == "Dense":
            if n != 1:
                raise ShapeChainError(
                    f"layer {i}: Dense expects a flat (1, F) activation, got {cur}")
            d_out, d_in = layer.weight.shape
            if d_in != d:
                raise ShapeChainError(
                    f"layer {i}: Dense expects {d_in} input features, activation has {d}")
            out = (1, d_out)
        elif layer.kind == "BatchNorm":
            if layer.gamma.shape != (d,):
                raise ShapeChainError(
                    f"layer {i}: BatchNorm over {layer.gamma.shape[0]} features, "
                    f"activation has {d}")
            out = cur
        elif layer.kind in ("ReLU", "Identity"):
            out = cur
        elif layer.kind in ("GlobalMaxPool", "GlobalAvgPool"):
            out = (1, d)
        elif layer.kind == "Reshape":
            dk, dy = layer.target_shape
            if n * d != dk * dy:
                raise ShapeChainError(
                    f"layer {i}: Reshape to {dk}x{dy} needs {dk * dy} entries, "
                    f"activation has {n * d}")
            out = (dk, dy)
        elif layer.kind == "Multiplication":
            a, b = layer.operands
            if not (0 <= a < i + 1 and 0 <= b < i + 1):
                raise ModelFormatError(
                    f"layer {i}: Multiplication operands {layer.operands} must "
                    "reference earlier activations")
            out = _mul_out_shape(layer, shapes[a], shapes[b], i)
        else:
            raise ModelFormatError(f"layer {i}: unknown kind {layer.kind!r}")
        layer.out_shape = out
        shapes.append(out)
    final = shapes[-1]
    if final != (1, net.num_classes):
        raise ShapeChainError(
            f"final activation {final} does not match (1, num_classes={net.num_classes})")
    return shapes


def _finite(arr: np.ndarray, what: str, idx: int) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ModelFormatError(f"layer {idx}: {what} contains NaN/Inf")
    return arr


def _parse_layer(doc: dict, idx: int) -> Layer:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ModelFormatError(f"layer {idx}: entry is not an object with a 'kind'")
    kind = doc["kind"]
    if kind == "Dropout":
        return Layer(kind="Identity")
    if kind == "Conv1D":
        w = _finite(doc["weight"], "weight", idx)
        kernel = int(doc.get("kernel", 1))
        if w.ndim == 2:
            if kernel != 1:
                raise ModelFormatError(
                    f"layer {idx}: 2-D Conv1D weight requires kernel 1, got {kernel}")
            w = w[None, :, :]
        elif w.ndim == 3:
            if w.shape[0] != kernel:
                raise ModelFormatError(
                    f"layer {idx}: weight leading dim {w.shape[0]} != kernel {kernel}")
        else:
            raise ModelFormatError(f"layer {idx}: Conv1D weight must be 2-D or 3-D")
        b = _finite(doc["bias"], "bias", idx)
        if b.shape != (w.shape[1],):
            raise ModelFormatError(f"layer {idx}: bias length {b.shape} != {w.shape[1]} features")
        return Layer(kind="Conv1D", weight=w, bias=b, kernel=kernel)
    if kind == "Dense":
        w = _finite(doc["weight"], "weight", idx)
        if w.ndim != 2:
            raise ModelFormatError(f"layer {idx}: Dense weight must be 2-D")
        b = _finite(doc["bias"], "bias", idx)
        if b.shape != (w.shape[0],):
            raise ModelFormatError(f"layer {idx}: bias length {b.shape} != {w.shape[0]} outputs")
        return Layer(kind="Dense", weight=w, bias=b)
    if kind == "BatchNorm":
        gamma = _finite(doc["gamma"], "gamma", idx)
        beta = _finite(doc["beta"], "beta", idx)
        mean = _finite(doc["mean"], "mean", idx)
        var = _finite(doc["var"], "var", idx)
        if not (gamma.shape == beta.shape == mean.shape == var.shape):
            raise ModelFormatError(f"layer {idx}: BatchNorm parameter shapes disagree")
        if np.any(var < 0):
            raise ModelFormatError(f"layer {idx}: BatchNorm variance must be >= 0")
        eps_bn = float(doc.get("eps", 1e-5))
        if np.any(var + eps_bn <= 0):
            raise ModelFormatError(
                f"layer {idx}: BatchNorm variance + eps must be positive")
        return Layer(kind="BatchNorm", gamma=gamma, beta=beta, mean=mean, var=var,
                     eps_bn=eps_bn)
    if kind in ("ReLU", "GlobalMaxPool", "GlobalAvgPool", "Identity"):
        return Layer(kind=kind)
    if kind == "Reshape":
        if "map" in doc:
            m = re.fullmatch(r"janet-(\d+)x(\d+)", doc["map"])
            if not m:
                raise ModelFormatError(f"layer {idx}: unrecognized reshape map {doc['map']!r}")
            shape = (int(m.group(1)), int(m.group(2)))
        elif "shape" in doc:
            shape = (int(doc["shape"][0]), int(doc["shape"][1]))
        else:
            raise ModelFormatError(f"layer {idx}: Reshape needs a 'map' or 'shape'")
        return Layer(kind="Reshape", target_shape=shape)
    if kind == "Multiplication":
        ops = doc.get("operands")
        if not (isinstance(ops, (list, tuple)) and len(ops) == 2):
            raise ModelFormatError(f"layer {idx}: Multiplication needs two operand indices")
        return Layer(kind="Multiplication", operands=(int(ops[0]), int(ops[1])),
                     mul_mode=doc.get("mode"))
    raise ModelFormatError(f"layer {idx}: unknown kind {kind!r}")


def network_from_dict(doc: dict) -> Network:
    """Build a shape-checked :class:`Network` from a parsed model document."""
    try:
        input_shape = (int(doc["input_shape"][0]), int(doc["input_shape"][1]))
        num_classes = int(doc["num_classes"])
        raw_layers = doc["layers"]
    except (KeyError, TypeError, IndexError) as exc:
        raise ModelFormatError(f"model document missing required field: {exc}") from exc
    if not isinstance(raw_layers, list) or not raw_layers:
        raise ModelFormatError("model document has an empty layer list")
    layers = [_parse_layer(entry, i) for i, entry in enumerate(raw_layers)]
    return Network(layers=layers, input_shape=input_shape, num_classes=num_classes)


def load_network(path) -> Network:
    """Load a model file (JSON) into a validated network."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not valid JSON: {exc}") from exc
    return network_from_dict(doc)


def network_to_dict(net: Network) -> dict:
    """Serialize a network back to the document form (weights round-trip bitwise)."""
    layers = []
    for layer in net.layers:
        if layer.kind == "Conv1D":
            w = layer.weight
            entry = {"kind": "Conv1D", "kernel": layer.kernel,
                     "weight": (w[0] if layer.kernel == 1 else w).tolist(),
                     "bias": layer.bias.tolist()}
        elif layer.kind == "Dense":
            entry = {"kind": "Dense", "weight": layer.weight.tolist(),
                     "bias": layer.bias.tolist()}
        elif layer.kind == "BatchNorm":
            entry = {"kind": "BatchNorm", "gamma": layer.gamma.tolist(),
                     "beta": layer.beta.tolist(), "mean": layer.mean.tolist(),
                     "var": layer.var.tolist(), "eps": layer.eps_bn}
        elif layer.kind == "Reshape":
            entry = {"kind": "Reshape",
                     "map": f"janet-{layer.target_shape[0]}x{layer.target_shape[1]}"}
        elif layer.kind == "Multiplication":
            entry = {"kind": "Multiplication", "operands": list(layer.operands)}
            if layer.mul_mode is not None:
                entry["mode"] = layer.mul_mode
        else:
            entry = {"kind": layer.kind}
        layers.append(entry)
    return {"input_shape": list(net.input_shape), "num_classes": net.num_classes,
            "layers": layers}


def save_network(net: Network, path) -> None:
    with open(path, "w") as fh:
        json.dump(network_to_dict(net), fh)


def load_point_cloud(path) -> PointCloud:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not valid JSON: {exc}") from exc
    if "points" not in doc:
        raise ModelFormatError(f"{path}: point-cloud document lacks 'points'")
    label = doc.get("label")
    return PointCloud(points=np.asarray(doc["points"], dtype=np.float64),
                      label=None if label is None else int(label))


def save_point_cloud(cloud: PointCloud, path) -> None:
    doc = {"points": cloud.points.tolist(), "label": cloud.label}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def batchnorm_fold(layer: Layer) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature (scale, shift) of a BatchNorm layer at inference."""
    scale = layer.gamma / np.sqrt(layer.var + layer.eps_bn)
    shift = layer.beta - layer.mean * scale
    return scale, shift


def affine_view(layer: Layer) -> tuple[np.ndarray, np.ndarray]:
    """Exact affine form of an affine layer over flattened activations.

    Returns ``(W_eff, b_eff)`` with ``W_eff`` of shape
    ``(out_size, in_size)`` such that ``out_flat = W_eff @ in_flat + b_eff``.
    Activations flatten row-major (position-major).
    """
    if layer.kind not in AFFINE_KINDS:
        raise ContractError(f"affine_view called on non-affine layer kind {layer.kind!r}")
    n_in, d_in = layer.in_shape
    n_out, d_out = layer.out_shape
    if layer.kind == "Conv1D":
        w_full = np.zeros((n_out * d_out, n_in * d_in))
        for x in range(n_out):
            for i in range(layer.kernel):
                w_full[x * d_out:(x + 1) * d_out,
                       (x + i) * d_in:(x + i + 1) * d_in] = layer.weight[i]
        b_full = np.tile(layer.bias, n_out)
        return w_full, b_full
    if layer.kind == "Dense":
        return layer.weight.copy(), layer.bias.copy()
    if layer.kind == "BatchNorm":
        scale, shift = batchnorm_fold(layer)
        return np.diag(np.tile(scale, n_in)), np.tile(shift, n_in)
    if layer.kind == "GlobalAvgPool":
        w_full = np.zeros((d_in, n_in * d_in))
        for j in range(d_in):
            w_full[j, j::d_in] = 1.0 / n_in
        return w_full, np.zeros(d_in)
    # Reshape and Identity are the identity on the flat vector.
    size = n_in * d_in
    return np.eye(size), np.zeros(size)


def forward_activations(net: Network, points: np.ndarray) -> list[np.ndarray]:
    """Exact forward pass returning every activation (index 0 = input)."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape != tuple(net.input_shape):
        raise ShapeChainError(
            f"input shape {points.shape} does not match network input {net.input_shape}")
    acts = [points]
    for layer in net.layers:
        x = acts[-1]
        if layer.kind == "Conv1D":
            k = layer.kernel
            n_out = x.shape[0] - k + 1
            out = np.zeros((n_out, layer.weight.shape[1]))
            for i in range(k):
                out += x[i:i + n_out] @ layer.weight[i].T
            out += layer.bias
        elif layer.kind == "Dense":
            out = x @ layer.weight.T + layer.bias
        elif layer.kind == "BatchNorm":
            scale, shift = batchnorm_fold(layer)
            out = x * scale + shift
        elif layer.kind == "ReLU":
            out = np.maximum(x, 0.0)
        elif layer.kind == "GlobalMaxPool":
            out = x.max(axis=0, keepdims=True)
        elif layer.kind == "GlobalAvgPool":
            out = x.mean(axis=0, keepdims=True)
        elif layer.kind == "Reshape":
            out = x.reshape(layer.target_shape)
        elif layer.kind == "Identity":
            out = x
        elif layer.kind == "Multiplication":
            a, b = layer.operands
            if layer.mul_mode == "matmul":
                out = acts[a] @ acts[b]
            else:
                out = acts[a] * acts[b]
        else:  # pragma: no cover - rejected at build time
            raise ModelFormatError(f"unknown layer kind {layer.kind!r}")
        acts.append(out)
    return acts


def forward_eval(net: Network, cloud) -> np.ndarray:
    """Clean forward inference; returns the logits vector."""
    points = cloud.points if isinstance(cloud, PointCloud) else cloud
    return forward_activations(net, points)[-1].ravel()
