"""Independent reference implementations used for cross-checking the engine:
naive interval arithmetic, a random-sampling attack, and grid checks for
the linear relaxations."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .model import Network, PointCloud, batchnorm_fold, forward_eval
from .propagation import ConcreteBounds, PerturbationSpec
from .relaxation import MaxPoolRelaxation, MulPlanes, ScalarRelaxation


@dataclass
class AttackWitness:
    """The worst sampled perturbation found inside the ball."""

    perturbed_cloud: PointCloud
    achieved_margin: float
    distortion: float      # max over points of the per-point l_p distance


def _interval_affine(w: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    wp = np.maximum(w, 0.0)
    wm = np.minimum(w, 0.0)
    return wp @ lo + wm @ hi, wp @ hi + wm @ lo


def interval_forward(net: Network, spec: PerturbationSpec) -> list[ConcreteBounds]:
    """Interval-arithmetic forward pass; sound but dependency-blind.

    Uses the exact per-layer interval rules for affine maps, ReLU, max and
    interval products.  Returns one bounds object per activation 1..m.
    """
    lo = spec.center - spec.epsilon
    hi = spec.center + spec.epsilon
    lows = [lo]
    highs = [hi]
    out: list[ConcreteBounds] = []
    for layer in net.layers:
        lo, hi = lows[-1], highs[-1]
        kind = layer.kind
        if kind == "Conv1D":
            k = layer.kernel
            n_out = lo.shape[0] - k + 1
            new_lo = np.zeros((n_out, layer.weight.shape[1]))
            new_hi = np.zeros_like(new_lo)
            for x in range(n_out):
                seg_lo = lo[x:x + k].ravel()
                seg_hi = hi[x:x + k].ravel()
                w = np.concatenate([layer.weight[i] for i in range(k)], axis=1)
                a, b = _interval_affine(w, seg_lo, seg_hi)
                new_lo[x] = a + layer.bias
                new_hi[x] = b + layer.bias
            lo, hi = new_lo, new_hi
        elif kind == "Dense":
            a, b = _interval_affine(layer.weight, lo.ravel(), hi.ravel())
            lo, hi = (a + layer.bias)[None, :], (b + layer.bias)[None, :]
        elif kind == "BatchNorm":
            scale, shift = batchnorm_fold(layer)
            a = np.where(scale >= 0, scale * lo, scale * hi) + shift
            b = np.where(scale >= 0, scale * hi, scale * lo) + shift
            lo, hi = a, b
        elif kind == "ReLU":
            lo, hi = np.maximum(lo, 0.0), np.maximum(hi, 0.0)
        elif kind == "GlobalMaxPool":
            lo, hi = lo.max(axis=0, keepdims=True), hi.max(axis=0, keepdims=True)
        elif kind == "GlobalAvgPool":
            lo, hi = lo.mean(axis=0, keepdims=True), hi.mean(axis=0, keepdims=True)
        elif kind == "Reshape":
            lo, hi = lo.reshape(layer.target_shape), hi.reshape(layer.target_shape)
        elif kind == "Identity":
            lo, hi = lo.copy(), hi.copy()
        elif kind == "Multiplication":
            a_i, b_i = layer.operands
            alo, ahi = lows[a_i], highs[a_i]
            blo, bhi = lows[b_i], highs[b_i]
            if layer.mul_mode == "matmul":
                # interval product summed over the inner axis
                cands = np.stack([
                    alo[:, :, None] * blo[None, :, :], alo[:, :, None] * bhi[None, :, :],
                    ahi[:, :, None] * blo[None, :, :], ahi[:, :, None] * bhi[None, :, :]])
                lo = cands.min(axis=0).sum(axis=1)
                hi = cands.max(axis=0).sum(axis=1)
            else:
                cands = np.stack([alo * blo, alo * bhi, ahi * blo, ahi * bhi])
                lo = cands.min(axis=0)
                hi = cands.max(axis=0)
        else:  # pragma: no cover
            raise ContractError(f"unknown layer kind {kind!r}")
        lows.append(lo)
        highs.append(hi)
        out.append(ConcreteBounds(lower=lo, upper=hi))
    return out


def forward_batch(net: Network, clouds: np.ndarray) -> np.ndarray:
    """Vectorized forward pass over a batch of clouds (B, n, d) -> (B, classes)."""
    return activations_batch(net, clouds)[-1][:, 0, :]


def activations_batch(net: Network, clouds: np.ndarray) -> list[np.ndarray]:
    """Batched forward pass returning every activation (0..m)."""
    acts = [np.asarray(clouds, dtype=np.float64)]
    for layer in net.layers:
        x = acts[-1]
        kind = layer.kind
        if kind == "Conv1D":
            k = layer.kernel
            n_out = x.shape[1] - k + 1
            out = np.zeros((x.shape[0], n_out, layer.weight.shape[1]))
            for i in range(k):
                out += np.einsum("bnc,oc->bno", x[:, i:i + n_out], layer.weight[i])
            out += layer.bias
        elif kind == "Dense":
            out = np.einsum("bnc,oc->bno", x, layer.weight) + layer.bias
        elif kind == "BatchNorm":
            scale, shift = batchnorm_fold(layer)
            out = x * scale + shift
        elif kind == "ReLU":
            out = np.maximum(x, 0.0)
        elif kind == "GlobalMaxPool":
            out = x.max(axis=1, keepdims=True)
        elif kind == "GlobalAvgPool":
            out = x.mean(axis=1, keepdims=True)
        elif kind == "Reshape":
            out = x.reshape(x.shape[0], *layer.target_shape)
        elif kind == "Identity":
            out = x
        elif kind == "Multiplication":
            a, b = layer.operands
            out = (acts[a] @ acts[b] if layer.mul_mode == "matmul"
                   else acts[a] * acts[b])
        else:  # pragma: no cover
            raise ContractError(f"unknown layer kind {kind!r}")
        acts.append(out)
    return acts


def sample_ball(rng: np.random.Generator, n_samples: int, n_points: int,
                dim: int, eps: float, norm_p: float) -> np.ndarray:
    """Uniform samples from the per-point l_p ball of radius eps.

    l2 uses normalized Gaussian directions with U^(1/d) radii; l1 uses the
    simplex construction (normalized exponentials with random signs) with
    U^(1/d) radii; l-inf is the uniform box.
    """
    shape = (n_samples, n_points, dim)
    if eps == 0.0:
        return np.zeros(shape)
    if norm_p == math.inf:
        return rng.uniform(-eps, eps, size=shape)
    radius = eps * rng.uniform(0.0, 1.0, size=(n_samples, n_points, 1)) ** (1.0 / dim)
    if norm_p == 2:
        g = rng.normal(size=shape)
        norms = np.linalg.norm(g, axis=2, keepdims=True)
        norms[norms == 0.0] = 1.0
        return g / norms * radius
    # l1: Dirichlet(1,...,1) magnitudes with random signs
    e = rng.exponential(size=shape)
    mags = e / e.sum(axis=2, keepdims=True)
    signs = rng.choice([-1.0, 1.0], size=shape)
    return signs * mags * radius


def corner_deltas(n_points: int, dim: int, eps: float) -> np.ndarray:
    """All box corners of the per-point l-inf ball (2^(n*d) of them)."""
    flat = n_points * dim
    corners = np.array(list(itertools.product((-eps, eps), repeat=flat)))
    return corners.reshape(-1, n_points, dim)


def _per_point_distortion(delta: np.ndarray, norm_p: float) -> np.ndarray:
    if norm_p == math.inf:
        per_point = np.abs(delta).max(axis=2)
    elif norm_p == 2:
        per_point = np.linalg.norm(delta, axis=2)
    else:
        per_point = np.abs(delta).sum(axis=2)
    return per_point.max(axis=1)


def sample_attack(net: Network, cloud: PointCloud, eps: float, norm_p,
                  n_samples: int = 10000, seed: int = 0,
                  include_corners: bool = True) -> AttackWitness:
    """Random-sampling attack: returns the minimum-margin witness.

    The margin is y_c - max_{t != c} y_t with c the clean prediction.  Box
    corners are appended for l-inf whenever the flattened input dimension
    is at most 12.  Sampling runs in chunks to bound peak memory on large
    clouds; witness selection stays deterministic given the seed.
    """
    if n_samples < 1:
        raise ContractError("n_samples must be at least 1")
    norm_p = float(norm_p)
    n, d = cloud.points.shape
    rng = np.random.default_rng(seed)
    deltas = sample_ball(rng, n_samples, n, d, eps, norm_p)
    deltas[0] = 0.0   # always evaluate the center itself
    if include_corners and norm_p == math.inf and n * d <= 12 and eps > 0.0:
        deltas = np.concatenate([deltas, corner_deltas(n, d, eps)], axis=0)
    c = int(np.argmax(forward_eval(net, cloud)))
    best_margin = math.inf
    best_delta = np.zeros((n, d))
    chunk = max(1, min(len(deltas), int(2 ** 21 // max(1, n * d))))
    for s in range(0, len(deltas), chunk):
        part = deltas[s:s + chunk]
        logits = forward_batch(net, cloud.points[None, :, :] + part)
        others = np.delete(logits, c, axis=1)
        margins = logits[:, c] - others.max(axis=1)
        i = int(np.argmin(margins))
        if margins[i] < best_margin:
            best_margin = float(margins[i])
            best_delta = part[i]
    return AttackWitness(
        perturbed_cloud=PointCloud(points=cloud.points + best_delta,
                                   label=cloud.label),
        achieved_margin=best_margin,
        distortion=float(_per_point_distortion(best_delta[None], norm_p)[0]))


def plane_check(relaxation, box, grid_resolution: int = 33) -> float:
    """Max violation of a relaxation against its function on a grid.

    For :class:`MulPlanes`, ``box`` is (lx, ux, ly, uy) and the function is
    x*y on a grid_resolution^2 grid.  For :class:`ScalarRelaxation`, ``box``
    is (l, u) and the function is ReLU on grid_resolution points.  For
    :class:`MaxPoolRelaxation` (or a list of them), ``box`` is the pair of
    per-neuron (lowers, uppers) and random corners plus a grid of the box
    are checked.  Returns max(lower_form - f, f - upper_form), which must
    be <= 0 up to tolerance for a sound relaxation.
    """
    if isinstance(relaxation, MulPlanes):
        lx, ux, ly, uy = box
        xs = np.linspace(lx, ux, grid_resolution)
        ys = np.linspace(ly, uy, grid_resolution)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        f = X * Y
        low = relaxation.aL * X + relaxation.bL * Y + relaxation.cL
        up = relaxation.aU * X + relaxation.bU * Y + relaxation.cU
        return float(max((low - f).max(), (f - up).max()))
    if isinstance(relaxation, ScalarRelaxation):
        l, u = box
        ys = np.linspace(l, u, grid_resolution)
        f = np.maximum(ys, 0.0)
        low = relaxation.alpha_L * ys + relaxation.beta_L
        up = relaxation.alpha_U * ys + relaxation.beta_U
        return float(max((low - f).max(), (f - up).max()))
    if isinstance(relaxation, MaxPoolRelaxation):
        lowers, uppers = (np.asarray(b, dtype=np.float64) for b in box)
        k = lowers.size
        rng = np.random.default_rng(12345)
        pts = rng.uniform(size=(grid_resolution * grid_resolution, k))
        pts = lowers + pts * (uppers - lowers)
        pts = np.concatenate([pts, lowers[None, :], uppers[None, :]])
        f = pts.max(axis=1)
        low = pts[:, relaxation.lower_index]
        if relaxation.mode == "dominant":
            up = pts[:, relaxation.upper_index]
        else:
            up = np.full(f.shape, relaxation.upper_const)
        return float(max((low - f).max(), (f - up).max()))
    raise ContractError(f"unsupported relaxation object {type(relaxation).__name__}")
