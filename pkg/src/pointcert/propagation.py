"""Backward linear bound propagation with forward-composed product layers.

Every activation gets linear lower/upper forms in terms of an earlier
reference activation,

    AL @ phi_ref + BL  <=  phi_target  <=  AU @ phi_ref + BU,

initialized as the identity at the target and substituted backwards:
exactly through affine layers, via per-neuron relaxations through ReLU
and global max pooling (positive coefficients take the same-side
relaxation, negative take the opposite side).  Multiplication layers
are handled once in a forward step: both operands' input-relative forms
are combined through product planes into input-relative forms
(Lambda, Theta) for the product activation, and any later backward pass
that reaches the multiplication layer composes with those forms and
jumps straight to the input.

Concretization turns input-relative forms into scalar intervals: the
form's value at the unperturbed cloud, plus/minus epsilon times the sum
over points of the per-point dual norm of the coefficients (each point
moves independently inside its own l_p ball).

Activations flatten row-major, so entry (x, y) of an (n, d) activation
is flat index x * d + y.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, ShapeChainError
from .model import Layer, Network, PointCloud, affine_view, batchnorm_fold
from .relaxation import (MaxPoolRelaxation, ScalarRelaxation,
                         relax_global_max_pool, relu_relaxation_arrays)

_NORMS = {1, 2, math.inf}


@dataclass
class PerturbationSpec:
    """Per-point l_p ball around a center cloud: each point independently
    within distance epsilon of its unperturbed position."""

    center: np.ndarray
    norm_p: float
    epsilon: float

    def __post_init__(self):
        if isinstance(self.center, PointCloud):
            self.center = self.center.points
        self.center = np.asarray(self.center, dtype=np.float64)
        self.norm_p = float(self.norm_p)
        if self.norm_p not in _NORMS:
            raise ContractError(f"unsupported norm p={self.norm_p}; use 1, 2 or inf")
        if not (self.epsilon >= 0.0) or not np.isfinite(self.epsilon):
            raise ContractError("epsilon must be a finite non-negative real")

    @property
    def dual_q(self) -> float:
        """Dual exponent q with 1/p + 1/q = 1."""
        if self.norm_p == 1:
            return math.inf
        if self.norm_p == 2:
            return 2.0
        return 1.0


@dataclass
class ConcreteBounds:
    """Per-neuron scalar intervals for one activation, shaped (n, d)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.lower.shape != self.upper.shape:
            raise ContractError("concrete bounds shape mismatch")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ContractError("concrete bounds must be finite")
        if np.any(self.lower > self.upper):
            raise ContractError("concrete lower bound exceeds upper bound")

    @property
    def lower_flat(self) -> np.ndarray:
        return self.lower.ravel()

    @property
    def upper_flat(self) -> np.ndarray:
        return self.upper.ravel()

    def width(self) -> np.ndarray:
        return self.upper - self.lower


@dataclass
class LinearBounds:
    """Linear forms of one activation's neurons over a reference activation."""

    ref_layer: int
    target_layer: int
    AL: np.ndarray
    BL: np.ndarray
    AU: np.ndarray
    BU: np.ndarray
    target_shape: Optional[tuple[int, int]] = None

    @classmethod
    def identity(cls, act: int, size: int,
                 target_shape: Optional[tuple[int, int]] = None) -> "LinearBounds":
        eye = np.eye(size)
        zero = np.zeros(size)
        return cls(ref_layer=act, target_layer=act, AL=eye, BL=zero,
                   AU=eye.copy(), BU=zero.copy(), target_shape=target_shape)


@dataclass
class MulInputBounds:
    """Input-relative forms of a multiplication activation:
    LambdaL @ p + ThetaL <= phi_mul <= LambdaU @ p + ThetaU."""

    LambdaL: np.ndarray
    ThetaL: np.ndarray
    LambdaU: np.ndarray
    ThetaU: np.ndarray
    mul_layer: int = -1
    out_shape: Optional[tuple[int, int]] = None


def _split(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.maximum(a, 0.0), np.minimum(a, 0.0)


# ---------------------------------------------------------------------------
# single backward steps on raw (AL, BL, AU, BU) arrays
# ---------------------------------------------------------------------------

def _step_affine(forms, layer: Layer, w_cache=None):
    """Exact substitution through an affine layer (no relaxation)."""
    AL, BL, AU, BU = forms
    if layer.kind in ("Reshape", "Identity"):
        return AL, BL, AU, BU
    if layer.kind == "BatchNorm":
        scale, shift = batchnorm_fold(layer)
        scale_f = np.tile(scale, layer.in_shape[0])
        shift_f = np.tile(shift, layer.in_shape[0])
        return (AL * scale_f, BL + AL @ shift_f,
                AU * scale_f, BU + AU @ shift_f)
    if layer.kind == "Conv1D" and layer.kernel == 1:
        # pointwise conv: the full affine map is block-diagonal over
        # positions, so contract the shared weight in one large product
        # instead of materializing the block matrix
        n, d_out = layer.out_shape
        d_in = layer.in_shape[1]
        w = layer.weight[0]
        b = layer.bias

        def sub(A, B):
            T = A.shape[0]
            A2 = A.reshape(T * n, d_out)
            return ((A2 @ w).reshape(T, n * d_in),
                    B + (A2 @ b).reshape(T, n).sum(axis=1))

        new_AL, new_BL = sub(AL, BL)
        new_AU, new_BU = sub(AU, BU)
        return new_AL, new_BL, new_AU, new_BU
    if w_cache is not None:
        w_full, b_full = w_cache
    else:
        w_full, b_full = affine_view(layer)
    return (AL @ w_full, BL + AL @ b_full,
            AU @ w_full, BU + AU @ b_full)


def _step_relu(forms, alphas):
    # same-side relaxation on positive coefficients, opposite on negative:
    # A+*a_same + A-*a_opp written as A*a_same + A-*(a_opp - a_same) to
    # touch each matrix once
    alpha_l, beta_l, alpha_u, beta_u = alphas
    AL, BL, AU, BU = forms
    ALm = np.minimum(AL, 0.0)
    AUm = np.minimum(AU, 0.0)
    new_AL = AL * alpha_l + ALm * (alpha_u - alpha_l)
    new_BL = BL + AL @ beta_l + ALm @ (beta_u - beta_l)
    new_AU = AU * alpha_u + AUm * (alpha_l - alpha_u)
    new_BU = BU + AU @ beta_u + AUm @ (beta_l - beta_u)
    return new_AL, new_BL, new_AU, new_BU


def _maxpool_index_arrays(relaxes: Sequence[MaxPoolRelaxation], pre_shape):
    """Flat source indices / constants for a stack of per-feature pool relaxations."""
    n, d = pre_shape
    low_idx = np.array([r.lower_index * d + j for j, r in enumerate(relaxes)])
    up_linear = np.array([r.mode == "dominant" for r in relaxes])
    up_idx = np.array([(r.upper_index if r.upper_index is not None else 0) * d + j
                       for j, r in enumerate(relaxes)])
    up_const = np.array([0.0 if r.upper_const is None else r.upper_const
                         for r in relaxes])
    return low_idx, up_linear, up_idx, up_const


def _step_maxpool(forms, relaxes: Sequence[MaxPoolRelaxation], pre_shape):
    """Substitute through global max pooling: the target's coefficients on
    pooled outputs are rewritten onto pre-pool neurons (or constants)."""
    n, d = pre_shape
    AL, BL, AU, BU = forms
    low_idx, up_linear, up_idx, up_const = _maxpool_index_arrays(relaxes, pre_shape)
    src = n * d

    def one_side(A, B, same_first: bool):
        # same_first: for the upper side, positive coefficients take the
        # upper relaxation; for the lower side, positive take the lower.
        Ap, Am = _split(A)
        A_new = np.zeros((A.shape[0], src))
        B_new = B.copy()
        if same_first:   # upper side
            lin = Ap * up_linear
            np.add.at(A_new.T, up_idx, (lin).T)
            np.add.at(A_new.T, low_idx, Am.T)
            B_new = B_new + Ap @ up_const
        else:            # lower side
            np.add.at(A_new.T, low_idx, Ap.T)
            lin = Am * up_linear
            np.add.at(A_new.T, up_idx, lin.T)
            B_new = B_new + Am @ up_const
        return A_new, B_new

    new_AL, new_BL = one_side(AL, BL, same_first=False)
    new_AU, new_BU = one_side(AU, BU, same_first=True)
    return new_AL, new_BL, new_AU, new_BU


def _step_compose_mul(forms, mul: MulInputBounds):
    AL, BL, AU, BU = forms
    ALp, ALm = _split(AL)
    AUp, AUm = _split(AU)
    new_AL = ALp @ mul.LambdaL + ALm @ mul.LambdaU
    new_BL = BL + ALp @ mul.ThetaL + ALm @ mul.ThetaU
    new_AU = AUp @ mul.LambdaU + AUm @ mul.LambdaL
    new_BU = BU + AUp @ mul.ThetaU + AUm @ mul.ThetaL
    return new_AL, new_BL, new_AU, new_BU


# ---------------------------------------------------------------------------
# public single-step operations on LinearBounds
# ---------------------------------------------------------------------------

def backprop_affine(lb: LinearBounds, layer: Layer) -> LinearBounds:
    """Push bounds exactly through one affine layer (ref moves one back)."""
    if layer.kind not in ("Conv1D", "Dense", "BatchNorm", "GlobalAvgPool",
                          "Reshape", "Identity"):
        raise ContractError(f"backprop_affine on non-affine layer {layer.kind!r}")
    if lb.AL.shape[1] != layer.out_size:
        raise ContractError(
            f"bounds reference {lb.AL.shape[1]} neurons, layer outputs {layer.out_size}")
    AL, BL, AU, BU = _step_affine((lb.AL, lb.BL, lb.AU, lb.BU), layer)
    return LinearBounds(ref_layer=lb.ref_layer - 1, target_layer=lb.target_layer,
                        AL=AL, BL=BL, AU=AU, BU=BU, target_shape=lb.target_shape)


def backprop_nonlinear(lb: LinearBounds, relax, pre_shape=None) -> LinearBounds:
    """Push bounds through a relaxed non-linear layer.

    ``relax`` is either a per-neuron sequence of :class:`ScalarRelaxation`
    (or a 4-tuple of coefficient arrays) for elementwise activations, or a
    per-feature sequence of :class:`MaxPoolRelaxation` together with the
    pre-pool ``(n, d)`` shape.
    """
    if isinstance(relax, (list, tuple)) and relax and isinstance(relax[0], MaxPoolRelaxation):
        if pre_shape is None:
            raise ContractError("max-pool substitution needs the pre-pool shape")
        if len(relax) != pre_shape[1]:
            raise ContractError("one max-pool relaxation per pooled feature required")
        AL, BL, AU, BU = _step_maxpool((lb.AL, lb.BL, lb.AU, lb.BU), relax, pre_shape)
    else:
        if isinstance(relax, (list, tuple)) and relax and isinstance(relax[0], ScalarRelaxation):
            alphas = (np.array([r.alpha_L for r in relax]),
                      np.array([r.beta_L for r in relax]),
                      np.array([r.alpha_U for r in relax]),
                      np.array([r.beta_U for r in relax]))
        else:
            alphas = tuple(np.asarray(a, dtype=np.float64) for a in relax)
        if alphas[0].shape[0] != lb.AL.shape[1]:
            raise ContractError("missing relaxation for a referenced neuron")
        AL, BL, AU, BU = _step_relu((lb.AL, lb.BL, lb.AU, lb.BU), alphas)
    return LinearBounds(ref_layer=lb.ref_layer - 1, target_layer=lb.target_layer,
                        AL=AL, BL=BL, AU=AU, BU=BU, target_shape=lb.target_shape)


def compose_at_mul(lb: LinearBounds, mul: MulInputBounds) -> LinearBounds:
    """Compose bounds that reached a multiplication activation with its
    input-relative forms, yielding input-relative bounds in one step."""
    if mul.mul_layer >= 0 and lb.ref_layer != mul.mul_layer:
        raise ContractError(
            f"bounds reference activation {lb.ref_layer}, not the multiplication "
            f"activation {mul.mul_layer}")
    if lb.AL.shape[1] != mul.LambdaL.shape[0]:
        raise ContractError("coefficient width does not match the product activation")
    AL, BL, AU, BU = _step_compose_mul((lb.AL, lb.BL, lb.AU, lb.BU), mul)
    return LinearBounds(ref_layer=0, target_layer=lb.target_layer,
                        AL=AL, BL=BL, AU=AU, BU=BU, target_shape=lb.target_shape)


def dual_radius(A: np.ndarray, n_points: int, point_dim: int, q: float) -> np.ndarray:
    """Sum over points of the per-point l_q norm of each row's coefficients."""
    blocks = A.reshape(A.shape[0], n_points, point_dim)
    if q == 1.0:
        per_point = np.abs(blocks).sum(axis=2)
    elif q == 2.0:
        per_point = np.sqrt((blocks * blocks).sum(axis=2))
    else:
        per_point = np.abs(blocks).max(axis=2)
    return per_point.sum(axis=1)


def concretize(lb: LinearBounds, spec: PerturbationSpec) -> ConcreteBounds:
    """Minimize/maximize input-relative forms over the perturbation set."""
    if lb.ref_layer != 0:
        raise ContractError("concretize requires bounds expressed over the input")
    n, d = spec.center.shape
    if lb.AL.shape[1] != n * d:
        raise ShapeChainError(
            f"forms over {lb.AL.shape[1]} inputs, spec center has {n * d}")
    p0 = spec.center.ravel()
    q = spec.dual_q
    lower = lb.AL @ p0 + lb.BL - spec.epsilon * dual_radius(lb.AL, n, d, q)
    upper = lb.AU @ p0 + lb.BU + spec.epsilon * dual_radius(lb.AU, n, d, q)
    shape = lb.target_shape if lb.target_shape is not None else (1, lower.size)
    return ConcreteBounds(lower=lower.reshape(shape), upper=upper.reshape(shape))


def forward_mul_bounds(trunk_lb: LinearBounds, matrix_lb: LinearBounds,
                       trunk_cb: ConcreteBounds, matrix_cb: ConcreteBounds,
                       out_shape: tuple[int, int], mode: str = "matmul",
                       mul_layer: int = -1) -> MulInputBounds:
    """Build input-relative forms for a product activation.

    ``trunk`` is the earlier-branch operand (n, dk); ``matrix`` is the
    operand feeding the product from the adjacent reshape (dk, dy), whose
    row-major flat layout realizes the index map h = dy*k + y.  For every
    product term the planes of :func:`relax_mul` are substituted with the
    operands' input-relative forms, matching relaxation side to the sign
    of each plane coefficient.
    """
    if trunk_lb.ref_layer != 0 or matrix_lb.ref_layer != 0:
        raise ContractError("operand bounds must already be input-relative")
    S = trunk_lb.AL.shape[1]
    lT, uT = trunk_cb.lower, trunk_cb.upper
    lM, uM = matrix_cb.lower, matrix_cb.upper
    if trunk_lb.AL.shape[0] != lT.size or matrix_lb.AL.shape[0] != lM.size:
        raise ContractError("operand concrete bounds do not match their forms")
    if mode == "matmul" and lT.shape[1] != lM.shape[0]:
        raise ContractError(
            f"product index map mismatch: trunk {lT.shape} vs matrix {lM.shape}")
    if mode == "elementwise" and lT.shape != lM.shape:
        raise ContractError(
            f"elementwise product needs equal shapes, got {lT.shape} vs {lM.shape}")
    if mode == "elementwise":
        lT, uT, lM, uM = (a.ravel() for a in (lT, uT, lM, uM))
        aLp, aLm = _split(lT)          # coefficient on the matrix operand, lower
        aUp, aUm = _split(uT)          # coefficient on the matrix operand, upper
        bp, bm = _split(lM)            # coefficient on the trunk operand, both sides
        AM_L, AM_U = matrix_lb.AL, matrix_lb.AU
        AT_L, AT_U = trunk_lb.AL, trunk_lb.AU
        LamL = (aLp[:, None] * AM_L + aLm[:, None] * AM_U
                + bp[:, None] * AT_L + bm[:, None] * AT_U)
        TheL = (aLp * matrix_lb.BL + aLm * matrix_lb.BU
                + bp * trunk_lb.BL + bm * trunk_lb.BU - lM * lT)
        LamU = (aUp[:, None] * AM_U + aUm[:, None] * AM_L
                + bp[:, None] * AT_U + bm[:, None] * AT_L)
        TheU = (aUp * matrix_lb.BU + aUm * matrix_lb.BL
                + bp * trunk_lb.BU + bm * trunk_lb.BL - lM * uT)
        return MulInputBounds(LambdaL=LamL, ThetaL=TheL, LambdaU=LamU, ThetaU=TheU,
                              mul_layer=mul_layer, out_shape=out_shape)

    n, dk = lT.shape
    dy = lM.shape[1]
    AT_L = trunk_lb.AL.reshape(n, dk, S)
    AT_U = trunk_lb.AU.reshape(n, dk, S)
    BT_L = trunk_lb.BL.reshape(n, dk)
    BT_U = trunk_lb.BU.reshape(n, dk)
    AM_L = matrix_lb.AL.reshape(dk, dy, S)
    AM_U = matrix_lb.AU.reshape(dk, dy, S)
    BM_L = matrix_lb.BL.reshape(dk, dy)
    BM_U = matrix_lb.BU.reshape(dk, dy)

    aLp, aLm = _split(lT)
    aUp, aUm = _split(uT)
    bp, bm = _split(lM)

    LamL = (np.einsum("xk,kys->xys", aLp, AM_L) + np.einsum("xk,kys->xys", aLm, AM_U)
            + np.einsum("ky,xks->xys", bp, AT_L) + np.einsum("ky,xks->xys", bm, AT_U))
    TheL = (aLp @ BM_L + aLm @ BM_U
            + np.einsum("ky,xk->xy", bp, BT_L) + np.einsum("ky,xk->xy", bm, BT_U)
            - lT @ lM)
    LamU = (np.einsum("xk,kys->xys", aUp, AM_U) + np.einsum("xk,kys->xys", aUm, AM_L)
            + np.einsum("ky,xks->xys", bp, AT_U) + np.einsum("ky,xks->xys", bm, AT_L))
    TheU = (aUp @ BM_U + aUm @ BM_L
            + np.einsum("ky,xk->xy", bp, BT_U) + np.einsum("ky,xk->xy", bm, BT_L)
            - uT @ lM)
    size = n * dy
    return MulInputBounds(LambdaL=LamL.reshape(size, S), ThetaL=TheL.ravel(),
                          LambdaU=LamU.reshape(size, S), ThetaU=TheU.ravel(),
                          mul_layer=mul_layer, out_shape=out_shape)


# ---------------------------------------------------------------------------
# whole-network engine
# ---------------------------------------------------------------------------

class BoundPropagator:
    """Computes and caches concrete bounds for every activation of a network
    under one perturbation spec.

    Pure given (network, spec); per-layer relaxations, effective affine
    weights, operand forms and product forms are built once and reused.
    """

    def __init__(self, net: Network, spec: PerturbationSpec):
        if tuple(spec.center.shape) != tuple(net.input_shape):
            raise ShapeChainError(
                f"center cloud {spec.center.shape} does not match network "
                f"input {net.input_shape}")
        self.net = net
        self.spec = spec
        self._concrete: dict[int, ConcreteBounds] = {0: self.input_box()}
        self._forms: dict[int, tuple] = {}
        self._mul: dict[int, MulInputBounds] = {}
        self._relu_alphas: dict[int, tuple] = {}
        self._pool_relax: dict[int, list[MaxPoolRelaxation]] = {}
        self._w_cache: dict[int, tuple] = {}
        self._operand_acts = set()
        for i, ly in enumerate(net.layers):
            if ly.kind == "Multiplication":
                self._operand_acts.update(ly.operands)
        self._computed_upto = 0

    def input_box(self) -> ConcreteBounds:
        eps = self.spec.epsilon
        return ConcreteBounds(lower=self.spec.center - eps,
                              upper=self.spec.center + eps)

    # -- cache builders -----------------------------------------------------

    def _weights(self, layer_idx: int) -> tuple:
        if layer_idx not in self._w_cache:
            self._w_cache[layer_idx] = affine_view(self.net.layers[layer_idx])
        return self._w_cache[layer_idx]

    def _relu_relax(self, act: int):
        """Relaxation arrays for the ReLU at activation index ``act``."""
        if act not in self._relu_alphas:
            pre = self._concrete[act - 1]
            self._relu_alphas[act] = relu_relaxation_arrays(pre.lower_flat,
                                                            pre.upper_flat)
        return self._relu_alphas[act]

    def _pool_relaxations(self, act: int) -> list[MaxPoolRelaxation]:
        if act not in self._pool_relax:
            pre = self._concrete[act - 1]
            self._pool_relax[act] = [
                relax_global_max_pool(pre.lower[:, j], pre.upper[:, j])
                for j in range(pre.lower.shape[1])]
        return self._pool_relax[act]

    # -- backward passes ----------------------------------------------------

    def _backward(self, forms, start_act: int):
        """Substitute raw (AL, BL, AU, BU) forms referencing ``start_act``
        down to the input; returns input-relative raw forms."""
        ref = start_act
        while ref > 0:
            layer = self.net.layers[ref - 1]
            kind = layer.kind
            if kind == "Multiplication":
                forms = _step_compose_mul(forms, self._mul[ref])
                return forms
            if kind == "ReLU":
                forms = _step_relu(forms, self._relu_relax(ref))
            elif kind == "GlobalMaxPool":
                forms = _step_maxpool(forms, self._pool_relaxations(ref),
                                      layer.in_shape)
            elif kind in ("Reshape", "Identity"):
                pass
            elif kind == "BatchNorm":
                forms = _step_affine(forms, layer)
            else:
                forms = _step_affine(forms, layer, self._weights(ref - 1))
            ref -= 1
        return forms

    def _identity_forms(self, act: int):
        size = self.net.activation_size(act)
        eye = np.eye(size)
        zero = np.zeros(size)
        return eye, zero, eye.copy(), zero.copy()

    def input_forms(self, act: int):
        """Input-relative raw forms (AL, BL, AU, BU) of one activation."""
        if act == 0:
            return self._identity_forms(0)
        if act not in self._forms:
            self.ensure(act if self.net.layers[act - 1].kind == "Multiplication"
                        else act - 1)
            layer = self.net.layers[act - 1]
            if layer.kind == "Multiplication":
                m = self._mul[act]
                forms = (m.LambdaL.copy(), m.ThetaL.copy(),
                         m.LambdaU.copy(), m.ThetaU.copy())
            else:
                forms = self._backward(self._identity_forms(act), act)
            self._forms[act] = forms
        return self._forms[act]

    def _mul_input_bounds(self, act: int) -> MulInputBounds:
        layer = self.net.layers[act - 1]
        t_act, m_act = layer.operands
        tAL, tBL, tAU, tBU = self.input_forms(t_act)
        mAL, mBL, mAU, mBU = self.input_forms(m_act)
        t_lb = LinearBounds(0, t_act, tAL, tBL, tAU, tBU,
                            target_shape=self.net.activation_shapes[t_act])
        m_lb = LinearBounds(0, m_act, mAL, mBL, mAU, mBU,
                            target_shape=self.net.activation_shapes[m_act])
        return forward_mul_bounds(t_lb, m_lb, self._concrete[t_act],
                                  self._concrete[m_act], layer.out_shape,
                                  mode=layer.mul_mode, mul_layer=act)

    # -- per-activation concrete bounds --------------------------------------

    def _concretize_forms(self, forms, shape) -> ConcreteBounds:
        AL, BL, AU, BU = forms
        lb = LinearBounds(0, -1, AL, BL, AU, BU, target_shape=shape)
        return concretize(lb, self.spec)

    def _compute_act(self, act: int) -> ConcreteBounds:
        layer = self.net.layers[act - 1]
        kind = layer.kind
        prev = self._concrete[act - 1]
        shape = layer.out_shape
        if kind in ("Identity",):
            return ConcreteBounds(prev.lower.copy(), prev.upper.copy())
        if kind == "Reshape":
            return ConcreteBounds(prev.lower.reshape(shape),
                                  prev.upper.reshape(shape))
        if kind == "BatchNorm":
            scale, shift = batchnorm_fold(layer)
            lo = np.where(scale >= 0, scale * prev.lower, scale * prev.upper) + shift
            hi = np.where(scale >= 0, scale * prev.upper, scale * prev.lower) + shift
            return ConcreteBounds(lo, hi)
        if kind == "ReLU":
            al, bl, au, bu = self._relu_relax(act)
            lo = (al * prev.lower_flat + bl).reshape(shape)
            hi = (au * prev.upper_flat + bu).reshape(shape)
            return ConcreteBounds(lo, hi)
        if kind == "GlobalMaxPool":
            relaxes = self._pool_relaxations(act)
            lo = np.array([[r.interval[0] for r in relaxes]])
            hi = np.array([[r.interval[1] for r in relaxes]])
            return ConcreteBounds(lo, hi)
        if kind == "Multiplication":
            m = self._mul_input_bounds(act)
            self._mul[act] = m
            return self._concretize_forms(
                (m.LambdaL, m.ThetaL, m.LambdaU, m.ThetaU), shape)
        # Conv1D / Dense / GlobalAvgPool: real backward pass, starting from
        # the layer's own affine forms (identity at the target folded in).
        w_full, b_full = self._weights(act - 1)
        forms = (w_full, b_full, w_full.copy(), b_full.copy())
        forms = self._backward(forms, act - 1)
        return self._concretize_forms(forms, shape)

    def ensure(self, act: int) -> None:
        """Compute cached bounds for activations 1..act in order."""
        for a in range(self._computed_upto + 1, act + 1):
            self._concrete[a] = self._compute_act(a)
            self._computed_upto = a

    def concrete(self, act: int) -> ConcreteBounds:
        self.ensure(act)
        return self._concrete[act]

    def all_bounds(self) -> list[ConcreteBounds]:
        m = self.net.num_layers
        self.ensure(m)
        return [self._concrete[a] for a in range(1, m + 1)]

    def linear_form_bounds(self, rows: np.ndarray,
                           bias: Optional[np.ndarray] = None) -> ConcreteBounds:
        """Bounds of ``rows @ logits + bias`` over the perturbation set.

        ``rows`` acts as a virtual affine layer appended to the network and
        propagated as one linear form.
        """
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        m = self.net.num_layers
        if rows.shape[1] != self.net.activation_size(m):
            raise ContractError("virtual rows do not match the output layer width")
        self.ensure(m)
        b = np.zeros(rows.shape[0]) if bias is None else np.asarray(bias, float)
        forms = (rows, b, rows.copy(), b.copy())
        forms = self._backward(forms, m)
        return self._concretize_forms(forms, (1, rows.shape[0]))


def compute_all_bounds(net: Network, spec: PerturbationSpec) -> list[ConcreteBounds]:
    """Concrete bounds for every activation 1..m, in layer order."""
    return BoundPropagator(net, spec).all_bounds()
