"""Linear relaxations for the non-linear primitives.

Each relaxation sandwiches a non-linear function between two linear
forms that are valid over the whole box of input intervals.  These are
the only places the verifier loses exactness; everything else is exact
affine substitution.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError

# Intervals narrower than this (relative to magnitude) are treated as exact.
DEGENERATE_REL_TOL = 1e-12


@dataclass
class ScalarRelaxation:
    """One-variable linear bounds: alpha_L*y + beta_L <= f(y) <= alpha_U*y + beta_U."""

    alpha_L: float
    beta_L: float
    alpha_U: float
    beta_U: float


@dataclass
class MaxPoolRelaxation:
    """Bounds for the max over one pooled set of neurons.

    ``dominant`` mode means one neuron's lower bound beats every other
    neuron's upper bound, so the max equals that neuron exactly and both
    bounding forms are coefficient-1 on it.  Otherwise the lower bound is
    coefficient-1 on the neuron with the largest lower bound (the max is
    at least any single member) and the upper bound is the constant
    max of the upper bounds.  A one-neuron linear upper bound indexed by
    the argmax of the uppers would be unsound: the true max can exceed
    that neuron whenever another member beats it.
    """

    mode: str                      # "dominant" | "fallback"
    lower_index: int
    upper_index: Optional[int]     # set in dominant mode
    upper_const: Optional[float]   # set in fallback mode
    interval: tuple[float, float]


@dataclass
class MulPlanes:
    """Bounding planes for a product z = x*y over [lx,ux] x [ly,uy].

    lower: aL*x + bL*y + cL  <=  x*y  <=  aU*x + bU*y + cU :upper
    """

    aL: float
    bL: float
    cL: float
    aU: float
    bU: float
    cU: float


def relu_relaxation_arrays(lower: np.ndarray, upper: np.ndarray):
    """Vectorized ReLU relaxation parameters for pre-activation intervals.

    Returns (alpha_L, beta_L, alpha_U, beta_U) arrays of the input shape.
    Stable (non-crossing) neurons get exact zero/identity forms.  The
    lower slope picks the identity only when u > |l|, which keeps the
    worst-case area of the relaxation small; ties go to the zero slope.
    """
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    if np.any(lower > upper):
        raise ContractError("relu relaxation: lower bound exceeds upper bound")
    width = upper - lower
    tol = DEGENERATE_REL_TOL * np.maximum(np.maximum(np.abs(lower), np.abs(upper)), 1.0)

    dead = upper <= 0.0
    live = (~dead) & (lower >= 0.0)
    tiny = (~dead) & (~live) & (width < tol)
    mixed = ~(dead | live | tiny)

    safe_width = np.where(mixed, width, 1.0)
    alpha_u = np.where(mixed, upper / safe_width, 0.0)
    beta_u = np.where(mixed, -upper * lower / safe_width, 0.0)
    alpha_u = np.where(live, 1.0, alpha_u)
    # tiny straddling intervals: constant bounds 0 <= relu <= u
    beta_u = np.where(tiny, upper, beta_u)

    alpha_l = np.where(mixed & (upper > -lower), 1.0, 0.0)
    alpha_l = np.where(live, 1.0, alpha_l)
    beta_l = np.zeros_like(lower)
    return alpha_l, beta_l, alpha_u, beta_u


def relax_relu(l: float, u: float) -> ScalarRelaxation:
    """ReLU relaxation over the pre-activation interval [l, u]."""
    if not (np.isfinite(l) and np.isfinite(u)):
        raise ContractError("relu relaxation requires finite bounds")
    if l > u:
        raise ContractError(f"relu relaxation: reversed interval [{l}, {u}]")
    al, bl, au, bu = relu_relaxation_arrays(np.array([l]), np.array([u]))
    return ScalarRelaxation(float(al[0]), float(bl[0]), float(au[0]), float(bu[0]))


def relax_global_max_pool(lowers: Sequence[float], uppers: Sequence[float]) -> MaxPoolRelaxation:
    """Relaxation of max over one pooled set with per-neuron intervals."""
    lowers = np.asarray(lowers, dtype=np.float64)
    uppers = np.asarray(uppers, dtype=np.float64)
    if lowers.size == 0:
        raise ContractError("max-pool relaxation over an empty pooled set")
    if np.any(lowers > uppers):
        raise ContractError("max-pool relaxation: reversed interval")
    j = int(np.argmax(lowers))
    others = np.delete(uppers, j)
    if others.size == 0 or lowers[j] >= others.max():
        return MaxPoolRelaxation(mode="dominant", lower_index=j, upper_index=j,
                                 upper_const=None,
                                 interval=(float(lowers[j]), float(uppers[j])))
    u_max = float(uppers.max())
    return MaxPoolRelaxation(mode="fallback", lower_index=j, upper_index=None,
                             upper_const=u_max,
                             interval=(float(lowers[j]), u_max))


def mul_plane_arrays(lx, ux, ly, uy):
    """Vectorized product planes; see :func:`relax_mul` for the convention.

    Returns (aL, bL, cL, aU, bU, cU) arrays broadcast to a common shape.
    """
    lx, ux, ly, uy = np.broadcast_arrays(
        np.asarray(lx, dtype=np.float64), np.asarray(ux, dtype=np.float64),
        np.asarray(ly, dtype=np.float64), np.asarray(uy, dtype=np.float64))
    if np.any(lx > ux) or np.any(ly > uy):
        raise ContractError("product relaxation: reversed interval")
    aL = ly
    aU = uy
    b = lx
    cL = -lx * ly
    cU = -lx * uy
    return aL, b, cL, aU, b, cU


def relax_mul(lx: float, ux: float, ly: float, uy: float) -> MulPlanes:
    """Bounding planes for z = x*y over the box [lx,ux] x [ly,uy].

    The planes anchor at the lx edge of the x operand:

        lower = ly*x + lx*y - lx*ly      (tight on (x-lx)(y-ly) >= 0)
        upper = uy*x + lx*y - lx*uy      (tight on (x-lx)(y-uy) <= 0)

    In an alignment block, x is the reshaped transform-matrix entry and
    y the trunk-feature entry, so the switching coefficient (ly vs uy)
    rides on the matrix operand.
    """
    if not all(np.isfinite(v) for v in (lx, ux, ly, uy)):
        raise ContractError("product relaxation requires finite bounds")
    aL, bL, cL, aU, bU, cU = mul_plane_arrays(lx, ux, ly, uy)
    return MulPlanes(float(aL), float(bL), float(cL), float(aU), float(bU), float(cU))
