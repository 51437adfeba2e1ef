"""Certified margin bounds and binary search for the maximal certified radius."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError
from .model import Network, PointCloud, forward_eval
from .propagation import BoundPropagator, PerturbationSpec

# The doubling phase of the radius search stops here so that networks whose
# margins never fail (e.g. input-independent logits) still terminate.
HI_CAP_FACTOR = 64.0


@dataclass
class MarginQuery:
    """A true class and the target classes to certify against."""

    true_class: int
    targets: tuple[int, ...]

    def __post_init__(self):
        if self.true_class in self.targets:
            raise ContractError("true class cannot be its own target")

    @classmethod
    def untargeted(cls, true_class: int, num_classes: int) -> "MarginQuery":
        return cls(true_class, tuple(t for t in range(num_classes) if t != true_class))


@dataclass
class CertificationResult:
    certified_epsilon: float
    per_target_sigma: dict[int, float]
    search_trace: list[tuple[float, bool]]
    norm_p: float
    iterations_used: int


def _check_classes(net: Network, classes: Sequence[int]) -> None:
    for c in classes:
        if not (0 <= c < net.num_classes):
            raise ContractError(f"class index {c} outside 0..{net.num_classes - 1}")


def margin_lower_bounds(net: Network, spec: PerturbationSpec, c: int,
                        targets: Sequence[int],
                        prop: Optional[BoundPropagator] = None) -> dict[int, float]:
    """Certified lower bounds of y_c - y_t for each target, via one backward
    pass over the stacked difference rows e_c - e_t."""
    _check_classes(net, [c, *targets])
    if any(t == c for t in targets):
        raise ContractError("target equals the true class")
    if prop is None:
        prop = BoundPropagator(net, spec)
    rows = np.zeros((len(targets), net.num_classes))
    for i, t in enumerate(targets):
        rows[i, c] = 1.0
        rows[i, t] = -1.0
    cb = prop.linear_form_bounds(rows)
    return {t: float(cb.lower_flat[i]) for i, t in enumerate(targets)}


def margin_lower_bound(net: Network, spec: PerturbationSpec, c: int, t: int) -> float:
    """Certified lower bound of y_c - y_t over the perturbation set."""
    return margin_lower_bounds(net, spec, c, [t])[t]


def certify_at_epsilon(net: Network, cloud: PointCloud, eps: float, norm_p,
                       targets: Optional[Sequence[int]] = None
                       ) -> tuple[bool, dict[int, float]]:
    """Verify the predicted class is stable within the eps-ball.

    The cloud must be correctly classified (its label, when present, must
    equal the clean prediction).  Returns whether all target margins are
    certifiably positive, plus the per-target margin lower bounds.
    """
    logits = forward_eval(net, cloud)
    c = int(np.argmax(logits))
    if cloud.label is not None and cloud.label != c:
        raise ContractError(
            f"cloud is misclassified: predicted {c}, expected {cloud.label}")
    if targets is None:
        targets = [t for t in range(net.num_classes) if t != c]
    if not targets:
        raise ContractError("no target classes to certify against")
    spec = PerturbationSpec(center=cloud.points, norm_p=norm_p, epsilon=eps)
    sigmas = margin_lower_bounds(net, spec, c, targets)
    verified = all(s > 0.0 for s in sigmas.values())
    return verified, sigmas


def certified_radius(net: Network, cloud: PointCloud, norm_p,
                     eps_init: float = 0.05, max_iter: int = 10,
                     targets: Optional[Sequence[int]] = None) -> CertificationResult:
    """Largest certifiable radius found by doubling then bisecting.

    Doubling grows the bracket from ``eps_init`` while verification keeps
    succeeding (capped at ``HI_CAP_FACTOR * eps_init``); bisection then runs
    ``max_iter`` times and the last verified radius is reported, never an
    interpolated one.  The reported per-target sigmas belong to the last
    verified radius (or to the last tested one if nothing verified).
    """
    if eps_init <= 0:
        raise ContractError("eps_init must be positive")
    if max_iter < 1:
        raise ContractError("max_iter must be at least 1")
    trace: list[tuple[float, bool]] = []
    best_sigmas: Optional[dict[int, float]] = None
    last_sigmas: Optional[dict[int, float]] = None

    def test(e: float) -> bool:
        nonlocal best_sigmas, last_sigmas
        ok, sigmas = certify_at_epsilon(net, cloud, e, norm_p, targets)
        trace.append((e, ok))
        last_sigmas = sigmas
        if ok:
            best_sigmas = sigmas
        return ok

    cap = HI_CAP_FACTOR * eps_init
    lo = 0.0
    if test(eps_init):
        lo = eps_init
        hi = None
        e = eps_init
        while e < cap:
            e = min(2.0 * e, cap)
            if test(e):
                lo = e
            else:
                hi = e
                break
        if hi is None:
            # verified all the way to the cap
            return CertificationResult(certified_epsilon=lo,
                                       per_target_sigma=best_sigmas,
                                       search_trace=trace, norm_p=float(norm_p),
                                       iterations_used=len(trace))
    else:
        hi = eps_init

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if test(mid):
            lo = mid
        else:
            hi = mid

    sigmas = best_sigmas if best_sigmas is not None else last_sigmas
    return CertificationResult(certified_epsilon=lo, per_target_sigma=sigmas,
                               search_trace=trace, norm_p=float(norm_p),
                               iterations_used=len(trace))
