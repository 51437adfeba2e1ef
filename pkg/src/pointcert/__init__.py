"""Certified robustness verification for point-cloud classifiers.

Computes sound lower/upper bounds on network outputs under per-point
l1/l2/l-inf perturbations via backward linear bound propagation (with a
forward step for the bilinear alignment layers of PointNet-style models)
and binary-searches the maximal certified radius.
"""
from .certify import (CertificationResult, MarginQuery, certified_radius,
                      certify_at_epsilon, margin_lower_bound, margin_lower_bounds)
from .errors import ContractError, ModelFormatError, ShapeChainError
from .model import (Layer, Network, PointCloud, affine_view, forward_activations,
                    forward_eval, load_network, load_point_cloud, network_from_dict,
                    network_to_dict, save_network, save_point_cloud)
from .oracle import (AttackWitness, forward_batch, interval_forward, plane_check,
                     sample_attack)
from .propagation import (BoundPropagator, ConcreteBounds, LinearBounds,
                          MulInputBounds, PerturbationSpec, backprop_affine,
                          backprop_nonlinear, compose_at_mul, compute_all_bounds,
                          concretize, forward_mul_bounds)
from .relaxation import (MaxPoolRelaxation, MulPlanes, ScalarRelaxation,
                         relax_global_max_pool, relax_mul, relax_relu)

__version__ = "0.1.0"

__all__ = [
    "AttackWitness", "BoundPropagator", "CertificationResult", "ConcreteBounds",
    "ContractError", "Layer", "LinearBounds", "MarginQuery", "MaxPoolRelaxation",
    "ModelFormatError", "MulInputBounds", "MulPlanes", "Network",
    "PerturbationSpec", "PointCloud", "ScalarRelaxation", "ShapeChainError",
    "affine_view", "backprop_affine", "backprop_nonlinear", "certified_radius",
    "certify_at_epsilon", "compose_at_mul", "compute_all_bounds", "concretize",
    "forward_activations", "forward_batch", "forward_eval", "forward_mul_bounds",
    "interval_forward", "load_network", "load_point_cloud", "margin_lower_bound",
    "margin_lower_bounds", "network_from_dict", "network_to_dict", "plane_check",
    "relax_global_max_pool", "relax_mul", "relax_relu", "sample_attack",
    "save_network", "save_point_cloud",
]
