import math

import pytest

from pointcert import Network, PointCloud, network_from_dict
from pointcert.propagation import PerturbationSpec


def build_example_net() -> Network:
    """The 12-node running example: two inputs, two outputs.

    p3 = p1 + p2, p4 = -p1 + p2; p5, p6 = relu; p7 = p5 + p6, p8 = p6;
    p9 = p1*p7, p10 = p2*p8 (elementwise product with the input);
    p11 = p9, p12 = p10 - p9.
    """
    return network_from_dict({
        "input_shape": [1, 2], "num_classes": 2,
        "layers": [
            {"kind": "Dense", "weight": [[1, 1], [-1, 1]], "bias": [0, 0]},
            {"kind": "ReLU"},
            {"kind": "Dense", "weight": [[1, 1], [0, 1]], "bias": [0, 0]},
            {"kind": "Multiplication", "operands": [0, 3]},
            {"kind": "Dense", "weight": [[1, 0], [-1, 1]], "bias": [0, 0]},
        ]})


@pytest.fixture
def example_net() -> Network:
    return build_example_net()


@pytest.fixture
def example_cloud() -> PointCloud:
    return PointCloud(points=[[1.0, 0.0]], label=0)


@pytest.fixture
def example_spec(example_cloud) -> PerturbationSpec:
    return PerturbationSpec(center=example_cloud.points, norm_p=math.inf, epsilon=1.0)
