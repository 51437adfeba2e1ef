import math

import numpy as np
import pytest

from pointcert import (PerturbationSpec, PointCloud, compute_all_bounds,
                       interval_forward, plane_check, relax_mul,
                       relax_relu, sample_attack)
from pointcert.oracle import activations_batch, forward_batch, sample_ball
from netgen import center_cloud_for, random_affine_net, random_fuzz_net


def test_interval_forward_zero_radius(example_net, example_cloud):
    spec = PerturbationSpec(example_cloud.points, math.inf, 0.0)
    out = interval_forward(example_net, spec)
    from pointcert import forward_activations
    acts = forward_activations(example_net, example_cloud.points)
    for i, cb in enumerate(out, start=1):
        np.testing.assert_allclose(cb.lower, acts[i], atol=1e-12)
        np.testing.assert_allclose(cb.upper, acts[i], atol=1e-12)


def test_interval_forward_fig3_final_layer(example_net, example_spec):
    # frozen values from direct interval evaluation: p9 in [0,2]*[0,4] = [0,8],
    # p10 in [-1,1]*[0,1] = [-1,1], p11 = p9, p12 = p10 - p9 = [-9, 1]
    out = interval_forward(example_net, example_spec)
    np.testing.assert_allclose(out[3].lower_flat, [0.0, -1.0], atol=1e-12)
    np.testing.assert_allclose(out[3].upper_flat, [8.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(out[4].lower_flat, [0.0, -9.0], atol=1e-12)
    np.testing.assert_allclose(out[4].upper_flat, [8.0, 1.0], atol=1e-12)


def test_interval_forward_single_affine_layer_matches_engine():
    net = random_affine_net(3, depth=1, n_points=1)
    cloud = center_cloud_for(net, 3)
    spec = PerturbationSpec(cloud.points, math.inf, 0.3)
    ibp = interval_forward(net, spec)
    eng = compute_all_bounds(net, spec)
    np.testing.assert_allclose(ibp[-1].lower, eng[-1].lower, atol=1e-12)
    np.testing.assert_allclose(ibp[-1].upper, eng[-1].upper, atol=1e-12)


def test_interval_and_engine_both_contain_samples():
    for seed in range(8):
        net = random_fuzz_net(seed)
        cloud = center_cloud_for(net, seed)
        spec = PerturbationSpec(cloud.points, math.inf, 0.2)
        ibp = interval_forward(net, spec)
        eng = compute_all_bounds(net, spec)
        rng = np.random.default_rng(seed)
        n, d = net.input_shape
        deltas = sample_ball(rng, 500, n, d, 0.2, math.inf)
        acts = activations_batch(net, cloud.points[None] + deltas)
        for i in range(1, len(acts)):
            vals = acts[i].reshape(acts[i].shape[0], -1)
            for cb in (ibp[i - 1], eng[i - 1]):
                assert np.all(vals >= cb.lower_flat - 1e-9)
                assert np.all(vals <= cb.upper_flat + 1e-9)


def test_attack_zero_radius_returns_center(example_net, example_cloud):
    w = sample_attack(example_net, example_cloud, 0.0, math.inf, n_samples=10, seed=0)
    np.testing.assert_array_equal(w.perturbed_cloud.points, example_cloud.points)
    assert w.distortion == 0.0
    assert w.achieved_margin == pytest.approx(2.0)


def test_attack_margin_at_least_engine_bound(example_net, example_cloud):
    from pointcert import margin_lower_bound
    spec = PerturbationSpec(example_cloud.points, math.inf, 1.0)
    bound = margin_lower_bound(example_net, spec, 0, 1)
    w = sample_attack(example_net, example_cloud, 1.0, math.inf,
                      n_samples=100000, seed=2)
    assert w.achieved_margin >= bound
    assert w.distortion <= 1.0 + 1e-12


def test_attack_constant_classifier():
    from pointcert import network_from_dict
    net = network_from_dict({
        "input_shape": [1, 2], "num_classes": 2,
        "layers": [{"kind": "Dense", "weight": [[0, 0], [0, 0]], "bias": [1.0, 0.0]}]})
    cloud = PointCloud(points=[[0.0, 0.0]], label=0)
    w = sample_attack(net, cloud, 0.5, 2, n_samples=100, seed=0)
    assert w.achieved_margin == pytest.approx(1.0)


def test_attack_respects_ball_for_each_norm():
    net = random_fuzz_net(4)
    cloud = center_cloud_for(net, 4)
    for p in (1, 2, math.inf):
        w = sample_attack(net, cloud, 0.3, p, n_samples=500, seed=5)
        assert w.distortion <= 0.3 + 1e-12


def test_engine_bounds_bracket_attack_per_neuron():
    # engine lower <= sampled min <= sampled max <= engine upper, per logit
    for seed in range(5):
        net = random_fuzz_net(seed)
        cloud = center_cloud_for(net, seed)
        spec = PerturbationSpec(cloud.points, math.inf, 0.15)
        eng = compute_all_bounds(net, spec)[-1]
        rng = np.random.default_rng(seed)
        n, d = net.input_shape
        deltas = sample_ball(rng, 2000, n, d, 0.15, math.inf)
        logits = forward_batch(net, cloud.points[None] + deltas)
        assert np.all(logits.min(axis=0) >= eng.lower_flat - 1e-9)
        assert np.all(logits.max(axis=0) <= eng.upper_flat + 1e-9)


def test_plane_check_mul_example():
    p = relax_mul(0.0, 2.0, -1.0, 3.5)
    assert plane_check(p, (0.0, 2.0, -1.0, 3.5), grid_resolution=33) <= 1e-9


def test_plane_check_relu_example():
    r = relax_relu(-1.0, 3.0)
    assert plane_check(r, (-1.0, 3.0), grid_resolution=101) <= 1e-12


def test_plane_check_degenerate_box():
    p = relax_mul(0.7, 0.7, -1.2, -1.2)
    assert plane_check(p, (0.7, 0.7, -1.2, -1.2)) == 0.0
