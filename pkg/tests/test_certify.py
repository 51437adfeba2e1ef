import math

import numpy as np
import pytest

from pointcert import (ContractError, PerturbationSpec, PointCloud, certified_radius,
                       certify_at_epsilon, forward_eval, margin_lower_bound,
                       network_from_dict, sample_attack)
from pointcert.certify import MarginQuery
from pointcert.oracle import corner_deltas, forward_batch, sample_ball
from netgen import center_cloud_for, random_fuzz_net


def test_margin_query_validation():
    with pytest.raises(ContractError):
        MarginQuery(true_class=1, targets=(0, 1))
    q = MarginQuery.untargeted(0, 4)
    assert q.targets == (1, 2, 3)


def test_margin_zero_radius_equals_clean_gap(example_net, example_cloud):
    spec = PerturbationSpec(example_cloud.points, math.inf, 0.0)
    logits = forward_eval(example_net, example_cloud)
    got = margin_lower_bound(example_net, spec, 0, 1)
    assert got == pytest.approx(logits[0] - logits[1], abs=1e-12)


def test_margin_fig3_at_eps1_below_sampled_min(example_net, example_cloud):
    spec = PerturbationSpec(example_cloud.points, math.inf, 1.0)
    bound = margin_lower_bound(example_net, spec, 0, 1)
    assert bound <= -1.0
    rng = np.random.default_rng(0)
    deltas = np.concatenate([sample_ball(rng, 100000, 1, 2, 1.0, math.inf),
                             corner_deltas(1, 2, 1.0)])
    logits = forward_batch(example_net, example_cloud.points[None] + deltas)
    sampled_min = (logits[:, 0] - logits[:, 1]).min()
    assert bound <= sampled_min


def test_margin_identical_rows_is_exactly_zero():
    net = network_from_dict({
        "input_shape": [1, 3], "num_classes": 2,
        "layers": [{"kind": "Dense", "weight": [[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]],
                    "bias": [0.5, 0.5]}]})
    spec = PerturbationSpec(np.zeros((1, 3)), math.inf, 1.0)
    assert margin_lower_bound(net, spec, 0, 1) == 0.0


def test_margin_at_least_interval_difference(example_net, example_cloud):
    # the joint-row bound is never looser than lower(y_c) - upper(y_t)
    from pointcert import compute_all_bounds
    for eps in (0.1, 0.5, 1.0):
        spec = PerturbationSpec(example_cloud.points, math.inf, eps)
        bounds = compute_all_bounds(example_net, spec)
        naive = bounds[-1].lower_flat[0] - bounds[-1].upper_flat[1]
        assert margin_lower_bound(example_net, spec, 0, 1) >= naive - 1e-12


def test_certify_zero_radius(example_net, example_cloud):
    ok, sigmas = certify_at_epsilon(example_net, example_cloud, 0.0, math.inf)
    assert ok
    assert sigmas[1] == pytest.approx(2.0, abs=1e-12)


def test_certify_fig3_at_eps1_fails(example_net, example_cloud):
    ok, sigmas = certify_at_epsilon(example_net, example_cloud, 1.0, math.inf)
    assert not ok
    assert sigmas[1] <= -3.5


def test_certify_rejects_misclassified(example_net):
    bad = PointCloud(points=[[1.0, 0.0]], label=1)
    with pytest.raises(ContractError, match="misclassified"):
        certify_at_epsilon(example_net, bad, 0.1, math.inf)


def test_untargeted_equals_min_over_targets():
    for seed in range(5):
        net = random_fuzz_net(seed)
        cloud = center_cloud_for(net, seed)
        ok, sigmas = certify_at_epsilon(net, cloud, 0.05, 2)
        assert ok == all(v > 0 for v in sigmas.values())
        assert min(sigmas.values()) == min(sigmas[t] for t in sigmas)


def test_certified_radius_fig3(example_net, example_cloud):
    res = certified_radius(example_net, example_cloud, math.inf,
                           eps_init=1.0, max_iter=10)
    # margin lower bound is 2*(2e^2 - 3e + 1), positive iff e < 0.5; after a
    # failing probe at 1.0 the bisection pins lo = 0.5 - 2^-10 exactly
    assert res.search_trace[0] == (1.0, False)
    assert res.certified_epsilon == 0.5 - 2.0 ** -10
    assert res.iterations_used == 11
    ok, _ = certify_at_epsilon(example_net, example_cloud,
                               res.certified_epsilon, math.inf)
    assert ok
    smallest_failed = min(e for e, v in res.search_trace if not v)
    ok2, _ = certify_at_epsilon(example_net, example_cloud, smallest_failed, math.inf)
    assert not ok2
    # attack at the certified radius finds no violation
    witness = sample_attack(example_net, example_cloud, res.certified_epsilon,
                            math.inf, n_samples=10000, seed=1)
    assert witness.achieved_margin > 0.0


def test_certified_radius_trace_invariants(example_net, example_cloud):
    res = certified_radius(example_net, example_cloud, math.inf,
                           eps_init=1.0, max_iter=8)
    verified = [e for e, v in res.search_trace if v]
    failed = [e for e, v in res.search_trace if not v]
    assert res.certified_epsilon in verified
    assert all(v <= f for v in verified for f in failed)
    assert all(s > 0 for s in res.per_target_sigma.values())


def test_certified_radius_constant_classifier_hits_cap():
    net = network_from_dict({
        "input_shape": [1, 2], "num_classes": 2,
        "layers": [{"kind": "Dense", "weight": [[0, 0], [0, 0]], "bias": [1.0, 0.0]}]})
    cloud = PointCloud(points=[[0.3, -0.2]], label=0)
    res = certified_radius(net, cloud, math.inf, eps_init=0.05, max_iter=5)
    assert res.certified_epsilon == pytest.approx(64 * 0.05)
    assert all(v for _, v in res.search_trace)


def test_certified_radius_not_above_attack_flip():
    for seed in range(6):
        net = random_fuzz_net(seed)
        cloud = center_cloud_for(net, seed)
        res = certified_radius(net, cloud, math.inf, eps_init=0.05, max_iter=8)
        probe = max(4 * res.certified_epsilon, 0.2)
        witness = sample_attack(net, cloud, probe, math.inf,
                                n_samples=4000, seed=seed)
        if witness.achieved_margin < 0:
            assert res.certified_epsilon <= witness.distortion + 1e-12
