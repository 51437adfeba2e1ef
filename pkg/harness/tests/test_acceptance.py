"""Secondary acceptance: the trained desk-scale alignment model certifies,
and the alignment block does not hurt accuracy on the synthetic task."""
import math
import time

import numpy as np

from pointcert import (certified_radius, forward_eval, load_network,
                       load_point_cloud, sample_attack)
from pointcert_harness import export_clouds


def _report(name, ok, detail=""):
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"{name}: {detail}"


def test_trained_janet_certification(trained_janet, tmp_path):
    path, info = trained_janet
    assert info["accuracy"] >= 0.9
    net = load_network(path)
    cloud_paths = export_clouds("synthetic", 30, 64, 2024, tmp_path / "clouds")

    certified = 0
    processed = 0
    per_iter_times = []
    safety_ok = True
    for p in cloud_paths:
        if processed >= 20:
            break
        cloud = load_point_cloud(p)
        if int(np.argmax(forward_eval(net, cloud))) != cloud.label:
            continue
        processed += 1
        t0 = time.perf_counter()
        res = certified_radius(net, cloud, math.inf, eps_init=0.05, max_iter=10)
        per_iter_times.append((time.perf_counter() - t0) / res.iterations_used)
        if res.certified_epsilon > 0:
            certified += 1
        probe = max(4.0 * res.certified_epsilon, 0.2)
        w = sample_attack(net, cloud, probe, math.inf, n_samples=10000,
                          seed=processed)
        if w.achieved_margin < 0 and res.certified_epsilon > w.distortion + 1e-12:
            safety_ok = False
    ok = (processed == 20 and certified >= 18 and safety_ok
          and max(per_iter_times) < 10.0)
    _report("secondary-trained-janet", ok,
            f"acc={info['accuracy']:.2f} certified={certified}/{processed} "
            f"max_per_iter={max(per_iter_times):.2f}s safety={safety_ok}")


def test_janet_ablation_direction(trained_janet, trained_no_janet):
    _, janet_info = trained_janet
    _, plain_info = trained_no_janet
    ok = janet_info["accuracy"] >= plain_info["accuracy"]
    _report("secondary-ablation", ok,
            f"janet={janet_info['accuracy']:.3f} "
            f"no_janet={plain_info['accuracy']:.3f}")
