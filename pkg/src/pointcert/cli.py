"""Command-line front end: certify a cloud or a directory of clouds against
a model file and emit machine-readable reports."""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .certify import certified_radius
from .errors import ModelFormatError
from .model import forward_eval, load_network, load_point_cloud
from .propagation import BoundPropagator, PerturbationSpec

EXIT_OK = 0
EXIT_FORMAT_ERROR = 2
EXIT_NO_INPUTS = 3
EXIT_ALL_MISCLASSIFIED = 4
EXIT_INTERNAL = 5

CSV_COLUMNS = ["file", "n_points", "norm", "certified_eps", "min_margin",
               "seconds_per_iter", "iterations"]


@dataclass
class RunConfig:
    model_path: str
    input_path: str
    norm: str = "inf"
    eps_init: float = 0.05
    max_iter: int = 10
    targets: str = "all"
    report_path: Optional[str] = None
    fmt: str = "jsonl"
    seed: int = 0
    jobs: int = 1
    timing: bool = True
    dump_bounds: bool = False

    def norm_p(self) -> float:
        return math.inf if self.norm == "inf" else float(self.norm)

    def target_list(self, num_classes: int, c: int) -> Optional[list[int]]:
        if self.targets in ("all", "untargeted-min"):
            return None
        picked = [int(t) for t in self.targets.split(",")]
        return [t for t in picked if t != c]


def _collect_inputs(path: str) -> list[Path]:
    p = Path(path)
    if p.is_dir():
        return sorted(p.glob("*.json"))
    return [p]


def _verify_one(args) -> dict:
    """Worker: certify a single cloud file; returns one report record."""
    model_path, cloud_path, cfg_dict = args
    cfg = RunConfig(**cfg_dict)
    net = load_network(model_path)
    try:
        cloud = load_point_cloud(cloud_path)
    except ModelFormatError as exc:
        raise ModelFormatError(f"{cloud_path}: {exc}") from exc
    logits = forward_eval(net, cloud)
    predicted = int(np.argmax(logits))
    if cloud.label is not None and cloud.label != predicted:
        return {"file": str(cloud_path), "n_points": int(cloud.points.shape[0]),
                "norm": cfg.norm, "skipped": True, "reason": "misclassified",
                "predicted": predicted, "label": cloud.label}
    targets = cfg.target_list(net.num_classes, predicted)
    t0 = time.perf_counter()
    result = certified_radius(net, cloud, cfg.norm_p(), eps_init=cfg.eps_init,
                              max_iter=cfg.max_iter, targets=targets)
    elapsed = time.perf_counter() - t0
    per_iter = (elapsed / result.iterations_used) if cfg.timing else 0.0
    sigmas = result.per_target_sigma or {}
    if cfg.targets == "untargeted-min":
        sigmas = {min(sigmas, key=sigmas.get): min(sigmas.values())} if sigmas else {}
    record = {
        "file": str(cloud_path),
        "n_points": int(cloud.points.shape[0]),
        "norm": cfg.norm,
        "certified_eps": result.certified_epsilon,
        "min_margin": min(sigmas.values()) if sigmas else None,
        "seconds_per_iter": per_iter,
        "iterations": result.iterations_used,
        "per_target_sigma": {str(k): v for k, v in sigmas.items()},
        "search_trace": [[e, bool(v)] for e, v in result.search_trace],
        "skipped": False,
    }
    if cfg.dump_bounds:
        spec = PerturbationSpec(center=cloud.points, norm_p=cfg.norm_p(),
                                epsilon=cfg.eps_init)
        bounds = BoundPropagator(net, spec).all_bounds()
        record["layer_bounds"] = [
            [cb.lower_flat.tolist(), cb.upper_flat.tolist()] for cb in bounds]
    return record


def emit_report(records: list[dict], fmt: str, path) -> None:
    """Write records (plus a summary line for jsonl) to the report file."""
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for r in records:
                if r.get("skipped"):
                    writer.writerow([r["file"], r["n_points"], r["norm"],
                                     "", "", "", ""])
                else:
                    writer.writerow([r["file"], r["n_points"], r["norm"],
                                     repr(r["certified_eps"]),
                                     repr(r["min_margin"]),
                                     repr(r["seconds_per_iter"]),
                                     r["iterations"]])
        return
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
        fh.write(json.dumps(_summary(records)) + "\n")


def _summary(records: list[dict]) -> dict:
    processed = [r for r in records if not r.get("skipped")]
    radii = [r["certified_eps"] for r in processed]
    return {
        "type": "summary",
        "n_inputs": len(records),
        "n_processed": len(processed),
        "n_skipped": len(records) - len(processed),
        "avg_certified_eps": (sum(radii) / len(radii)) if radii else None,
    }


def parse_report(path) -> list[dict]:
    """Read back a jsonl report (records and summary)."""
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def run_verify(cfg: RunConfig) -> int:
    """Certify every input cloud and write the report; returns the exit code."""
    inputs = _collect_inputs(cfg.input_path)
    if not inputs:
        if cfg.report_path:
            emit_report([], cfg.fmt, cfg.report_path)
        print(json.dumps({"type": "summary", "status": "no inputs"}))
        return EXIT_NO_INPUTS
    try:
        load_network(cfg.model_path)   # fail early with a clear message
    except ModelFormatError as exc:
        print(f"error: {cfg.model_path}: {exc}", file=sys.stderr)
        return EXIT_FORMAT_ERROR

    cfg_dict = {k: getattr(cfg, k) for k in RunConfig.__dataclass_fields__}
    jobs = [(cfg.model_path, str(p), cfg_dict) for p in inputs]
    try:
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                records = list(pool.map(_verify_one, jobs))
        else:
            records = [_verify_one(j) for j in jobs]
    except (ModelFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT_ERROR
    except Exception as exc:   # noqa: BLE001 - report faults with a distinct code
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL

    if cfg.report_path:
        emit_report(records, cfg.fmt, cfg.report_path)
    print(json.dumps(_summary(records)))
    if all(r.get("skipped") for r in records):
        return EXIT_ALL_MISCLASSIFIED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pointcert",
        description="Certify point-cloud classifier robustness under per-point "
                    "l1/l2/linf perturbations.")
    ap.add_argument("--model", required=True, help="model file (JSON)")
    ap.add_argument("--input", required=True,
                    help="point-cloud file or directory of *.json clouds")
    ap.add_argument("--norm", choices=["1", "2", "inf"], default="inf")
    ap.add_argument("--eps-init", type=float, default=0.05)
    ap.add_argument("--max-iter", type=int, default=10)
    ap.add_argument("--targets", default="all",
                    help="'all', 'untargeted-min', or a comma list of class indices")
    ap.add_argument("--report", default=None, help="report output path")
    ap.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--no-timing", action="store_true",
                    help="zero the timing column so reports are bitwise reproducible")
    ap.add_argument("--dump-bounds", action="store_true",
                    help="include per-layer bounds at eps-init in jsonl records")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(model_path=args.model, input_path=args.input, norm=args.norm,
                    eps_init=args.eps_init, max_iter=args.max_iter,
                    targets=args.targets, report_path=args.report, fmt=args.format,
                    seed=args.seed, jobs=args.jobs, timing=not args.no_timing,
                    dump_bounds=args.dump_bounds)
    return run_verify(cfg)


if __name__ == "__main__":
    sys.exit(main())
