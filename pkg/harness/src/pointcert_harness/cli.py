"""Command-line exporters."""
from __future__ import annotations

import argparse
import json
import sys

from .export import export_clouds, export_model
from .recipes import RECIPE_TABLES, ModelRecipe


def export_model_main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="export-model",
                                 description="Export a PointNet-variant model file.")
    ap.add_argument("--recipe", required=True, choices=sorted(RECIPE_TABLES))
    ap.add_argument("--width-div", type=int, default=8)
    ap.add_argument("--points", type=int, default=64)
    ap.add_argument("--classes", type=int, default=4)
    ap.add_argument("--train", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)
    recipe = ModelRecipe(name=args.recipe, width_div=args.width_div,
                         n_points=args.points, n_classes=args.classes,
                         seed=args.seed)
    info = export_model(recipe, trained=args.train, out_path=args.out)
    print(json.dumps(info))
    return 0


def export_clouds_main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="export-clouds",
                                 description="Export labeled point-cloud files.")
    ap.add_argument("--gen", default="synthetic", choices=["synthetic", "modelnet"])
    ap.add_argument("--n", type=int, required=True)
    ap.add_argument("--points", type=int, default=64)
    ap.add_argument("--classes", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", required=True)
    ap.add_argument("--modelnet-dir", default=None)
    args = ap.parse_args(argv)
    paths = export_clouds(args.gen, args.n, args.points, args.seed, args.out_dir,
                          n_classes=args.classes, modelnet_dir=args.modelnet_dir)
    print(json.dumps({"n": len(paths), "out_dir": args.out_dir}))
    return 0


if __name__ == "__main__":
    sys.exit(export_model_main())
