"""Builds, trains and exports desk-scale PointNet variants (with and without
the alignment block) plus synthetic point clouds, in the verifier's file
formats."""
from .export import export_clouds, export_model
from .recipes import RECIPE_TABLES, ModelRecipe, random_model_document
from .shapes import CLASS_NAMES, make_cloud, make_dataset

__all__ = ["CLASS_NAMES", "ModelRecipe", "RECIPE_TABLES", "export_clouds",
           "export_model", "make_cloud", "make_dataset", "random_model_document"]
