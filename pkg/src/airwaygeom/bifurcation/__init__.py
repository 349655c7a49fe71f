from .model import BifurcationParams, PARAM_NAMES, angle_between
from .objective import ObjectiveConfig, ObjectiveError, SurfaceObjective, surface_objective
from .anneal import AnnealConfig, FitResult, fit_bifurcation
from .tree import AirwayTree, TreeEntry, collect_angles, estimate_trachea_init, extract_tree

__all__ = [
    "AirwayTree", "AnnealConfig", "BifurcationParams", "FitResult", "ObjectiveConfig", "ObjectiveError",
    "PARAM_NAMES", "SurfaceObjective", "TreeEntry", "angle_between", "collect_angles",
    "estimate_trachea_init", "extract_tree", "fit_bifurcation", "surface_objective",
]
