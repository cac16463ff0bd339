"""Semantic-graph global localization between robots with unknown initial pose."""
from semloc._backend import BACKEND
from semloc.graph import (
    RigidTransform,
    SemanticGraph,
    SemanticVertex,
    build_graph,
    neighbor,
    transform_graph,
)
from semloc.matching import MatchSet, match_graphs
from semloc.registration import PipelineConfig, RansacConfig, localize, ransac, solve_weighted
from semloc.rejection import brute_force_max_consistent, build_constraint_matrix, reject

__version__ = "0.1.0"
