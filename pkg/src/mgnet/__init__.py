"""Multiplex graph networks for multimodal brain-network classification."""
from .errors import ConfigError, DataError, MGNetError, NumericalError, ShapeError
from .projection import ProjectionPair, project, solve_projections, truncated_u1
from .graph import PopulationGraph, build_graph, knn_adjacency, normalize
from .model import ModelParams, forward, init_params
from .training import TrainConfig, train
from .pipeline import PipelineConfig
from .evaluation import EvalReport, accuracy, auc, cross_validate, grid_search

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "MGNetError", "NumericalError", "ShapeError",
    "ProjectionPair", "project", "solve_projections", "truncated_u1",
    "PopulationGraph", "build_graph", "knn_adjacency", "normalize",
    "ModelParams", "forward", "init_params", "TrainConfig", "train", "PipelineConfig",
    "EvalReport", "accuracy", "auc", "cross_validate", "grid_search",
]
