"""Causal discovery for recipe-structured manufacturing data with heavy missingness."""
from .core import (
    CandidateGraph,
    Dataset,
    Ordering,
    Recipe,
    is_acyclic,
    ordering_to_full_dag,
    partition_by_recipe,
    prune_with_initial,
)
from .initgraph import ExpertKnowledge, InitialGraph, build_initial_graph
from .metrics import EdgeMetrics, edge_confusion
from .scoring import RewardConfig, bic_reward, exhaustive_best_ordering
from .synthgen import GenConfig, generate_benchmark
from .trainer import TrainConfig, train

__version__ = "0.1.0"
