"""Deterministic CONGEST simulator and clique-listing library."""

from .congest import Accountant, Message, RoundTrace, exchange, permuted_schedule, run
from .expander import build_communication_clusters, decompose, route, verify_decomposition
from .generators import corpus, generate
from .graph import Graph, SplitGraph, brute_force_cliques, dump_graph, load_graph
from .harness import ExperimentConfig, check_all, run_experiment
from .listing import ListingParams, ListingResult, exhaustive_two_hop, list_cliques, list_kp, list_triangles
from .partition_tree import build_k3_tree, build_split_tree, covering_leaf, verify_tree

__version__ = "0.1.0"

__all__ = [
    "Accountant", "ExperimentConfig", "Graph", "ListingParams", "ListingResult", "Message", "RoundTrace",
    "SplitGraph", "brute_force_cliques", "build_communication_clusters", "build_k3_tree", "build_split_tree",
    "check_all", "corpus", "covering_leaf", "decompose", "dump_graph", "exchange", "exhaustive_two_hop",
    "generate", "list_cliques", "list_kp", "list_triangles", "load_graph", "permuted_schedule", "route", "run",
    "run_experiment", "verify_decomposition", "verify_tree",
]
