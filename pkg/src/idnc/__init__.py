"""Instantly decodable network coding: graphs, clique policies, exact oracle and simulator."""
from .analytics import CardinalityProfile, expected_degree, expected_edge_count, expected_edge_evolution
from .graph import Clique, IdncGraph, Vertex, build_graph, enumerate_maximal_cliques
from .model import FrameState, ReceiverProfile, apply_reception, init_frame, is_complete, weighted_wants
from .policies import PolicyKind, select_max_clique, select_mwcs, select_mwvs, select_random
from .sim import SimConfig, run_experiment, run_sweep, run_trial
from .ssp import solve

__all__ = [
    "CardinalityProfile",
    "Clique",
    "FrameState",
    "IdncGraph",
    "PolicyKind",
    "ReceiverProfile",
    "SimConfig",
    "Vertex",
    "apply_reception",
    "build_graph",
    "enumerate_maximal_cliques",
    "expected_degree",
    "expected_edge_count",
    "expected_edge_evolution",
    "init_frame",
    "is_complete",
    "run_experiment",
    "run_sweep",
    "run_trial",
    "select_max_clique",
    "select_mwcs",
    "select_mwvs",
    "select_random",
    "solve",
    "weighted_wants",
]
