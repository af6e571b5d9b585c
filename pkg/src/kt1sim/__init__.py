"""Synchronous-network simulator and message-efficient protocol library
for networks where each node starts knowing its neighbors' identifiers."""

from .netgraph import (
    DistanceMap,
    Graph,
    GraphError,
    GraphGenSpec,
    diameter,
    generate_graph,
    oracle_ball,
    oracle_bfs,
    read_edge_list,
    write_edge_list,
)
from .simengine import (
    CAT_CLUSTER_TREE,
    CAT_CONTROL,
    CAT_EXPLORATION,
    CAT_GOSSIP,
    ModeConfig,
    NodeContext,
    Protocol,
    RunMetrics,
    RunResult,
    SimError,
    gossip_check,
    run,
)
from .clustercomm import (
    AugmentedClusterTree,
    ClusterError,
    ClusterTree,
    OutgoingEdgeSet,
    bfs_exploration,
    broadcast,
    compute_augmented_tree,
    convergecast,
    minimal_outgoing_edge_set,
)
from .covers import (
    Cover,
    CoverError,
    CoverParams,
    CoverReport,
    cover_construction,
    verify_cover,
)
from .bfscover import (
    BFSError,
    BFSResult,
    BFSTree,
    ElectionResult,
    bfs_construction,
    bfs_tree_from_json,
    bfs_tree_to_json,
    default_kappa,
    preprocess,
    randomized_leader_election,
)
from .gossipspanner import (
    DetBFSResult,
    DetElectionResult,
    GlobalSolveResult,
    GossipResult,
    Spanner,
    SpannerError,
    deterministic_bfs,
    deterministic_leader_election,
    extract_spanner,
    gossip_local_broadcast,
    solve_global,
    spanner_stretch_violations,
)
from .harness import (
    ALGOS,
    ExperimentConfig,
    ExperimentRecord,
    HarnessError,
    flood_baseline_bfs,
    oracle_mst,
    run_experiment,
    scaling_study,
)

__version__ = "0.1.0"

__all__ = [
    "ALGOS",
    "AugmentedClusterTree",
    "BFSError",
    "BFSResult",
    "BFSTree",
    "CAT_CLUSTER_TREE",
    "CAT_CONTROL",
    "CAT_EXPLORATION",
    "CAT_GOSSIP",
    "Cover",
    "CoverError",
    "CoverParams",
    "CoverReport",
    "ClusterError",
    "ClusterTree",
    "DetBFSResult",
    "DetElectionResult",
    "DistanceMap",
    "ElectionResult",
    "ExperimentConfig",
    "ExperimentRecord",
    "GlobalSolveResult",
    "GossipResult",
    "Graph",
    "GraphError",
    "GraphGenSpec",
    "HarnessError",
    "ModeConfig",
    "NodeContext",
    "OutgoingEdgeSet",
    "Protocol",
    "RunMetrics",
    "RunResult",
    "SimError",
    "Spanner",
    "SpannerError",
    "bfs_construction",
    "bfs_exploration",
    "bfs_tree_from_json",
    "bfs_tree_to_json",
    "broadcast",
    "compute_augmented_tree",
    "convergecast",
    "cover_construction",
    "default_kappa",
    "deterministic_bfs",
    "deterministic_leader_election",
    "diameter",
    "extract_spanner",
    "flood_baseline_bfs",
    "generate_graph",
    "gossip_check",
    "gossip_local_broadcast",
    "minimal_outgoing_edge_set",
    "oracle_ball",
    "oracle_bfs",
    "oracle_mst",
    "preprocess",
    "randomized_leader_election",
    "read_edge_list",
    "run",
    "run_experiment",
    "scaling_study",
    "solve_global",
    "spanner_stretch_violations",
    "verify_cover",
    "write_edge_list",
]
