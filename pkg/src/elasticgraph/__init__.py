"""Elastic principal graphs: fitting branching and looping skeletons to point clouds."""

from .analysis import (Branch, EdgeProjection, PseudotimeTable, extend_leaves, extract_branches,
                       filter_branches, graph_path, project_dataset, project_point_on_edge,
                       pseudotime)
from .energy import (EnergyBreakdown, approximation_error, elastic_energy, harmonicity_energy,
                     stretching_energy, total_energy)
from .ensemble import (ConsensusFilters, ConsensusGraph, GraphEnsemble, bootstrap_ensemble,
                       branch_point_interval, consensus_graph, filter_consensus)
from .errors import *  # noqa: F401,F403
from .fitter import (TRIMMED, FitConfig, FitResult, Partition, PointCloud, fit_embedding,
                     partition_points, solve_embedding, update_partition)
from .grammar import (GrammarOp, PrincipalGraphResult, Strategy, enumerate_candidates,
                      grow_graph, make_strategy)
from .graph import (ElasticGraph, build_elastic_matrix, decompose_elastic_matrix,
                    elastic_laplacian, graph_laplacian_sum, validate_graph)
from .io import load_graph, load_matrix, save_graph
from .plot import render_svg
from .robust import (UNCAPTURED, ForestResult, MazeResult, density_seed,
                     estimate_trimming_radius, principal_forest, travel_maze_cluster)

__version__ = "0.1.0"
