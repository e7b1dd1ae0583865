"""Greedy nearest-neighbor search on exact and approximate near-neighbor graphs
over unit-sphere data, with a Monte Carlo harness for the accompanying bounds."""

__version__ = "0.1.0"

from .geometry import (
    CapSpec,
    DensityParams,
    Estimate,
    GeometryError,
    WedgeSpec,
    alpha_fn,
    angle,
    cap_volume_exact,
    cap_volume_lower_bound,
    cap_volume_mc,
    sample_unit_sphere,
    wedge_lb,
    wedge_volume_mc,
)
from .coins import coin_flip
from .graph import (
    Dataset,
    EdgeModel,
    NeighborGraph,
    build_graph,
    degree_stats,
    edge_probability,
    generate_dataset,
    neighbors,
    parse_model,
)
from .fileio import deserialize, load_dataset, save_dataset, serialize
from .search import (
    FixedStart,
    GreedyOutcome,
    QuerySpec,
    RandomStart,
    Status,
    greedy_query,
    greedy_step,
    plant_query,
)
