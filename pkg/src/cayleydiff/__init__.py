"""Diffusion-model pathfinding on Cayley graphs of groups and group actions.

Forward random walks explore the graph; a residual MLP learns the reverse
process score; backward sampling and beam search navigate to the goal set,
optionally completing through an exact BFS ball. Small instances are verified
against exact breadth-first oracles.
"""

from .diffusion import (
    KernelRow,
    Trajectory,
    TrajectoryBatch,
    backward_kernel,
    dump_trajectories,
    forward_step_reversed_score,
    forward_step_uniform,
    sample_trajectories,
    validate_trajectory,
)
from .errors import (
    CayleyDiffError,
    DomainError,
    EncodingError,
    FormatError,
    NumericError,
    ResourceLimitError,
    UsageError,
)
from .graphs import (
    CayleyGraph,
    GeneratorSet,
    build_graph,
    cube2_graph,
    cube3_graph,
    cyclic_graph,
    load_generator_file,
    load_goal_file,
    orbit_invariant,
    sl2p_graph,
)
from .model import (
    AdamState,
    ScoreModel,
    init_model,
    load_checkpoint,
    loss_and_grad,
    loss_only,
    optimizer_step,
    save_checkpoint,
    score_forward,
)
from .oracle import (
    DistanceTable,
    ProbabilityTables,
    bfs_distances,
    euclid_solve,
    exact_score,
    load_distance_table,
    save_distance_table,
    sl2z_word_to_matrix,
)
from .search import (
    BallTable,
    SolveResult,
    backward_walk,
    beam_search,
    build_ball,
    estimate_expected_time,
    estimate_expected_time_weighted,
    load_ball,
    save_ball,
    t_calibrate,
)
from .training import TrainConfig, evaluate_loss, make_config, train

__version__ = "0.1.0"
