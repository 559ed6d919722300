"""Active learning with incremental architecture search over a block grid."""

from .curves import LearningCurve, aggregate, auc, auc_gain, curve_from_run_dir
from .data import Dataset, OracleView, load_csv, load_idx, make_pool, synth_blobs
from .errors import ActivenasError, ConfigError, DataError, TrainingDivergedError
from .loop import (
    PoolState,
    RoundRecord,
    RunConfig,
    inas_search,
    run_active,
    save_run,
    split_train_val,
)
from .nets import (
    ModelHandle,
    NetworkSpec,
    instantiate,
    layer_manifest,
    load_model,
    parameter_count,
    save_model,
)
from .queries import (
    STRATEGIES,
    QueryRequest,
    coreset_select,
    execute_query,
    mc_dropout_scores,
    random_query,
    select_top_uncertain,
    softmax_response_scores,
)
from .space import (
    ArchPoint,
    BlockSpec,
    CapacityReport,
    SearchGrid,
    capacity_report,
    depth,
    edge_list,
    expand_depth,
    expand_stacks,
    neighbors,
    verify_reachability,
)
from .train import TrainConfig, default_train_config, premature, train

__version__ = "0.1.0"
