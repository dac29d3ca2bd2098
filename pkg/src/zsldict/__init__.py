"""Zero-shot classification with joint embedding dictionaries and transductive self-training."""

from .core_types import (
    DenseMatrix, Hyperparams, JedmModel, SeenDataset, ShapeError, SolverError,
    UnseenDataset, dense, l2_normalize_columns, one_hot_pm, rng_stream, validate_seen,
)
from .dict_admm import admm_dictionary, project_unit_ball, solve_dictionary
from .evaluation import (
    EvalReport, class_folds, cv_grid_search, evaluate_unseen, full_grid_search,
    per_class_top1, staged_grid_search,
)
from .inference import ScoreTable, embed_instances, embed_prototypes, score_all
from .jedm import jedm_objective, train_jedm, update_codes, update_compat
from .synth import SynthSpec, generate_synthetic
from .tstd import (
    DEFAULT_SCHEDULE, SelfLabeledSet, n_selected, refine_codes, refine_dictionary,
    run_tstd, select_self_labeled,
)

__version__ = "0.1.0"
