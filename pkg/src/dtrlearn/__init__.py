"""Learning optimal dynamic treatment regimes from observational panels."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .dataset import (
    FoldAssignment,
    PanelDataset,
    StageSchema,
    history_features,
    load_csv,
    make_folds,
    write_csv,
)
from .learners import (
    Dtr,
    LearnerConfig,
    LearnResult,
    OracleNuisance,
    aipw_welfare_estimate,
    learn,
    learn_aipw_simultaneous,
    learn_dr,
    learn_ipw,
    learn_q,
)
from .models import RegressorSpec, fit_classifier, fit_regressor
from .nuisance import NuisanceSet, clip_probabilities, fit_propensities, fitted_q_evaluation
from .policytree import (
    PolicyClassSpec,
    PolicyTree,
    StageConstraint,
    constant_policy,
    enumerate_policies,
    evaluate,
    exact_tree_search,
)
from .scores import ScoreMatrix, aipw_scores_final, aipw_scores_stage, ipw_scores, oracle_scores
from .simeval import (
    DgpSpec,
    PotentialOutcomePanel,
    generate,
    run_benchmark,
    true_welfare,
)

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "FoldAssignment",
    "PanelDataset",
    "StageSchema",
    "history_features",
    "load_csv",
    "make_folds",
    "write_csv",
    "Dtr",
    "LearnerConfig",
    "LearnResult",
    "OracleNuisance",
    "aipw_welfare_estimate",
    "learn",
    "learn_aipw_simultaneous",
    "learn_dr",
    "learn_ipw",
    "learn_q",
    "RegressorSpec",
    "fit_classifier",
    "fit_regressor",
    "NuisanceSet",
    "clip_probabilities",
    "fit_propensities",
    "fitted_q_evaluation",
    "PolicyClassSpec",
    "PolicyTree",
    "StageConstraint",
    "constant_policy",
    "enumerate_policies",
    "evaluate",
    "exact_tree_search",
    "ScoreMatrix",
    "aipw_scores_final",
    "aipw_scores_stage",
    "ipw_scores",
    "oracle_scores",
    "DgpSpec",
    "PotentialOutcomePanel",
    "generate",
    "run_benchmark",
    "true_welfare",
    "__version__",
]
