"""Low-rank capability-tensor ordinal models for mixed rater data.

Fits a shared latent representation of models, prompts, and raters from
abundant autorater labels, calibrates it to scarce human labels, and turns
the result into ranked leaderboards with calibrated uncertainty, pairwise
model comparisons, cohesion analysis, and human-performance predictions.
"""

from .errors import CaptenError, ContractError, FitError, InputError, NumericalError
from .estimator import CapabilityModel, check_dataset
from .fitting import (
    CONSTANT,
    PROMPT_SPECIFIC,
    AdamConfig,
    FitConfig,
    Stage2Config,
    Stage2Result,
    Stage3Config,
    canonicalize,
    fit_baseline,
    fit_ordinal_regression,
    fit_stage1,
    fit_stage2,
    fit_stage3_finetune,
    merge_human,
    multi_restart,
)
from .inference import (
    CohesionTest,
    ComparisonRow,
    Leaderboard,
    LeaderboardEntry,
    ModelComparison,
    cohesion_permutation_test,
    compare_models,
    composite_feature,
    feature_vector,
    joint_leaderboards,
    leaderboard,
    pointwise_ci,
    reference_composite,
    simultaneous_constant,
)
from .model import (
    ParamMask,
    capability,
    cutoffs_from_gaps,
    effective_advantage,
    expected_label,
    nll,
    nll_gradient,
    ordinal_pmf,
)
from .prediction import (
    HoldoutReport,
    holdout_evaluation,
    predict_average_score,
    predict_win_rate_difference,
)
from .synthetic import (
    CoverageReport,
    RecoveryReport,
    ScenarioSpec,
    coverage_experiment,
    generate_ground_truth,
    recovery_experiment,
    sample_observations,
)
from .types import (
    CIMode,
    CompositeResult,
    CovarianceEstimate,
    Dataset,
    FactorParams,
    HUMAN_RATER,
    IntervalEstimate,
    Observation,
    RaterSpec,
    Subject,
    Template,
    Verdict,
)

__version__ = "0.1.0"
