"""Feature attribution for differentiable binary classifiers over
continuous tabular data, with executable probes that test whether the
scores actually describe the classifier's local behavior."""

__version__ = "0.1.0"

from .core import (
    AttributionScores,
    ClassificationProblem,
    DataError,
    FeatureDomain,
    Instance,
    NumericalError,
    ProbabilisticClassifier,
    ProbabilityVector,
    predict,
    replace_feature,
)
from .classifiers import (
    FunctionClassifier,
    LogisticRegressionModel,
    MLPModel,
    TrainConfig,
    finite_diff_gradient,
    lr_gradient,
    mlp_gradient,
    train_logistic_regression,
    train_mlp,
)
from .attribution import (
    EXACT,
    LimeConfig,
    RandomForest,
    ShapConfig,
    SiloConfig,
    fit_random_forest,
    gradient_scores,
    kernel_shap_scores,
    lime_scores,
    silo_scores,
    subsample_background,
)
from .faithfulness import (
    CONSISTENT,
    VIOLATED,
    ZERO_SCORE_UNTESTED,
    ErrorDecayRecord,
    QualitativeVerdict,
    SignAgreement,
    StrongVerdict,
    adaptive_epsilon_probe,
    error_decay,
    error_dominance,
    qualitative_probe,
    quantitative_error,
    sign_agreement,
    strong_probe,
)
from .evaluate import FidelityResult, ResultTable, fidelity_vs_reference, runtime_bench, spearman_rho
from .ingest import (
    SplitSpec,
    StandardizationStats,
    TrainedBundle,
    load_bundle,
    load_csv,
    load_problem,
    save_bundle,
    save_problem,
    split_and_standardize,
)

__all__ = [name for name in dir() if not name.startswith("_")]
