"""Coreset selection engine.

Selection methods from seven families (geometry, uncertainty, error/loss,
decision boundary, gradient matching, bilevel, submodular) plus a random
baseline, all operating on a portable dataset artifact and returning the
same weighted-subset record. A desk-scale proxy trainer generates the
training traces the score-based methods consume and evaluates selected
subsets end to end.
"""

from .artifact import (
    CoresetResult,
    DatasetArtifact,
    FeatureMatrix,
    LabelVector,
    TrainingTrace,
    ValidationSplit,
    budget_from_fraction,
    load_artifact,
    save_artifact,
)
from .boundary import cal_scores, deepfool_iterative, deepfool_margin_linear
from .engine import compute_scores, method_names, run_method
from .errors import (
    ArtifactValidationError,
    CoreselError,
    MissingTraceError,
    NumericalError,
    TensorFormatError,
)
from .estimators import CoresetSelector, ProxyClassifier
from .geometry import contextual_diversity, herding, k_center_greedy
from .matching import (
    GradientSet,
    build_gradient_set,
    craig_select,
    glister_select,
    omp_gradmatch,
    omp_solve,
)
from .metrics import (
    DistanceMatrix,
    SimilarityMatrix,
    pairwise_distance,
    similarity_from_features,
)
from .scores import (
    ScoreVector,
    average_scores,
    el2n_score,
    entropy_score,
    forgetting_count,
    grand_score,
    importance_sample,
    least_confidence,
    margin_score,
    select_by_score,
    sensitivity_probabilities,
)
from .selection import random_select
from .submodular import (
    SubmodularObjective,
    brute_force_optimum,
    evaluate,
    greedy_maximize,
    submodular_select,
)
from .trainer import (
    ProxyModel,
    SyntheticSpec,
    TrainConfig,
    evaluate_coreset,
    generate_synthetic,
    holdout_split,
    load_csv,
    record_trace,
    record_trace_with_validation,
    train,
)

__version__ = "0.1.0"
