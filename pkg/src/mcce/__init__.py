"""Causal concept-effect estimation for black-box classifiers.

The package answers "how would this model's output move if one concept
of this input were different?" when only a subset of concept
annotations is available. Residual directions of the embedding space
stand in for the missing annotations.

Layout:
    linalg      minimum-norm least squares, residualization, truncated SVD
    data        schemas, samples, edit pairs, dataset IO, concept masking
    explainers  mcce / slearner / approx estimators and model IO
    evaluation  distances, per-pair effects, grouped error reports, macro F1
    synthetic   seeded generator with counterfactual ground truth
    cli         command-line pipeline (synth, fit, explain, evaluate, ...)
"""

from .data import (
    SPACE_LOGIT,
    SPACE_PROBABILITY,
    SPACES,
    ConceptSchema,
    Dataset,
    EditPair,
    Sample,
    encode,
    intervene,
    load_dataset,
    load_schema,
    save_dataset,
    softmax,
)
from .errors import NumericalError, ValidationError
from .evaluation import (
    DISTANCES,
    METRICS,
    EvalGroup,
    EvalReport,
    coefficient_error,
    dist_cosine,
    dist_l2,
    dist_norm,
    get_distance,
    icace,
    icace_error,
    macro_f1,
)
from .explainers import (
    CoefficientReport,
    EffectEstimate,
    MCCEModel,
    SLearnerModel,
    build_label_index,
    explain_approx,
    explain_mcce,
    explain_slearner,
    fit_mcce,
    fit_slearner,
    global_report,
    load_model,
    predict_labels,
    read_effects,
    save_model,
    write_effects,
)
from .linalg import LstsqSolution, lstsq, residualize, truncated_svd
from .synthetic import (
    SynthConfig,
    SynthGroundTruth,
    default_config,
    generate,
    load_ground_truth,
    load_synth_config,
    make_pairs,
    oracle_effect,
    save_ground_truth,
    synthesize_sample,
    true_icace,
)

__version__ = "0.1.0"

__all__ = [
    "SPACE_LOGIT",
    "SPACE_PROBABILITY",
    "SPACES",
    "ConceptSchema",
    "Dataset",
    "EditPair",
    "Sample",
    "encode",
    "intervene",
    "load_dataset",
    "load_schema",
    "save_dataset",
    "softmax",
    "NumericalError",
    "ValidationError",
    "DISTANCES",
    "METRICS",
    "EvalGroup",
    "EvalReport",
    "coefficient_error",
    "dist_cosine",
    "dist_l2",
    "dist_norm",
    "get_distance",
    "icace",
    "icace_error",
    "macro_f1",
    "CoefficientReport",
    "EffectEstimate",
    "MCCEModel",
    "SLearnerModel",
    "build_label_index",
    "explain_approx",
    "explain_mcce",
    "explain_slearner",
    "fit_mcce",
    "fit_slearner",
    "global_report",
    "load_model",
    "predict_labels",
    "read_effects",
    "save_model",
    "write_effects",
    "LstsqSolution",
    "lstsq",
    "residualize",
    "truncated_svd",
    "SynthConfig",
    "SynthGroundTruth",
    "default_config",
    "generate",
    "load_ground_truth",
    "load_synth_config",
    "make_pairs",
    "oracle_effect",
    "save_ground_truth",
    "synthesize_sample",
    "true_icace",
    "__version__",
]
