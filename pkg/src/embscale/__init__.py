"""Compute-optimal planning and scaling-law analysis for contrastive
fine-tuning of decoder-only language models into text embedders.

Submodules:

- ``arch``: architecture descriptors and the bundled model registry.
- ``costmodel``: parameter accounting per fine-tuning method and FLOP cost.
- ``contrastive``: mean-pooled readout and the bidirectional contrastive loss.
- ``runs``: run-log ingestion, validation, persistence, rank correlation.
- ``scalinglaw``: parametric loss formulas and robust Huber/L-BFGS fitting.
- ``isoflop``: IsoFLOP profiles, log-log trends, compute-optimal frontier.
- ``recipe``: the budget-to-plan recipe with default or fitted artifacts.
- ``synth``: synthetic run-log generation from a known ground truth.
- ``cli``: the ``embscale`` command-line tool.
"""

from .arch import ModelArch, builtin_registry, find_arch, pythia_registry
from .contrastive import DEFAULT_TEMPERATURE, contrastive_loss, mean_pool
from .costmodel import (
    ALL_DENSE_LAYERS,
    BiasOnly,
    BlockFreeze,
    FullFineTune,
    LoRA,
    ParamCounts,
    ParamInventory,
    count_params,
    flop_cost,
    method_label,
    param_counts,
    parse_method,
    tokens_for_budget,
)
from .isoflop import (
    Frontier,
    IsoflopProfile,
    PowerLawFit,
    build_profiles,
    crossover_budget,
    data_constrained_profile,
    fit_power_law,
    frontier,
    optimal_size_fit,
)
from .recipe import (
    METHOD_THRESHOLD_FLOP,
    PUBLISHED_BUDGETS,
    Plan,
    PlannerArtifacts,
    artifacts_from_runs,
    default_artifacts,
    plan,
    plan_freeze,
)
from .runs import RunRecord, RunSet, SchemaOptions, load_runs, save_runs, spearman, spearman_loss_vs_score
from .scalinglaw import (
    ChinchillaParams,
    FitConfig,
    FitReport,
    ModifiedParams,
    fit,
    fit_per_method,
    huber,
    predict,
    predict_chinchilla,
    predict_modified,
)
from .synth import FreezeFraction, SynthSpec, generate, true_argmin

__version__ = "0.1.0"
