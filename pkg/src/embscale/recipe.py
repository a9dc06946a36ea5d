"""Budget-to-training-plan recipe.

The planner maps a FLOP budget to a full configuration: full fine-tuning at
or below the method threshold, low-rank adaptation above it; model size from
the method's optimal-size trend snapped to the nearest registry entry in log
space; the token count from the exact cost inverse; hyperparameters from
bucketed lookup tables.

Default artifacts bundle published constants so the planner works out of the
box: threshold 9.06e16 FLOP, the rounded frontier lines
ln(loss) = -0.21*ln(C) + 8.39 (full) and -0.22*ln(C) + 8.93 (lora), adapter
ranks 32/128, and the Pythia registry. Note the rounded lines alone would
place the intersection far above the threshold; the threshold constant is
authoritative and the lines serve only for loss prediction. The default
optimal-size trends are NOT published numbers: they use the classic 0.5
exponent anchored so the smallest published budget maps to the smallest
suite sizes, and should be replaced by fitted artifacts for real decisions.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

from . import costmodel
from .arch import ModelArch, pythia_registry
from .costmodel import BlockFreeze, FineTuneMethod, FullFineTune, LoRA, method_label, param_counts
from .errors import UnsupportedModeError, ValidationError
from .isoflop import Frontier, PowerLawFit, build_profiles, frontier, frontier_from_dict, optimal_size_fit
from .runs import RunSet

METHOD_THRESHOLD_FLOP = 9.06e16
DEFAULT_LORA_RANK = 128
PUBLISHED_BUDGETS = (1.5e15, 6e15, 2.4e16, 9.6e16, 3.8e17, 1.5e18)

# Training settings carried on every plan verbatim; they never enter cost math.
ADVISORY_SETTINGS = {
    "batch_size": 1024,
    "context_len": 75,
    "temperature": 0.025,
    "warmup_fraction": 0.1,
    "weight_decay": 0.1,
    "peak_lr_rule": "pre-training peak / 10",
}


@dataclass(frozen=True)
class PlannerArtifacts:
    """Everything the planner consults: fits, lookup tables, registry, threshold."""

    frontier: Frontier
    size_fits: dict  # method kind -> PowerLawFit for optimal N vs budget
    rank_table: dict  # (size, budget) -> adapter rank
    freeze_table: dict  # (size, budget) -> active-block fraction
    registry: tuple[ModelArch, ...]
    method_threshold: float = METHOD_THRESHOLD_FLOP

    def __post_init__(self):
        if self.method_threshold <= 0:
            raise ValidationError(f"method_threshold must be > 0, got {self.method_threshold}")
        if not self.registry:
            raise ValidationError("registry must not be empty")

    def to_dict(self) -> dict:
        return {
            "frontier": self.frontier.to_dict(),
            "size_fits": {
                kind: {"slope": f.slope, "intercept": f.intercept,
                       "domain": list(f.domain), "r_squared": f.r_squared}
                for kind, f in sorted(self.size_fits.items())
            },
            "rank_table": [
                {"size": size, "budget": budget, "rank": rank}
                for (size, budget), rank in sorted(self.rank_table.items())
            ],
            "freeze_table": [
                {"size": size, "budget": budget, "active_fraction": fraction}
                for (size, budget), fraction in sorted(self.freeze_table.items())
            ],
            "registry": [a.to_dict() for a in self.registry],
            "method_threshold": self.method_threshold,
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def artifacts_from_dict(payload: dict) -> PlannerArtifacts:
    from .arch import arch_from_dict

    size_fits = {
        kind: PowerLawFit(
            slope=entry["slope"], intercept=entry["intercept"],
            domain=tuple(entry["domain"]), r_squared=entry.get("r_squared"),
        )
        for kind, entry in payload["size_fits"].items()
    }
    return PlannerArtifacts(
        frontier=frontier_from_dict(payload["frontier"]),
        size_fits=size_fits,
        rank_table={(e["size"], e["budget"]): e["rank"] for e in payload["rank_table"]},
        freeze_table={(e["size"], e["budget"]): e["active_fraction"] for e in payload["freeze_table"]},
        registry=tuple(arch_from_dict(a) for a in payload["registry"]),
        method_threshold=payload["method_threshold"],
    )


def load_artifacts(path) -> PlannerArtifacts:
    return artifacts_from_dict(json.loads(open(path, "r", encoding="utf-8").read()))


@dataclass(frozen=True)
class Plan:
    """Resolved training plan for one budget."""

    budget: float
    method: FineTuneMethod
    model: ModelArch
    predicted_size: float  # continuous optimum before snapping
    tokens: float
    predicted_loss: float | None
    advisory: dict = field(default_factory=lambda: dict(ADVISORY_SETTINGS))
    artifacts_digest: str = ""
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "budget_flop": self.budget,
            "method": method_label(self.method),
            "model": self.model.name,
            "model_params_total": costmodel.count_params(self.model).n_total,
            "predicted_size": self.predicted_size,
            "tokens": self.tokens,
            "predicted_loss": self.predicted_loss,
            "advisory": dict(sorted(self.advisory.items())),
            "artifacts_digest": self.artifacts_digest,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# Artifact construction
# ---------------------------------------------------------------------------

def default_artifacts(registry: tuple[ModelArch, ...] | None = None) -> PlannerArtifacts:
    """Planner artifacts from published constants plus documented placeholders."""
    registry = registry if registry is not None else pythia_registry()
    domain = (math.log(PUBLISHED_BUDGETS[0]), math.log(PUBLISHED_BUDGETS[-1]))
    front = Frontier(
        fits={
            "full": PowerLawFit(slope=-0.21, intercept=8.39, domain=domain),
            "lora": PowerLawFit(slope=-0.22, intercept=8.93, domain=domain),
        },
    )
    # Placeholder size trends: exponent 0.5, anchored at the smallest budget.
    size_fits = {
        "full": _anchored_size_fit(14e6, PUBLISHED_BUDGETS[0], domain),
        "lora": _anchored_size_fit(31e6, PUBLISHED_BUDGETS[0], domain),
    }
    sizes = sorted(costmodel.count_params(a).n_total for a in registry)
    rank_table = {}
    freeze_table = {}
    for size in sizes:
        for budget in PUBLISHED_BUDGETS:
            rank_table[(size, budget)] = 32 if budget < 9.6e16 else 128
            if size <= 2.0e8:
                active = 1.0
            else:
                active = 0.4 if budget < 3.8e17 else 0.7
            freeze_table[(size, budget)] = active
    return PlannerArtifacts(
        frontier=front,
        size_fits=size_fits,
        rank_table=rank_table,
        freeze_table=freeze_table,
        registry=registry,
        method_threshold=METHOD_THRESHOLD_FLOP,
    )


def _anchored_size_fit(anchor_size: float, anchor_budget: float, domain) -> PowerLawFit:
    slope = 0.5
    intercept = math.log(anchor_size) - slope * math.log(anchor_budget)
    return PowerLawFit(slope=slope, intercept=intercept, domain=domain)


def _threshold_from_frontier(front: Frontier) -> float:
    """Budget separating full fine-tuning from adapters, derived from fitted lines."""
    if "full" not in front.fits or "lora" not in front.fits:
        return math.inf if "lora" not in front.fits else 1e-30
    for crossover in front.crossovers:
        pair = {crossover.method_before, crossover.method_after}
        if pair == {"full", "lora"} and crossover.method_before == "full":
            return crossover.budget
        if pair == {"full", "lora"}:
            return 1e-30  # lora optimal below the cut; never prefer full
    # No envelope transition between the two: whichever line is lower wins everywhere.
    probe = math.log(METHOD_THRESHOLD_FLOP)
    full_lower = front.fits["full"].predict_ln(probe) <= front.fits["lora"].predict_ln(probe)
    return math.inf if full_lower else 1e-30


def artifacts_from_runs(
    runs: RunSet,
    registry: tuple[ModelArch, ...] | None = None,
    grouping_tolerance: float = 0.05,
) -> PlannerArtifacts:
    """Fit planner artifacts from experiment logs.

    Profiles, the frontier, per-method size trends, and hyperparameter lookup
    tables are all derived from the runs; the method threshold becomes the
    fitted full/lora crossover.
    """
    registry = registry if registry is not None else pythia_registry()
    kinds = sorted({r.method.kind for r in runs.records})
    profiles = {
        kind: build_profiles(runs, kind, grouping_tolerance, registry=registry)
        for kind in kinds
    }
    front = frontier(profiles.values())
    size_fits = {}
    for kind, profile in profiles.items():
        if len(profile.budgets()) >= 2:
            size_fits[kind] = optimal_size_fit(profile)
    rank_table = {}
    if "lora" in profiles:
        rank_table = {
            (p.size, p.budget): int(p.hyper)
            for p in profiles["lora"].points
            if p.hyper is not None
        }
    freeze_table = {}
    if "freeze" in profiles:
        for p in profiles["freeze"].points:
            # hyper is the frozen fraction when the architecture resolved;
            # raw block counts cannot be converted without one, so skip them.
            if isinstance(p.hyper, float) and p.hyper <= 1.0:
                freeze_table[(p.size, p.budget)] = 1.0 - p.hyper
    return PlannerArtifacts(
        frontier=front,
        size_fits=size_fits,
        rank_table=rank_table,
        freeze_table=freeze_table,
        registry=registry,
        method_threshold=_threshold_from_frontier(front),
    )


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------

def _snap_to_registry(predicted_size: float, registry) -> ModelArch:
    """Nearest registry model in log space; ties prefer the smaller model."""
    scored = sorted(
        ((abs(math.log(costmodel.count_params(a).n_total) - math.log(predicted_size)),
          costmodel.count_params(a).n_total, a) for a in registry),
        key=lambda t: (t[0], t[1]),
    )
    return scored[0][2]


def _nearest_table_entry(table: dict, size: float, budget: float):
    """Nearest-neighbour lookup in (ln size, ln budget); None for an empty table."""
    if not table:
        return None, None
    def distance(key):
        k_size, k_budget = key
        return math.hypot(math.log(k_size) - math.log(size), math.log(k_budget) - math.log(budget))
    best_key = min(sorted(table), key=distance)
    return table[best_key], best_key


def plan(budget: float, artifacts: PlannerArtifacts | None = None) -> Plan:
    """Resolve the compute-optimal configuration for a budget.

    Full fine-tuning at or below the method threshold, low-rank adaptation
    above it; the adapter rank comes from the bucketed lookup (default 128
    when no table entry exists). The token count is the exact cost inverse
    for the snapped model, so the plan reproduces the budget to rounding.
    """
    artifacts = artifacts if artifacts is not None else default_artifacts()
    if budget <= 0:
        raise ValidationError(f"budget must be > 0, got {budget}")
    kind = "full" if budget <= artifacts.method_threshold else "lora"
    return _resolve_plan(budget, kind, artifacts)


def plan_freeze(budget: float, artifacts: PlannerArtifacts | None = None) -> Plan:
    """Alternative low-memory plan: block freezing with a table-driven active fraction."""
    artifacts = artifacts if artifacts is not None else default_artifacts()
    if budget <= 0:
        raise ValidationError(f"budget must be > 0, got {budget}")
    if not artifacts.freeze_table:
        raise UnsupportedModeError("artifacts carry no freeze table; freeze planning unavailable")
    return _resolve_plan(budget, "freeze", artifacts)


def _resolve_plan(budget: float, kind: str, artifacts: PlannerArtifacts) -> Plan:
    notes = []
    size_fit = artifacts.size_fits.get(kind)
    if size_fit is None:
        fallback = artifacts.size_fits.get("full")
        if fallback is None:
            raise ValidationError(f"artifacts carry no optimal-size fit for {kind!r} or 'full'")
        size_fit = fallback
        notes.append(f"no optimal-size fit for {kind!r}; fell back to the full fine-tuning trend")
    predicted_size = size_fit.predict(budget)
    if size_fit.extrapolates(budget):
        notes.append("budget outside the fitted range; optimal size extrapolated")
    model = _snap_to_registry(predicted_size, artifacts.registry)
    model_size = costmodel.count_params(model).n_total

    method: FineTuneMethod
    if kind == "full":
        method = FullFineTune()
    elif kind == "lora":
        rank, _ = _nearest_table_entry(artifacts.rank_table, model_size, budget)
        if rank is None:
            rank = DEFAULT_LORA_RANK
            notes.append(f"rank table empty; defaulted to rank {DEFAULT_LORA_RANK}")
        method = LoRA(int(rank))
    elif kind == "freeze":
        fraction, key = _nearest_table_entry(artifacts.freeze_table, model_size, budget)
        if key is not None and (key[0] != model_size or key[1] != budget):
            notes.append(
                f"freeze table miss for (size={model_size}, budget={budget:.3g}); "
                f"used nearest bucket (size={key[0]}, budget={key[1]:.3g})"
            )
        frozen = model.n_layers - round(fraction * model.n_layers)
        frozen = min(max(frozen, 0), model.n_layers - 1)
        method = BlockFreeze(frozen)
    else:
        raise ValidationError(f"unknown method kind {kind!r}")

    counts = param_counts(model, method)
    tokens = costmodel.tokens_for_budget(counts, budget)
    predicted_loss = None
    if kind in artifacts.frontier.fits:
        predicted_loss = artifacts.frontier.predicted_loss(budget, method=kind)
    else:
        notes.append(f"frontier has no {kind!r} line; no loss prediction")
    return Plan(
        budget=budget,
        method=method,
        model=model,
        predicted_size=predicted_size,
        tokens=tokens,
        predicted_loss=predicted_loss,
        artifacts_digest=artifacts.digest(),
        notes=tuple(notes),
    )
