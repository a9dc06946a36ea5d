"""Synthetic run-log generation from a known ground-truth formula.

Emulates an experiment grid (budgets x architectures x methods): each cell
gets its exact parameter counts, the token count the budget affords, the
noiseless loss from the truth formula, and multiplicative log-normal noise.
Noise draws use the Philox counter-based generator keyed by (seed, cell
index), so the output is independent of evaluation order and reproducible
across runs; the algorithm name is recorded in the provenance.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import costmodel
from .arch import ModelArch
from .costmodel import BlockFreeze, FineTuneMethod, method_label
from .errors import ValidationError
from .runs import Provenance, RunRecord, RunSet
from .scalinglaw import ChinchillaParams, ModifiedParams, predict

RNG_ALGORITHM = "philox4x64 keyed by (seed, cell_index)"


@dataclass(frozen=True)
class FreezeFraction:
    """Grid-level freeze spec resolved per architecture: freeze round(f * n_layers) blocks."""

    fraction: float

    def __post_init__(self):
        if not 0.0 <= self.fraction < 1.0:
            raise ValidationError(f"freeze fraction must lie in [0, 1), got {self.fraction}")

    def resolve(self, arch: ModelArch) -> BlockFreeze:
        frozen = min(max(round(self.fraction * arch.n_layers), 0), arch.n_layers - 1)
        return BlockFreeze(frozen)


MethodSpec = FineTuneMethod | FreezeFraction


@dataclass(frozen=True)
class SynthSpec:
    """Ground truth plus the experiment grid to emulate."""

    truth: ChinchillaParams | ModifiedParams
    budgets: tuple[float, ...]
    archs: tuple[ModelArch, ...]
    methods: tuple[MethodSpec, ...]
    noise_sigma: float = 0.0
    seed: int = 0
    batch_size: int = 1024
    context_len: int = 75

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValidationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not self.budgets or not self.archs or not self.methods:
            raise ValidationError("grid must have at least one budget, architecture, and method")
        if any(b <= 0 for b in self.budgets):
            raise ValidationError("budgets must be positive")


def _cell_noise(seed: int, cell_index: int, sigma: float) -> float:
    if sigma == 0.0:
        return 0.0
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(cell_index)], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return float(rng.standard_normal() * sigma)


def generate(spec: SynthSpec) -> RunSet:
    """Emit one validated run record per feasible grid cell.

    Cells whose affordable data quantity is <= 1 (the truth formula's domain
    edge) or whose method is invalid for the architecture are skipped with a
    warning. Losses are truth * exp(noise); the recorded flop is the exact
    nominal budget.
    """
    records = []
    warnings = []
    cell_index = 0
    for budget in spec.budgets:
        for arch in spec.archs:
            inventory = costmodel.count_params(arch)
            for method_spec in spec.methods:
                index = cell_index
                cell_index += 1
                method = method_spec.resolve(arch) if isinstance(method_spec, FreezeFraction) else method_spec
                try:
                    counts = costmodel.param_counts(arch, method)
                except ValidationError as exc:
                    warnings.append(f"cell {index}: skipped ({exc})")
                    continue
                tokens = costmodel.tokens_for_budget(counts, budget)
                if tokens <= 1.0:
                    warnings.append(
                        f"cell {index}: skipped (budget {budget:.3g} affords only {tokens:.3g} tokens)"
                    )
                    continue
                clean = predict(
                    spec.truth, counts.n_total, tokens,
                    trainable_fraction=counts.trainable_fraction
                    if isinstance(spec.truth, ModifiedParams) else None,
                )
                loss = clean * math.exp(_cell_noise(spec.seed, index, spec.noise_sigma))
                tokens_per_step = spec.batch_size * spec.context_len
                records.append(RunRecord(
                    model_name=arch.name,
                    n_total=counts.n_total,
                    n_nonembed=counts.n_nonembed,
                    method=method,
                    trainable_fraction=counts.trainable_fraction,
                    tokens=tokens,
                    flop=budget,
                    final_loss=loss,
                    steps=max(1, round(tokens / tokens_per_step)),
                    batch_size=spec.batch_size,
                    context_len=spec.context_len,
                ))
    provenance = Provenance(
        source=f"synth(seed={spec.seed}, sigma={spec.noise_sigma}, rng={RNG_ALGORITHM})",
        sha256="",
    )
    return RunSet(records=tuple(records), provenance=provenance, warnings=tuple(warnings))


def true_argmin(spec: SynthSpec, budget: float) -> tuple[str, str]:
    """(method kind, model name) with the lowest noiseless loss at one grid budget.

    Exhaustive scan over the grid cells at that budget; the oracle the
    end-to-end planner check compares against.
    """
    best = None
    for arch in spec.archs:
        for method_spec in spec.methods:
            method = method_spec.resolve(arch) if isinstance(method_spec, FreezeFraction) else method_spec
            try:
                counts = costmodel.param_counts(arch, method)
            except ValidationError:
                continue
            tokens = costmodel.tokens_for_budget(counts, budget)
            if tokens <= 1.0:
                continue
            clean = predict(
                spec.truth, counts.n_total, tokens,
                trainable_fraction=counts.trainable_fraction
                if isinstance(spec.truth, ModifiedParams) else None,
            )
            key = (clean, counts.n_total, method_label(method))
            if best is None or key < best[0]:
                best = (key, method.kind, arch.name)
    if best is None:
        raise ValidationError(f"no feasible grid cell at budget {budget:.3g}")
    return best[1], best[2]
