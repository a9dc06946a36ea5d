"""Turn compute budgets into full training plans.

Default artifacts carry the published constants (method threshold 9.06e16
FLOP, rounded frontier lines, rank defaults, the Pythia registry); fitted
artifacts built from run logs override all of them.

Run:  python3 demos/05_plan_budgets.py
"""

from embscale import recipe, synth
from embscale.arch import pythia_registry
from embscale.costmodel import FullFineTune, LoRA, method_label
from embscale.recipe import artifacts_from_runs, default_artifacts, plan, plan_freeze
from embscale.scalinglaw import ChinchillaParams

artifacts = default_artifacts()
print("=" * 78)
print(f"1. Plans from the default artifacts (threshold {artifacts.method_threshold:.2e} FLOP)")
print("=" * 78)
print(f"  {'budget':>10} {'method':<10} {'model':<12} {'tokens':>14} {'pred. loss':>10}")
for budget in (1.5e15, 6e15, 2.4e16, 9.06e16, 9.6e16, 3.8e17, 1.5e18):
    p = plan(budget, artifacts)
    print(f"  {budget:>10.2e} {method_label(p.method):<10} {p.model.name:<12} "
          f"{p.tokens:>14,.0f} {p.predicted_loss:>10.4f}")

print()
print("2. The low-memory alternative: block freezing at the same budgets")
for budget in (2.4e16, 1.5e18):
    p = plan_freeze(budget, artifacts)
    active = 1.0 - p.method.frozen_blocks / p.model.n_layers
    print(f"  {budget:>10.2e} {method_label(p.method):<10} {p.model.name:<12} "
          f"active blocks {active:.0%}")

print()
print("3. Advisory training settings attached to every plan")
for key, value in sorted(plan(1e16, artifacts).advisory.items()):
    print(f"  {key:<18} {value}")

print()
print("=" * 78)
print("4. Fitted artifacts from a synthetic experiment grid override the defaults")
print("=" * 78)
truth = ChinchillaParams(0.25, 180.0, 200.0, 0.4, 0.4)
budgets = tuple(1.5e15 * 5.3 ** i for i in range(6))
spec = synth.SynthSpec(truth=truth, budgets=budgets, archs=pythia_registry(),
                       methods=(FullFineTune(), LoRA(128)))
fitted = artifacts_from_runs(synth.generate(spec))
print(f"  fitted method threshold: {fitted.method_threshold:.3e} FLOP")
for budget in budgets:
    p = plan(budget, fitted)
    want = synth.true_argmin(spec, budget)
    got = (p.method.kind, p.model.name)
    flag = "" if got == want else "  <-- disagrees with exhaustive scan"
    print(f"  {budget:>10.2e} -> {method_label(p.method):<10} {p.model.name:<12}"
          f" (scan argmin: {want[0]}, {want[1]}){flag}")
