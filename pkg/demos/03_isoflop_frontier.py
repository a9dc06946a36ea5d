"""Build IsoFLOP profiles and the compute-optimal frontier from a synthetic grid.

A known ground-truth formula generates a noiseless experiment grid, profiles
pick the per-(budget, size) winners, and log-log trend lines locate where the
optimal fine-tuning method switches.

Run:  python3 demos/03_isoflop_frontier.py
"""

from embscale import synth
from embscale.arch import pythia_registry
from embscale.costmodel import FullFineTune, LoRA
from embscale.isoflop import build_profiles, frontier, optimal_size_fit
from embscale.scalinglaw import ChinchillaParams

truth = ChinchillaParams(irreducible_loss=0.25, A=180.0, B=200.0, alpha=0.4, beta=0.4)
budgets = tuple(1.5e15 * 5.3 ** i for i in range(6))
spec = synth.SynthSpec(
    truth=truth, budgets=budgets, archs=pythia_registry(),
    methods=(FullFineTune(), LoRA(128)),
)
runs = synth.generate(spec)
print(f"generated {len(runs.records)} noiseless runs over {len(budgets)} budgets")

profiles = {kind: build_profiles(runs, kind) for kind in ("full", "lora")}

print()
print("=" * 72)
print("IsoFLOP profile for full fine-tuning (loss per budget x size)")
print("=" * 72)
for budget in profiles["full"].budgets():
    points = profiles["full"].points_at(budget)
    best = min(points, key=lambda p: p.loss)
    row = "  ".join(f"{p.loss:.3f}" for p in points)
    print(f"  C={budget:.2e}:  {row}   best N = {best.size/1e6:.0f}M")

print()
print("=" * 72)
print("Optimal-size trends (log-log slope, i.e. N_opt ~ C^slope)")
print("=" * 72)
for kind, profile in profiles.items():
    fit = optimal_size_fit(profile)
    print(f"  {kind:<5} slope {fit.slope:+.3f}  r^2 {fit.r_squared:.5f}")

front = frontier(profiles.values())
print()
print("=" * 72)
print("Frontier lines ln(loss) = m*ln(C) + b and the method crossover")
print("=" * 72)
for kind, fit in sorted(front.fits.items()):
    print(f"  {kind:<5} m = {fit.slope:+.4f}   b = {fit.intercept:+.4f}   r^2 = {fit.r_squared:.5f}")
for cut in front.crossovers:
    print(f"  crossover at C = {cut.budget:.3e} FLOP: "
          f"{cut.method_before} -> {cut.method_after}")
for budget in budgets:
    print(f"  at C = {budget:.2e}: frontier designates {front.method_at(budget)} "
          f"(predicted loss {front.predicted_loss(budget):.4f})")
