"""Walk through parameter accounting and training-cost arithmetic.

Run:  python3 demos/01_cost_accounting.py
"""

from embscale import costmodel
from embscale.arch import builtin_registry, find_arch
from embscale.costmodel import BiasOnly, BlockFreeze, FullFineTune, LoRA

print("=" * 72)
print("1. The bundled registry and its parameter totals")
print("=" * 72)
for arch in builtin_registry():
    inv = costmodel.count_params(arch)
    print(f"  {arch.name:<12} total {inv.n_total/1e6:9.1f}M   non-embedding {inv.n_nonembed/1e6:9.1f}M")

arch = find_arch("pythia-160m")
inv = costmodel.count_params(arch)
print()
print("=" * 72)
print(f"2. Itemised inventory of {arch.name} (first block shown)")
print("=" * 72)
for tensor in inv.tensors:
    if tensor.block not in (None, 0):
        continue
    tag = "embedding" if tensor.is_embedding else ("bias" if tensor.is_bias else "weight")
    print(f"  {tensor.name:<32} {str(tensor.shape):<16} {tensor.count:>10,}  [{tag}]")
print(f"  ... remaining {arch.n_layers - 1} blocks are identical")

print()
print("=" * 72)
print("3. Per-method (N_F, N_B, N_U) and the cost of 1B tokens")
print("=" * 72)
tokens = 1e9
methods = [FullFineTune(), BlockFreeze(6), LoRA(32), BiasOnly()]
print(f"  {'method':<10} {'N_F':>12} {'N_B':>12} {'N_U':>12} {'S':>7} {'FLOP':>12}")
for method in methods:
    counts = costmodel.param_counts(arch, method)
    flop = costmodel.flop_cost(counts, tokens)
    print(f"  {costmodel.method_label(method):<10} {counts.n_forward:>12,} "
          f"{counts.n_backward:>12,} {counts.n_updated:>12,} "
          f"{counts.trainable_fraction:>7.3f} {flop:>12.3e}")

print()
print("Full fine-tuning collapses to the classic 6*N*D rule:")
full = costmodel.param_counts(arch, FullFineTune())
print(f"  2*(N_F+N_B+N_U)*D = {costmodel.flop_cost(full, tokens):.6e}")
print(f"  6*N_F*D           = {6.0 * full.n_forward * tokens:.6e}")

print()
print("=" * 72)
print("4. Inverting the cost: tokens a fixed budget affords")
print("=" * 72)
budget = 2.4e16
for method in methods:
    counts = costmodel.param_counts(arch, method)
    tokens = costmodel.tokens_for_budget(counts, budget)
    print(f"  {costmodel.method_label(method):<10} at {budget:.1e} FLOP -> {tokens:,.0f} tokens")
