"""Demonstrate the embedding readout and the bidirectional contrastive loss.

Run:  python3 demos/02_contrastive_loss.py
"""

import math

import numpy as np

from embscale.contrastive import DEFAULT_TEMPERATURE, contrastive_loss, mean_pool

print("=" * 72)
print("1. Mean pooling: one embedding from a stack of hidden states")
print("=" * 72)
states = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
print("  states:", states.tolist())
print("  pooled:", mean_pool(states).tolist(), " (expected [2/3, 2/3])")

print()
print("=" * 72)
print("2. Closed-form checks")
print("=" * 72)
one = np.array([[0.6, 0.8]])
print(f"  single pair            -> {contrastive_loss(one, one, 0.0):.6f}  (expected 0)")
loss2 = contrastive_loss(np.eye(2), np.eye(2), 0.0)
print(f"  orthonormal pair, n=2  -> {loss2:.6f}  (expected ln(1+e^-1) = "
      f"{math.log(1 + math.exp(-1)):.6f})")

print()
print("=" * 72)
print("3. Invariances on a random batch")
print("=" * 72)
rng = np.random.default_rng(0)
q, v = rng.normal(size=(6, 16)), rng.normal(size=(6, 16))
base = contrastive_loss(q, v, DEFAULT_TEMPERATURE)
perm = rng.permutation(6)
scales = rng.uniform(0.2, 9.0, size=6)
print(f"  base loss                      {base:.12f}")
print(f"  sides swapped                  {contrastive_loss(v, q, DEFAULT_TEMPERATURE):.12f}")
print(f"  pairs jointly permuted         {contrastive_loss(q[perm], v[perm], DEFAULT_TEMPERATURE):.12f}")
print(f"  queries rescaled per row       {contrastive_loss(q * scales[:, None], v, DEFAULT_TEMPERATURE):.12f}")

print()
print("=" * 72)
print("4. Sharpening the logit scale drives a separable batch to zero loss")
print("=" * 72)
aligned = np.eye(4)
for tau in (0.0, 1.0, 2.0, 4.0):
    print(f"  tau = {tau:3.1f} -> loss {contrastive_loss(aligned, aligned, tau):.8f}")
