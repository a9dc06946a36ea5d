"""Parameter accounting and training-FLOP cost for fine-tuning methods.

Processing one token is charged 2 FLOPs per parameter in each of three
phases: the forward pass (N_F parameters), back-propagation (N_B), and the
optimizer update (N_U), so a run over D tokens costs

    C = 2*N_F*D + 2*N_B*D + 2*N_U*D.

All three counts use the non-token-embedding convention: the token-embedding
table and an untied output head never enter them. Attention cost along the
sequence axis is deliberately ignored; the model is purely parameter-based.
"""

import math
from dataclasses import dataclass, field
from typing import ClassVar

from .arch import ModelArch
from .errors import ValidationError

# Dense-layer roles a low-rank adapter can attach to, with (d_in, d_out)
# resolved per architecture. QKV is fused (GPT-NeoX convention), so one
# adapter pair covers all three projections.
ALL_DENSE_LAYERS = frozenset({"attn_qkv", "attn_out", "mlp_in", "mlp_out"})


def _dense_dims(arch: ModelArch, role: str) -> tuple[int, int]:
    d = arch.d_model
    dims = {
        "attn_qkv": (d, 3 * d),
        "attn_out": (d, d),
        "mlp_in": (d, arch.d_ff),
        "mlp_out": (arch.d_ff, d),
    }
    return dims[role]


# ---------------------------------------------------------------------------
# Fine-tuning methods
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FullFineTune:
    """Every non-embedding weight trains."""

    kind: ClassVar[str] = "full"


@dataclass(frozen=True)
class BlockFreeze:
    """Token embeddings and the first `frozen_blocks` transformer blocks stay fixed."""

    frozen_blocks: int
    kind: ClassVar[str] = "freeze"

    def __post_init__(self):
        if not isinstance(self.frozen_blocks, int) or self.frozen_blocks < 0:
            raise ValidationError(f"frozen_blocks must be an integer >= 0, got {self.frozen_blocks!r}")


@dataclass(frozen=True)
class LoRA:
    """Low-rank adapters of the given rank on a set of dense-layer roles."""

    rank: int
    targets: frozenset = field(default=ALL_DENSE_LAYERS)
    kind: ClassVar[str] = "lora"

    def __post_init__(self):
        if not isinstance(self.rank, int) or self.rank < 1:
            raise ValidationError(f"rank must be an integer >= 1, got {self.rank!r}")
        targets = frozenset(self.targets)
        if not targets:
            raise ValidationError("targets must be a non-empty set of dense-layer roles")
        unknown = targets - ALL_DENSE_LAYERS
        if unknown:
            raise ValidationError(f"unknown dense-layer roles: {sorted(unknown)}")
        object.__setattr__(self, "targets", targets)


@dataclass(frozen=True)
class BiasOnly:
    """Only bias tensors (including layer-norm biases) receive updates."""

    kind: ClassVar[str] = "bias"


FineTuneMethod = FullFineTune | BlockFreeze | LoRA | BiasOnly


def parse_method(text: str, hyper: int | float | str | None = None) -> FineTuneMethod:
    """Parse the "full" | "freeze:<k>" | "lora:<rank>" | "bias" encoding.

    A bare "freeze" or "lora" is accepted when the hyperparameter arrives
    separately (e.g. from a method_hyper column).
    """
    text = text.strip().lower()
    name, _, inline = text.partition(":")
    if inline:
        hyper = inline
    if name == "full":
        return FullFineTune()
    if name == "bias":
        return BiasOnly()
    if name in ("freeze", "lora"):
        if hyper is None or hyper == "":
            raise ValidationError(f"method {name!r} requires a hyperparameter (e.g. {name}:8)")
        try:
            value = int(float(hyper))
        except (TypeError, ValueError):
            raise ValidationError(f"method hyperparameter must be an integer, got {hyper!r}") from None
        return BlockFreeze(value) if name == "freeze" else LoRA(value)
    raise ValidationError(f"unknown fine-tuning method {text!r}")


def method_label(method: FineTuneMethod) -> str:
    """Inverse of parse_method for the canonical encodings."""
    if isinstance(method, BlockFreeze):
        return f"freeze:{method.frozen_blocks}"
    if isinstance(method, LoRA):
        return f"lora:{method.rank}"
    return method.kind


# ---------------------------------------------------------------------------
# Parameter inventory
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TensorSpec:
    """One weight or bias tensor in the model, with enough tags to classify it."""

    name: str
    shape: tuple[int, ...]
    block: int | None = None
    is_bias: bool = False
    is_embedding: bool = False

    @property
    def count(self) -> int:
        return math.prod(self.shape)


@dataclass(frozen=True)
class ParamInventory:
    """Itemised tensor list for an architecture plus the derived totals."""

    arch: ModelArch
    tensors: tuple[TensorSpec, ...]

    @property
    def n_total(self) -> int:
        return sum(t.count for t in self.tensors)

    @property
    def n_nonembed(self) -> int:
        return sum(t.count for t in self.tensors if not t.is_embedding)

    @property
    def block_params(self) -> int:
        """Parameters of a single transformer block (all blocks are identical)."""
        return sum(t.count for t in self.tensors if t.block == 0)

    @property
    def final_norm_params(self) -> int:
        return sum(t.count for t in self.tensors if t.block is None and "final_norm" in t.name)

    @property
    def bias_params(self) -> int:
        """All non-embedding bias tensors, layer-norm biases included."""
        return sum(t.count for t in self.tensors if t.is_bias and not t.is_embedding)

    def full_counts(self) -> "ParamCounts":
        n = self.n_nonembed
        return ParamCounts(self.n_total, n, n, n, n, 1.0)


def count_params(arch: ModelArch) -> ParamInventory:
    """Enumerate every tensor of the architecture.

    Covers the token-embedding table, per-block attention projections (fused
    QKV and output, with biases), the two feed-forward layers (with biases),
    the two per-block layer norms (scale and bias), the final layer norm, and
    an untied output head when embeddings are not tied. Rotary-style families
    have no learned positional table, so none is enumerated; max_seq_len is
    capacity metadata only.
    """
    d, d_ff, vocab = arch.d_model, arch.d_ff, arch.vocab_size
    tensors: list[TensorSpec] = [
        TensorSpec("embed_tokens.weight", (vocab, d), is_embedding=True),
    ]
    for b in range(arch.n_layers):
        prefix = f"blocks.{b}."
        tensors += [
            TensorSpec(prefix + "attn_qkv.weight", (3 * d, d), block=b),
            TensorSpec(prefix + "attn_qkv.bias", (3 * d,), block=b, is_bias=True),
            TensorSpec(prefix + "attn_out.weight", (d, d), block=b),
            TensorSpec(prefix + "attn_out.bias", (d,), block=b, is_bias=True),
            TensorSpec(prefix + "mlp_in.weight", (d_ff, d), block=b),
            TensorSpec(prefix + "mlp_in.bias", (d_ff,), block=b, is_bias=True),
            TensorSpec(prefix + "mlp_out.weight", (d, d_ff), block=b),
            TensorSpec(prefix + "mlp_out.bias", (d,), block=b, is_bias=True),
            TensorSpec(prefix + "input_norm.weight", (d,), block=b),
            TensorSpec(prefix + "input_norm.bias", (d,), block=b, is_bias=True),
            TensorSpec(prefix + "post_attn_norm.weight", (d,), block=b),
            TensorSpec(prefix + "post_attn_norm.bias", (d,), block=b, is_bias=True),
        ]
    tensors += [
        TensorSpec("final_norm.weight", (d,)),
        TensorSpec("final_norm.bias", (d,), is_bias=True),
    ]
    if not arch.tie_embeddings:
        tensors.append(TensorSpec("head.weight", (vocab, d), is_embedding=True))
    return ParamInventory(arch, tuple(tensors))


# ---------------------------------------------------------------------------
# Per-method counts and cost
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamCounts:
    """The (N_F, N_B, N_U) triple plus totals and the trainable fraction S."""

    n_total: int
    n_nonembed: int
    n_forward: int
    n_backward: int
    n_updated: int
    trainable_fraction: float

    def __post_init__(self):
        if not self.n_updated <= self.n_backward <= self.n_forward:
            raise ValidationError(
                "counts must satisfy n_updated <= n_backward <= n_forward, got "
                f"({self.n_updated}, {self.n_backward}, {self.n_forward})"
            )
        if not 0.0 <= self.trainable_fraction <= 1.0:
            raise ValidationError(f"trainable_fraction must lie in [0, 1], got {self.trainable_fraction}")


def lora_adapter_params(arch: ModelArch, method: LoRA) -> int:
    """Adapter parameters: rank * (d_in + d_out) summed over targeted dense layers."""
    per_block = sum(method.rank * sum(_dense_dims(arch, role)) for role in sorted(method.targets))
    return arch.n_layers * per_block


def param_counts(arch: ModelArch, method: FineTuneMethod) -> ParamCounts:
    """Resolve (N_F, N_B, N_U) and the trainable fraction for a method on an architecture."""
    inv = count_params(arch)
    n = inv.n_nonembed
    if isinstance(method, FullFineTune):
        return inv.full_counts()
    if isinstance(method, BlockFreeze):
        if method.frozen_blocks >= arch.n_layers:
            raise ValidationError(
                f"frozen_blocks must be < n_layers, got {method.frozen_blocks} for {arch.n_layers} layers"
            )
        active = arch.n_layers - method.frozen_blocks
        suffix = active * inv.block_params + inv.final_norm_params
        return ParamCounts(inv.n_total, n, n, suffix, suffix, suffix / n)
    if isinstance(method, LoRA):
        adapters = lora_adapter_params(arch, method)
        # Gradients traverse the whole frozen backbone to reach adapters on
        # every layer, so the backbone counts toward N_B as well as N_F.
        # S is capped at 1: extreme ranks on tiny models can push the raw
        # adapter share above the whole backbone.
        return ParamCounts(
            inv.n_total + adapters, n, n + adapters, n + adapters, adapters,
            min(1.0, adapters / n),
        )
    if isinstance(method, BiasOnly):
        biases = inv.bias_params
        return ParamCounts(inv.n_total, n, n, n, biases, biases / n)
    raise ValidationError(f"unsupported method object {method!r}")


def flop_cost(counts: ParamCounts, tokens: float) -> float:
    """Training cost in FLOP for processing `tokens` tokens."""
    if tokens < 0:
        raise ValidationError(f"tokens must be >= 0, got {tokens}")
    return 2.0 * tokens * (counts.n_forward + counts.n_backward + counts.n_updated)


def tokens_for_budget(counts: ParamCounts, flop: float) -> float:
    """Exact inverse of flop_cost: the token count a budget affords."""
    if flop <= 0:
        raise ValidationError(f"flop budget must be > 0, got {flop}")
    denom = 2.0 * (counts.n_forward + counts.n_backward + counts.n_updated)
    if denom == 0:
        raise ValidationError("counts have zero forward parameters; cost per token is zero")
    return flop / denom
