"""Parameter accounting and FLOP cost tests.

The enumeration oracle below is written independently of the library: it
lists every tensor of the reference decoder block layout with plain integer
arithmetic and no shared code, so agreement is meaningful.
"""

import random

import pytest

from embscale import costmodel
from embscale.arch import ModelArch, builtin_registry, find_arch
from embscale.costmodel import (
    BiasOnly, BlockFreeze, FullFineTune, LoRA,
    count_params, flop_cost, method_label, param_counts, parse_method, tokens_for_budget,
)
from embscale.errors import ValidationError


def oracle_tensor_counts(n_layers, d, d_ff, vocab, tied):
    """Independent per-tensor enumeration: name -> parameter count."""
    tensors = {"embed_tokens": vocab * d}
    for i in range(n_layers):
        tensors[f"b{i}.qkv_w"] = (3 * d) * d
        tensors[f"b{i}.qkv_b"] = 3 * d
        tensors[f"b{i}.attn_out_w"] = d * d
        tensors[f"b{i}.attn_out_b"] = d
        tensors[f"b{i}.mlp_in_w"] = d_ff * d
        tensors[f"b{i}.mlp_in_b"] = d_ff
        tensors[f"b{i}.mlp_out_w"] = d * d_ff
        tensors[f"b{i}.mlp_out_b"] = d
        tensors[f"b{i}.ln1_w"] = d
        tensors[f"b{i}.ln1_b"] = d
        tensors[f"b{i}.ln2_w"] = d
        tensors[f"b{i}.ln2_b"] = d
    tensors["final_ln_w"] = d
    tensors["final_ln_b"] = d
    if not tied:
        tensors["head"] = vocab * d
    return tensors


def oracle_nonembed(n_layers, d, d_ff, vocab, tied):
    tensors = oracle_tensor_counts(n_layers, d, d_ff, vocab, tied)
    return sum(v for k, v in tensors.items() if k not in ("embed_tokens", "head"))


def oracle_total(n_layers, d, d_ff, vocab, tied):
    return sum(oracle_tensor_counts(n_layers, d, d_ff, vocab, tied).values())


def random_arch(rng):
    heads = rng.choice([1, 2, 4, 8])
    d = heads * rng.choice([8, 16, 32, 96])
    return ModelArch(
        name=f"rand-{d}",
        n_layers=rng.randint(1, 24),
        d_model=d,
        d_ff=rng.choice([2 * d, 4 * d, 8 * d, d + 8]),
        n_heads=heads,
        vocab_size=rng.randint(100, 60000),
        max_seq_len=2048,
        tie_embeddings=rng.random() < 0.5,
    )


# Advertised suite sizes the totals must land within 5% of.
PYTHIA_ADVERTISED = {
    "pythia-14m": 14e6, "pythia-31m": 31e6, "pythia-70m": 70e6, "pythia-160m": 160e6,
    "pythia-410m": 410e6, "pythia-1b": 1e9, "pythia-1.4b": 1.4e9, "pythia-2.8b": 2.8e9,
}


class TestCountParams:
    def test_reference_arch_nonembed(self):
        # Frozen from oracle_nonembed(12, 768, 3072, 50304, True) = 85_056_000.
        arch = ModelArch("ref", 12, 768, 3072, 12, 50304, tie_embeddings=True)
        inv = count_params(arch)
        assert oracle_nonembed(12, 768, 3072, 50304, True) == 85_056_000
        assert inv.n_nonembed == 85_056_000

    def test_degenerate_unit_arch(self):
        inv = count_params(ModelArch("unit", 1, 1, 1, 1, 1, max_seq_len=1))
        by_name = {t.name: t.count for t in inv.tensors}
        assert by_name["embed_tokens.weight"] == 1
        assert by_name["blocks.0.attn_qkv.weight"] == 3
        assert by_name["blocks.0.attn_qkv.bias"] == 3
        assert by_name["blocks.0.attn_out.weight"] == 1
        assert by_name["blocks.0.mlp_in.weight"] == 1
        assert by_name["blocks.0.mlp_in.bias"] == 1
        assert by_name["final_norm.weight"] == 1
        assert inv.n_total == 19
        assert inv.n_nonembed == 18

    def test_matches_oracle_on_randomized_archs(self):
        rng = random.Random(20240901)
        for _ in range(25):
            arch = random_arch(rng)
            inv = count_params(arch)
            expected = oracle_tensor_counts(
                arch.n_layers, arch.d_model, arch.d_ff, arch.vocab_size, arch.tie_embeddings
            )
            assert inv.n_total == sum(expected.values())
            assert inv.n_nonembed == oracle_nonembed(
                arch.n_layers, arch.d_model, arch.d_ff, arch.vocab_size, arch.tie_embeddings
            )

    def test_pythia_totals_within_5pct(self):
        for name, advertised in PYTHIA_ADVERTISED.items():
            arch = find_arch(name)
            assert arch is not None, name
            total = count_params(arch).n_total
            oracle = oracle_total(arch.n_layers, arch.d_model, arch.d_ff,
                                  arch.vocab_size, arch.tie_embeddings)
            assert total == oracle
            assert abs(total - advertised) / advertised < 0.05, (name, total)

    def test_invalid_arch_names_field(self):
        with pytest.raises(ValidationError, match="n_layers"):
            ModelArch("bad", 0, 8, 8, 1, 10)
        with pytest.raises(ValidationError, match="d_model"):
            ModelArch("bad", 1, 0, 8, 1, 10)
        with pytest.raises(ValidationError, match="n_heads"):
            ModelArch("bad", 1, 10, 8, 3, 10)


class TestParamCounts:
    def test_full_finetune_counts(self):
        arch = find_arch("pythia-70m")
        counts = param_counts(arch, FullFineTune())
        assert counts.n_forward == counts.n_backward == counts.n_updated == counts.n_nonembed
        assert counts.trainable_fraction == 1.0

    def test_block_freeze_counts(self):
        arch = find_arch("pythia-160m")
        n = count_params(arch).n_nonembed
        for k in range(arch.n_layers):
            counts = param_counts(arch, BlockFreeze(k))
            assert counts.n_forward == n
            assert counts.n_backward == counts.n_updated
            if k >= 1:
                assert counts.n_backward < counts.n_forward
        # Frozen embeddings are outside the non-embedding counts, so k = 0
        # coincides with full fine-tuning under this accounting.
        assert param_counts(arch, BlockFreeze(0)).n_backward == n

    def test_block_freeze_suffix_value(self):
        arch = ModelArch("toy", 4, 8, 32, 2, 100)
        block = 12 * 8 * 8 + 13 * 8  # weights + biases + norms per block
        counts = param_counts(arch, BlockFreeze(3))
        assert counts.n_updated == block + 2 * 8

    def test_lora_single_dense_layer(self):
        # One d_in = d_out = 4 layer at rank 2: adapters = 2 * (4 + 4) = 16.
        arch = ModelArch("tiny", 1, 4, 4, 1, 5)
        counts = param_counts(arch, LoRA(2, targets=frozenset({"attn_out"})))
        assert counts.n_updated == 16

    def test_lora_counts_include_backbone_in_backward(self):
        arch = find_arch("pythia-70m")
        n = count_params(arch).n_nonembed
        counts = param_counts(arch, LoRA(8))
        adapters = counts.n_updated
        assert adapters == arch.n_layers * 8 * (8 * arch.d_model + 2 * arch.d_ff)
        assert counts.n_forward == n + adapters
        assert counts.n_backward == n + adapters
        assert counts.n_total == count_params(arch).n_total + adapters

    def test_lora_fraction_caps_at_one(self):
        arch = find_arch("pythia-14m")
        counts = param_counts(arch, LoRA(2048))
        assert counts.trainable_fraction == 1.0
        assert counts.n_updated > counts.n_nonembed

    def test_bias_only_counts(self):
        arch = ModelArch("toy", 2, 8, 32, 2, 100)
        counts = param_counts(arch, BiasOnly())
        per_block = 3 * 8 + 8 + 32 + 8 + 2 * 8  # qkv, attn out, mlp in/out, two norms
        assert counts.n_updated == 2 * per_block + 8
        assert counts.n_forward == counts.n_backward == counts.n_nonembed

    def test_freeze_too_deep_rejected(self):
        arch = ModelArch("toy", 2, 8, 32, 2, 100)
        with pytest.raises(ValidationError, match="frozen_blocks"):
            param_counts(arch, BlockFreeze(2))

    def test_ordering_invariants_randomized(self):
        rng = random.Random(7)
        for _ in range(30):
            arch = random_arch(rng)
            methods = [FullFineTune(), BiasOnly(), LoRA(rng.choice([1, 4, 64]))]
            if arch.n_layers > 1:
                methods.append(BlockFreeze(rng.randint(0, arch.n_layers - 1)))
            for method in methods:
                counts = param_counts(arch, method)
                assert counts.n_updated <= counts.n_backward <= counts.n_forward
                assert counts.n_forward >= counts.n_nonembed
                assert 0.0 <= counts.trainable_fraction <= 1.0


class TestFlopCost:
    def test_full_matches_6nd(self):
        arch = find_arch("pythia-410m")
        counts = param_counts(arch, FullFineTune())
        assert flop_cost(counts, 1e9) == 6.0 * counts.n_forward * 1e9

    def test_freeze_matches_2nf_plus_4nb(self):
        arch = find_arch("pythia-410m")
        counts = param_counts(arch, BlockFreeze(10))
        d = 3.7e8
        assert flop_cost(counts, d) == 2.0 * counts.n_forward * d + 4.0 * counts.n_backward * d

    def test_zero_tokens_zero_cost(self):
        counts = param_counts(find_arch("pythia-70m"), BiasOnly())
        assert flop_cost(counts, 0) == 0.0

    def test_negative_tokens_rejected(self):
        counts = param_counts(find_arch("pythia-70m"), FullFineTune())
        with pytest.raises(ValidationError, match="tokens"):
            flop_cost(counts, -1)

    def test_linear_in_tokens(self):
        rng = random.Random(11)
        counts = param_counts(find_arch("pythia-1b"), LoRA(32))
        for _ in range(10):
            d = rng.uniform(1, 1e10)
            a = rng.uniform(0, 8)
            assert flop_cost(counts, a * d) == pytest.approx(a * flop_cost(counts, d), rel=1e-12)

    def test_method_cost_ordering(self):
        # freeze(k) and bias both cost at most full fine-tuning; freezing more
        # blocks never costs more.
        rng = random.Random(13)
        for _ in range(20):
            arch = random_arch(rng)
            d = 1e8
            full = flop_cost(param_counts(arch, FullFineTune()), d)
            bias = flop_cost(param_counts(arch, BiasOnly()), d)
            assert bias <= full
            previous = full
            for k in range(arch.n_layers):
                freeze = flop_cost(param_counts(arch, BlockFreeze(k)), d)
                assert freeze <= previous + 1e-9
                assert freeze <= full
                previous = freeze


class TestTokensForBudget:
    def test_unit_inversion(self):
        counts = param_counts(find_arch("pythia-70m"), FullFineTune())
        assert tokens_for_budget(counts, 6.0 * counts.n_forward) == pytest.approx(1.0, rel=1e-15)

    def test_round_trip(self):
        rng = random.Random(3)
        for _ in range(20):
            arch = random_arch(rng)
            method = rng.choice([FullFineTune(), BiasOnly(), LoRA(8)])
            counts = param_counts(arch, method)
            budget = rng.uniform(1e12, 1e20)
            assert abs(flop_cost(counts, tokens_for_budget(counts, budget)) - budget) / budget < 1e-12

    def test_pythia_160m_full_at_fixed_budget(self):
        arch = find_arch("pythia-160m")
        nf = oracle_nonembed(arch.n_layers, arch.d_model, arch.d_ff,
                             arch.vocab_size, arch.tie_embeddings)
        counts = param_counts(arch, FullFineTune())
        assert tokens_for_budget(counts, 1.5e15) == pytest.approx(1.5e15 / (6.0 * nf), rel=1e-15)

    def test_nonpositive_budget_rejected(self):
        counts = param_counts(find_arch("pythia-70m"), FullFineTune())
        with pytest.raises(ValidationError):
            tokens_for_budget(counts, 0.0)


class TestMethodParsing:
    @pytest.mark.parametrize("text,expected", [
        ("full", FullFineTune()),
        ("bias", BiasOnly()),
        ("freeze:3", BlockFreeze(3)),
        ("lora:32", LoRA(32)),
    ])
    def test_round_trip(self, text, expected):
        method = parse_method(text)
        assert method == expected
        assert parse_method(method_label(method)) == method

    def test_separate_hyper(self):
        assert parse_method("lora", hyper=16) == LoRA(16)
        assert parse_method("freeze", hyper="2") == BlockFreeze(2)

    def test_unknown_and_missing(self):
        with pytest.raises(ValidationError):
            parse_method("adapters")
        with pytest.raises(ValidationError):
            parse_method("lora")

    def test_lora_empty_targets_rejected(self):
        with pytest.raises(ValidationError, match="targets"):
            LoRA(4, targets=frozenset())


def test_registry_has_gemma_class_entries():
    names = {a.name for a in builtin_registry()}
    assert {"gemma-2b", "gemma2-2b"} <= names
