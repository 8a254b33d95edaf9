import numpy as np
import pytest

from deconas import params, space
from deconas.errors import ValidationError
from deconas.network import SharedWeightBank

from conftest import PUBLISHED_DIGITS


def test_single_conv_edge_param_count():
    # 3x3 kernel, one input and one output channel, one bias
    assert params.conv_param_count(1, 1, 3) == 10


def test_edge_kernel_counts():
    assert params.edge_kernel_count(space.CONV3X3, 64) == 9 * 64 * 64
    assert params.edge_kernel_count(space.DILATED3X3_RATE3, 64) == 9 * 64 * 64
    assert params.edge_kernel_count(space.DEPTHWISE_SEPARABLE3X3, 64) == 9 * 64 + 64 * 64
    with pytest.raises(ValidationError):
        params.edge_kernel_count("conv5x5", 64)


def test_ca_reduction_switch():
    assert params.ca_reduction(64) == 4
    assert params.ca_reduction(16) == 1
    assert params.ca_reduction(8) == 2
    assert params.ca_reduction(2) == 1  # never collapses to zero


def test_published_architecture_in_tolerance_band(paper_config):
    arch = space.decode_decimal(PUBLISHED_DIGITS, paper_config)
    total = params.count_params(arch, paper_config).total
    assert 1_370_000 <= total <= 2_056_000


def test_breakdown_sums_to_total(paper_config):
    arch = space.decode_decimal(PUBLISHED_DIGITS, paper_config)
    b = params.count_params(arch, paper_config)
    d = b.as_dict()
    assert d["total"] == sum(v for k, v in d.items() if k != "total")
    assert all(v >= 0 for v in d.values())


def test_all_zeros_is_minimum_and_all_ones_is_maximum(tiny_fusion_config):
    cfg = tiny_fusion_config
    totals = [params.count_params(a, cfg).total
              for a in space.enumerate_space(cfg, 1 << 20)]
    assert min(totals) == params.count_params(space.all_zeros(cfg), cfg).total
    assert max(totals) == params.max_params(cfg)


def test_monotone_in_bits(tiny_config):
    # adding any single bit to a genome never decreases the count
    cfg = tiny_config
    rng = np.random.default_rng(0)
    for _ in range(50):
        bits = list(rng.integers(0, 2, cfg.num_decisions))
        arch = space.from_bit_vector(bits, cfg)
        base = params.count_params(arch, cfg).total
        zero_positions = [i for i, b in enumerate(bits) if b == 0]
        for i in zero_positions:
            up = list(bits)
            up[i] = 1
            grown = params.count_params(space.from_bit_vector(up, cfg), cfg).total
            assert grown >= base


def test_count_matches_allocated_storage_exhaustively(tiny_config):
    bank = SharedWeightBank(tiny_config, np.random.default_rng(0))
    for arch in space.enumerate_space(tiny_config, 1 << 20):
        analytic = params.count_params(arch, tiny_config).total
        allocated = bank.active_value_count(arch)
        assert analytic == allocated, space.encode_decimal(arch, tiny_config)


def test_complexity_penalty_bounds(tiny_fusion_config):
    cfg = tiny_fusion_config
    assert params.complexity_penalty(space.all_ones(cfg), cfg) == 1.0
    low = params.complexity_penalty(space.all_zeros(cfg), cfg)
    assert 0.0 < low < 1.0


def test_count_rejects_invalid_genome(paper_config):
    bad = space.ArchitectureSequence(((1, 0, 1),), (1,) * 4, (1,) * 4)
    with pytest.raises(ValidationError):
        params.count_params(bad, paper_config)
