import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deconas import space
from deconas.errors import LengthError, RangeError, SpaceTooLargeError, ValidationError

from conftest import PUBLISHED_DIGITS


class TestDecodeDecimal:
    def test_digit_semantics_msb_first(self, paper_config):
        arch = space.decode_decimal([4] + [0] * 9, paper_config)
        assert arch.mix_bits[0] == (1, 0, 0)
        arch = space.decode_decimal([6] + [0] * 9, paper_config)
        assert arch.mix_bits[0] == (1, 1, 0)
        arch = space.decode_decimal([7] + [0] * 9, paper_config)
        assert arch.mix_bits[0] == (1, 1, 1)

    def test_published_sequence_is_valid_30_bit_genome(self, paper_config):
        arch = space.decode_decimal(PUBLISHED_DIGITS, paper_config)
        assert space.validate(arch, paper_config) == []
        flat = arch.flat_bits(paper_config)
        assert len(flat) == 30
        assert flat[:6] == [1, 1, 1, 1, 1, 0]  # digits 7, 6

    def test_round_trip(self, paper_config):
        digits = [3, 1, 4, 1, 5, 2, 6, 5, 3, 5]
        arch = space.decode_decimal(digits, paper_config)
        assert space.encode_decimal(arch, paper_config) == digits

    def test_length_error(self, paper_config):
        with pytest.raises(LengthError):
            space.decode_decimal([1, 2, 3], paper_config)

    def test_range_error(self, paper_config):
        with pytest.raises(RangeError):
            space.decode_decimal([8] + [0] * 9, paper_config)
        with pytest.raises(RangeError):
            space.decode_decimal([-1] + [0] * 9, paper_config)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=7), min_size=10, max_size=10))
def test_round_trip_property(digits):
    config = space.SearchSpaceConfig()
    arch = space.decode_decimal(digits, config)
    assert space.encode_decimal(arch, config) == digits


class TestValidate:
    def test_wrong_block_count(self, paper_config):
        arch = space.ArchitectureSequence(((1, 0, 1),), (1,) * 4, (1,) * 4)
        kinds = {i.kind for i in space.validate(arch, paper_config)}
        assert "length" in kinds

    def test_non_binary_bit(self, paper_config):
        arch = space.all_ones(paper_config)
        bad = space.ArchitectureSequence(
            ((2, 0, 0),) + arch.mix_bits[1:], arch.local_fusion, arch.global_fusion)
        kinds = {i.kind for i in space.validate(bad, paper_config)}
        assert "range" in kinds

    def test_zero_gate_without_fusion_search(self, paper_config):
        arch = space.all_ones(paper_config)
        bad = space.ArchitectureSequence(arch.mix_bits, (0, 1, 1, 1), arch.global_fusion)
        kinds = {i.kind for i in space.validate(bad, paper_config)}
        assert "gate" in kinds

    def test_zero_gate_allowed_with_fusion_search(self, tiny_fusion_config):
        arch = space.ArchitectureSequence(
            ((1, 0),) * 3, (0, 1), (0,))
        assert space.validate(arch, tiny_fusion_config) == []


class TestStructure:
    def test_mix_block_order(self):
        assert space.mix_block_order(3) == [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)]

    def test_node_bits_slice(self, paper_config):
        arch = space.decode_decimal(PUBLISHED_DIGITS, paper_config)
        rows = arch.node_bits(3, 4)
        assert rows == arch.mix_bits[3:6]
        with pytest.raises(RangeError):
            arch.node_bits(5, 4)

    def test_is_identity_node(self, paper_config):
        arch = space.decode_decimal(PUBLISHED_DIGITS, paper_config)
        # digits for node 3 are (3, 0, 2): not all zero
        assert not space.is_identity_node(arch, 3, paper_config)
        zero = space.all_zeros(paper_config)
        for node in range(1, 5):
            assert space.is_identity_node(zero, node, paper_config)

    def test_from_bit_vector_inverse_of_flat_bits(self, tiny_fusion_config):
        arch = space.ArchitectureSequence(((1, 0), (0, 1), (1, 1)), (1, 0), (1,))
        rebuilt = space.from_bit_vector(arch.flat_bits(tiny_fusion_config), tiny_fusion_config)
        assert rebuilt == arch


class TestEnumerate:
    def test_counts(self):
        one_bit = space.SearchSpaceConfig(
            num_blocks=1, mix_nodes=1, num_ops=1, feature_channels=4, scale=2,
            op_list=(space.CONV3X3,))
        assert len(list(space.enumerate_space(one_bit, 1 << 20))) == 2

        tiny = space.SearchSpaceConfig(
            num_blocks=1, mix_nodes=2, num_ops=2, feature_channels=4, scale=2,
            op_list=(space.CONV3X3, space.DEPTHWISE_SEPARABLE3X3))
        archs = list(space.enumerate_space(tiny, 1 << 20))
        assert len(archs) == 64
        assert len(set(archs)) == 64

        fused = space.SearchSpaceConfig(
            num_blocks=1, mix_nodes=1, num_ops=2, feature_channels=4, scale=2,
            fusion_search=True, op_list=(space.CONV3X3, space.DEPTHWISE_SEPARABLE3X3))
        assert space.space_size(fused) == 16
        assert len(set(space.enumerate_space(fused, 1 << 20))) == 16

    def test_limit_guard(self, paper_config):
        assert space.space_size(paper_config) == 2 ** 30
        with pytest.raises(SpaceTooLargeError):
            list(space.enumerate_space(paper_config, 1 << 20))


class TestSerialization:
    def test_json_round_trip(self, tiny_fusion_config):
        arch = space.ArchitectureSequence(((1, 0), (0, 1), (1, 1)), (0, 1), (1,))
        text = space.to_json(arch, tiny_fusion_config)
        back, cfg = space.from_json(text)
        assert back == arch
        assert cfg == tiny_fusion_config

    def test_from_json_validates(self, paper_config):
        arch = space.all_ones(paper_config)
        text = space.to_json(arch, paper_config)
        broken = text.replace('"local_fusion": [1, 1, 1, 1]', '"local_fusion": [1, 1]')
        with pytest.raises(ValidationError):
            space.from_json(broken)

    def test_dot_mentions_active_edges_only(self, tiny_config):
        arch = space.ArchitectureSequence(((1, 0), (0, 0), (0, 1)), (1, 1), (1,))
        dot = space.to_dot(arch, tiny_config)
        assert dot.startswith("digraph")
        assert "in -> n1" in dot
        assert "in -> n2" not in dot
        assert "n1 -> n2" in dot
