import numpy as np
import pytest

import deconas.autograd as ag
from deconas import network, space
from deconas.autograd import Tensor
from deconas.errors import BankError
from deconas.network import ChildNetwork, SharedWeightBank


def make_bank(config, seed=0, dtype=np.float64):
    return SharedWeightBank(config, np.random.default_rng(seed), dtype=dtype)


def rand_feat(rng, g, size=5):
    return Tensor(rng.standard_normal((1, g, size, size)))


class TestForward:
    @pytest.mark.parametrize("scale", [2, 3])
    def test_shape_contract(self, scale):
        cfg = space.SearchSpaceConfig(
            num_blocks=1, mix_nodes=2, num_ops=2, feature_channels=4, scale=scale,
            op_list=(space.CONV3X3, space.DEPTHWISE_SEPARABLE3X3))
        net = ChildNetwork(space.all_ones(cfg), cfg, make_bank(cfg))
        out = net.forward(Tensor(np.random.default_rng(0).random((2, 3, 6, 7))))
        assert out.data.shape == (2, 3, 6 * scale, 7 * scale)

    def test_all_zero_arch_is_finite(self, tiny_config):
        net = ChildNetwork(space.all_zeros(tiny_config), tiny_config, make_bank(tiny_config))
        out = net.forward(Tensor(np.random.default_rng(1).random((1, 3, 4, 4))))
        assert np.all(np.isfinite(out.data))

    def test_identity_node_passes_same_object(self, tiny_config):
        bank = make_bank(tiny_config)
        arch = space.all_zeros(tiny_config)
        rng = np.random.default_rng(2)
        x = rand_feat(rng, tiny_config.feature_channels)
        out = network.mix_node_forward([x], 1, arch, bank, dnb=1)
        assert out is x

    def test_bank_config_mismatch(self, tiny_config, paper_config):
        with pytest.raises(BankError):
            ChildNetwork(space.all_ones(paper_config), paper_config, make_bank(tiny_config))

    def test_dilated_op_used(self):
        # dilation must change the output versus a standard conv with same kernel
        cfg = space.SearchSpaceConfig(
            num_blocks=1, mix_nodes=1, num_ops=1, feature_channels=4, scale=2,
            op_list=(space.DILATED3X3_RATE3,))
        bank = make_bank(cfg)
        rng = np.random.default_rng(3)
        x = rand_feat(rng, 4, size=9)
        keys = bank.edge_keys(1, 1, 0, 0, space.DILATED3X3_RATE3)
        dil = network._apply_edge_op(x, space.DILATED3X3_RATE3, keys, bank)
        std = ag.conv2d(x, bank.store[keys[0]])
        assert not np.allclose(dil.data, std.data)


class TestGatingEquivalence:
    """Per-source kernel sums must equal concat-then-conv oracles."""

    def oracle_1x1(self, feats, kernels, bias):
        cat = np.concatenate([f.data for f in feats], axis=1)
        kernel = np.concatenate(kernels, axis=1)
        return ag.conv2d(Tensor(cat), Tensor(kernel), Tensor(bias)).data

    def test_local_fusion_matches_oracle(self, tiny_fusion_config):
        cfg = tiny_fusion_config
        g = cfg.feature_channels
        bank = make_bank(cfg)
        rng = np.random.default_rng(4)
        block_in = rand_feat(rng, g)
        nodes = [rand_feat(rng, g) for _ in range(cfg.mix_nodes)]
        for gates in [(0, 0), (0, 1), (1, 0), (1, 1)]:
            fused = network.local_fusion(nodes, block_in, gates, bank, dnb=1,
                                         residual=False)
            feats, kernels = [], []
            for s, feat in enumerate([block_in] + nodes):
                if s == cfg.mix_nodes or gates[s]:
                    feats.append(feat)
                    kernels.append(bank.store[f"dnb1/lf/src{s}/w"].data)
            want = self.oracle_1x1(feats, kernels, bank.store["dnb1/lf/b"].data)
            assert np.allclose(fused.data, want, atol=1e-6)

    def test_global_fusion_matches_oracle(self, tiny_fusion_config):
        cfg = tiny_fusion_config
        g = cfg.feature_channels
        bank = make_bank(cfg)
        rng = np.random.default_rng(5)
        feats = [rand_feat(rng, g) for _ in range(cfg.num_blocks + 1)]
        for gates in [(0,), (1,)]:
            fused = network.global_fusion(feats, gates, bank)
            kept, kernels = [], []
            for s, feat in enumerate(feats):
                if s == cfg.num_blocks or gates[s]:
                    kept.append(feat)
                    kernels.append(bank.store[f"gf/src{s}/w"].data)
            pre = self.oracle_1x1(kept, kernels, bank.store["gf/b"].data)
            want = ag.conv2d(Tensor(pre), bank.store["gf/conv/w"], bank.store["gf/conv/b"]).data
            assert np.allclose(fused.data, want, atol=1e-6)

    def test_mix_node_single_op_matches_concat_conv(self, tiny_config):
        # node 2 with conv3x3 on both sources == conv over concatenated sources
        cfg = tiny_config
        g = cfg.feature_channels
        bank = make_bank(cfg)
        arch = space.from_bit_vector([0, 0, 1, 0, 1, 0], cfg)
        rng = np.random.default_rng(6)
        inputs = [rand_feat(rng, g), rand_feat(rng, g)]
        out = network.mix_node_forward(inputs, 2, arch, bank, dnb=1)

        k0 = bank.store["dnb1/node2/src0/op0/w"].data
        k1 = bank.store["dnb1/node2/src1/op0/w"].data
        cat = np.concatenate([inputs[0].data, inputs[1].data], axis=1)
        summed = ag.conv2d(Tensor(cat), Tensor(np.concatenate([k0, k1], axis=1)),
                           bank.store["dnb1/node2/op0/b"])
        want = network.channel_attention(ag.relu(summed), 1, 2, bank).data
        assert np.allclose(out.data, want, atol=1e-6)

    def test_zero_gate_equals_physical_removal(self, tiny_fusion_config):
        # a gated-out source must have no influence at all on the fusion output
        cfg = tiny_fusion_config
        g = cfg.feature_channels
        bank = make_bank(cfg)
        rng = np.random.default_rng(7)
        nodes = [rand_feat(rng, g) for _ in range(cfg.mix_nodes)]
        # gate 0 covers the block input; with it closed (and no residual) the
        # block input must have zero influence on the fusion output
        base = network.local_fusion(nodes, rand_feat(rng, g), (0, 1), bank,
                                    dnb=1, residual=False).data
        again = network.local_fusion(nodes, rand_feat(rng, g), (0, 1), bank,
                                     dnb=1, residual=False).data
        assert np.array_equal(base, again)


class TestWeightSharing:
    def test_active_keys_subset_and_fixed(self, tiny_config):
        bank = make_bank(tiny_config)
        keys = bank.active_keys(space.all_zeros(tiny_config))
        assert set(bank.fixed_keys()) <= set(keys)
        assert set(keys) <= set(bank.store.names())

    def test_storage_identity_across_networks(self, tiny_config):
        bank = make_bank(tiny_config)
        a = ChildNetwork(space.from_bit_vector([1, 0, 0, 0, 0, 0], tiny_config),
                         tiny_config, bank)
        b = ChildNetwork(space.from_bit_vector([1, 0, 0, 0, 0, 1], tiny_config),
                         tiny_config, bank)
        shared = "dnb1/node1/src0/op0/w"
        assert a.bank.store[shared] is b.bank.store[shared]

    def test_gradients_only_on_active_keys(self, tiny_config):
        bank = make_bank(tiny_config)
        arch = space.from_bit_vector([1, 0, 0, 0, 0, 1], tiny_config)
        net = ChildNetwork(arch, tiny_config, bank)
        bank.store.zero_grad()
        out = net.forward(Tensor(np.random.default_rng(8).random((1, 3, 4, 4))))
        ag.tsum(out).backward()
        active = set(bank.active_keys(arch))
        for name in bank.store.names():
            grad = bank.store[name].grad
            if name in active:
                assert grad is not None, name
            else:
                assert grad is None, name

    def test_update_propagates_iff_keys_shared(self, tiny_config):
        bank = make_bank(tiny_config)
        arch_a = space.from_bit_vector([1, 0, 0, 0, 0, 0], tiny_config)
        arch_b = space.from_bit_vector([1, 0, 0, 0, 0, 1], tiny_config)
        x = Tensor(np.random.default_rng(9).random((1, 3, 4, 4)))
        net_b = ChildNetwork(arch_b, tiny_config, bank)
        before = net_b.forward(x).data.copy()

        # perturb a key active in both architectures
        bank.store["dnb1/node1/src0/op0/w"].data += 0.1
        assert not np.array_equal(net_b.forward(x).data, before)

        # perturb a key active only in B; A's output must not move
        net_a = ChildNetwork(arch_a, tiny_config, bank)
        ref_a = net_a.forward(x).data.copy()
        only_b = "dnb1/node2/src1/op1/dw"
        assert only_b not in bank.active_keys(arch_a)
        assert only_b in bank.active_keys(arch_b)
        bank.store[only_b].data += 0.5
        assert np.array_equal(net_a.forward(x).data, ref_a)
