"""Child super-resolution network built as a view into a shared weight bank.

Every candidate edge and operation in the search space owns persistent
storage, allocated up front, so sampled architectures reuse parameters for
the keys they have in common.  Concatenate-then-convolve layers are
decomposed into per-source kernels summed with a single bias, which is
algebraically identical and keeps weight sharing well defined when fan-in
varies across architectures.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import BankError, ShapeError, ValidationError
from .params import ca_reduction
from .space import (
    CONV3X3,
    DEPTHWISE_SEPARABLE3X3,
    DILATED3X3_RATE3,
    ArchitectureSequence,
    SearchSpaceConfig,
    is_identity_node,
    validate,
)
from .store import ParamStore, variance_scaled


class SharedWeightBank:
    """Persistent parameters for every possible child network in a space."""

    def __init__(self, config: SearchSpaceConfig, rng: np.random.Generator,
                 dtype=np.float32):
        self.config = config
        self.store = ParamStore(dtype=dtype)
        self._allocate(rng)

    # -- key naming ---------------------------------------------------------

    @staticmethod
    def edge_keys(d: int, m: int, j: int, k: int, op: str) -> list[str]:
        base = f"dnb{d}/node{m}/src{j}/op{k}"
        if op == DEPTHWISE_SEPARABLE3X3:
            return [f"{base}/dw", f"{base}/pw"]
        return [f"{base}/w"]

    @staticmethod
    def mix_bias_key(d: int, m: int, k: int) -> str:
        return f"dnb{d}/node{m}/op{k}/b"

    @staticmethod
    def ca_keys(d: int, m: int) -> list[str]:
        base = f"dnb{d}/node{m}/ca"
        return [f"{base}/w1", f"{base}/b1", f"{base}/w2", f"{base}/b2"]

    def fixed_keys(self) -> list[str]:
        cfg = self.config
        keys = ["sfe1/w", "sfe1/b", "sfe2/w", "sfe2/b"]
        for d in range(1, cfg.num_blocks + 1):
            keys += [f"dnb{d}/h1/src{j}/w" for j in range(d)]
            keys.append(f"dnb{d}/h1/b")
            keys.append(f"dnb{d}/lf/b")
        keys += ["gf/b", "gf/conv/w", "gf/conv/b", "up1/w", "up1/b", "up2/w", "up2/b"]
        return keys

    # -- allocation ---------------------------------------------------------

    def _allocate(self, rng: np.random.Generator):
        cfg = self.config
        g = cfg.feature_channels
        dt = self.store.dtype

        def weight(name, shape, fan_in):
            self.store.create(name, variance_scaled(rng, shape, fan_in, dtype=dt))

        def bias(name, size):
            self.store.create(name, np.zeros(size, dtype=dt))

        weight("sfe1/w", (g, 3, 3, 3), 27)
        bias("sfe1/b", g)
        weight("sfe2/w", (g, g, 3, 3), 9 * g)
        bias("sfe2/b", g)

        red = ca_reduction(g)
        for d in range(1, cfg.num_blocks + 1):
            for j in range(d):
                weight(f"dnb{d}/h1/src{j}/w", (g, g, 1, 1), g)
            bias(f"dnb{d}/h1/b", g)
            for m in range(1, cfg.mix_nodes + 1):
                for j in range(m):
                    for k, op in enumerate(cfg.op_list):
                        base = f"dnb{d}/node{m}/src{j}/op{k}"
                        if op == DEPTHWISE_SEPARABLE3X3:
                            weight(f"{base}/dw", (g, 1, 3, 3), 9)
                            weight(f"{base}/pw", (g, g, 1, 1), g)
                        elif op in (CONV3X3, DILATED3X3_RATE3):
                            weight(f"{base}/w", (g, g, 3, 3), 9 * g)
                        else:
                            raise ValidationError(f"unknown operation {op!r}")
                for k in range(cfg.num_ops):
                    bias(self.mix_bias_key(d, m, k), g)
                weight(f"dnb{d}/node{m}/ca/w1", (red, g, 1, 1), g)
                bias(f"dnb{d}/node{m}/ca/b1", red)
                weight(f"dnb{d}/node{m}/ca/w2", (g, red, 1, 1), red)
                bias(f"dnb{d}/node{m}/ca/b2", g)
            for s in range(cfg.mix_nodes + 1):
                weight(f"dnb{d}/lf/src{s}/w", (g, g, 1, 1), g)
            bias(f"dnb{d}/lf/b", g)

        for s in range(cfg.num_blocks + 1):
            weight(f"gf/src{s}/w", (g, g, 1, 1), g)
        bias("gf/b", g)
        weight("gf/conv/w", (g, g, 3, 3), 9 * g)
        bias("gf/conv/b", g)

        s2 = cfg.scale * cfg.scale
        weight("up1/w", (g * s2, g, 3, 3), 9 * g)
        bias("up1/b", g * s2)
        weight("up2/w", (3, g, 3, 3), 9 * g)
        bias("up2/b", 3)

    # -- architecture-dependent views ---------------------------------------

    def active_keys(self, arch: ArchitectureSequence) -> list[str]:
        """Bank keys referenced by the forward pass of ``arch``."""
        cfg = self.config
        issues = validate(arch, cfg)
        if issues:
            raise ValidationError("; ".join(i.message for i in issues))
        keys = self.fixed_keys()
        for d in range(1, cfg.num_blocks + 1):
            for m in range(1, cfg.mix_nodes + 1):
                rows = arch.node_bits(m, cfg.mix_nodes)
                for k, op in enumerate(cfg.op_list):
                    edges = [j for j, row in enumerate(rows) if row[k]]
                    for j in edges:
                        keys += self.edge_keys(d, m, j, k, op)
                    if edges:
                        keys.append(self.mix_bias_key(d, m, k))
                if not is_identity_node(arch, m, cfg):
                    keys += self.ca_keys(d, m)
            for s in range(cfg.mix_nodes + 1):
                if s == cfg.mix_nodes or arch.local_fusion[s]:
                    keys.append(f"dnb{d}/lf/src{s}/w")
        for s in range(cfg.num_blocks + 1):
            if s == cfg.num_blocks or arch.global_fusion[s]:
                keys.append(f"gf/src{s}/w")
        return keys

    def active_value_count(self, arch: ArchitectureSequence) -> int:
        return self.store.value_count(self.active_keys(arch))


def _conv1x1_sum(features, weight_names, bank: SharedWeightBank, bias_name: str) -> Tensor:
    """Sum of per-source 1x1 convolutions plus one bias (= concat then 1x1)."""
    store = bank.store
    acc = None
    for feat, wname in zip(features, weight_names):
        term = ag.conv2d(feat, store[wname])
        acc = term if acc is None else ag.add(acc, term)
    g = store[bias_name].data.shape[0]
    return ag.add(acc, ag.reshape(store[bias_name], (1, g, 1, 1)))


def _apply_edge_op(x: Tensor, op: str, keys: list[str], bank: SharedWeightBank) -> Tensor:
    store = bank.store
    if op == CONV3X3:
        return ag.conv2d(x, store[keys[0]])
    if op == DILATED3X3_RATE3:
        return ag.conv2d(x, store[keys[0]], dilation=3)
    if op == DEPTHWISE_SEPARABLE3X3:
        return ag.conv2d(ag.conv2d(x, store[keys[0]], depthwise=True), store[keys[1]])
    raise ValidationError(f"unknown operation {op!r}")


def channel_attention(x: Tensor, d: int, m: int, bank: SharedWeightBank) -> Tensor:
    """Squeeze-and-excitation rescaling: pool, reduce, ReLU, restore, sigmoid."""
    store = bank.store
    w1, b1, w2, b2 = bank.ca_keys(d, m)
    pooled = ag.global_avg_pool(x)
    red = store[b1].data.shape[0]
    g = store[b2].data.shape[0]
    z = ag.add(ag.conv2d(pooled, store[w1]), ag.reshape(store[b1], (1, red, 1, 1)))
    z = ag.relu(z)
    z = ag.add(ag.conv2d(z, store[w2]), ag.reshape(store[b2], (1, g, 1, 1)))
    return ag.mul(x, ag.sigmoid(z))


def mix_node_forward(inputs: list[Tensor], node: int, arch: ArchitectureSequence,
                     bank: SharedWeightBank, dnb: int) -> Tensor:
    """One mix node: per-op gated edge sums, averaged, ReLU'd, channel-attended.

    ``inputs`` holds the block input followed by earlier node outputs.  When
    every bit of the node is zero the previous feature passes through
    unchanged (same tensor object).
    """
    cfg = bank.config
    rows = arch.node_bits(node, cfg.mix_nodes)
    if is_identity_node(arch, node, cfg):
        return inputs[node - 1]
    per_op = []
    g = cfg.feature_channels
    for k, op in enumerate(cfg.op_list):
        edges = [j for j, row in enumerate(rows) if row[k]]
        if not edges:
            continue
        acc = None
        for j in edges:
            term = _apply_edge_op(inputs[j], op, bank.edge_keys(dnb, node, j, k, op), bank)
            acc = term if acc is None else ag.add(acc, term)
        acc = ag.add(acc, ag.reshape(bank.store[bank.mix_bias_key(dnb, node, k)], (1, g, 1, 1)))
        per_op.append(acc)
    mixed = ag.relu(ag.mean_over(per_op))
    return channel_attention(mixed, dnb, node, bank)


def local_fusion(node_outputs: list[Tensor], block_input: Tensor,
                 gates, bank: SharedWeightBank, dnb: int,
                 residual: bool = True) -> Tensor:
    """Gated 1x1 fusion of block input and node outputs; last node unconditional."""
    sources = [block_input] + list(node_outputs)
    last = len(sources) - 1
    feats, names = [], []
    for s, feat in enumerate(sources):
        if s == last or gates[s]:
            feats.append(feat)
            names.append(f"dnb{dnb}/lf/src{s}/w")
    fused = _conv1x1_sum(feats, names, bank, f"dnb{dnb}/lf/b")
    if residual:
        fused = ag.add(fused, block_input)
    return fused


def global_fusion(features: list[Tensor], gates, bank: SharedWeightBank) -> Tensor:
    """Gated 1x1 fusion of block outputs (last unconditional), then 3x3 conv."""
    last = len(features) - 1
    feats, names = [], []
    for s, feat in enumerate(features):
        if s == last or gates[s]:
            feats.append(feat)
            names.append(f"gf/src{s}/w")
    fused = _conv1x1_sum(feats, names, bank, "gf/b")
    return ag.conv2d(fused, bank.store["gf/conv/w"], bank.store["gf/conv/b"])


class ChildNetwork:
    """A sampled architecture evaluated against a shared weight bank."""

    def __init__(self, arch: ArchitectureSequence, config: SearchSpaceConfig,
                 bank: SharedWeightBank, local_residual: bool = True):
        if bank.config != config:
            raise BankError("bank was allocated for a different search space config")
        issues = validate(arch, config)
        if issues:
            raise ValidationError("; ".join(i.message for i in issues))
        self.arch = arch
        self.config = config
        self.bank = bank
        self.local_residual = local_residual

    def forward(self, lr_image: Tensor) -> Tensor:
        """Map (B, 3, h, w) to (B, 3, h*scale, w*scale)."""
        cfg = self.config
        bank = self.bank
        store = bank.store
        if lr_image.data.ndim != 4 or lr_image.data.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, h, w) input, got {lr_image.data.shape}")

        shallow = ag.conv2d(lr_image, store["sfe1/w"], store["sfe1/b"])
        feats = [ag.conv2d(shallow, store["sfe2/w"], store["sfe2/b"])]

        for d in range(1, cfg.num_blocks + 1):
            block_in = _conv1x1_sum(
                feats, [f"dnb{d}/h1/src{j}/w" for j in range(d)], bank, f"dnb{d}/h1/b")
            node_feats = [block_in]
            for m in range(1, cfg.mix_nodes + 1):
                node_feats.append(mix_node_forward(node_feats, m, self.arch, bank, d))
            feats.append(local_fusion(node_feats[1:], block_in, self.arch.local_fusion,
                                      bank, d, residual=self.local_residual))

        fused = global_fusion(feats, self.arch.global_fusion, bank)
        merged = ag.add(fused, shallow)
        up = ag.conv2d(merged, store["up1/w"], store["up1/b"])
        up = ag.pixel_shuffle(up, cfg.scale)
        return ag.conv2d(up, store["up2/w"], store["up2/b"])

    def to_dot(self) -> str:
        from .space import to_dot
        return to_dot(self.arch, self.config)


def build(arch: ArchitectureSequence, config: SearchSpaceConfig,
          bank: SharedWeightBank, local_residual: bool = True) -> ChildNetwork:
    return ChildNetwork(arch, config, bank, local_residual=local_residual)
