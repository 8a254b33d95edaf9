"""Analytical parameter counting and the complexity penalty.

Counts must agree exactly with the values allocated (and active) in the
shared weight bank; the test suite enforces that equivalence exhaustively
on a small space.  Conventions: every convolution carries one bias per
output channel, mix-node biases live per (node, op) pair, dilated 3x3
costs the same as standard 3x3, and channel attention squeezes by ratio
16 (or 4 for narrow widths).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .errors import ValidationError
from .space import (
    CONV3X3,
    DEPTHWISE_SEPARABLE3X3,
    DILATED3X3_RATE3,
    ArchitectureSequence,
    SearchSpaceConfig,
    all_ones,
    is_identity_node,
    validate,
)


def ca_reduction(channels: int) -> int:
    """Channel-attention squeeze ratio: 16 at full width, 4 below 16 channels."""
    ratio = 16 if channels >= 16 else 4
    return max(1, channels // ratio)


def conv_param_count(cin: int, cout: int, k: int) -> int:
    return cin * cout * k * k + cout


def edge_kernel_count(op: str, channels: int) -> int:
    """Weights of one edge kernel (no bias; biases are per (node, op))."""
    g = channels
    if op in (CONV3X3, DILATED3X3_RATE3):
        return 9 * g * g
    if op == DEPTHWISE_SEPARABLE3X3:
        return 9 * g + g * g  # depthwise 3x3 + pointwise 1x1
    raise ValidationError(f"unknown operation {op!r}")


@dataclass(frozen=True)
class ParamBreakdown:
    """Per-component parameter counts; ``total`` is their sum (n_m)."""

    sfenet: int
    input_adapters: int
    mix_ops: int
    channel_attention: int
    local_fusion: int
    global_fusion: int
    upnet: int

    @property
    def total(self) -> int:
        return (self.sfenet + self.input_adapters + self.mix_ops
                + self.channel_attention + self.local_fusion
                + self.global_fusion + self.upnet)

    def as_dict(self) -> dict:
        d = {
            "sfenet": self.sfenet,
            "input_adapters": self.input_adapters,
            "mix_ops": self.mix_ops,
            "channel_attention": self.channel_attention,
            "local_fusion": self.local_fusion,
            "global_fusion": self.global_fusion,
            "upnet": self.upnet,
        }
        d["total"] = self.total
        return d


def count_params(arch: ArchitectureSequence, config: SearchSpaceConfig) -> ParamBreakdown:
    """Exact parameter count of the child network realizing ``arch``."""
    issues = validate(arch, config)
    if issues:
        raise ValidationError("; ".join(i.message for i in issues))

    g = config.feature_channels
    n, m_nodes = config.num_blocks, config.mix_nodes

    sfenet = conv_param_count(3, g, 3) + conv_param_count(g, g, 3)

    # 1x1 adapter in front of block d fuses d feature maps of width G.
    input_adapters = sum(d * g * g + g for d in range(1, n + 1))

    red = ca_reduction(g)
    ca_per_node = g * red + red + red * g + g

    mix_ops = 0
    channel_attention = 0
    for node in range(1, m_nodes + 1):
        rows = arch.node_bits(node, m_nodes)
        node_total = 0
        for k, op in enumerate(config.op_list):
            edges = sum(row[k] for row in rows)
            if edges:
                node_total += edges * edge_kernel_count(op, g) + g  # + shared bias
        mix_ops += node_total
        if not is_identity_node(arch, node, config):
            channel_attention += ca_per_node
    mix_ops *= n
    channel_attention *= n

    # Gated 1x1 fusion of the block input and node outputs; last node unconditional.
    lf_sources = sum(arch.local_fusion) + 1
    local_fusion = n * (lf_sources * g * g + g)

    gf_sources = sum(arch.global_fusion) + 1
    global_fusion = gf_sources * g * g + g + conv_param_count(g, g, 3)

    s = config.scale
    upnet = conv_param_count(g, g * s * s, 3) + conv_param_count(g, 3, 3)

    return ParamBreakdown(
        sfenet=sfenet,
        input_adapters=input_adapters,
        mix_ops=mix_ops,
        channel_attention=channel_attention,
        local_fusion=local_fusion,
        global_fusion=global_fusion,
        upnet=upnet,
    )


@lru_cache(maxsize=64)
def max_params(config: SearchSpaceConfig) -> int:
    """Parameters of the most complex model in the space (n_cm)."""
    return count_params(all_ones(config), config).total


def complexity_penalty(arch: ArchitectureSequence, config: SearchSpaceConfig) -> float:
    """cb = n_m / n_cm, in (0, 1]; 1 exactly for the all-ones genome."""
    return count_params(arch, config).total / max_params(config)
