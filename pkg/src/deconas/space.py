"""Search space definition: configs, architecture genomes, codecs and enumeration.

An architecture is a bit string.  Mix-node connectivity is grouped into
``M(M+1)/2`` blocks of ``K`` bits each (block order: node 1 source 0, node 2
sources 0..1, ... node M sources 0..M-1).  Each K-bit block is also
representable as one decimal digit, MSB first, so digit 4 with K=3 means
bits {1, 0, 0}.  Two extra bit lists gate the local and global feature
fusion inputs; when fusion search is disabled they are pinned to all ones.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

from .errors import LengthError, RangeError, SpaceTooLargeError, ValidationError

CONV3X3 = "conv3x3"
DEPTHWISE_SEPARABLE3X3 = "depthwise_separable3x3"
DILATED3X3_RATE3 = "dilated3x3_rate3"

DEFAULT_OPS = (CONV3X3, DEPTHWISE_SEPARABLE3X3, DILATED3X3_RATE3)


@dataclass(frozen=True)
class SearchSpaceConfig:
    """Static shape of the search space and of every child network in it."""

    num_blocks: int = 4           # N, densely connected blocks
    mix_nodes: int = 4            # M, mix nodes per block
    num_ops: int = 3              # K, candidate ops per edge
    feature_channels: int = 64    # G, width of all searched features
    scale: int = 2                # super-resolution upscaling factor
    fusion_search: bool = False   # search fusion gates instead of pinning to 1
    op_list: tuple[str, ...] = DEFAULT_OPS

    def __post_init__(self):
        if self.num_blocks < 1 or self.mix_nodes < 1 or self.num_ops < 1:
            raise ValidationError("num_blocks, mix_nodes and num_ops must be positive")
        if self.feature_channels < 1:
            raise ValidationError("feature_channels must be >= 1")
        if self.scale < 1:
            raise ValidationError("scale must be >= 1")
        if len(self.op_list) != self.num_ops:
            raise ValidationError(
                f"op_list has {len(self.op_list)} entries, expected num_ops={self.num_ops}"
            )

    @property
    def num_mix_blocks(self) -> int:
        m = self.mix_nodes
        return m * (m + 1) // 2

    @property
    def num_mix_bits(self) -> int:
        return self.num_ops * self.num_mix_blocks

    @property
    def num_decisions(self) -> int:
        """Total controller decisions T."""
        extra = self.mix_nodes + self.num_blocks if self.fusion_search else 0
        return self.num_mix_bits + extra

    def to_json_dict(self) -> dict:
        return {
            "num_blocks": self.num_blocks,
            "mix_nodes": self.mix_nodes,
            "num_ops": self.num_ops,
            "feature_channels": self.feature_channels,
            "scale": self.scale,
            "fusion_search": self.fusion_search,
            "op_list": list(self.op_list),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SearchSpaceConfig":
        return cls(
            num_blocks=d["num_blocks"],
            mix_nodes=d["mix_nodes"],
            num_ops=d["num_ops"],
            feature_channels=d["feature_channels"],
            scale=d["scale"],
            fusion_search=d["fusion_search"],
            op_list=tuple(d["op_list"]),
        )


def mix_block_order(mix_nodes: int) -> list[tuple[int, int]]:
    """(node, source) pairs in genome order: node 1..M, sources 0..node-1."""
    return [(i, j) for i in range(1, mix_nodes + 1) for j in range(i)]


@dataclass(frozen=True)
class ArchitectureSequence:
    """One point in the search space.

    ``mix_bits[b]`` is the K-bit tuple of block ``b`` in
    :func:`mix_block_order`; fusion gate tuples have lengths M and N.
    Immutable after construction.
    """

    mix_bits: tuple[tuple[int, ...], ...]
    local_fusion: tuple[int, ...]
    global_fusion: tuple[int, ...]

    def node_bits(self, node: int, mix_nodes: int) -> tuple[tuple[int, ...], ...]:
        """All K-bit rows feeding mix node ``node`` (1-based)."""
        if not 1 <= node <= mix_nodes:
            raise RangeError(f"node {node} out of range 1..{mix_nodes}")
        start = node * (node - 1) // 2
        return self.mix_bits[start:start + node]

    def flat_bits(self, config: SearchSpaceConfig) -> list[int]:
        """All decision bits in controller order (mix, then fusion if searched)."""
        bits = [b for row in self.mix_bits for b in row]
        if config.fusion_search:
            bits.extend(self.local_fusion)
            bits.extend(self.global_fusion)
        return bits


@dataclass(frozen=True)
class Issue:
    """One validation finding."""

    kind: str  # "length" | "range" | "gate"
    message: str


def decode_decimal(digits, config: SearchSpaceConfig) -> ArchitectureSequence:
    """Expand decimal digits (one per mix block, MSB first) into a genome.

    Fusion gates are not part of the digit digest and come out all ones.
    """
    digits = list(digits)
    if len(digits) != config.num_mix_blocks:
        raise LengthError(
            f"expected {config.num_mix_blocks} digits, got {len(digits)}"
        )
    k = config.num_ops
    top = 1 << k
    rows = []
    for d in digits:
        if not 0 <= d < top:
            raise RangeError(f"digit {d} out of range 0..{top - 1}")
        rows.append(tuple((d >> (k - 1 - b)) & 1 for b in range(k)))
    return ArchitectureSequence(
        mix_bits=tuple(rows),
        local_fusion=(1,) * config.mix_nodes,
        global_fusion=(1,) * config.num_blocks,
    )


def encode_decimal(arch: ArchitectureSequence, config: SearchSpaceConfig) -> list[int]:
    """Inverse of :func:`decode_decimal` on the mix-bit part."""
    issues = validate(arch, config)
    if issues:
        raise ValidationError("; ".join(i.message for i in issues))
    k = config.num_ops
    return [sum(b << (k - 1 - p) for p, b in enumerate(row)) for row in arch.mix_bits]


def validate(arch: ArchitectureSequence, config: SearchSpaceConfig) -> list[Issue]:
    """Check a genome against a config; empty list means valid."""
    issues = []
    if len(arch.mix_bits) != config.num_mix_blocks:
        issues.append(Issue("length", (
            f"mix_bits has {len(arch.mix_bits)} blocks, "
            f"expected {config.num_mix_blocks}")))
    for b, row in enumerate(arch.mix_bits):
        if len(row) != config.num_ops:
            issues.append(Issue("length", f"mix block {b} has {len(row)} bits, expected {config.num_ops}"))
        if any(bit not in (0, 1) for bit in row):
            issues.append(Issue("range", f"mix block {b} contains a non-binary value"))
    if len(arch.local_fusion) != config.mix_nodes:
        issues.append(Issue("length", (
            f"local_fusion has {len(arch.local_fusion)} gates, expected {config.mix_nodes}")))
    if len(arch.global_fusion) != config.num_blocks:
        issues.append(Issue("length", (
            f"global_fusion has {len(arch.global_fusion)} gates, expected {config.num_blocks}")))
    for name, gates in (("local_fusion", arch.local_fusion), ("global_fusion", arch.global_fusion)):
        if any(g not in (0, 1) for g in gates):
            issues.append(Issue("range", f"{name} contains a non-binary value"))
        elif not config.fusion_search and any(g == 0 for g in gates):
            issues.append(Issue("gate", f"{name} has a zero gate but fusion_search is off"))
    return issues


def is_identity_node(arch: ArchitectureSequence, node: int, config: SearchSpaceConfig) -> bool:
    """True iff every edge/op bit of ``node`` is zero (passthrough node)."""
    rows = arch.node_bits(node, config.mix_nodes)
    return all(b == 0 for row in rows for b in row)


def space_size(config: SearchSpaceConfig) -> int:
    return 1 << config.num_decisions


def enumerate_space(config: SearchSpaceConfig, limit: int):
    """Yield every architecture exactly once; refuse spaces above ``limit``."""
    total = space_size(config)
    if total > limit:
        raise SpaceTooLargeError(f"space has {total} architectures, limit is {limit}")

    def gen():
        kk = 1 << config.num_ops
        digit_space = itertools.product(range(kk), repeat=config.num_mix_blocks)
        if not config.fusion_search:
            for digits in digit_space:
                yield decode_decimal(digits, config)
            return
        for digits in digit_space:
            base = decode_decimal(digits, config)
            for lf in itertools.product((0, 1), repeat=config.mix_nodes):
                for gf in itertools.product((0, 1), repeat=config.num_blocks):
                    yield ArchitectureSequence(base.mix_bits, lf, gf)

    return gen()


def all_ones(config: SearchSpaceConfig) -> ArchitectureSequence:
    return ArchitectureSequence(
        mix_bits=tuple((1,) * config.num_ops for _ in range(config.num_mix_blocks)),
        local_fusion=(1,) * config.mix_nodes,
        global_fusion=(1,) * config.num_blocks,
    )


def all_zeros(config: SearchSpaceConfig) -> ArchitectureSequence:
    """Fully degenerate genome; fusion gates honour the all-ones rule."""
    lf = (0,) * config.mix_nodes if config.fusion_search else (1,) * config.mix_nodes
    gf = (0,) * config.num_blocks if config.fusion_search else (1,) * config.num_blocks
    return ArchitectureSequence(
        mix_bits=tuple((0,) * config.num_ops for _ in range(config.num_mix_blocks)),
        local_fusion=lf,
        global_fusion=gf,
    )


def from_bit_vector(bits, config: SearchSpaceConfig) -> ArchitectureSequence:
    """Rebuild a genome from the flat controller decision vector."""
    bits = list(bits)
    if len(bits) != config.num_decisions:
        raise LengthError(f"expected {config.num_decisions} bits, got {len(bits)}")
    k = config.num_ops
    rows = tuple(
        tuple(bits[b * k:(b + 1) * k]) for b in range(config.num_mix_blocks)
    )
    if config.fusion_search:
        off = config.num_mix_bits
        lf = tuple(bits[off:off + config.mix_nodes])
        gf = tuple(bits[off + config.mix_nodes:])
    else:
        lf = (1,) * config.mix_nodes
        gf = (1,) * config.num_blocks
    return ArchitectureSequence(rows, lf, gf)


# ---------------------------------------------------------------------------
# serialization

def to_json(arch: ArchitectureSequence, config: SearchSpaceConfig) -> str:
    payload = {
        "digits": encode_decimal(arch, config),
        "local_fusion": list(arch.local_fusion),
        "global_fusion": list(arch.global_fusion),
        "config": config.to_json_dict(),
    }
    return json.dumps(payload, sort_keys=True)


def from_json(text: str) -> tuple[ArchitectureSequence, SearchSpaceConfig]:
    d = json.loads(text)
    config = SearchSpaceConfig.from_json_dict(d["config"])
    base = decode_decimal(d["digits"], config)
    arch = ArchitectureSequence(
        base.mix_bits,
        tuple(d["local_fusion"]),
        tuple(d["global_fusion"]),
    )
    issues = validate(arch, config)
    if issues:
        raise ValidationError("; ".join(i.message for i in issues))
    return arch, config


def to_dot(arch: ArchitectureSequence, config: SearchSpaceConfig) -> str:
    """Render the wiring of one densely connected block as a DOT digraph.

    Mix nodes are graph nodes, active ops are labeled edges, fusion gates
    are dashed edges into the fusion node.
    """
    lines = ["digraph dnb {", "  rankdir=LR;", '  in [label="block input"];']
    for m in range(1, config.mix_nodes + 1):
        lines.append(f'  n{m} [label="mix {m}"];')
    lines.append('  lf [label="local fusion", shape=box];')
    order = mix_block_order(config.mix_nodes)
    for (node, src), row in zip(order, arch.mix_bits):
        src_name = "in" if src == 0 else f"n{src}"
        for k, bit in enumerate(row):
            if bit:
                lines.append(f'  {src_name} -> n{node} [label="{config.op_list[k]}"];')
    for s, gate in enumerate(arch.local_fusion):
        src_name = "in" if s == 0 else f"n{s}"
        style = "solid" if gate else "dashed"
        if gate or config.fusion_search:
            lines.append(f'  {src_name} -> lf [style={style}];')
    lines.append(f"  n{config.mix_nodes} -> lf;")
    lines.append("}")
    return "\n".join(lines) + "\n"
