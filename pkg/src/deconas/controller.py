"""Autoregressive LSTM policy over architecture bit sequences.

The controller steps a two-layer LSTM once per decision block: one block per
(node, source) pair of the mix structure, then, when fusion search is on,
one block emitting all local gates and one emitting all global gates.  Each
mix block draws its K bits from K shared Bernoulli heads; the sampled
outcome is embedded and fed to the next step.  Log-probabilities are exact
sums of per-bit Bernoulli terms, tracked through the autodiff graph so
REINFORCE gradients come out of the same code path as sampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import ValidationError
from .space import ArchitectureSequence, SearchSpaceConfig, from_bit_vector, validate
from .store import ParamStore, variance_scaled

EMB_CHUNK_BITS = 8


@dataclass(frozen=True)
class SampleTrace:
    """One sampled architecture with its exact log-probability."""

    arch: ArchitectureSequence
    log_prob: float
    logits: tuple[np.ndarray, ...]  # per-block logits, for debugging


def _chunk_indices(bits) -> list[int]:
    """Pack a bit list MSB-first into chunk indices of at most 8 bits each."""
    out = []
    for start in range(0, len(bits), EMB_CHUNK_BITS):
        chunk = bits[start:start + EMB_CHUNK_BITS]
        idx = 0
        for b in chunk:
            idx = (idx << 1) | int(b)
        out.append(idx)
    return out


class Controller:
    def __init__(self, config: SearchSpaceConfig, hidden: int = 64,
                 rng: np.random.Generator | None = None, dtype=np.float64):
        self.config = config
        self.hidden = hidden
        self.store = ParamStore(dtype=dtype)
        rng = rng if rng is not None else np.random.default_rng(0)
        self._allocate(rng)

    def _allocate(self, rng: np.random.Generator):
        cfg = self.config
        h = self.hidden
        st = self.store

        for layer in range(2):
            st.create(f"lstm{layer}/w_ih", variance_scaled(rng, (h, 4 * h), h, dtype=st.dtype))
            st.create(f"lstm{layer}/w_hh", variance_scaled(rng, (h, 4 * h), h, dtype=st.dtype))
            st.create(f"lstm{layer}/b", np.zeros(4 * h, dtype=st.dtype))

        # K Bernoulli heads shared by every mix block (columns = heads).
        st.create("head/mix/w", variance_scaled(rng, (h, cfg.num_ops), h, dtype=st.dtype))
        st.create("head/mix/b", np.zeros(cfg.num_ops, dtype=st.dtype))

        st.create("emb/start", np.zeros(h, dtype=st.dtype))
        st.create("emb/mix", variance_scaled(rng, (1 << cfg.num_ops, h), h, dtype=st.dtype))

        if cfg.fusion_search:
            st.create("head/local/w", variance_scaled(rng, (h, cfg.mix_nodes), h, dtype=st.dtype))
            st.create("head/local/b", np.zeros(cfg.mix_nodes, dtype=st.dtype))
            st.create("head/global/w", variance_scaled(rng, (h, cfg.num_blocks), h, dtype=st.dtype))
            st.create("head/global/b", np.zeros(cfg.num_blocks, dtype=st.dtype))
            for role, width in (("local", cfg.mix_nodes), ("global", cfg.num_blocks)):
                n_chunks = (width + EMB_CHUNK_BITS - 1) // EMB_CHUNK_BITS
                for c in range(n_chunks):
                    st.create(f"emb/{role}/chunk{c}",
                              variance_scaled(rng, (1 << EMB_CHUNK_BITS, h), h, dtype=st.dtype))

    # -- policy execution ----------------------------------------------------

    def _step_lstm(self, x: Tensor, state):
        (h1, c1), (h2, c2) = state
        st = self.store
        h1, c1 = ag.lstm_cell(x, h1, c1, st["lstm0/w_ih"], st["lstm0/w_hh"], st["lstm0/b"])
        h2, c2 = ag.lstm_cell(h1, h2, c2, st["lstm1/w_ih"], st["lstm1/w_hh"], st["lstm1/b"])
        return h2, ((h1, c1), (h2, c2))

    def _embed(self, role: str, bits) -> Tensor:
        st = self.store
        if role == "mix":
            (idx,) = _chunk_indices(bits)
            return ag.reshape(st["emb/mix"][idx], (1, self.hidden))
        emb = None
        for c, idx in enumerate(_chunk_indices(bits)):
            row = ag.reshape(st[f"emb/{role}/chunk{c}"][idx], (1, self.hidden))
            emb = row if emb is None else ag.add(emb, row)
        return emb

    def _run(self, rng: np.random.Generator | None = None, actions=None):
        """Shared sampling / teacher-forced replay pass.

        Exactly one of ``rng`` (sample) and ``actions`` (flat bit list to
        replay) must be given.  Returns (bits, log_prob tensor, logits).
        """
        cfg = self.config
        st = self.store
        h = self.hidden
        zeros = Tensor(np.zeros((1, h), dtype=st.dtype))
        state = ((zeros, zeros), (zeros, zeros))
        x = ag.reshape(st["emb/start"], (1, h))

        plan = [("mix", cfg.num_ops)] * cfg.num_mix_blocks
        if cfg.fusion_search:
            plan += [("local", cfg.mix_nodes), ("global", cfg.num_blocks)]

        all_bits: list[int] = []
        logits_out: list[np.ndarray] = []
        log_prob: Tensor | None = None
        cursor = 0
        for role, width in plan:
            out, state = self._step_lstm(x, state)
            logits = ag.linear(out, st[f"head/{role}/w"], st[f"head/{role}/b"])
            if actions is None:
                probs = ag._sigmoid(logits.data[0])
                bits = [1 if rng.random() < p else 0 for p in probs]
            else:
                bits = [int(b) for b in actions[cursor:cursor + width]]
                cursor += width
            lp = ag.tsum(ag.bernoulli_log_prob(logits, np.asarray([bits], dtype=st.dtype)))
            log_prob = lp if log_prob is None else ag.add(log_prob, lp)
            all_bits.extend(bits)
            logits_out.append(logits.data[0].copy())
            x = self._embed(role, bits)
        return all_bits, log_prob, tuple(logits_out)

    def sample(self, rng: np.random.Generator) -> SampleTrace:
        bits, log_prob, logits = self._run(rng=rng)
        arch = from_bit_vector(bits, self.config)
        return SampleTrace(arch=arch, log_prob=float(log_prob.data), logits=logits)

    def log_prob_graph(self, arch: ArchitectureSequence) -> Tensor:
        """Teacher-forced replay; returns the log-probability as a graph node."""
        issues = validate(arch, self.config)
        if issues:
            raise ValidationError("; ".join(i.message for i in issues))
        _, log_prob, _ = self._run(actions=arch.flat_bits(self.config))
        return log_prob

    def log_prob(self, arch: ArchitectureSequence) -> float:
        return float(self.log_prob_graph(arch).data)

    def backward_policy_loss(self, trace: SampleTrace | ArchitectureSequence,
                             advantage: float):
        """Accumulate gradients of -(advantage) * log pi(arch) into the store."""
        arch = trace.arch if isinstance(trace, SampleTrace) else trace
        if advantage == 0.0:
            for name in self.store.names():
                t = self.store[name]
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
            return
        loss = ag.scalar_mul(self.log_prob_graph(arch), -float(advantage))
        loss.backward()

    # -- persistence ---------------------------------------------------------

    def save(self, path, deterministic: bool = False):
        self.store.save(path, deterministic=deterministic)

    @classmethod
    def load(cls, path, config: SearchSpaceConfig, hidden: int = 64) -> "Controller":
        loaded = ParamStore.load(path)
        ctrl = cls(config, hidden=hidden, dtype=loaded.dtype)
        ctrl.store.load_values_from(loaded)
        return ctrl
