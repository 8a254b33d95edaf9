"""Alternating two-step optimization: shared-weight child training and
REINFORCE controller training with a complexity-shaped reward.

The reward for a sampled architecture is its validation PSNR minus
``alpha`` times the complexity penalty (active parameters over the maximum
in the space).  A deterministic surrogate reward replaces PSNR in tests and
desk-scale search experiments so results can be checked against brute-force
enumeration.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as sr_data
from .autograd import Tensor, l1_loss
from .controller import Controller, SampleTrace
from .errors import DataError, RangeError
from .network import ChildNetwork, SharedWeightBank
from .params import complexity_penalty, count_params
from .space import ArchitectureSequence, SearchSpaceConfig, encode_decimal
from .store import ParamStore

VAL_SUBSET = 8  # images used per reward evaluation, to bound search cost


@dataclass(frozen=True)
class TrainerConfig:
    alpha: float = 0.0                   # complexity-penalty weight
    child_lr: float = 1e-4
    controller_lr: float = 3e-4
    child_steps_per_epoch: int = 1000
    controller_steps_per_epoch: int = 100
    controller_batch: int = 1            # sampled architectures per policy update
    epochs: int = 200
    monte_carlo_samples: int = 1         # architectures averaged per child step
    baseline_decay: float = 0.95
    lr_halving_interval: int = 500_000   # child steps between halvings
    candidate_pool: int = 100
    reward_mode: str = "psnr"            # "psnr" | "surrogate"
    surrogate_seed: int = 0
    surrogate_weight: float = 1.0        # 0 makes the surrogate bit term constant
    batch_size: int = 16
    patch_size: int = 64
    final_steps: int = 2000
    final_lr_halving: int = 500
    eval_interval: int = 100


def paper_trainer_config() -> TrainerConfig:
    """Published training schedule (GPU scale; not meant to run to completion here)."""
    return TrainerConfig()


def desk_trainer_config() -> TrainerConfig:
    """CPU-scale profile: same structure, small counts."""
    return TrainerConfig(
        child_lr=1e-3,
        controller_lr=0.05,
        child_steps_per_epoch=50,
        controller_steps_per_epoch=2,
        controller_batch=8,
        epochs=20,
        lr_halving_interval=1000,
        batch_size=16,
        patch_size=16,
        final_steps=2000,
        final_lr_halving=500,
    )


def paper_space_config() -> SearchSpaceConfig:
    return SearchSpaceConfig()


def desk_space_config() -> SearchSpaceConfig:
    return SearchSpaceConfig(num_blocks=2, mix_nodes=2, num_ops=3,
                             feature_channels=8, scale=2)


@dataclass(frozen=True)
class RewardRecord:
    epoch: int
    step: int
    psnr: float        # PSNR or surrogate performance term
    n_params: int
    cb: float
    reward: float
    baseline: float
    digits: tuple[int, ...]
    local_fusion: tuple[int, ...]
    global_fusion: tuple[int, ...]


class Baseline:
    """Exponential moving average of observed rewards."""

    def __init__(self, decay: float, init: float | None = None):
        self.decay = decay
        self.value = init

    def observe(self, reward: float) -> float:
        """Return the advantage (reward minus prior baseline), then update."""
        if self.value is None:
            self.value = reward
        advantage = reward - self.value
        self.value = self.decay * self.value + (1 - self.decay) * reward
        return advantage


def surrogate_reward(arch: ArchitectureSequence, config: SearchSpaceConfig,
                     seed: int, alpha: float = 0.0,
                     weight_scale: float = 1.0) -> float:
    """Deterministic stand-in for validation PSNR.

    Each decision bit carries a fixed pseudo-random weight in [0, 1] derived
    from ``seed``; the reward is the weighted bit sum minus alpha * cb.
    """
    weights = np.random.default_rng(seed).random(config.num_decisions)
    bits = np.asarray(arch.flat_bits(config), dtype=np.float64)
    return weight_scale * float(bits @ weights) - alpha * complexity_penalty(arch, config)


def _stack_batch(patches) -> tuple[Tensor, Tensor]:
    lr = np.stack([p[0] for p in patches]).astype(np.float32)
    hr = np.stack([p[1] for p in patches]).astype(np.float32)
    return Tensor(lr), Tensor(hr)


def child_step(bank: SharedWeightBank, controller: Controller, batch,
               config: TrainerConfig, rng: np.random.Generator,
               lr: float | None = None) -> float:
    """One shared-weight update: sample architecture(s), L1 loss, Adam step.

    With ``monte_carlo_samples`` > 1 the gradient is the mean over that many
    independently sampled architectures.
    """
    lr_t, hr_t = batch if isinstance(batch, tuple) else _stack_batch(batch)
    mc = config.monte_carlo_samples
    bank.store.zero_grad()
    total = 0.0
    for _ in range(mc):
        arch = controller.sample(rng).arch
        net = ChildNetwork(arch, bank.config, bank)
        loss = l1_loss(net.forward(lr_t), hr_t)
        total += float(loss.data)
        loss.backward(seed=np.asarray(1.0 / mc, dtype=loss.data.dtype))
    bank.store.adam_step(lr if lr is not None else config.child_lr)
    return total / mc


def evaluate_psnr(arch: ArchitectureSequence, bank: SharedWeightBank,
                  pairs: list[sr_data.ImagePair]) -> float:
    """Mean Y-channel PSNR of the child network over LR/HR pairs."""
    if not pairs:
        raise DataError("empty validation set")
    net = ChildNetwork(arch, bank.config, bank)
    scores = []
    for pair in pairs:
        out = net.forward(Tensor(pair.lr[None].astype(bank.store.dtype)))
        pred = np.clip(out.data[0].astype(np.float64), 0.0, 1.0)
        scores.append(sr_data.psnr(pred, pair.hr))
    return float(np.mean(scores))


def compute_reward(arch: ArchitectureSequence, bank: SharedWeightBank,
                   val_pairs: list[sr_data.ImagePair], config: SearchSpaceConfig,
                   alpha: float) -> RewardRecord:
    score = evaluate_psnr(arch, bank, val_pairs)
    breakdown = count_params(arch, config)
    cb = complexity_penalty(arch, config)
    return RewardRecord(
        epoch=-1, step=-1, psnr=score, n_params=breakdown.total, cb=cb,
        reward=score - alpha * cb, baseline=float("nan"),
        digits=tuple(encode_decimal(arch, config)),
        local_fusion=arch.local_fusion, global_fusion=arch.global_fusion,
    )


def controller_step(controller: Controller, samples: list[tuple[SampleTrace, float]],
                    baseline: Baseline, lr: float):
    """One REINFORCE update from (trace, reward) pairs.

    Gradients of -(R - b) * log pi accumulate over the batch; the baseline
    moves per sample.
    """
    controller.store.zero_grad()
    advantages = []
    for trace, reward in samples:
        advantage = baseline.observe(reward)
        advantages.append(advantage)
        controller.backward_policy_loss(trace, advantage / len(samples))
    controller.store.adam_step(lr)
    return advantages


@dataclass
class SearchReport:
    space: SearchSpaceConfig
    trainer: TrainerConfig
    seed: int
    records: list[RewardRecord] = field(default_factory=list)
    best_digits: tuple[int, ...] | None = None
    best_local_fusion: tuple[int, ...] | None = None
    best_global_fusion: tuple[int, ...] | None = None
    best_reward: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "space": self.space.to_json_dict(),
            "seed": self.seed,
            "alpha": self.trainer.alpha,
            "reward_mode": self.trainer.reward_mode,
            "epochs": self.trainer.epochs,
            "num_records": len(self.records),
            "best": None if self.best_digits is None else {
                "digits": list(self.best_digits),
                "local_fusion": list(self.best_local_fusion),
                "global_fusion": list(self.best_global_fusion),
                "reward": self.best_reward,
            },
        }


REWARD_CSV_HEADER = "epoch,step,psnr,n_params,cb,reward,baseline,digits,local_fusion,global_fusion"


def format_reward_csv(records: list[RewardRecord]) -> str:
    lines = [REWARD_CSV_HEADER]
    for r in records:
        lines.append(",".join([
            str(r.epoch), str(r.step), repr(r.psnr), str(r.n_params),
            repr(r.cb), repr(r.reward), repr(r.baseline),
            " ".join(map(str, r.digits)),
            " ".join(map(str, r.local_fusion)),
            " ".join(map(str, r.global_fusion)),
        ]))
    return "\n".join(lines) + "\n"


def _reward_fn(trainer: TrainerConfig, space: SearchSpaceConfig,
               bank: SharedWeightBank | None, val_pairs):
    if trainer.reward_mode == "surrogate":
        def fn(arch):
            perf = surrogate_reward(arch, space, trainer.surrogate_seed,
                                    alpha=0.0, weight_scale=trainer.surrogate_weight)
            return perf, perf - trainer.alpha * complexity_penalty(arch, space)
        return fn
    if trainer.reward_mode == "psnr":
        def fn(arch):
            perf = evaluate_psnr(arch, bank, val_pairs[:VAL_SUBSET])
            return perf, perf - trainer.alpha * complexity_penalty(arch, space)
        return fn
    raise RangeError(f"unknown reward_mode {trainer.reward_mode!r}")


def search(space: SearchSpaceConfig, trainer: TrainerConfig, seed: int,
           train_pairs=None, val_pairs=None, out_dir=None,
           deterministic: bool = False) -> SearchReport:
    """Run the two-step search loop and return its report.

    Child training alternates with controller epochs; in surrogate mode the
    child phase is skipped (the reward does not depend on the bank).
    """
    seeds = np.random.SeedSequence(seed).spawn(4)
    rng_bank = np.random.default_rng(seeds[0])
    rng_ctrl_init = np.random.default_rng(seeds[1])
    rng_sample = np.random.default_rng(seeds[2])
    rng_data = np.random.default_rng(seeds[3])

    needs_bank = trainer.reward_mode == "psnr"
    bank = SharedWeightBank(space, rng_bank) if needs_bank else None
    if needs_bank and (not train_pairs or not val_pairs):
        raise DataError("psnr reward mode requires train and validation pairs")
    controller = Controller(space, rng=rng_ctrl_init)
    reward_of = _reward_fn(trainer, space, bank, val_pairs)
    baseline = Baseline(trainer.baseline_decay)

    report = SearchReport(space=space, trainer=trainer, seed=seed)
    ckpt_dir = None
    if out_dir is not None:
        ckpt_dir = os.path.join(out_dir, "checkpoints")
        os.makedirs(ckpt_dir, exist_ok=True)

    child_lr = trainer.child_lr
    child_steps_done = 0
    for epoch in range(trainer.epochs):
        if needs_bank:
            for _ in range(trainer.child_steps_per_epoch):
                patches = sr_data.extract_patches(
                    train_pairs, trainer.patch_size, trainer.batch_size,
                    seed=int(rng_data.integers(2 ** 31)))
                patches = [sr_data.augment(lr, hr, rng_data) for lr, hr in patches]
                child_step(bank, controller, patches, trainer, rng_sample, lr=child_lr)
                child_steps_done += 1
                if child_steps_done % trainer.lr_halving_interval == 0:
                    child_lr *= 0.5
        for step in range(trainer.controller_steps_per_epoch):
            samples = []
            for _ in range(trainer.controller_batch):
                trace = controller.sample(rng_sample)
                samples.append((trace, reward_of(trace.arch)))
            controller_step(controller,
                            [(t, r[1]) for t, r in samples],
                            baseline, trainer.controller_lr)
            for trace, (perf, reward) in samples:
                report.records.append(RewardRecord(
                    epoch=epoch, step=step, psnr=perf,
                    n_params=count_params(trace.arch, space).total,
                    cb=complexity_penalty(trace.arch, space),
                    reward=reward, baseline=baseline.value,
                    digits=tuple(encode_decimal(trace.arch, space)),
                    local_fusion=trace.arch.local_fusion,
                    global_fusion=trace.arch.global_fusion,
                ))
        if ckpt_dir is not None:
            controller.save(os.path.join(ckpt_dir, "controller.ckpt"), deterministic=deterministic)
            if bank is not None:
                bank.store.save(os.path.join(ckpt_dir, "bank.ckpt"), deterministic=deterministic)

    if trainer.epochs > 0 and trainer.candidate_pool > 0:
        best, best_score = select_best(
            controller, lambda a: reward_of(a)[1], trainer.candidate_pool, rng_sample, space)
        report.best_digits = tuple(encode_decimal(best, space))
        report.best_local_fusion = best.local_fusion
        report.best_global_fusion = best.global_fusion
        report.best_reward = best_score
    return report


def select_best(controller: Controller, scorer, pool: int,
                rng: np.random.Generator, space: SearchSpaceConfig
                ) -> tuple[ArchitectureSequence, float]:
    """Sample ``pool`` candidates, score each, return the argmax.

    Ties break toward fewer parameters, then lexicographically smaller genome.
    """
    if pool < 1:
        raise RangeError("candidate pool must be >= 1")
    best = None
    for _ in range(pool):
        arch = controller.sample(rng).arch
        key = (-scorer(arch), count_params(arch, space).total,
               tuple(encode_decimal(arch, space)), arch.local_fusion, arch.global_fusion)
        if best is None or key < best[0]:
            best = (key, arch)
    return best[1], -best[0][0]


@dataclass(frozen=True)
class TrainPoint:
    step: int
    loss: float
    val_psnr: float


def format_history_csv(history: list[TrainPoint]) -> str:
    lines = ["step,loss,val_psnr"]
    for p in history:
        lines.append(f"{p.step},{p.loss!r},{p.val_psnr!r}")
    return "\n".join(lines) + "\n"


def final_train(arch: ArchitectureSequence, space: SearchSpaceConfig,
                trainer: TrainerConfig, train_pairs, val_pairs, seed: int,
                steps: int | None = None) -> tuple[SharedWeightBank, list[TrainPoint]]:
    """Retrain the chosen architecture from a fresh bank with lr halving."""
    seeds = np.random.SeedSequence(seed).spawn(2)
    bank = SharedWeightBank(space, np.random.default_rng(seeds[0]))
    rng_data = np.random.default_rng(seeds[1])
    net = ChildNetwork(arch, space, bank)
    total_steps = trainer.final_steps if steps is None else steps

    history: list[TrainPoint] = []
    lr = trainer.child_lr
    last_loss = float("nan")
    if total_steps == 0:
        history.append(TrainPoint(0, last_loss, evaluate_psnr(arch, bank, val_pairs)))
        return bank, history
    for step in range(1, total_steps + 1):
        patches = sr_data.extract_patches(
            train_pairs, trainer.patch_size, trainer.batch_size,
            seed=int(rng_data.integers(2 ** 31)))
        patches = [sr_data.augment(lr_img, hr_img, rng_data) for lr_img, hr_img in patches]
        lr_t, hr_t = _stack_batch(patches)
        bank.store.zero_grad()
        loss = l1_loss(net.forward(lr_t), hr_t)
        loss.backward()
        bank.store.adam_step(lr)
        last_loss = float(loss.data)
        if step % trainer.final_lr_halving == 0:
            lr *= 0.5
        if step % trainer.eval_interval == 0 or step == total_steps:
            history.append(TrainPoint(step, last_loss, evaluate_psnr(arch, bank, val_pairs)))
    return bank, history


def bicubic_baseline_psnr(pairs: list[sr_data.ImagePair], scale: int) -> float:
    """Mean PSNR of plain bicubic upsampling over the given pairs."""
    if not pairs:
        raise DataError("empty evaluation set")
    return float(np.mean([
        sr_data.psnr(sr_data.upsample_bicubic(p.lr, scale), p.hr) for p in pairs
    ]))
