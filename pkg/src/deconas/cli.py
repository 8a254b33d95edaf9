"""Batch command-line surface.

Configuration precedence is total: explicit flags override environment
variables (prefix ``DECONAS_``), which override a ``--config`` file (flat
``key = value`` lines or JSON), which overrides the named profile
("desk" by default, "paper" for the published schedule).  Every command is
reproducible from its flags and seed; ``--deterministic`` additionally
suppresses timestamps in checkpoint manifests.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import data as sr_data
from . import reporting, space as arch_space, training
from .controller import Controller
from .errors import DeconasError, SpaceTooLargeError
from .network import SharedWeightBank
from .params import count_params, max_params
from .space import SearchSpaceConfig
from .store import ParamStore

ENV_PREFIX = "DECONAS_"

# name -> (type, applies to)
_SPACE_KEYS = {
    "num_blocks": int, "mix_nodes": int, "num_ops": int,
    "feature_channels": int, "scale": int, "fusion_search": bool,
}
_TRAINER_KEYS = {
    "alpha": float, "child_lr": float, "controller_lr": float,
    "child_steps_per_epoch": int, "controller_steps_per_epoch": int,
    "controller_batch": int, "epochs": int, "monte_carlo_samples": int, "baseline_decay": float,
    "lr_halving_interval": int, "candidate_pool": int, "reward_mode": str,
    "surrogate_seed": int, "surrogate_weight": float, "batch_size": int,
    "patch_size": int, "final_steps": int, "final_lr_halving": int,
    "eval_interval": int,
}
_RUN_KEYS = {"seed": int, "data": str, "out": str, "deterministic": bool}
SCHEMA = {**_SPACE_KEYS, **_TRAINER_KEYS, **_RUN_KEYS}


def _coerce(key: str, value, kind):
    if kind is bool and isinstance(value, str):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise DeconasError(f"cannot parse boolean value {value!r} for {key!r}")
    return kind(value)


def _load_config_file(path) -> dict:
    with open(path) as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        raw = json.loads(text)
    else:
        raw = {}
        for line_no, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DeconasError(f"{path}:{line_no}: expected 'key = value'")
            key, _, value = line.partition("=")
            raw[key.strip()] = value.strip()
    out = {}
    for key, value in raw.items():
        if key not in SCHEMA:
            raise DeconasError(f"{path}: unknown config key {key!r}")
        out[key] = _coerce(key, value, SCHEMA[key])
    return out


def _env_overrides() -> dict:
    out = {}
    for key, kind in SCHEMA.items():
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            out[key] = _coerce(key, env, kind)
    return out


def resolve_config(args) -> dict:
    """Merge profile defaults, config file, environment and explicit flags."""
    profile = getattr(args, "profile", "desk") or "desk"
    if profile == "desk":
        space_cfg, trainer_cfg = training.desk_space_config(), training.desk_trainer_config()
    elif profile == "paper":
        space_cfg, trainer_cfg = training.paper_space_config(), training.paper_trainer_config()
    else:
        raise DeconasError(f"unknown profile {profile!r} (expected desk or paper)")

    merged = {
        "seed": 0, "data": "synthetic:0", "out": None, "deterministic": False,
        **{k: getattr(space_cfg, k) for k in _SPACE_KEYS},
        **{k: getattr(trainer_cfg, k) for k in _TRAINER_KEYS},
    }
    if getattr(args, "config", None):
        merged.update(_load_config_file(args.config))
    merged.update(_env_overrides())
    for key in SCHEMA:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    merged["profile"] = profile
    return merged


def split_configs(merged: dict) -> tuple[SearchSpaceConfig, training.TrainerConfig]:
    num_ops = merged["num_ops"]
    if not 1 <= num_ops <= len(arch_space.DEFAULT_OPS):
        raise DeconasError(
            f"num_ops must be in 1..{len(arch_space.DEFAULT_OPS)}, got {num_ops}")
    space_cfg = SearchSpaceConfig(**{k: merged[k] for k in _SPACE_KEYS},
                                  op_list=arch_space.DEFAULT_OPS[:num_ops])
    trainer_cfg = training.TrainerConfig(**{k: merged[k] for k in _TRAINER_KEYS})
    return space_cfg, trainer_cfg


def _parse_digits(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.replace(",", " ").split()]
    except ValueError as exc:
        raise DeconasError(f"cannot parse digits {text!r}") from exc


def _arch_from_args(args, space_cfg: SearchSpaceConfig):
    arch = arch_space.decode_decimal(_parse_digits(args.digits), space_cfg)
    if getattr(args, "local_fusion", None):
        arch = arch_space.ArchitectureSequence(
            arch.mix_bits, tuple(_parse_digits(args.local_fusion)), arch.global_fusion)
    if getattr(args, "global_fusion", None):
        arch = arch_space.ArchitectureSequence(
            arch.mix_bits, arch.local_fusion, tuple(_parse_digits(args.global_fusion)))
    issues = arch_space.validate(arch, space_cfg)
    if issues:
        raise DeconasError("; ".join(i.message for i in issues))
    return arch


def _out_dir(merged: dict, default: str) -> str:
    out = merged.get("out") or default
    os.makedirs(out, exist_ok=True)
    return out


def _dataset(merged: dict, space_cfg: SearchSpaceConfig):
    pairs = sr_data.resolve_source(merged["data"], space_cfg.scale)
    split = max(1, len(pairs) // 4)
    return pairs[split:], pairs[:split]  # train, validation


# ---------------------------------------------------------------------------
# commands

def cmd_search(args) -> int:
    merged = resolve_config(args)
    if args.surrogate:
        merged["reward_mode"] = "surrogate"
    space_cfg, trainer_cfg = split_configs(merged)
    out = _out_dir(merged, "runs/search")

    train_pairs = val_pairs = None
    if trainer_cfg.reward_mode == "psnr":
        train_pairs, val_pairs = _dataset(merged, space_cfg)
    report = training.search(space_cfg, trainer_cfg, merged["seed"],
                             train_pairs=train_pairs, val_pairs=val_pairs,
                             out_dir=out, deterministic=merged["deterministic"])

    with open(os.path.join(out, "reward.csv"), "w") as fh:
        fh.write(training.format_reward_csv(report.records))
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out, "search_config.json"), "w") as fh:
        json.dump({k: v for k, v in merged.items() if k in SCHEMA}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if report.records:
        reporting.save_reward_figure(report.records, os.path.join(out, "reward.png"))
        reporting.save_param_scatter(report.records, os.path.join(out, "candidates.png"))
    if report.best_digits is not None:
        print("best digits:", ",".join(map(str, report.best_digits)))
    print("report written to", out)
    return 0


def cmd_sample(args) -> int:
    merged = resolve_config(args)
    space_cfg, trainer_cfg = split_configs(merged)
    ckpt = args.checkpoint
    if os.path.isdir(ckpt):
        ckpt = os.path.join(ckpt, "checkpoints", "controller.ckpt")
    if not os.path.isfile(ckpt):
        raise DeconasError(f"controller checkpoint {ckpt!r} not found")
    controller = Controller.load(ckpt, space_cfg)
    rng = np.random.default_rng(merged["seed"])
    pool = args.pool if args.pool is not None else trainer_cfg.candidate_pool

    out = _out_dir(merged, "runs/sample")
    path = os.path.join(out, "candidates.jsonl")
    best = None
    with open(path, "w") as fh:
        for _ in range(pool):
            trace = controller.sample(rng)
            digits = arch_space.encode_decimal(trace.arch, space_cfg)
            fh.write(json.dumps({
                "digits": digits,
                "local_fusion": list(trace.arch.local_fusion),
                "global_fusion": list(trace.arch.global_fusion),
                "log_prob": trace.log_prob,
            }, sort_keys=True) + "\n")
            key = (-trace.log_prob, count_params(trace.arch, space_cfg).total, tuple(digits))
            if best is None or key < best[0]:
                best = (key, digits)
    print("candidates written to", path)
    print("most probable digits:", ",".join(map(str, best[1])))
    return 0


def cmd_train(args) -> int:
    merged = resolve_config(args)
    space_cfg, trainer_cfg = split_configs(merged)
    arch = _arch_from_args(args, space_cfg)
    train_pairs, val_pairs = _dataset(merged, space_cfg)
    out = _out_dir(merged, "runs/train")

    bank, history = training.final_train(
        arch, space_cfg, trainer_cfg, train_pairs, val_pairs, merged["seed"],
        steps=args.steps)
    with open(os.path.join(out, "history.csv"), "w") as fh:
        fh.write(training.format_history_csv(history))
    if history:
        reporting.save_history_figure(history, os.path.join(out, "history.png"))
    bank.store.save(os.path.join(out, "bank.ckpt"), deterministic=merged["deterministic"])
    with open(os.path.join(out, "architecture.json"), "w") as fh:
        fh.write(arch_space.to_json(arch, space_cfg) + "\n")
    with open(os.path.join(out, "architecture.dot"), "w") as fh:
        fh.write(arch_space.to_dot(arch, space_cfg))
    baseline = training.bicubic_baseline_psnr(val_pairs, space_cfg.scale)
    final = history[-1].val_psnr if history else float("nan")
    print(f"bicubic baseline: {baseline:.3f} dB")
    print(f"trained model:    {final:.3f} dB")
    print("artifacts written to", out)
    return 0


def cmd_eval(args) -> int:
    merged = resolve_config(args)
    space_cfg, _ = split_configs(merged)
    out = _out_dir(merged, "runs/eval")
    rows = []
    if args.pred and args.target:
        pred = sr_data.load_pnm(args.pred)
        target = sr_data.load_pnm(args.target)
        rows.append(("files", sr_data.psnr(pred, target)))
    else:
        if not args.digits:
            raise DeconasError("eval needs either --digits (+ --checkpoint) or --pred/--target")
        arch = _arch_from_args(args, space_cfg)
        _, val_pairs = _dataset(merged, space_cfg)
        rows.append(("bicubic", training.bicubic_baseline_psnr(val_pairs, space_cfg.scale)))
        if args.checkpoint:
            bank = SharedWeightBank(space_cfg, np.random.default_rng(merged["seed"]))
            bank.store.load_values_from(ParamStore.load(args.checkpoint))
            rows.append(("model", training.evaluate_psnr(arch, bank, val_pairs)))
    csv_path = os.path.join(out, "eval.csv")
    with open(csv_path, "w") as fh:
        fh.write("name,psnr_db\n")
        for name, value in rows:
            fh.write(f"{name},{value!r}\n")
    for name, value in rows:
        print(f"{name}: {value:.3f} dB")
    print("csv written to", csv_path)
    return 0


def cmd_count(args) -> int:
    merged = resolve_config(args)
    space_cfg, _ = split_configs(merged)
    arch = _arch_from_args(args, space_cfg)
    breakdown = count_params(arch, space_cfg).as_dict()
    breakdown["max_params"] = max_params(space_cfg)
    breakdown["cb"] = breakdown["total"] / breakdown["max_params"]
    if args.format == "csv":
        print("component,count")
        for key, value in breakdown.items():
            print(f"{key},{value}")
    else:
        print(json.dumps(breakdown, indent=2, sort_keys=True))
    return 0


def cmd_enumerate(args) -> int:
    merged = resolve_config(args)
    space_cfg, _ = split_configs(merged)
    try:
        archs = arch_space.enumerate_space(space_cfg, args.limit)
    except SpaceTooLargeError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    for arch in archs:
        digits = ",".join(map(str, arch_space.encode_decimal(arch, space_cfg)))
        if space_cfg.fusion_search:
            lf = "".join(map(str, arch.local_fusion))
            gf = "".join(map(str, arch.global_fusion))
            print(f"{digits} lf={lf} gf={gf}")
        else:
            print(digits)
    return 0


def cmd_decode(args) -> int:
    merged = resolve_config(args)
    space_cfg, _ = split_configs(merged)
    digits = _parse_digits(args.digits)
    if len(digits) != space_cfg.num_mix_blocks:
        # convenience: decode a bare digit list against an ad-hoc space
        blocks = len(digits)
        m = 1
        while m * (m + 1) // 2 < blocks:
            m += 1
        if m * (m + 1) // 2 != blocks:
            raise DeconasError(
                f"{len(digits)} digits fit no mix-node count (need M(M+1)/2)")
        space_cfg = SearchSpaceConfig(
            num_blocks=space_cfg.num_blocks, mix_nodes=m, num_ops=space_cfg.num_ops,
            feature_channels=space_cfg.feature_channels, scale=space_cfg.scale,
            fusion_search=False, op_list=space_cfg.op_list)
    arch = arch_space.decode_decimal(digits, space_cfg)
    print(arch_space.to_json(arch, space_cfg))
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(sub):
    sub.add_argument("--profile", choices=("desk", "paper"), default=None)
    sub.add_argument("--config", help="config file (key=value lines or JSON)")
    for key, kind in SCHEMA.items():
        flag = "--" + key.replace("_", "-")
        if kind is bool:
            group = sub.add_mutually_exclusive_group()
            group.add_argument(flag, dest=key, action="store_true", default=None)
            group.add_argument("--no-" + key.replace("_", "-"), dest=key,
                               action="store_false", default=None)
        else:
            sub.add_argument(flag, dest=key, type=kind, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deconas",
        description="Architecture search for lightweight super-resolution networks.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("search", help="run the alternating search loop")
    _add_common(p)
    p.add_argument("--reward", dest="reward_mode", choices=("psnr", "surrogate"), default=None)
    p.set_defaults(func=cmd_search, surrogate=False)

    p = subs.add_parser("surrogate-search", help="search with the deterministic surrogate reward")
    _add_common(p)
    p.set_defaults(func=cmd_search, surrogate=True)

    p = subs.add_parser("sample", help="sample candidates from a trained controller")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="controller checkpoint or search out dir")
    p.add_argument("--pool", type=int, default=None)
    p.set_defaults(func=cmd_sample)

    p = subs.add_parser("train", help="train one architecture from scratch")
    _add_common(p)
    p.add_argument("--digits", required=True)
    p.add_argument("--local-fusion", dest="local_fusion")
    p.add_argument("--global-fusion", dest="global_fusion")
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("eval", help="report PSNR for a model and the bicubic baseline")
    _add_common(p)
    p.add_argument("--digits")
    p.add_argument("--local-fusion", dest="local_fusion")
    p.add_argument("--global-fusion", dest="global_fusion")
    p.add_argument("--checkpoint", help="bank checkpoint from `train`")
    p.add_argument("--pred", help="prediction image (PNM) to score directly")
    p.add_argument("--target", help="target image (PNM) to score against")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("count", help="analytical parameter breakdown")
    _add_common(p)
    p.add_argument("--digits", required=True)
    p.add_argument("--local-fusion", dest="local_fusion")
    p.add_argument("--global-fusion", dest="global_fusion")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_count)

    p = subs.add_parser("enumerate", help="list every architecture in a small space")
    _add_common(p)
    p.add_argument("--limit", type=int, default=65536)
    p.set_defaults(func=cmd_enumerate)

    p = subs.add_parser("decode", help="expand decimal digits to bit lists")
    _add_common(p)
    p.add_argument("--digits", required=True)
    p.set_defaults(func=cmd_decode)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DeconasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
