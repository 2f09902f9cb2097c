"""Command-line entry point: ``hbmes {train,evaluate,compare,synth-traces,oracle}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Sequence

from .baselines import (
    COST_NAMES, B1Policy, B2Policy, EvaluationReport, PriceLevels, SequencePolicy, evaluate, exhaustive_oracle,
)
from .config import RunConfig, load_config
from .env import EnvState
from .errors import ConfigurationError, HBMESError, TraceLoadError, TrainingDivergenceError, UsageError
from .game import MarkovGame, build_action_grids
from .madacr import DDQNPolicy, MADACRPolicy, train, train_ddqn
from .nn import load_checkpoint, save_checkpoint
from .traces import DisturbanceModel, SynthProfile, TraceSet, load_traces, save_traces, synthesize_traces, trace_stats

log = logging.getLogger("hbmes")

POLICIES = ("proposed", "b1", "b2", "b3", "oracle")
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


# --- assembling a run from its configuration -----------------------------------------------------

def build_traces(cfg: RunConfig) -> tuple[TraceSet, TraceSet]:
    t, p = cfg.traces, cfg.system
    profile = SynthProfile(load_noise=t.load_noise, temp_noise=t.temp_noise, irr_noise=t.irr_noise)
    if t.train:
        train_ts = load_traces(t.train, p, role="train", slot_hours=p.delta_t)
    else:
        train_ts = synthesize_traces(t.synth_train_days, t.synth_seed, profile, role="train")
    if t.test:
        test_ts = load_traces(t.test, p, role="test", slot_hours=p.delta_t)
    else:
        test_ts = synthesize_traces(t.synth_test_days, t.synth_seed + 1, profile, role="test")
    if cfg.run.chi > 0 and test_ts.disturbance is None:
        # a fixed draw keeps every evaluation of the test window comparable
        test_ts = DisturbanceModel(cfg.run.chi, cfg.run.disturbance_seed).attach(test_ts, p.J)
    return train_ts, test_ts


def build_game(cfg: RunConfig, train_ts: TraceSet) -> MarkovGame:
    p, g = cfg.system, cfg.grids
    grids = build_action_grids(p, g.N_bess, g.N_hess, g.N_thermal)
    return MarkovGame(p, grids, trace_stats(train_ts, p), T=cfg.training.T, thermostat_rule=cfg.run.thermostat_rule)


def load_policy(name: str, game: MarkovGame, train_ts: TraceSet, checkpoint: Path | None):
    if name == "b1":
        return B1Policy(game.params)
    if name == "b2":
        return B2Policy(game.params, PriceLevels.from_trace(train_ts))
    if name in ("proposed", "b3"):
        if checkpoint is None or not checkpoint.exists():
            raise UsageError(f"policy {name!r} needs a checkpoint; not found: {checkpoint}")
        nets = load_checkpoint(checkpoint)
        if name == "b3":
            if "qnet" not in nets:
                raise ConfigurationError(f"{checkpoint}: not a DDQN checkpoint")
            return DDQNPolicy(game, nets["qnet"])
        actors = [nets[f"actor_{i}"] for i in range(game.n_agents) if f"actor_{i}" in nets]
        if len(actors) != game.n_agents:
            raise ConfigurationError(
                f"{checkpoint}: holds {len(actors)} actors, configuration needs {game.n_agents}")
        return MADACRPolicy(game, actors)
    raise UsageError(f"unknown policy {name!r}; valid names: {', '.join(POLICIES)}")


def write_comparison(rows: Sequence[tuple[str, EvaluationReport]], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "slots", "total_cost", "comfort_penalty", "objective", "atd", *COST_NAMES])
        for name, rep in rows:
            w.writerow([name, rep.slots, repr(rep.total_cost), repr(rep.comfort_penalty), repr(rep.objective),
                        repr(rep.atd), *(repr(float(c)) for c in rep.costs)])


def _print_table(path: Path) -> None:
    sys.stdout.write(path.read_text(encoding="utf-8"))


# --- subcommands ---------------------------------------------------------------------------------

def cmd_train(cfg: RunConfig, out: Path, args) -> None:
    train_ts, _ = build_traces(cfg)
    game = build_game(cfg, train_ts)
    train_cfg, ddqn_cfg = cfg.trainer_configs()
    if cfg.run.algorithm == "ddqn":
        policy, ep_log = train_ddqn(game, train_ts, ddqn_cfg, seed=cfg.run.seed)
        nets = {"qnet": policy.qnet}
    else:
        res = train(game, train_ts, train_cfg, seed=cfg.run.seed)
        ep_log = res.log
        nets = {}
        for i, ag in enumerate(res.agents):
            nets[f"actor_{i}"] = ag.actor
            nets[f"critic_{i}"] = ag.critic
        log.info("%d update rounds", res.updates)
    ep_log.to_csv(out / "reward_log.csv")
    save_checkpoint(nets, out / "checkpoint.bin")
    print(f"trained {len(ep_log)} episodes; wrote {out / 'reward_log.csv'} and {out / 'checkpoint.bin'}")


def cmd_evaluate(cfg: RunConfig, out: Path, args) -> None:
    train_ts, test_ts = build_traces(cfg)
    game = build_game(cfg, train_ts)
    default = "b3" if cfg.run.algorithm == "ddqn" else "proposed"
    name = args.policy or default
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.bin"
    policy = load_policy(name, game, train_ts, ckpt)
    rep = evaluate(policy, test_ts, cfg.system)
    rep.write_summary(out / "report_summary.csv")
    rep.write_slots(out / "report_slots.csv", cfg.system.J)
    _print_table(out / "report_summary.csv")


def cmd_compare(cfg: RunConfig, out: Path, args) -> None:
    names = [n.strip() for n in args.policies.split(",") if n.strip()]
    bad = [n for n in names if n not in POLICIES]
    if bad:
        raise UsageError(f"unknown policy {bad[0]!r}; valid names: {', '.join(POLICIES)}")
    train_ts, test_ts = build_traces(cfg)
    game = build_game(cfg, train_ts)
    window = test_ts
    rows = []
    if "oracle" in names:
        # the oracle is a lower bound only on the window it searches, so every row uses that window
        horizon = cfg.run.oracle_horizon
        window = test_ts.window(0, horizon)
        log.info("oracle requested: comparing on the first %d test slots", horizon)
    for name in names:
        if name == "oracle":
            res = exhaustive_oracle(EnvState.initial(cfg.system), [window.slot(k) for k in range(len(window))], game)
            rep = evaluate(SequencePolicy(res.actions), window, cfg.system)
        else:
            given = args.ddqn_checkpoint if name == "b3" else args.checkpoint
            ckpt = Path(given) if given else out / "checkpoint.bin"
            rep = evaluate(load_policy(name, game, train_ts, ckpt), window, cfg.system)
        rows.append((name, rep))
    write_comparison(rows, out / "compare.csv")
    _print_table(out / "compare.csv")


def cmd_synth(cfg: RunConfig, out: Path, args) -> None:
    train_ts, test_ts = build_traces(cfg)
    save_traces(train_ts, out / "train.csv")
    save_traces(test_ts, out / "test.csv")
    print(f"wrote {len(train_ts)} training and {len(test_ts)} test slots to {out}")


def cmd_oracle(cfg: RunConfig, out: Path, args) -> None:
    train_ts, test_ts = build_traces(cfg)
    game = build_game(cfg, train_ts)
    horizon = cfg.run.oracle_horizon
    exos = [test_ts.slot(k) for k in range(min(horizon, len(test_ts)))]
    res = exhaustive_oracle(EnvState.initial(cfg.system), exos, game, max_sequences=args.max_sequences)
    J = cfg.system.J
    with (out / "oracle_plan.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "index_bess", *[f"index_thermal_{i + 1}" for i in range(J)], "index_hess",
                    "P_bc", "P_bd", "P_el", "P_fc", *[f"P_sp_{i + 1}" for i in range(J)]])
        for t, (idx, a) in enumerate(zip(res.indices, res.actions)):
            w.writerow([t, *idx, *(repr(x) for x in (a.P_bc, a.P_bd, a.P_el, a.P_fc, *a.P_sp))])
    print(f"objective {res.cost!r} over {len(exos)} slots ({res.evaluated} sequences searched)")


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "synth-traces": cmd_synth,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # repeated on each subcommand so the flags work on either side of it
    common.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS, help="INI run configuration")
    common.add_argument("--seed", type=int, metavar="U64", default=argparse.SUPPRESS, help="override [run] seed")
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="override [run] out")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="hbmes", parents=[common],
                                     description="Energy management for a hydrogen-based building multi-energy system.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("train", parents=[common], help="train MADACR (or DDQN with [run] algorithm = ddqn)")
    ev = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint or built-in policy on test traces")
    ev.add_argument("--checkpoint", metavar="PATH", help="default: OUT/checkpoint.bin")
    ev.add_argument("--policy", choices=POLICIES[:-1], help="default: the configured algorithm's policy")
    cmp_ = sub.add_parser("compare", parents=[common], help="one row per policy: cost, ATD, cost terms")
    cmp_.add_argument("--policies", default="b1,b2,proposed", help=f"comma list from {', '.join(POLICIES)}")
    cmp_.add_argument("--checkpoint", metavar="PATH", help="MADACR checkpoint (default: OUT/checkpoint.bin)")
    cmp_.add_argument("--ddqn-checkpoint", metavar="PATH", help="DDQN checkpoint for b3")
    sub.add_parser("synth-traces", parents=[common], help="write the configured train/test traces as CSV")
    orc = sub.add_parser("oracle", parents=[common], help="exhaustive search over the first test slots")
    orc.add_argument("--max-sequences", type=int, default=2_000_000)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(getattr(args, "config", None))
        overrides = {k: getattr(args, k) for k in ("seed", "out") if hasattr(args, k)}
        if overrides:
            cfg = cfg.with_run(**overrides)
        out = Path(cfg.run.out)
        out.mkdir(parents=True, exist_ok=True)
        cfg.write(out / "resolved.cfg")
        COMMANDS[args.command](cfg, out, args)
    except (ConfigurationError, TraceLoadError, UsageError) as exc:
        print(f"hbmes {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergenceError as exc:
        print(f"hbmes {args.command}: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except HBMESError as exc:
        print(f"hbmes {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
