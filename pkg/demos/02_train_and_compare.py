"""Train the multi-agent controller on the two-building smoke scenario and
compare it with the two rule-based baselines on a week of test days.

Takes about a minute on one CPU core. Pass a disturbance half-width as the
first argument (for example ``python demos/02_train_and_compare.py 1.0``).
"""

import sys
from pathlib import Path

import numpy as np

from hbmes.baselines import B1Policy, B2Policy, PriceLevels, evaluate
from hbmes.cli import build_game, build_traces
from hbmes.config import load_config
from hbmes.madacr import MADACRPolicy, train

chi = float(sys.argv[1]) if len(sys.argv) > 1 else 0.0
cfg = load_config(Path(__file__).resolve().parent.parent / "configs" / "smoke.cfg").with_run(chi=chi)
train_ts, test_ts = build_traces(cfg)
game = build_game(cfg, train_ts)
train_cfg, _ = cfg.trainer_configs()

print(f"training {train_cfg.episodes} episodes, {game.n_agents} agents, disturbance half-width {chi}")
result = train(game, train_ts, train_cfg, seed=cfg.run.seed)
rewards = np.asarray(result.log.total)
for start in range(0, len(rewards), max(1, len(rewards) // 10)):
    window = rewards[start:start + 50]
    print(f"  episodes {start + 1:5d}-{start + len(window):5d}: mean reward {window.mean():8.1f}")

policies = [
    MADACRPolicy(game, result.actors),
    B1Policy(cfg.system),
    B2Policy(cfg.system, PriceLevels.from_trace(train_ts)),
]
print(f"\n{'policy':10s} {'cost':>9s} {'ATD':>7s}")
for policy in policies:
    rep = evaluate(policy, test_ts, cfg.system)
    print(f"{policy.name:10s} {rep.total_cost:9.2f} {rep.atd:7.3f}")
