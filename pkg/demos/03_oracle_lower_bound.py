"""Exhaustive search as a yardstick.

On a coarse action grid the whole space of action sequences over a few slots
is small enough to enumerate. The best sequence bounds every policy that acts
on the same grid from below.
"""

from hbmes.baselines import B1Policy, B2Policy, PriceLevels, SequencePolicy, evaluate, exhaustive_oracle
from hbmes.env import EnvState, SystemParams
from hbmes.game import MarkovGame, build_action_grids
from hbmes.traces import synthesize_traces, trace_stats

params = SystemParams.reference(J=1, B_init=20.0)
trace = synthesize_traces(days=1, seed=0)
game = MarkovGame(params, build_action_grids(params, 3, 3, 3), trace_stats(trace, params))

# early evening: the tariff jumps from flat to peak at 18 h
window = trace.window(16, 19)
plan = exhaustive_oracle(EnvState.initial(params), [window.slot(k) for k in range(len(window))], game)
print(f"searched {plan.evaluated} action sequences")
for k, a in enumerate(plan.actions):
    print(f"  slot {16 + k}h price {window.price[k]:.1f}: battery {a.P_bc + a.P_bd:+6.2f} kW, "
          f"hydrogen {a.P_el + a.P_fc:+6.2f} kW, cooling {a.P_sp[0]:5.2f} kW")

for policy in (SequencePolicy(plan.actions), B1Policy(params), B2Policy(params, PriceLevels.from_trace(trace))):
    rep = evaluate(policy, window, params)
    print(f"{policy.name:7s} objective {rep.objective:8.4f} (cost {rep.total_cost:.4f}, comfort {rep.comfort_penalty:.4f})")
