"""Walk through one synthetic summer day with the greedy rule-based controller.

Prints the tariff, PV output, grid exchange, storage levels and indoor
temperatures slot by slot, then the day's cost split into its six terms.
"""

from hbmes.baselines import COST_NAMES, B1Policy, evaluate
from hbmes.env import SystemParams, pv_output
from hbmes.traces import synthesize_traces

params = SystemParams.reference(J=2)
day = synthesize_traces(days=1, seed=0, role="test")

report = evaluate(B1Policy(params), day, params)

print(" h  price   PV   load    P_g     B     H   Q_th  indoor temps")
for k, row in enumerate(report.rows):
    temps = "  ".join(f"{row[f'beta_in_{i + 1}']:5.2f}" for i in range(params.J))
    print(f"{k:2d}  {day.price[k]:4.2f}  {pv_output(day.irradiance[k], params):5.1f}  {day.load[k]:5.1f}"
          f"  {row['P_g']:6.1f}  {row['B']:5.1f} {row['H']:5.1f} {row['Q_th']:5.1f}  {temps}")

print()
for name, value in zip(COST_NAMES, report.costs):
    print(f"{name}: {value:8.3f} RMB")
print(f"total {report.total_cost:.2f} RMB, average temperature deviation {report.atd:.3f} degrees")
