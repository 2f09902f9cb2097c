"""Acceptance gate. Each test checks one criterion and records a PASS/FAIL line
that is printed in the terminal summary.

The training criteria share session-scoped runs: one per disturbance level on
the two-building smoke scenario, plus a repeat of the undisturbed run for the
determinism check.
"""

import itertools
import time
from pathlib import Path

import numpy as np
import pytest

from hbmes.baselines import B1Policy, B2Policy, PriceLevels, evaluate, exhaustive_oracle
from hbmes.cli import build_game, build_traces
from hbmes.config import load_config
from hbmes.env import (
    BOUND_TOL, EnvState, ExogenousSlot, RepairedAction, SystemParams, cooling_slack, cwt_step, dispatch_heat,
    electric_residual, settle_slot,
)
from hbmes.game import MarkovGame, build_action_grids, repair_powers
from hbmes.madacr import DDQNConfig, MADACRPolicy, TrainConfig, train, train_ddqn
from hbmes.nn import DenseNet, gumbel_softmax, one_hot_argmax, sample_gumbel, soft_update
from hbmes.traces import TraceSet, synthesize_traces, trace_stats

SMOKE_CFG = Path(__file__).resolve().parent.parent / "configs" / "smoke.cfg"
CHIS = (0.0, 1.0, 2.0)


# --- plant and cost model -----------------------------------------------------------------------

def test_dynamics_invariants_fuzz(gate):
    p = SystemParams.reference(J=4)
    rng = np.random.default_rng(20240501)
    worst_bound = worst_excl = worst_res = worst_slack = 0.0
    both_on = 0
    t0 = time.perf_counter()
    for _ in range(10_000):
        st = EnvState(B=rng.uniform(p.B_min, p.B_max), Q_th=rng.uniform(0, p.Q_th_max), H=rng.uniform(0, p.H_max),
                      beta_in=tuple(rng.uniform(15, 32, 4)), I_el_on=bool(rng.integers(2)),
                      I_fc_on=bool(rng.integers(2)))
        e = ExogenousSlot(v=rng.uniform(0.2, 1.5), kappa_l=rng.uniform(0, 1.5), P_load=rng.uniform(0, 40),
                          mu_e=0.968, beta_out=rng.uniform(15, 40), lambda_g=0.287,
                          disturbance=tuple(rng.uniform(-2, 2, 4)))
        # raw actions deliberately overshoot every limit
        a = repair_powers(rng.uniform(-50, 40), rng.uniform(-40, 40), rng.uniform(-10, 30, 4), st, e, p)
        nxt, s = settle_slot(st, a, e, p)
        worst_bound = max(worst_bound, p.B_min - nxt.B, nxt.B - p.B_max, -nxt.H, nxt.H - p.H_max,
                          -nxt.Q_th, nxt.Q_th - p.Q_th_max)
        worst_excl = max(worst_excl, abs(s.P_bc * s.P_bd), abs(s.P_el * s.P_fc), abs(s.P_tc * s.P_td))
        worst_res = max(worst_res, electric_residual(s, e.P_load))
        worst_slack = max(worst_slack, -cooling_slack(s, p))
        both_on += nxt.I_el_on and nxt.I_fc_on
    elapsed = time.perf_counter() - t0
    ok = (worst_bound <= BOUND_TOL and worst_excl == 0.0 and both_on == 0 and worst_res <= 1e-9
          and worst_slack <= 1e-9 and elapsed < 5.0)
    gate.check("dynamics invariant suite", ok,
               f"bound excess {worst_bound:.1e}, exclusivity {worst_excl}, residual {worst_res:.1e}, "
               f"slack violation {max(worst_slack, 0):.1e}, {elapsed:.2f}s")
    assert ok


def test_cost_model_examples(gate):
    p = SystemParams.reference(J=4)
    idle = RepairedAction.idle(4)
    mild = dict(mu_e=0.968, beta_out=22.0, lambda_g=0.287)
    st = EnvState.initial(p)
    # sun gives 0.2 * 100 * 0.8 = 16 kW against a 10 kW load: 6 kW sold at tau = 0.1
    _, sell = settle_slot(st, idle, ExogenousSlot(v=1.0, kappa_l=0.8, P_load=10.0, **mild), p)
    # 5 kW bought at v = 1.0: carbon 0.06 * 0.968 * 5
    _, buy = settle_slot(st, idle, ExogenousSlot(v=1.0, kappa_l=0.0, P_load=5.0, **mild), p)
    start = RepairedAction(P_el=10.0, P_sp=(0.0,) * 4)
    on, s_su = settle_slot(st, start, ExogenousSlot(v=1.0, kappa_l=0.0, P_load=5.0, **mild), p)
    _, s_on = settle_slot(on, start, ExogenousSlot(v=1.0, kappa_l=0.0, P_load=5.0, **mild), p)
    _, s_sd = settle_slot(on, idle, ExogenousSlot(v=1.0, kappa_l=0.0, P_load=5.0, **mild), p)
    checks = {
        "C1 sell": (sell.C1, -6.0 * 0.1),
        "C1 buy": (buy.C1, 5.0 * 1.0),
        "C2": (buy.C2, 0.06 * 0.968 * 5.0),
        "C4 startup": (s_su.C4, 0.158 + 0.97),
        "C4 on": (s_on.C4, 0.158),
        "C4 shutdown": (s_sd.C4, 0.049),
    }
    worst = max(abs(got - want) for got, want in checks.values())
    ok = worst <= 1e-9
    gate.check("cost-model unit values", ok, f"max abs error {worst:.1e} over {len(checks)} values")
    assert ok


# --- neural machinery ---------------------------------------------------------------------------

def _max_rel_error(net, x, up, h=1e-5):
    net.forward(x)
    grads, g_in = net.backward(up)

    def f():
        return float(np.sum(up * net.forward(x, keep=False)))

    worst = 0.0
    for arr, g in [*zip(net.parameters(), grads), (x, g_in)]:
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + h
            up_v = f()
            flat[j] = old - h
            down_v = f()
            flat[j] = old
            num = (up_v - down_v) / (2 * h)
            worst = max(worst, abs(num - gflat[j]) / max(1e-6, abs(num) + abs(gflat[j])))
    return worst


def test_gradient_check(gate):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        sizes = [int(rng.integers(1, 9)) for _ in range(int(rng.integers(2, 5)))]
        net = DenseNet(sizes, rng)
        worst = max(worst, _max_rel_error(net, rng.normal(size=sizes[0]), rng.normal(size=sizes[-1])))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 30
    gate.check("gradient check, 100 random nets", ok, f"max relative error {worst:.2e}, {elapsed:.2f}s")
    assert ok


def test_gumbel_softmax_limit(gate):
    rng = np.random.default_rng(0)
    logits = np.array([0.4, 1.3, -0.2, 0.9, 0.0])
    noise = sample_gumbel(logits.shape, rng)
    y = gumbel_softmax(logits, 0.01, noise=noise)
    same = np.array_equal(one_hot_argmax(y), one_hot_argmax(logits + noise))
    ok = y.max() >= 1 - 1e-3 and same
    gate.check("Gumbel-Softmax low-temperature limit", ok, f"max entry {y.max():.12f}, argmax agrees: {same}")
    assert ok


def test_soft_update_closed_form(gate):
    target, source = DenseNet([1, 1]), DenseNet([1, 1])
    source.W[0][...] = 1.0
    for _ in range(1000):
        soft_update(target, source, 0.001)
    err = abs(target.W[0][0, 0] - (1 - 0.999 ** 1000))
    ok = err <= 1e-12
    gate.check("soft-update closed form", ok, f"error {err:.1e}")
    assert ok


# --- heat dispatch vs brute force ---------------------------------------------------------------

def _brute_min_gas(Q_fc, delivered, Q_th, p, step=0.05):
    """Smallest boiler power on a grid of (P_gb, P_tc, P_td) that still delivers ``delivered`` kW of cooling."""
    eta, dt = p.eta_h2c, p.delta_t
    gb = np.arange(0.0, p.P_gb_max + 1e-12, step)
    tank = np.concatenate([np.arange(0.0, p.P_tc_max + 1e-12, step), -np.arange(step, p.P_td_max + 1e-12, step)])
    P_tc, P_td = np.maximum(tank, 0.0), np.minimum(tank, 0.0)
    q_next = Q_th + (P_tc * p.eta_tc + P_td / p.eta_td) * dt
    tank_ok = (q_next >= -1e-12) & (q_next <= p.Q_th_max + 1e-12)
    G, T = np.meshgrid(gb, np.arange(len(tank)), indexing="ij")
    slack = Q_fc * eta - (P_tc[T] + P_td[T] + delivered - G * eta) * dt
    feasible = tank_ok[T] & (slack >= -1e-9)
    return float(G[feasible].min()) if feasible.any() else None


def test_dispatch_matches_brute_force(gate):
    p = SystemParams.reference(J=4)
    t0 = time.perf_counter()
    worst_gap, infeasible, cases = 0.0, 0, 0
    for Q_fc, total_sp, Q_th in itertools.product(range(0, 21, 2), range(0, 41, 5), range(0, 51, 10)):
        cases += 1
        req = [total_sp / 4.0] * 4
        d = dispatch_heat(float(Q_fc), req, float(Q_th), p)
        delivered = sum(d.P_sp_actual)
        slack = Q_fc * p.eta_h2c - (d.P_tc + d.P_td + delivered - d.P_gb * p.eta_h2c) * p.delta_t
        q_next = cwt_step(float(Q_th), d.P_tc, d.P_td, p)
        feasible = (slack >= -1e-9 and 0 <= d.P_gb <= p.P_gb_max and d.P_tc * d.P_td == 0
                    and 0 <= q_next <= p.Q_th_max and all(a <= r + 1e-12 for a, r in zip(d.P_sp_actual, req)))
        best = _brute_min_gas(Q_fc, delivered, Q_th, p)
        if not feasible or best is None:
            infeasible += 1
            continue
        # the grid can only overestimate the continuous minimum
        worst_gap = max(worst_gap, d.P_gb - best)
    elapsed = time.perf_counter() - t0
    ok = infeasible == 0 and worst_gap <= 1e-9 and elapsed < 10
    gate.check("dispatch-oracle equivalence", ok,
               f"{cases} cases, {infeasible} infeasible, max excess gas {worst_gap:.1e} kW, {elapsed:.2f}s")
    assert ok


# --- oracle dominance ---------------------------------------------------------------------------

def test_oracle_dominance(gate):
    t0 = time.perf_counter()
    p = SystemParams.reference(J=1, B_init=20.0, H_init=30.0)
    train_ts = synthesize_traces(1, 0)
    game = MarkovGame(p, build_action_grids(p, 2, 2, 2), trace_stats(train_ts, p))
    # two night slots: valley then peak tariff, full hydrogen tank
    night = dict(kappa_l=0.0, P_load=10.0, mu_e=0.968, beta_out=30.0, lambda_g=0.287)
    window = TraceSet(price=np.array([0.3, 1.1]), load=np.array([10.0, 10.0]), irradiance=np.zeros(2),
                          temp_out=np.array([30.0, 30.0]), emission=np.full(2, 0.968), gas_price=np.full(2, 0.287),
                          role="test")
    exos = [ExogenousSlot(v=0.3, **night), ExogenousSlot(v=1.1, **night)]
    assert [window.slot(k) for k in range(2)] == exos
    oracle = exhaustive_oracle(EnvState.initial(p), exos, game)

    tiny = TrainConfig(episodes=20, batch_size=16, buffer_size=400, warmup_fraction=0.2, hidden=(16,), rho=0.05,
                       train_every=2, lr_actor=1e-3, lr_critic=1e-3)
    trained = MADACRPolicy(game, train(game, train_ts, tiny, seed=0).actors)
    b3, _ = train_ddqn(game, train_ts, DDQNConfig(episodes=20, batch_size=16, buffer_size=400, hidden=(16,)), seed=0)
    policies = [B1Policy(p), B2Policy(p, PriceLevels(0.3, 1.1)), b3, trained]

    # precondition: every policy only ever plays repaired grid actions here
    on_grid = True
    for pol in policies:
        pol.reset()
        st = EnvState.initial(p)
        for e in exos:
            a = pol.act(st, e)
            choices = {game.repair(idx, st, e) for idx in itertools.product(range(2), repeat=3)}
            on_grid &= a in choices
            st, _ = settle_slot(st, a, e, p)
    results = {pol.name: evaluate(pol, window, p).objective for pol in policies}
    elapsed = time.perf_counter() - t0
    ok = on_grid and all(oracle.cost <= v + 1e-9 for v in results.values()) and elapsed < 5
    detail = ", ".join(f"{k} {v:.4f}" for k, v in results.items())
    gate.check("oracle dominance", ok, f"oracle {oracle.cost:.4f} vs {detail}; on grid: {on_grid}; {elapsed:.2f}s")
    assert ok


# --- training on the smoke scenario -------------------------------------------------------------

class SmokeRun:
    def __init__(self, chi: float, seconds: float, result, reports, cfg):
        self.chi, self.seconds, self.result, self.reports, self.cfg = chi, seconds, result, reports, cfg


def _smoke(chi: float) -> SmokeRun:
    cfg = load_config(SMOKE_CFG).with_run(chi=chi)
    train_ts, test_ts = build_traces(cfg)
    game = build_game(cfg, train_ts)
    train_cfg, _ = cfg.trainer_configs()
    t0 = time.perf_counter()
    res = train(game, train_ts, train_cfg, seed=cfg.run.seed)
    seconds = time.perf_counter() - t0
    reports = {
        "proposed": evaluate(MADACRPolicy(game, res.actors), test_ts, cfg.system),
        "b1": evaluate(B1Policy(cfg.system), test_ts, cfg.system),
        "b2": evaluate(B2Policy(cfg.system, PriceLevels.from_trace(train_ts)), test_ts, cfg.system),
    }
    return SmokeRun(chi, seconds, res, reports, cfg)


@pytest.fixture(scope="session")
def smoke_runs():
    return {chi: _smoke(chi) for chi in CHIS}


def test_training_smoke(gate, smoke_runs):
    run = smoke_runs[0.0]
    total = np.asarray(run.result.log.total)
    first, last = total[:50].mean(), total[-50:].mean()
    improved = last >= first + 0.2 * abs(first)
    cost, b1 = run.reports["proposed"].total_cost, run.reports["b1"].total_cost
    ok = (len(total) == 2000 and run.cfg.system.J == 2 and improved and cost <= b1 and run.seconds < 600)
    gate.check("training smoke", ok,
               f"first-50 mean {first:.1f}, last-50 mean {last:.1f} (needs >= {first + 0.2 * abs(first):.1f}); "
               f"cost {cost:.2f} vs B1 {b1:.2f}; {run.seconds:.0f}s")
    assert ok


@pytest.mark.parametrize("chi", CHIS)
def test_disturbance_robustness(gate, smoke_runs, chi):
    run = smoke_runs[chi]
    rep, b1 = run.reports["proposed"], run.reports["b1"]
    ok = rep.atd <= 0.7 and rep.total_cost <= b1.total_cost
    gate.check(f"disturbance robustness chi={chi:g}", ok,
               f"ATD {rep.atd:.3f}, cost {rep.total_cost:.2f} vs B1 {b1.total_cost:.2f} "
               f"(B1 ATD {b1.atd:.3f}, B2 cost {run.reports['b2'].total_cost:.2f})")
    assert ok


def test_determinism(gate, smoke_runs, tmp_path):
    again = _smoke(0.0)
    first = smoke_runs[0.0]
    files = {}
    for tag, run in (("a", first), ("b", again)):
        run.result.log.to_csv(tmp_path / f"{tag}_log.csv")
        run.reports["proposed"].write_summary(tmp_path / f"{tag}_summary.csv")
        run.reports["proposed"].write_slots(tmp_path / f"{tag}_slots.csv", run.cfg.system.J)
        files[tag] = [(tmp_path / f"{tag}_{n}.csv").read_bytes() for n in ("log", "summary", "slots")]
    ok = files["a"] == files["b"]
    gate.check("determinism", ok, "reward log, summary and per-slot report compared byte for byte")
    assert ok
