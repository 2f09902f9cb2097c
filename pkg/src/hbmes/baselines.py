"""Rule-based reference policies, a small-horizon exhaustive oracle, and evaluation reports."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .env import EnvState, ExogenousSlot, RepairedAction, SystemParams, bess_window, pv_output, settle_slot
from .errors import SearchSpaceError
from .game import MarkovGame, repair_storage
from .traces import TraceSet


class Policy(Protocol):
    name: str

    def reset(self) -> None: ...

    def act(self, state: EnvState, exo: ExogenousSlot) -> RepairedAction: ...


class OnOffThermostat:
    """Full cooling at or above the upper comfort bound, none at or below the lower one,
    previous mode in between."""

    def __init__(self, params: SystemParams):
        self.params = params
        self.on = [False] * params.J

    def reset(self) -> None:
        self.on = [False] * self.params.J

    def step(self, state: EnvState) -> tuple[float, ...]:
        p = self.params
        out = []
        for i, beta in enumerate(state.beta_in):
            if beta <= p.beta_min[i]:
                self.on[i] = False
            elif beta >= p.beta_max[i]:
                self.on[i] = True
            out.append(p.P_sp_max[i] if self.on[i] else 0.0)
        return tuple(out)


class B1Policy:
    """Greedy storage: charge battery then electrolyzer from PV surplus, discharge
    battery then fuel cell against a deficit. ON/OFF cooling."""

    name = "b1"

    def __init__(self, params: SystemParams):
        self.params = params
        self.thermostat = OnOffThermostat(params)

    def reset(self) -> None:
        self.thermostat.reset()

    def act(self, state: EnvState, exo: ExogenousSlot) -> RepairedAction:
        p = self.params
        net = pv_output(exo.kappa_l, p) - exo.P_load
        if net > 0:
            a_b, a_h = p.P_bc_max, p.P_el_max
        elif net < 0:
            a_b, a_h = -p.P_bd_max, -p.P_fc_max
        else:
            a_b = a_h = 0.0
        P_bc, P_bd, P_el, P_fc = repair_storage(a_b, a_h, state, exo, p)
        return RepairedAction(P_bc=P_bc, P_bd=P_bd, P_el=P_el, P_fc=P_fc, P_sp=self.thermostat.step(state))


@dataclass(frozen=True)
class PriceLevels:
    low: float
    high: float

    @classmethod
    def from_trace(cls, ts: TraceSet) -> "PriceLevels":
        levels = np.unique(ts.price)
        return cls(low=float(levels[0]), high=float(levels[-1]))


class B2Policy:
    """Battery charges fully at the lowest tariff level and covers the deficit at the
    highest; hydrogen idle; ON/OFF cooling."""

    name = "b2"

    def __init__(self, params: SystemParams, levels: PriceLevels):
        self.params = params
        self.levels = levels
        self.thermostat = OnOffThermostat(params)

    def reset(self) -> None:
        self.thermostat.reset()

    def act(self, state: EnvState, exo: ExogenousSlot) -> RepairedAction:
        p = self.params
        lo, hi = bess_window(state.B, p)
        P_bc = P_bd = 0.0
        if exo.v <= self.levels.low:
            P_bc = hi
        elif exo.v >= self.levels.high:
            deficit = exo.P_load - pv_output(exo.kappa_l, p)
            P_bd = max(lo, -max(deficit, 0.0)) + 0.0
        return RepairedAction(P_bc=P_bc, P_bd=P_bd, P_sp=self.thermostat.step(state))


class SequencePolicy:
    """Replays a fixed list of actions (e.g. an oracle plan)."""

    def __init__(self, actions: Sequence[RepairedAction], name: str = "oracle"):
        self.actions = list(actions)
        self.name = name
        self._k = 0

    def reset(self) -> None:
        self._k = 0

    def act(self, state: EnvState, exo: ExogenousSlot) -> RepairedAction:
        a = self.actions[self._k]
        self._k += 1
        return a


def slot_objective(s, params: SystemParams) -> float:
    """Operating cost plus the comfort penalty of one slot."""
    return s.total_cost + params.pi_th * sum(s.temp_dev)


@dataclass
class OracleResult:
    cost: float
    indices: list[tuple[int, ...]]
    actions: list[RepairedAction]
    evaluated: int


def exhaustive_oracle(state: EnvState, exos: Sequence[ExogenousSlot], game: MarkovGame,
                      horizon: int | None = None, max_sequences: int = 2_000_000) -> OracleResult:
    """Best joint discrete action sequence under perfect foresight, by full enumeration.

    The objective is operating cost plus comfort penalty summed over the horizon;
    every candidate goes through the same repair rules as the learned policy.
    """
    T_o = len(exos) if horizon is None else horizon
    if T_o > len(exos):
        raise SearchSpaceError(f"horizon {T_o} exceeds the {len(exos)} supplied slots")
    per_slot = math.prod(game.action_sizes)
    total = per_slot ** T_o
    if total > max_sequences:
        raise SearchSpaceError(f"{total} action sequences exceed the ceiling of {max_sequences}")
    joint = list(itertools.product(*(range(n) for n in game.action_sizes)))
    params = game.params
    best = [math.inf, [], []]
    count = 0

    def search(t: int, st: EnvState, acc: float, idx_path: list, act_path: list) -> None:
        nonlocal count
        if t == T_o:
            count += 1
            if acc < best[0]:
                best[0], best[1], best[2] = acc, list(idx_path), list(act_path)
            return
        exo = exos[t]
        for idx in joint:
            a = game.repair(idx, st, exo)
            nxt, s = settle_slot(st, a, exo, params)
            idx_path.append(idx)
            act_path.append(a)
            search(t + 1, nxt, acc + slot_objective(s, params), idx_path, act_path)
            idx_path.pop()
            act_path.pop()

    search(0, state, 0.0, [], [])
    return OracleResult(cost=best[0], indices=best[1], actions=best[2], evaluated=count)


COST_NAMES = ("C1", "C2", "C3", "C4", "C5", "C6")


@dataclass
class EvaluationReport:
    policy: str = ""
    costs: np.ndarray = field(default_factory=lambda: np.zeros(6))
    comfort_penalty: float = 0.0
    atd: float = 0.0
    slots: int = 0
    rows: list[dict] = field(default_factory=list)

    @property
    def total_cost(self) -> float:
        return float(self.costs.sum())

    @property
    def objective(self) -> float:
        return self.total_cost + self.comfort_penalty

    def summary(self) -> dict[str, float]:
        out = {"total_cost": self.total_cost}
        out.update({name: float(c) for name, c in zip(COST_NAMES, self.costs)})
        out.update(atd=self.atd, comfort_penalty=self.comfort_penalty, objective=self.objective,
                   slots=float(self.slots))
        return out

    def write_summary(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "value"])
            for k, v in self.summary().items():
                w.writerow([k, repr(v)])

    def write_slots(self, path: str | Path, J: int) -> None:
        header = ["t", "P_g", "B", "H", "Q_th", *[f"beta_in_{i + 1}" for i in range(J)], *COST_NAMES]
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in self.rows:
                w.writerow([row["t"], *(repr(float(row[h])) for h in header[1:])])


def evaluate(policy: Policy, trace: TraceSet, params: SystemParams,
             state: EnvState | None = None) -> EvaluationReport:
    """Roll ``policy`` over the whole trace and accumulate costs and comfort statistics."""
    policy.reset()
    state = state or EnvState.initial(params)
    report = EvaluationReport(policy=getattr(policy, "name", type(policy).__name__))
    dev_sum = 0.0
    for k in range(len(trace)):
        exo = trace.slot(k)
        action = policy.act(state, exo)
        state, s = settle_slot(state, action, exo, params)
        report.costs += s.costs
        dev_sum += sum(s.temp_dev)
        row = {"t": k, "P_g": s.P_g, "B": state.B, "H": state.H, "Q_th": state.Q_th}
        row.update({f"beta_in_{i + 1}": b for i, b in enumerate(state.beta_in)})
        row.update(zip(COST_NAMES, s.costs))
        report.rows.append(row)
    report.slots = len(trace)
    report.comfort_penalty = params.pi_th * dev_sum
    report.atd = dev_sum / (len(trace) * params.J) if len(trace) else 0.0
    return report
