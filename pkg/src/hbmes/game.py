"""Multi-agent view of the plant: discrete action grids, local observations,
rule-based action repair and per-agent rewards.

Agents are ordered BESS, thermal 1..J, HESS throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .env import (EnvState, ExogenousSlot, RepairedAction, SlotSettlement, SystemParams,
                  bess_window, hess_window, pv_output)
from .errors import ConfigurationError
from .traces import TraceStats

THERMOSTAT_RULES = ("as_printed", "min_variant")


@dataclass(frozen=True)
class ActionGrids:
    bess_levels: np.ndarray
    hess_levels: np.ndarray
    thermal_levels: tuple[np.ndarray, ...]

    @property
    def sizes(self) -> tuple[int, ...]:
        return (len(self.bess_levels), *(len(t) for t in self.thermal_levels), len(self.hess_levels))


def build_action_grids(params: SystemParams, N_bess: int, N_hess: int, N_thermal: int) -> ActionGrids:
    for name, n in (("N_bess", N_bess), ("N_hess", N_hess), ("N_thermal", N_thermal)):
        if int(n) != n or n < 2:
            raise ConfigurationError(f"{name} must be an integer >= 2, got {n}")
    return ActionGrids(
        bess_levels=np.linspace(-params.P_bd_max, params.P_bc_max, N_bess),
        hess_levels=np.linspace(-params.P_fc_max, params.P_el_max, N_hess),
        thermal_levels=tuple(np.linspace(0.0, pm, N_thermal) for pm in params.P_sp_max),
    )


@dataclass(frozen=True)
class AgentObservation:
    bess: np.ndarray
    thermal: tuple[np.ndarray, ...]
    hess: np.ndarray

    def per_agent(self) -> list[np.ndarray]:
        return [self.bess, *self.thermal, self.hess]


def observation_sizes(J: int) -> tuple[int, ...]:
    return (6, *([5] * J), 12 + J)


def observe(state: EnvState, exo: ExogenousSlot, params: SystemParams, T: int = 24) -> AgentObservation:
    """Assemble every agent's local observation in the fixed entry order.

    The time entry is the slot index within the day (``state.t mod T``).
    """
    t = float(state.t % T)
    P_pv = pv_output(exo.kappa_l, params)
    bess = np.array([exo.v, P_pv, exo.P_load, exo.mu_e, state.B, t])
    thermal = tuple(np.array([state.Q_th, state.beta_in[i], exo.beta_out, exo.lambda_g, t])
                    for i in range(params.J))
    hess = np.array([float(state.I_el_on), float(state.I_fc_on), exo.v, state.B, state.H, P_pv,
                     exo.P_load, exo.mu_e, state.Q_th, exo.beta_out, exo.lambda_g,
                     *state.beta_in, t])
    return AgentObservation(bess=bess, thermal=thermal, hess=hess)


def _feature_keys(J: int) -> list[list[str]]:
    bess = ["v", "P_pv", "P_load", "mu_e", "B", "t"]
    thermal = [["Q_th", f"beta_in_{i}", "beta_out", "lambda_g", "t"] for i in range(J)]
    hess = ["I_el", "I_fc", "v", "B", "H", "P_pv", "P_load", "mu_e", "Q_th", "beta_out", "lambda_g",
            *[f"beta_in_{i}" for i in range(J)], "t"]
    return [bess, *thermal, hess]


class Normalizer:
    """Min-max scaling of observations with ranges fixed from training statistics."""

    def __init__(self, stats: TraceStats, J: int, T: int = 24):
        self.T = T
        ranges = dict(stats.ranges)
        ranges["t"] = (0.0, float(max(T - 1, 1)))
        ranges["I_el"] = ranges["I_fc"] = (0.0, 1.0)
        self.lo, self.span = [], []
        for keys in _feature_keys(J):
            lo = np.array([ranges[k][0] for k in keys])
            hi = np.array([ranges[k][1] for k in keys])
            span = hi - lo
            self.lo.append(lo)
            # constant features map to 0
            self.span.append(np.where(span > 0, span, np.inf))

    def __call__(self, obs: AgentObservation) -> list[np.ndarray]:
        return [np.clip((x - lo) / s, 0.0, 1.0) for x, lo, s in zip(obs.per_agent(), self.lo, self.span)]


def normalize(obs: AgentObservation, stats: TraceStats, J: int, T: int = 24) -> list[np.ndarray]:
    return Normalizer(stats, J, T)(obs)


def thermostat_blocks(beta_in: float, beta_out: float, beta_min: float, beta_max: float,
                      rule: str = "as_printed") -> bool:
    """True when the thermostat rule forces a building's cooling to zero."""
    if rule == "as_printed":
        return beta_in <= beta_min or beta_out <= beta_max
    if rule == "min_variant":
        return beta_in <= beta_min or beta_out <= beta_min
    raise ConfigurationError(f"unknown thermostat rule {rule!r}; choose from {THERMOSTAT_RULES}")


def repair_storage(a_b: float, a_h: float, state: EnvState, exo: ExogenousSlot,
                   params: SystemParams) -> tuple[float, float, float, float]:
    """Clip signed battery/hydrogen powers to feasibility and the surplus priority rules.

    With a PV surplus, charging draws only on the surplus, battery first and
    electrolyzer on the remainder. With a deficit, discharging covers at most the
    deficit, battery first and fuel cell on the remainder.
    """
    net = pv_output(exo.kappa_l, params) - exo.P_load
    b_lo, b_hi = bess_window(state.B, params)
    h_lo, h_hi = hess_window(state.H, params)

    P_bc = P_bd = P_el = P_fc = 0.0
    if a_b > 0:
        cap = min(b_hi, net) if net > 0 else b_hi
        P_bc = max(min(a_b, cap), 0.0)
    elif a_b < 0:
        floor = max(b_lo, net) if net < 0 else b_lo
        P_bd = min(max(a_b, floor), 0.0)
    if a_h > 0:
        cap = min(h_hi, max(0.0, net - P_bc)) if net > 0 else h_hi
        P_el = max(min(a_h, cap), 0.0)
    elif a_h < 0:
        floor = max(h_lo, -max(0.0, -net + P_bd)) if net < 0 else h_lo
        P_fc = min(max(a_h, floor), 0.0)
    # +0.0 folds negative zeros
    return P_bc + 0.0, P_bd + 0.0, P_el + 0.0, P_fc + 0.0


def repair_powers(a_b: float, a_h: float, a_sp: Sequence[float], state: EnvState, exo: ExogenousSlot,
                  params: SystemParams, thermostat_rule: str = "as_printed") -> RepairedAction:
    P_bc, P_bd, P_el, P_fc = repair_storage(a_b, a_h, state, exo, params)
    P_sp = []
    for i, p in enumerate(a_sp):
        p = min(max(float(p), 0.0), params.P_sp_max[i])
        if thermostat_blocks(state.beta_in[i], exo.beta_out, params.beta_min[i], params.beta_max[i],
                             thermostat_rule):
            p = 0.0
        P_sp.append(p)
    return RepairedAction(P_bc=P_bc, P_bd=P_bd, P_el=P_el, P_fc=P_fc, P_sp=tuple(P_sp))


def repair_actions(indices: Sequence[int], state: EnvState, exo: ExogenousSlot, params: SystemParams,
                   grids: ActionGrids, thermostat_rule: str = "as_printed") -> RepairedAction:
    """Map per-agent grid indices (BESS, thermal 1..J, HESS) to a feasible action."""
    J = params.J
    if len(indices) != J + 2:
        raise ConfigurationError(f"expected {J + 2} action indices, got {len(indices)}")
    sizes = grids.sizes
    for k, (idx, n) in enumerate(zip(indices, sizes)):
        if int(idx) != idx or not 0 <= idx < n:
            raise ConfigurationError(f"action index {idx} invalid for agent {k} with {n} levels")
    a_b = float(grids.bess_levels[indices[0]])
    a_h = float(grids.hess_levels[indices[-1]])
    a_sp = [float(grids.thermal_levels[i][indices[1 + i]]) for i in range(J)]
    return repair_powers(a_b, a_h, a_sp, state, exo, params, thermostat_rule)


@dataclass(frozen=True)
class RewardVector:
    r_b: float
    r_th: tuple[float, ...]
    r_h: float

    def as_array(self) -> np.ndarray:
        return np.array([self.r_b, *self.r_th, self.r_h])

    @property
    def total(self) -> float:
        return self.r_b + sum(self.r_th) + self.r_h


def rewards(s: SlotSettlement, params: SystemParams) -> RewardVector:
    J = params.J
    shared_elec = (s.C1 + s.C2) / 2.0
    shared_heat = (s.C5 + s.C6) / (J + 1)
    r_b = -(shared_elec + s.C3)
    r_th = tuple(-(shared_heat + params.pi_th * d) for d in s.temp_dev)
    r_h = -(shared_elec + s.C4 + shared_heat + s.xi)
    return RewardVector(r_b=r_b, r_th=r_th, r_h=r_h)


class MarkovGame:
    """Bundles the pieces an agent-facing loop needs for one plant configuration."""

    def __init__(self, params: SystemParams, grids: ActionGrids, stats: TraceStats,
                 T: int = 24, thermostat_rule: str = "as_printed"):
        if thermostat_rule not in THERMOSTAT_RULES:
            raise ConfigurationError(f"unknown thermostat rule {thermostat_rule!r}")
        self.params = params
        self.grids = grids
        self.stats = stats
        self.T = T
        self.thermostat_rule = thermostat_rule
        self.normalizer = Normalizer(stats, params.J, T)

    @property
    def n_agents(self) -> int:
        return self.params.J + 2

    @property
    def obs_sizes(self) -> tuple[int, ...]:
        return observation_sizes(self.params.J)

    @property
    def action_sizes(self) -> tuple[int, ...]:
        return self.grids.sizes

    def observe(self, state: EnvState, exo: ExogenousSlot) -> list[np.ndarray]:
        """Normalized per-agent observations."""
        return self.normalizer(observe(state, exo, self.params, self.T))

    def repair(self, indices: Sequence[int], state: EnvState, exo: ExogenousSlot) -> RepairedAction:
        return repair_actions(indices, state, exo, self.params, self.grids, self.thermostat_rule)

    def rewards(self, s: SlotSettlement) -> RewardVector:
        return rewards(s, self.params)
