"""Plant model of the hydrogen-based building multi-energy system.

Device dynamics (PV, battery, cold-water tank, electrolyzer / hydrogen tank /
fuel cell, buildings), the heat-dispatch rule for the gas boiler and the tank,
the electric and cooling balances, and the six-term operating cost.

Sign conventions follow the storage models: charging powers are >= 0,
discharging powers are <= 0. ``P_g > 0`` means buying from the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Sequence

from .errors import ConfigurationError, DispatchError, InputValidationError, StateCorruptionError

# Slack allowed when re-checking storage bounds after float arithmetic.
BOUND_TOL = 1e-9


@dataclass(frozen=True)
class SystemParams:
    """Physical and economic constants. Defaults reproduce the reference case (J=4, h_pv=100 m2)."""

    # PV, gas boiler, carbon
    eta_pv: float = 0.2
    h_pv: float = 100.0
    P_gb_max: float = 20.0
    eta_gb: float = 0.95
    lambda_g: float = 0.287
    mu_c: float = 0.06
    tau: float = 0.1
    # battery
    B_min: float = 0.0
    B_max: float = 40.0
    B_init: float = 0.0
    P_bc_max: float = 20.0
    P_bd_max: float = 30.0
    eta_bc: float = 0.95
    eta_bd: float = 0.95
    psi_bess: float = 0.001
    # cold-water tank
    Q_th_max: float = 50.0
    Q_th_init: float = 0.0
    P_tc_max: float = 10.0
    P_td_max: float = 10.0
    eta_tc: float = 0.9
    eta_td: float = 0.9
    psi_cwt: float = 0.005
    # hydrogen
    H_max: float = 30.0
    H_init: float = 0.0
    P_el_max: float = 20.0
    P_fc_max: float = 20.0
    omega_el: float = 0.2397  # Nm3 per kWh consumed
    omega_fc: float = 1.4985  # kWh produced per Nm3
    eta_hr: float = 0.7
    eta_h2e: float = 1.4
    eta_h2c: float = 0.7
    delta_el_on: float = 0.158
    delta_el_su: float = 0.97
    delta_el_sd: float = 0.049
    delta_fc_on: float = 0.079
    delta_fc_su: float = 0.0004
    delta_fc_sd: float = 0.0004
    pi_fc: float = 1.0
    # buildings
    J: int = 4
    beta_min: tuple[float, ...] = (20.0, 20.0, 20.0, 20.0)
    beta_max: tuple[float, ...] = (25.0, 25.0, 25.0, 25.0)
    beta_init: tuple[float, ...] = (21.0, 20.0, 22.0, 21.5)
    A: tuple[float, ...] = (0.5, 0.5, 0.5, 0.5)
    P_sp_max: tuple[float, ...] = (20.0, 20.0, 20.0, 20.0)
    eps_hvac: float = 0.8
    eta_hvac: float = 2.5
    pi_th: float = 0.35
    # time
    delta_t: float = 1.0

    @classmethod
    def reference(cls, J: int = 4, h_pv: float = 100.0, **overrides) -> "SystemParams":
        """Reference constants resized to ``J`` buildings.

        Per-building tuples are truncated or padded by repeating the last entry.
        """
        base = cls()

        def fit(values: tuple[float, ...]) -> tuple[float, ...]:
            vals = list(values[:J])
            while len(vals) < J:
                vals.append(values[-1])
            return tuple(float(v) for v in vals)

        kw = {name: fit(getattr(base, name)) for name in PER_BUILDING}
        kw.update(J=J, h_pv=h_pv)
        kw.update(overrides)
        params = cls(**kw)
        params.validate()
        return params

    def validate(self) -> None:
        def need(cond: bool, msg: str) -> None:
            if not cond:
                raise ConfigurationError(msg)

        for name in ("eta_pv", "eta_gb", "eta_bc", "eta_bd", "eta_tc", "eta_td", "eta_hr", "eta_h2c"):
            v = getattr(self, name)
            need(0.0 < v <= 1.0, f"{name}={v} must lie in (0, 1]")
        need(0.0 <= self.eps_hvac < 1.0, "eps_hvac must lie in [0, 1)")
        need(self.eta_h2e > 0, "eta_h2e must be positive")
        need(self.eta_hvac > 0, "eta_hvac must be positive")
        for name in ("h_pv", "P_gb_max", "B_max", "P_bc_max", "P_bd_max", "Q_th_max", "P_tc_max",
                     "P_td_max", "H_max", "P_el_max", "P_fc_max", "omega_el", "omega_fc", "delta_t"):
            need(getattr(self, name) > 0, f"{name} must be positive")
        need(self.B_min <= self.B_init <= self.B_max, "require B_min <= B_init <= B_max")
        need(0.0 <= self.Q_th_init <= self.Q_th_max, "require 0 <= Q_th_init <= Q_th_max")
        need(0.0 <= self.H_init <= self.H_max, "require 0 <= H_init <= H_max")
        need(self.J >= 1, "J must be >= 1")
        for name in PER_BUILDING:
            need(len(getattr(self, name)) == self.J, f"{name} needs {self.J} entries")
        for i in range(self.J):
            need(self.beta_min[i] < self.beta_max[i], f"beta_min[{i}] must be below beta_max[{i}]")
            need(self.A[i] > 0 and self.P_sp_max[i] > 0, f"A[{i}] and P_sp_max[{i}] must be positive")
        need(self.tau >= 0, "tau must be non-negative")

    def with_(self, **changes) -> "SystemParams":
        p = replace(self, **changes)
        p.validate()
        return p


PER_BUILDING = ("beta_min", "beta_max", "beta_init", "A", "P_sp_max")


@dataclass
class EnvState:
    B: float
    Q_th: float
    H: float
    beta_in: tuple[float, ...]
    I_el_on: bool = False
    I_fc_on: bool = False
    t: int = 0

    @classmethod
    def initial(cls, params: SystemParams) -> "EnvState":
        return cls(B=params.B_init, Q_th=params.Q_th_init, H=params.H_init,
                   beta_in=tuple(params.beta_init))

    def copy(self) -> "EnvState":
        return replace(self)

    def check(self, params: SystemParams) -> None:
        if not params.B_min - BOUND_TOL <= self.B <= params.B_max + BOUND_TOL:
            raise StateCorruptionError(f"B={self.B} outside [{params.B_min}, {params.B_max}]")
        if not -BOUND_TOL <= self.Q_th <= params.Q_th_max + BOUND_TOL:
            raise StateCorruptionError(f"Q_th={self.Q_th} outside [0, {params.Q_th_max}]")
        if not -BOUND_TOL <= self.H <= params.H_max + BOUND_TOL:
            raise StateCorruptionError(f"H={self.H} outside [0, {params.H_max}]")
        if self.I_el_on and self.I_fc_on:
            raise StateCorruptionError("electrolyzer and fuel cell both on")


@dataclass(frozen=True)
class ExogenousSlot:
    v: float
    kappa_l: float
    P_load: float
    mu_e: float
    beta_out: float
    lambda_g: float
    disturbance: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.v > 0:
            raise InputValidationError(f"buying price must be positive, got {self.v}")
        if self.P_load < 0:
            raise InputValidationError(f"load must be non-negative, got {self.P_load}")
        if self.kappa_l < 0:
            raise InputValidationError(f"irradiance must be non-negative, got {self.kappa_l}")


@dataclass(frozen=True)
class RepairedAction:
    P_bc: float = 0.0
    P_bd: float = 0.0
    P_el: float = 0.0
    P_fc: float = 0.0
    P_sp: tuple[float, ...] = ()

    @classmethod
    def idle(cls, J: int) -> "RepairedAction":
        return cls(P_sp=(0.0,) * J)

    def violations(self, params: SystemParams, state: EnvState | None = None) -> list[str]:
        """List every broken invariant; empty when the action is admissible."""
        bad = []
        if not 0.0 <= self.P_bc <= params.P_bc_max:
            bad.append("P_bc out of [0, P_bc_max]")
        if not -params.P_bd_max <= self.P_bd <= 0.0:
            bad.append("P_bd out of [-P_bd_max, 0]")
        if self.P_bc * self.P_bd != 0.0:
            bad.append("BESS charges and discharges")
        if not 0.0 <= self.P_el <= params.P_el_max:
            bad.append("P_el out of [0, P_el_max]")
        if not -params.P_fc_max <= self.P_fc <= 0.0:
            bad.append("P_fc out of [-P_fc_max, 0]")
        if self.P_el * self.P_fc != 0.0:
            bad.append("electrolyzer and fuel cell both run")
        if len(self.P_sp) != params.J:
            bad.append("P_sp has wrong length")
        for i, p in enumerate(self.P_sp):
            if not 0.0 <= p <= params.P_sp_max[i]:
                bad.append(f"P_sp[{i}] out of [0, P_sp_max]")
        if state is not None:
            dt = params.delta_t
            b_next = state.B + (params.eta_bc * self.P_bc + self.P_bd / params.eta_bd) * dt
            if not params.B_min - BOUND_TOL <= b_next <= params.B_max + BOUND_TOL:
                bad.append("battery level would leave its bounds")
            h_next = state.H + self.P_el * params.omega_el * dt + self.P_fc * dt / params.omega_fc
            if not -BOUND_TOL <= h_next <= params.H_max + BOUND_TOL:
                bad.append("hydrogen level would leave its bounds")
        return bad


@dataclass(frozen=True)
class HessResult:
    H: float
    P_el: float
    P_fc: float
    Q_fc: float
    el_on: bool
    fc_on: bool
    el_su: int
    el_sd: int
    fc_su: int
    fc_sd: int


@dataclass(frozen=True)
class HeatDispatch:
    P_gb: float
    P_tc: float
    P_td: float
    P_thermal: float
    P_sp_actual: tuple[float, ...]


@dataclass(frozen=True)
class SlotSettlement:
    P_pv: float
    P_g: float
    P_gb: float
    P_tc: float
    P_td: float
    Q_fc: float
    P_thermal: float
    P_sp_actual: tuple[float, ...]
    P_bc: float
    P_bd: float
    P_el: float
    P_fc: float
    C1: float
    C2: float
    C3: float
    C4: float
    C5: float
    C6: float
    xi: float
    temp_dev: tuple[float, ...]

    @property
    def costs(self) -> tuple[float, float, float, float, float, float]:
        return (self.C1, self.C2, self.C3, self.C4, self.C5, self.C6)

    @property
    def total_cost(self) -> float:
        return self.C1 + self.C2 + self.C3 + self.C4 + self.C5 + self.C6

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def pv_output(kappa_l: float, params: SystemParams) -> float:
    if kappa_l < 0:
        raise InputValidationError(f"irradiance must be non-negative, got {kappa_l}")
    return params.eta_pv * params.h_pv * kappa_l


def bess_window(B: float, params: SystemParams) -> tuple[float, float]:
    """Admissible (most negative, most positive) battery power from level ``B``."""
    dt = params.delta_t
    lo = max(-params.P_bd_max, (params.B_min - B) * params.eta_bd / dt)
    hi = min(params.P_bc_max, (params.B_max - B) / (params.eta_bc * dt))
    return min(lo, 0.0), max(hi, 0.0)


def hess_window(H: float, params: SystemParams) -> tuple[float, float]:
    """Admissible (most negative fuel-cell, most positive electrolyzer) power from level ``H``."""
    dt = params.delta_t
    lo = max(-params.P_fc_max, -H * params.omega_fc / dt)
    hi = min(params.P_el_max, (params.H_max - H) / (params.omega_el * dt))
    return min(lo, 0.0), max(hi, 0.0)


def bess_step(B: float, a_b: float, params: SystemParams) -> tuple[float, float, float]:
    """Advance the battery one slot under signed power ``a_b``; returns (B', P_bc, P_bd)."""
    if not params.B_min - BOUND_TOL <= B <= params.B_max + BOUND_TOL:
        raise StateCorruptionError(f"battery level {B} outside [{params.B_min}, {params.B_max}]")
    lo, hi = bess_window(B, params)
    P_bc = min(a_b, hi) if a_b > 0 else 0.0
    P_bd = max(a_b, lo) if a_b < 0 else 0.0
    B_next = B + (params.eta_bc * P_bc + P_bd / params.eta_bd) * params.delta_t
    return _clamp(B_next, params.B_min, params.B_max), P_bc, P_bd


def cwt_step(Q: float, P_tc: float, P_td: float, params: SystemParams) -> float:
    Q_next = Q + (P_tc * params.eta_tc + P_td / params.eta_td) * params.delta_t
    if not -BOUND_TOL <= Q_next <= params.Q_th_max + BOUND_TOL:
        raise DispatchError(f"tank level {Q_next} outside [0, {params.Q_th_max}] after dispatch")
    return _clamp(Q_next, 0.0, params.Q_th_max)


def hess_step(H: float, a_h: float, prev_el_on: bool, prev_fc_on: bool, params: SystemParams) -> HessResult:
    """Advance the hydrogen system one slot under signed power ``a_h``.

    Fuel-cell heat is reported as a non-negative energy over the slot.
    """
    if not -BOUND_TOL <= H <= params.H_max + BOUND_TOL:
        raise StateCorruptionError(f"hydrogen level {H} outside [0, {params.H_max}]")
    dt = params.delta_t
    lo, hi = hess_window(H, params)
    P_el = min(a_h, hi) if a_h > 0 else 0.0
    P_fc = max(a_h, lo) if a_h < 0 else 0.0
    H_next = H + P_el * params.omega_el * dt + P_fc * dt / params.omega_fc
    Q_fc = params.eta_hr * params.eta_h2e * abs(P_fc) * dt
    el_on, fc_on = P_el > 0, P_fc < 0
    return HessResult(
        H=_clamp(H_next, 0.0, params.H_max), P_el=P_el, P_fc=P_fc, Q_fc=Q_fc,
        el_on=el_on, fc_on=fc_on,
        el_su=max(int(el_on) - int(prev_el_on), 0), el_sd=max(int(prev_el_on) - int(el_on), 0),
        fc_su=max(int(fc_on) - int(prev_fc_on), 0), fc_sd=max(int(prev_fc_on) - int(fc_on), 0),
    )


def building_thermal_step(beta_in: float, beta_out: float, P_sp_actual: float, disturbance: float,
                          params: SystemParams, i: int) -> float:
    if P_sp_actual < 0:
        raise InputValidationError("cooling input must be non-negative")
    eps = params.eps_hvac
    return eps * beta_in + (1.0 - eps) * (beta_out - P_sp_actual * params.eta_hvac / params.A[i]) + disturbance


def dispatch_heat(Q_fc: float, P_sp: Sequence[float], Q_th: float, params: SystemParams) -> HeatDispatch:
    """Decide gas boiler and tank flows once fuel-cell heat and cooling requests are known.

    Fuel-cell heat beyond the requested cooling charges the tank; a shortfall is
    covered first by the tank and then by the boiler. Boiler heat and fuel-cell
    heat reach the buildings through the absorption chiller (factor eta_h2c), so
    the cooling balance holds whatever the caps. Requests beyond the available
    cooling are scaled down pro rata.
    """
    dt = params.delta_t
    eta = params.eta_h2c
    demand = float(sum(P_sp))
    fc_cool = Q_fc * eta  # kWh of cooling from fuel-cell heat
    if fc_cool > demand * dt:
        P_td = P_gb = 0.0
        P_tc = min(fc_cool / dt - demand, params.P_tc_max, (params.Q_th_max - Q_th) / (params.eta_tc * dt))
        P_tc = max(P_tc, 0.0)
    else:
        P_tc = 0.0
        released = max(min(demand * dt - fc_cool, params.P_td_max * dt, Q_th * params.eta_td), 0.0)
        P_td = -released / dt
        P_gb = _clamp((demand - fc_cool / dt + P_td) / eta, 0.0, params.P_gb_max)
    # cooling that actually reaches the buildings
    P_thermal = P_gb * eta - P_td + fc_cool / dt - P_tc
    if demand > P_thermal:
        scale = max(P_thermal, 0.0) / demand
        actual = tuple(p * scale for p in P_sp)
    else:
        actual = tuple(float(p) for p in P_sp)
    return HeatDispatch(P_gb=P_gb, P_tc=P_tc, P_td=P_td, P_thermal=P_thermal, P_sp_actual=actual)


def grid_cost(P_g: float, v: float, tau: float, dt: float) -> float:
    return (v * P_g if P_g >= 0 else tau * P_g) * dt


def hess_cost(h: HessResult, params: SystemParams) -> float:
    p = params
    return (p.delta_el_on * h.el_on + p.delta_el_su * h.el_su + p.delta_el_sd * h.el_sd
            + p.delta_fc_on * h.fc_on + p.delta_fc_su * h.fc_su + p.delta_fc_sd * h.fc_sd)


def settle_slot(state: EnvState, action: RepairedAction, exo: ExogenousSlot,
                params: SystemParams) -> tuple[EnvState, SlotSettlement]:
    """Execute one slot. ``state`` is left untouched; the successor state is returned."""
    dt = params.delta_t
    J = params.J
    if len(action.P_sp) != J:
        raise InputValidationError(f"action carries {len(action.P_sp)} cooling inputs for {J} buildings")
    P_pv = pv_output(exo.kappa_l, params)

    h = hess_step(state.H, action.P_el + action.P_fc, state.I_el_on, state.I_fc_on, params)
    B_next, P_bc, P_bd = bess_step(state.B, action.P_bc + action.P_bd, params)
    heat = dispatch_heat(h.Q_fc, action.P_sp, state.Q_th, params)
    Q_next = cwt_step(state.Q_th, heat.P_tc, heat.P_td, params)

    dist = exo.disturbance or (0.0,) * J
    beta_next = tuple(
        building_thermal_step(state.beta_in[i], exo.beta_out, heat.P_sp_actual[i], dist[i], params, i)
        for i in range(J)
    )
    temp_dev = tuple(max(b - params.beta_max[i], 0.0) + max(params.beta_min[i] - b, 0.0)
                     for i, b in enumerate(beta_next))

    # electric balance solved for the grid exchange
    P_g = h.P_el + exo.P_load + P_bc - P_pv + h.P_fc + P_bd

    C1 = grid_cost(P_g, exo.v, params.tau, dt)
    C2 = params.mu_c * exo.mu_e * P_g * dt
    C3 = params.psi_bess * (abs(P_bc) + abs(P_bd))
    C4 = hess_cost(h, params)
    C5 = params.psi_cwt * (abs(heat.P_tc) + abs(heat.P_td))
    C6 = exo.lambda_g * heat.P_gb * dt / params.eta_gb
    eta = params.eta_h2c
    slack = h.Q_fc * eta - (heat.P_tc + heat.P_td + sum(heat.P_sp_actual) - heat.P_gb * eta) * dt
    xi = params.pi_fc * slack

    new_state = EnvState(B=B_next, Q_th=Q_next, H=h.H, beta_in=beta_next,
                         I_el_on=h.el_on, I_fc_on=h.fc_on, t=state.t + 1)
    settlement = SlotSettlement(
        P_pv=P_pv, P_g=P_g, P_gb=heat.P_gb, P_tc=heat.P_tc, P_td=heat.P_td, Q_fc=h.Q_fc,
        P_thermal=heat.P_thermal, P_sp_actual=heat.P_sp_actual,
        P_bc=P_bc, P_bd=P_bd, P_el=h.P_el, P_fc=h.P_fc,
        C1=C1, C2=C2, C3=C3, C4=C4, C5=C5, C6=C6, xi=xi, temp_dev=temp_dev,
    )
    return new_state, settlement


def electric_residual(s: SlotSettlement, P_load: float) -> float:
    return abs((s.P_g + s.P_pv - s.P_fc - s.P_bd) - (s.P_el + P_load + s.P_bc))


def cooling_slack(s: SlotSettlement, params: SystemParams) -> float:
    """Left side minus right side of the cooling balance; must be >= 0."""
    eta = params.eta_h2c
    return s.Q_fc * eta - (s.P_tc + s.P_td + sum(s.P_sp_actual) - s.P_gb * eta) * params.delta_t
