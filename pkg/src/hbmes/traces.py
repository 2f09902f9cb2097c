"""Exogenous time series: CSV ingestion, validation, splitting, synthesis, statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .env import ExogenousSlot, SystemParams
from .errors import ConfigurationError, TraceLoadError

COLUMNS = ("t", "price_buy", "load_kw", "irradiance_kw_m2", "temp_out", "emission_kg_kwh", "gas_price")
# series attribute name for every data column
SERIES = {
    "price_buy": "price",
    "load_kw": "load",
    "irradiance_kw_m2": "irradiance",
    "temp_out": "temp_out",
    "emission_kg_kwh": "emission",
    "gas_price": "gas_price",
}


@dataclass(frozen=True)
class TraceSet:
    price: np.ndarray
    load: np.ndarray
    irradiance: np.ndarray
    temp_out: np.ndarray
    emission: np.ndarray
    gas_price: np.ndarray
    slot_hours: float = 1.0
    role: str = "train"
    # optional (n, J) array of per-building thermal disturbances
    disturbance: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.price)
        for name in SERIES.values():
            arr = getattr(self, name)
            if len(arr) != n:
                raise TraceLoadError(f"series {name} has length {len(arr)}, expected {n}")
            if not np.all(np.isfinite(arr)):
                raise TraceLoadError(f"series {name} contains non-finite values")
        if np.any(self.price <= 0):
            raise TraceLoadError("buying prices must be positive")
        if np.any(self.load < 0) or np.any(self.irradiance < 0):
            raise TraceLoadError("loads and irradiance must be non-negative")
        if self.disturbance is not None and self.disturbance.shape[0] != n:
            raise TraceLoadError("disturbance rows do not match trace length")

    def __len__(self) -> int:
        return len(self.price)

    def slot(self, k: int, disturbance: Sequence[float] | None = None) -> ExogenousSlot:
        if disturbance is None and self.disturbance is not None:
            disturbance = self.disturbance[k]
        return ExogenousSlot(
            v=float(self.price[k]), kappa_l=float(self.irradiance[k]), P_load=float(self.load[k]),
            mu_e=float(self.emission[k]), beta_out=float(self.temp_out[k]), lambda_g=float(self.gas_price[k]),
            disturbance=tuple(float(d) for d in disturbance) if disturbance is not None else (),
        )

    def window(self, start: int, stop: int, role: str | None = None) -> "TraceSet":
        dist = None if self.disturbance is None else self.disturbance[start:stop]
        return TraceSet(
            **{name: getattr(self, name)[start:stop].copy() for name in SERIES.values()},
            slot_hours=self.slot_hours, role=role or self.role, disturbance=dist,
        )

    def days(self, slots_per_day: int) -> int:
        return len(self) // slots_per_day


def check_selling_price(ts: TraceSet, params: SystemParams) -> None:
    """The selling price must sit strictly below every buying price."""
    if len(ts) and params.tau >= float(ts.price.min()):
        raise TraceLoadError(
            f"selling price tau={params.tau} must be below the minimum buying price {float(ts.price.min())}"
        )


def load_traces(path: str | Path, params: SystemParams | None = None, role: str = "train",
                slot_hours: float = 1.0) -> TraceSet:
    """Read one CSV trace file. Extra ``disturbance_<i>`` columns are picked up when present."""
    path = Path(path)
    if not path.exists():
        raise TraceLoadError(f"trace file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise TraceLoadError(f"{path}: empty file") from None
        missing = [c for c in COLUMNS if c not in header]
        if missing:
            raise TraceLoadError(f"{path}: missing column(s) {', '.join(missing)}")
        dist_cols = sorted((h for h in header if h.startswith("disturbance_")),
                           key=lambda h: int(h.split("_")[1]))
        idx = {h: header.index(h) for h in header}
        data: dict[str, list[float]] = {c: [] for c in COLUMNS[1:] + tuple(dist_cols)}
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            for col in data:
                raw = row[idx[col]] if idx[col] < len(row) else ""
                try:
                    val = float(raw)
                except ValueError:
                    raise TraceLoadError(f"{path}: row {row_no}, column {col}: not a number: {raw!r}") from None
                if not math.isfinite(val):
                    raise TraceLoadError(f"{path}: row {row_no}, column {col}: non-finite value")
                if col == "price_buy" and val <= 0:
                    raise TraceLoadError(f"{path}: row {row_no}, column {col}: price must be positive, got {val}")
                if col in ("load_kw", "irradiance_kw_m2") and val < 0:
                    raise TraceLoadError(f"{path}: row {row_no}, column {col}: negative value {val}")
                data[col].append(val)
    arrays = {SERIES[c]: np.asarray(data[c], dtype=float) for c in COLUMNS[1:]}
    dist = np.column_stack([data[c] for c in dist_cols]) if dist_cols else None
    ts = TraceSet(**arrays, slot_hours=slot_hours, role=role, disturbance=dist)
    if params is not None:
        check_selling_price(ts, params)
    return ts


def save_traces(ts: TraceSet, path: str | Path) -> None:
    """Write ``ts`` in the CSV schema. ``repr`` keeps floats round-trippable."""
    header = list(COLUMNS)
    if ts.disturbance is not None:
        header += [f"disturbance_{i + 1}" for i in range(ts.disturbance.shape[1])]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(len(ts)):
            row = [str(k)] + [repr(float(getattr(ts, SERIES[c])[k])) for c in COLUMNS[1:]]
            if ts.disturbance is not None:
                row += [repr(float(d)) for d in ts.disturbance[k]]
            w.writerow(row)


def split_traces(ts: TraceSet, train_days: int, test_days: int, slots_per_day: int = 24) -> tuple[TraceSet, TraceSet]:
    need = (train_days + test_days) * slots_per_day
    if len(ts) < need:
        raise ConfigurationError(f"trace has {len(ts)} slots, split needs {need}")
    cut = train_days * slots_per_day
    return ts.window(0, cut, role="train"), ts.window(cut, need, role="test")


@dataclass(frozen=True)
class SynthProfile:
    """Daily shapes for synthetic traces. Zero noise gives identical days."""

    # time-of-use ladder: (price, first hour, last hour exclusive); uncovered hours get the flat level
    valley_price: float = 0.3
    flat_price: float = 0.7
    peak_price: float = 1.1
    valley_hours: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 23)
    peak_hours: tuple[int, ...] = (10, 11, 12, 13, 14, 18, 19, 20)
    load_base: float = 12.0
    load_amp: float = 5.0
    load_peak_hour: float = 19.0
    load_noise: float = 0.0
    temp_mean: float = 28.0
    temp_amp: float = 5.0
    temp_peak_hour: float = 15.0
    temp_noise: float = 0.0
    irr_peak: float = 0.8
    sunrise: float = 6.0
    sunset: float = 18.0
    irr_noise: float = 0.0
    emission: float = 0.968
    gas_price: float = 0.287
    slots_per_day: int = 24

    @property
    def levels(self) -> tuple[float, ...]:
        return (self.valley_price, self.flat_price, self.peak_price)


def synthesize_traces(days: int, seed: int, profile: SynthProfile | None = None, role: str = "train") -> TraceSet:
    if days < 1:
        raise ConfigurationError("days must be >= 1")
    p = profile or SynthProfile()
    rng = np.random.default_rng(seed)
    spd = p.slots_per_day
    n = days * spd
    hour = (np.arange(n) % spd) * (24.0 / spd)

    price = np.full(n, p.flat_price)
    h_int = hour.astype(int)
    price[np.isin(h_int, p.valley_hours)] = p.valley_price
    price[np.isin(h_int, p.peak_hours)] = p.peak_price

    load = p.load_base + p.load_amp * np.cos(2 * np.pi * (hour - p.load_peak_hour) / 24.0)
    load = np.maximum(load + p.load_noise * rng.standard_normal(n), 0.0)

    temp = p.temp_mean + p.temp_amp * np.cos(2 * np.pi * (hour - p.temp_peak_hour) / 24.0)
    temp = temp + p.temp_noise * rng.standard_normal(n)

    day_len = p.sunset - p.sunrise
    irr = p.irr_peak * np.sin(np.pi * (hour - p.sunrise) / day_len)
    irr = np.where((hour > p.sunrise) & (hour < p.sunset), irr, 0.0)
    irr = np.maximum(irr * (1.0 + p.irr_noise * rng.standard_normal(n)), 0.0)

    return TraceSet(price=price, load=load, irradiance=irr, temp_out=temp,
                    emission=np.full(n, p.emission), gas_price=np.full(n, p.gas_price), role=role)


@dataclass(frozen=True)
class DisturbanceModel:
    """Uniform thermal disturbance on [-chi, chi], drawn per building and slot."""

    chi: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.chi < 0:
            raise ConfigurationError("chi must be non-negative")

    def draw(self, n: int, J: int, rng: np.random.Generator | None = None) -> np.ndarray:
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        if self.chi == 0:
            return np.zeros((n, J))
        return rng.uniform(-self.chi, self.chi, size=(n, J))

    def attach(self, ts: TraceSet, J: int) -> TraceSet:
        """Copy of ``ts`` with a fixed disturbance column per building."""
        return TraceSet(**{name: getattr(ts, name) for name in SERIES.values()},
                        slot_hours=ts.slot_hours, role=ts.role, disturbance=self.draw(len(ts), J))


@dataclass(frozen=True)
class TraceStats:
    """Per-feature (min, max) used for min-max normalization."""

    ranges: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __getitem__(self, key: str) -> tuple[float, float]:
        return self.ranges[key]


def trace_stats(ts: TraceSet, params: SystemParams, temp_margin: float | None = None) -> TraceStats:
    """Extrema of the exogenous series plus the ranges of the state features.

    Indoor temperatures get the comfort band widened by ``temp_margin`` on each
    side (default: one band width) so excursions stay distinguishable.
    """
    if len(ts) == 0:
        raise ConfigurationError("cannot compute statistics of an empty trace")
    pv = params.eta_pv * params.h_pv * ts.irradiance
    r = {
        "v": (float(ts.price.min()), float(ts.price.max())),
        "P_pv": (float(pv.min()), float(pv.max())),
        "P_load": (float(ts.load.min()), float(ts.load.max())),
        "mu_e": (float(ts.emission.min()), float(ts.emission.max())),
        "beta_out": (float(ts.temp_out.min()), float(ts.temp_out.max())),
        "lambda_g": (float(ts.gas_price.min()), float(ts.gas_price.max())),
        "B": (params.B_min, params.B_max),
        "H": (0.0, params.H_max),
        "Q_th": (0.0, params.Q_th_max),
    }
    for i in range(params.J):
        lo, hi = params.beta_min[i], params.beta_max[i]
        m = (hi - lo) if temp_margin is None else temp_margin
        r[f"beta_in_{i}"] = (lo - m, hi + m)
    return TraceStats(ranges=r)


def iter_slots(ts: TraceSet) -> Iterator[ExogenousSlot]:
    for k in range(len(ts)):
        yield ts.slot(k)
