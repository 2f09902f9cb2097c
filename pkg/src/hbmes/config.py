"""Run configuration: an INI file with one section per concern.

Every key is optional; missing keys fall back to the reference constants.
``RunConfig.dump`` writes the fully resolved configuration back out, tagging
keys whose value differs from the default with ``# overridden``. The dump is
itself a valid input file and parses back to an equal configuration.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .env import SystemParams
from .errors import ConfigurationError
from .game import THERMOSTAT_RULES
from .madacr import DDQNConfig, TrainConfig

ALGORITHMS = ("madacr", "ddqn")
# keys driven from another section; they are neither read nor echoed
MANAGED = {("training", "chi"): "[run] chi", ("ddqn", "chi"): "[run] chi"}


@dataclass(frozen=True)
class GridConfig:
    N_bess: int = 7
    N_hess: int = 7
    N_thermal: int = 7


@dataclass(frozen=True)
class TraceConfig:
    # CSV paths; empty means "synthesize"
    train: str = ""
    test: str = ""
    synth_train_days: int = 5
    synth_test_days: int = 7
    synth_seed: int = 0
    load_noise: float = 0.0
    temp_noise: float = 0.0
    irr_noise: float = 0.0


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    out: str = "out"
    algorithm: str = "madacr"
    chi: float = 0.0
    disturbance_seed: int = 123
    thermostat_rule: str = "as_printed"
    oracle_horizon: int = 2


@dataclass
class RunConfig:
    system: SystemParams = field(default_factory=SystemParams)
    grids: GridConfig = field(default_factory=GridConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    ddqn: DDQNConfig = field(default_factory=DDQNConfig)
    traces: TraceConfig = field(default_factory=TraceConfig)
    run: RunSection = field(default_factory=RunSection)

    SECTIONS = ("system", "grids", "training", "ddqn", "traces", "run")

    def validate(self) -> None:
        self.system.validate()
        for name in ("N_bess", "N_hess", "N_thermal"):
            if getattr(self.grids, name) < 2:
                raise ConfigurationError(f"[grids] {name}: must be >= 2")
        self.training.validate()
        if self.run.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"[run] algorithm: expected one of {', '.join(ALGORITHMS)}")
        if self.run.thermostat_rule not in THERMOSTAT_RULES:
            raise ConfigurationError(f"[run] thermostat_rule: expected one of {', '.join(THERMOSTAT_RULES)}")
        if self.run.chi < 0:
            raise ConfigurationError("[run] chi: must be non-negative")
        if not 1 <= self.run.oracle_horizon <= 4:
            raise ConfigurationError("[run] oracle_horizon: must lie in 1..4")
        if self.traces.synth_train_days < 1 or self.traces.synth_test_days < 1:
            raise ConfigurationError("[traces] synthetic day counts must be >= 1")

    def with_run(self, **changes) -> "RunConfig":
        """Copy with ``[run]`` keys replaced (command-line overrides)."""
        cfg = replace(self, run=replace(self.run, **changes))
        cfg.validate()
        return cfg

    def trainer_configs(self) -> tuple[TrainConfig, DDQNConfig]:
        """Trainer settings with the shared disturbance level filled in."""
        return replace(self.training, chi=self.run.chi), replace(self.ddqn, chi=self.run.chi)

    def overridden(self) -> set[tuple[str, str]]:
        """(section, key) pairs whose value differs from the defaults."""
        default = RunConfig()
        out = set()
        for section in self.SECTIONS:
            mine, ref = getattr(self, section), getattr(default, section)
            out |= {(section, f.name) for f in fields(mine) if getattr(mine, f.name) != getattr(ref, f.name)}
        return out

    def dump(self) -> str:
        changed = self.overridden()
        lines = []
        for section in self.SECTIONS:
            lines.append(f"[{section}]")
            obj = getattr(self, section)
            for f in fields(obj):
                if (section, f.name) in MANAGED:
                    continue
                value = _format(getattr(obj, f.name))
                mark = "  # overridden" if (section, f.name) in changed else ""
                lines.append(f"{f.name} = {value}{mark}".rstrip())
            lines.append("")
        return "\n".join(lines)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dump(), encoding="utf-8")


def _format(value: Any) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(section: str, key: str, raw: str, default: Any) -> Any:
    where = f"[{section}] {key}"
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p for p in (s.strip() for s in raw.split(",")) if p]
            kind = int if default and isinstance(default[0], int) else float
            return tuple(kind(p) for p in parts)
        return raw
    except ValueError:
        kind = type(default).__name__ if not isinstance(default, tuple) else "comma-separated list"
        raise ConfigurationError(f"{where}: cannot read {raw!r} as {kind}") from None


def _section(parser: configparser.ConfigParser, name: str, template) -> dict[str, Any]:
    if not parser.has_section(name):
        return {}
    known = {f.name for f in fields(template)}
    out = {}
    for key, raw in parser.items(name):
        if (name, key) in MANAGED:
            raise ConfigurationError(f"[{name}] {key}: set {MANAGED[name, key]} instead")
        if key not in known:
            raise ConfigurationError(f"[{name}] {key}: unknown key (valid keys: {', '.join(sorted(known))})")
        out[key] = _parse(name, key, raw, getattr(template, key))
    return out


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (N_bess, T, ...)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"{source}: {exc}") from None
    unknown = set(parser.sections()) - set(RunConfig.SECTIONS)
    if unknown:
        raise ConfigurationError(f"{source}: unknown section(s) {', '.join(sorted(unknown))}")

    sys_kw = _section(parser, "system", SystemParams())
    J = sys_kw.pop("J", SystemParams.J)
    h_pv = sys_kw.pop("h_pv", SystemParams.h_pv)
    try:
        system = SystemParams.reference(J=J, h_pv=h_pv, **sys_kw)
    except TypeError as exc:
        raise ConfigurationError(f"[system]: {exc}") from None
    cfg = RunConfig(
        system=system,
        grids=GridConfig(**_section(parser, "grids", GridConfig())),
        training=TrainConfig(**_section(parser, "training", TrainConfig())),
        ddqn=DDQNConfig(**_section(parser, "ddqn", DDQNConfig())),
        traces=TraceConfig(**_section(parser, "traces", TraceConfig())),
        run=RunSection(**_section(parser, "run", RunSection())),
    )
    cfg.validate()
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        cfg = RunConfig()
        cfg.validate()
        return cfg
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))
