"""Scenario files: flat typed key-value sections, one section per scenario.

The configuration format is INI; every key is typed by the schema below and
units are explicit at this boundary (Mbps, ms, Mb).  There are no implicit
defaults for the window, the delay, epsilon or the seed: reproducibility
demands that they be written down.

Example::

    [vbr-curves]
    kind = service-curve
    seed = 1
    service = exponential
    service_rate_mbps = 1000
    w_over_d_mbps = 100
    d_ms = 1 2 5 10
    epsilon = 1e-6
    horizon_ms = 100

Supported ``service`` values: deterministic, exponential, mmoo, leftover
(deterministic base with exponential cross traffic).  Supported ``arrival``
values: exponential, deterministic.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from . import units
from .models import (
    DeterministicService,
    ExponentialArrivals,
    ExponentialVbrService,
    LeftoverService,
    MmooService,
)

__all__ = ["Scenario", "ScenarioError", "load_scenarios", "parse_scenario_text"]

KINDS = ("service-curve", "effective-capacity", "backlog", "simulate")


class ScenarioError(ValueError):
    """Configuration error carrying the section and key that caused it."""

    def __init__(self, section: str, key: str, message: str):
        super().__init__(f"[{section}] {key}: {message}")
        self.section = section
        self.key = key


@dataclass
class Scenario:
    """One resolved experiment; all quantities already in internal units."""

    name: str
    kind: str
    seed: int
    slot_ms: float
    service: object
    d_slots: List[int] = field(default_factory=list)
    w_mb: List[float] = field(default_factory=list)
    epsilon: float = 1e-6
    epsilons: List[float] = field(default_factory=list)
    horizon_slots: int = 0
    theta_min: float = 1e-4
    theta_max: float = 1e3
    theta_points: int = 64
    arrivals: Optional[object] = None
    lambdas_mb: List[float] = field(default_factory=list)
    total_slots: int = 0
    warmup_slots: int = 0
    replications: int = 1
    simulate: bool = False


class _Section:
    def __init__(self, name: str, raw: Dict[str, str]):
        self.name = name
        self.raw = dict(raw)
        self.used: set[str] = set()

    def has(self, key: str) -> bool:
        return key in self.raw

    def _fetch(self, key: str) -> str:
        if key not in self.raw:
            raise ScenarioError(self.name, key, "required key is missing")
        self.used.add(key)
        return self.raw[key]

    def text(self, key: str, choices=None) -> str:
        value = self._fetch(key).strip()
        if choices is not None and value not in choices:
            raise ScenarioError(self.name, key, f"must be one of {sorted(choices)}, got {value!r}")
        return value

    def real(self, key: str, default: Optional[float] = None, positive: bool = False) -> float:
        if key not in self.raw and default is not None:
            return default
        raw = self._fetch(key)
        try:
            value = float(raw)
        except ValueError as exc:
            raise ScenarioError(self.name, key, f"not a number: {raw!r}") from exc
        if positive and value <= 0:
            raise ScenarioError(self.name, key, "must be > 0")
        return value

    def integer(self, key: str, default: Optional[int] = None, minimum: Optional[int] = None) -> int:
        if key not in self.raw and default is not None:
            return default
        raw = self._fetch(key)
        try:
            value = int(raw)
        except ValueError as exc:
            raise ScenarioError(self.name, key, f"not an integer: {raw!r}") from exc
        if minimum is not None and value < minimum:
            raise ScenarioError(self.name, key, f"must be >= {minimum}")
        return value

    def reals(self, key: str, positive: bool = False) -> List[float]:
        tokens = self._fetch(key).split()
        if not tokens:
            raise ScenarioError(self.name, key, "empty list")
        try:
            values = [float(tok) for tok in tokens]
        except ValueError as exc:
            raise ScenarioError(self.name, key, "not a list of numbers") from exc
        if positive and any(v <= 0 for v in values):
            raise ScenarioError(self.name, key, "entries must be > 0")
        return values

    def flag(self, key: str, default: bool = False) -> bool:
        if key not in self.raw:
            return default
        value = self._fetch(key).strip().lower()
        if value in ("true", "yes", "1", "on"):
            return True
        if value in ("false", "no", "0", "off"):
            return False
        raise ScenarioError(self.name, key, f"not a boolean: {value!r}")

    def reject_unknown(self):
        unknown = set(self.raw) - self.used
        if unknown:
            raise ScenarioError(self.name, sorted(unknown)[0], "unknown key")


def _build_service(sec: _Section, slot_ms: float):
    kind = sec.text("service", choices={"deterministic", "exponential", "mmoo", "leftover"})
    if kind == "deterministic":
        return DeterministicService(
            units.mbps_to_mb_per_slot(sec.real("service_rate_mbps", positive=True), slot_ms)
        )
    if kind == "exponential":
        return ExponentialVbrService(
            units.mbps_to_mb_per_slot(sec.real("service_rate_mbps", positive=True), slot_ms)
        )
    if kind == "mmoo":
        return MmooService(
            p00=sec.real("mmoo_p00"),
            p11=sec.real("mmoo_p11"),
            peak=units.mbps_to_mb_per_slot(sec.real("mmoo_peak_mbps", positive=True), slot_ms),
        )
    base = DeterministicService(
        units.mbps_to_mb_per_slot(sec.real("service_rate_mbps", positive=True), slot_ms)
    )
    cross = ExponentialArrivals(
        units.mbps_to_mb_per_slot(sec.real("cross_rate_mbps", positive=True), slot_ms)
    )
    return LeftoverService(base, cross)


def _build_arrivals(sec: _Section, slot_ms: float):
    kind = sec.text("arrival", choices={"deterministic", "exponential"})
    rate = units.mbps_to_mb_per_slot(sec.real("arrival_rate_mbps", positive=True), slot_ms)
    if kind == "deterministic":
        return DeterministicService(rate)
    return ExponentialArrivals(rate)


def _feedback_lists(sec: _Section, slot_ms: float) -> tuple[List[int], List[float]]:
    d_slots = [units.ms_to_slots(d, slot_ms) for d in sec.reals("d_ms", positive=True)]
    if any(d < 1 for d in d_slots):
        raise ScenarioError(sec.name, "d_ms", "delays must be at least one slot")
    if sec.has("w_over_d_mbps") and sec.has("w_mb"):
        raise ScenarioError(sec.name, "w_mb", "give either w_mb or w_over_d_mbps, not both")
    if sec.has("w_over_d_mbps"):
        ratio = units.mbps_to_mb_per_slot(sec.real("w_over_d_mbps", positive=True), slot_ms)
        w_mb = [ratio * d for d in d_slots]
    else:
        w_mb = sec.reals("w_mb", positive=True)
        if len(w_mb) != len(d_slots):
            raise ScenarioError(sec.name, "w_mb", "needs one window per delay entry")
    return d_slots, w_mb


def _theta_spec(sec: _Section) -> tuple[float, float, int]:
    tmin = sec.real("theta_min_per_mb", default=1e-4, positive=True)
    tmax = sec.real("theta_max_per_mb", default=1e3, positive=True)
    points = sec.integer("theta_points", default=64, minimum=2)
    if tmax <= tmin:
        raise ScenarioError(sec.name, "theta_max_per_mb", "must exceed theta_min_per_mb")
    return tmin, tmax, points


def _parse_section(name: str, raw: Dict[str, str]) -> Scenario:
    sec = _Section(name, raw)
    kind = sec.text("kind", choices=set(KINDS))
    seed = sec.integer("seed")
    slot_ms = sec.real("slot_ms", default=1.0, positive=True)
    service = _build_service(sec, slot_ms)
    out = Scenario(name=name, kind=kind, seed=seed, slot_ms=slot_ms, service=service)

    if kind in ("service-curve", "effective-capacity"):
        out.d_slots, out.w_mb = _feedback_lists(sec, slot_ms)
        out.theta_min, out.theta_max, out.theta_points = _theta_spec(sec)
        if kind == "service-curve":
            out.epsilon = sec.real("epsilon", positive=True)
            out.horizon_slots = units.ms_to_slots(sec.real("horizon_ms", positive=True), slot_ms)
    elif kind == "backlog":
        d_slots, w_mb = _feedback_lists(sec, slot_ms)
        if len(d_slots) != 1:
            raise ScenarioError(name, "d_ms", "backlog scenarios take one (w, d) pair")
        out.d_slots, out.w_mb = d_slots, w_mb
        out.epsilons = sec.reals("epsilons", positive=True)
        out.lambdas_mb = [
            units.mbps_to_mb_per_slot(lam, slot_ms)
            for lam in sec.reals("lambda_mbps", positive=True)
        ]
        out.theta_min, out.theta_max, out.theta_points = _theta_spec(sec)
        out.simulate = sec.flag("simulate", default=False)
        if out.simulate:
            out.total_slots = sec.integer("sim_slots", minimum=2)
            out.warmup_slots = sec.integer("sim_warmup", minimum=0)
            out.replications = sec.integer("sim_replications", default=1, minimum=1)
    else:  # simulate
        out.d_slots, out.w_mb = _feedback_lists(sec, slot_ms)
        if len(out.d_slots) != 1:
            raise ScenarioError(name, "d_ms", "simulate scenarios take one (w, d) pair")
        out.arrivals = _build_arrivals(sec, slot_ms)
        out.total_slots = sec.integer("total_slots", minimum=2)
        out.warmup_slots = sec.integer("warmup_slots", minimum=0)
        out.replications = sec.integer("replications", default=1, minimum=1)
    sec.reject_unknown()
    return out


def parse_scenario_text(text: str) -> List[Scenario]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(text)
    return [_parse_section(name, dict(parser[name])) for name in parser.sections()]


def load_scenarios(path: str) -> List[Scenario]:
    parser = configparser.ConfigParser(interpolation=None)
    with open(path, "r", encoding="utf-8") as handle:
        parser.read_file(handle)
    return [_parse_section(name, dict(parser[name])) for name in parser.sections()]


# ---------------------------------------------------------------------------
# canned parameter studies reproducing the standard evaluation figures
# ---------------------------------------------------------------------------

_VBR_SERVICE = """
service = exponential
service_rate_mbps = 1000
"""

_MMOO_SERVICE = """
service = mmoo
mmoo_p00 = 0.2
mmoo_p11 = 0.9
mmoo_peak_mbps = 1125
"""

CANNED: Dict[str, str] = {
    "fig4": f"""
[fig4a-vbr-curves-100]
kind = service-curve
seed = 20211
{_VBR_SERVICE}
w_over_d_mbps = 100
d_ms = 1 2 5 10
epsilon = 1e-6
horizon_ms = 100

[fig4b-vbr-curves-500]
kind = service-curve
seed = 20212
{_VBR_SERVICE}
w_over_d_mbps = 500
d_ms = 1 2 5 10
epsilon = 1e-6
horizon_ms = 100
""",
    "fig5": f"""
[fig5a-vbr-effcap-100]
kind = effective-capacity
seed = 20213
{_VBR_SERVICE}
w_over_d_mbps = 100
d_ms = 1 2 5 10

[fig5b-vbr-effcap-500]
kind = effective-capacity
seed = 20214
{_VBR_SERVICE}
w_over_d_mbps = 500
d_ms = 1 2 5 10
""",
    "fig6": f"""
[fig6a-mmoo-curves-100]
kind = service-curve
seed = 20215
{_MMOO_SERVICE}
w_over_d_mbps = 100
d_ms = 1 2 5 10
epsilon = 1e-6
horizon_ms = 100

[fig6b-mmoo-curves-500]
kind = service-curve
seed = 20216
{_MMOO_SERVICE}
w_over_d_mbps = 500
d_ms = 1 2 5 10
epsilon = 1e-6
horizon_ms = 100
""",
    "fig7": f"""
[fig7a-mmoo-effcap-100]
kind = effective-capacity
seed = 20217
{_MMOO_SERVICE}
w_over_d_mbps = 100
d_ms = 1 2 5 10

[fig7b-mmoo-effcap-500]
kind = effective-capacity
seed = 20218
{_MMOO_SERVICE}
w_over_d_mbps = 500
d_ms = 1 2 5 10
""",
    "fig8": f"""
[fig8a-vbr-backlog-100]
kind = backlog
seed = 20219
{_VBR_SERVICE}
d_ms = 1
w_mb = 0.1
lambda_mbps = 10 20 30 40 50 60 70 80 85 90 92 94
epsilons = 1e-3 1e-6 1e-9

[fig8b-vbr-backlog-500]
kind = backlog
seed = 20220
{_VBR_SERVICE}
d_ms = 1
w_mb = 0.5
lambda_mbps = 50 100 150 200 250 300 330 360 380 390
epsilons = 1e-3 1e-6 1e-9
""",
}


def canned_scenarios(figure: str) -> List[Scenario]:
    if figure not in CANNED:
        raise ValueError(f"unknown canned study {figure!r}; choose from {sorted(CANNED)}")
    return parse_scenario_text(CANNED[figure])
