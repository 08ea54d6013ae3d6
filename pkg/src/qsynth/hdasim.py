"""Closed-form toluene hydrodealkylation (HDA) evaluator.

Replaces a rigorous flowsheet simulation with fixed unit behaviours whose
constants live in :class:`Calibration`.  With the defaults the heater ->
reactor train is the unique optimum (0.225 mol/s benzene at purity 0.75,
reward 1350).
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .flowsheet import FlowsheetState, Reason, ScreenResult, Unit

SPECIES = ("h2", "toluene", "ch4", "benzene")


@dataclass(frozen=True)
class Calibration:
    feed_temperature: float = 303.2  # K
    feed_pressure: float = 350.0  # kPa
    feed_h2: float = 0.30  # mol/s
    feed_toluene: float = 0.30
    feed_ch4: float = 0.02
    feed_benzene: float = 0.0
    heater_setpoint: float = 550.0
    cooler_setpoint: float = 400.0
    reactor_t_min: float = 500.0
    reactor_t_max: float = 600.0
    reactor_conversion: float = 0.75
    # vapour fraction of the aromatics: full above t_full, partial above t_partial
    vapor_t_full: float = 450.0
    vapor_t_partial: float = 350.0
    vapor_benzene_partial: float = 0.70
    vapor_toluene_partial: float = 0.10
    vapor_benzene_cold: float = 0.02
    vapor_toluene_cold: float = 0.02
    purity_spec: float = 0.55
    min_product_flow: float = 0.1
    reward_scale: float = 8000.0
    penalty: float = -10.0
    spec_fail_reward: float = 0.0

    @classmethod
    def from_overrides(cls, overrides: dict) -> "Calibration":
        known = {f.name for f in fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise KeyError(f"unknown calibration keys: {sorted(unknown)}")
        return replace(cls(), **{k: float(v) for k, v in overrides.items()})


DEFAULT = Calibration()
_PASSED = ScreenResult(True, Reason.OK)


@dataclass(frozen=True)
class Stream:
    temperature: float
    pressure: float
    h2: float
    toluene: float
    ch4: float
    benzene: float

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if min(self.h2, self.toluene, self.ch4, self.benzene) < 0:
            raise ValueError("molar flows must be non-negative")


@dataclass(frozen=True)
class SimResult:
    converged: bool
    benzene_product_flow: float
    product_purity: float
    spec_met: bool
    reward: float


def mixed_feed(cal: Calibration = DEFAULT) -> Stream:
    return Stream(
        cal.feed_temperature,
        cal.feed_pressure,
        cal.feed_h2,
        cal.feed_toluene,
        cal.feed_ch4,
        cal.feed_benzene,
    )


def unit_step(stream: Stream, unit: Unit, cal: Calibration = DEFAULT) -> Stream | None:
    """Outlet stream of ``unit``, or ``None`` when the unit cannot converge."""
    if unit is Unit.HEATER:
        return replace(stream, temperature=cal.heater_setpoint)
    if unit is Unit.COOLER:
        return replace(stream, temperature=cal.cooler_setpoint)
    if unit is Unit.HEAT_EXCHANGER:
        # a two-sided exchanger has no partner stream in a serial train
        return None
    if unit is Unit.REACTOR:
        hot_enough = cal.reactor_t_min <= stream.temperature <= cal.reactor_t_max
        if not (hot_enough and stream.h2 > 0 and stream.toluene > 0):
            return stream
        extent = cal.reactor_conversion * min(stream.toluene, stream.h2)
        return replace(
            stream,
            toluene=stream.toluene - extent,
            h2=stream.h2 - extent,
            benzene=stream.benzene + extent,
            ch4=stream.ch4 + extent,
        )
    raise ValueError(f"unknown unit {unit!r}")


def vapor_product(stream: Stream, cal: Calibration = DEFAULT) -> Stream:
    t = stream.temperature
    if t >= cal.vapor_t_full:
        fb = ft = 1.0
    elif t >= cal.vapor_t_partial:
        fb, ft = cal.vapor_benzene_partial, cal.vapor_toluene_partial
    else:
        fb, ft = cal.vapor_benzene_cold, cal.vapor_toluene_cold
    return replace(stream, benzene=fb * stream.benzene, toluene=ft * stream.toluene)


def reward(screen_result: ScreenResult, sim: SimResult | None, cal: Calibration = DEFAULT) -> float:
    if not screen_result.passed or sim is None:
        return cal.penalty
    if not sim.spec_met:
        return cal.spec_fail_reward
    return round(cal.reward_scale * sim.benzene_product_flow * sim.product_purity, 9)


def evaluate(state: FlowsheetState, cal: Calibration = DEFAULT) -> SimResult:
    stream = mixed_feed(cal)
    for unit in state.units():
        stream = unit_step(stream, unit, cal)
        if stream is None:
            return SimResult(False, 0.0, 0.0, False, cal.spec_fail_reward)
    product = vapor_product(stream, cal)
    aromatics = product.benzene + product.toluene
    purity = product.benzene / aromatics if aromatics > 0 else 0.0
    # rounding strips float residue so the optimum reads exactly 0.225 / 0.75 / 1350
    flow = round(product.benzene, 12)
    purity = round(purity, 12)
    spec_met = purity > cal.purity_spec and flow >= cal.min_product_flow
    sim = SimResult(True, flow, purity, spec_met, 0.0)
    return replace(sim, reward=reward(_PASSED, sim, cal))
