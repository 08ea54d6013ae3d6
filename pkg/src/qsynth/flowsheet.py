"""Flowsheet-synthesis MDP: serial unit trains, manipulations and screening.

A flowsheet is an ordered train of distinct candidate units.  Both feeds
are mixed into the head of the train and the tail unit drains to the
product.  Actions append one unit, remove the tail unit, or do nothing.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError


class Unit(str, enum.Enum):
    REACTOR = "R"
    HEATER = "H"
    COOLER = "C"
    HEAT_EXCHANGER = "HX"


class Reason(str, enum.Enum):
    OK = "OK"
    EMPTY_TRAIN = "EMPTY_TRAIN"
    NO_REACTOR = "NO_REACTOR"
    FORBIDDEN_ADJACENCY = "FORBIDDEN_ADJACENCY"
    INVALID_MANIPULATION = "INVALID_MANIPULATION"


DEFAULT_FORBIDDEN = frozenset({(Unit.HEATER, Unit.COOLER), (Unit.COOLER, Unit.HEATER)})
SCENARIO_UNITS = {
    1: (Unit.REACTOR, Unit.HEATER),
    2: (Unit.REACTOR, Unit.HEATER, Unit.HEAT_EXCHANGER),
    3: (Unit.REACTOR, Unit.HEATER, Unit.HEAT_EXCHANGER, Unit.COOLER),
}


@dataclass(frozen=True)
class Scenario:
    units: tuple[Unit, ...]
    horizon: int = 8
    forbidden: frozenset = DEFAULT_FORBIDDEN
    feed_count: int = 2
    product_count: int = 1

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def input_dim(self) -> int:
        return (self.n_units + self.feed_count) * (self.n_units + self.product_count)

    @property
    def action_count(self) -> int:
        return self.n_units + 2

    @property
    def remove_action(self) -> int:
        return self.n_units

    @property
    def noop_action(self) -> int:
        return self.n_units + 1

    def action_name(self, action: int) -> str:
        if action < self.n_units:
            return f"add:{self.units[action].value}"
        return "remove" if action == self.remove_action else "noop"


def scenario(number: int, horizon: int = 8) -> Scenario:
    if number not in SCENARIO_UNITS:
        raise ValueError(f"scenario must be 1, 2 or 3, got {number}")
    return Scenario(SCENARIO_UNITS[number], horizon=horizon)


@dataclass(frozen=True)
class FlowsheetState:
    train: tuple[int, ...]
    scenario: Scenario = field(repr=False)

    def units(self) -> tuple[Unit, ...]:
        return tuple(self.scenario.units[i] for i in self.train)

    @property
    def signature(self) -> str:
        return signature(self.units())


@dataclass(frozen=True)
class ScreenResult:
    passed: bool
    reason: Reason


def signature(units) -> str:
    return "-".join(u.value for u in units)


def reset(sc: Scenario) -> FlowsheetState:
    return FlowsheetState((), sc)


def action_count(sc: Scenario) -> int:
    return sc.action_count


def apply_action(state: FlowsheetState, action: int) -> tuple[FlowsheetState, bool]:
    """Return the next state and whether the manipulation was valid.

    Invalid manipulations (duplicate append, remove on an empty train) leave
    the state unchanged.
    """
    sc = state.scenario
    if not 0 <= action < sc.action_count:
        raise DimensionError(f"action {action} outside [0, {sc.action_count})")
    if action < sc.n_units:
        if action in state.train:
            return state, False
        return FlowsheetState(state.train + (action,), sc), True
    if action == sc.remove_action:
        if not state.train:
            return state, False
        return FlowsheetState(state.train[:-1], sc), True
    return state, True


def screen(state: FlowsheetState) -> ScreenResult:
    units = state.units()
    if not units:
        return ScreenResult(False, Reason.EMPTY_TRAIN)
    if Unit.REACTOR not in units:
        return ScreenResult(False, Reason.NO_REACTOR)
    for pair in zip(units, units[1:]):
        if pair in state.scenario.forbidden:
            return ScreenResult(False, Reason.FORBIDDEN_ADJACENCY)
    return ScreenResult(True, Reason.OK)


def connectivity(state: FlowsheetState) -> np.ndarray:
    """Binary matrix; rows are destinations (units, product), columns sources (feeds, units)."""
    sc = state.scenario
    n, nf = sc.n_units, sc.feed_count
    m = np.zeros((n + sc.product_count, nf + n), dtype=np.int8)
    train = state.train
    if train:
        m[train[0], :nf] = 1
        for src, dst in zip(train, train[1:]):
            m[dst, nf + src] = 1
        m[n, nf + train[-1]] = 1
    return m


def encode(state: FlowsheetState) -> np.ndarray:
    return connectivity(state).ravel()


def all_trains(sc: Scenario):
    for k in range(1, sc.n_units + 1):
        yield from itertools.permutations(range(sc.n_units), k)


def enumerate_screened(sc: Scenario) -> list[FlowsheetState]:
    states = (FlowsheetState(t, sc) for t in all_trains(sc))
    return [s for s in states if screen(s).passed]
