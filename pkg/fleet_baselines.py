"""
Fleet Baselines - Price plus station-total-rate controllers
The agent picks one service price and one total charging rate per slot;
least-laxity-first dispatch splits the total across the occupied ports.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np

from safe_layer import TOLERANCE, PortLike, lower_bounds
from station_env import Action, RewardBreakdown, ScenarioConfig, StationEnv

logger = logging.getLogger(__name__)

FLEET_MODES = ('profit', 'jpr')


@dataclass
class FleetAction:
    price: float
    total_rate: float

    def __post_init__(self):
        self.price = float(self.price)
        self.total_rate = float(self.total_rate)


@dataclass
class StepOutcome:
    """Result of one dispatched fleet step"""

    observation: np.ndarray
    action: Action
    breakdown: RewardBreakdown
    training_reward: float
    done: bool
    info: Dict = field(default_factory=dict)


def laxity(port: PortLike, x_max: float) -> int:
    """Residual slots minus the slots needed to finish at full rate"""
    needed = math.ceil(port.residual_demand_kwh / x_max - TOLERANCE)
    return int(port.residual_slots) - needed


def llf_dispatch(total_rate: float, ports: Sequence[PortLike], x_max: float) -> np.ndarray:
    """
    Split a station total across ports, least laxity first.

    Deadline-forced rates are served before anything else and the total is
    raised to their sum when it falls short. The rest goes to ports in
    ascending laxity (port index on ties), each up to min(x_max, residual).
    Returns: rates ordered like `ports` (0 for empty ports)
    """
    rates = np.zeros(len(ports), dtype=np.float64)
    occupied = [i for i, p in enumerate(ports) if p.residual_demand_kwh > 0]
    if not occupied:
        return rates

    forced = lower_bounds([ports[i] for i in occupied], x_max)
    rates[occupied] = forced
    remaining = max(float(total_rate), float(np.sum(forced))) - float(np.sum(forced))

    order = sorted(occupied, key=lambda i: (laxity(ports[i], x_max), i))
    for i in order:
        if remaining <= 0:
            break
        room = min(x_max, ports[i].residual_demand_kwh) - rates[i]
        give = min(max(room, 0.0), remaining)
        rates[i] += give
        remaining -= give
    return rates


class FleetInterface:
    """Action interface of the Fleet-Profit and Fleet-JPR agents"""

    def __init__(self, mode: str = 'jpr'):
        if mode not in FLEET_MODES:
            raise ValueError(f"mode: expected one of {FLEET_MODES}, got {mode!r}")
        self.mode = mode
        self.name = f'fleet_{mode}'

    def bounds(self, scenario: ScenarioConfig, config) -> Tuple[np.ndarray, np.ndarray]:
        return np.zeros(2), np.array([config.r_max, scenario.capacity])

    def to_action(self, raw_action: np.ndarray, env: StationEnv) -> Action:
        raw = np.asarray(raw_action, dtype=np.float64).reshape(-1)
        fleet = FleetAction(price=raw[0], total_rate=raw[1])
        rates = llf_dispatch(fleet.total_rate, env.state.ports, env.scenario.x_max)
        return Action(price=fleet.price, rates=rates)

    def training_reward(self, breakdown: RewardBreakdown) -> float:
        if self.mode == 'profit':
            return breakdown.profit
        return breakdown.total


def fleet_step(agent_mode: str, env: StationEnv, fleet_action: FleetAction) -> StepOutcome:
    """
    Dispatch a fleet action and advance the station by one slot.
    The training reward follows `agent_mode`; the breakdown always carries the full slot score.
    """
    interface = FleetInterface(agent_mode)
    action = interface.to_action([fleet_action.price, fleet_action.total_rate], env)
    observation, _, done, _, info = env.step(action)
    breakdown = info['breakdown']
    return StepOutcome(
        observation=observation,
        action=action,
        breakdown=breakdown,
        training_reward=interface.training_reward(breakdown),
        done=done,
        info=info,
    )
