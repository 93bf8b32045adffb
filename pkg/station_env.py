"""
Station Environment - Discrete-time EV charging station simulator
Admits price-sensitive arrivals, applies port-wise charging rates and scores
every slot by profit minus the price-fluctuation (reputation) penalty.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import gymnasium as gym
import numpy as np
import pandas as pd
from gymnasium import spaces

from safe_layer import TOLERANCE, admissible_demand, aggregate_profile

logger = logging.getLogger(__name__)

# Demand-response parameters are expressed in multiples of 5 kWh
DEMAND_UNIT_KWH = 5.0


class ActionBoundsError(ValueError):
    """Raised when an executed action breaks the per-port or station rate limits"""


@dataclass(frozen=True)
class UserType:
    """Demand-response profile of one class of drivers"""

    name: str
    beta1: float
    beta2: float
    deadline_slots: int

    def __post_init__(self):
        if self.beta1 <= 0:
            raise ValueError(f"user type {self.name!r}: beta1 must be positive")
        if self.beta2 <= 0:
            raise ValueError(f"user type {self.name!r}: beta2 must be positive")
        if int(self.deadline_slots) < 1:
            raise ValueError(f"user type {self.name!r}: deadline_slots must be at least 1")

    @property
    def zero_demand_price(self) -> float:
        return self.beta2 / self.beta1

    def to_dict(self) -> Dict:
        return {
            'name': self.name,
            'beta1': self.beta1,
            'beta2': self.beta2,
            'deadline_slots': self.deadline_slots,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "UserType":
        return cls(
            name=str(data['name']),
            beta1=float(data['beta1']),
            beta2=float(data['beta2']),
            deadline_slots=int(data['deadline_slots']),
        )


DEFAULT_USER_TYPES = (
    UserType('emergent', beta1=2.0, beta2=4.0, deadline_slots=3),
    UserType('normal', beta1=10.0, beta2=12.0, deadline_slots=6),
    UserType('residential', beta1=24.0, beta2=32.0, deadline_slots=12),
)


def demand_response(user_type: UserType, price: float) -> float:
    """
    Energy a driver of this type requests at the posted service price
    Returns: demand in kWh, 5 * max(0, beta2 - beta1 * price)
    """
    if not np.isfinite(price) or price < 0:
        raise ValueError(f"price must be a non-negative number, got {price}")
    return DEMAND_UNIT_KWH * max(0.0, user_type.beta2 - user_type.beta1 * price)


@dataclass(frozen=True)
class PortState:
    """Residual demand and residual parking time of one port"""

    residual_demand_kwh: float = 0.0
    residual_slots: int = 0

    @property
    def is_empty(self) -> bool:
        return self.residual_demand_kwh == 0 and self.residual_slots == 0


@dataclass
class EvSession:
    """One vehicle's charging job from admission to departure"""

    id: int
    arrival_slot: int
    parking_slots: int
    demand_kwh: float
    residual_demand_kwh: float
    residual_slots: int
    port: int
    user_type: str = ''
    requested_kwh: float = 0.0
    delivered_kwh: float = 0.0

    def port_state(self) -> PortState:
        return PortState(self.residual_demand_kwh, self.residual_slots)


@dataclass
class Action:
    """Service price plus the per-port charging rates of one slot"""

    price: float
    rates: np.ndarray

    def __post_init__(self):
        self.price = float(self.price)
        self.rates = np.asarray(self.rates, dtype=np.float64).reshape(-1)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.price], self.rates])

    @classmethod
    def from_vector(cls, vector: Sequence[float]) -> "Action":
        vector = np.asarray(vector, dtype=np.float64).reshape(-1)
        return cls(price=vector[0], rates=vector[1:])


@dataclass(frozen=True)
class RewardBreakdown:
    """Components of one slot's joint profit-and-reputation reward"""

    payment: float
    energy_cost: float
    up_penalty: float
    down_penalty: float

    @property
    def total(self) -> float:
        return self.payment - self.energy_cost - self.up_penalty - self.down_penalty

    @property
    def profit(self) -> float:
        return self.payment - self.energy_cost

    def to_dict(self) -> Dict[str, float]:
        return {
            'payment': self.payment,
            'energy_cost': self.energy_cost,
            'up_penalty': self.up_penalty,
            'down_penalty': self.down_penalty,
            'total': self.total,
        }


@dataclass
class ScenarioConfig:
    """Physical and economic parameters of one charging station"""

    n_ports: int = 5
    horizon_slots: int = 288
    x_max: float = 7.0
    capacity: Optional[float] = None
    history_len: int = 5
    user_types: Tuple[UserType, ...] = DEFAULT_USER_TYPES
    type_weights: Optional[Tuple[float, ...]] = None
    lambda_up: float = 1.0610
    lambda_down: float = -0.2979
    slot_minutes: int = 5
    initial_price: float = 1.0
    service_price_scale: float = 2.0
    infeasible_tolerance: float = 1e-9

    def __post_init__(self):
        self.user_types = tuple(
            t if isinstance(t, UserType) else UserType.from_dict(t) for t in self.user_types
        )
        if self.capacity is None:
            self.capacity = 5.6 * self.n_ports
        if self.type_weights is None:
            self.type_weights = tuple([1.0 / len(self.user_types)] * len(self.user_types))
        self.type_weights = tuple(float(w) for w in self.type_weights)
        self.validate()

    def validate(self):
        if self.n_ports < 1:
            raise ValueError("n_ports: must be at least 1")
        if self.horizon_slots < 1:
            raise ValueError("horizon_slots: must be at least 1")
        if self.history_len < 1:
            raise ValueError("history_len: must be at least 1")
        if self.x_max <= 0:
            raise ValueError("x_max: must be positive")
        if self.capacity <= 0:
            raise ValueError("capacity: must be positive")
        if self.capacity > self.n_ports * self.x_max + TOLERANCE:
            raise ValueError(
                f"capacity: {self.capacity} exceeds n_ports * x_max = {self.n_ports * self.x_max}"
            )
        if not self.user_types:
            raise ValueError("user_types: at least one user type is required")
        if len(self.type_weights) != len(self.user_types):
            raise ValueError("type_weights: one weight per user type is required")
        if any(w < 0 for w in self.type_weights) or sum(self.type_weights) <= 0:
            raise ValueError("type_weights: weights must be non-negative with a positive sum")
        if self.slot_minutes < 1 or 60 % self.slot_minutes:
            raise ValueError("slot_minutes: must divide 60")
        if self.initial_price < 0:
            raise ValueError("initial_price: must be non-negative")
        if self.service_price_scale <= 0:
            raise ValueError("service_price_scale: must be positive")

    @property
    def n_types(self) -> int:
        return len(self.user_types)

    @property
    def max_deadline(self) -> int:
        return max(t.deadline_slots for t in self.user_types)

    @property
    def obs_dim(self) -> int:
        return 2 * self.n_ports + self.history_len * (1 + self.n_types) + 2

    @property
    def normalized_weights(self) -> np.ndarray:
        weights = np.asarray(self.type_weights, dtype=np.float64)
        return weights / weights.sum()

    def to_dict(self) -> Dict:
        return {
            'n_ports': self.n_ports,
            'horizon_slots': self.horizon_slots,
            'x_max': self.x_max,
            'capacity': self.capacity,
            'history_len': self.history_len,
            'user_types': [t.to_dict() for t in self.user_types],
            'type_weights': list(self.type_weights),
            'lambda_up': self.lambda_up,
            'lambda_down': self.lambda_down,
            'slot_minutes': self.slot_minutes,
            'initial_price': self.initial_price,
            'service_price_scale': self.service_price_scale,
            'infeasible_tolerance': self.infeasible_tolerance,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ScenarioConfig":
        data = dict(data)
        if 'user_types' in data:
            data['user_types'] = tuple(UserType.from_dict(t) for t in data['user_types'])
        if data.get('type_weights') is not None:
            data['type_weights'] = tuple(data['type_weights'])
        return cls(**data)


@dataclass
class StationState:
    """Everything the controller knows at the beginning of a slot"""

    slot: int
    sessions: List[Optional[EvSession]]
    price_history: np.ndarray
    arrival_history: np.ndarray
    last_price: float
    infeasible: bool = False

    @property
    def ports(self) -> List[PortState]:
        return [s.port_state() if s is not None else PortState() for s in self.sessions]

    @property
    def occupied_count(self) -> int:
        return sum(1 for s in self.sessions if s is not None and s.residual_demand_kwh > 0)

    def occupied_ports(self) -> List[int]:
        return [i for i, s in enumerate(self.sessions) if s is not None and s.residual_demand_kwh > 0]


def encode_observation(state: StationState, scenario: ScenarioConfig, price_scale: float) -> np.ndarray:
    """
    Flat, normalised observation vector:
    [Z (N x 2), electricity prices (h), per-type arrival counts (h x K), last service price, |K_t|]
    Returns: float64 array of length 2N + h + hK + 2
    """
    demand_scale = scenario.x_max * scenario.max_deadline
    z = np.zeros((scenario.n_ports, 2), dtype=np.float64)
    for port, session in enumerate(state.sessions):
        if session is None:
            continue
        z[port, 0] = session.residual_demand_kwh / demand_scale
        z[port, 1] = session.residual_slots / scenario.max_deadline

    return np.concatenate([
        z.ravel(),
        np.asarray(state.price_history, dtype=np.float64) / price_scale,
        np.asarray(state.arrival_history, dtype=np.float64).ravel() / scenario.n_ports,
        [state.last_price / scenario.service_price_scale],
        [state.occupied_count / scenario.n_ports],
    ])


def reward_breakdown(price: float, last_price: float, energy_price: float,
                     delivered: Sequence[float], admitted_demand_kwh: Sequence[float],
                     lambda_up: float, lambda_down: float) -> RewardBreakdown:
    """
    Profit and reputation terms of one slot
    Returns: RewardBreakdown whose total is payment - cost - up - down
    """
    payment = price * float(np.sum(admitted_demand_kwh))
    energy_cost = energy_price * float(np.sum(delivered))
    up_penalty = lambda_up * max(0.0, price - last_price)
    down_penalty = lambda_down * max(0.0, last_price - price)
    return RewardBreakdown(payment, energy_cost, up_penalty, down_penalty)


def _window(series: np.ndarray, end: int, length: int) -> np.ndarray:
    """Rows end-length+1..end of a series, repeating row 0 for negative indices"""
    index = np.clip(np.arange(end - length + 1, end + 1), 0, len(series) - 1)
    return series[index]


class StationEnv(gym.Env):
    """
    Gymnasium environment of a charging station with N ports.

    Action: [service price, rate of port 0, ..., rate of port N-1]
    Observation: see encode_observation
    Reward: the slot's joint profit-and-reputation total
    """

    metadata = {'render_modes': ['human']}

    def __init__(self, scenario: ScenarioConfig, prices, arrivals,
                 price_scale: Optional[float] = None):
        super().__init__()
        self.scenario = scenario
        self.prices = np.asarray(getattr(prices, 'prices', prices), dtype=np.float64).reshape(-1)
        self.arrival_counts = np.asarray(getattr(arrivals, 'counts', arrivals)).reshape(-1)
        type_counts = getattr(arrivals, 'type_counts', None)
        self.given_type_counts = None if type_counts is None else np.asarray(type_counts, dtype=np.int64)
        self._check_series()

        horizon_prices = self.prices[:scenario.horizon_slots]
        self.price_scale = float(price_scale) if price_scale else float(max(horizon_prices.max(), TOLERANCE))

        n = scenario.n_ports
        self.observation_space = spaces.Box(-np.inf, np.inf, shape=(scenario.obs_dim,), dtype=np.float64)
        self.action_space = spaces.Box(
            low=np.zeros(1 + n),
            high=np.concatenate([[np.inf], np.full(n, scenario.x_max)]),
            dtype=np.float64,
        )

        self.state: Optional[StationState] = None
        self.departures: List[Dict] = []
        self.stats: Dict[str, int] = {}
        self._arrival_plan: List[List[int]] = []
        self._type_counts = np.zeros((scenario.horizon_slots, scenario.n_types), dtype=np.int64)
        self._trace: List[Dict] = []
        self._next_id = 0

    @classmethod
    def from_bundle(cls, bundle) -> "StationEnv":
        return cls(bundle.config, bundle.prices, bundle.arrivals)

    def _check_series(self):
        horizon = self.scenario.horizon_slots
        if self.prices.size < horizon:
            raise ValueError(f"price series has {self.prices.size} slots, horizon needs {horizon}")
        if self.arrival_counts.size < horizon:
            raise ValueError(f"arrival series has {self.arrival_counts.size} slots, horizon needs {horizon}")
        if np.any(self.prices[:horizon] < 0) or not np.all(np.isfinite(self.prices[:horizon])):
            raise ValueError("price series must be finite and non-negative")
        if np.any(self.arrival_counts[:horizon] < 0):
            raise ValueError("arrival counts must be non-negative")
        if self.given_type_counts is not None:
            if self.given_type_counts.shape[0] < horizon or self.given_type_counts.shape[1] != self.scenario.n_types:
                raise ValueError(
                    f"per-type arrival counts must have shape (>= {horizon}, {self.scenario.n_types})"
                )

    def _plan_arrivals(self):
        """Fix the arrival order (and the type of every arrival) for the whole episode"""
        scenario = self.scenario
        weights = scenario.normalized_weights
        self._arrival_plan = []
        for t in range(scenario.horizon_slots):
            if self.given_type_counts is not None:
                counts = self.given_type_counts[t]
                order = np.repeat(np.arange(scenario.n_types), counts)
                order = self.np_random.permutation(order)
            else:
                count = int(self.arrival_counts[t])
                order = self.np_random.choice(scenario.n_types, size=count, p=weights)
                counts = np.bincount(order, minlength=scenario.n_types)
            self._type_counts[t] = counts
            self._arrival_plan.append([int(i) for i in order])

    def reset(self, *, seed: Optional[int] = None, options: Optional[Dict] = None):
        """Empty the station and replay the scenario from slot 0"""
        super().reset(seed=seed)
        self._check_series()
        scenario = self.scenario
        self._plan_arrivals()
        self.state = StationState(
            slot=0,
            sessions=[None] * scenario.n_ports,
            price_history=_window(self.prices, 0, scenario.history_len),
            arrival_history=_window(self._type_counts, 0, scenario.history_len),
            last_price=scenario.initial_price,
        )
        self.departures = []
        self.stats = {'arrivals': 0, 'admitted': 0, 'rejected': 0, 'declined': 0, 'capped': 0, 'infeasible_departures': 0}
        self._trace = []
        self._next_id = 0
        return self.observation(), {'slot': 0}

    def observation(self) -> np.ndarray:
        return encode_observation(self.state, self.scenario, self.price_scale)

    def _coerce(self, action: Union[Action, Sequence[float]]) -> Action:
        if isinstance(action, Action):
            return action
        return Action.from_vector(action)

    def _validate_action(self, action: Action):
        scenario = self.scenario
        rates = action.rates
        if rates.size != scenario.n_ports:
            raise ActionBoundsError(f"expected {scenario.n_ports} rates, got {rates.size}")
        if not np.isfinite(action.price) or action.price < 0:
            raise ActionBoundsError(f"service price must be a non-negative number, got {action.price}")
        if not np.all(np.isfinite(rates)):
            raise ActionBoundsError("rates contain non-finite entries")
        if np.any(rates < -TOLERANCE) or np.any(rates > scenario.x_max + TOLERANCE):
            raise ActionBoundsError(f"rates {rates.tolist()} leave [0, {scenario.x_max}]")
        if float(np.sum(rates)) > scenario.capacity + TOLERANCE:
            raise ActionBoundsError(
                f"total rate {float(np.sum(rates)):.6f} exceeds station capacity {scenario.capacity}"
            )

    def _charge(self, rates: np.ndarray) -> np.ndarray:
        delivered = np.zeros(self.scenario.n_ports, dtype=np.float64)
        for port, session in enumerate(self.state.sessions):
            if session is None:
                continue
            energy = min(max(float(rates[port]), 0.0), session.residual_demand_kwh)
            session.residual_demand_kwh -= energy
            session.delivered_kwh += energy
            session.residual_slots -= 1
            delivered[port] = energy
        return delivered

    def _depart(self, slot: int):
        tolerance = self.scenario.infeasible_tolerance
        for port, session in enumerate(self.state.sessions):
            if session is None:
                continue
            if session.residual_slots > 0:
                continue
            complete = session.residual_demand_kwh <= tolerance
            if not complete:
                self.state.infeasible = True
                self.stats['infeasible_departures'] += 1
                logger.error(
                    "EV %d left port %d at slot %d with %.6f kWh undelivered",
                    session.id, port, slot, session.residual_demand_kwh,
                )
            self.departures.append({
                'id': session.id,
                'port': port,
                'user_type': session.user_type,
                'arrival_slot': session.arrival_slot,
                'departure_slot': slot + 1,
                'demand_kwh': session.demand_kwh,
                'delivered_kwh': session.delivered_kwh,
                'residual_kwh': session.residual_demand_kwh,
                'completed': complete,
            })
            self.state.sessions[port] = None

    def _admit(self, slot: int, price: float) -> Tuple[List[float], Dict[str, int]]:
        """Admit slot `slot` arrivals at `price`; returns admitted demands and counters"""
        scenario = self.scenario
        admitted = []
        counts = {'arrivals': 0, 'admitted': 0, 'rejected': 0, 'declined': 0, 'capped': 0}
        plan = self._arrival_plan[slot] if slot < len(self._arrival_plan) else []
        for type_index in plan:
            user_type = scenario.user_types[type_index]
            counts['arrivals'] += 1
            requested = demand_response(user_type, price)
            if requested <= 0:
                counts['declined'] += 1
                continue
            free = [i for i, s in enumerate(self.state.sessions) if s is None]
            if not free:
                counts['rejected'] += 1
                continue
            parked = [s for s in self.state.sessions if s is not None]
            load = aggregate_profile(parked, scenario.x_max, user_type.deadline_slots)
            allowed = admissible_demand(load, user_type.deadline_slots, scenario.x_max, scenario.capacity)
            demand = min(requested, allowed)
            if demand < requested:
                counts['capped'] += 1
            if demand <= TOLERANCE:
                counts['declined'] += 1
                continue
            port = free[0]
            self.state.sessions[port] = EvSession(
                id=self._next_id,
                arrival_slot=slot,
                parking_slots=user_type.deadline_slots,
                demand_kwh=demand,
                residual_demand_kwh=demand,
                residual_slots=user_type.deadline_slots,
                port=port,
                user_type=user_type.name,
                requested_kwh=requested,
            )
            self._next_id += 1
            counts['admitted'] += 1
            admitted.append(demand)
        return admitted, counts

    def step(self, action: Union[Action, Sequence[float]]):
        """
        Apply one slot: charge, release departing vehicles, admit the slot's
        arrivals at the posted price and score the slot.
        Returns: (observation, reward, terminated, truncated, info) with
        info['breakdown'] holding the RewardBreakdown
        """
        if self.state is None:
            raise RuntimeError("reset() must be called before step()")
        scenario = self.scenario
        slot = self.state.slot
        if slot >= scenario.horizon_slots:
            raise RuntimeError("episode already finished; call reset()")

        action = self._coerce(action)
        self._validate_action(action)
        rates = np.clip(action.rates, 0.0, scenario.x_max)
        energy_price = float(self.prices[slot])

        delivered = self._charge(rates)
        self._depart(slot)
        admitted, counts = self._admit(slot, action.price)
        for key, value in counts.items():
            self.stats[key] += value

        breakdown = reward_breakdown(
            action.price, self.state.last_price, energy_price, delivered, admitted,
            scenario.lambda_up, scenario.lambda_down,
        )
        self._record(slot, energy_price, action.price, delivered, admitted, breakdown, counts)

        self.state.slot = slot + 1
        self.state.last_price = action.price
        next_slot = min(self.state.slot, scenario.horizon_slots - 1)
        self.state.price_history = _window(self.prices, next_slot, scenario.history_len)
        self.state.arrival_history = _window(self._type_counts, next_slot, scenario.history_len)

        done = self.state.slot >= scenario.horizon_slots
        info = {
            'slot': slot,
            'breakdown': breakdown,
            'delivered': delivered,
            'infeasible': self.state.infeasible,
            **counts,
        }
        return self.observation(), breakdown.total, done, False, info

    def _record(self, slot, energy_price, price, delivered, admitted, breakdown, counts):
        row = {'t': slot, 'c_t': energy_price, 'r_t': price, 'r_prev': self.state.last_price}
        for port, value in enumerate(delivered):
            row[f'x_{port}'] = value
        row['admitted_kwh'] = float(np.sum(admitted))
        row.update(breakdown.to_dict())
        row.update(counts)
        self._trace.append(row)

    def trace(self) -> pd.DataFrame:
        """One row per executed slot: prices, delivered rates, reward components"""
        return pd.DataFrame(self._trace)

    def render(self):
        if self.state is None:
            return
        occupied = self.state.occupied_count
        print(f"Slot {self.state.slot}: {occupied}/{self.scenario.n_ports} ports busy, "
              f"last price {self.state.last_price:.3f}")


def objective_from_trace(trace: pd.DataFrame, lambda_up: float, lambda_down: float,
                         initial_price: float) -> np.ndarray:
    """
    Recompute every slot's objective term from raw trace columns only
    (prices, delivered rates and admitted demand), independent of the env's
    reward bookkeeping.
    Returns: per-slot objective values
    """
    if trace.empty:
        return np.zeros(0)
    rate_columns = [c for c in trace.columns if c.startswith('x_')]
    price = trace['r_t'].to_numpy(dtype=np.float64)
    previous = np.concatenate([[initial_price], price[:-1]])
    payment = price * trace['admitted_kwh'].to_numpy(dtype=np.float64)
    cost = trace['c_t'].to_numpy(dtype=np.float64) * trace[rate_columns].to_numpy(dtype=np.float64).sum(axis=1)
    up = lambda_up * np.maximum(0.0, price - previous)
    down = lambda_down * np.maximum(0.0, previous - price)
    return payment - cost - up - down


def summarize_trace(trace: pd.DataFrame) -> Dict[str, float]:
    """Episode totals of the reward components and admission counters"""
    keys = ['payment', 'energy_cost', 'up_penalty', 'down_penalty', 'total']
    counters = ['arrivals', 'admitted', 'rejected', 'declined', 'capped']
    if trace.empty:
        summary = {k: 0.0 for k in keys}
        summary.update({k: 0 for k in counters})
    else:
        summary = {k: float(trace[k].sum()) for k in keys}
        summary.update({k: int(trace[k].sum()) for k in counters})
    summary['jpr'] = summary.pop('total')
    return summary


def rollout_episode(env: StationEnv, policy: Callable[[np.ndarray, StationEnv], Action],
                    seed: Optional[int] = None) -> pd.DataFrame:
    """
    Run one full episode with `policy(observation, env) -> Action`
    Returns: the episode trace
    """
    observation, _ = env.reset(seed=seed)
    done = False
    while not done:
        action = policy(observation, env)
        observation, _, done, _, _ = env.step(action)
    return env.trace()
