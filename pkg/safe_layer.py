"""
Safe Layer - Feasibility projection for port-wise charging rates
Maps a proposed rate vector onto the box/budget/deadline polytope with an exact
greedy L1 projection, and keeps an LP reference solver for verification.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Sequence

import numpy as np
from scipy.optimize import linprog

logger = logging.getLogger(__name__)

TOLERANCE = 1e-9


class PortLike(Protocol):
    """Anything exposing the two residual fields of a charging port"""

    residual_demand_kwh: float
    residual_slots: int


class InfeasibleInstanceError(ValueError):
    """Raised when no rate vector can satisfy the deadline and budget constraints"""

    def __init__(self, message: str, instance: Optional["ProjectionInstance"] = None):
        super().__init__(message)
        self.instance = instance

    def details(self) -> dict:
        if self.instance is None:
            return {}
        return self.instance.to_dict()


@dataclass
class ProjectionInstance:
    """Proposed rates plus the bounds and the aggregate budget they must respect"""

    proposal: np.ndarray
    lower: np.ndarray
    upper: float
    budget: float

    def __post_init__(self):
        self.proposal = np.asarray(self.proposal, dtype=np.float64).reshape(-1)
        self.lower = np.asarray(self.lower, dtype=np.float64).reshape(-1)
        self.upper = float(self.upper)
        self.budget = float(self.budget)

    @property
    def size(self) -> int:
        return int(self.proposal.size)

    def validate(self):
        """
        Check the instance is well formed and feasible
        Raises: ValueError for malformed input, InfeasibleInstanceError otherwise
        """
        if self.proposal.shape != self.lower.shape:
            raise ValueError(
                f"proposal has {self.proposal.size} entries but lower has {self.lower.size}"
            )
        if not np.all(np.isfinite(self.proposal)):
            raise ValueError("proposal contains non-finite entries")
        if not np.all(np.isfinite(self.lower)):
            raise ValueError("lower bounds contain non-finite entries")
        if self.budget <= 0:
            raise ValueError(f"budget must be positive, got {self.budget}")
        if np.any(self.lower < -TOLERANCE):
            raise InfeasibleInstanceError("negative lower bound", self)
        if np.any(self.lower > self.upper + TOLERANCE):
            worst = int(np.argmax(self.lower - self.upper))
            raise InfeasibleInstanceError(
                f"lower bound {self.lower[worst]:.6f} of port {worst} exceeds upper {self.upper}",
                self,
            )
        total_lower = float(np.sum(self.lower))
        if total_lower > self.budget + TOLERANCE:
            raise InfeasibleInstanceError(
                f"sum of lower bounds {total_lower:.6f} exceeds budget {self.budget:.6f}",
                self,
            )

    def to_dict(self) -> dict:
        return {
            'proposal': self.proposal.tolist(),
            'lower': self.lower.tolist(),
            'upper': self.upper,
            'budget': self.budget,
        }


@dataclass
class ProjectionResult:
    """Projected rates with their L1 distance to the proposal"""

    rates: np.ndarray
    l1_cost: float
    clipped: bool = False
    reduced_ports: List[int] = field(default_factory=list)


def _lower_bound(residual_demand: float, residual_slots: int, x_max: float) -> float:
    if residual_demand > residual_slots * x_max + TOLERANCE:
        raise InfeasibleInstanceError(
            f"residual demand {residual_demand:.6f} kWh cannot be delivered in "
            f"{residual_slots} slots at {x_max} kWh/slot"
        )
    bound = max(0.0, residual_demand - (residual_slots - 1) * x_max)
    return min(bound, x_max)


def lower_bounds(ports: Sequence[PortLike], x_max: float) -> np.ndarray:
    """
    Deadline-induced minimum rate of every occupied port
    Empty ports (zero residual demand) are skipped, so the result is ordered like
    the occupied ports of the input.
    Returns: array of minimum rates in kWh per slot
    """
    bounds = []
    for port in ports:
        if port.residual_demand_kwh <= 0:
            continue
        bounds.append(_lower_bound(port.residual_demand_kwh, port.residual_slots, x_max))
    return np.array(bounds, dtype=np.float64)


def check_feasible(ports: Sequence[PortLike], x_max: float, budget: float) -> bool:
    """True when the deadline-forced rates of this slot fit in the budget"""
    try:
        bounds = lower_bounds(ports, x_max)
    except InfeasibleInstanceError:
        return False
    return float(np.sum(bounds)) <= budget + TOLERANCE


def project(instance: ProjectionInstance) -> ProjectionResult:
    """
    Minimum-L1 projection of the proposal onto
    {lower <= x <= upper, sum(x) <= budget}.

    The proposal is first clamped into its box. If the clamped vector still
    overdraws the budget, ports are reduced one after another, largest slack
    (x - lower) first and lower port index on ties, until the sum meets the budget.
    Returns: ProjectionResult
    """
    instance.validate()
    proposal = instance.proposal
    lower = instance.lower
    if instance.size == 0:
        return ProjectionResult(rates=np.zeros(0), l1_cost=0.0)

    rates = np.minimum(np.maximum(proposal, lower), instance.upper)
    excess = float(np.sum(rates)) - instance.budget
    reduced = []

    if excess > 0:
        slack = rates - lower
        order = sorted(range(instance.size), key=lambda i: (-slack[i], i))
        for port in order:
            if excess <= 0:
                break
            cut = min(slack[port], excess)
            if cut <= 0:
                continue
            rates[port] -= cut
            excess -= cut
            reduced.append(port)
        # guard against rounding drift when the final cut should land exactly
        overshoot = float(np.sum(rates)) - instance.budget
        if overshoot > 0 and reduced:
            last = reduced[-1]
            rates[last] = max(lower[last], rates[last] - overshoot)

    l1_cost = float(np.sum(np.abs(rates - proposal)))
    return ProjectionResult(
        rates=rates,
        l1_cost=l1_cost,
        clipped=bool(reduced),
        reduced_ports=reduced,
    )


def lp_oracle(instance: ProjectionInstance) -> ProjectionResult:
    """
    Reference solution of the projection LP using scipy's HiGHS solver.

    Variables are the rates x and the absolute deviations u, with
    u >= x - proposal and u >= proposal - x; the objective is sum(u).
    Returns: ProjectionResult
    """
    instance.validate()
    n = instance.size
    if n == 0:
        return ProjectionResult(rates=np.zeros(0), l1_cost=0.0)

    proposal = instance.proposal
    eye = np.eye(n)
    cost = np.concatenate([np.zeros(n), np.ones(n)])
    a_ub = np.vstack([
        np.hstack([eye, -eye]),
        np.hstack([-eye, -eye]),
        np.concatenate([np.ones(n), np.zeros(n)])[None, :],
    ])
    b_ub = np.concatenate([proposal, -proposal, [instance.budget]])
    bounds = [(float(lo), instance.upper) for lo in instance.lower] + [(0.0, None)] * n

    solution = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if solution.status != 0:
        raise InfeasibleInstanceError(f"LP solver failed: {solution.message}", instance)

    rates = np.clip(solution.x[:n], instance.lower, instance.upper)
    l1_cost = float(np.sum(np.abs(rates - proposal)))
    clamped_sum = float(np.sum(np.clip(proposal, instance.lower, instance.upper)))
    return ProjectionResult(
        rates=rates,
        l1_cost=l1_cost,
        clipped=clamped_sum > instance.budget + TOLERANCE,
    )


def latest_start_profile(residual_demand: float, residual_slots: int, x_max: float) -> np.ndarray:
    """
    Charging profile that postpones every kWh as long as possible:
    full rate in the final slots, one partial slot before them, zeros earlier.
    The first entry equals the port's lower bound for the current slot.
    Returns: array of length residual_slots
    """
    profile = np.zeros(max(int(residual_slots), 0), dtype=np.float64)
    if residual_slots <= 0 or residual_demand <= 0:
        return profile
    if residual_demand > residual_slots * x_max + TOLERANCE:
        raise InfeasibleInstanceError(
            f"residual demand {residual_demand:.6f} kWh exceeds {residual_slots} slots at {x_max} kWh/slot"
        )
    full_slots = min(int(math.floor(residual_demand / x_max + TOLERANCE)), int(residual_slots))
    remainder = residual_demand - full_slots * x_max
    if full_slots:
        profile[residual_slots - full_slots:] = x_max
    if remainder > TOLERANCE and full_slots < residual_slots:
        profile[residual_slots - full_slots - 1] = remainder
    return profile


def aggregate_profile(ports: Sequence[PortLike], x_max: float, horizon: int) -> np.ndarray:
    """
    Sum of the latest-start profiles of all ports over the next `horizon` slots
    Returns: array of length horizon
    """
    load = np.zeros(horizon, dtype=np.float64)
    for port in ports:
        if port.residual_demand_kwh <= 0:
            continue
        profile = latest_start_profile(port.residual_demand_kwh, port.residual_slots, x_max)
        span = min(horizon, profile.size)
        load[:span] += profile[:span]
    return load


def admissible_demand(load: np.ndarray, parking_slots: int, x_max: float, capacity: float) -> float:
    """
    Largest demand a new vehicle may bring without pushing the aggregate
    latest-start profile above the station capacity.

    `load` is the aggregate latest-start profile of the vehicles already parked,
    indexed from the new vehicle's first charging slot.
    Returns: demand in kWh (parking_slots * x_max on an idle station)
    """
    headroom = np.full(parking_slots, capacity, dtype=np.float64)
    span = min(parking_slots, len(load))
    headroom[:span] -= load[:span]
    headroom = np.maximum(headroom, 0.0)

    allowed = 0.0
    for slot in range(parking_slots - 1, -1, -1):
        if headroom[slot] >= x_max - TOLERANCE:
            allowed += x_max
            continue
        allowed += headroom[slot]
        break
    return allowed


def check_schedulable(ports: Sequence[PortLike], x_max: float, budget: float) -> bool:
    """True when every future slot of the aggregate latest-start profile fits the budget"""
    horizon = max((int(p.residual_slots) for p in ports), default=0)
    if horizon == 0:
        return True
    try:
        load = aggregate_profile(ports, x_max, horizon)
    except InfeasibleInstanceError:
        return False
    return bool(np.all(load <= budget + TOLERANCE))
