#!/usr/bin/env python3
"""
SafeCharge Examples - Walkthroughs of the library API
Each example is self-contained and runs on synthetic data in a few seconds.
"""

import tempfile

import numpy as np

from fleet_baselines import laxity, llf_dispatch
from safe_layer import ProjectionInstance, lp_oracle, project
from sac_agent import PortwiseInterface, SacConfig, safe_act, train
from scenario_data import SyntheticConfig, scale_prices, synthesize
from station_env import Action, PortState, ScenarioConfig, StationEnv, demand_response, summarize_trace, DEFAULT_USER_TYPES


def example_demand_response():
    """Example 1: how much energy each user type asks for at a few prices"""
    print("=" * 60)
    print("EXAMPLE 1: Demand Response")
    print("=" * 60)

    for user_type in DEFAULT_USER_TYPES:
        demands = [demand_response(user_type, price) for price in (0.0, 0.5, 1.0, 1.5)]
        print(f"{user_type.name:>12}: " + ", ".join(f"{d:5.1f} kWh" for d in demands))
    return True


def example_safe_layer():
    """Example 2: projecting an over-budget proposal"""
    print("\n" + "=" * 60)
    print("EXAMPLE 2: Safe Layer Projection")
    print("=" * 60)

    instance = ProjectionInstance(proposal=[7.0, 7.0, 7.0], lower=[2.0, 0.0, 0.0], upper=7.0, budget=16.8)
    greedy = project(instance)
    reference = lp_oracle(instance)
    print(f"Proposal:  {instance.proposal.tolist()}")
    print(f"Projected: {np.round(greedy.rates, 3).tolist()} (L1 cost {greedy.l1_cost:.3f})")
    print(f"LP cost:   {reference.l1_cost:.3f}")
    return abs(greedy.l1_cost - reference.l1_cost) < 1e-6


def example_llf_dispatch():
    """Example 3: least-laxity-first split of a station total"""
    print("\n" + "=" * 60)
    print("EXAMPLE 3: Least-Laxity-First Dispatch")
    print("=" * 60)

    ports = [PortState(14.0, 6), PortState(7.0, 1), PortState(0.0, 0), PortState(3.0, 12)]
    for i, port in enumerate(ports):
        if port.residual_demand_kwh > 0:
            print(f"Port {i}: laxity {laxity(port, 7.0)}")
    rates = llf_dispatch(10.0, ports, 7.0)
    print(f"Dispatch of 10 kWh: {rates.tolist()}")
    return True


def example_episode():
    """Example 4: one synthetic day under a fixed price and full-rate proposals"""
    print("\n" + "=" * 60)
    print("EXAMPLE 4: Synthetic Episode")
    print("=" * 60)

    scenario = ScenarioConfig(n_ports=5)
    bundle = synthesize(scenario, SyntheticConfig(), seed=7)
    env = StationEnv.from_bundle(bundle)
    observation, _ = env.reset(seed=0)
    done = False
    while not done:
        raw = np.concatenate([[1.0], np.full(scenario.n_ports, scenario.x_max)])
        observation, _, done, _, _ = env.step(safe_act(raw, env.state, scenario))
    summary = summarize_trace(env.trace())
    print(f"JPR {summary['jpr']:.2f} | payment {summary['payment']:.2f} | "
          f"energy cost {summary['energy_cost']:.2f}")
    print(f"Admitted {summary['admitted']}, rejected {summary['rejected']}, declined {summary['declined']}")

    cheaper = bundle.with_prices(scale_prices(bundle.prices, 0.8), 0.8)
    print(f"Mean electricity price: {bundle.prices.prices.mean():.3f} -> {cheaper.prices.prices.mean():.3f}")
    return not env.state.infeasible


def example_quick_training():
    """Example 5: a two-episode training run on a short horizon"""
    print("\n" + "=" * 60)
    print("EXAMPLE 5: Quick Training Run")
    print("=" * 60)

    scenario = ScenarioConfig(n_ports=3, horizon_slots=48)
    bundle = synthesize(scenario, seed=1)
    config = SacConfig(hidden_sizes=(32, 32), batch_size=16, buffer_capacity=1000, warmup_steps=32)
    with tempfile.TemporaryDirectory() as out_dir:
        result = train(StationEnv.from_bundle(bundle), config, episodes=2, seed=0,
                       interface=PortwiseInterface(), out_dir=out_dir)
    print(result.log[['episode', 'jpr', 'critic_loss', 'alpha']].to_string(index=False))
    return len(result.log) == 2


def main():
    """Run all examples"""
    print("🔌 SafeCharge Examples - Feature Demonstration\n")

    try:
        results = [
            example_demand_response(),
            example_safe_layer(),
            example_llf_dispatch(),
            example_episode(),
            example_quick_training(),
        ]
        print("\n" + "=" * 60)
        print("EXAMPLES COMPLETE" if all(results) else "EXAMPLES FINISHED WITH ISSUES")
        print("=" * 60)
        print("\nFor experiments run: safecharge --help")
        return 0 if all(results) else 1

    except ImportError as e:
        print(f"Import error: {e}")
        print("Make sure all required packages are installed:")
        print("pip install -r requirements.txt")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
