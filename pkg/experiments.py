#!/usr/bin/env python3
"""
SafeCharge Experiments - Train, evaluate and compare charging-station agents
Command-line harness for the proposed port-wise agent and the two fleet
baselines: component breakdowns, port-count sweeps and price-factor sweeps.
"""

import argparse
import glob
import json
import logging
import math
import os
import re
import sys
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from dense_net import CheckpointError
from export_tools import ExportTools
from fleet_baselines import FleetInterface
from sac_agent import PortwiseInterface, SacAgent, SacConfig, train
from scenario_data import DataConfig, ScenarioBundle, build_bundle
from station_env import Action, ScenarioConfig, StationEnv, objective_from_trace, rollout_episode, summarize_trace

__version__ = "0.1.0"

logger = logging.getLogger(__name__)

AGENTS = ('proposed', 'fleet_profit', 'fleet_jpr')
COMPONENTS = ('payment', 'energy_cost', 'up_penalty', 'down_penalty')
_FIELD_MESSAGE = re.compile(r'^([A-Za-z_][A-Za-z0-9_.]*): ')


class ConfigError(ValueError):
    """Invalid experiment configuration; `path` is the dotted field name"""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path

    def details(self) -> Dict:
        return {'path': self.path}


def _section(name: str, factory: Callable, data):
    """Build one config section, re-raising validation errors with a dotted path"""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(name, "must be a JSON object")
    try:
        return factory(data)
    except TypeError as e:
        raise ConfigError(name, str(e)) from e
    except ValueError as e:
        text = str(e)
        match = _FIELD_MESSAGE.match(text)
        if match:
            raise ConfigError(f"{name}.{match.group(1)}", text[match.end():]) from e
        raise ConfigError(name, text) from e


def make_interface(agent: str):
    if agent == 'proposed':
        return PortwiseInterface()
    if agent == 'fleet_profit':
        return FleetInterface('profit')
    if agent == 'fleet_jpr':
        return FleetInterface('jpr')
    raise ConfigError('agent', f"expected one of {AGENTS}, got {agent!r}")


@dataclass
class ExperimentConfig:
    """One experiment: a scenario, where its data comes from, an agent and the run protocol"""

    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    data: DataConfig = field(default_factory=DataConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    agent: str = 'proposed'
    episodes: int = 100
    eval_episodes: int = 20
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output_dir: str = 'runs'
    price_factor: float = 1.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.agent not in AGENTS:
            raise ConfigError('agent', f"expected one of {AGENTS}, got {self.agent!r}")
        if not isinstance(self.episodes, int) or self.episodes < 0:
            raise ConfigError('episodes', "must be a non-negative integer")
        if not isinstance(self.eval_episodes, int) or self.eval_episodes < 1:
            raise ConfigError('eval_episodes', "must be a positive integer")
        if not self.seeds:
            raise ConfigError('seeds', "at least one seed is required")
        if any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigError('seeds', "seeds must be non-negative integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError('seeds', "seeds must be distinct")
        if not self.price_factor > 0:
            raise ConfigError('price_factor', "must be positive")

    def to_dict(self) -> Dict:
        return {
            'scenario': self.scenario.to_dict(),
            'data': self.data.to_dict(),
            'sac': self.sac.to_dict(),
            'agent': self.agent,
            'episodes': self.episodes,
            'eval_episodes': self.eval_episodes,
            'seeds': list(self.seeds),
            'output_dir': self.output_dir,
            'price_factor': self.price_factor,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError('', "experiment configuration must be a JSON object")
        known = {'scenario', 'data', 'sac', 'agent', 'episodes', 'eval_episodes', 'seeds',
                 'output_dir', 'price_factor'}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        return cls(
            scenario=_section('scenario', ScenarioConfig.from_dict, data.get('scenario')),
            data=_section('data', DataConfig.from_dict, data.get('data')),
            sac=_section('sac', SacConfig.from_dict, data.get('sac')),
            agent=data.get('agent', 'proposed'),
            episodes=data.get('episodes', 100),
            eval_episodes=data.get('eval_episodes', 20),
            seeds=list(data.get('seeds', [0, 1, 2, 3, 4])),
            output_dir=data.get('output_dir', 'runs'),
            price_factor=float(data.get('price_factor', 1.0)),
        )

    def with_overrides(self, seeds: Optional[Sequence[int]] = None, ports: Optional[int] = None,
                       price_factor: Optional[float] = None, output_dir: Optional[str] = None,
                       episodes: Optional[int] = None, agent: Optional[str] = None) -> "ExperimentConfig":
        """
        Copy with command-line overrides applied. Changing the port count
        resets the capacity to its per-port default.
        """
        data = self.to_dict()
        if seeds is not None:
            data['seeds'] = list(seeds)
        if ports is not None:
            data['scenario']['n_ports'] = int(ports)
            data['scenario']['capacity'] = None
        if price_factor is not None:
            data['price_factor'] = float(price_factor)
        if output_dir is not None:
            data['output_dir'] = output_dir
        if episodes is not None:
            data['episodes'] = int(episodes)
        if agent is not None:
            data['agent'] = agent
        return ExperimentConfig.from_dict(data)


def load_experiment_config(path: str) -> ExperimentConfig:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError('', f"{path} is not valid JSON (line {e.lineno}): {e.msg}") from e
    return ExperimentConfig.from_dict(data)


def relative_gain(value: float, baseline: float) -> float:
    """(value - baseline) / |baseline| in percent; NaN for a zero baseline"""
    if baseline == 0:
        return float('nan')
    return (value - baseline) / abs(baseline) * 100.0


@dataclass
class MetricsReport:
    """Evaluation summary of one agent on one scenario"""

    agent: str
    n_ports: int
    price_factor: float
    scenario_fingerprint: str
    seeds: List[int]
    per_seed_jpr: List[float]
    mean_jpr: float
    stderr_jpr: float
    component_means: Dict[str, float]
    eval_episodes: int
    gains: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_episodes(cls, episodes: pd.DataFrame, agent: str, bundle: ScenarioBundle,
                      price_factor: float, eval_episodes: int) -> "MetricsReport":
        """Aggregate per-episode rows (one `seed` column) into seed means and their spread"""
        per_seed = episodes.groupby('seed', sort=True)['jpr'].mean()
        values = per_seed.to_numpy(dtype=np.float64)
        stderr = float(np.std(values, ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
        return cls(
            agent=agent,
            n_ports=bundle.config.n_ports,
            price_factor=float(price_factor),
            scenario_fingerprint=bundle.fingerprint(),
            seeds=[int(s) for s in per_seed.index],
            per_seed_jpr=[float(v) for v in values],
            mean_jpr=float(np.mean(values)),
            stderr_jpr=stderr,
            component_means={c: float(episodes[c].mean()) for c in COMPONENTS},
            eval_episodes=int(eval_episodes),
        )

    def to_dict(self) -> Dict:
        return {
            'agent': self.agent,
            'n_ports': self.n_ports,
            'price_factor': self.price_factor,
            'scenario_fingerprint': self.scenario_fingerprint,
            'seeds': list(self.seeds),
            'per_seed_jpr': list(self.per_seed_jpr),
            'mean_jpr': self.mean_jpr,
            'stderr_jpr': self.stderr_jpr,
            'component_means': dict(self.component_means),
            'eval_episodes': self.eval_episodes,
            'gains': dict(self.gains),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "MetricsReport":
        data = dict(data)
        # undefined values are stored as null
        for key in ('mean_jpr', 'stderr_jpr'):
            if data.get(key) is None:
                data[key] = float('nan')
        data['gains'] = {k: float('nan') if v is None else v for k, v in data.get('gains', {}).items()}
        return cls(**data)


Policy = Callable[[np.ndarray, StationEnv], Action]


def evaluate_policy(bundle: ScenarioBundle, policy: Policy, episodes: int, seed: int = 0,
                    trace_path: Optional[str] = None) -> pd.DataFrame:
    """
    Shared evaluator: roll `policy` out for `episodes` episodes and score each
    with the full joint objective, whatever reward the agent was trained on.
    The first episode's per-slot trace is written to `trace_path` when given.
    Returns: one row per episode with JPR, components, admission counters and
    the largest per-slot gap to the objective recomputed from the trace
    """
    env = StationEnv.from_bundle(bundle)
    scenario = bundle.config
    episode_rng = np.random.default_rng([seed, 2])
    rows = []
    for episode in range(episodes):
        trace = rollout_episode(env, policy, seed=int(episode_rng.integers(2 ** 31 - 1)))
        if episode == 0 and trace_path:
            ExportTools.export_trace(trace, trace_path)
        summary = summarize_trace(trace)
        recomputed = objective_from_trace(trace, scenario.lambda_up, scenario.lambda_down, scenario.initial_price)
        gap = float(np.max(np.abs(recomputed - trace['total'].to_numpy()))) if len(trace) else 0.0
        row = {'seed': seed, 'episode': episode}
        row.update(summary)
        row['infeasible'] = env.stats['infeasible_departures']
        row['objective_gap'] = gap
        rows.append(row)
    return pd.DataFrame(rows)


def _seed_dir(run_dir: str, seed: int) -> str:
    return os.path.join(run_dir, f'seed_{seed}')


def cmd_train(config: ExperimentConfig) -> str:
    """
    Train one agent per seed under `config.output_dir`
    Returns: the run directory
    """
    run_dir = config.output_dir
    bundle = build_bundle(config.scenario, config.data, config.price_factor)
    os.makedirs(run_dir, exist_ok=True)
    ExportTools.export_to_json(config.to_dict(), os.path.join(run_dir, 'config.json'))
    bundle.save(os.path.join(run_dir, 'scenario.json'))

    print(f"🔌 Training {config.agent} on {config.scenario.n_ports} ports "
          f"(price factor {config.price_factor}, {config.episodes} episodes)")
    for seed in config.seeds:
        env = StationEnv.from_bundle(bundle)
        result = train(env, config.sac, config.episodes, seed,
                       interface=make_interface(config.agent), out_dir=_seed_dir(run_dir, seed))
        final_jpr = result.log['jpr'].iloc[-1] if len(result.log) else float('nan')
        print(f"  • seed {seed}: last episode JPR {final_jpr:.3f}")
    print(f"✅ Run written to {run_dir}")
    return run_dir


def _checkpoint_paths(checkpoint: str) -> List[str]:
    if os.path.isfile(checkpoint):
        return [checkpoint]
    if not os.path.isdir(checkpoint):
        raise FileNotFoundError(f"no checkpoint or run directory at {checkpoint}")
    paths = []
    seed_dirs = glob.glob(os.path.join(checkpoint, 'seed_*'))
    for seed_dir in sorted(seed_dirs, key=lambda p: int(p.rsplit('_', 1)[-1])):
        for name in ('checkpoint_final.json', 'checkpoint_initial.json'):
            path = os.path.join(seed_dir, name)
            if os.path.isfile(path):
                paths.append(path)
                break
    if not paths:
        raise FileNotFoundError(f"no seed_*/checkpoint_final.json under {checkpoint}")
    return paths


def load_agent(path: str, bundle: ScenarioBundle) -> SacAgent:
    """Load a checkpoint and check it fits the scenario's observation and action sizes"""
    agent = SacAgent.load(path)
    agent_name = agent.metadata.get('interface', 'proposed')
    interface = make_interface(agent_name)
    low, _ = interface.bounds(bundle.config, agent.config)
    if agent.actor.obs_dim != bundle.config.obs_dim or agent.actor.action_dim != low.size:
        raise CheckpointError(
            f"{path} expects observation/action sizes {agent.actor.obs_dim}/{agent.actor.action_dim}, "
            f"scenario has {bundle.config.obs_dim}/{low.size}"
        )
    return agent


def cmd_eval(checkpoint: str, bundle: ScenarioBundle, episodes: int, out_dir: Optional[str] = None) -> MetricsReport:
    """
    Deterministic-policy evaluation of one checkpoint or every seed of a run.
    The report carries the price factor the scenario was scaled with.
    Returns: MetricsReport (also written to out_dir when given)
    """
    frames = []
    agent_name = None
    for path in _checkpoint_paths(checkpoint):
        agent = load_agent(path, bundle)
        agent_name = agent.metadata.get('interface', 'proposed')
        policy = agent.policy(make_interface(agent_name), deterministic=True)
        trace_path = os.path.join(out_dir, f'trace_seed_{agent.seed}.csv') if out_dir else None
        frames.append(evaluate_policy(bundle, policy, episodes, seed=agent.seed, trace_path=trace_path))
    table = pd.concat(frames, ignore_index=True)
    report = MetricsReport.from_episodes(table, agent_name, bundle, bundle.price_factor, episodes)
    print(f"📊 {agent_name}: mean JPR {report.mean_jpr:.3f} ± {report.stderr_jpr:.3f} "
          f"over {len(report.seeds)} seed(s)")
    if out_dir:
        ExportTools.export_report(report, out_dir, table)
    return report


def compare_reports(reports: Sequence[MetricsReport]) -> pd.DataFrame:
    """
    One row per report with relative gains against every other agent evaluated
    at the same port count and price factor
    """
    rows = []
    for report in reports:
        row = {
            'agent': report.agent,
            'n_ports': report.n_ports,
            'price_factor': report.price_factor,
            'mean_jpr': report.mean_jpr,
            'stderr_jpr': report.stderr_jpr,
            'n_seeds': len(report.seeds),
        }
        row.update(report.component_means)
        peers = [r for r in reports if r is not report
                 and r.n_ports == report.n_ports and r.price_factor == report.price_factor]
        row['scenario_mismatch'] = any(r.scenario_fingerprint != report.scenario_fingerprint for r in peers)
        for peer in peers:
            gain = relative_gain(report.mean_jpr, peer.mean_jpr)
            row[f'gain_vs_{peer.agent}'] = gain
            report.gains[peer.agent] = gain
        rows.append(row)
    table = pd.DataFrame(rows).sort_values(['n_ports', 'price_factor', 'agent'], kind='mergesort')
    if table['scenario_mismatch'].any():
        logger.warning("compared reports were produced on different scenarios")
    return table.reset_index(drop=True)


def cmd_compare(report_paths: Sequence[str], out_dir: Optional[str] = None) -> pd.DataFrame:
    if len(report_paths) < 2:
        raise ConfigError('reports', "at least two reports are needed for a comparison")
    reports = []
    for path in report_paths:
        if os.path.isdir(path):
            path = os.path.join(path, 'report.json')
        reports.append(MetricsReport.from_dict(ExportTools.load_json(path)))
    table = compare_reports(reports)
    _print_table(table)
    if out_dir:
        ExportTools.export_comparison(table, out_dir)
        ExportTools.export_summary_text(table.to_dict(orient='records'), os.path.join(out_dir, 'summary.txt'))
    return table


def cmd_sweep(config: ExperimentConfig, ports: Optional[Sequence[int]] = None,
              price_factors: Optional[Sequence[float]] = None,
              agents: Sequence[str] = AGENTS, out_dir: Optional[str] = None) -> pd.DataFrame:
    """
    Train and evaluate every agent at every port count (or price factor)
    Returns: the comparison table (also written under out_dir)
    """
    if ports and price_factors:
        raise ConfigError('sweep', "sweep over ports or price factors, not both")
    out_dir = out_dir or config.output_dir
    if ports:
        points = [('ports', p, {'ports': p}) for p in ports]
    elif price_factors:
        points = [('price_factor', f, {'price_factor': f}) for f in price_factors]
    else:
        points = [('ports', config.scenario.n_ports, {})]

    reports = []
    for key, value, overrides in points:
        for agent in agents:
            run_dir = os.path.join(out_dir, f'{key}_{value}', agent)
            run_config = config.with_overrides(agent=agent, output_dir=run_dir, **overrides)
            cmd_train(run_config)
            bundle = ScenarioBundle.load(os.path.join(run_dir, 'scenario.json'))
            reports.append(cmd_eval(run_dir, bundle, run_config.eval_episodes, run_dir))
    table = compare_reports(reports)
    _print_table(table)
    ExportTools.export_comparison(table, out_dir)
    ExportTools.export_summary_text(table.to_dict(orient='records'), os.path.join(out_dir, 'summary.txt'),
                                    title="SAFECHARGE SWEEP")
    return table


def _print_table(table: pd.DataFrame):
    print("\n📋 COMPARISON:")
    print("-" * 60)
    for row in table.to_dict(orient='records'):
        gains = ', '.join(f"{k[8:]} {v:+.2f}%" for k, v in row.items()
                          if k.startswith('gain_vs_') and isinstance(v, float) and not math.isnan(v))
        print(f"{row['agent']:>12} | N={row['n_ports']} | factor {row['price_factor']:.2f} | "
              f"JPR {row['mean_jpr']:.3f} ± {row['stderr_jpr']:.3f}" + (f" | {gains}" if gains else ''))


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.split(',') if v.strip()]


def _float_list(text: str) -> List[float]:
    return [float(v) for v in text.split(',') if v.strip()]


def _error_payload(error: Exception) -> Dict:
    details = error.details() if hasattr(error, 'details') else {}
    return {'error': type(error).__name__, 'message': str(error), 'details': details}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='safecharge',
        description="SafeCharge - Joint pricing and port-wise charging for EV stations",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  safecharge train --config sample_data/configs/quick.json --seed 0,1
  safecharge eval --checkpoint runs/quick --episodes 5 --out runs/quick
  safecharge compare runs/a/report.json runs/b/report.json --out runs/cmp
  safecharge sweep --config sample_data/configs/quick.json --ports 5,6,7 --out runs/sweep
        """
    )
    parser.add_argument('--verbose', '-v', action='store_true', help="Log progress of every episode")
    sub = parser.add_subparsers(dest='command')

    train_parser = sub.add_parser('train', help="Train an agent for every seed")
    train_parser.add_argument('--config', required=True, help="Experiment JSON file")
    train_parser.add_argument('--seed', type=_int_list, help="Comma-separated seeds")
    train_parser.add_argument('--ports', type=int, help="Number of charging ports")
    train_parser.add_argument('--price-factor', type=float, help="Electricity price multiplier")
    train_parser.add_argument('--episodes', type=int, help="Training episodes per seed")
    train_parser.add_argument('--agent', choices=AGENTS, help="Agent to train (overrides the config)")
    train_parser.add_argument('--out', help="Run directory")

    eval_parser = sub.add_parser('eval', help="Evaluate a checkpoint or a run directory")
    eval_parser.add_argument('--checkpoint', required=True, help="Checkpoint JSON or run directory")
    eval_parser.add_argument('--scenario', help="Scenario bundle JSON (defaults to the run's scenario.json)")
    eval_parser.add_argument('--config', help="Experiment JSON to build the scenario from instead")
    eval_parser.add_argument('--ports', type=int, help="Number of charging ports (with --config)")
    eval_parser.add_argument('--price-factor', type=float, help="Electricity price multiplier (with --config)")
    eval_parser.add_argument('--episodes', type=int, default=20, help="Evaluation episodes per seed")
    eval_parser.add_argument('--out', help="Directory for report.json and report_episodes.csv")

    compare_parser = sub.add_parser('compare', help="Tabulate evaluation reports")
    compare_parser.add_argument('reports', nargs='+', help="report.json files or directories holding them")
    compare_parser.add_argument('--out', help="Directory for compare.csv and compare.json")

    sweep_parser = sub.add_parser('sweep', help="Train and evaluate all agents over ports or price factors")
    sweep_parser.add_argument('--config', required=True, help="Experiment JSON file")
    sweep_parser.add_argument('--ports', type=_int_list, help="Comma-separated port counts")
    sweep_parser.add_argument('--price-factor', type=_float_list, help="Comma-separated price factors")
    sweep_parser.add_argument('--agents', default=','.join(AGENTS), help="Comma-separated agents")
    sweep_parser.add_argument('--seed', type=_int_list, help="Comma-separated seeds")
    sweep_parser.add_argument('--episodes', type=int, help="Training episodes per seed")
    sweep_parser.add_argument('--out', help="Sweep output directory")
    return parser


def _eval_bundle(args) -> ScenarioBundle:
    if args.scenario:
        return ScenarioBundle.load(args.scenario)
    if args.config:
        config = load_experiment_config(args.config).with_overrides(ports=args.ports, price_factor=args.price_factor)
        return build_bundle(config.scenario, config.data, config.price_factor)
    run_dir = args.checkpoint if os.path.isdir(args.checkpoint) else os.path.dirname(os.path.dirname(args.checkpoint))
    path = os.path.join(run_dir, 'scenario.json')
    if not os.path.isfile(path):
        raise ConfigError('scenario', "no --scenario or --config given and no scenario.json next to the run")
    return ScenarioBundle.load(path)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    if not args.command:
        parser.print_help()
        print("\n❌ Please choose one of: train, eval, compare, sweep")
        return 1

    try:
        if args.command == 'train':
            config = load_experiment_config(args.config).with_overrides(
                seeds=args.seed, ports=args.ports, price_factor=args.price_factor,
                output_dir=args.out, episodes=args.episodes, agent=args.agent,
            )
            cmd_train(config)
        elif args.command == 'eval':
            bundle = _eval_bundle(args)
            cmd_eval(args.checkpoint, bundle, args.episodes, args.out)
        elif args.command == 'compare':
            cmd_compare(args.reports, args.out)
        elif args.command == 'sweep':
            config = load_experiment_config(args.config).with_overrides(seeds=args.seed, episodes=args.episodes)
            agents = [a.strip() for a in args.agents.split(',') if a.strip()]
            for agent in agents:
                make_interface(agent)
            cmd_sweep(config, ports=args.ports, price_factors=args.price_factor, agents=agents, out_dir=args.out)
    except (ValueError, RuntimeError, OSError, KeyError) as e:
        print(json.dumps(_error_payload(e), sort_keys=True), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
