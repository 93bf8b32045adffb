"""
SAC Agent - Soft actor-critic for the joint price and port-rate controller
Squashed-Gaussian actor, single critic with a soft-updated target, replay
buffer and an adaptive temperature. Every executed action passes through the
safe layer before it reaches the station.
"""

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from dense_net import AdamState, CheckpointError, DenseNet, UpdateReport, adam_update
from safe_layer import InfeasibleInstanceError, ProjectionInstance, lower_bounds, project
from station_env import Action, RewardBreakdown, ScenarioConfig, StationEnv, StationState, summarize_trace

logger = logging.getLogger(__name__)

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
ALPHA_MIN = 1e-4
ALPHA_MAX = 10.0
TEMPERATURE_MODES = ('paper', 'target_entropy', 'fixed')
LOG_COLUMNS = [
    'episode', 'jpr', 'payment', 'energy_cost', 'up_penalty', 'down_penalty',
    'actor_loss', 'critic_loss', 'alpha', 'training_reward',
    'arrivals', 'admitted', 'rejected', 'declined', 'capped', 'infeasible', 'rejected_updates',
]
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class SacConfig:
    """Hyperparameters of the learner"""

    gamma: float = 0.99
    tau: float = 0.005
    alpha: float = 0.2
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    alpha_lr: float = 3e-4
    batch_size: int = 64
    buffer_capacity: int = 100_000
    temperature_mode: str = 'target_entropy'
    target_entropy: Optional[float] = None
    r_max: float = 2.0
    hidden_sizes: Tuple[int, ...] = (256, 256)
    warmup_steps: int = 1000
    updates_per_step: int = 1
    checkpoint_every: int = 0
    literal_init: bool = False

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        self.validate()

    def validate(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma: must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau: must lie in (0, 1]")
        if self.alpha <= 0:
            raise ValueError("alpha: must be positive")
        for name in ('actor_lr', 'critic_lr', 'alpha_lr', 'r_max'):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name}: must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size: must be at least 1")
        if self.buffer_capacity < self.batch_size:
            raise ValueError("buffer_capacity: must hold at least one batch")
        if self.temperature_mode not in TEMPERATURE_MODES:
            raise ValueError(f"temperature_mode: expected one of {TEMPERATURE_MODES}, got {self.temperature_mode!r}")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden_sizes: need at least one positive width")
        if self.warmup_steps < 0 or self.updates_per_step < 1 or self.checkpoint_every < 0:
            raise ValueError("warmup_steps, updates_per_step, checkpoint_every: out of range")

    def to_dict(self) -> Dict:
        data = asdict(self)
        data['hidden_sizes'] = list(self.hidden_sizes)
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "SacConfig":
        return cls(**data)


# ---------------------------------------------------------------- replay

@dataclass
class Transition:
    observation: np.ndarray
    raw_action: np.ndarray
    safe_action: np.ndarray
    reward: float
    next_observation: np.ndarray
    done: bool


@dataclass
class Batch:
    observations: np.ndarray
    raw_actions: np.ndarray
    safe_actions: np.ndarray
    rewards: np.ndarray
    next_observations: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return int(self.rewards.size)


class ReplayBuffer:
    """Fixed-capacity FIFO store of transitions with seeded uniform sampling"""

    def __init__(self, capacity: int, obs_dim: int, raw_dim: int, safe_dim: int,
                 seed: Union[int, np.random.SeedSequence, None] = 0):
        self.capacity = int(capacity)
        self.observations = np.zeros((capacity, obs_dim))
        self.raw_actions = np.zeros((capacity, raw_dim))
        self.safe_actions = np.zeros((capacity, safe_dim))
        self.rewards = np.zeros(capacity)
        self.next_observations = np.zeros((capacity, obs_dim))
        self.dones = np.zeros(capacity)
        self.position = 0
        self.size = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self.size

    def add(self, transition: Transition):
        i = self.position
        self.observations[i] = transition.observation
        self.raw_actions[i] = transition.raw_action
        self.safe_actions[i] = transition.safe_action
        self.rewards[i] = transition.reward
        self.next_observations[i] = transition.next_observation
        self.dones[i] = float(transition.done)
        self.position = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int) -> Batch:
        if batch_size > self.size:
            raise ValueError(f"cannot sample {batch_size} transitions from a buffer of {self.size}")
        index = self.rng.choice(self.size, size=batch_size, replace=False)
        return Batch(
            observations=self.observations[index],
            raw_actions=self.raw_actions[index],
            safe_actions=self.safe_actions[index],
            rewards=self.rewards[index],
            next_observations=self.next_observations[index],
            dones=self.dones[index],
        )


# ---------------------------------------------------------------- networks

def _log_one_minus_tanh_sq(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2) without cancellation for large |u|"""
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


@dataclass
class PolicySample:
    """One batch of reparameterised actor samples"""

    mean: np.ndarray
    log_std: np.ndarray
    std: np.ndarray
    noise: np.ndarray
    pre_tanh: np.ndarray
    squashed: np.ndarray
    action: np.ndarray
    log_prob: np.ndarray
    clamp_free: np.ndarray


class ActorHead:
    """Network mapping an observation to the mean and log-std of every action coordinate"""

    def __init__(self, obs_dim: int, action_low: Sequence[float], action_high: Sequence[float],
                 hidden_sizes: Sequence[int] = (256, 256), rng: Optional[np.random.Generator] = None,
                 literal_init: bool = False, net: Optional[DenseNet] = None):
        self.action_low = np.asarray(action_low, dtype=np.float64)
        self.action_high = np.asarray(action_high, dtype=np.float64)
        if np.any(self.action_high <= self.action_low):
            raise ValueError("every action coordinate needs high > low")
        self.obs_dim = int(obs_dim)
        self.net = net if net is not None else DenseNet(
            [obs_dim, *hidden_sizes, 2 * self.action_dim], rng, literal_init
        )

    @property
    def action_dim(self) -> int:
        return int(self.action_low.size)

    @property
    def half_range(self) -> np.ndarray:
        return 0.5 * (self.action_high - self.action_low)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.action_high + self.action_low)

    def split(self, outputs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Mean, clamped log-std and the mask of coordinates where the clamp is inactive"""
        a = self.action_dim
        mean = outputs[:, :a]
        raw_log_std = outputs[:, a:]
        log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
        free = (raw_log_std > LOG_STD_MIN) & (raw_log_std < LOG_STD_MAX)
        return mean, log_std, free

    def squash(self, pre_tanh: np.ndarray) -> np.ndarray:
        return self.center + self.half_range * np.tanh(pre_tanh)

    def normalize(self, action: np.ndarray) -> np.ndarray:
        """Map an action in [low, high] back to [-1, 1]"""
        return (np.asarray(action, dtype=np.float64) - self.center) / self.half_range

    def log_prob_terms(self, pre_tanh: np.ndarray, noise: np.ndarray, log_std: np.ndarray) -> np.ndarray:
        gaussian = -0.5 * noise ** 2 - log_std - _HALF_LOG_2PI
        jacobian = _log_one_minus_tanh_sq(pre_tanh) + np.log(self.half_range)
        return np.sum(gaussian - jacobian, axis=-1)

    def sample_from_outputs(self, outputs: np.ndarray, noise: np.ndarray) -> PolicySample:
        mean, log_std, free = self.split(np.atleast_2d(outputs))
        std = np.exp(log_std)
        pre_tanh = mean + std * noise
        squashed = np.tanh(pre_tanh)
        return PolicySample(
            mean=mean, log_std=log_std, std=std, noise=noise, pre_tanh=pre_tanh,
            squashed=squashed, action=self.center + self.half_range * squashed,
            log_prob=self.log_prob_terms(pre_tanh, noise, log_std), clamp_free=free,
        )

    def sample(self, observations: np.ndarray, noise: np.ndarray) -> PolicySample:
        outputs = self.net.forward(np.atleast_2d(observations))
        return self.sample_from_outputs(outputs, np.atleast_2d(noise))

    def log_prob(self, observation: np.ndarray, action: np.ndarray) -> np.ndarray:
        """Density of `action` under the squashed policy at `observation` (log scale)"""
        outputs = self.net.forward(np.atleast_2d(observation))
        mean, log_std, _ = self.split(outputs)
        y = np.clip(self.normalize(np.atleast_2d(action)), -1.0 + 1e-12, 1.0 - 1e-12)
        pre_tanh = np.arctanh(y)
        noise = (pre_tanh - mean) / np.exp(log_std)
        return self.log_prob_terms(pre_tanh, noise, log_std)

    def copy(self) -> "ActorHead":
        return ActorHead(self.obs_dim, self.action_low, self.action_high, net=self.net.copy())

    def to_dict(self) -> Dict:
        return {
            'action_low': self.action_low.tolist(),
            'action_high': self.action_high.tolist(),
            'net': self.net.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ActorHead":
        net = DenseNet.from_dict(data['net'])
        return cls(net.input_size, data['action_low'], data['action_high'], net=net)


class Critic:
    """Q(s, y) network; y is the action rescaled to [-1, 1]"""

    def __init__(self, obs_dim: int, action_dim: int, hidden_sizes: Sequence[int] = (256, 256),
                 rng: Optional[np.random.Generator] = None, literal_init: bool = False,
                 net: Optional[DenseNet] = None):
        self.obs_dim = int(obs_dim)
        self.action_dim = int(action_dim)
        self.net = net if net is not None else DenseNet(
            [obs_dim + action_dim, *hidden_sizes, 1], rng, literal_init
        )

    def inputs(self, observations: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return np.hstack([np.atleast_2d(observations), np.atleast_2d(actions)])

    def q(self, observations: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return self.net.forward(self.inputs(observations, actions))[:, 0]

    def q_and_action_grad(self, observations: np.ndarray, actions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Q values and dQ/dy for each batch row"""
        outputs, cache = self.net.forward(self.inputs(observations, actions), keep_cache=True)
        _, grad_input = self.net.backward(cache, np.ones_like(outputs))
        return outputs[:, 0], grad_input[:, self.obs_dim:]

    def copy(self) -> "Critic":
        return Critic(self.obs_dim, self.action_dim, net=self.net.copy())

    def to_dict(self) -> Dict:
        return {'obs_dim': self.obs_dim, 'action_dim': self.action_dim, 'net': self.net.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict) -> "Critic":
        return cls(data['obs_dim'], data['action_dim'], net=DenseNet.from_dict(data['net']))


def sample_action(actor: ActorHead, observation: np.ndarray,
                  seed: Union[int, np.random.Generator, None] = None,
                  deterministic: bool = False) -> Tuple[np.ndarray, float]:
    """
    Draw one action from the squashed Gaussian policy
    Returns: (action within [low, high], log-probability)
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noise = np.zeros((1, actor.action_dim)) if deterministic else rng.standard_normal((1, actor.action_dim))
    sample = actor.sample(np.atleast_2d(observation), noise)
    return sample.action[0], float(sample.log_prob[0])


# ---------------------------------------------------------------- losses

def critic_loss_terms(critic_out: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    q = critic_out[:, 0]
    diff = q - targets
    loss = 0.5 * float(np.mean(diff ** 2))
    return loss, (diff / diff.size)[:, None]


def actor_loss_fn(actor: ActorHead, critic, observations: np.ndarray, noise: np.ndarray, alpha: float):
    """
    Closure computing mean(alpha * log pi - Q) and its gradient w.r.t. the actor outputs.
    `critic` only needs q_and_action_grad(observations, y).
    """
    batch = observations.shape[0]

    def loss(outputs: np.ndarray) -> Tuple[float, np.ndarray]:
        sample = actor.sample_from_outputs(outputs, noise)
        q, dq_dy = critic.q_and_action_grad(observations, sample.squashed)
        value = float(np.mean(alpha * sample.log_prob - q))
        y = sample.squashed
        grad_pre_tanh = (alpha * 2.0 * y - dq_dy * (1.0 - y ** 2)) / batch
        grad_log_std = (-alpha / batch + grad_pre_tanh * sample.std * noise) * sample.clamp_free
        return value, np.hstack([grad_pre_tanh, grad_log_std])

    return loss


@dataclass
class TemperatureState:
    """Entropy temperature and its optimizer"""

    mode: str
    alpha: float
    target_entropy: float
    adam: AdamState = None
    parameter: np.ndarray = None

    @classmethod
    def create(cls, config: SacConfig, action_dim: int) -> "TemperatureState":
        target = config.target_entropy if config.target_entropy is not None else -float(action_dim)
        state = cls(mode=config.temperature_mode, alpha=float(config.alpha), target_entropy=target)
        # target_entropy learns log(alpha); paper mode learns alpha directly
        initial = math.log(state.alpha) if state.mode == 'target_entropy' else state.alpha
        state.parameter = np.array([initial])
        state.adam = AdamState.for_params([state.parameter], config.alpha_lr)
        return state

    def set_alpha(self, alpha: float):
        self.alpha = float(np.clip(alpha, ALPHA_MIN, ALPHA_MAX))
        self.parameter[0] = math.log(self.alpha) if self.mode == 'target_entropy' else self.alpha


def critic_update(critic: Critic, target_critic: Critic, actor: ActorHead, batch: Batch,
                  config: SacConfig, alpha: float, rng: np.random.Generator,
                  adam: AdamState) -> Tuple[float, UpdateReport]:
    """
    One gradient step on 0.5 * mean((Q(s, y) - target)^2) with
    target = v + gamma * (1 - done) * (Q_target(s', a') - alpha * log pi(a'|s'))
    Returns: (loss, UpdateReport)
    """
    noise = rng.standard_normal((len(batch), actor.action_dim))
    following = actor.sample(batch.next_observations, noise)
    next_q = target_critic.q(batch.next_observations, following.squashed)
    targets = batch.rewards + config.gamma * (1.0 - batch.dones) * (next_q - alpha * following.log_prob)

    inputs = critic.inputs(batch.observations, actor.normalize(batch.raw_actions))
    outputs, cache = critic.net.forward(inputs, keep_cache=True)
    loss, grad_out = critic_loss_terms(outputs, targets)
    if not np.isfinite(loss):
        logger.warning("rejected critic step: non-finite loss")
        return loss, UpdateReport(applied=False, grad_norm=float('nan'), reason='non-finite loss')
    grads, _ = critic.net.backward(cache, grad_out)
    return loss, adam_update(critic.net.parameters(), grads, adam)


def actor_update(actor: ActorHead, critic, batch: Batch, config: SacConfig, alpha: float,
                 rng: np.random.Generator, adam: AdamState) -> Tuple[float, UpdateReport]:
    """
    One gradient step on mean(alpha * log pi(a|s) - Q(s, a)) through the
    reparameterised sample a = squash(mean + std * noise)
    Returns: (loss, UpdateReport)
    """
    noise = rng.standard_normal((len(batch), actor.action_dim))
    loss_fn = actor_loss_fn(actor, critic, batch.observations, noise, alpha)
    outputs, cache = actor.net.forward(batch.observations, keep_cache=True)
    loss, grad_out = loss_fn(outputs)
    if not np.isfinite(loss):
        logger.warning("rejected actor step: non-finite loss")
        return loss, UpdateReport(applied=False, grad_norm=float('nan'), reason='non-finite loss')
    grads, _ = actor.net.backward(cache, grad_out)
    return loss, adam_update(actor.net.parameters(), grads, adam)


def temperature_gradient(temperature: TemperatureState, actor: ActorHead, critic,
                         observations: np.ndarray, noise: np.ndarray) -> float:
    """Gradient of the temperature objective w.r.t. the learned temperature parameter"""
    outputs = actor.net.forward(observations)
    if temperature.mode == 'target_entropy':
        sample = actor.sample_from_outputs(outputs, noise)
        # d/dlog(alpha) of -alpha * mean(log pi + target)
        return -temperature.alpha * float(np.mean(sample.log_prob + temperature.target_entropy))
    # alpha scales the exploration noise: a = squash(mean + alpha * std * noise)
    sample = actor.sample_from_outputs(outputs, temperature.alpha * noise)
    _, dq_dy = critic.q_and_action_grad(observations, sample.squashed)
    y = sample.squashed
    return -float(np.mean(np.sum(dq_dy * (1.0 - y ** 2) * sample.std * noise, axis=1)))


def temperature_update(temperature: TemperatureState, actor: ActorHead, critic, batch: Batch,
                       rng: np.random.Generator) -> UpdateReport:
    """
    Adjust alpha according to the configured mode; alpha stays within
    [1e-4, 10] and keeps its previous value when the gradient is not finite.
    """
    if temperature.mode == 'fixed':
        return UpdateReport(applied=False, grad_norm=0.0, reason='fixed temperature')
    noise = rng.standard_normal((len(batch), actor.action_dim))
    grad = temperature_gradient(temperature, actor, critic, batch.observations, noise)
    report = adam_update([temperature.parameter], [np.array([grad])], temperature.adam)
    if not report.applied:
        return report
    value = float(temperature.parameter[0])
    temperature.set_alpha(math.exp(value) if temperature.mode == 'target_entropy' else value)
    return report


def target_sync(critic: Critic, target_critic: Critic, tau: float):
    """theta_target <- (1 - tau) * theta_target + tau * theta, in place"""
    for target, source in zip(target_critic.net.parameters(), critic.net.parameters()):
        target *= (1.0 - tau)
        target += tau * source


# ---------------------------------------------------------------- action interfaces

class ActionInterface(Protocol):
    """How a raw agent output becomes a station action, and what the agent is rewarded with"""

    name: str

    def bounds(self, scenario: ScenarioConfig, config: SacConfig) -> Tuple[np.ndarray, np.ndarray]:
        ...

    def to_action(self, raw_action: np.ndarray, env: StationEnv) -> Action:
        ...

    def training_reward(self, breakdown: RewardBreakdown) -> float:
        ...


def safe_act(raw_action: np.ndarray, state: StationState, scenario: ScenarioConfig) -> Action:
    """
    Project the rate part of a raw action onto the feasible set of the occupied
    ports; empty ports get rate 0 and the price passes through unchanged.
    """
    raw = np.asarray(raw_action, dtype=np.float64).reshape(-1)
    rates = np.zeros(scenario.n_ports)
    occupied = state.occupied_ports()
    if occupied:
        ports = [state.sessions[i].port_state() for i in occupied]
        instance = ProjectionInstance(
            proposal=raw[1:][occupied],
            lower=lower_bounds(ports, scenario.x_max),
            upper=scenario.x_max,
            budget=scenario.capacity,
        )
        rates[occupied] = project(instance).rates
    return Action(price=raw[0], rates=rates)


class PortwiseInterface:
    """Joint price plus one continuous rate per port, corrected by the safe layer"""

    name = 'proposed'

    def bounds(self, scenario: ScenarioConfig, config: SacConfig) -> Tuple[np.ndarray, np.ndarray]:
        low = np.zeros(1 + scenario.n_ports)
        high = np.concatenate([[config.r_max], np.full(scenario.n_ports, scenario.x_max)])
        return low, high

    def to_action(self, raw_action: np.ndarray, env: StationEnv) -> Action:
        return safe_act(raw_action, env.state, env.scenario)

    def training_reward(self, breakdown: RewardBreakdown) -> float:
        return breakdown.total


# ---------------------------------------------------------------- agent

class SacAgent:
    """Actor, critic, target critic, temperature and replay buffer of one training run"""

    def __init__(self, obs_dim: int, action_low: Sequence[float], action_high: Sequence[float],
                 config: SacConfig, seed: int = 0, safe_dim: Optional[int] = None,
                 metadata: Optional[Dict[str, Any]] = None):
        self.config = config
        self.seed = int(seed)
        self.metadata = dict(metadata or {})
        init_seed, noise_seed, buffer_seed = np.random.SeedSequence(self.seed).spawn(3)
        init_rng = np.random.default_rng(init_seed)
        self.rng = np.random.default_rng(noise_seed)

        self.actor = ActorHead(obs_dim, action_low, action_high, config.hidden_sizes,
                               init_rng, config.literal_init)
        self.critic = Critic(obs_dim, self.actor.action_dim, config.hidden_sizes,
                             init_rng, config.literal_init)
        self.target_critic = self.critic.copy()
        self.actor_adam = AdamState.for_params(self.actor.net.parameters(), config.actor_lr)
        self.critic_adam = AdamState.for_params(self.critic.net.parameters(), config.critic_lr)
        self.temperature = TemperatureState.create(config, self.actor.action_dim)
        self.buffer = ReplayBuffer(
            config.buffer_capacity, obs_dim, self.actor.action_dim,
            safe_dim if safe_dim is not None else self.actor.action_dim, buffer_seed,
        )

    @property
    def alpha(self) -> float:
        return self.temperature.alpha

    def act(self, observation: np.ndarray, deterministic: bool = False) -> np.ndarray:
        action, _ = sample_action(self.actor, observation, self.rng, deterministic)
        return action

    def random_action(self) -> np.ndarray:
        return self.rng.uniform(self.actor.action_low, self.actor.action_high)

    def update(self) -> Dict[str, Any]:
        """Critic step, actor step, temperature step and target sync on one sampled batch"""
        batch = self.buffer.sample(self.config.batch_size)
        critic_loss, critic_report = critic_update(
            self.critic, self.target_critic, self.actor, batch, self.config,
            self.alpha, self.rng, self.critic_adam,
        )
        actor_loss, actor_report = actor_update(
            self.actor, self.critic, batch, self.config, self.alpha, self.rng, self.actor_adam,
        )
        temperature_update(self.temperature, self.actor, self.critic, batch, self.rng)
        target_sync(self.critic, self.target_critic, self.config.tau)
        rejected = int(not critic_report.applied) + int(not actor_report.applied)
        return {'critic_loss': critic_loss, 'actor_loss': actor_loss, 'rejected': rejected}

    def policy(self, interface: ActionInterface, deterministic: bool = True):
        """Callable suitable for rollout_episode"""
        def choose(observation: np.ndarray, env: StationEnv) -> Action:
            return interface.to_action(self.act(observation, deterministic), env)
        return choose

    def to_checkpoint(self) -> Dict:
        return {
            'kind': 'sac',
            'seed': self.seed,
            'alpha': self.alpha,
            'config': self.config.to_dict(),
            'metadata': self.metadata,
            'actor': self.actor.to_dict(),
            'critic': self.critic.to_dict(),
            'target_critic': self.target_critic.to_dict(),
        }

    @classmethod
    def from_checkpoint(cls, data: Dict) -> "SacAgent":
        if data.get('kind') != 'sac':
            raise CheckpointError(f"not a SAC checkpoint (kind={data.get('kind')!r})")
        config = SacConfig.from_dict(data['config'])
        actor = ActorHead.from_dict(data['actor'])
        agent = cls(actor.obs_dim, actor.action_low, actor.action_high, config, data.get('seed', 0),
                    metadata=data.get('metadata'))
        agent.actor = actor
        agent.critic = Critic.from_dict(data['critic'])
        agent.target_critic = Critic.from_dict(data['target_critic'])
        agent.temperature.set_alpha(float(data['alpha']))
        return agent

    def save(self, path: str):
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_checkpoint(), f)

    @classmethod
    def load(cls, path: str) -> "SacAgent":
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
        return cls.from_checkpoint(data)


@dataclass
class TrainingResult:
    log: pd.DataFrame
    agent: SacAgent
    checkpoints: Dict[str, Dict] = field(default_factory=dict)


def _mean_or_nan(values: List[float]) -> float:
    return float(np.mean(values)) if values else float('nan')


def train(env: StationEnv, config: SacConfig, episodes: int, seed: int = 0,
          interface: Optional[ActionInterface] = None, out_dir: Optional[str] = None) -> TrainingResult:
    """
    Train a SAC agent on `env` for `episodes` full episodes.

    The first `warmup_steps` actions are drawn uniformly from the raw action box;
    updates start once the buffer holds a full batch. Checkpoints are taken
    before training, every `checkpoint_every` episodes and at the end.
    Returns: TrainingResult with one log row per episode
    """
    if episodes < 0:
        raise ValueError("episodes: must be non-negative")
    interface = interface or PortwiseInterface()
    scenario = env.scenario
    low, high = interface.bounds(scenario, config)
    agent = SacAgent(
        scenario.obs_dim, low, high, config, seed, safe_dim=1 + scenario.n_ports,
        metadata={'interface': interface.name, 'scenario': scenario.to_dict()},
    )
    episode_rng = np.random.default_rng([seed, 1])

    checkpoints = {'initial': agent.to_checkpoint()}
    rows = []
    total_steps = 0
    for episode in range(episodes):
        observation, _ = env.reset(seed=int(episode_rng.integers(2 ** 31 - 1)))
        done = False
        actor_losses, critic_losses = [], []
        training_reward = 0.0
        rejected_updates = 0
        while not done:
            if total_steps < config.warmup_steps:
                raw = agent.random_action()
            else:
                raw = agent.act(observation)
            try:
                action = interface.to_action(raw, env)
            except InfeasibleInstanceError as e:
                raise InfeasibleInstanceError(
                    f"episode {episode}, slot {env.state.slot}: {e}", e.instance
                ) from e
            next_observation, _, done, _, info = env.step(action)
            reward = interface.training_reward(info['breakdown'])
            training_reward += reward
            agent.buffer.add(Transition(observation, raw, action.as_vector(), reward, next_observation, done))
            total_steps += 1

            if total_steps > config.warmup_steps and len(agent.buffer) >= config.batch_size:
                for _ in range(config.updates_per_step):
                    stats = agent.update()
                    actor_losses.append(stats['actor_loss'])
                    critic_losses.append(stats['critic_loss'])
                    rejected_updates += stats['rejected']
            observation = next_observation

        if env.state.infeasible:
            raise RuntimeError(f"episode {episode}: a vehicle left with undelivered demand")

        summary = summarize_trace(env.trace())
        row = {'episode': episode}
        row.update({k: summary[k] for k in ('jpr', 'payment', 'energy_cost', 'up_penalty', 'down_penalty')})
        row.update({
            'actor_loss': _mean_or_nan(actor_losses),
            'critic_loss': _mean_or_nan(critic_losses),
            'alpha': agent.alpha,
            'training_reward': training_reward,
        })
        row.update({k: summary[k] for k in ('arrivals', 'admitted', 'rejected', 'declined', 'capped')})
        row['infeasible'] = env.stats['infeasible_departures']
        row['rejected_updates'] = rejected_updates
        rows.append(row)
        logger.info("episode %d: jpr=%.3f alpha=%.4f", episode, summary['jpr'], agent.alpha)

        if config.checkpoint_every and (episode + 1) % config.checkpoint_every == 0:
            checkpoints[f'episode_{episode + 1}'] = agent.to_checkpoint()

    if episodes > 0:
        checkpoints['final'] = agent.to_checkpoint()

    log = pd.DataFrame(rows, columns=LOG_COLUMNS)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        log.to_csv(os.path.join(out_dir, 'training_log.csv'), index=False)
        for name, checkpoint in checkpoints.items():
            with open(os.path.join(out_dir, f'checkpoint_{name}.json'), 'w', encoding='utf-8') as f:
                json.dump(checkpoint, f)
    return TrainingResult(log=log, agent=agent, checkpoints=checkpoints)
