"""
Dense Net - Small feed-forward networks with hand-written reverse mode
Rectifier hidden layers, linear output, Adam updates and a finite-difference
gradient checker. Everything is float64 and seeded.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint cannot be read back into a network"""


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, 0.0)


class DenseNet:
    """Fully connected network: affine -> rectifier -> ... -> affine"""

    def __init__(self, sizes: Sequence[int], rng: Optional[np.random.Generator] = None,
                 literal_init: bool = False):
        """
        Args:
            sizes: layer widths, input first and output last
            rng: generator used for the standard-normal initialisation
            literal_init: skip the 1/sqrt(fan_in) scaling of the initial weights
        """
        if len(sizes) < 2:
            raise ValueError("a network needs at least an input and an output size")
        self.sizes = [int(s) for s in sizes]
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            scale = 1.0 if literal_init else 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
            self.biases.append(np.zeros(fan_out))

    @property
    def input_size(self) -> int:
        return self.sizes[0]

    @property
    def output_size(self) -> int:
        return self.sizes[-1]

    def parameters(self) -> List[np.ndarray]:
        """Weights and biases interleaved layer by layer (views, not copies)"""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def copy(self) -> "DenseNet":
        clone = DenseNet.__new__(DenseNet)
        clone.sizes = list(self.sizes)
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def forward(self, inputs: np.ndarray, keep_cache: bool = False):
        """
        Batched forward pass
        Returns: outputs (B, out), plus the activation cache when keep_cache is set
        """
        x = np.asarray(inputs, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.input_size:
            raise ValueError(f"expected input width {self.input_size}, got {x.shape[1]}")

        cache = [x]
        a = x
        last = len(self.weights) - 1
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            if layer < last:
                cache.append(z)
                a = relu(z)
            else:
                a = z
        out = a[0] if single else a
        if keep_cache:
            return out, cache
        return out

    def backward(self, cache: List[np.ndarray], grad_output: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        """
        Reverse-mode pass for a cached forward call
        Returns: (gradients ordered like parameters(), gradient w.r.t. the input)
        """
        grad = np.asarray(grad_output, dtype=np.float64)
        if grad.ndim == 1:
            grad = grad[None, :]
        x = cache[0]
        pre_activations = cache[1:]
        grads: List[np.ndarray] = [None] * (2 * len(self.weights))

        for layer in range(len(self.weights) - 1, -1, -1):
            a_prev = x if layer == 0 else relu(pre_activations[layer - 1])
            grads[2 * layer] = a_prev.T @ grad
            grads[2 * layer + 1] = grad.sum(axis=0)
            grad = grad @ self.weights[layer].T
            if layer > 0:
                grad = grad * relu_grad(pre_activations[layer - 1])
        return grads, grad

    def to_dict(self) -> Dict:
        return {
            'format_version': CHECKPOINT_VERSION,
            'sizes': list(self.sizes),
            'weights': [w.tolist() for w in self.weights],
            'biases': [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "DenseNet":
        if data.get('format_version') != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {data.get('format_version')!r}")
        net = cls.__new__(cls)
        net.sizes = [int(s) for s in data['sizes']]
        net.weights = [np.array(w, dtype=np.float64) for w in data['weights']]
        net.biases = [np.array(b, dtype=np.float64) for b in data['biases']]
        for (fan_in, fan_out), w, b in zip(zip(net.sizes[:-1], net.sizes[1:]), net.weights, net.biases):
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise CheckpointError(f"layer shape {w.shape} does not match sizes {net.sizes}")
        return net

    def save(self, path: str):
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path: str) -> "DenseNet":
        with open(path, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


def forward(net: DenseNet, inputs: np.ndarray) -> np.ndarray:
    return net.forward(inputs)


@dataclass
class AdamState:
    """First/second moment accumulators for a list of parameter arrays"""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float, **kwargs) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **kwargs,
        )

    def to_dict(self) -> Dict:
        return {
            'lr': self.lr, 'beta1': self.beta1, 'beta2': self.beta2, 'eps': self.eps,
            'step': self.step,
            'm': [a.tolist() for a in self.m],
            'v': [a.tolist() for a in self.v],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "AdamState":
        return cls(
            lr=data['lr'], beta1=data['beta1'], beta2=data['beta2'], eps=data['eps'],
            step=int(data['step']),
            m=[np.array(a, dtype=np.float64) for a in data['m']],
            v=[np.array(a, dtype=np.float64) for a in data['v']],
        )


@dataclass
class UpdateReport:
    applied: bool
    grad_norm: float
    reason: str = ''


def _global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def adam_update(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], adam: AdamState) -> UpdateReport:
    """
    In-place Adam step on `params`; the step is skipped when any gradient is non-finite
    Returns: UpdateReport
    """
    norm = _global_norm(grads)
    if not np.isfinite(norm):
        logger.warning("rejected optimizer step: non-finite gradient")
        return UpdateReport(applied=False, grad_norm=norm, reason='non-finite gradient')

    adam.step += 1
    correction1 = 1.0 - adam.beta1 ** adam.step
    correction2 = 1.0 - adam.beta2 ** adam.step
    for p, g, m, v in zip(params, grads, adam.m, adam.v):
        m *= adam.beta1
        m += (1.0 - adam.beta1) * g
        v *= adam.beta2
        v += (1.0 - adam.beta2) * g * g
        p -= adam.lr * (m / correction1) / (np.sqrt(v / correction2) + adam.eps)
    return UpdateReport(applied=True, grad_norm=norm)


def backward_update(net: DenseNet, inputs: np.ndarray, output_gradients: np.ndarray,
                    adam: AdamState) -> UpdateReport:
    """
    Backpropagate `output_gradients` (dLoss/dOutput for each batch row) through
    the network at `inputs` and apply one Adam step
    Returns: UpdateReport with the global gradient norm
    """
    _, cache = net.forward(np.atleast_2d(inputs), keep_cache=True)
    grads, _ = net.backward(cache, np.atleast_2d(output_gradients))
    return adam_update(net.parameters(), grads, adam)


LossFn = Callable[[np.ndarray], Tuple[float, np.ndarray]]


def _nudge_off_kinks(net: DenseNet, inputs: np.ndarray, rng: np.random.Generator,
                     margin: float, attempts: int = 100) -> np.ndarray:
    """Resample input rows whose hidden pre-activations sit too close to zero"""
    x = np.array(inputs, dtype=np.float64, copy=True)
    for _ in range(attempts):
        _, cache = net.forward(x, keep_cache=True)
        near = np.zeros(x.shape[0], dtype=bool)
        for z in cache[1:]:
            near |= np.any(np.abs(z) < margin, axis=1)
        if not near.any():
            break
        x[near] += rng.normal(scale=0.1, size=x[near].shape)
    return x


def gradient_check(net: DenseNet, inputs: np.ndarray, loss: LossFn, step: float = 1e-5,
                   nudge_margin: Optional[float] = 1e-3, seed: int = 0) -> float:
    """
    Compare reverse-mode parameter gradients against central differences.

    `loss(outputs)` must return (value, dValue/dOutputs). The error of each
    coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1).
    Returns: the largest error over all parameters
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if nudge_margin:
        x = _nudge_off_kinks(net, x, np.random.default_rng(seed), nudge_margin)

    outputs, cache = net.forward(x, keep_cache=True)
    _, grad_out = loss(outputs)
    analytic, _ = net.backward(cache, grad_out)

    worst = 0.0
    for param, grad in zip(net.parameters(), analytic):
        flat = param.reshape(-1)
        flat_grad = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            plus, _ = loss(net.forward(x))
            flat[i] = original - step
            minus, _ = loss(net.forward(x))
            flat[i] = original
            numeric = (plus - minus) / (2.0 * step)
            scale = max(abs(flat_grad[i]), abs(numeric), 1.0)
            worst = max(worst, abs(flat_grad[i] - numeric) / scale)
    return worst
