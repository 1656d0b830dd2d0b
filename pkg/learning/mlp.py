#!/usr/bin/env python3
"""
Feed-forward neural network with incremental training

Sigmoid hidden layers; the output layer is a softmax (classifier mode) or a
single sigmoid unit (scorer mode). Both modes train on cross-entropy with
plain SGD, so the output-layer error is always (prediction - target).
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from errors import CheckpointError, DimensionMismatch, NonFiniteInput

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "gateway-mlp"
CHECKPOINT_VERSION = 1
FD_STEP = 1e-5
# Predictions are kept strictly inside (0, 1)
OUTPUT_EPS = 1e-12

Target = Union[int, float, Sequence[float], np.ndarray]
Sample = Tuple[Sequence[float], Target]


class MlpMode(str, Enum):
    CLASSIFIER = "classifier"
    SCORER = "scorer"


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - np.max(z, axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=-1, keepdims=True)


def _bounded(p: np.ndarray) -> np.ndarray:
    return np.clip(p, OUTPUT_EPS, 1.0 - OUTPUT_EPS)


@dataclass
class MlpModel:
    """Layer sizes plus one (weights, bias) pair per layer; weights are (fan_in, fan_out)"""

    layer_sizes: Tuple[int, ...]
    mode: MlpMode
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    rng_seed: int = 0
    samples_seen: int = field(default=0, compare=False)

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        self.mode = MlpMode(self.mode)
        if len(self.layer_sizes) < 2:
            raise ValueError("an MLP needs at least an input and an output layer")
        if self.mode is MlpMode.SCORER and self.layer_sizes[-1] != 1:
            raise ValueError("scorer mode has exactly one output")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != expected or b.shape != (expected[1],):
                raise ValueError(f"layer {i} parameters {w.shape}/{b.shape} do not match {expected}")

    @classmethod
    def create(cls, input_size: int, hidden_sizes: Sequence[int], output_size: int,
               mode: MlpMode = MlpMode.CLASSIFIER, seed: int = 0) -> 'MlpModel':
        """Xavier-uniform weights, zero biases"""
        sizes = (input_size, *hidden_sizes, output_size)
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(layer_sizes=sizes, mode=mode, weights=weights, biases=biases, rng_seed=seed)

    @classmethod
    def zeros(cls, layer_sizes: Sequence[int], mode: MlpMode = MlpMode.CLASSIFIER) -> 'MlpModel':
        sizes = tuple(layer_sizes)
        return cls(
            layer_sizes=sizes, mode=mode,
            weights=[np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
            biases=[np.zeros(b) for b in sizes[1:]],
        )

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> 'MlpModel':
        return MlpModel(
            layer_sizes=self.layer_sizes, mode=self.mode,
            weights=[w.copy() for w in self.weights], biases=[b.copy() for b in self.biases],
            rng_seed=self.rng_seed, samples_seen=self.samples_seen,
        )

    def parameters_equal(self, other: 'MlpModel') -> bool:
        return (self.layer_sizes == other.layer_sizes
                and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
                and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases)))

    # Forward / backward ---------------------------------------------------

    def _forward(self, x: np.ndarray) -> List[np.ndarray]:
        activations = [x]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = activations[-1] @ w + b
            if i < last:
                activations.append(sigmoid(z))
            elif self.mode is MlpMode.CLASSIFIER:
                activations.append(softmax(z))
            else:
                activations.append(sigmoid(z))
        return activations

    def _gradients(self, x: np.ndarray, y: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        """Mean cross-entropy gradients over the rows of x"""
        activations = self._forward(x)
        n = x.shape[0]
        delta = (activations[-1] - y) / n
        grad_w: List[np.ndarray] = [np.empty(0)] * len(self.weights)
        grad_b: List[np.ndarray] = [np.empty(0)] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            grad_w[i] = activations[i].T @ delta
            grad_b[i] = delta.sum(axis=0)
            if i:
                a = activations[i]
                delta = (delta @ self.weights[i].T) * a * (1.0 - a)
        return grad_w, grad_b

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        """Mean cross-entropy"""
        p = np.clip(self._forward(np.atleast_2d(x))[-1], 1e-15, 1.0 - 1e-15)
        y = np.atleast_2d(y)
        if self.mode is MlpMode.CLASSIFIER:
            return float(-np.mean(np.sum(y * np.log(p), axis=1)))
        return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))

    # Public operations ----------------------------------------------------

    def predict(self, features: Sequence[float]) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if x.ndim != 1 or x.shape[0] != self.input_size:
            raise DimensionMismatch(self.input_size, x.shape[-1] if x.ndim else 0)
        return _bounded(self._forward(x[np.newaxis, :])[-1][0])

    def predict_batch(self, features: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=float))
        if x.shape[1] != self.input_size:
            raise DimensionMismatch(self.input_size, x.shape[1])
        return _bounded(self._forward(x)[-1])

    def score(self, features: Sequence[float]) -> float:
        """Scalar output of a scorer"""
        return float(self.predict(features)[0])

    def train_incremental(self, batch: Sequence[Sample], epochs: int, learning_rate: float,
                          weight_decay: float = 0.0, batch_size: int = 1) -> 'MlpModel':
        """
        Continue training from the current parameters and return the updated copy.

        batch_size 1 is per-sample SGD in batch order, 0 the full batch per step.
        The receiver is left untouched.
        """
        updated = self.copy()
        if not batch:
            return updated
        x, y = self._encode_batch(batch)
        if epochs <= 0 or learning_rate == 0:
            return updated

        step = x.shape[0] if batch_size <= 0 else batch_size
        for _ in range(epochs):
            for start in range(0, x.shape[0], step):
                grad_w, grad_b = updated._gradients(x[start:start + step], y[start:start + step])
                for i in range(len(updated.weights)):
                    if weight_decay:
                        grad_w[i] = grad_w[i] + weight_decay * updated.weights[i]
                    updated.weights[i] -= learning_rate * grad_w[i]
                    updated.biases[i] -= learning_rate * grad_b[i]
        updated.samples_seen += x.shape[0] * epochs
        return updated

    def _encode_batch(self, batch: Sequence[Sample]) -> Tuple[np.ndarray, np.ndarray]:
        rows = [np.asarray(f, dtype=float).reshape(-1) for f, _ in batch]
        for row in rows:
            if row.shape[0] != self.input_size:
                raise DimensionMismatch(self.input_size, row.shape[0])
        x = np.vstack(rows)
        y = np.vstack([self._encode_target(t) for _, t in batch])
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise NonFiniteInput("training batch contains NaN or infinite values")
        return x, y

    def _encode_target(self, target: Target) -> np.ndarray:
        if np.isscalar(target):
            if self.mode is MlpMode.SCORER:
                return np.array([float(target)])
            index = int(target)
            if not 0 <= index < self.output_size:
                raise DimensionMismatch(self.output_size, index + 1, what="class index")
            one_hot = np.zeros(self.output_size)
            one_hot[index] = 1.0
            return one_hot
        vector = np.asarray(target, dtype=float).reshape(-1)
        if vector.shape[0] != self.output_size:
            raise DimensionMismatch(self.output_size, vector.shape[0], what="target")
        return vector

    def gradient_check(self, sample: Sample) -> float:
        """
        Largest relative discrepancy between backpropagated and central
        finite-difference gradients over every parameter.
        """
        x, y = self._encode_batch([sample])
        grad_w, grad_b = self._gradients(x, y)
        shifted = self.copy()
        worst = 0.0
        for params, grads in ((shifted.weights, grad_w), (shifted.biases, grad_b)):
            for tensor, grad in zip(params, grads):
                flat, flat_grad = tensor.reshape(-1), grad.reshape(-1)
                for j in range(flat.shape[0]):
                    original = flat[j]
                    flat[j] = original + FD_STEP
                    plus = shifted.loss(x, y)
                    flat[j] = original - FD_STEP
                    minus = shifted.loss(x, y)
                    flat[j] = original
                    numeric = (plus - minus) / (2 * FD_STEP)
                    analytic = flat_grad[j]
                    rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-6)
                    worst = max(worst, rel)
        return worst

    # Checkpoints ----------------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        return {
            'format': CHECKPOINT_FORMAT,
            'version': CHECKPOINT_VERSION,
            'mode': self.mode.value,
            'layer_sizes': list(self.layer_sizes),
            'rng_seed': self.rng_seed,
            'samples_seen': self.samples_seen,
            'weights': [w.tolist() for w in self.weights],
            'biases': [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MlpModel':
        if data.get('format') != CHECKPOINT_FORMAT:
            raise CheckpointError(f"not a model checkpoint (format={data.get('format')!r})")
        if data.get('version') != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {data.get('version')!r}")
        try:
            return cls(
                layer_sizes=tuple(data['layer_sizes']),
                mode=MlpMode(data['mode']),
                weights=[np.array(w, dtype=float).reshape(a, b) for w, a, b in
                         zip(data['weights'], data['layer_sizes'][:-1], data['layer_sizes'][1:])],
                biases=[np.array(b, dtype=float) for b in data['biases']],
                rng_seed=int(data.get('rng_seed', 0)),
                samples_seen=int(data.get('samples_seen', 0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"corrupt checkpoint: {e}") from e

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict()), encoding='utf-8')
        logger.debug(f"Saved {self.mode.value} model {self.layer_sizes} to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'MlpModel':
        try:
            data = json.loads(Path(path).read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
        return cls.from_dict(data)


def predict(model: MlpModel, features: Sequence[float]) -> np.ndarray:
    return model.predict(features)


def train_incremental(model: MlpModel, batch: Sequence[Sample], epochs: int, learning_rate: float,
                      weight_decay: float = 0.0, batch_size: int = 1) -> MlpModel:
    return model.train_incremental(batch, epochs, learning_rate, weight_decay, batch_size)


def gradient_check(model: MlpModel, sample: Sample) -> float:
    return model.gradient_check(sample)


class RunningMinMax:
    """Min-max scaling with bounds maintained online"""

    def __init__(self):
        self.low = math.inf
        self.high = -math.inf

    def update(self, value: float) -> None:
        self.low = min(self.low, value)
        self.high = max(self.high, value)

    def scale(self, value: float) -> float:
        if not self.high > self.low:
            return 0.0
        return min(1.0, max(0.0, (value - self.low) / (self.high - self.low)))
