"""SGD with Nesterov momentum, the training loop, and accuracy evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from legr.nn.model import Model, Param


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    nesterov: bool = True
    weight_decay: float = 5e-4
    batch_size: int = 32
    # (step, multiplier): from ``step`` on, the rate is scaled by the product
    # of every multiplier whose step has been reached
    lr_schedule: list[tuple[int, float]] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self):
        self.lr_schedule = [(int(s), float(m)) for s, m in self.lr_schedule]
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        steps = [s for s, _ in self.lr_schedule]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("lr_schedule steps must be strictly increasing")

    @classmethod
    def epoch_preset(cls, steps_per_epoch: int, epochs: int, drops: list[float], factor: float,
                     **kwargs) -> "TrainConfig":
        """Schedule that divides the rate by ``factor`` at fractions ``drops`` of training."""
        schedule = [(int(round(f * epochs)) * steps_per_epoch, 1.0 / factor) for f in drops]
        return cls(lr_schedule=schedule, **kwargs)


def lr_at(config: TrainConfig, step_index: int) -> float:
    lr = config.learning_rate
    for step, mult in config.lr_schedule:
        if step_index >= step:
            lr *= mult
    return lr


def sgd_step(params: list[Param], config: TrainConfig, step_index: int) -> None:
    """One in-place update, then zero the gradients.

    g = grad + wd * w;  v = mu * v + g;  w -= lr * (g + mu * v) with Nesterov,
    or w -= lr * v without.
    """
    lr = lr_at(config, step_index)
    mu = config.momentum
    for p in params:
        g = p.grad + config.weight_decay * p.value if config.weight_decay else p.grad.copy()
        if mu:
            p.momentum *= mu
            p.momentum += g
            update = g + mu * p.momentum if config.nesterov else p.momentum
        else:
            update = g
        p.value -= lr * update
        p.grad[...] = 0.0


class BatchStream:
    """Endless seeded stream of minibatches; each epoch is a fresh permutation."""

    def __init__(self, n: int, batch_size: int, seed: int):
        if n == 0:
            raise ValueError("cannot draw batches from an empty dataset")
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = np.random.default_rng(seed)
        self._order = np.zeros(0, dtype=np.int64)

    def next(self) -> np.ndarray:
        while len(self._order) < self.batch_size:
            self._order = np.concatenate([self._order, self.rng.permutation(self.n)])
        idx, self._order = self._order[:self.batch_size], self._order[self.batch_size:]
        return idx


def train_steps(model: Model, data, config: TrainConfig, n_steps: int, start_step: int = 0,
                stream: BatchStream | None = None, log_every: int = 0, log=None):
    """Apply exactly ``n_steps`` SGD updates; returns (model, last batch loss)."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    if len(data.labels) == 0:
        raise ValueError("cannot train on an empty dataset")
    if n_steps == 0:
        return model, None
    stream = stream or BatchStream(len(data.labels), config.batch_size, config.seed)
    params = model.parameters()
    model.zero_grad()
    loss = None
    for i in range(n_steps):
        idx = stream.next()
        loss = model.loss(data.images[idx], data.labels[idx])
        model.backward()
        sgd_step(params, config, start_step + i)
        if log and log_every and (i + 1) % log_every == 0:
            log(start_step + i + 1, loss)
    return model, loss


def evaluate(model: Model, data, batch_size: int = 256) -> float:
    """Fraction of samples whose argmax prediction equals the label."""
    labels = np.asarray(data.labels)
    if len(labels) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    classes = model.graph.num_classes
    if labels.min() < 0 or labels.max() >= classes:
        raise ValueError(f"labels must lie in [0, {classes}), got range [{labels.min()}, {labels.max()}]")
    pred = model.predict(data.images, batch_size)
    return float(np.mean(pred == labels))
