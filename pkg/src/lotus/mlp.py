"""Tanh MLP with softmax cross-entropy and hand-written backprop."""
from __future__ import annotations

import numpy as np

from .linalg import RngState
from .problems import ProblemSpec, _Problem, softmax_xent

_TEACHER, _STUDENT, _TRAIN, _TEST, _ORDER = 11, 12, 13, 14, 15


def init_mlp(widths, rng: RngState, gain: float = 1.0) -> dict:
    """Weights ``W{i}`` of shape ``(out, in)`` scaled by ``gain / sqrt(in)``; zero biases."""
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        params[f"W{i}"] = gain * rng.derive(i).normal((fan_out, fan_in)) / np.sqrt(fan_in)
        params[f"b{i}"] = np.zeros(fan_out)
    return params


def forward(params, x, n_layers):
    acts = [x]
    h = x
    for i in range(n_layers):
        z = h @ params[f"W{i}"].T + params[f"b{i}"]
        h = np.tanh(z) if i < n_layers - 1 else z
        acts.append(h)
    return acts


def loss_and_grad(params, x, y, n_layers):
    acts = forward(params, x, n_layers)
    loss, delta = softmax_xent(acts[-1], y)
    grads = {}
    for i in reversed(range(n_layers)):
        grads[f"W{i}"] = delta.T @ acts[i]
        grads[f"b{i}"] = delta.sum(axis=0)
        if i:
            delta = (delta @ params[f"W{i}"]) * (1.0 - acts[i] ** 2)
    return loss, grads


class TeacherStudent(_Problem):
    """Classification labels produced by a random teacher network of the same widths.

    ``options``: ``train_samples`` (512), ``test_samples`` (256),
    ``batch_size`` (0 = full batch), ``teacher_gain`` (2.0).
    """

    def __init__(self, spec: ProblemSpec):
        super().__init__(spec)
        self.widths = spec.dims
        self.n_layers = len(self.widths) - 1
        opts = spec.options
        rng = spec.rng
        self.teacher = init_mlp(self.widths, rng.derive(_TEACHER), opts.get("teacher_gain", 2.0))
        self.x_train = rng.derive(_TRAIN).normal((opts.get("train_samples", 512), self.widths[0]))
        self.x_test = rng.derive(_TEST).normal((opts.get("test_samples", 256), self.widths[0]))
        self.y_train = self.predict(self.teacher, self.x_train)
        self.y_test = self.predict(self.teacher, self.x_test)
        self.batch_size = opts.get("batch_size", 0)

    def predict(self, params, x):
        return np.argmax(forward(params, x, self.n_layers)[-1], axis=1)

    def accuracy(self, params) -> float:
        return float(np.mean(self.predict(params, self.x_test) == self.y_test))

    def init_params(self) -> dict:
        return init_mlp(self.widths, self.spec.rng.derive(_STUDENT))

    def batch(self, step: int):
        n = self.x_train.shape[0]
        if not self.batch_size or self.batch_size >= n:
            return self.x_train, self.y_train
        per_epoch = n // self.batch_size
        epoch, k = divmod(step - 1, per_epoch)
        order = np.argsort(self.spec.rng.derive(_ORDER, epoch).uniform(n), kind="stable")
        idx = order[k * self.batch_size:(k + 1) * self.batch_size]
        return self.x_train[idx], self.y_train[idx]

    def loss_and_grad(self, params, step):
        x, y = self.batch(step)
        loss, grads = loss_and_grad(params, x, y, self.n_layers)
        if self.spec.noise_std:
            grads = {k: g + self.noise(g.shape, step, i) for i, (k, g) in enumerate(sorted(grads.items()))}
        return loss, grads
