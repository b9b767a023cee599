"""Lotus: Adam over projected gradients with adaptive subspace switching."""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from . import subspace
from .errors import NonFiniteGradientError, ShapeError, ZeroGradientError
from .linalg import RngState
from .policy import DisplacementTracker, SwitchConfig, should_switch
from .subspace import ProjectionConfig, Projector


class MomentPolicy(enum.Enum):
    RESET = "reset"
    PROJECT = "project"  # carry moments into the new basis


@dataclass(frozen=True)
class LotusHyperparams:
    learning_rate: float = 1e-3
    rank: int = 8
    scale: float = 0.25
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    switch: SwitchConfig = field(default_factory=SwitchConfig)
    rng: RngState = field(default_factory=lambda: RngState(0))
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    use_moments: bool = True  # False gives plain projected gradient descent
    moment_policy: MomentPolicy = MomentPolicy.RESET

    def __post_init__(self):
        if not self.learning_rate > 0 or not self.scale > 0:
            raise ValueError("learning_rate and scale must be positive")
        if self.rank < 1:
            raise ValueError("rank must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not isinstance(self.moment_policy, MomentPolicy):
            object.__setattr__(self, "moment_policy", MomentPolicy(self.moment_policy))


@dataclass
class LayerOptState:
    projector: Projector
    tracker: DisplacementTracker
    m1: np.ndarray
    m2: np.ndarray
    adam_step: int = 0
    switch_count: int = 0
    projector_builds: int = 1
    layer_id: int = 0


@dataclass
class StepDiagnostics:
    step: int
    criterion: float
    switched: bool
    clauses: dict
    switch_skipped: bool = False
    wall_time_ns: int = 0
    zero_projection: bool = False  # compressed gradient vanished; tracker not updated


def _build_projector(g_full, hp: LotusHyperparams, layer_id: int, build: int, step: int):
    rank = min(hp.rank, *np.shape(g_full))
    rng = hp.rng.derive(layer_id, build)
    return subspace.compute_projector(g_full, rank, rng, hp.projection, step)


def init_layer(weight_shape, first_grad, hp: LotusHyperparams, layer_id: int = 0, step: int = 0) -> LayerOptState:
    """Build the first projector and tracker for a layer.

    A requested rank larger than the short side of the weight is clamped to
    that side.
    """
    g = np.asarray(first_grad, dtype=np.float64)
    if g.shape != tuple(weight_shape):
        raise ShapeError(f"gradient shape {g.shape} != weight shape {tuple(weight_shape)}", g.shape)
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradientError("non-finite gradient at initialization", step)
    proj = _build_projector(g, hp, layer_id, 0, step)
    g_low = subspace.project(proj, g)
    tracker = DisplacementTracker.start(g_low, hp.switch.window, step)
    return LayerOptState(proj, tracker, np.zeros_like(g_low), np.zeros_like(g_low), layer_id=layer_id)


def _switch(state: LayerOptState, g_full, hp: LotusHyperparams, step: int):
    new = _build_projector(g_full, hp, state.layer_id, state.projector_builds, step)
    state.projector_builds += 1
    g_low = subspace.project(new, g_full)
    state.tracker.reset(g_low, step)
    if hp.moment_policy is MomentPolicy.PROJECT:
        change = new.basis.T @ state.projector.basis
        if new.side is subspace.Side.LEFT:
            state.m1 = change @ state.m1
            state.m2 = (change * change) @ state.m2
        else:
            state.m1 = state.m1 @ change.T
            state.m2 = state.m2 @ (change * change).T
    else:
        state.m1 = np.zeros_like(g_low)
        state.m2 = np.zeros_like(g_low)
        state.adam_step = 0
    state.projector = new
    state.switch_count += 1


def step(state: LayerOptState, weight, g_full, hp: LotusHyperparams, global_step: int):
    """One optimizer step for a single layer.

    Returns ``(state, new_weight, diagnostics)``. ``state`` is updated in
    place; ``weight`` is not modified.
    """
    start = time.perf_counter_ns()
    g = np.asarray(g_full, dtype=np.float64)
    if g.shape != np.shape(weight):
        raise ShapeError(f"gradient shape {g.shape} != weight shape {np.shape(weight)}", g.shape)
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradientError(f"non-finite gradient at step {global_step}", global_step)

    proj = state.projector
    g_low = subspace.project(proj, g)
    zero_projection = not np.any(g_low)
    if not zero_projection:
        state.tracker.record(g_low, g)

    if hp.use_moments:
        state.adam_step += 1
        b1, b2 = hp.beta1, hp.beta2
        state.m1 = b1 * state.m1 + (1.0 - b1) * g_low
        state.m2 = b2 * state.m2 + (1.0 - b2) * (g_low * g_low)
        m_hat = state.m1 / (1.0 - b1**state.adam_step)
        v_hat = state.m2 / (1.0 - b2**state.adam_step)
        update = m_hat / (np.sqrt(v_hat) + hp.eps)
    else:
        update = g_low
    new_weight = weight - hp.learning_rate * hp.scale * subspace.project_back(proj, update)

    decision = should_switch(state.tracker, hp.switch, global_step, proj)
    switched = skipped = False
    if decision.switch:
        try:
            _switch(state, g, hp, global_step)
            switched = True
        except ZeroGradientError:
            skipped = True
    diag = StepDiagnostics(
        global_step,
        decision.criterion,
        switched,
        decision.clauses,
        skipped,
        time.perf_counter_ns() - start,
        zero_projection,
    )
    return state, new_weight, diag


def projected_descent_step(projector: Projector, weight, g_full, lr: float):
    """Plain ``w <- w - lr * P g`` with no moments and no scale factor."""
    return weight - lr * projector.apply(g_full)


class Adam:
    """Dense Adam over named parameters (used for vectors and as a baseline)."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict = {}
        self.v: dict = {}
        self.t: dict = {}

    def update(self, name, param, grad):
        if name not in self.m:
            self.m[name] = np.zeros_like(grad)
            self.v[name] = np.zeros_like(grad)
            self.t[name] = 0
        self.t[name] += 1
        t = self.t[name]
        self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
        self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (grad * grad)
        m_hat = self.m[name] / (1.0 - self.beta1**t)
        v_hat = self.v[name] / (1.0 - self.beta2**t)
        return param - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def step(self, params: dict, grads: dict):
        for name in params:
            params[name] = self.update(name, params[name], grads[name])


class Lotus:
    """Lotus over a dict of named parameters.

    2-D parameters get a low-rank projected state; everything else is handed
    to dense Adam with the same betas and learning rate.
    """

    def __init__(self, hp: LotusHyperparams):
        self.hp = hp
        self.layers: dict[str, LayerOptState] = {}
        self.dense = Adam(hp.learning_rate, hp.beta1, hp.beta2, hp.eps)
        self._order: list[str] = []

    def step(self, params: dict, grads: dict, global_step: int) -> dict:
        diags = {}
        for name in params:
            p, g = params[name], grads[name]
            if np.ndim(p) != 2:
                if not np.all(np.isfinite(g)):
                    raise NonFiniteGradientError(f"non-finite gradient for {name} at step {global_step}", global_step)
                params[name] = self.dense.update(name, p, g)
                continue
            if name not in self.layers:
                self._order.append(name)
                self.layers[name] = init_layer(
                    np.shape(p), g, self.hp, layer_id=self._order.index(name), step=global_step - 1
                )
            _, params[name], diags[name] = step(self.layers[name], p, g, self.hp, global_step)
        return diags

    @property
    def switch_count(self) -> int:
        return sum(s.switch_count for s in self.layers.values())

    @property
    def projector_builds(self) -> int:
        return sum(s.projector_builds for s in self.layers.values())


class AccountingMode(enum.Enum):
    FULL_ADAM = "full"
    LOW_RANK = "lowrank"


@dataclass(frozen=True)
class AccountingReport:
    shape: tuple
    rank: int
    mode: AccountingMode
    gradient: int
    projector: int
    moments: int
    full_adam_total: int
    low_rank_total: int

    @property
    def total(self) -> int:
        return self.gradient + self.projector + self.moments

    @property
    def reduction(self) -> float:
        return 1.0 - self.low_rank_total / self.full_adam_total


def memory_accounting(weight_shape, rank: int, mode=AccountingMode.LOW_RANK) -> AccountingReport:
    """Scalar counts for gradient plus optimizer state of one ``m x n`` layer.

    Full Adam keeps ``mn`` gradient and ``2mn`` moment entries. The low-rank
    variant keeps the full gradient, an ``r x min(m, n)`` projector and
    moments of the compressed shape ``r x max(m, n)``. The reduction is not
    clamped, so it turns negative when ``r`` approaches ``min(m, n)``.
    """
    m, n = (int(x) for x in weight_shape)
    if not 1 <= rank <= min(m, n):
        raise ValueError(f"rank {rank} must lie in [1, {min(m, n)}]")
    mode = AccountingMode(mode)
    full = 3 * m * n
    low = m * n + rank * min(m, n) + 2 * rank * max(m, n)
    if mode is AccountingMode.FULL_ADAM:
        return AccountingReport((m, n), rank, mode, m * n, 0, 2 * m * n, full, low)
    return AccountingReport((m, n), rank, mode, m * n, rank * min(m, n), 2 * rank * max(m, n), full, low)
