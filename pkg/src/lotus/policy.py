"""Subspace-switching policies.

Three rules are available:

* ``AVG_DISPLACEMENT``: every ``verify_gap`` recordings, switch when the
  average unit-gradient displacement ``||d_cur - d_init|| / T`` is below
  ``gamma``.
* ``PATH_EFFICIENCY``: on the same cadence, switch when the ratio
  ``||P sum(g_hat)|| / ||sum(g_hat)||`` over the last ``k`` unit gradients is
  below ``gamma``.
* ``FIXED_INTERVAL``: switch every ``fixed_interval`` steps (GaLore-style).

Both adaptive rules also require ``t - t_last >= t_min``.
"""
from __future__ import annotations

import enum
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import LotusError, ShapeError, ZeroGradientError
from .subspace import Projector

GAMMA_RANGE = (0.005, 0.02)
VERIFY_GAP_RANGE = (25, 100)
CANCELLATION_TOL = 1e-12


class PolicyKind(enum.Enum):
    AVG_DISPLACEMENT = "avg"
    PATH_EFFICIENCY = "rho"
    FIXED_INTERVAL = "fixed"


@dataclass(frozen=True)
class SwitchConfig:
    gamma: float = 0.01
    verify_gap: int = 50
    t_min: int = 100
    kind: PolicyKind = PolicyKind.AVG_DISPLACEMENT
    fixed_interval: int = 200
    window_len: int | None = None  # defaults to verify_gap

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.verify_gap < 1 or self.fixed_interval < 1:
            raise ValueError("verify_gap and fixed_interval must be positive")
        if self.t_min < 0:
            raise ValueError("t_min must be nonnegative")
        if self.window_len is not None and self.window_len < 1:
            raise ValueError("window_len must be positive")
        if not isinstance(self.kind, PolicyKind):
            object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.kind is not PolicyKind.FIXED_INTERVAL:
            lo, hi = GAMMA_RANGE
            if not lo <= self.gamma <= hi:
                warnings.warn(f"gamma={self.gamma} outside recommended range [{lo}, {hi}]")
            lo, hi = VERIFY_GAP_RANGE
            if not lo <= self.verify_gap <= hi:
                warnings.warn(f"verify_gap={self.verify_gap} outside recommended range [{lo}, {hi}]")

    @property
    def window(self) -> int:
        return self.window_len if self.window_len is not None else self.verify_gap


def normalize(g) -> np.ndarray:
    """Flatten ``g`` and scale it to unit Euclidean norm."""
    flat = np.asarray(g, dtype=np.float64).ravel()
    norm = np.linalg.norm(flat)
    if not norm > 0.0:
        raise ZeroGradientError("cannot normalize a zero gradient")
    return flat / norm


class PathEfficiency(NamedTuple):
    value: float
    cancelled: bool  # window sum vanished; value forced to 0


@dataclass
class DisplacementTracker:
    """Running unit-gradient statistics for one layer.

    ``d_init``/``d_cur`` are unit vectors of the compressed gradient. The
    path-efficiency window holds the last ``window_len`` *full-rank* unit
    gradients, because the projector has to act on them.
    """

    window_len: int
    d_init: np.ndarray | None = None
    d_cur: np.ndarray | None = None
    steps: int = 0
    last_switch_step: int = 0
    window: deque = field(default_factory=deque)
    window_sum: np.ndarray | None = None
    full_shape: tuple | None = None

    @classmethod
    def start(cls, g_low, window_len: int, step: int = 0) -> "DisplacementTracker":
        tracker = cls(window_len)
        tracker.reset(g_low, step)
        return tracker

    @property
    def initialized(self) -> bool:
        return self.steps >= 1

    def reset(self, g_low, step: int):
        """Fresh subspace: ``d_init`` from ``g_low``, ``T = 1``, empty window."""
        self.d_init = normalize(g_low)
        self.d_cur = self.d_init
        self.steps = 1
        self.last_switch_step = step
        self.window.clear()
        self.window_sum = None
        self.full_shape = None

    def record(self, g_low, g_full=None):
        if not self.initialized:
            raise LotusError("tracker used before initialization")
        g_low = np.asarray(g_low, dtype=np.float64)
        if g_low.size != self.d_init.size:
            raise ShapeError(
                f"compressed gradient of size {g_low.size} does not match tracker "
                f"dimension {self.d_init.size}",
                g_low.shape,
            )
        unit = normalize(g_low)
        full_unit = None
        if g_full is not None:
            g_full = np.asarray(g_full, dtype=np.float64)
            if self.full_shape is not None and g_full.shape != self.full_shape:
                raise ShapeError(
                    f"full gradient shape {g_full.shape} differs from window shape {self.full_shape}",
                    g_full.shape,
                    self.full_shape,
                )
            full_unit = normalize(g_full)
        self.d_cur = unit
        self.steps += 1
        if full_unit is not None:
            self.full_shape = g_full.shape
            self.window.append(full_unit)
            if self.window_sum is None:
                self.window_sum = full_unit.copy()
            else:
                self.window_sum = self.window_sum + full_unit
            if len(self.window) > self.window_len:
                self.window_sum = self.window_sum - self.window.popleft()

    def avg_displacement(self) -> float:
        if not self.initialized:
            raise LotusError("tracker used before initialization")
        return float(np.linalg.norm(self.d_cur - self.d_init)) / self.steps

    def path_efficiency(self, projector: Projector) -> PathEfficiency:
        if not self.window:
            raise LotusError("path efficiency needs at least one recorded full gradient")
        total = self.window_sum.reshape(self.full_shape)
        denom = float(np.linalg.norm(total))
        if denom <= CANCELLATION_TOL:
            return PathEfficiency(0.0, True)
        return PathEfficiency(float(np.linalg.norm(projector.apply(total))) / denom, False)


class SwitchDecision(NamedTuple):
    switch: bool
    criterion: float
    clauses: dict


def should_switch(
    tracker: DisplacementTracker,
    config: SwitchConfig,
    step: int,
    projector: Projector | None = None,
) -> SwitchDecision:
    """Evaluate the configured rule at global step ``step`` (1-based)."""
    elapsed = step - tracker.last_switch_step
    if config.kind is PolicyKind.FIXED_INTERVAL:
        due = elapsed >= config.fixed_interval
        return SwitchDecision(due, tracker.avg_displacement(), {"interval": due})

    on_cadence = tracker.steps % config.verify_gap == 0
    spaced = elapsed >= config.t_min
    clauses = {"cadence": on_cadence, "t_min": spaced}
    if config.kind is PolicyKind.AVG_DISPLACEMENT:
        value = tracker.avg_displacement()
    else:
        if projector is None:
            raise LotusError("path-efficiency policy needs the current projector")
        rho = tracker.path_efficiency(projector)
        value = rho.value
        clauses["cancelled"] = rho.cancelled
    below = value < config.gamma
    clauses["threshold"] = below
    return SwitchDecision(on_cadence and spaced and below, value, clauses)
