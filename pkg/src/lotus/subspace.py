"""Low-rank gradient projectors: build, compress, lift back."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import RankDeficiencyError, RankTooLargeError, ShapeError, ZeroGradientError
from .linalg import RngState


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class ProjectionConfig:
    """How a projector basis is computed.

    ``method`` is ``"rsvd"`` (randomized range finder) or ``"svd"`` (exact
    SVD, the fixed-interval baseline's choice).
    """

    method: str = "rsvd"
    oversample: int = linalg.DEFAULT_OVERSAMPLE
    power_iters: int = linalg.DEFAULT_POWER_ITERS
    svd_method: str = "lapack"

    def __post_init__(self):
        if self.method not in ("rsvd", "svd"):
            raise ValueError(f"unknown projection method {self.method!r}")


@dataclass(frozen=True, eq=False)
class Projector:
    basis: np.ndarray
    side: Side
    rank: int
    created_at_step: int = 0
    full_shape: tuple = field(default=())

    def __post_init__(self):
        self.basis.setflags(write=False)

    def compressed_shape(self, shape=None) -> tuple:
        m, n = shape if shape is not None else self.full_shape
        return (self.rank, n) if self.side is Side.LEFT else (m, self.rank)

    def apply(self, g_full) -> np.ndarray:
        """Orthogonal projection ``QQ^T g`` (left) or ``g QQ^T`` (right) in full space."""
        return project_back(self, project(self, g_full))


def projection_side(shape) -> Side:
    m, n = shape
    return Side.LEFT if m <= n else Side.RIGHT


def compute_projector(
    g_full,
    rank: int,
    rng: RngState | None = None,
    config: ProjectionConfig | None = None,
    step: int = 0,
) -> Projector:
    """Projector onto the dominant rank-``rank`` subspace of the shorter side of ``g_full``.

    When ``rank`` equals the shorter dimension the subspace is the whole
    side, so the identity basis is returned without any factorization.
    """
    g = linalg.as_matrix(g_full, "g_full")
    m, n = g.shape
    if rank < 1 or rank > min(m, n):
        raise RankTooLargeError(rank, g.shape)
    if not np.any(g):
        raise ZeroGradientError(f"zero gradient of shape {g.shape} defines no subspace")
    config = config or ProjectionConfig()
    side = projection_side(g.shape)
    target = g if side is Side.LEFT else g.T
    dim = target.shape[0]
    if rank == dim:
        basis = np.eye(dim)
    elif config.method == "svd":
        basis = linalg.exact_svd(target, method=config.svd_method).u[:, :rank]
    else:
        # oversampling cannot exceed the available dimension
        oversample = min(config.oversample, min(target.shape) - rank)
        try:
            basis = linalg.randomized_range(
                target, rank, oversample, config.power_iters, rng or RngState(0)
            )
        except RankDeficiencyError:
            # gradient has numerical rank below `rank`; the exact factorization
            # still spans it and pads with an orthonormal complement
            basis = linalg.exact_svd(target, method=config.svd_method).u[:, :rank]
    return Projector(np.ascontiguousarray(basis), side, rank, step, g.shape)


def _check(p: Projector, g: np.ndarray, compressed: bool):
    axis = 0 if p.side is Side.LEFT else 1
    want = p.rank if compressed else p.basis.shape[0]
    if g.shape[axis] != want:
        label = "compressed gradient" if compressed else "full gradient"
        raise ShapeError(
            f"{label} shape {g.shape} incompatible with {p.side.value} projector "
            f"basis {p.basis.shape}",
            g.shape,
            p.basis.shape,
        )


def project(p: Projector, g_full) -> np.ndarray:
    g = linalg.as_matrix(g_full, "g_full", check_finite=False)
    _check(p, g, compressed=False)
    return p.basis.T @ g if p.side is Side.LEFT else g @ p.basis


def project_back(p: Projector, g_low) -> np.ndarray:
    g = linalg.as_matrix(g_low, "g_low", check_finite=False)
    _check(p, g, compressed=True)
    return p.basis @ g if p.side is Side.LEFT else g @ p.basis.T
