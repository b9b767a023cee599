"""Wall-clock comparison of randomized and exact projector construction."""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

from .linalg import RngState
from .subspace import ProjectionConfig, compute_projector


@dataclass(frozen=True)
class TimingRow:
    method: str
    size: tuple
    rank: int
    times_s: tuple

    @property
    def median_s(self) -> float:
        return statistics.median(self.times_s)


def time_projector(g, rank: int, config: ProjectionConfig, repeats: int = 3, rng: RngState | None = None) -> tuple:
    times = []
    for i in range(repeats):
        start = time.perf_counter()
        compute_projector(g, rank, (rng or RngState(0)).derive(i), config)
        times.append(time.perf_counter() - start)
    return tuple(times)


def bench_svd(size=(1024, 1024), rank: int = 32, repeats: int = 3, seed: int = 0) -> list[TimingRow]:
    """Median build time of the rSVD projector vs the exact-SVD projector on a Gaussian matrix."""
    rng = RngState(seed)
    g = rng.derive(0).normal(size)
    rows = []
    for name, cfg in (("rsvd", ProjectionConfig("rsvd")), ("svd", ProjectionConfig("svd"))):
        rows.append(TimingRow(name, tuple(size), rank, time_projector(g, rank, cfg, repeats, rng.derive(1))))
    return rows
