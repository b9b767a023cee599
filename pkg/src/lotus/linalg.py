"""Dense linear algebra: products, QR, exact SVD and the randomized range finder.

Matrices are plain 2-D float64 ``numpy.ndarray`` objects. Every function here
is pure; randomness comes in only through an explicit :class:`RngState`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, NonFiniteError, RankDeficiencyError, ShapeError

RANK_TOL = 1e-12
JACOBI_MAX_SWEEPS = 60
DEFAULT_OVERSAMPLE = 5
DEFAULT_POWER_ITERS = 2

_U64_MASK = (1 << 64) - 1


def as_matrix(a, name="matrix", check_finite=True) -> np.ndarray:
    """Coerce ``a`` to a 2-D float64 array, rejecting empty or non-finite input."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}", arr.shape)
    if check_finite and not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class RngState:
    """Seed for a platform-independent Gaussian stream.

    Uniforms come from the Philox-4x64 counter-based generator keyed by
    ``seed`` (counter starting at zero); Gaussians are produced from pairs of
    53-bit uniforms with the Box-Muller transform. Independent sub-streams
    are obtained with :meth:`derive`, which hashes ``(seed, *keys)`` through
    ``numpy.random.SeedSequence``.
    """

    seed: int

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _U64_MASK:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def derive(self, *keys: int) -> "RngState":
        ss = np.random.SeedSequence(int(self.seed), spawn_key=tuple(int(k) for k in keys))
        return RngState(int(ss.generate_state(1, np.uint64)[0]))

    def uniform(self, count: int) -> np.ndarray:
        """``count`` uniforms in the half-open interval (0, 1]."""
        raw = np.random.Philox(key=int(self.seed)).random_raw(count)
        return ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53

    def normal(self, shape) -> np.ndarray:
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        n = int(np.prod(shape))
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        radius = np.sqrt(-2.0 * np.log(u[:pairs]))
        theta = 2.0 * np.pi * u[pairs:]
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(theta)
        z[1::2] = radius * np.sin(theta)
        return z[:n].reshape(shape)


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a", check_finite=False)
    b = as_matrix(b, "b", check_finite=False)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}", a.shape, b.shape)
    return a @ b


def _householder_q(a: np.ndarray, check_cols: int, tol: float):
    q, r = np.linalg.qr(a, mode="reduced")
    diag = np.diag(r)
    signs = np.where(diag < 0, -1.0, 1.0)
    q = q * signs
    scale = np.max(np.abs(a)) if a.size else 0.0
    threshold = tol * scale
    mags = np.abs(diag[:check_cols])
    bad = np.nonzero(mags <= threshold)[0]
    if bad.size:
        j = int(bad[0])
        raise RankDeficiencyError(j, float(mags[j]), float(threshold))
    return q


def qr_orthonormalize(a, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis for the column span of a tall, full-column-rank matrix.

    Householder QR with the sign convention ``diag(R) >= 0``, so the result is
    unique. Raises :class:`RankDeficiencyError` naming the first column whose
    ``|R_jj|`` falls below ``tol`` times the largest entry of ``a``.
    """
    a = as_matrix(a, "a")
    if a.shape[0] < a.shape[1]:
        raise ShapeError(f"qr_orthonormalize needs rows >= cols, got {a.shape}", a.shape)
    return _householder_q(a, a.shape[1], tol)


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.singular_values) @ self.v.T


def _tournament_rounds(n: int):
    """Round-robin pairings: every column pair meets exactly once per sweep."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        top, bot = players[: size // 2], players[size // 2:][::-1]
        pairs = [(p, q) if p < q else (q, p) for p, q in zip(top, bot) if p >= 0 and q >= 0]
        rounds.append((np.array([p for p, _ in pairs]), np.array([q for _, q in pairs])))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _complete_basis(u: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Replace the columns of ``u`` not flagged ``good`` by an orthonormal complement."""
    m, k = u.shape
    keep = u[:, good]
    missing = k - keep.shape[1]
    if missing == 0:
        return u
    comp = np.eye(m) - keep @ keep.T
    q, _, _ = scipy.linalg.qr(comp, pivoting=True)
    fill = q[:, :missing]
    fill = fill - keep @ (keep.T @ fill)
    fill, _ = np.linalg.qr(fill)
    out = u.copy()
    out[:, ~good] = fill
    return out


def _jacobi_svd(a: np.ndarray, max_sweeps: int) -> SvdResult:
    # one-sided Jacobi on a tall matrix; rotations applied to n/2 disjoint pairs at once
    m, n = a.shape
    work = a.copy()
    v = np.eye(n)
    tol = np.finfo(float).eps * m
    rounds = _tournament_rounds(n)
    off = np.inf
    for _ in range(max_sweeps):
        off = 0.0
        for p, q in rounds:
            if p.size == 0:
                continue
            ap, aq = work[:, p], work[:, q]
            alpha = np.einsum("ij,ij->j", ap, ap)
            beta = np.einsum("ij,ij->j", aq, aq)
            gamma = np.einsum("ij,ij->j", ap, aq)
            denom = np.sqrt(alpha * beta)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(denom > 0, np.abs(gamma) / denom, 0.0)
            off = max(off, float(ratio.max()))
            active = ratio > tol
            if not active.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                zeta = np.where(active, (beta - alpha) / (2.0 * np.where(active, gamma, 1.0)), 0.0)
            t = np.where(active, np.copysign(1.0, zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta)), 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            work[:, p], work[:, q] = c * ap - s * aq, s * ap + c * aq
            vp, vq = v[:, p], v[:, q]
            v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
        if off <= tol:
            break
    else:
        raise ConvergenceError(f"Jacobi SVD did not converge in {max_sweeps} sweeps", off)

    sv = np.linalg.norm(work, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv, work, v = sv[order], work[:, order], v[:, order]
    smax = sv[0] if sv.size else 0.0
    good = sv > smax * tol
    u = np.zeros_like(work)
    u[:, good] = work[:, good] / sv[good]
    u = _complete_basis(u, good)
    sv = np.where(good, sv, 0.0)
    return SvdResult(u, sv, v)


def exact_svd(a, method: str = "jacobi", max_sweeps: int = JACOBI_MAX_SWEEPS) -> SvdResult:
    """Thin SVD ``a = u diag(s) v^T`` with ``k = min(m, n)`` components.

    ``method="jacobi"`` is the in-house one-sided Jacobi solver (accurate,
    slow on large inputs). ``method="lapack"`` delegates to LAPACK ``gesdd``
    and is what the fixed-interval baseline and the timing benchmark use.
    Column signs are fixed so the largest-magnitude entry of each ``v``
    column is positive, making the output deterministic across methods.
    """
    a = as_matrix(a, "a")
    if method == "lapack":
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        res = SvdResult(u, s, vt.T)
    elif method == "jacobi":
        if a.shape[0] >= a.shape[1]:
            res = _jacobi_svd(a, max_sweeps)
        else:
            t = _jacobi_svd(a.T, max_sweeps)
            res = SvdResult(t.v, t.singular_values, t.u)
    else:
        raise ValueError(f"unknown SVD method {method!r}")
    idx = np.argmax(np.abs(res.v), axis=0)
    signs = np.where(res.v[idx, np.arange(res.v.shape[1])] < 0, -1.0, 1.0)
    return SvdResult(res.u * signs, res.singular_values.copy(), res.v * signs)


def randomized_range(
    a,
    rank: int,
    oversample: int = DEFAULT_OVERSAMPLE,
    power_iters: int = DEFAULT_POWER_ITERS,
    rng: RngState | None = None,
    tol: float = RANK_TOL,
) -> np.ndarray:
    """Approximate the dominant ``rank``-dimensional left singular subspace of ``a``.

    Gaussian sketch ``Y = A @ Omega`` with ``rank + oversample`` columns,
    followed by ``power_iters`` rounds of subspace iteration with QR between
    every multiplication. Returns the first ``rank`` columns of the final
    orthonormal basis. Only those leading columns are checked for collapse;
    the oversampling columns may be numerically dependent.
    """
    a = as_matrix(a, "a")
    m, n = a.shape
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if oversample < 0 or power_iters < 0:
        raise ValueError("oversample and power_iters must be nonnegative")
    width = rank + oversample
    if width > min(m, n):
        raise ShapeError(
            f"rank + oversample = {width} exceeds min dimension of {a.shape}", a.shape
        )
    if rng is None:
        rng = RngState(0)
    omega = rng.normal((n, width))
    q = _householder_q(a @ omega, rank, tol)
    for _ in range(power_iters):
        z = _householder_q(a.T @ q, rank, tol)
        q = _householder_q(a @ z, rank, tol)
    return np.ascontiguousarray(q[:, :rank])
