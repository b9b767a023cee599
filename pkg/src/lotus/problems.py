"""Synthetic optimization problems with seeded, policy-independent noise.

Every problem exposes ``init_params()`` and ``loss_and_grad(params, step)``.
Gradient noise for step ``t`` depends only on ``(seed, t)``, so different
optimizers see the same realization (common random numbers).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .linalg import RngState, qr_orthonormalize

_NOISE, _INIT, _DATA, _BASIS = 1, 2, 3, 4


class ProblemKind(enum.Enum):
    DRIFTING_STREAM = "drift"
    QUADRATIC = "quadratic"
    LOGISTIC = "logistic"
    MLP = "mlp"


@dataclass(frozen=True)
class ProblemSpec:
    """What to optimize.

    ``dims`` per kind:

    * drift: ``(d, n, signal_rank)``
    * quadratic: ``(d, n)``
    * logistic: ``(classes, features, samples)``
    * mlp: layer widths, e.g. ``(8, 16, 4)``; sample counts come from
      ``options``.
    """

    kind: ProblemKind
    dims: tuple
    drift_rate: float = 0.0
    noise_std: float = 0.0
    seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.kind, ProblemKind):
            object.__setattr__(self, "kind", ProblemKind(self.kind))
        object.__setattr__(self, "dims", tuple(int(x) for x in self.dims))
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")

    @property
    def rng(self) -> RngState:
        return RngState(self.seed)


def planar_rotation(dim: int, angle: float) -> np.ndarray:
    """Rotate every coordinate pair ``(2i, 2i+1)`` by ``angle``; odd tail fixed."""
    return rotate_pairs(np.eye(dim), angle)


def rotate_pairs(x: np.ndarray, angle: float) -> np.ndarray:
    """``planar_rotation(len(x), angle) @ x`` without forming the rotation."""
    out = x.copy()
    c, s = np.cos(angle), np.sin(angle)
    even, odd = x[0:-1:2], x[1::2]
    out[0:-1:2] = c * even - s * odd
    out[1::2] = s * even + c * odd
    return out


class _Problem:
    def __init__(self, spec: ProblemSpec):
        self.spec = spec

    def noise(self, shape, step: int, index: int = 0) -> np.ndarray:
        if self.spec.noise_std == 0.0:
            return np.zeros(shape)
        return self.spec.noise_std * self.spec.rng.derive(_NOISE, step, index).normal(shape)


class DriftingStream(_Problem):
    """Quadratic whose curvature subspace rotates at ``drift_rate`` rad/step.

    ``L_t(W) = 0.5 * ||diag(sqrt(lam)) B^T R_t^T W||_F^2 + 0.5 * mu * ||W||_F^2``
    with ``B`` a fixed ``d x r`` orthonormal basis and ``R_t`` the planar
    rotation by ``t * drift_rate``. The gradient is
    ``R_t B (lam * B^T R_t^T W) + mu * W + noise``: a rank-``r`` part of the
    form ``R_t B c_t`` whose column space turns with the rotation, on top of
    a weak isotropic part (``options["mu"]``, default 0.05) that keeps every
    direction strongly convex.
    """

    def __init__(self, spec: ProblemSpec):
        super().__init__(spec)
        d, n, r = spec.dims
        self.d, self.n, self.r = d, n, r
        rng = spec.rng
        self.basis = qr_orthonormalize(rng.derive(_BASIS).normal((d, r)))
        lo = spec.options.get("curvature_min", 0.5)
        self.curvature = np.linspace(1.0, lo, r)
        self.mu = spec.options.get("mu", 0.2)

    def frame(self, step: int) -> np.ndarray:
        """Current signal basis ``R_t B``."""
        return rotate_pairs(self.basis, step * self.spec.drift_rate)

    def init_params(self) -> dict:
        return {"W": self.spec.rng.derive(_INIT).normal((self.d, self.n))}

    def loss_and_grad(self, params, step):
        w = params["W"]
        frame = self.frame(step)
        coeff = frame.T @ w
        loss = 0.5 * float(np.sum(self.curvature[:, None] * coeff * coeff) + self.mu * np.sum(w * w))
        grad = frame @ (self.curvature[:, None] * coeff) + self.mu * w + self.noise(w.shape, step)
        return loss, {"W": grad}


class Quadratic(_Problem):
    """``L(W) = 0.5 * tr(W^T A W)`` with ``A = U diag(eigs) U^T``.

    ``options["eigenvalues"]`` fixes the spectrum; default is linearly spaced
    in ``[0.1, 1]``.
    """

    def __init__(self, spec: ProblemSpec):
        super().__init__(spec)
        d, n = spec.dims
        self.d, self.n = d, n
        eigs = spec.options.get("eigenvalues")
        self.eigenvalues = np.linspace(1.0, 0.1, d) if eigs is None else np.asarray(eigs, dtype=float)
        if spec.options.get("identity_basis", False):
            u = np.eye(d)
        else:
            u = qr_orthonormalize(spec.rng.derive(_BASIS).normal((d, d)))
        self.hessian = (u * self.eigenvalues) @ u.T

    @property
    def smoothness(self) -> float:
        return float(np.max(self.eigenvalues))

    def init_params(self) -> dict:
        return {"W": self.spec.rng.derive(_INIT).normal((self.d, self.n))}

    def loss(self, w) -> float:
        return 0.5 * float(np.sum(w * (self.hessian @ w)))

    def loss_and_grad(self, params, step):
        w = params["W"]
        return self.loss(w), {"W": self.hessian @ w + self.noise(w.shape, step)}


def softmax_xent(logits, labels):
    """Mean softmax cross-entropy and its gradient with respect to the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -float(np.mean(logp[np.arange(n), labels]))
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


class Logistic(_Problem):
    """Multiclass logistic regression on Gaussian features labelled by a teacher."""

    def __init__(self, spec: ProblemSpec):
        super().__init__(spec)
        classes, features, samples = spec.dims
        data = spec.rng.derive(_DATA)
        self.x = data.derive(0).normal((samples, features))
        teacher = data.derive(1).normal((classes, features))
        self.y = np.argmax(self.x @ teacher.T, axis=1)
        self.shape = (classes, features)

    def init_params(self) -> dict:
        return {"W": np.zeros(self.shape)}

    def loss_and_grad(self, params, step):
        w = params["W"]
        loss, dlogits = softmax_xent(self.x @ w.T, self.y)
        return loss, {"W": dlogits.T @ self.x + self.noise(w.shape, step)}


def make_problem(spec: ProblemSpec):
    if spec.kind is ProblemKind.DRIFTING_STREAM:
        return DriftingStream(spec)
    if spec.kind is ProblemKind.QUADRATIC:
        return Quadratic(spec)
    if spec.kind is ProblemKind.LOGISTIC:
        return Logistic(spec)
    from .mlp import TeacherStudent

    return TeacherStudent(spec)
