"""Adaptive low-rank gradient projection with displacement-driven subspace switching."""
from .linalg import RngState, exact_svd, matmul, qr_orthonormalize, randomized_range
from .optimizer import Adam, LayerOptState, Lotus, LotusHyperparams, init_layer, memory_accounting, step
from .policy import DisplacementTracker, PolicyKind, SwitchConfig, normalize, should_switch
from .subspace import Projector, ProjectionConfig, Side, compute_projector, project, project_back

__version__ = "0.1.0"
