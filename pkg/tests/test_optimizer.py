import numpy as np
import pytest

from lotus.errors import NonFiniteGradientError
from lotus.linalg import RngState
from lotus.optimizer import (
    AccountingMode,
    Lotus,
    LotusHyperparams,
    MomentPolicy,
    init_layer,
    memory_accounting,
    projected_descent_step,
    step,
)
from lotus.policy import PolicyKind, SwitchConfig
from lotus.subspace import Projector, Side, compute_projector

NEVER = SwitchConfig(kind=PolicyKind.FIXED_INTERVAL, fixed_interval=10**9)


def textbook_adam(grads, w0, lr, b1, b2, eps):
    w, m, v = w0.copy(), np.zeros_like(w0), np.zeros_like(w0)
    out = []
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g**2
        w = w - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        out.append(w.copy())
    return out


class TestInitLayer:
    def test_table1_shapes(self):
        g = RngState(0).normal((256, 1024))
        st = init_layer(g.shape, g, LotusHyperparams(rank=128))
        assert st.m1.shape == st.m2.shape == (128, 1024)
        assert st.tracker.steps == 1 and st.switch_count == 0

    def test_full_rank(self):
        g = RngState(0).normal((6, 9))
        st = init_layer(g.shape, g, LotusHyperparams(rank=6))
        assert np.array_equal(st.projector.basis, np.eye(6))
        assert st.m1.shape == (6, 9)

    def test_rank_clamped(self):
        g = RngState(0).normal((4, 9))
        assert init_layer(g.shape, g, LotusHyperparams(rank=32)).projector.rank == 4

    def test_zero_gradient(self):
        from lotus.errors import ZeroGradientError

        with pytest.raises(ZeroGradientError):
            init_layer((3, 4), np.zeros((3, 4)), LotusHyperparams(rank=2))


class TestStep:
    def test_identity_projector_is_adam(self):
        rng = RngState(3)
        grads = [rng.derive(i).normal((5, 8)) for i in range(20)]
        w0 = rng.derive(99).normal((5, 8))
        hp = LotusHyperparams(learning_rate=0.01, rank=5, scale=1.0, switch=NEVER)
        st = init_layer(w0.shape, grads[0], hp)
        w = w0
        for t, (g, ref) in enumerate(zip(grads, textbook_adam(grads, w0, 0.01, 0.9, 0.999, 1e-8)), 1):
            st, w, _ = step(st, w, g, hp, t)
            assert np.max(np.abs(w - ref)) <= 1e-10

    def test_momentum_free_is_sign_like(self):
        g = RngState(0).normal((6, 10))
        hp = LotusHyperparams(learning_rate=0.1, rank=3, scale=1.0, beta1=0.0, beta2=0.0, switch=NEVER)
        st = init_layer(g.shape, g, hp)
        low = st.projector.basis.T @ g
        _, w, _ = step(st, np.zeros_like(g), g, hp, 1)
        expected = -0.1 * st.projector.basis @ (low / (np.abs(low) + hp.eps))
        assert np.max(np.abs(w - expected)) <= 1e-12

    def test_fixed_interval_counts(self):
        rng = RngState(1)
        hp = LotusHyperparams(rank=2, switch=SwitchConfig(kind=PolicyKind.FIXED_INTERVAL, fixed_interval=2))
        w = rng.normal((6, 8))
        st = init_layer(w.shape, rng.derive(0).normal(w.shape), hp)
        for t in range(1, 11):
            st, w, _ = step(st, w, rng.derive(t).normal(w.shape), hp, t)
        assert st.switch_count == 5
        assert st.projector_builds == st.switch_count + 1

    def test_switch_resets_state(self):
        rng = RngState(2)
        hp = LotusHyperparams(rank=2, switch=SwitchConfig(kind=PolicyKind.FIXED_INTERVAL, fixed_interval=3))
        w = rng.normal((6, 8))
        st = init_layer(w.shape, rng.derive(0).normal(w.shape), hp)
        for t in range(1, 4):
            st, w, d = step(st, w, rng.derive(t).normal(w.shape), hp, t)
        assert d.switched and st.projector.created_at_step == 3
        assert not st.m1.any() and not st.m2.any()
        assert st.tracker.steps == 1 and st.adam_step == 0

    def test_project_moments_policy(self):
        rng = RngState(2)
        hp = LotusHyperparams(
            rank=2,
            switch=SwitchConfig(kind=PolicyKind.FIXED_INTERVAL, fixed_interval=3),
            moment_policy=MomentPolicy.PROJECT,
        )
        w = rng.normal((6, 8))
        st = init_layer(w.shape, rng.derive(0).normal(w.shape), hp)
        for t in range(1, 4):
            g = rng.derive(t).normal(w.shape)
            old_basis = st.projector.basis
            updated_m1 = 0.9 * st.m1 + 0.1 * (old_basis.T @ g)
            st, w, d = step(st, w, g, hp, t)
        assert d.switched
        np.testing.assert_allclose(st.m1, st.projector.basis.T @ old_basis @ updated_m1, atol=1e-14)
        assert np.all(st.m2 >= 0) and st.adam_step == 3

    def test_non_finite_leaves_state(self):
        g = RngState(0).normal((4, 5))
        hp = LotusHyperparams(rank=2)
        st = init_layer(g.shape, g, hp)
        before = (st.m1.copy(), st.tracker.steps, st.adam_step)
        bad = g.copy()
        bad[1, 1] = np.inf
        with pytest.raises(NonFiniteGradientError):
            step(st, np.zeros_like(g), bad, hp, 1)
        assert np.array_equal(st.m1, before[0]) and st.tracker.steps == before[1] and st.adam_step == before[2]

    def test_zero_gradient_switch_skipped(self):
        g = RngState(0).normal((4, 5))
        hp = LotusHyperparams(rank=2, switch=SwitchConfig(kind=PolicyKind.FIXED_INTERVAL, fixed_interval=1))
        st = init_layer(g.shape, g, hp)
        st, _, d = step(st, np.zeros_like(g), np.zeros_like(g), hp, 1)
        assert d.switch_skipped and not d.switched and d.zero_projection
        assert st.switch_count == 0 and st.tracker.steps == 1

    def test_gradient_outside_subspace(self):
        g = RngState(0).normal((4, 5))
        hp = LotusHyperparams(rank=2, switch=NEVER)
        st = init_layer(g.shape, g, hp)
        st.projector = Projector(np.eye(4)[:, :2].copy(), Side.LEFT, 2, 0, (4, 5))
        outside = g.copy()
        outside[:2] = 0.0
        st, w, d = step(st, np.zeros_like(g), outside, hp, 1)
        assert d.zero_projection and st.tracker.steps == 1
        assert np.all(np.isfinite(w))

    def test_m2_nonnegative(self):
        rng = RngState(5)
        hp = LotusHyperparams(rank=3, switch=SwitchConfig(kind=PolicyKind.FIXED_INTERVAL, fixed_interval=4))
        w = rng.normal((7, 9))
        st = init_layer(w.shape, rng.derive(0).normal(w.shape), hp)
        for t in range(1, 20):
            st, w, _ = step(st, w, rng.derive(t).normal(w.shape), hp, t)
            assert np.all(st.m2 >= 0)

    def test_layers_isolated(self):
        rng = RngState(6)
        hp = LotusHyperparams(rank=2)
        params = {"a": rng.normal((5, 6)), "b": rng.derive(1).normal((6, 4))}
        opt = Lotus(hp)
        opt.step(params, {k: rng.derive(2, i).normal(v.shape) for i, (k, v) in enumerate(params.items())}, 1)
        snapshot = opt.layers["b"].m1.copy(), opt.layers["b"].tracker.steps
        from lotus.optimizer import step as layer_step

        layer_step(opt.layers["a"], params["a"], rng.derive(3).normal((5, 6)), hp, 2)
        assert np.array_equal(opt.layers["b"].m1, snapshot[0]) and opt.layers["b"].tracker.steps == snapshot[1]

    def test_deterministic(self):
        def run():
            rng = RngState(8)
            hp = LotusHyperparams(rank=2, switch=SwitchConfig(kind=PolicyKind.FIXED_INTERVAL, fixed_interval=3))
            w = rng.normal((6, 8))
            st = init_layer(w.shape, rng.derive(0).normal(w.shape), hp)
            for t in range(1, 15):
                st, w, _ = step(st, w, rng.derive(t).normal(w.shape), hp, t)
            return w.tobytes(), st.projector.basis.tobytes()

        assert run() == run()

    def test_dense_params_use_adam(self):
        hp = LotusHyperparams(learning_rate=0.1, rank=2)
        params = {"b": np.zeros(3)}
        Lotus(hp).step(params, {"b": np.array([1.0, -2.0, 0.0])}, 1)
        np.testing.assert_allclose(params["b"], [-0.1, 0.1, 0.0], atol=1e-6)

    def test_bad_hyperparams(self):
        with pytest.raises(ValueError):
            LotusHyperparams(beta1=1.0)
        with pytest.raises(ValueError):
            LotusHyperparams(eps=0.0)


def test_descent_bound_on_quadratic():
    """One-step bound for plain projected descent on 0.5 * tr(W^T A W)."""
    rng = RngState(11)
    d = 16
    eigs = np.linspace(2.0, 0.1, d)
    u = np.linalg.qr(rng.normal((d, d)))[0]
    a = (u * eigs) @ u.T
    lip = eigs.max()
    w = rng.derive(1).normal((d, 6))
    loss = lambda x: 0.5 * np.sum(x * (a @ x))
    for t in range(200):
        g = a @ w
        proj = compute_projector(g, 2, rng.derive(2, t))
        rho = np.linalg.norm(proj.apply(g)) / np.linalg.norm(g)
        alpha = rho**2 / lip
        w_next = projected_descent_step(proj, w, g, alpha)
        gn2 = np.sum(g * g)
        assert loss(w_next) <= loss(w) - alpha * rho**2 * gn2 + 0.5 * alpha**2 * lip * gn2 + 1e-8
        w = w_next


class TestMemoryAccounting:
    def test_quarter_rank(self):
        d = 256
        rep = memory_accounting((d, d), d // 4)
        assert rep.low_rank_total == d * d + d * d // 4 + d * d // 2
        assert rep.full_adam_total == 3 * d * d
        assert abs(rep.reduction - (1 - 1.75 / 3)) <= 1e-15

    def test_table1_shape(self):
        rep = memory_accounting((2048, 2048), 512)
        # by hand: 4194304 + 512*2048 + 2*512*2048 = 7340032 vs 3*4194304 = 12582912
        assert rep.low_rank_total == 7340032 and rep.full_adam_total == 12582912
        assert abs(rep.reduction - (1 - 7340032 / 12582912)) <= 1e-15

    def test_full_rank_not_clamped(self):
        rep = memory_accounting((64, 64), 64)
        assert rep.low_rank_total > rep.full_adam_total and rep.reduction < 0

    def test_rectangular_and_modes(self):
        rep = memory_accounting((100, 300), 10, AccountingMode.LOW_RANK)
        assert (rep.gradient, rep.projector, rep.moments) == (30000, 1000, 6000)
        full = memory_accounting((100, 300), 10, "full")
        assert full.total == full.full_adam_total == 90000

    def test_bad_rank(self):
        with pytest.raises(ValueError):
            memory_accounting((4, 4), 5)
