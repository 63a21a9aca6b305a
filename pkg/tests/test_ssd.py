import numpy as np
import pytest

from conftest import as_f32, make_instance
from ssd_engine import SsdInputs, discretize, plan_chunks, ssd_forward
from ssd_engine.numerics import ElemPolicy, segsum
from ssd_engine.ssd import (
    chunk_states,
    cross_chunk_output,
    decay_coefficient,
    inter_chunk_scan,
    intra_chunk_output,
)


class TestDiscretize:
    def test_clamp_floor(self):
        dt, a_dt = discretize(
            np.full((1, 3, 2), -1e9),
            np.zeros(2),
            np.zeros(2),
            dt_limits=(0.25, 10.0),
            policy=ElemPolicy(compute="f64"),
        )
        assert np.all(dt == 0.25)
        np.testing.assert_allclose(a_dt, -0.25, atol=1e-15)  # a = -exp(0) = -1

    def test_alog_zero_unit_dt(self):
        # softplus(x) = 1 at x = log(e - 1)
        x = np.log(np.e - 1.0)
        dt, a_dt = discretize(
            np.full((1, 1, 1), x), np.zeros(1), np.zeros(1), policy=ElemPolicy(compute="f64")
        )
        assert dt[0, 0, 0] == pytest.approx(1.0, abs=1e-12)
        assert a_dt[0, 0, 0] == pytest.approx(-1.0, abs=1e-12)
        assert np.exp(a_dt[0, 0, 0]) == pytest.approx(np.exp(-1.0), abs=1e-12)

    def test_matches_f64_composition_oracle(self):
        rng = np.random.default_rng(0)
        dt_raw = rng.standard_normal((2, 5, 3)).astype(np.float32)
        dt_bias = rng.standard_normal(3).astype(np.float32)
        a_log = rng.uniform(0, 2, 3).astype(np.float32)
        limits = (1e-3, 0.5)
        dt, a_dt = discretize(dt_raw, dt_bias, a_log, limits, ElemPolicy(compute="f32"))
        raw64 = dt_raw.astype(np.float64) + dt_bias.astype(np.float64)
        dt64 = np.clip(np.log1p(np.exp(raw64)), *limits)
        a64 = -np.exp(a_log.astype(np.float64))
        np.testing.assert_allclose(dt, dt64, atol=1e-6)
        np.testing.assert_allclose(a_dt, a64 * dt64, atol=1e-6)

    def test_rejects_non_finite_alog(self):
        with pytest.raises(ValueError):
            discretize(np.zeros((1, 1, 1)), np.zeros(1), np.array([np.nan]))

    def test_bf16_ablation_changes_decay(self):
        a_log = np.log(np.array([3.7, 11.1], dtype=np.float32))
        base = decay_coefficient(a_log, ElemPolicy())
        ablated = decay_coefficient(a_log, ElemPolicy(decay_exp="bf16e"))
        assert np.all(ablated <= 0)
        assert np.any(base != ablated)


class TestPlanChunks:
    def test_paper_default(self):
        plan = plan_chunks(512, 256)
        assert (plan.n_chunks, plan.pad) == (2, 0)

    def test_single_token(self):
        plan = plan_chunks(1, 256)
        assert (plan.n_chunks, plan.pad) == (1, 255)

    def test_uneven(self):
        plan = plan_chunks(300, 128)
        assert (plan.n_chunks, plan.pad) == (3, 84)
        assert plan.padded_len == 384

    def test_invariant_relation(self):
        for t in (1, 5, 16, 17, 255, 256, 257):
            plan = plan_chunks(t, 16)
            assert plan.n_chunks * plan.chunk_len == t + plan.pad
            assert plan.pad < plan.chunk_len

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            plan_chunks(0, 4)
        with pytest.raises(ValueError):
            plan_chunks(4, 0)


def _chunked_views(inst: SsdInputs, L: int):
    """Reshape a pad-free instance into chunk layout for the kernel-level tests."""
    batch, seq, heads, pdim = inst.X.shape
    nc = seq // L
    Bh = np.repeat(inst.Bmat, heads // inst.Bmat.shape[2], axis=2)
    Ch = np.repeat(inst.Cmat, heads // inst.Cmat.shape[2], axis=2)
    Xc = inst.X.reshape(batch, nc, L, heads, pdim)
    dtc = inst.dt.reshape(batch, nc, L, heads)
    a_dt = np.transpose(dtc * inst.a, (0, 3, 1, 2))
    return (
        Ch.reshape(batch, nc, L, heads, -1),
        Bh.reshape(batch, nc, L, heads, -1),
        a_dt,
        Xc * dtc[..., None],
    )


class TestIntraChunkOutput:
    def test_single_token_chunks(self):
        rng = np.random.default_rng(1)
        inst = make_instance(rng, seq=4, heads=2, pdim=3, ndim=5)
        Cc, Bc, a_dt, Xbar = _chunked_views(inst, 1)
        Lmat = np.exp(segsum(a_dt))  # (B, H, 4, 1, 1), all ones on the diagonal
        out = intra_chunk_output(Cc, Bc, Lmat, Xbar)
        expected = np.einsum("bclhn,bclhn->bclh", Cc, Bc)[..., None] * Xbar
        np.testing.assert_allclose(out, expected, atol=1e-14)

    def test_decay_free_limit_is_causal_prefix_sum(self):
        # a_dt = 0, B = C = 1, N = 1: Y[l] = sum_{s<=l} Xbar[s]
        batch, nc, L, heads, pdim = 1, 2, 4, 1, 3
        ones = np.ones((batch, nc, L, heads, 1))
        rng = np.random.default_rng(2)
        Xbar = rng.standard_normal((batch, nc, L, heads, pdim))
        Lmat = np.exp(segsum(np.zeros((batch, heads, nc, L))))
        out = intra_chunk_output(ones, ones, Lmat, Xbar)
        np.testing.assert_allclose(out, np.cumsum(Xbar, axis=2), atol=1e-14)

    def test_matches_quintuple_loop_oracle(self):
        rng = np.random.default_rng(3)
        batch, nc, L, heads, pdim, ndim = 1, 2, 4, 2, 3, 5
        inst = make_instance(rng, batch=batch, seq=nc * L, heads=heads, pdim=pdim, ndim=ndim)
        Cc, Bc, a_dt, Xbar = _chunked_views(inst, L)
        Lmat = np.exp(segsum(a_dt))
        out = intra_chunk_output(Cc, Bc, Lmat, Xbar)
        expected = np.zeros_like(out)
        for c in range(nc):
            for l in range(L):
                for h in range(heads):
                    for p in range(pdim):
                        acc = 0.0
                        for s in range(l + 1):
                            for n in range(ndim):
                                acc += (
                                    Cc[0, c, l, h, n]
                                    * Bc[0, c, s, h, n]
                                    * Lmat[0, h, c, l, s]
                                    * Xbar[0, c, s, h, p]
                                )
                        expected[0, c, l, h, p] = acc
        np.testing.assert_allclose(out, expected, atol=1e-12)


class TestChunkStates:
    def test_single_token_outer_product(self):
        rng = np.random.default_rng(4)
        inst = make_instance(rng, seq=1, heads=2, pdim=3, ndim=4)
        Cc, Bc, a_dt, Xbar = _chunked_views(inst, 1)
        states = chunk_states(Bc, np.cumsum(a_dt, axis=-1), Xbar)
        expected = np.einsum("bhp,bhn->bhpn", Xbar[:, 0, 0], Bc[:, 0, 0])[:, None]
        np.testing.assert_allclose(states, expected, atol=1e-14)

    def test_zero_input_zero_states(self):
        rng = np.random.default_rng(5)
        inst = make_instance(rng, seq=8)
        Cc, Bc, a_dt, Xbar = _chunked_views(inst, 4)
        states = chunk_states(Bc, np.cumsum(a_dt, axis=-1), np.zeros_like(Xbar))
        assert np.all(states == 0.0)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(6)
        L = 4
        inst = make_instance(rng, seq=8, heads=2, pdim=3, ndim=4)
        Cc, Bc, a_dt, Xbar = _chunked_views(inst, L)
        a_cumsum = np.cumsum(a_dt, axis=-1)
        states = chunk_states(Bc, a_cumsum, Xbar)
        nc = 2
        expected = np.zeros_like(states)
        for c in range(nc):
            for h in range(2):
                for p in range(3):
                    for n in range(4):
                        acc = 0.0
                        for l in range(L):
                            decay = np.exp(a_cumsum[0, h, c, L - 1] - a_cumsum[0, h, c, l])
                            acc += Bc[0, c, l, h, n] * decay * Xbar[0, c, l, h, p]
                        expected[0, c, h, p, n] = acc
        np.testing.assert_allclose(states, expected, atol=1e-13)


class TestInterChunkScan:
    def test_single_chunk_no_initial_state(self):
        rng = np.random.default_rng(7)
        states = rng.standard_normal((2, 1, 2, 3, 4))
        logs = rng.uniform(-2, 0, (2, 2, 1))
        prev, final = inter_chunk_scan(states, logs)
        assert np.all(prev == 0.0)
        np.testing.assert_allclose(final, states[:, 0], atol=1e-15)

    def test_unit_decay_sums_states(self):
        rng = np.random.default_rng(8)
        states = rng.standard_normal((1, 3, 2, 2, 2))
        init = rng.standard_normal((1, 2, 2, 2))
        prev, final = inter_chunk_scan(states, np.zeros((1, 2, 3)), initial_state=init)
        np.testing.assert_allclose(final, init + states.sum(axis=1), atol=1e-14)
        np.testing.assert_allclose(prev[:, 0], init, atol=1e-15)

    def test_matches_sequential_scan_oracle(self):
        rng = np.random.default_rng(9)
        nc = 4
        states = rng.standard_normal((1, nc, 2, 3, 4))
        logs = rng.uniform(-3, 0, (1, 2, nc))
        init = rng.standard_normal((1, 2, 3, 4))
        prev, final = inter_chunk_scan(states, logs, initial_state=init)
        s = init.copy()
        for c in range(nc):
            np.testing.assert_allclose(prev[:, c], s, atol=1e-12)
            s = np.exp(logs[:, :, c])[:, :, None, None] * s + states[:, c]
        np.testing.assert_allclose(final, s, atol=1e-12)


class TestCrossChunkOutput:
    def test_zero_prev_states(self):
        rng = np.random.default_rng(10)
        inst = make_instance(rng, seq=8)
        Cc, _, a_dt, _ = _chunked_views(inst, 4)
        out = cross_chunk_output(Cc, np.zeros((1, 2, 2, 4, 4)), np.cumsum(a_dt, axis=-1))
        assert np.all(out == 0.0)

    def test_position_zero_decay_convention(self):
        # with a_dt[0] = 0 the entering state is read out undecayed at l = 0
        rng = np.random.default_rng(11)
        batch, nc, L, heads, pdim, ndim = 1, 1, 3, 2, 3, 4
        Cc = rng.standard_normal((batch, nc, L, heads, ndim))
        prev = rng.standard_normal((batch, nc, heads, pdim, ndim))
        a_dt = rng.uniform(-1, 0, (batch, heads, nc, L))
        a_dt[..., 0] = 0.0
        out = cross_chunk_output(Cc, prev, np.cumsum(a_dt, axis=-1))
        expected0 = np.einsum("bhn,bhpn->bhp", Cc[:, 0, 0], prev[:, 0])
        np.testing.assert_allclose(out[:, 0, 0], expected0, atol=1e-14)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(12)
        batch, nc, L, heads, pdim, ndim = 1, 2, 3, 2, 2, 3
        Cc = rng.standard_normal((batch, nc, L, heads, ndim))
        prev = rng.standard_normal((batch, nc, heads, pdim, ndim))
        a_cumsum = np.cumsum(rng.uniform(-1, 0, (batch, heads, nc, L)), axis=-1)
        out = cross_chunk_output(Cc, prev, a_cumsum)
        expected = np.zeros_like(out)
        for c in range(nc):
            for l in range(L):
                for h in range(heads):
                    for p in range(pdim):
                        acc = 0.0
                        for n in range(ndim):
                            acc += Cc[0, c, l, h, n] * prev[0, c, h, p, n]
                        expected[0, c, l, h, p] = acc * np.exp(a_cumsum[0, h, c, l])
        np.testing.assert_allclose(out, expected, atol=1e-13)


class TestSsdForward:
    def test_single_chunk_equals_intra_path(self):
        rng = np.random.default_rng(13)
        inst = make_instance(rng, seq=12, heads=2, pdim=3, ndim=4)
        out = ssd_forward(inst, 12)
        Cc, Bc, a_dt, Xbar = _chunked_views(inst, 12)
        intra = intra_chunk_output(Cc, Bc, np.exp(segsum(a_dt)), Xbar)
        np.testing.assert_allclose(out.Y, intra.reshape(out.Y.shape), atol=1e-14)

    def test_chunk_invariance_f64(self):
        rng = np.random.default_rng(14)
        inst = make_instance(rng, batch=2, seq=100, heads=3, pdim=4, ndim=5, groups=3)
        reference = ssd_forward(inst, 1)
        for L in (4, 16, 64, 100, 256):
            out = ssd_forward(inst, L)
            assert np.abs(out.Y - reference.Y).max() < 1e-10
            assert np.abs(out.final_state - reference.final_state).max() < 1e-10

    def test_state_superposition(self):
        rng = np.random.default_rng(15)
        inst = make_instance(rng, seq=40, heads=2, pdim=4, ndim=4)
        init = rng.standard_normal((1, 2, 4, 4))
        zeros = SsdInputs(
            X=np.zeros_like(inst.X), dt=inst.dt, a=inst.a, Bmat=inst.Bmat, Cmat=inst.Cmat
        )
        combined = ssd_forward(inst, 16, initial_state=init)
        no_init = ssd_forward(inst, 16)
        init_only = ssd_forward(zeros, 16, initial_state=init)
        np.testing.assert_allclose(combined.Y, no_init.Y + init_only.Y, atol=1e-10)
        np.testing.assert_allclose(
            combined.final_state, no_init.final_state + init_only.final_state, atol=1e-10
        )

    def test_causality(self):
        rng = np.random.default_rng(16)
        inst = make_instance(rng, seq=33, heads=2)
        base = ssd_forward(inst, 8).Y
        bumped = SsdInputs(
            X=inst.X.copy(), dt=inst.dt, a=inst.a, Bmat=inst.Bmat, Cmat=inst.Cmat
        )
        t_star = 17
        bumped.X[:, t_star] += 3.0
        out = ssd_forward(bumped, 8).Y
        assert np.array_equal(base[:, :t_star], out[:, :t_star])
        assert not np.array_equal(base[:, t_star:], out[:, t_star:])

    def test_decay_matrices_bounded(self):
        rng = np.random.default_rng(17)
        a_dt = -rng.uniform(0, 3, (2, 3, 4, 8))
        mat = np.exp(segsum(a_dt))
        assert np.all(mat >= 0.0) and np.all(mat <= 1.0)
        diag = np.diagonal(mat, axis1=-2, axis2=-1)
        assert np.all(diag == 1.0)

    def test_group_broadcast_matches_explicit_heads(self):
        rng = np.random.default_rng(18)
        inst = make_instance(rng, seq=20, heads=4, pdim=3, ndim=4, groups=2)
        expanded = SsdInputs(
            X=inst.X,
            dt=inst.dt,
            a=inst.a,
            Bmat=np.repeat(inst.Bmat, 2, axis=2),
            Cmat=np.repeat(inst.Cmat, 2, axis=2),
        )
        np.testing.assert_array_equal(ssd_forward(inst, 8).Y, ssd_forward(expanded, 8).Y)

    def test_shape_violation_raises(self):
        rng = np.random.default_rng(19)
        inst = make_instance(rng, seq=8)
        bad = SsdInputs(X=inst.X, dt=inst.dt[:, :4], a=inst.a, Bmat=inst.Bmat, Cmat=inst.Cmat)
        with pytest.raises(ValueError):
            ssd_forward(bad, 4)

    def test_rejects_positive_a(self):
        rng = np.random.default_rng(20)
        inst = make_instance(rng, seq=4)
        bad = SsdInputs(X=inst.X, dt=inst.dt, a=-inst.a, Bmat=inst.Bmat, Cmat=inst.Cmat)
        with pytest.raises(ValueError):
            ssd_forward(bad, 4)

    def test_padding_leaves_state_untouched(self):
        # T = 1 with L = 256: 255 padded positions must not alter the state
        rng = np.random.default_rng(21)
        inst = make_instance(rng, seq=1, heads=2, pdim=3, ndim=4)
        out_big = ssd_forward(inst, 256)
        out_exact = ssd_forward(inst, 1)
        np.testing.assert_allclose(out_big.final_state, out_exact.final_state, atol=1e-14)
        np.testing.assert_allclose(out_big.Y, out_exact.Y, atol=1e-14)

    def test_f32_matches_f64_within_gate(self):
        rng = np.random.default_rng(22)
        inst = make_instance(rng, batch=2, seq=64, heads=2, pdim=4, ndim=4)
        ref = ssd_forward(inst, 16).Y
        got = ssd_forward(as_f32(inst), 16).Y
        err = np.abs(got.astype(np.float64) - ref)
        assert np.all(err <= 2e-4 + 1e-5 * np.abs(ref))
