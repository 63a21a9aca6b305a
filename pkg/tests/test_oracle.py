import numpy as np
import pytest

from conftest import make_instance
from ssd_engine import compare, dense_ssm, sequential_ssm, ssd_forward


class TestSequentialSsm:
    def test_single_token_closed_form(self):
        rng = np.random.default_rng(0)
        inst = make_instance(rng, seq=1, heads=2, pdim=3, ndim=4)
        D = rng.standard_normal(2)
        Y, final = sequential_ssm(inst.X, inst.dt, inst.a, inst.Bmat, inst.Cmat, D)
        cb = np.einsum("bhn,bhn->bh", inst.Cmat[:, 0].repeat(2, 1), inst.Bmat[:, 0].repeat(2, 1))
        expected = cb[..., None] * inst.dt[:, 0, :, None] * inst.X[:, 0] + D[None, :, None] * inst.X[:, 0]
        np.testing.assert_allclose(Y[:, 0], expected, atol=1e-14)
        outer = inst.dt[:, 0, :, None, None] * np.einsum("bhp,bhn->bhpn", inst.X[:, 0], inst.Bmat[:, 0].repeat(2, 1))
        np.testing.assert_allclose(final, outer, atol=1e-14)

    def test_zero_decay_unit_dt_accumulates(self):
        rng = np.random.default_rng(1)
        seq, heads, pdim, ndim = 9, 2, 3, 4
        X = rng.standard_normal((1, seq, heads, pdim))
        Bmat = rng.standard_normal((1, seq, heads, ndim))
        Cmat = rng.standard_normal((1, seq, heads, ndim))
        _, final = sequential_ssm(X, np.ones((1, seq, heads)), np.zeros(heads), Bmat, Cmat)
        expected = np.einsum("bthp,bthn->bhpn", X, Bmat)
        np.testing.assert_allclose(final, expected, atol=1e-12)

    def test_agrees_with_chunked_L1_to_reduction_epsilon(self):
        rng = np.random.default_rng(2)
        inst = make_instance(rng, batch=2, seq=32, heads=2, pdim=4, ndim=4)
        Y, final = sequential_ssm(inst.X, inst.dt, inst.a, inst.Bmat, inst.Cmat)
        out = ssd_forward(inst, 1)
        assert np.abs(out.Y - Y).max() <= 1e-13
        assert np.abs(out.final_state - final).max() <= 1e-13

    def test_initial_state_is_consumed_not_mutated(self):
        rng = np.random.default_rng(3)
        inst = make_instance(rng, seq=5)
        init = rng.standard_normal((1, 2, 4, 4))
        snapshot = init.copy()
        sequential_ssm(inst.X, inst.dt, inst.a, inst.Bmat, inst.Cmat, initial_state=init)
        assert np.array_equal(init, snapshot)


class TestDenseOracle:
    def test_matches_sequential_within_1e12(self):
        rng = np.random.default_rng(4)
        for seq in (1, 7, 33, 64):
            inst = make_instance(rng, batch=2, seq=seq, heads=2, pdim=3, ndim=4)
            D = rng.standard_normal(2)
            Y_seq, _ = sequential_ssm(inst.X, inst.dt, inst.a, inst.Bmat, inst.Cmat, D)
            Y_dense = dense_ssm(inst.X, inst.dt, inst.a, inst.Bmat, inst.Cmat, D)
            assert np.abs(Y_seq - Y_dense).max() <= 1e-12

    def test_rejects_long_sequences(self):
        rng = np.random.default_rng(5)
        inst = make_instance(rng, seq=65)
        with pytest.raises(ValueError):
            dense_ssm(inst.X, inst.dt, inst.a, inst.Bmat, inst.Cmat)


class TestCompare:
    def test_identical_tensors_pass(self):
        x = np.random.default_rng(6).standard_normal((3, 4))
        report = compare(x, x, rtol=1e-5, atol=2e-4)
        assert report.passed and report.max_abs_err == 0.0

    def test_default_gates_are_table5(self):
        report = compare(np.zeros(1), np.zeros(1))
        assert (report.rtol, report.atol) == (1e-5, 2e-4)

    def test_constructed_offender_located(self):
        expected = np.zeros((2, 5))
        actual = expected.copy()
        actual[1, 3] = 3e-4  # above atol = 2e-4 with zero expected value
        report = compare(actual, expected, rtol=1e-5, atol=2e-4)
        assert not report.passed
        assert report.worst_index == (1, 3)
        assert report.max_abs_err == pytest.approx(3e-4)

    def test_rtol_only_pass(self):
        expected = np.full(4, 100.0)
        actual = expected * (1 + 5e-6)
        assert compare(actual, expected, rtol=1e-5, atol=0.0).passed

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            compare(np.zeros(3), np.zeros(4))
