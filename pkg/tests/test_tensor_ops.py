import numpy as np
import pytest

from risten.tensor_ops import (
    AlsResult,
    FactorSet,
    Tensor,
    cp_als,
    cp_reconstruct,
    cp_vec,
    fold,
    khatri_rao,
    khatri_rao_list,
    mode_unfold,
    spatial_smooth,
    unfold_multi,
    unvec,
    vandermonde,
    vec,
)

from util import (
    naive_cp_reconstruct,
    naive_khatri_rao,
    naive_mode_unfold,
    naive_vec,
    random_complex,
)


def random_factorset(rng, dims, rank):
    return FactorSet(
        random_complex(rng, rank),
        tuple(random_complex(rng, d, rank) for d in dims),
    )


class TestTensor:
    def test_dims_and_data_roundtrip(self):
        rng = np.random.default_rng(0)
        arr = random_complex(rng, 3, 4, 2)
        t = Tensor(arr)
        assert t.dims == (3, 4, 2)
        assert t.order == 3
        t2 = Tensor.from_flat(t.data, t.dims)
        assert np.array_equal(t2.array, arr)

    def test_immutable(self):
        t = Tensor(np.ones((2, 2)))
        with pytest.raises(ValueError):
            t.array[0, 0] = 5.0

    def test_bad_shapes(self):
        with pytest.raises(ValueError):
            Tensor.from_flat(np.ones(5), (2, 3))
        with pytest.raises(ValueError):
            Tensor(np.ones((2, 0)))


class TestFactorSet:
    def test_validation(self):
        rng = np.random.default_rng(1)
        with pytest.raises(ValueError):
            FactorSet(np.ones(2), (random_complex(rng, 3, 2), random_complex(rng, 4, 3)))
        with pytest.raises(ValueError):
            FactorSet(np.ones(3), (random_complex(rng, 3, 2),))
        fs = random_factorset(rng, (3, 4), 2)
        assert fs.rank == 2 and fs.dims == (3, 4)


class TestKhatriRao:
    def test_identity_columns(self):
        out = khatri_rao(np.eye(2), np.eye(2))
        expected = np.zeros((4, 2))
        expected[0, 0] = 1.0  # e1 kron e1
        expected[3, 1] = 1.0  # e2 kron e2
        assert np.array_equal(out, expected)

    def test_ones(self):
        assert np.array_equal(khatri_rao(np.ones((2, 1)), np.ones((3, 1))), np.ones((6, 1)))

    def test_against_kron_oracle(self):
        rng = np.random.default_rng(2)
        a = random_complex(rng, 3, 4)
        b = random_complex(rng, 2, 4)
        assert np.allclose(khatri_rao(a, b), naive_khatri_rao(a, b), rtol=1e-14)

    def test_column_mismatch(self):
        with pytest.raises(ValueError):
            khatri_rao(np.ones((2, 2)), np.ones((2, 3)))

    def test_rank_lower_bound(self):
        # rank(A kr B) >= min(k_A + k_B - 1, R) on random full-k-rank inputs
        rng = np.random.default_rng(3)
        for _ in range(20):
            r = int(rng.integers(2, 6))
            a = random_complex(rng, int(rng.integers(2, 5)), r)
            b = random_complex(rng, int(rng.integers(2, 5)), r)
            ka = min(a.shape[0], r)
            kb = min(b.shape[0], r)
            bound = min(ka + kb - 1, r)
            assert np.linalg.matrix_rank(khatri_rao(a, b)) >= bound


class TestUnfold:
    def test_2x2x2_fiber_enumeration(self):
        arr = np.arange(1, 9, dtype=float).reshape((2, 2, 2), order="F")
        t = Tensor(arr)
        expected = naive_mode_unfold(arr.astype(complex), 0)
        assert np.array_equal(mode_unfold(t, 0), expected)
        # canonical layout puts 1..8 with mode-0 fastest
        assert np.array_equal(mode_unfold(t, 0), np.array([[1, 3, 5, 7], [2, 4, 6, 8]]))

    def test_rank1_identity(self):
        rng = np.random.default_rng(4)
        a, b, c = (random_complex(rng, d) for d in (3, 4, 2))
        fs = FactorSet(np.ones(1), (a[:, None], b[:, None], c[:, None]))
        t = cp_reconstruct(fs)
        expected = a[:, None] @ khatri_rao(c[:, None], b[:, None]).T
        assert np.allclose(mode_unfold(t, 0), expected, rtol=1e-13)

    def test_fold_roundtrip(self):
        rng = np.random.default_rng(5)
        arr = random_complex(rng, 3, 2, 4, 2)
        t = Tensor(arr)
        for n in range(4):
            assert np.array_equal(fold(mode_unfold(t, n), n, t.dims).array, arr)

    def test_invalid_mode(self):
        t = Tensor(np.ones((2, 2)))
        with pytest.raises(ValueError):
            mode_unfold(t, 2)
        with pytest.raises(ValueError):
            mode_unfold(t, -1)

    def test_cp_unfold_identity_all_modes(self):
        rng = np.random.default_rng(6)
        fs = random_factorset(rng, (3, 2, 4, 2), 3)
        t = cp_reconstruct(fs)
        for n in range(4):
            others = [fs.factors[m] for m in range(4) if m != n]
            expected = fs.factors[n] @ np.diag(fs.weights) @ khatri_rao_list(others[::-1]).T
            assert np.allclose(mode_unfold(t, n), expected, rtol=1e-12, atol=1e-14)


class TestVec:
    def test_identity_vec(self):
        assert np.array_equal(vec(Tensor(np.eye(2))), np.array([1, 0, 0, 1]))

    def test_unvec_roundtrip(self):
        rng = np.random.default_rng(7)
        m = random_complex(rng, 3, 5)
        assert np.array_equal(unvec(vec(Tensor(m)), 3, 5), m)

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            unvec(np.ones(5), 2, 3)

    def test_vec_cp_identity(self):
        rng = np.random.default_rng(8)
        fs = random_factorset(rng, (3, 2, 2), 2)
        lhs = vec(cp_reconstruct(fs))
        rhs = khatri_rao_list(fs.factors[::-1]) @ fs.weights
        assert np.allclose(lhs, rhs, rtol=1e-13)
        assert np.allclose(cp_vec(fs), rhs)


class TestCpReconstruct:
    def test_rank1_outer_product(self):
        rng = np.random.default_rng(9)
        a, b = random_complex(rng, 3), random_complex(rng, 4)
        t = cp_reconstruct(FactorSet(np.ones(1), (a[:, None], b[:, None])))
        assert np.allclose(t.array, np.outer(a, b), rtol=1e-14)

    def test_zero_weights(self):
        rng = np.random.default_rng(10)
        fs = FactorSet(np.zeros(2), (random_complex(rng, 3, 2), random_complex(rng, 2, 2)))
        assert cp_reconstruct(fs).norm() == 0.0

    def test_order5_rank2_against_naive(self):
        rng = np.random.default_rng(11)
        fs = random_factorset(rng, (2, 3, 2, 2, 3), 2)
        t = cp_reconstruct(fs)
        oracle = naive_cp_reconstruct(fs.weights, fs.factors)
        assert np.linalg.norm(t.array - oracle) <= 1e-12 * np.linalg.norm(oracle)


class TestSpatialSmooth:
    def test_k1_equals_k(self):
        rng = np.random.default_rng(12)
        arr = random_complex(rng, 4, 2, 3)
        out = spatial_smooth(Tensor(arr), 4)
        assert out.dims == (4, 2, 3, 1)
        assert np.array_equal(out.array[..., 0], arr)

    def test_index_law(self):
        rng = np.random.default_rng(13)
        arr = random_complex(rng, 4, 2, 2, 2, 2)
        out = spatial_smooth(Tensor(arr), 3).array
        assert out.shape == (3, 2, 2, 2, 2, 2)
        for i1 in range(3):
            for i2 in range(2):
                assert np.array_equal(out[i1, ..., i2], arr[i1 + i2])

    def test_multiplicity(self):
        # entry (k, ...) appears exactly min(k, K1, K2, K-k+1) times
        K, K1 = 7, 4
        K2 = K - K1 + 1
        arr = np.arange(1, K + 1, dtype=float)[:, None] * np.ones((1, 2))
        out = spatial_smooth(Tensor(arr), K1).array
        for k in range(1, K + 1):
            count = int(np.sum(np.isclose(out.real, k))) // 2
            assert count == min(k, K1, K2, K - k + 1)

    def test_out_of_range(self):
        t = Tensor(np.ones((4, 2)))
        for bad in (0, 5):
            with pytest.raises(ValueError):
                spatial_smooth(t, bad)

    def test_vandermonde_cp_form(self):
        # smoothing a CP tensor with Vandermonde lead factor gives the
        # six-factor CP form with B1/B6 the K1/K2 Vandermonde restrictions
        rng = np.random.default_rng(14)
        K, K1, R = 6, 4, 2
        K2 = K - K1 + 1
        omega = rng.uniform(-np.pi, np.pi, R)
        a1 = vandermonde(K, omega)
        others = tuple(random_complex(rng, d, R) for d in (2, 3, 2, 2))
        w = random_complex(rng, R)
        t = cp_reconstruct(FactorSet(w, (a1,) + others))
        smoothed = spatial_smooth(t, K1)
        six = cp_reconstruct(
            FactorSet(w, (vandermonde(K1, omega),) + others + (vandermonde(K2, omega),))
        )
        assert np.allclose(smoothed.array, six.array, rtol=1e-12, atol=1e-14)


class TestUnfoldMulti:
    def test_cp_grouped_identity(self):
        rng = np.random.default_rng(15)
        fs = random_factorset(rng, (3, 2, 2, 2, 3, 2), 2)
        t = cp_reconstruct(fs)
        m = unfold_multi(t, [0, 1, 2], [3, 4, 5])
        b123 = khatri_rao_list([fs.factors[0], fs.factors[1], fs.factors[2]])
        b456 = khatri_rao_list([fs.factors[3], fs.factors[4], fs.factors[5]])
        expected = b123 @ np.diag(fs.weights) @ b456.T
        assert np.allclose(m, expected, rtol=1e-12, atol=1e-14)

    def test_entries_match_index_arithmetic(self):
        rng = np.random.default_rng(16)
        arr = random_complex(rng, 2, 3, 2, 2)
        m = unfold_multi(Tensor(arr), [0, 1], [2, 3])
        for i0 in range(2):
            for i1 in range(3):
                for i2 in range(2):
                    for i3 in range(2):
                        assert m[i0 * 3 + i1, i2 * 2 + i3] == arr[i0, i1, i2, i3]

    def test_partition_required(self):
        t = Tensor(np.ones((2, 2, 2)))
        with pytest.raises(ValueError):
            unfold_multi(t, [0], [1])


class TestAls:
    def test_exact_rank_recovery(self):
        rng = np.random.default_rng(17)
        fs = random_factorset(rng, (5, 4, 6), 3)
        arr = cp_reconstruct(FactorSet(np.ones(3), fs.factors)).array
        init = [f + 0.01 * random_complex(rng, *f.shape) for f in fs.factors]
        res = cp_als(arr, init, max_iters=250, tol=1e-13)
        rec = cp_reconstruct(FactorSet(np.ones(3), res.factors)).array
        assert np.linalg.norm(rec - arr) <= 1e-8 * np.linalg.norm(arr)

    def test_residual_monotone(self):
        rng = np.random.default_rng(18)
        arr = random_complex(rng, 4, 3, 5)
        factors = [random_complex(rng, d, 2) for d in arr.shape]
        resids = []
        t = Tensor(arr)
        for _ in range(8):
            res = cp_als(arr, factors, max_iters=1, tol=0.0)
            factors = [np.array(f) for f in res.factors]
            rec = cp_reconstruct(FactorSet(np.ones(2), factors))
            resids.append(np.linalg.norm(rec.array - t.array))
        assert all(b <= a + 1e-10 for a, b in zip(resids, resids[1:]))

    def test_converged_flag_on_exact_init(self):
        rng = np.random.default_rng(19)
        fs = random_factorset(rng, (4, 3, 3), 2)
        arr = cp_reconstruct(FactorSet(np.ones(2), fs.factors)).array
        res = cp_als(arr, list(fs.factors), max_iters=10, tol=1e-10)
        assert isinstance(res, AlsResult)
        assert res.converged and res.iterations == 1


class TestVandermonde:
    def test_entries(self):
        v = vandermonde(3, [0.5])
        assert np.allclose(v[:, 0], np.exp(1j * 0.5 * np.arange(3)))

    def test_ratio_property(self):
        rng = np.random.default_rng(20)
        om = rng.uniform(-np.pi, np.pi, 4)
        v = vandermonde(5, om)
        ratios = v[1:] / v[:-1]
        assert np.allclose(ratios, np.exp(1j * om)[None, :], rtol=1e-13)


def test_random_oracle_sweep():
    # compact version of the oracle-equivalence suite (full run in acceptance)
    rng = np.random.default_rng(21)
    for _ in range(25):
        order = int(rng.integers(2, 6))
        dims = tuple(int(rng.integers(2, 4)) for _ in range(order))
        rank = int(rng.integers(1, 4))
        fs = random_factorset(rng, dims, rank)
        t = cp_reconstruct(fs)
        oracle = naive_cp_reconstruct(fs.weights, fs.factors)
        assert np.linalg.norm(t.array - oracle) <= 1e-12 * np.linalg.norm(oracle)
        assert np.allclose(vec(t), naive_vec(t.array), rtol=1e-12)
        n = int(rng.integers(0, order))
        assert np.allclose(mode_unfold(t, n), naive_mode_unfold(t.array, n), rtol=1e-12)
