import warnings
from fractions import Fraction

import numpy as np
import pytest

from bordaduel.instances import (
    EmpiricalCounts,
    EmptyPairWarning,
    HardInstanceSpec,
    bit_vector,
    fit_env_from_counts,
    hard_instance_borda,
    hard_instance_winner,
    lambda0,
    load_counts,
    make_hard_instance,
    make_random_glm,
)
from bordaduel.model import FeatureSet, LinkFunction, StochasticEnv


@pytest.mark.parametrize(
    "x, d, expected",
    [(0, 3, [-1, -1, -1]), (3, 3, [1, 1, -1]), (5, 3, [1, -1, 1])],
)
def test_bit_vector(x, d, expected):
    np.testing.assert_array_equal(bit_vector(x, d), expected)


def test_bit_vector_range():
    with pytest.raises(ValueError):
        bit_vector(8, 3)


class TestHardInstance:
    spec = HardInstanceSpec(2, 1 / 16, (1, 1))

    def test_block_values(self):
        env = make_hard_instance(self.spec)
        assert env.K == 8 and env.d == 3
        assert env.P[0, 4] == pytest.approx(0.625, abs=1e-15)
        assert env.P[1, 2] == pytest.approx(0.5, abs=1e-15)
        assert env.P[5, 7] == pytest.approx(0.5, abs=1e-15)
        assert env.P[4, 0] == pytest.approx(0.375, abs=1e-15)

    def test_borda_table(self):
        env = make_hard_instance(self.spec)
        assert np.array_equal(env.P + env.P.T, np.ones((8, 8)))
        B = env.P.mean(axis=1)
        assert B[3] == pytest.approx(0.6875, abs=1e-15)
        np.testing.assert_allclose(B[4:], 0.375, atol=1e-15)
        assert env.winner == 3

    @pytest.mark.filterwarnings("ignore:d_core \\* delta")
    @pytest.mark.parametrize("d_core", [1, 2, 3])
    def test_closed_form_and_block_formula(self, d_core):
        rng = np.random.default_rng(d_core)
        for _ in range(10):
            spec = HardInstanceSpec.random(d_core, rng)
            env = make_hard_instance(spec)
            half = 2**d_core
            for i in range(half):
                for j in range(half, 2 * half):
                    expected = 0.75 + bit_vector(i, d_core) @ spec.theta
                    assert env.P[i, j] == pytest.approx(expected, abs=1e-14)
            np.testing.assert_allclose(env.borda, hard_instance_borda(spec), atol=1e-12)
            assert np.linalg.norm(env.features.flat(), axis=1).max() <= 1 + 1e-12
            winner = hard_instance_winner(spec)
            np.testing.assert_array_equal(bit_vector(winner, d_core), np.sign(spec.theta))
            assert env.winner == winner
            assert np.sum(env.borda == env.borda.max()) == 1

    def test_invariant_errors(self):
        with pytest.raises(ValueError):
            HardInstanceSpec(2, 0.2, (1, 1))
        with pytest.raises(ValueError):
            HardInstanceSpec(2, 0.01, (1, 0))
        with pytest.warns(UserWarning, match="1/8"):
            HardInstanceSpec(2, 0.1, (1, -1))

    def test_meta(self):
        env = make_hard_instance(self.spec)
        assert env.meta["d_core"] == 2 and env.meta["ambient_dim"] == 3

    def test_lambda0_against_eigendecomposition(self):
        env = make_hard_instance(self.spec)
        M = np.zeros((3, 3))
        for i in range(8):
            for j in range(8):
                v = env.features.phi[i, j]
                M += np.outer(v, v)
        M /= 64
        w, _ = np.linalg.eigh(M)
        assert lambda0(env.features) == pytest.approx(w[0], rel=1e-9)


class TestRandomGlm:
    @pytest.mark.parametrize("K, d", [(2, 1), (5, 3), (12, 6)])
    def test_properties(self, K, d):
        env = make_random_glm(K, d, LinkFunction.linear(), np.random.default_rng(K * d))
        phi = env.features.phi
        assert np.array_equal(phi, -phi.transpose(1, 0, 2))
        assert np.all(phi[np.arange(K), np.arange(K)] == 0)
        assert env.P.min() >= 0.05 - 1e-12 and env.P.max() <= 0.95 + 1e-12
        assert lambda0(env.features) > 0

    def test_too_many_dims_warns(self):
        with pytest.warns(UserWarning):
            make_random_glm(2, 3, LinkFunction.linear(), np.random.default_rng(0))


def test_lambda0_examples():
    assert lambda0(FeatureSet(np.zeros((3, 3, 2)))) == 0.0
    assert lambda0(FeatureSet.from_upper(2, {(0, 1): [1.0]})) == pytest.approx(0.5)


class TestCounts:
    def test_ratio(self):
        counts = EmpiricalCounts(np.array([[0, 7], [3, 0]]))
        assert counts.empirical_prob(0, 1) == Fraction(7, 10)
        assert float(counts.empirical_prob(1, 0)) == 0.3

    def test_validation(self):
        with pytest.raises(ValueError):
            EmpiricalCounts(np.array([[1, 2], [3, 0]]))
        with pytest.raises(ValueError):
            EmpiricalCounts(np.array([[0, -1], [3, 0]]))

    def test_csv_round_trip_and_duplicates(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("i,j,wins\n0,1,4\n1,0,3\n0,1,3\n2,0,5\n")
        counts = load_counts(path)
        assert counts.K == 3
        assert counts.wins[0, 1] == 7
        out = tmp_path / "d.csv"
        counts.to_csv(out)
        assert np.array_equal(EmpiricalCounts.from_csv(out).wins, counts.wins)

    def test_csv_bad_header(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("a,b,c\n0,1,1\n")
        with pytest.raises(ValueError, match="header"):
            load_counts(path)


def tiered_env(K, link, values):
    """Logistic env whose upper-triangle pairs take a few distinct scalar margins."""
    rng = np.random.default_rng(7)
    vectors = {(i, j): [float(rng.choice(values))] for i in range(K) for j in range(i + 1, K)}
    return StochasticEnv(FeatureSet.from_upper(K, vectors), link, [1.5])


class TestFit:
    def test_grouping_shares_vectors(self):
        wins = np.array([[0, 7, 7, 5], [3, 0, 2, 1], [3, 8, 0, 6], [5, 9, 4, 0]])
        env, report = fit_env_from_counts(EmpiricalCounts(wins), 3, np.random.default_rng(0))
        phi = env.features.phi
        # (0,1) and (0,2) both have rate 7/10
        np.testing.assert_array_equal(phi[0, 1], phi[0, 2])
        # (2,1) has rate 8/10 and (1,3) rate 1/10 -> different groups
        assert not np.array_equal(phi[2, 1], phi[0, 1])
        # rate 1/2 maps to zero
        np.testing.assert_array_equal(phi[0, 3], 0.0)
        # 7/10 and 3/10 are mirrored
        np.testing.assert_array_equal(phi[1, 0], -phi[0, 1])

    def test_groups_partition_pairs(self):
        rng = np.random.default_rng(3)
        K = 6
        wins = rng.integers(0, 5, size=(K, K))
        np.fill_diagonal(wins, 0)
        counts = EmpiricalCounts(wins)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, report = fit_env_from_counts(counts, 4, np.random.default_rng(0))
        members = [p for ms in report.groups.values() for p in ms]
        assert len(members) == len(set(members))
        expected = {(i, j) for i in range(K) for j in range(K) if i != j and counts.totals[i, j] > 0}
        assert set(members) == expected

    def test_empty_pair_warns(self):
        wins = np.array([[0, 6, 0], [4, 0, 3], [0, 7, 0]])
        with pytest.warns(EmptyPairWarning):
            env, report = fit_env_from_counts(EmpiricalCounts(wins), 2, np.random.default_rng(0))
        assert report.empty_pairs == [(0, 2)]
        assert env.P[0, 2] == 0.5

    def test_recovers_tiered_env(self):
        true = tiered_env(6, LinkFunction.logistic(), [-0.8, 0.3, 0.9])
        n = 10_000
        wins = np.rint(true.P * n).astype(int)
        np.fill_diagonal(wins, 0)
        counts = EmpiricalCounts(wins)
        env, report = fit_env_from_counts(counts, 5, np.random.default_rng(1))
        target = np.array([[float(counts.empirical_prob(i, j) or 0.5) for j in range(6)] for i in range(6)])
        assert report.max_abs_error <= 0.05
        assert np.abs(env.P - target).max() == pytest.approx(report.max_abs_error)
        assert report.converged
