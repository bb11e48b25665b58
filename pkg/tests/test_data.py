import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twinreg.data import (DataError, Dataset, SplitSpec, fit_normalizer, gen_ising, gen_random_polynomial, gen_rcl,
                          gen_wheatstone, ising_energy, load_csv, random_polynomial, rcl_current, save_csv, split,
                          split_indices, wheatstone_voltage)


def brute_force_ising(lattice):
    """-sum over each site's right and down neighbour, periodic."""
    L = lattice.shape[0]
    energy = 0.0
    for r, c in itertools.product(range(L), range(L)):
        energy -= lattice[r, c] * lattice[r, (c + 1) % L]
        energy -= lattice[r, c] * lattice[(r + 1) % L, c]
    return energy


class TestCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b,y\n1.5,2,3\n-1,0.25,4e-3\n7,8,9\n")
        ds = load_csv(path, "y")
        np.testing.assert_array_equal(ds.X, [[1.5, 2], [-1, 0.25], [7, 8]])
        np.testing.assert_array_equal(ds.y, [3, 4e-3, 9])
        assert ds.feature_names == ["a", "b"] and ds.provenance == str(path)

    def test_header_only(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,y\n")
        with pytest.raises(DataError, match="empty dataset"):
            load_csv(path, "y")

    def test_missing_target(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(DataError, match="target column"):
            load_csv(path, "y")

    def test_non_numeric_cell_located(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,y\n1,2\nfoo,3\n")
        with pytest.raises(DataError, match="row 3, column 'a'"):
            load_csv(path, "y")

    def test_boston_shaped_file(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = Dataset(rng.normal(size=(506, 13)), rng.normal(size=506))
        save_csv(ds, tmp_path / "bh.csv", target_column="MEDV")
        loaded = load_csv(tmp_path / "bh.csv", "MEDV")
        assert (loaded.n, loaded.d) == (506, 13)

    @pytest.mark.parametrize("gen", [gen_random_polynomial, gen_rcl, gen_wheatstone])
    def test_generated_round_trip_is_bit_exact(self, tmp_path, gen):
        ds = gen(50, seed=4)
        save_csv(ds, tmp_path / "g.csv")
        loaded = load_csv(tmp_path / "g.csv", "y")
        np.testing.assert_array_equal(loaded.X, ds.X)
        np.testing.assert_array_equal(loaded.y, ds.y)
        sidecar = json.loads((tmp_path / "g.json").read_text())
        assert sidecar["seed"] == 4 and sidecar["n"] == 50

    def test_nonfinite_rejected(self):
        with pytest.raises(DataError):
            Dataset(np.array([[np.nan]]), np.array([1.0]))


class TestNormalizer:
    def test_two_value_column(self):
        meta = fit_normalizer(np.array([[0.0], [10.0]]))
        np.testing.assert_array_equal(meta.apply([[0.0], [10.0]]), [[-1.0], [1.0]])

    def test_out_of_range_value(self):
        meta = fit_normalizer(np.array([[0.0], [10.0]]))
        assert meta.apply([[20.0]])[0, 0] == 3.0

    def test_refit_on_normalized_is_identity(self, rng):
        X = rng.normal(size=(40, 3))
        Z = fit_normalizer(X).apply(X)
        np.testing.assert_allclose(fit_normalizer(Z).apply(Z), Z, atol=1e-15)

    def test_constant_column_maps_to_zero(self):
        meta = fit_normalizer(np.array([[3.0, 1.0], [3.0, 2.0]]))
        np.testing.assert_array_equal(meta.apply([[3.0, 1.5]])[:, 0], [0.0])

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 100), shift=st.floats(-100, 100))
    def test_extremes_map_to_unit_interval(self, seed, scale, shift):
        X = np.random.default_rng(seed).normal(size=(30, 4)) * scale + shift
        Z = fit_normalizer(X).apply(X)
        np.testing.assert_allclose(Z.min(axis=0), -1.0, atol=1e-12)
        np.testing.assert_allclose(Z.max(axis=0), 1.0, atol=1e-12)


class TestSplit:
    def test_random_sizes(self):
        parts = split_indices(100, np.zeros(100), SplitSpec(seed=0))
        assert [len(parts[k]) for k in ("train", "val", "test")] == [90, 5, 5]

    def test_threshold_sizes_and_cut(self):
        y = np.random.default_rng(0).normal(size=200)
        parts = split_indices(200, y, SplitSpec.threshold(seed=1))
        assert {k: len(v) for k, v in parts.items()} == {"train": 100, "val": 20, "test_in": 30, "test_out": 50}
        assert y[parts["test_out"]].min() >= np.quantile(y, 0.75)
        assert y[parts["train"]].max() <= y[parts["test_out"]].min()

    @pytest.mark.parametrize("spec", [SplitSpec(seed=3), SplitSpec.threshold(seed=3)])
    def test_partition_and_determinism(self, spec):
        y = np.random.default_rng(1).normal(size=157)
        a, b = split_indices(157, y, spec), split_indices(157, y, spec)
        allidx = np.concatenate(list(a.values()))
        np.testing.assert_array_equal(np.sort(allidx), np.arange(157))
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])

    def test_empty_subset_rejected(self):
        with pytest.raises(DataError):
            split(gen_random_polynomial(5), SplitSpec(seed=0))

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ValueError):
            SplitSpec(fractions=(0.5, 0.2, 0.2))


class TestGenerators:
    def test_rp_zero_coefficients(self):
        ds = gen_random_polynomial(20, coefficients=(np.zeros((5, 5)), np.zeros(5), 0.7))
        np.testing.assert_array_equal(ds.y, 0.7)

    def test_rp_deterministic(self):
        a, b = gen_random_polynomial(2, seed=9), gen_random_polynomial(2, seed=9)
        assert a.X.shape == (2, 5)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.y, b.y)

    def test_rp_reference_size(self):
        ds = gen_random_polynomial(1000)
        assert (ds.n, ds.d) == (1000, 5)

    def test_rp_sizes_share_function_and_prefix(self):
        small, big = gen_random_polynomial(10, seed=2), gen_random_polynomial(100, seed=2)
        np.testing.assert_array_equal(small.X, big.X[:10])
        assert small.meta["quad"] == big.meta["quad"]

    def test_rcl_resonance(self):
        V0, R, L, omega = 1.7, 0.8, 1.2, 1.5
        C = 1.0 / (omega ** 2 * L)
        assert rcl_current(V0, omega, 0.0, R, L, C) == pytest.approx(V0 / R, rel=1e-12)

    def test_rcl_zero_voltage(self):
        assert rcl_current(0.0, 2.0, 1.0, 1.0, 1.0, 1.0) == 0.0
        ds = gen_rcl(30, seed=0, noise=0.0)
        np.testing.assert_array_equal(ds.y, rcl_current(*ds.X.T))

    def test_rcl_reference_size(self):
        assert gen_rcl(4000).X.shape == (4000, 6)

    def test_wheatstone_balanced(self):
        assert wheatstone_voltage(1.0, 1.0, 1.0, 1.0) == 0.0
        assert wheatstone_voltage(0.0, 1.3, 0.7, 1.1) == 0.0

    def test_wheatstone_reference_size(self):
        assert gen_wheatstone(200).X.shape == (200, 4)

    def test_noise_is_additive_with_requested_std(self):
        ds, clean = gen_rcl(4000, seed=1), gen_rcl(4000, seed=1, noise=0.0)
        resid = ds.y - clean.y
        assert abs(resid.std() - 0.1) < 0.005

    def test_ising_reference_states(self):
        up = np.ones((20, 20))
        assert ising_energy(up) == -800.0
        flipped = up.copy()
        flipped[4, 7] = -1
        assert ising_energy(flipped) - ising_energy(up) == 8.0
        checker = np.fromfunction(lambda r, c: (-1.0) ** (r + c), (20, 20))
        assert ising_energy(checker) == 800.0

    def test_ising_matches_bond_enumeration(self):
        ds = gen_ising(25, seed=3)
        assert ds.X.shape == (25, 400) and set(np.unique(ds.X)) == {-1.0, 1.0}
        for x, e in zip(ds.X, ds.y):
            assert brute_force_ising(x.reshape(20, 20)) == e

    def test_polynomial_formula_by_loops(self, rng):
        quad, lin = rng.normal(size=(3, 3)), rng.normal(size=3)
        x = rng.normal(size=3)
        expected = sum(quad[i, j] * x[i] * x[j] for i in range(3) for j in range(i, 3)) + lin @ x + 0.5
        assert random_polynomial(x[None, :], quad, lin, 0.5)[0] == pytest.approx(expected, rel=1e-13)
