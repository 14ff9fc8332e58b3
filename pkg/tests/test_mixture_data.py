import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from benign_lab.errors import ConfigurationError, DimensionError
from benign_lab.mixture_data import (ClusterLaw, Dataset, MixtureSpec, NoisePolicy,
                                     check_sample_facts, corrupt_labels, flip_count,
                                     fresh_test_batch, iter_test_batches, load_dataset,
                                     sample_clean, save_dataset)
from benign_lab.rng import stream


class TestStreams:
    def test_frozen_first_draws(self):
        # regression values of the documented Philox layout
        np.testing.assert_allclose(stream(0, "sample", 0).standard_normal(2),
                                   [-0.74401917, -0.01442461], atol=1e-8)

    def test_purpose_and_index_separate_streams(self):
        a = stream(5, "sample", 0).random(4)
        assert not np.array_equal(a, stream(5, "weights", 0).random(4))
        assert not np.array_equal(a, stream(5, "sample", 1).random(4))
        np.testing.assert_array_equal(a, stream(5, "sample", 0).random(4))

    @pytest.mark.parametrize("bad", [-1, 2 ** 64, 1.5, True, "3"])
    def test_bad_seed(self, bad):
        with pytest.raises(ConfigurationError):
            stream(bad, "sample")

    def test_unknown_purpose(self):
        with pytest.raises(ConfigurationError):
            stream(0, "nope")


class TestMixtureSpec:
    def test_constants_diagonal(self):
        var = np.array([0.25, 0.5, 1.0, 0.25])
        spec = MixtureSpec.gaussian(4, 2.0, variances=var)
        assert spec.cluster is ClusterLaw.DIAGONAL
        assert spec.lam == 1.0
        assert spec.kappa == np.mean(var)
        spec2 = MixtureSpec.gaussian(4, 2.0, variances=np.full(4, 0.5))
        assert spec2.lam == 2.0

    def test_mu_norm(self):
        assert MixtureSpec.gaussian(50, 9.0).mu_norm_sq == pytest.approx(9.0)
        assert MixtureSpec.gaussian(50, 9.0, direction="ones").mu_norm_sq == pytest.approx(9.0)

    @pytest.mark.parametrize("kw", [dict(eta=1.5), dict(eta=-0.1), dict(variances=np.full(3, 2.0)),
                                    dict(variances=np.zeros(3)), dict(noise_policy="bogus")])
    def test_rejects(self, kw):
        with pytest.raises(ConfigurationError):
            MixtureSpec.gaussian(3, 1.0, **kw)

    def test_rejects_bad_dimension(self):
        with pytest.raises(ConfigurationError):
            MixtureSpec.gaussian(0, 1.0)


class TestSampleClean:
    def test_frozen_values(self):
        ds = sample_clean(MixtureSpec.gaussian(4, 1.0), 2, 7)
        np.testing.assert_array_equal(ds.y, [1, -1])
        np.testing.assert_allclose(ds.X, [[-0.1929166938287279, 0.40070996668332465,
                                           -0.8106331979639336, 0.8606203792882028],
                                          [-1.1276568786977346, -0.9524661192328924,
                                           -1.0377090475193196, -0.7718293423969986]],
                                   rtol=0, atol=1e-15)

    def test_deterministic(self):
        spec = MixtureSpec.gaussian(64, 4.0)
        a, b = sample_clean(spec, 10, 3), sample_clean(spec, 10, 3)
        assert a.X.tobytes() == b.X.tobytes()
        np.testing.assert_array_equal(a.y, b.y)
        assert a.noisy_indices.size == 0

    def test_prefix_stable(self):
        spec = MixtureSpec.gaussian(32, 4.0)
        np.testing.assert_array_equal(sample_clean(spec, 5, 1).X, sample_clean(spec, 9, 1).X[:5])

    def test_zero_mean_symmetry(self):
        spec = MixtureSpec.gaussian(3, 0.0)
        ds = sample_clean(spec, 100_000, 0)
        v = ds.y_clean[:, None] * ds.X
        se = v.std(axis=0, ddof=1) / math.sqrt(ds.n)
        assert np.all(np.abs(v.mean(axis=0)) <= 3 * se)

    def test_noise_norm_concentration(self):
        spec = MixtureSpec.gaussian(1000, 16.0)
        vals = []
        for s in range(100):
            ds = sample_clean(spec, 100, s)
            z = ds.X - ds.y_clean[:, None] * spec.mu
            vals.append(np.mean(np.sum(z * z, axis=1)) / spec.p)
        assert 0.9 <= np.mean(vals) <= 1.1

    def test_second_moment(self):
        spec = MixtureSpec.gaussian(20, 5.0, variances=np.linspace(0.2, 1.0, 20))
        ds = sample_clean(spec, 20_000, 4)
        sq = ds.sq_norms
        expected = spec.variances.sum() + spec.mu_norm_sq
        assert abs(sq.mean() - expected) <= 3 * sq.std(ddof=1) / math.sqrt(sq.size)

    @pytest.mark.parametrize("n", [0, -2, 1.5])
    def test_bad_count(self, n):
        with pytest.raises(ConfigurationError):
            sample_clean(MixtureSpec.gaussian(3, 1.0), n, 0)


class TestCorruptLabels:
    def test_zero_noise_identity(self):
        spec = MixtureSpec.gaussian(8, 1.0, eta=0.0)
        ds = sample_clean(spec, 20, 0)
        out = corrupt_labels(ds, spec, 0)
        np.testing.assert_array_equal(out.y, ds.y)
        assert out.noisy_indices.size == 0

    def test_iid_all_flipped(self):
        spec = MixtureSpec.gaussian(8, 1.0, eta=1.0, noise_policy="iid")
        out = corrupt_labels(sample_clean(spec, 20, 0), spec, 0)
        np.testing.assert_array_equal(out.noisy_indices, np.arange(20))

    def test_fixed_count(self):
        spec = MixtureSpec.gaussian(8, 1.0, eta=0.1, noise_policy=NoisePolicy.FIXED_COUNT)
        ds = sample_clean(spec, 50, 0)
        sets = {tuple(corrupt_labels(ds, spec, s).noisy_indices) for s in range(20)}
        assert all(len(s) == 5 for s in sets)
        assert len(sets) > 15

    def test_features_untouched(self):
        spec = MixtureSpec.gaussian(8, 1.0, eta=0.3, noise_policy="iid")
        ds = sample_clean(spec, 40, 2)
        assert corrupt_labels(ds, spec, 9).X.tobytes() == ds.X.tobytes()

    def test_rejects_double_corruption(self):
        spec = MixtureSpec.gaussian(8, 1.0, eta=0.5, noise_policy="fixed-count")
        ds = corrupt_labels(sample_clean(spec, 10, 0), spec, 0)
        with pytest.raises(ConfigurationError):
            corrupt_labels(ds, spec, 1)

    def test_flip_count_rounding(self):
        assert flip_count(0.1, 50) == 5
        assert flip_count(0.29, 100) == 29
        assert flip_count(0.1, 32) == 3

    def test_a2_noisy_set_frozen(self):
        spec = MixtureSpec.gaussian(16384, 64.0, 0.1, "fixed-count")
        ds = corrupt_labels(sample_clean(spec, 32, 0), spec, 0)
        np.testing.assert_array_equal(ds.noisy_indices, [3, 14, 31])


class TestTestBatches:
    def test_clean_batch(self):
        spec = MixtureSpec.gaussian(4, 1.0, eta=0.3)
        assert fresh_test_batch(spec, 100, 0).noisy_indices.size == 0

    def test_iid_rate(self):
        spec = MixtureSpec.gaussian(2, 1.0, eta=0.1, noise_policy="iid")
        frac = fresh_test_batch(spec, 100_000, 0, corrupted=True).noisy_indices.size / 1e5
        assert 0.094 <= frac <= 0.106

    def test_empty_rejected(self):
        with pytest.raises(ConfigurationError):
            fresh_test_batch(MixtureSpec.gaussian(2, 1.0), 0, 0)

    @pytest.mark.parametrize("policy", ["iid", "fixed-count"])
    def test_chunk_invariant(self, policy):
        spec = MixtureSpec.gaussian(5, 1.0, eta=0.2, noise_policy=policy)
        full = fresh_test_batch(spec, 103, 4, corrupted=True)
        parts = list(iter_test_batches(spec, 103, 4, True, chunk=10))
        np.testing.assert_array_equal(np.vstack([b.X for b in parts]), full.X)
        np.testing.assert_array_equal(np.concatenate([b.y for b in parts]), full.y)

    def test_independent_of_training_stream(self):
        spec = MixtureSpec.gaussian(5, 1.0)
        assert not np.array_equal(fresh_test_batch(spec, 5, 0).X, sample_clean(spec, 5, 0).X)


class TestSampleFacts:
    def test_single_sample(self):
        spec = MixtureSpec.gaussian(64, 4.0)
        rep = check_sample_facts(sample_clean(spec, 1, 0), spec, 0.05, 10.0, 0.1)
        assert rep.events["cross_terms"].passed is True
        assert rep.events["cross_terms"].note == "no pairs"

    def test_forced_norm_violation(self):
        spec = MixtureSpec.gaussian(256, 16.0)
        ds = sample_clean(spec, 4, 0)
        X = ds.X.copy()
        C1 = 10.0
        X[1] *= math.sqrt(2 * C1 * spec.p / float(X[1] @ X[1]))
        rep = check_sample_facts(Dataset(X, ds.y, ds.y_clean), spec, 0.05, C1, 0.1)
        assert rep.events["norm_band"].passed is False
        assert rep.events["norm_band"].violations == [1]

    def test_zero_mean_not_applicable(self):
        spec = MixtureSpec.gaussian(64, 0.0)
        rep = check_sample_facts(sample_clean(spec, 4, 0), spec, 0.05, 10.0, 0.1)
        assert rep.events["clean_alignment"].passed is None and rep.events["noisy_alignment"].passed is None

    def test_pass_rate(self):
        spec = MixtureSpec.gaussian(4096, 64.0, 0.1, "fixed-count")
        passes = 0
        for s in range(100):
            ds = corrupt_labels(sample_clean(spec, 32, s), spec, s)
            passes += check_sample_facts(ds, spec, 0.05, 10.0, 0.1).all_passed
        assert passes >= 95

    def test_min_C1_is_tight(self):
        spec = MixtureSpec.gaussian(512, 16.0, 0.1, "fixed-count")
        ds = corrupt_labels(sample_clean(spec, 16, 2), spec, 2)
        need = check_sample_facts(ds, spec, 0.05, 10.0, 0.1).min_C1
        r_ok = check_sample_facts(ds, spec, 0.05, need * (1 + 1e-9), 0.1)
        r_bad = check_sample_facts(ds, spec, 0.05, need * (1 - 1e-6), 0.1)
        assert r_ok.events["norm_band"].passed and r_ok.events["cross_terms"].passed
        assert not (r_bad.events["norm_band"].passed and r_bad.events["cross_terms"].passed)

    def test_dimension_mismatch(self):
        spec = MixtureSpec.gaussian(8, 1.0)
        with pytest.raises(DimensionError):
            check_sample_facts(sample_clean(spec, 3, 0), MixtureSpec.gaussian(9, 1.0),
                               0.05, 10.0, 0.1)


class TestDatasetFiles:
    def test_round_trip(self, tmp_path):
        spec = MixtureSpec.gaussian(7, 2.0, eta=0.4, noise_policy="fixed-count")
        ds = corrupt_labels(sample_clean(spec, 5, 11), spec, 1)
        save_dataset(ds, tmp_path / "d.blab")
        back = load_dataset(tmp_path / "d.blab")
        assert back.X.tobytes() == ds.X.tobytes()
        np.testing.assert_array_equal(back.y, ds.y)
        np.testing.assert_array_equal(back.y_clean, ds.y_clean)
        assert back.seed == 11

    def test_truncated(self, tmp_path):
        ds = sample_clean(MixtureSpec.gaussian(3, 1.0), 2, 0)
        save_dataset(ds, tmp_path / "d.blab")
        raw = (tmp_path / "d.blab").read_bytes()
        (tmp_path / "d.blab").write_bytes(raw[:-3])
        with pytest.raises(ConfigurationError):
            load_dataset(tmp_path / "d.blab")

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x").write_bytes(b"XXXX" + bytes(40))
        with pytest.raises(ConfigurationError):
            load_dataset(tmp_path / "x")


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 40), eta=st.floats(0.0, 1.0), seed=st.integers(0, 2 ** 32))
def test_fixed_count_size_property(n, eta, seed):
    spec = MixtureSpec.gaussian(3, 1.0, eta=eta, noise_policy="fixed-count")
    out = corrupt_labels(sample_clean(spec, n, seed), spec, seed)
    assert out.noisy_indices.size == flip_count(eta, n)
    np.testing.assert_array_equal(out.y[out.noisy_indices], -out.y_clean[out.noisy_indices])
