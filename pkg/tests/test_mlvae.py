"""
Tests for group accumulation, reparameterization and the KL term.
"""
import numpy as np
import pytest

from models.errors import ContractViolation, DimensionError
from models.posterior import GaussianPosterior, GroupIndex
from services.mlvae import (
    accumulate_by_group,
    accumulate_group,
    kl_loss_batch,
    kl_standard_normal,
    reparameterize,
)
from services.tensor_core import Graph, grad_check


def posterior(graph, mean, variance):
    return GaussianPosterior.from_values(graph, mean, np.log(np.asarray(variance, dtype=np.float64)))


def kl_value(p):
    return float(p.graph.value(kl_standard_normal(p))[0])


class TestAccumulateGroup:

    def test_single_member_is_identity(self):
        graph = Graph()
        p = posterior(graph, [0.0], [1.0])
        assert accumulate_group([p]) is p

    def test_equal_precision(self):
        graph = Graph()
        out = accumulate_group([posterior(graph, [0.0], [1.0]), posterior(graph, [2.0], [1.0])])
        np.testing.assert_allclose(out.mean_values(), [[1.0]], atol=1e-15)
        np.testing.assert_allclose(out.variance_values(), [[0.5]], rtol=1e-14)

    def test_precision_weighting(self):
        graph = Graph()
        out = accumulate_group([posterior(graph, [0.0], [1.0]), posterior(graph, [3.0], [0.5])])
        np.testing.assert_allclose(out.mean_values(), [[2.0]], rtol=1e-14)
        np.testing.assert_allclose(out.variance_values(), [[1.0 / 3.0]], rtol=1e-14)

    def test_empty(self):
        with pytest.raises(ContractViolation):
            accumulate_group([])

    def test_dimension_mismatch(self):
        graph = Graph()
        with pytest.raises(DimensionError):
            accumulate_group([posterior(graph, [0.0], [1.0]), posterior(graph, [0.0, 1.0], [1.0, 1.0])])

    def test_permutation_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            means = rng.standard_normal((4, 3))
            variances = rng.uniform(0.2, 3.0, size=(4, 3))
            graph = Graph()
            members = [posterior(graph, m, v) for m, v in zip(means, variances)]
            forward = accumulate_group(members)
            backward = accumulate_group(members[::-1])
            np.testing.assert_allclose(forward.mean_values(), backward.mean_values(), rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(forward.variance_values(), backward.variance_values(), rtol=1e-12)

    def test_incremental_folds_agree(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            graph = Graph()
            a, b, c = (posterior(graph, rng.standard_normal(2), rng.uniform(0.2, 3.0, 2)) for _ in range(3))
            left = accumulate_group([accumulate_group([a, b]), c])
            right = accumulate_group([a, accumulate_group([b, c])])
            np.testing.assert_allclose(left.mean_values(), right.mean_values(), rtol=1e-10, atol=1e-10)
            np.testing.assert_allclose(left.variance_values(), right.variance_values(), rtol=1e-10)

    def test_matches_closed_form(self):
        # GIVEN: 100 random groups of three posteriors
        rng = np.random.default_rng(2)
        for _ in range(100):
            means = rng.standard_normal((3, 4))
            variances = rng.uniform(0.1, 5.0, size=(3, 4))
            graph = Graph()

            # WHEN: accumulating the group
            out = accumulate_group([posterior(graph, m, v) for m, v in zip(means, variances)])

            # THEN: precisions add and the mean is precision weighted
            precision = (1.0 / variances).sum(axis=0)
            expected_mean = (means / variances).sum(axis=0) / precision
            np.testing.assert_allclose(out.variance_values()[0], 1.0 / precision, rtol=1e-10)
            np.testing.assert_allclose(out.mean_values()[0], expected_mean, rtol=1e-10, atol=1e-10)
            # accumulated variance never exceeds the smallest member variance
            assert np.all(out.variance_values()[0] <= variances.min(axis=0) * (1 + 1e-12))

    def test_by_group_matches_per_group(self):
        rng = np.random.default_rng(3)
        means = rng.standard_normal((5, 2))
        variances = rng.uniform(0.3, 2.0, size=(5, 2))
        groups = GroupIndex.from_labels(["b", "a", "b", "a", "b"])
        graph = Graph()
        per_obs = posterior(graph, means, variances)

        grouped = accumulate_by_group(per_obs, groups)

        assert groups.groups() == ["a", "b"]
        for k, rows in enumerate([[1, 3], [0, 2, 4]]):
            one = accumulate_group([per_obs.row(r) for r in rows])
            np.testing.assert_allclose(grouped.mean_values()[k], one.mean_values()[0], rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(grouped.variance_values()[k], one.variance_values()[0], rtol=1e-12)


class TestReparameterize:

    def test_zero_noise_returns_mean(self):
        graph = Graph()
        p = posterior(graph, [[0.3, -1.2]], [[2.0, 0.5]])
        assert np.array_equal(graph.value(reparameterize(p, [0.0, 0.0])), [[0.3, -1.2]])

    def test_scaled_noise(self):
        graph = Graph()
        p = GaussianPosterior.from_values(graph, [1.0], [np.log(4.0)])
        np.testing.assert_allclose(graph.value(reparameterize(p, [0.5])), [[2.0]], rtol=1e-15)

    def test_gradient_wrt_mean(self):
        graph = Graph()
        p = posterior(graph, [[0.3, -1.2, 2.0]], [[2.0, 0.5, 1.0]])
        grads = graph.backward(graph.sum(reparameterize(p, [0.7, -0.1, 1.3])))
        assert np.array_equal(grads[p.mean], np.ones((1, 3)))

    def test_noise_dimension_mismatch(self):
        graph = Graph()
        p = posterior(graph, [[0.0, 0.0]], [[1.0, 1.0]])
        with pytest.raises(DimensionError):
            reparameterize(p, [0.0, 0.0, 0.0])


class TestKl:

    def test_prior_equals_posterior(self):
        assert kl_value(posterior(Graph(), np.zeros((1, 4)), np.ones((1, 4)))) == 0.0

    def test_shifted_mean(self):
        assert kl_value(posterior(Graph(), [1.0], [1.0])) == pytest.approx(0.5, abs=1e-15)

    def test_scaled_variance(self):
        expected = 0.5 * (2.0 - np.log(2.0) - 1.0)
        assert kl_value(posterior(Graph(), [0.0], [2.0])) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(0.15343, abs=1e-5)

    def test_non_negative(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            dim = int(rng.integers(1, 6))
            p = GaussianPosterior.from_values(Graph(), rng.normal(0, 2, dim), rng.uniform(-4, 4, dim))
            assert kl_value(p) >= 0.0

    def test_monte_carlo_estimate(self):
        # GIVEN: ten random 2-D posteriors
        rng = np.random.default_rng(5)
        for _ in range(10):
            mean = rng.normal(0, 1, 2)
            log_variance = rng.uniform(-1.5, 1.5, 2)
            closed_form = kl_value(GaussianPosterior.from_values(Graph(), mean, log_variance))

            # WHEN: averaging log q(z) - log p(z) over 1e6 samples of q
            std = np.exp(0.5 * log_variance)
            z = mean + std * rng.standard_normal((1_000_000, 2))
            log_q = -0.5 * (((z - mean) / std) ** 2 + log_variance).sum(axis=1)
            log_p = -0.5 * (z ** 2).sum(axis=1)
            samples = log_q - log_p

            # THEN: the closed form lies within three standard errors
            standard_error = samples.std(ddof=1) / np.sqrt(samples.size)
            assert abs(samples.mean() - closed_form) < 3 * standard_error

    def test_grad_check(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            point = [rng.standard_normal((3, 2)), rng.uniform(-1, 1, (3, 2))]
            groups = GroupIndex.from_labels(["x", "y", "x"])

            def f(graph, ids):
                return kl_loss_batch(GaussianPosterior(graph, ids[0], ids[1]), groups)

            assert grad_check(f, point).max_relative_error < 1e-6


class TestKlLossBatch:

    def test_standard_normal_posteriors(self):
        graph = Graph()
        per_obs = posterior(graph, np.zeros((4, 3)), np.ones((4, 3)))
        node = kl_loss_batch(per_obs, GroupIndex.from_labels(["a", "a", "b", "c"]))
        assert graph.value(node)[0] == pytest.approx(0.0, abs=1e-15)

    def test_one_group_of_two(self):
        graph = Graph()
        per_obs = posterior(graph, [[0.0], [2.0]], [[1.0], [1.0]])
        node = kl_loss_batch(per_obs, GroupIndex.from_labels(["g", "g"]))
        expected = 0.5 * (1.0 + 0.5 - np.log(0.5) - 1.0) / 2
        assert graph.value(node)[0] == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.29829, abs=1e-5)

    def test_batch_of_one(self):
        graph = Graph()
        per_obs = posterior(graph, [[0.4, -0.3]], [[0.7, 1.8]])
        node = kl_loss_batch(per_obs, GroupIndex.from_labels(["only"]))
        assert graph.value(node)[0] == pytest.approx(kl_value(per_obs), rel=1e-12)

    def test_ungrouped_sums_every_observation(self):
        graph = Graph()
        per_obs = posterior(graph, [[1.0], [1.0]], [[1.0], [1.0]])
        node = kl_loss_batch(per_obs, GroupIndex.from_labels(["g", "g"]), grouped=False)
        # two KLs of 0.5, divided by a batch of 2
        assert graph.value(node)[0] == pytest.approx(0.5, abs=1e-15)

    def test_empty_groups_are_skipped(self):
        graph = Graph()
        per_obs = posterior(graph, [[0.5], [-1.0]], [[1.5], [0.5]])
        with_empty = GroupIndex({0: "a", 1: "a"}, {"a": [0, 1], "b": []})
        without = GroupIndex.from_labels(["a", "a"])
        assert with_empty.groups() == ["a"]
        assert graph.value(kl_loss_batch(per_obs, with_empty))[0] == graph.value(kl_loss_batch(per_obs, without))[0]
