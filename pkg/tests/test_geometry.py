import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bregcd.geometry import (
    BURG,
    EUCLIDEAN,
    SHANNON,
    BlockPartition,
    DomainError,
    RegKind,
    Regularizer,
    UnboundedSubproblemError,
    WeightedReference,
    bregman_distance,
    bregman_prox,
    bregman_prox_numeric,
    gti_ratio_sample,
    reference,
    weighted_distance,
)

positive = st.floats(1e-3, 1e3, allow_nan=False)
real = st.floats(-1e3, 1e3, allow_nan=False)


class TestDistance:
    def test_known_values(self):
        assert bregman_distance(EUCLIDEAN, [3.0], [1.0]) == pytest.approx(2.0)
        assert bregman_distance(SHANNON, [2.0], [1.0]) == pytest.approx(2 * math.log(2) - 1, rel=1e-14)
        assert bregman_distance(BURG, [2.0], [1.0]) == pytest.approx(1 - math.log(2), rel=1e-14)

    def test_zero_on_diagonal(self):
        x = np.array([0.3, 2.0, 7.5])
        for ref in (EUCLIDEAN, SHANNON, BURG):
            assert bregman_distance(ref, x, x) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(positive, positive)
    def test_nonnegative(self, u, x):
        for ref in (EUCLIDEAN, SHANNON, BURG):
            assert bregman_distance(ref, [u], [x]) >= 0.0

    @settings(max_examples=100, deadline=None)
    @given(positive, positive)
    def test_matches_definition(self, u, x):
        # h(u) - h(x) - h'(x)(u - x), written out independently
        shannon = u * math.log(u) - x * math.log(x) - (math.log(x) + 1) * (u - x)
        burg = -math.log(u) + math.log(x) + (u - x) / x
        scale = max(1.0, abs(u * math.log(u)), abs(x * math.log(x)), u / x)
        assert abs(bregman_distance(SHANNON, [u], [x]) - shannon) <= 1e-12 * scale
        assert abs(bregman_distance(BURG, [u], [x]) - burg) <= 1e-12 * scale

    def test_domain_errors(self):
        with pytest.raises(DomainError) as exc:
            bregman_distance(SHANNON, [1.0, 0.0], [1.0, 1.0])
        assert exc.value.index == 1
        with pytest.raises(DomainError):
            bregman_distance(BURG, [1.0], [-1.0])
        # the Euclidean reference accepts any real input
        assert bregman_distance(EUCLIDEAN, [-1.0], [1.0]) == pytest.approx(2.0)

    def test_symmetric_coefficient(self):
        # Euclidean distances are symmetric; the entropies are not, and
        # D(x, y)/D(y, x) gets arbitrarily small (only logarithmically for Shannon)
        rng = np.random.default_rng(0)
        x, y = rng.uniform(0.1, 10, 50), rng.uniform(0.1, 10, 50)
        for a, b in zip(x, y):
            assert bregman_distance(EUCLIDEAN, [a], [b]) == pytest.approx(bregman_distance(EUCLIDEAN, [b], [a]))
        for ref in (SHANNON, BURG):
            lo = min(bregman_distance(ref, [a], [1.0]) / bregman_distance(ref, [1.0], [a]) for a in (1e-30, 1e30))
            assert lo < 0.05


class TestProx:
    def test_known_values(self):
        assert bregman_prox(BURG, [1.0], [1.0], 0.5)[0] == pytest.approx(2 / 3, rel=1e-15)
        assert bregman_prox(SHANNON, [1.0], [1.0], 1.0)[0] == pytest.approx(math.exp(-1), rel=1e-15)
        assert bregman_prox(EUCLIDEAN, [0.5], [2.0], 0.5, RegKind.NONNEG)[0] == 0.0
        assert bregman_prox(EUCLIDEAN, [1.0], [1.0], 1.0)[0] == 0.0

    def test_zero_gradient_is_fixed_point(self):
        x = np.array([0.2, 1.0, 5.0])
        for ref in (EUCLIDEAN, SHANNON, BURG):
            np.testing.assert_array_equal(bregman_prox(ref, x, np.zeros(3), 0.7), x)

    def test_burg_unbounded(self):
        with pytest.raises(UnboundedSubproblemError) as exc:
            bregman_prox(BURG, [1.0, 1.0], [0.0, -3.0], 1.0)
        assert exc.value.index == 1
        with pytest.raises(UnboundedSubproblemError):
            bregman_prox_numeric(BURG, [1.0], [-3.0], 1.0)

    def test_bad_stepsize(self):
        with pytest.raises(ValueError):
            bregman_prox(EUCLIDEAN, [1.0], [1.0], 0.0)

    @settings(max_examples=200, deadline=None)
    @given(positive, st.floats(-5, 5), st.floats(1e-2, 5))
    def test_closed_matches_bisection(self, x, g, alpha):
        for ref in (SHANNON, BURG):
            if ref is BURG and 1 / x + alpha * g <= 0:
                continue
            a = bregman_prox(ref, [x], [g], alpha)[0]
            b = bregman_prox_numeric(ref, [x], [g], alpha)[0]
            assert abs(a - b) <= 1e-9 * max(1.0, abs(a))

    @settings(max_examples=200, deadline=None)
    @given(real, st.floats(-50, 50), st.floats(1e-2, 5))
    def test_euclidean_with_indicator(self, x, g, alpha):
        a = bregman_prox(EUCLIDEAN, [x], [g], alpha, RegKind.NONNEG)[0]
        b = bregman_prox_numeric(EUCLIDEAN, [x], [g], alpha, RegKind.NONNEG)[0]
        assert a == pytest.approx(max(0.0, x - alpha * g), abs=1e-12)
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))

    def test_output_in_domain(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(1e-3, 1e3, 500)
        g = rng.normal(0, 10, 500)
        out = bregman_prox(SHANNON, x, g, 0.1)
        assert np.all(out > 0)


class TestPartition:
    def test_even_split(self):
        part = BlockPartition.even(10, 3)
        assert part.sizes == (4, 3, 3)
        assert part.n == 3 and part.dim == 10
        assert part.slice(1) == slice(4, 7)
        assert part.block_of(6) == 1 and part.block_of(9) == 2
        np.testing.assert_array_equal(part.expand([1, 2, 3]), [1] * 4 + [2] * 3 + [3] * 3)

    def test_scalar(self):
        part = BlockPartition.scalar(4)
        assert part.is_scalar and part.n == 4

    def test_invalid(self):
        with pytest.raises(ValueError):
            BlockPartition((2, 0))
        with pytest.raises(ValueError):
            BlockPartition.even(2, 3)


class TestWeightedReference:
    def test_weights_must_be_positive(self):
        with pytest.raises(ValueError):
            WeightedReference.uniform(SHANNON, [1.0, 0.0])

    def test_distance_is_weighted_sum(self):
        part = BlockPartition((2, 1))
        H = WeightedReference(part, [SHANNON, BURG], [3.0, 5.0])
        u = np.array([1.0, 2.0, 4.0])
        x = np.array([2.0, 1.0, 1.0])
        expect = 3.0 * bregman_distance(SHANNON, u[:2], x[:2]) + 5.0 * bregman_distance(BURG, u[2:], x[2:])
        assert weighted_distance(H, u, x) == pytest.approx(expect, rel=1e-14)
        np.testing.assert_allclose(H.block_distances(u, x).sum(), expect, rtol=1e-14)

    def test_doubling_weights_doubles_distance(self):
        H = WeightedReference.uniform(BURG, [1.0, 2.0, 3.0])
        u, x = np.array([1.0, 2.0, 3.0]), np.array([3.0, 1.0, 0.5])
        assert H.with_weights(2 * H.weights).distance(u, x) == pytest.approx(2 * H.distance(u, x), rel=1e-14)

    def test_prox_uses_per_block_stepsize(self):
        H = WeightedReference.uniform(EUCLIDEAN, [1.0, 1.0])
        out = H.prox(np.array([1.0, 1.0]), np.array([1.0, 1.0]), [0.5, 1.0], Regularizer.uniform(RegKind.ZERO, 2))
        np.testing.assert_allclose(out, [0.5, 0.0])

    def test_regularizer_value(self):
        part = BlockPartition.scalar(2)
        r = Regularizer.uniform("nonneg", 2)
        assert r.value(part, np.array([1.0, 0.0])) == 0.0
        assert r.value(part, np.array([1.0, -1e-9])) == math.inf


class TestTranslationRatio:
    def test_euclidean_is_theta_squared(self):
        for theta in (0.1, 0.5, 1.0, -0.7):
            assert gti_ratio_sample(EUCLIDEAN, [1.0, -2.0], [3.0, 1.0], [0.5, 0.0], theta) == pytest.approx(theta**2)

    def test_shannon_triangle_scaling(self):
        # u = (1 - t) x + t w keeps the ratio below t (joint convexity of KL)
        rng = np.random.default_rng(3)
        for _ in range(200):
            x, v, w = np.exp(rng.uniform(-5, 5, 3))
            t = rng.uniform(0.01, 1)
            assert gti_ratio_sample(SHANNON, [(1 - t) * x + t * w], [v], [w], t) <= t * (1 + 1e-12)

    def test_shannon_free_base_point_can_exceed(self):
        # without the scaling structure the exponent-one bound fails
        assert gti_ratio_sample(SHANNON, [1e-3], [2.0], [1.0], 0.5) > 0.5

    def test_out_of_domain_translation(self):
        with pytest.raises(DomainError):
            gti_ratio_sample(BURG, [0.1], [0.0 + 1e-3], [1.0], 1.0)


def test_reference_lookup():
    assert reference("shannon") is SHANNON
    assert (EUCLIDEAN.theta, SHANNON.theta, BURG.theta) == (1.0, 0.0, 0.0)
    assert (EUCLIDEAN.gamma_uniform, SHANNON.gamma_uniform, BURG.gamma_uniform) == (2.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        reference("hellinger")
