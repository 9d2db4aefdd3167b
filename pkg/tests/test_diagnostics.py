import json
import math

import numpy as np
import pytest

from bregcd.geometry import BlockPartition
from bregcd.diagnostics import (
    CheckReport,
    UnsupportedFamilyError,
    check_descent_lemma,
    check_expectation_identities,
    check_gradient_fd,
    check_gti,
    check_prox_oracle,
    check_rate_bounds,
    check_stationarity_residual,
    check_sufficient_decrease,
    check_three_point,
    estimate_gti_exponent,
    estimate_mu_sigma,
    expectation_terms,
    random_points,
    rate_envelope,
    report_json,
    report_text,
    run_suite,
    sensitivity_controls,
)
from bregcd.problems import full_gradient, make_instance, synth_instance
from bregcd.solvers import SolverConfig, run_rbcd

FAMILIES = ("poisson", "relent", "quadratic")


@pytest.mark.parametrize("ref", ["euclidean", "shannon", "burg"])
def test_prox_oracle(ref):
    assert check_prox_oracle(ref, 500, 0).passed


@pytest.mark.parametrize("family", FAMILIES)
def test_gradient_fd(family):
    p = synth_instance(family, 20, 20, 1)
    pts = random_points(p, 20, np.random.default_rng(1))
    assert check_gradient_fd(p, pts, tol=1e-9 if family == "quadratic" else 1e-4).passed


@pytest.mark.parametrize("family", FAMILIES)
def test_descent_lemma(family):
    assert check_descent_lemma(synth_instance(family, 30, 30, 0), 300).passed


@pytest.mark.parametrize("family", FAMILIES)
def test_sufficient_decrease(family):
    rep = check_sufficient_decrease(synth_instance(family, 30, 30, 0), 300)
    assert rep.passed
    assert rep.details["min_decrement"] >= -1e-12


def test_sufficient_decrease_at_stationary_start():
    Q = np.array([[2.0, 1.0], [1.0, 2.0]])
    p = make_instance("quadratic", Q, [1.0, 2.0])
    rep = check_sufficient_decrease(p, 20, x0=np.linalg.solve(Q, [1.0, 2.0]))
    assert rep.passed
    assert abs(rep.details["min_decrement"]) < 1e-15 and abs(rep.details["max_decrement"]) < 1e-15


def test_sufficient_decrease_near_stepsize_limit():
    # at alpha -> (1 + theta)/L the guaranteed coefficient vanishes but descent remains
    p = synth_instance("quadratic", 30, 10, 2)
    alpha = tuple(0.999 * 2.0 / p.L)
    rep = check_sufficient_decrease(p, 200, alpha=alpha)
    assert rep.passed
    assert rep.details["min_decrement"] >= -1e-12


@pytest.mark.parametrize("family", FAMILIES)
def test_expectation_identities(family):
    reps = check_expectation_identities(synth_instance(family, 8, 5, 0), 10, 0)
    assert [r.passed for r in reps] == [True, True, True]


def test_expectation_single_block():
    # with one block the step is deterministic: E[D(u, x+)] = D(u, x+)
    base = synth_instance("relent", 6, 4, 0)
    p = make_instance("relent", base.A, base.b, partition=BlockPartition.even(4, 1))
    x = np.full(4, 1.3)
    u = np.full(4, 0.7)
    t = expectation_terms(p, x, u)
    assert t["E_D"] == pytest.approx(t["ED_rhs"], rel=1e-14)


def test_expectation_enumeration_limit():
    with pytest.raises(ValueError):
        p = synth_instance("poisson", 70, 70, 0)
        expectation_terms(p, np.ones(70), np.ones(70))


@pytest.mark.parametrize("ref,gamma", [("euclidean", 2.0), ("shannon", 1.0)])
def test_gti_holds_at_uniform_exponent(ref, gamma):
    assert check_gti(ref, gamma, 5000, 0).passed


def test_gti_fails_for_burg():
    assert not check_gti("burg", 0.6, 5000, 0).passed


def test_gti_exponent_estimates():
    assert estimate_gti_exponent("euclidean", 5000, 0) == pytest.approx(2.0, abs=1e-6)
    assert estimate_gti_exponent("shannon", 5000, 0) == pytest.approx(1.0, abs=0.05)
    assert estimate_gti_exponent("burg", 5000, 0) < 0.05


class TestStrongConvexity:
    def test_identity(self):
        info = estimate_mu_sigma(make_instance("quadratic", np.eye(2), [0.0, 0.0], weights=[1.0, 1.0]))
        assert info.mu == pytest.approx(1.0) and info.sigma == 1.0 and info.theta_min == 1.0

    def test_scaled_diagonal(self):
        p = make_instance("quadratic", np.diag([1.0, 4.0]), [0.0, 0.0], weights=[4.0, 4.0])
        assert estimate_mu_sigma(p).mu == pytest.approx(0.25)

    def test_zero_curvature(self):
        p = make_instance("quadratic", np.zeros((2, 2)), [0.0, 0.0], weights=[1.0, 1.0])
        assert estimate_mu_sigma(p).mu == 0.0

    def test_entropy_family_raises(self):
        with pytest.raises(UnsupportedFamilyError):
            estimate_mu_sigma(synth_instance("poisson", 3, 3, 0))


@pytest.mark.parametrize("ref", ["euclidean", "shannon", "burg"])
def test_three_point(ref):
    assert check_three_point(ref, 500, 0).passed


@pytest.mark.parametrize("ref", ["euclidean", "shannon", "burg"])
def test_three_point_tight_when_u_is_the_prox(ref):
    rep = check_three_point(ref, 300, 1, u_equals_plus=True)
    assert rep.details["max_abs_gap"] <= 1e-10


def test_stationarity_residual_on_quadratic():
    rep = check_stationarity_residual(synth_instance("quadratic", 20, 10, 0), 300, 0)
    assert rep.passed and rep.details["converged"]


class TestRates:
    def test_envelopes(self):
        k = np.array([0.0, 10.0])
        np.testing.assert_allclose(rate_envelope("sublinear", k, 10, 3.0, 1.0, 1.0), [3.0, 1.5])
        np.testing.assert_allclose(rate_envelope("stationarity", k, 10, 3.0, 1.0, 0.0), [20.0, 20 / 11])
        assert rate_envelope("accelerated", np.array([1.0]), 2, 0, 0, 1.0, gamma=2.0)[0] == pytest.approx(4.0)
        with pytest.raises(ValueError):
            rate_envelope("cubic", k, 1, 0, 0, 0)

    def test_inconclusive_with_few_seeds(self):
        p = synth_instance("quadratic", 20, 10, 0)
        traces = [run_rbcd(p, SolverConfig(epochs=5, seed=s)) for s in range(5)]
        rep = check_rate_bounds(traces, p, "sublinear", 0.0, x_ref=np.zeros(10))
        assert rep.status == "inconclusive" and not rep.ok

    def test_sublinear_passes_with_enough_seeds(self):
        p = synth_instance("quadratic", 20, 10, 0)
        x_star = np.linalg.solve(p.A, p.b)
        F_ref = 0.5 * x_star @ p.A @ x_star - p.b @ x_star
        traces = [run_rbcd(p, SolverConfig(epochs=10, seed=s)) for s in range(20)]
        assert check_rate_bounds(traces, p, "sublinear", F_ref, x_ref=x_star).passed


def test_controls_all_fail():
    reps = sensitivity_controls(0)
    assert len(reps) == 5
    assert all(r.expect_fail and r.status == "fail" and r.ok for r in reps)


def test_gti_suite_marks_burg_as_control():
    reps = run_suite("gti", 0)
    assert [r.ok for r in reps] == [True, True, True]
    assert reps[-1].expect_fail and not reps[-1].passed
    single = run_suite("gti", 0, ref="burg", gamma=0.6)
    assert not single[0].ok


def test_unknown_suite():
    with pytest.raises(ValueError):
        run_suite("nope")


def test_report_serialization():
    reps = [
        CheckReport("a", 3, 1e-12, 1e-9, "pass", "x", details={"v": np.float64(2.0), "arr": np.arange(2)}),
        CheckReport("b", 3, 1.0, 1e-9, "fail", "y", expect_fail=True),
    ]
    data = json.loads(report_json(reps))
    assert data[0]["ok"] and data[1]["ok"] and data[0]["details"]["arr"] == [0, 1]
    text = report_text(reps)
    assert text.splitlines()[-1] == "2/2 checks as expected"
    assert "control, must fail" in text.splitlines()[1]


def test_corrupted_gradient_is_caught():
    p = synth_instance("relent", 10, 10, 0)
    pts = random_points(p, 5, np.random.default_rng(0))

    def bad(x):
        g = full_gradient(p, x)
        g[-1] *= 1.01
        return g

    rep = check_gradient_fd(p, pts, gradient=bad)
    assert rep.status == "fail" and math.isfinite(rep.max_violation)
