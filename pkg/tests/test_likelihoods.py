import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from contact_intervals import (
    ContactNetwork,
    DataInconsistencyError,
    EpidemicDataset,
    FitResult,
    IndividualRecord,
    MassAction,
    Network,
    Period,
    SimulationConfig,
    exponential,
    fit_mle,
    infector_posterior,
    loglik,
    observed_information,
    optional_variation,
    profile_ci,
    run_with_restarts,
    score,
    weibull,
)
from contact_intervals.likelihoods import (
    hessian,
    likelihood_ratio_test,
    loglik_mass_action_asymptotic,
    loglik_mass_action_exact,
    loglik_network_exact,
    loglik_with_infectors,
    profile_loglik,
    survival_terms,
)
import oracles


def record(i, t, iota, imported=False, latent=0.0, infector=None, network=None):
    nb = tuple(network.neighbors(i).tolist()) if network is not None else None
    return IndividualRecord(i, imported, t, t + latent, t + latent + iota, None if nb is None else len(nb), nb, infector)


def single_edge(infected=True):
    net = ContactNetwork(2, [(0, 1)])
    recs = [record(0, 0.0, 2.0, imported=True, network=net)]
    if infected:
        recs.append(record(1, 1.0, 1.0, infector=0, network=net))
        return EpidemicDataset(recs, 1.0, 2, net)
    return EpidemicDataset(recs, 2.0, 2, net)


def three_node_path():
    # 0 - 1 - 2; 0 and 2 imported, 2 turns infectious at t = 1; 1 infected at t = 2 by 0
    net = ContactNetwork(3, [(0, 1), (1, 2)])
    recs = [
        record(0, 0.0, 3.0, imported=True, network=net),
        record(2, 0.0, 3.0, imported=True, latent=1.0, network=net),
        record(1, 2.0, 1.0, infector=0, network=net),
    ]
    return EpidemicDataset(recs, 2.0, 3, net)


def simulated(population, model, period=Period("exponential", 1.0), m=60, seed=0, latent=Period("constant", 0.0)):
    config = SimulationConfig(population, model, period, latent, m_target=m, seed=seed)
    return run_with_restarts(config)


class TestExamples:
    def test_single_edge_value(self):
        d = single_edge()
        for beta in (0.3, 1.0, 2.5):
            assert loglik_network_exact(d, exponential(beta)) == pytest.approx(math.log(beta) - beta)
            assert loglik_with_infectors(d, exponential(beta)) == pytest.approx(math.log(beta) - beta)

    def test_single_edge_censored(self):
        d = single_edge(infected=False)
        for beta in (0.3, 1.0, 2.5):
            assert loglik_network_exact(d, exponential(beta)) == pytest.approx(-2 * beta)

    def test_imports_only(self):
        d = EpidemicDataset([record(0, 0.0, 1.0, imported=True, network=ContactNetwork(1, []))], 1.0, 1, ContactNetwork(1, []))
        for beta in (0.1, 10.0):
            assert loglik_network_exact(d, exponential(beta)) == 0.0

    def test_single_edge_score_and_fit(self):
        d = single_edge()
        assert score(d, exponential(1.0)) == pytest.approx([0.0], abs=1e-15)
        fit = fit_mle(d, "exponential")
        assert fit.converged
        assert fit.model.beta == pytest.approx(1.0, abs=1e-8)

    def test_asymptotic_mass_action_example(self):
        recs = [record(0, 0.0, 1.0, imported=True), record(1, 0.5, 1.0)]
        d = EpidemicDataset(recs, 0.5, 10_000)
        for beta in (0.5, 2.0):
            assert loglik_mass_action_asymptotic(d, exponential(beta)) == pytest.approx(math.log(beta) - 0.5 * beta)
        fit = fit_mle(d, "exponential", "mass-action")
        assert fit.model.beta == pytest.approx(2.0, abs=1e-8)
        assert loglik_mass_action_asymptotic(d, exponential(1e-300)) < -600

    def test_infector_labels_change_only_event_terms(self):
        d = three_node_path()
        m = weibull(2.0, 1.0)
        la, lb = float(m.hazard(2.0)), float(m.hazard(1.0))
        marginal = loglik_network_exact(d, m)
        labelled = loglik_with_infectors(d, m)
        assert labelled - marginal == pytest.approx(math.log(la) - math.log(la + lb))
        a, b = survival_terms(d, "network"), survival_terms(d, "with-infectors")
        np.testing.assert_array_equal(a.exposure, b.exposure)
        np.testing.assert_array_equal(a.weight, b.weight)

    def test_posterior_weibull(self):
        ids, p = infector_posterior(three_node_path(), weibull(2.0, 1.0), 1)
        got = dict(zip(ids.tolist(), p.tolist()))
        assert got[0] == pytest.approx(2 / 3) and got[2] == pytest.approx(1 / 3)

    def test_posterior_single_and_symmetric(self):
        ids, p = infector_posterior(single_edge(), exponential(3.0), 1)
        assert ids.tolist() == [0] and p.tolist() == [1.0]
        net = ContactNetwork(3, [(0, 1), (1, 2)])
        recs = [record(0, 0.0, 3.0, True, network=net), record(2, 0.0, 3.0, True, network=net), record(1, 1.0, 1.0, network=net)]
        _, p = infector_posterior(EpidemicDataset(recs, 1.0, 3, net), exponential(0.7), 1)
        np.testing.assert_allclose(p, [0.5, 0.5])

    def test_posterior_errors(self):
        with pytest.raises(DataInconsistencyError):
            infector_posterior(single_edge(), exponential(1.0), 0)

    def test_exponential_information(self):
        d = simulated(MassAction(2000), exponential(2.0), m=80, seed=3)
        for beta in (1.0, 2.0, 3.5):
            info = observed_information(d, exponential(beta), "mass-action")
            e = survival_terms(d, "mass-action").n_events
            assert info[0, 0] == pytest.approx(e / beta**2, rel=1e-12)

    def test_no_candidate_is_inconsistent(self):
        net = ContactNetwork(3, [(0, 1)])
        recs = [record(0, 0.0, 1.0, True, network=net), record(2, 0.5, 1.0, network=net)]
        with pytest.raises(DataInconsistencyError):
            loglik_network_exact(EpidemicDataset(recs, 0.5, 3, net), exponential(1.0))

    def test_infector_not_infectious_is_inconsistent(self):
        net = ContactNetwork(2, [(0, 1)])
        recs = [record(0, 0.0, 0.5, True, network=net), record(1, 1.0, 1.0, infector=0, network=net)]
        with pytest.raises(DataInconsistencyError):
            loglik_with_infectors(EpidemicDataset(recs, 1.0, 2, net), exponential(1.0))

    def test_tie_with_onset_warns_and_floors(self):
        recs = [record(0, 0.0, 1.0, True, latent=0.5), record(1, 0.5, 1.0)]
        d = EpidemicDataset(recs, 0.5, 100)
        with pytest.warns(RuntimeWarning, match="coincide"):
            t = survival_terms(d, "mass-action")
        assert t.cand_tau.tolist() == [1e-9]

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            loglik(single_edge(), exponential(1.0), "poisson")


class TestAgainstOracles:
    @pytest.mark.parametrize("seed", range(4))
    def test_network_matches_loops(self, seed):
        d = simulated(Network(n=300, expected_degree=6), weibull(1.4, 0.8), m=40, seed=seed, latent=Period("constant", 0.2))
        for model in (weibull(1.4, 0.8), weibull(0.6, 2.0)):
            assert loglik_network_exact(d, model) == pytest.approx(oracles.loglik_network(d, model), rel=1e-10)

    @pytest.mark.parametrize("seed", range(4))
    def test_mass_action_matches_loops(self, seed):
        d = simulated(MassAction(500), weibull(1.5, 3.0), m=40, seed=seed)
        for model in (weibull(1.5, 3.0), weibull(0.7, 1.1)):
            assert loglik_mass_action_asymptotic(d, model) == pytest.approx(oracles.loglik_mass_action_limit(d, model), rel=1e-10)
            assert loglik_mass_action_exact(d, model) == pytest.approx(oracles.loglik_complete_graph(d, model), rel=1e-10)

    @pytest.mark.parametrize("seed", range(3))
    def test_complete_graph_reduction(self, seed):
        n = 40
        base = weibull(1.3, 2.0)
        net = ContactNetwork.complete(n)
        d = simulated(Network(network=net), base.scaled(1.0 / (n - 1)), m=25, seed=seed)
        for model in (base, weibull(0.8, 1.5)):
            assert loglik_network_exact(d, model.scaled(1.0 / (n - 1))) == pytest.approx(loglik_mass_action_exact(d, model), rel=1e-11)

    def test_asymptotic_gap_shrinks(self):
        base = exponential(2.0)
        gaps = []
        for n in (100, 1000, 10_000):
            d = simulated(MassAction(n), base, m=30, seed=7)
            e = survival_terms(d, "mass-action").n_events
            gaps.append(abs(loglik_mass_action_exact(d, base) + e * math.log(n - 1) - loglik_mass_action_asymptotic(d, base)))
        assert gaps[0] > gaps[1] > gaps[2]


KINDS_DATA = [
    ("network", lambda s: simulated(Network(n=400, expected_degree=8), weibull(1.2, 0.9), m=50, seed=s)),
    ("mass-action", lambda s: simulated(MassAction(3000), weibull(0.8, 2.5), m=50, seed=s)),
    ("mass-action-exact", lambda s: simulated(MassAction(200), weibull(1.8, 1.7), m=50, seed=s)),
    ("with-infectors", lambda s: simulated(Network(n=400, expected_degree=8), weibull(1.2, 0.9), m=50, seed=s)),
]


@pytest.mark.parametrize("kind,make", KINDS_DATA, ids=[k for k, _ in KINDS_DATA])
def test_score_and_hessian_match_finite_differences(kind, make):
    d = make(1)
    for model in (weibull(1.1, 1.3), exponential(1.7)):
        theta = np.array(model.params)
        f = lambda th: loglik(d, model.with_params(th), kind)
        fd = optimize.approx_fprime(theta, f, 1e-7 * theta)
        h = 1e-6 * theta
        fd = np.array([(f(theta + h[k] * np.eye(len(theta))[k]) - f(theta - h[k] * np.eye(len(theta))[k])) / (2 * h[k]) for k in range(len(theta))])
        np.testing.assert_allclose(score(d, model, kind), fd, rtol=1e-6, atol=1e-6 * np.abs(fd).max())
        g = lambda th: score(d, model.with_params(th), kind)
        fdh = np.array([(g(theta + h[k] * np.eye(len(theta))[k]) - g(theta - h[k] * np.eye(len(theta))[k])) / (2 * h[k]) for k in range(len(theta))])
        np.testing.assert_allclose(hessian(d, model, kind), fdh, rtol=1e-5, atol=1e-6 * np.abs(fdh).max())


class TestFitting:
    def test_closed_form_exponential(self):
        d = simulated(Network(n=500, expected_degree=5), exponential(1.3), m=70, seed=4)
        t = survival_terms(d, "network")
        fit = fit_mle(d, "exponential", "network")
        assert fit.model.beta == pytest.approx(t.n_events / t.total_exposure, rel=1e-8)
        assert fit.covariance[0, 0] == pytest.approx(fit.model.beta**2 / t.n_events, rel=1e-8)

    def test_weibull_with_unit_shape_matches_exponential(self):
        d = simulated(MassAction(5000), exponential(3.0), m=80, seed=5)
        e = fit_mle(d, "exponential", "mass-action")
        w = fit_mle(d, "weibull", "mass-action", fixed={"alpha": 1.0})
        assert w.model.alpha == 1.0
        assert w.model.beta == pytest.approx(e.model.beta, rel=1e-12)
        assert w.loglik == pytest.approx(e.loglik, rel=1e-12)
        assert w.covariance[0].tolist() == [0.0, 0.0]
        assert w.profile_cis[1] == pytest.approx(e.profile_cis[0], rel=1e-9)

    def test_weibull_stationary(self):
        d = simulated(MassAction(5000), weibull(1.6, 2.0), m=150, seed=6)
        fit = fit_mle(d, "weibull", "mass-action")
        assert fit.converged
        assert np.all(np.abs(score(d, fit.model, "mass-action")) < 1e-6)
        assert np.all(np.linalg.eigvalsh(fit.covariance) > 0)
        for (lo, hi), v in zip(fit.profile_cis, fit.model.params):
            assert lo < v < hi

    def test_weibull_global_maximum(self):
        # diffuse attribution gives this dataset two local maxima in the shape
        config = SimulationConfig(MassAction(10_000), exponential(12.0), Period("constant", 1.0), m_target=200)
        d = run_with_restarts(config, np.random.default_rng(4))
        fit = fit_mle(d, "weibull", "mass-action")
        grid = [profile_loglik(d, fit, 0, a) for a in np.geomspace(0.2, 8.0, 120)]
        assert fit.loglik >= max(grid) - 1e-9
        assert fit.model.alpha > 3.0

    def test_consistency_large_epidemic(self):
        d = simulated(MassAction(100_000), exponential(2.0), Period("constant", 1.0), m=2000, seed=2)
        fit = fit_mle(d, "exponential", "mass-action")
        assert fit.model.beta == pytest.approx(2.0, rel=0.05)

    def test_profile_ci_exponential_roots(self):
        d = simulated(MassAction(5000), exponential(2.0), m=60, seed=8)
        t = survival_terms(d, "mass-action")
        fit = fit_mle(d, "exponential", "mass-action")
        b, e, w = fit.model.beta, t.n_events, t.total_exposure
        g = lambda x: e * math.log(x / b) - (x - b) * w + 1.92072941
        lo = optimize.brentq(g, b * 1e-3, b)
        hi = optimize.brentq(g, b, b * 1e3)
        assert fit.profile_cis[0] == pytest.approx((lo, hi), rel=1e-6)

    def test_profile_ci_level_zero(self):
        d = simulated(MassAction(5000), exponential(2.0), m=30, seed=8)
        fit = fit_mle(d, "exponential", "mass-action")
        assert profile_ci(d, fit, 0, level=0.0) == (fit.model.beta, fit.model.beta)

    def test_weibull_profile_closed_form_matches_numeric(self):
        d = simulated(MassAction(5000), weibull(1.4, 2.0), m=80, seed=9)
        fit = fit_mle(d, "weibull", "mass-action", profile=False)
        for a in (0.7, 1.0, 1.9):
            numeric = -optimize.minimize_scalar(
                lambda lb: -loglik(d, weibull(a, math.exp(lb)), "mass-action"), bracket=(-1, 2), tol=1e-12
            ).fun
            assert profile_loglik(d, fit, 0, a) == pytest.approx(numeric, rel=1e-10)

    def test_weibull_profile_on_beta_drop(self):
        d = simulated(MassAction(5000), weibull(1.4, 2.0), m=80, seed=10)
        fit = fit_mle(d, "weibull", "mass-action")
        for idx in range(2):
            for end in fit.profile_cis[idx]:
                assert fit.loglik - profile_loglik(d, fit, idx, end) == pytest.approx(1.92072941, abs=1e-6)

    def test_needs_events(self):
        with pytest.raises(ValueError):
            fit_mle(single_edge(infected=False), "exponential")
        with pytest.raises(ValueError):
            fit_mle(single_edge(), "weibull")

    def test_fit_json_round_trip(self):
        d = simulated(MassAction(5000), weibull(1.4, 2.0), m=50, seed=11)
        fit = fit_mle(d, "weibull", "mass-action")
        again = FitResult.from_dict(fit.to_dict())
        assert again.model == fit.model
        np.testing.assert_array_equal(again.covariance, fit.covariance)
        assert again.to_json() == fit.to_json()

    def test_likelihood_ratio(self):
        d = simulated(MassAction(5000), weibull(2.5, 2.0), Period("constant", 1.0), m=300, seed=12)
        null = fit_mle(d, "exponential", "mass-action", profile=False)
        alt = fit_mle(d, "weibull", "mass-action", profile=False)
        stat, p = likelihood_ratio_test(null, alt)
        assert stat == pytest.approx(2 * (alt.loglik - null.loglik))
        assert p == pytest.approx(stats.chi2.sf(stat, 1))

    def test_likelihood_ratio_rejects_with_known_infectors(self):
        d = simulated(Network(n=2000, expected_degree=6), weibull(2.5, 1.0), Period("constant", 1.0), m=200, seed=12)
        null = fit_mle(d, "exponential", "with-infectors", profile=False)
        alt = fit_mle(d, "weibull", "with-infectors", profile=False)
        assert likelihood_ratio_test(null, alt)[1] < 1e-6

    def test_deterministic(self):
        d = simulated(Network(n=400, expected_degree=7), weibull(0.9, 1.2), m=60, seed=13)
        assert fit_mle(d, "weibull").to_json() == fit_mle(d, "weibull").to_json()


def test_optional_variation_is_sum_of_outer_products():
    d = simulated(MassAction(3000), weibull(1.2, 2.0), m=40, seed=14)
    m = weibull(1.2, 2.0)
    t = survival_terms(d, "mass-action")
    lam = m.hazard(t.cand_tau)
    g = m.grad_log_hazard(t.cand_tau)
    total = np.zeros((2, 2))
    for e in range(t.n_events):
        sel = t.cand_event == e
        gbar = (lam[sel, None] * g[sel]).sum(axis=0) / lam[sel].sum()
        total += np.outer(gbar, gbar)
    np.testing.assert_allclose(optional_variation(d, m, "mass-action"), total, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10.0), st.floats(0.3, 3.0), st.floats(0.01, 100.0))
def test_posterior_normalized_and_scale_invariant(beta, alpha, c):
    d = three_node_path()
    _, p = infector_posterior(d, weibull(alpha, beta), 1)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    _, q = infector_posterior(d, weibull(alpha, beta).scaled(c), 1)
    np.testing.assert_allclose(p, q, rtol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_closed_form_mle_property(seed):
    d = simulated(MassAction(1000), exponential(2.5), m=25, seed=seed)
    t = survival_terms(d, "mass-action")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit = fit_mle(d, "exponential", "mass-action", profile=False)
    assert fit.model.beta == pytest.approx(t.n_events / t.total_exposure, rel=1e-8)
