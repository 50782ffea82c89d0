import numpy as np
import pytest

from seqssl import gmm
from seqssl.errors import DegenerateSpread, TooFewPoints


def two_cluster(seed, lo=0.2, hi=0.9, sigma=0.05, n=50):
    rng = np.random.default_rng(seed)
    return np.clip(np.concatenate([rng.normal(lo, sigma, n),
                                   rng.normal(hi, sigma, n)]), -1, 1)


class TestFitGmm:
    def test_recovers_separated_means(self):
        fit = gmm.fit_gmm(two_cluster(0))
        means = np.sort(fit.means)
        assert abs(means[0] - 0.2) < 0.03
        assert abs(means[1] - 0.9) < 0.03

    def test_symmetric_pairs(self):
        fit = gmm.fit_gmm([0.0, 0.0, 1.0, 1.0])
        means = np.sort(fit.means)
        assert means[0] == pytest.approx(0.0, abs=1e-3)
        assert means[1] == pytest.approx(1.0, abs=1e-3)
        assert gmm.reliability(fit, 1.0) > 0.99
        assert gmm.reliability(fit, 0.0) < 0.01

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            gmm.fit_gmm([0.1, 0.2, 0.3])

    def test_degenerate_spread(self):
        with pytest.raises(DegenerateSpread):
            gmm.fit_gmm([0.5] * 10)

    def test_invariants(self):
        for seed in range(5):
            fit = gmm.fit_gmm(two_cluster(seed))
            assert abs(fit.weights.sum() - 1.0) < 1e-9
            assert (fit.variances >= gmm.VAR_FLOOR).all()
            trace = np.asarray(fit.log_likelihood_trace)
            assert (np.diff(trace) >= -1e-9).all()
            assert fit.reliable_component == int(np.argmax(fit.means))

    def test_permutation_invariance(self):
        pts = two_cluster(3)
        fit1 = gmm.fit_gmm(pts)
        rng = np.random.default_rng(9)
        fit2 = gmm.fit_gmm(rng.permutation(pts))
        for x in np.linspace(-1, 1, 21):
            assert gmm.reliability(fit1, x) == pytest.approx(
                gmm.reliability(fit2, x), abs=1e-9)


class TestReliability:
    def test_posteriors_complement(self):
        fit = gmm.fit_gmm(two_cluster(1))
        other = 1 - fit.reliable_component
        for x in np.linspace(-1, 1, 41):
            r = gmm.reliability(fit, x)
            flipped = gmm.GmmFit(fit.means, fit.variances, fit.weights,
                                 fit.log_likelihood_trace, other)
            assert abs(r + gmm.reliability(flipped, x) - 1.0) < 1e-12

    def test_extremes(self):
        fit = gmm.fit_gmm(two_cluster(2))
        hi = fit.means[fit.reliable_component]
        lo = fit.means[1 - fit.reliable_component]
        assert gmm.reliability(fit, hi) > 0.99
        assert gmm.reliability(fit, lo) < 0.01

    def test_equal_components_give_half(self):
        fit = gmm.GmmFit(means=np.array([0.5, 0.5]),
                         variances=np.array([0.01, 0.01]),
                         weights=np.array([0.5, 0.5]),
                         log_likelihood_trace=[], reliable_component=0)
        for x in np.linspace(-1, 1, 11):
            assert gmm.reliability(fit, x) == pytest.approx(0.5, abs=1e-12)

    def test_monotone_with_equal_variances(self):
        fit = gmm.fit_gmm(two_cluster(4))
        fit.variances = np.array([0.01, 0.01])
        xs = np.linspace(-1, 1, 101)
        rs = [gmm.reliability(fit, x) for x in xs]
        assert (np.diff(rs) >= -1e-12).all()
