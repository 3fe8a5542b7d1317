import numpy as np
import pytest

from qnetsense.estimation import (
    MAX_ROUNDS,
    AdaptiveState,
    ShotRecord,
    _JointObjective,
    adaptive_estimate,
    balanced_control,
    default_bounds,
    gain_db,
    gradient_trials,
    hits_bounds,
    localization_bounds,
    log_likelihood,
    maximize_joint,
    mle,
    precision_stats,
    quasi_random_starts,
    readout_mitigation_trials,
    run_trials,
    sample_shots,
    trial_seed,
)
from qnetsense.fields import EncodingConfig, VectorField
from qnetsense.fisher import cfim, invert_info, precision_bound
from qnetsense.protocols import PROB_FLOOR, ProtocolModel, Strategy
from qnetsense.qcore import OutcomeDistribution

T = 1.5 * np.pi
X_RS = np.array([1.0, np.pi / 4, np.pi / 4])
RS = Strategy("RS", 3)


def rs_model(N=1, T=T):
    return ProtocolModel(RS, EncodingConfig(T, N))


class TestSampling:
    def test_certain_outcome(self):
        rec = sample_shots(np.array([1.0, 0, 0, 0]), 123, seed=1)
        assert rec.counts.tolist() == [123, 0, 0, 0] and rec.n == 123

    def test_uniform_concentration(self):
        rec = sample_shots(np.full(4, 0.25), 4_000_000, seed=2)
        assert np.abs(rec.frequencies - 0.25).max() < 1e-3

    def test_law_of_large_numbers(self, rng):
        p = rng.dirichlet(np.ones(16))
        assert np.abs(sample_shots(p, 1_000_000, seed=3).frequencies - p).max() < 5e-3

    def test_deterministic(self):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        a, b = sample_shots(p, 600, seed=7), sample_shots(p, 600, seed=7)
        assert np.array_equal(a.counts, b.counts) and a.seed == 7

    def test_needs_shots(self):
        with pytest.raises(ValueError):
            sample_shots(np.ones(2) / 2, 0)

    def test_trial_seed(self):
        assert trial_seed(12345, 7) == 12345 ^ 7


class TestLikelihood:
    def test_maximized_at_truth_on_grid(self):
        m = rs_model()
        xc = balanced_control(m, X_RS, 1.5)
        rec = sample_shots(OutcomeDistribution(m.labels, m.probabilities(X_RS, xc)[0]), 10**7, seed=5)
        grid = [X_RS + d for d in np.array([[0, 0, 0], [0.01, 0, 0], [0, -0.01, 0], [0, 0, 0.01], [-0.01, 0.01, 0]])]
        values = [log_likelihood(rec, m, g, xc) for g in grid]
        assert int(np.argmax(values)) == 0

    def test_certain_record_gives_zero(self):
        m = rs_model()
        rec = sample_shots(m.probabilities(X_RS, X_RS)[0], 50, seed=0)
        assert log_likelihood(rec, m, X_RS, X_RS) == pytest.approx(0.0, abs=1e-12)

    def test_clip_on_impossible_outcome(self):
        m = rs_model()
        rec = sample_shots(np.array([0.0, 1.0, 0.0, 0.0]), 10, seed=0)
        assert log_likelihood(rec, m, X_RS, X_RS) == pytest.approx(np.log(PROB_FLOOR))


class TestMle:
    def test_exact_frequencies_recover_truth(self):
        m = rs_model()
        xc = balanced_control(m, X_RS, 1.5)
        p = m.probabilities(X_RS, xc)[0]
        counts = np.round(p * 1e12).astype(np.int64)
        rec = ShotRecord(m.labels, counts, int(counts.sum()))
        est = mle(rec, m, xc, starts=10, bounds=localization_bounds(m, X_RS, 0.3))
        assert est.converged and np.abs(est.x_est - X_RS).max() < 1e-5

    def test_estimate_within_bounds(self):
        m = rs_model()
        b = default_bounds(RS)
        rec = sample_shots(m.probabilities(X_RS, X_RS + 0.3)[0], 600, seed=9)
        est = mle(rec, m, X_RS + 0.3, starts=4, bounds=b)
        assert np.all(est.x_est >= b[:, 0]) and np.all(est.x_est <= b[:, 1]) and est.starts_used == 4

    def test_quasi_random_starts(self):
        b = default_bounds(RS)
        s = quasi_random_starts(b, 10, first=X_RS)
        assert s.shape == (10, 3) and np.array_equal(s[0], X_RS)
        assert np.all(s >= b[:, 0]) and np.all(s <= b[:, 1])
        assert np.array_equal(s, quasi_random_starts(b, 10, first=X_RS))

    def test_determinism(self):
        m = rs_model()
        xc = balanced_control(m, X_RS, 1.5)
        b = localization_bounds(m, X_RS, 0.3)
        a = run_trials(m, X_RS, xc, 600, 5, seed=11, starts=3, bounds=b)
        c = run_trials(m, X_RS, xc, 600, 5, seed=11, starts=3, bounds=b)
        assert a.tobytes() == c.tobytes()

    def test_multistart_success_rate(self):
        # success = reaching the best log-likelihood found by a dense search
        m = rs_model(N=4)
        xc = balanced_control(m, X_RS, 1.5)
        b = np.array([[0.7, 1.3], [0.2, 1.4], [0.2, 1.4]])
        rng = np.random.default_rng(1)
        single = multi = 0
        for i in range(30):
            rec = sample_shots(m.probabilities(X_RS, xc)[0], 600, trial_seed(5, i))
            obj = _JointObjective(m, [xc], [rec.frequencies])
            best = maximize_joint(obj, xc, 64, b).log_likelihood
            x0 = rng.uniform(b[:, 0], b[:, 1])
            single += maximize_joint(obj, x0, 1, b).log_likelihood >= best - 1e-6
            multi += maximize_joint(obj, x0, 10, b).log_likelihood >= best - 1e-6
        assert multi >= single and multi >= 25


class TestAdaptive:
    def test_fixed_point_converges_immediately(self):
        m = rs_model(T=np.pi / 4)
        est, state = adaptive_estimate(m, X_RS, X_RS, n=10**6, seed=3, starts=3)
        assert state.round == 1 and state.converged and state.update_norms[0] < 1e-4

    def test_converges_from_random_start(self):
        m = rs_model(T=np.pi / 4)
        b = default_bounds(RS)
        x0 = np.random.default_rng(4).uniform(b[:, 0], b[:, 1])
        est, state = adaptive_estimate(m, X_RS, x0, n=10**7, seed=4, starts=10)
        assert state.round <= MAX_ROUNDS and np.abs(est.x_est - X_RS).max() < 1e-3

    def test_cost_trace(self):
        m = rs_model(T=np.pi / 4)
        _, state = adaptive_estimate(m, X_RS, X_RS + 0.2, n=600, seed=8, starts=3)
        assert len(state.costs) == state.round and all(c >= 0 for c in state.costs)

    def test_round_cap(self):
        with pytest.raises(ValueError):
            AdaptiveState(r_iter=41)


class TestStatistics:
    def test_identical_estimates(self):
        st = precision_stats(np.tile([1.0, 2.0], (5, 1)), [0.5, 2.5])
        assert np.all(st.std == 0) and np.allclose(st.bias, [0.5, -0.5]) and st.variance_sum == 0

    def test_needs_two_trials(self):
        with pytest.raises(ValueError):
            precision_stats(np.ones((1, 3)), np.zeros(3))

    def test_gain_db(self):
        assert gain_db(2.0, 1.0) == pytest.approx(3.0103, abs=1e-4)

    def test_theoretical_gain(self):
        f = VectorField(1.0, np.pi / 2, np.pi / 4)
        nle = precision_bound("NLE", 2, f, T, 4).total
        le = precision_bound("LE_bell", 2, f, T, 4).total
        assert le / nle == pytest.approx(1.847, abs=1e-3)
        assert gain_db(le, nle) == pytest.approx(2.665, abs=0.01)

    def test_readout_trials_accept_per_bit_confusion(self):
        m = rs_model()
        c = np.array([[0.98, 0.02], [0.02, 0.98]])
        a = readout_mitigation_trials(m, X_RS, X_RS + 0.2, c, 600, 20, seed=1)
        b = readout_mitigation_trials(m, X_RS, X_RS + 0.2, np.kron(c, c), 600, 20, seed=1)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_hits_bounds(self):
        b = np.array([[0.0, 1.0], [0.0, 1.0]])
        assert hits_bounds(np.array([[0.5, 0.5], [1.0, 0.3]]), b).tolist() == [False, True]


@pytest.mark.slow
class TestStatisticalProperties:
    def test_consistency_at_large_n(self):
        m = rs_model()
        xc = balanced_control(m, X_RS, 1.5)
        n = 10**5
        est = run_trials(m, X_RS, xc, n, 200, seed=3, starts=3, bounds=localization_bounds(m, X_RS, 0.3))
        st = precision_stats(est, X_RS)
        crb = invert_info(cfim(lambda y: m.probabilities(y, xc)[0], X_RS, 1e-6)).trace / n
        assert np.sum(st.bias**2) < st.variance_sum
        assert st.variance_sum / crb == pytest.approx(1.0, rel=0.15)

    def test_crb_respected_for_gradient_strategies(self):
        f = VectorField(1.0, np.pi / 2, np.pi / 4)
        for tag in ("NLE", "RS", "LE_bell", "LE_opt"):
            g = gradient_trials(Strategy(tag, 2), f, None, T, 1, 600, 100, seed=11, starts=3)
            assert g.variance_sum >= 0.8 * precision_bound(tag, 2, f, T).total / 600
