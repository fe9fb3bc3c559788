import math

import numpy as np
import pytest

from logpool.calibrated_world import (InformedLaggardAdversary, ExtremeReportAdversary, InformationStructure,
                                      ScenarioSpec, adversary_round, bayesian_independent,
                                      extreme_first_round, fixed_reports, from_channels,
                                      load_structure, posterior_report, random_structure, run_rng,
                                      sample_round, sample_rounds, symmetric_channel,
                                      symmetric_null, verify_calibration, write_structure)
from logpool.errors import ConfigError, DomainError, LoadError, StructuralError
from logpool.pooling import PROB_FLOOR


class TestPosteriorReport:
    def test_uninformative_signal_gives_prior(self):
        prior = (0.2, 0.5, 0.3)
        noise = np.full((3, 4), 0.25)
        st = from_channels(prior, [noise, symmetric_channel(3, 0.9)])
        for s in range(4):
            np.testing.assert_allclose(posterior_report(st, 0, s), prior, atol=1e-12)

    def test_fully_informed_signal(self):
        st = from_channels((0.3, 0.7), [np.eye(2), symmetric_channel(2, 0.6)])
        for s in range(2):
            expected = np.full(2, PROB_FLOOR)
            expected[s] = 1.0
            np.testing.assert_allclose(posterior_report(st, 0, s), expected / expected.sum(), atol=1e-15)

    def test_bayes_rule_by_hand(self):
        # P(s=1 | j=1) = 0.8, P(s=1 | j=2) = 0.3, signal 1 is index 0 here
        chan = np.array([[0.8, 0.2], [0.3, 0.7]])
        st = from_channels((0.5, 0.5), [chan, chan])
        np.testing.assert_allclose(posterior_report(st, 0, 0), (0.8 / 1.1, 0.3 / 1.1), rtol=1e-12)
        np.testing.assert_allclose(posterior_report(st, 0, 0), (0.7273, 0.2727), atol=1e-4)

    def test_zero_probability_signal(self):
        chan = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        st = from_channels((0.5, 0.5), [chan, np.eye(2)])
        with pytest.raises(DomainError):
            posterior_report(st, 0, 2)

    def test_matches_entry_reports(self, rng):
        for _ in range(10):
            st = random_structure(rng, 3, 3)
            for k in range(len(st.mass)):
                for i in range(3):
                    np.testing.assert_allclose(st.entry_reports[k].probs[i],
                                               posterior_report(st, i, st.signals[k, i]), atol=1e-12)


class TestStructure:
    def test_mass_validation(self):
        with pytest.raises(DomainError):
            InformationStructure(2, [[0, 0], [1, 1]], [0, 1], [0.5, 0.6])
        with pytest.raises(DomainError):
            InformationStructure(2, [[0, 0], [1, 1]], [0, 1], [-0.5, 1.5])

    def test_shape_validation(self):
        with pytest.raises(StructuralError):
            InformationStructure(2, [[0], [1]], [0, 1], [0.5, 0.5])
        with pytest.raises(StructuralError):
            InformationStructure(2, [[0, 0], [1, 1]], [0, 2], [0.5, 0.5])

    def test_marginal(self):
        st = bayesian_independent((0.25, 0.75), (0.8, 0.7))
        np.testing.assert_allclose(st.outcome_marginal(), (0.25, 0.75), atol=1e-14)


class TestSampling:
    def test_degenerate_structure_is_deterministic(self):
        st = fixed_reports([(0.2, 0.8), (0.6, 0.4)], (0.0, 1.0))
        for seed in range(5):
            d = sample_round(st, np.random.default_rng(seed))
            assert d.outcome == 1
            np.testing.assert_allclose(d.reports.probs, [(0.2, 0.8), (0.6, 0.4)])

    def test_symmetric_null_reports_prior(self):
        st = symmetric_null((0.1, 0.6, 0.3), 4)
        rng = np.random.default_rng(1)
        for _ in range(20):
            d = sample_round(st, rng)
            np.testing.assert_allclose(d.reports.probs, np.tile((0.1, 0.6, 0.3), (4, 1)), atol=1e-12)

    def test_outcome_frequencies_match_marginal(self):
        st = bayesian_independent((0.2, 0.3, 0.5), (0.9, 0.6, 0.5))
        N = 10 ** 6
        _, out = sample_rounds(st, np.random.default_rng(7), N)
        freq = np.bincount(out, minlength=3) / N
        p = st.outcome_marginal()
        se = np.sqrt(p * (1 - p) / N)
        assert np.all(np.abs(freq - p) <= 3 * se)

    def test_single_and_batch_sampling_agree(self):
        st = bayesian_independent((0.5, 0.5), (0.8, 0.7))
        a = [sample_round(st, run_rng(3, 0)).outcome for _ in range(1)]
        lp, out = sample_rounds(st, run_rng(3, 0), 1)
        assert a[0] == out[0]


class TestCalibration:
    def test_bayesian_independent_is_calibrated(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 5))
            m = int(rng.integers(2, 4))
            prior = rng.dirichlet(np.ones(n))
            st = bayesian_independent(prior, rng.uniform(0.2, 1.0, size=m))
            assert verify_calibration(st).max_violation <= 1e-12

    def test_random_structures_are_calibrated(self, rng):
        for _ in range(20):
            st = random_structure(rng, int(rng.integers(2, 4)), int(rng.integers(2, 4)))
            assert verify_calibration(st).passed

    def test_extreme_first_round_is_uncalibrated(self):
        st = extreme_first_round(0, 100, 1e-300)
        rep = verify_calibration(st)
        assert rep.max_violation > 0.99
        assert not rep.passed

    def test_ignorant_informed_fixed(self):
        rep = verify_calibration(ScenarioSpec("appendix_b_fixed").base_structure())
        assert rep.per_expert[1].max_violation == pytest.approx(0.0, abs=1e-12)
        assert rep.per_expert[0].max_violation == pytest.approx(0.4, abs=1e-12)
        assert not rep.passed

    def test_perturbed_reports_fail(self):
        st = fixed_reports([(0.3, 0.7), (0.31, 0.69)], (0.3, 0.7))
        rep = verify_calibration(st)
        assert rep.per_expert[0].max_violation < 1e-12
        assert rep.per_expert[1].max_violation == pytest.approx(0.01, abs=1e-12)


class TestAdversaries:
    def test_extreme_first_round_targets_heavy_expert(self):
        adv = ExtremeReportAdversary()
        d = adversary_round(adv, (0.6, 0.4), 1, 100, np.random.default_rng(0))
        assert d.outcome == 0
        assert d.reports.probs[0, 0] == pytest.approx(math.exp(-100), rel=1e-9)
        np.testing.assert_allclose(d.reports.probs[1], (0.5, 0.5))

    def test_extreme_report_tie_goes_to_first_expert(self):
        adv = ExtremeReportAdversary()
        st = adv.structure(np.array([0.5, 0.5]), 1, 10)
        assert st.entry_reports[0].probs[0, 0] == pytest.approx(math.exp(-10))

    def test_extreme_later_rounds_make_other_expert_perfect(self):
        adv = ExtremeReportAdversary()
        adv.structure(np.array([0.4, 0.6]), 1, 50)
        rng = np.random.default_rng(2)
        for t in range(2, 30):
            d = adv.draw(np.array([0.3, 0.7]), t, 50, rng)
            assert d.reports.probs[0, d.outcome] == pytest.approx(1.0)
            np.testing.assert_allclose(d.reports.probs[1], (0.5, 0.5))

    def test_adaptive_informs_lighter_expert(self):
        adv = InformedLaggardAdversary()
        d = adversary_round(adv, (0.3, 0.7), 5, 100, np.random.default_rng(0))
        np.testing.assert_allclose(d.reports.probs[0], (0.9, 0.1))
        np.testing.assert_allclose(d.reports.probs[1], (0.5, 0.5))
        d = adversary_round(adv, (0.5, 0.5), 5, 100, np.random.default_rng(0))
        np.testing.assert_allclose(d.reports.probs[0], (0.9, 0.1))
        d = adversary_round(adv, (0.8, 0.2), 5, 100, np.random.default_rng(0))
        np.testing.assert_allclose(d.reports.probs[1], (0.9, 0.1))

    def test_oblivious_adversary_ignores_weights(self):
        adv = ScenarioSpec("bayesian_independent").make_adversary()
        a = adversary_round(adv, (0.9, 0.1), 3, 10, run_rng(11, 2))
        b = adversary_round(adv, (0.2, 0.8), 3, 10, run_rng(11, 2))
        assert a.outcome == b.outcome
        np.testing.assert_array_equal(a.reports.probs, b.reports.probs)

    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            ScenarioSpec("nonsense")
        with pytest.raises(ConfigError):
            ScenarioSpec("appendix_b_fixed", m=3)
        with pytest.raises(ConfigError):
            ScenarioSpec("bayesian_independent", params={"accuracies": [0.8, 1.2]})
        with pytest.raises(ConfigError):
            ScenarioSpec("bayesian_independent", params={"prior": [0.8, 0.3]})
        with pytest.raises(ConfigError):
            ScenarioSpec("custom_table")

    def test_custom_table_dimension_check(self, tmp_path):
        path = tmp_path / "s.txt"
        write_structure(bayesian_independent((0.5, 0.5), (0.8, 0.7, 0.6)), path)
        with pytest.raises(ConfigError):
            ScenarioSpec("custom_table", m=2, n=2, params={"path": str(path)}).make_adversary()


class TestRng:
    def test_substreams_are_reproducible_and_distinct(self):
        a = run_rng(42, 0).random(5)
        np.testing.assert_array_equal(a, run_rng(42, 0).random(5))
        assert not np.array_equal(a, run_rng(42, 1).random(5))
        assert not np.array_equal(a, run_rng(43, 0).random(5))


class TestLoadStructure:
    def test_round_trip(self, tmp_path, rng):
        st = random_structure(rng, 2, 3)
        path = tmp_path / "s.txt"
        write_structure(st, path)
        back = load_structure(path)
        np.testing.assert_array_equal(back.signals, st.signals)
        np.testing.assert_allclose(back.mass, st.mass, rtol=1e-15)
        assert verify_calibration(back).passed

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "s.txt"
        path.write_text("# two experts\n2 2\n\n0 0 0 0.5  # row\n1 1 1 0.5\n")
        st = load_structure(path)
        assert (st.m, st.n) == (2, 2)

    @pytest.mark.parametrize("text", [
        "",
        "2\n0 0 0 1.0\n",
        "2 2\n0 0 0 0.5\n1 1 1 0.4\n",
        "2 2\n0 0 0 0.5\n1 1 1\n",
        "2 2\n0 0 2 1.0\n",
        "2 2\n0 x 0 1.0\n",
        "2 2\n0 0 0 -1.0\n1 1 1 2.0\n",
        "2 2\n",
    ])
    def test_bad_files(self, tmp_path, text):
        path = tmp_path / "bad.txt"
        path.write_text(text)
        with pytest.raises(LoadError):
            load_structure(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(LoadError):
            load_structure(tmp_path / "nope.txt")
