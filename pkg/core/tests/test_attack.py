from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from core.attack import (
    Classification,
    SearchReport,
    TrainingMode,
    TrialConfig,
    VictimSetupError,
    VictimSpec,
    aliasing_detect,
    classify_rate,
    execute_branch,
    last_component_alias,
    lpc_primitive,
    random_slide,
    run_search,
    setup_victim,
    train_mistrain,
    trial,
)
from core.presets import DESK, FIRESTORM, ICESTORM, TINY, Microarch
from core.stats import lpc_gain, p_succ
from core.tage import TageConfig, TagePredictor

# p = 2^-5 with few set conflicts between unrelated branches
PROBE = Microarch(
    "probe",
    DESK.history,
    TageConfig.geometric(tables=4, width=100, sets_log=4, tag_bits=1, base_log=10),
)

# trials per victim depth, sized so every depth expects a few dozen brute-force successes
SWEEP_TRIALS = {1: 3000, 2: 6000, 3: 20000}
LPC_TRIALS = 3000


def _victim(microarch, depth, seed=1):
    return VictimSpec(random_slide(np.random.default_rng(seed), microarch.history), depth)


def _both_twins_at_last_component(microarch, slide, taken, seed=0):
    tage, model, T = microarch.predictor(seed), microarch.history, microarch.tage.tables
    lpc_primitive(tage, slide, taken, 32, model, train_slide=False)
    twin = model.flip_last_bit(slide)
    first = tage.peek(slide.terminal.pc, model.of_slide(slide))
    second = tage.peek(twin.terminal.pc, model.of_slide(twin))
    return (first.provider, first.direction, second.provider, second.direction) == (T, taken, T, not taken)


class ClassificationTests(SimpleTestCase):
    def test_bands(self):
        self.assertIs(classify_rate(0.25), Classification.ALIASED)
        self.assertIs(classify_rate(0.01), Classification.NON_ALIASED)
        self.assertIs(classify_rate(0.10), Classification.INDETERMINATE)
        self.assertIs(classify_rate(0.40), Classification.INDETERMINATE)


class ConfigTests(SimpleTestCase):
    def test_rounds_must_saturate_counter(self):
        with self.assertRaises(ValueError):
            TrialConfig(rounds=8).check_against(DESK.tage)
        TrialConfig(rounds=16).check_against(DESK.tage)

    def test_reports_merge_by_summation(self):
        total = SearchReport(TrainingMode.LPC, 3, 10, 1) + SearchReport(TrainingMode.LPC, 3, 30, 2)
        self.assertEqual((total.trials, total.successes), (40, 3))
        with self.assertRaises(ValueError):
            total + SearchReport(TrainingMode.BRUTE_FORCE, 3, 1, 0)


class SetupTests(SimpleTestCase):
    def test_victim_is_provided_by_requested_component(self):
        tage = DESK.predictor()
        for depth in range(1, DESK.tage.tables + 1):
            victim = _victim(DESK, depth)
            history = setup_victim(tage, victim, DESK.history)
            prediction = tage.peek(victim.branch.pc, history)
            self.assertEqual(prediction.provider, depth)
            self.assertTrue(prediction.direction)

    def test_depth_outside_the_tables_is_rejected(self):
        for depth in (0, DESK.tage.tables + 1):
            with self.assertRaises(VictimSetupError):
                setup_victim(DESK.predictor(), _victim(DESK, depth), DESK.history)

    def test_unreachable_provider_is_reported(self):
        with mock.patch.object(TagePredictor, "provider_of", return_value=0):
            with self.assertRaisesMessage(VictimSetupError, "provided by component 0"):
                setup_victim(DESK.predictor(), _victim(DESK, 2), DESK.history)

    def test_victim_survives_unrelated_traffic(self):
        tage, model = FIRESTORM.predictor(), FIRESTORM.history
        victim = _victim(FIRESTORM, 2)
        history = setup_victim(tage, victim, model)
        rng = np.random.default_rng(13)
        for _ in range(1000):
            pc = int(rng.integers(0, 1 << 30)) << 2
            noise = int(rng.integers(0, 1 << 50)) << 50 | int(rng.integers(0, 1 << 50))
            execute_branch(tage, pc, noise, bool(rng.integers(0, 2)))
        self.assertEqual(tage.provider_of(victim.branch.pc, history), 2)

    def test_training_flips_a_fresh_branch(self):
        tage = DESK.predictor()
        slide = random_slide(np.random.default_rng(4), DESK.history)
        misses = train_mistrain(tage, slide, False, 32, DESK.history, train_slide=False)
        self.assertGreater(misses, 0)
        self.assertFalse(tage.peek(slide.terminal.pc, DESK.history.of_slide(slide)).direction)


class LpcPrimitiveTests(SimpleTestCase):
    def test_tiny_twins_always_reach_the_last_component(self):
        rng = np.random.default_rng(3)
        for index in range(200):
            taken = bool(index % 2)
            slide = random_slide(rng, TINY.history, taken=taken)
            self.assertTrue(_both_twins_at_last_component(TINY, slide, taken, seed=index), index)

    def test_preset_twins_reach_the_last_component(self):
        for microarch in (FIRESTORM, ICESTORM, DESK):
            rng = np.random.default_rng(5)
            reached = sum(
                _both_twins_at_last_component(microarch, random_slide(rng, microarch.history, taken=seed % 2 == 0), seed % 2 == 0, seed)
                for seed in range(40)
            )
            with self.subTest(microarch=microarch.name):
                self.assertEqual(reached, 40)

    def test_mirror_slide_mistrains_the_victim(self):
        victim = _victim(DESK, 2)
        trial_cfg = TrialConfig(TrainingMode.LPC, rounds=32, train_slide=False)
        rng = np.random.default_rng(0)
        self.assertTrue(trial(DESK.predictor(), victim, trial_cfg, rng, DESK.history, slide=victim.slide))


class DepthSweepTests(SimpleTestCase):
    """Brute force and LPC against victims provided by components 1..3 of PROBE."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.brute_force, cls.lpc, cls.mismatches = {}, {}, {}
        model = PROBE.history
        for depth, n_trials in SWEEP_TRIALS.items():
            victim = _victim(PROBE, depth)
            bf_cfg = TrialConfig(TrainingMode.BRUTE_FORCE, rounds=16, seed=depth, train_slide=False, full_reset=True)
            cls.brute_force[depth] = run_search(PROBE.predictor(), victim, bf_cfg, n_trials, model).success_rate

            lpc_cfg = TrialConfig(TrainingMode.LPC, rounds=16, train_slide=False, full_reset=True)
            tage, rng = PROBE.predictor(depth), np.random.default_rng(100 + depth)
            successes = mismatches = 0
            for _ in range(LPC_TRIALS):
                slide = random_slide(rng, model)
                success = trial(tage, victim, lpc_cfg, rng, model, slide=slide)
                mismatches += success != last_component_alias(PROBE.tage, victim, slide, model)
                successes += success
            cls.lpc[depth] = successes / LPC_TRIALS
            cls.mismatches[depth] = mismatches

    def test_lpc_succeeds_exactly_on_last_component_aliasing(self):
        self.assertEqual(self.mismatches, {depth: 0 for depth in SWEEP_TRIALS})

    def test_lpc_rate_is_the_alias_probability(self):
        p = float(PROBE.tage.alias_probability)
        for depth, rate in self.lpc.items():
            with self.subTest(depth=depth):
                self.assertAlmostEqual(rate / p, 1, delta=0.4)

    def test_brute_force_rate_follows_closed_form(self):
        p, T = PROBE.tage.alias_probability, PROBE.tage.tables
        for depth, rate in self.brute_force.items():
            with self.subTest(depth=depth):
                ratio = rate / float(p_succ(p, depth, T))
                self.assertGreater(ratio, 0.4)
                self.assertLess(ratio, 2.0)

    def test_lpc_advantage_grows_with_depth(self):
        p, T = PROBE.tage.alias_probability, PROBE.tage.tables
        gains = [self.lpc[depth] / self.brute_force[depth] for depth in sorted(SWEEP_TRIALS)]
        self.assertEqual(gains, sorted(gains))
        self.assertGreater(gains[-1], lpc_gain(p, 1, T))


class TinyOracleTests(SimpleTestCase):
    def test_lpc_success_matches_last_component_aliasing(self):
        model = TINY.history
        rng = np.random.default_rng(8)
        trial_cfg = TrialConfig(TrainingMode.LPC, rounds=16, train_slide=False, full_reset=True)
        for depth in range(1, TINY.tage.tables + 1):
            victim = _victim(TINY, depth)
            tage = TINY.predictor()
            successes = 0
            for _ in range(1500):
                slide = random_slide(rng, model)
                success = trial(tage, victim, trial_cfg, rng, model, slide=slide)
                self.assertEqual(success, last_component_alias(TINY.tage, victim, slide, model))
                successes += success
            self.assertGreater(successes, 0)


class SearchTests(SimpleTestCase):
    def test_result_does_not_depend_on_workers(self):
        victim = _victim(TINY, 1)
        trial_cfg = TrialConfig(TrainingMode.BRUTE_FORCE, rounds=16, seed=11, train_slide=False)
        serial = run_search(TINY.predictor(), victim, trial_cfg, 200, TINY.history, chunk_trials=50)
        pooled = run_search(TINY.predictor(), victim, trial_cfg, 200, TINY.history, workers=2, chunk_trials=50)
        self.assertEqual(serial, pooled)

    def test_zero_trials(self):
        report = run_search(TINY.predictor(), _victim(TINY, 1), TrialConfig(), 0, TINY.history)
        self.assertEqual((report.trials, report.successes, report.success_rate), (0, 0, 0.0))

    def test_too_few_rounds_rejected(self):
        with self.assertRaises(ValueError):
            run_search(TINY.predictor(), _victim(TINY, 1), TrialConfig(rounds=4), 10, TINY.history)


class AliasingDetectTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(21)
        self.model = DESK.history

    def test_same_branch_with_opposite_outcomes_is_aliased(self):
        slide = random_slide(self.rng, self.model)
        result = aliasing_detect(DESK.predictor(), slide, slide.with_outcome(False), self.model)
        self.assertIs(result.classification, Classification.ALIASED)

    def test_unrelated_branches_are_not_aliased(self):
        a = random_slide(self.rng, self.model)
        b = random_slide(self.rng, self.model, taken=False)
        result = aliasing_detect(DESK.predictor(), a, b, self.model)
        self.assertIs(result.classification, Classification.NON_ALIASED)

    def test_needs_opposite_outcomes(self):
        slide = random_slide(self.rng, self.model)
        with self.assertRaises(ValueError):
            aliasing_detect(DESK.predictor(), slide, slide, self.model)
