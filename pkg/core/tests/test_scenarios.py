from django.test import SimpleTestCase

from core.attack import TrainingMode
from core.bhr import BitRangeError, BranchKind
from core.presets import FIRESTORM, ICESTORM, TINY
from core.scenarios import (
    PUBLISHED_OBSERVATIONS,
    SCENARIOS,
    fit_counter_bits,
    recover_history_length,
    run_alias_detect,
    run_bit_effect,
    run_branch_type,
    run_counter_probe,
    run_distance_sweep,
    run_estimate,
    run_high_bits,
    run_isolation,
    run_lpc_compare,
    run_outcome_effect,
    run_scenario,
    run_search_campaign,
    run_update_policy,
)
from core.stats import lpc_gain
from core.tage import Isolation


def _effects(result):
    return {row["bit"]: row["effect"] for row in result.rows}


class BitEffectTests(SimpleTestCase):
    def test_conditional_pc_mask(self):
        result = run_bit_effect(FIRESTORM, "cond_pc", [3, 10, 24, 25, 40], seed=1)
        self.assertEqual(_effects(result), {3: True, 10: True, 24: True, 25: False, 40: False})
        for row in result.rows:
            self.assertEqual(row["effect"], row["expected_effect"])
            self.assertAlmostEqual(row["shadow_mispredict_rate"], 0.25, delta=0.05)

    def test_indirect_pc_mask_skips_middle_bits(self):
        result = run_bit_effect(FIRESTORM, "indir_pc", [4, 10, 20, 26], seed=2)
        self.assertEqual(_effects(result), {4: True, 10: False, 20: False, 26: True})

    def test_immediate_bits_all_count(self):
        result = run_bit_effect(FIRESTORM, "cond_imm", [0, 7, 16], seed=3)
        self.assertEqual(_effects(result), {0: True, 7: True, 16: True})

    def test_bit_31_is_flagged(self):
        with self.assertLogs("core.scenarios", level="WARNING"):
            result = run_bit_effect(FIRESTORM, "indir_target", [31], seed=4)
        self.assertTrue(result.rows[0]["unmodeled_bit"])

    def test_rejects_bits_outside_attribute(self):
        with self.assertRaises(BitRangeError):
            run_bit_effect(FIRESTORM, "cond_imm", [19])

    def test_rows_do_not_depend_on_workers(self):
        serial = run_bit_effect(TINY, "cond_pc", [2, 3], seed=5, switches=64)
        pooled = run_bit_effect(TINY, "cond_pc", [2, 3], seed=5, switches=64, workers=2)
        self.assertEqual(serial.rows, pooled.rows)


class DistanceSweepTests(SimpleTestCase):
    def test_recovers_history_length(self):
        result = run_distance_sweep(FIRESTORM, "cond_pc", [2], [98, 99, 100, 101], seed=6)
        self.assertEqual(result.summary["cutoffs"], {2: 100})
        self.assertEqual(result.summary["history_length"], 100)
        self.assertEqual(result.summary["bhr_width"], 100)
        self.assertTrue(all(row["cutoff"] == row["expected_cutoff"] for row in result.rows))

    def test_immediate_cutoff(self):
        result = run_distance_sweep(FIRESTORM, "cond_imm", [16], [83, 84], seed=7)
        self.assertEqual(result.summary["cutoffs"], {16: 84})

    def test_icestorm_history_is_shorter(self):
        result = run_distance_sweep(ICESTORM, "cond_pc", [2], [59, 60], seed=8)
        self.assertEqual(result.summary["history_length"], 60)

    def test_recover_needs_a_cutoff(self):
        with self.assertRaises(ValueError):
            recover_history_length({2: None}, "cond_pc", FIRESTORM.history.masks)


class UpdatePolicyTests(SimpleTestCase):
    def test_single_bit_shift_cancels(self):
        result = run_update_policy(FIRESTORM, "cond_imm", 1, [5, 2], seed=9)
        self.assertEqual(_effects(result), {5: False, 2: True})

    def test_two_bit_shift_does_not_cancel(self):
        result = run_update_policy(FIRESTORM, "cond_imm", 2, [5], seed=10)
        self.assertEqual(_effects(result), {5: True})

    def test_bits_past_the_field_are_rejected(self):
        with self.assertRaises(BitRangeError):
            run_update_policy(FIRESTORM, "cond_imm", 2, [17])


class OutcomeEffectTests(SimpleTestCase):
    def test_not_taken_branches_update_history(self):
        result = run_outcome_effect(FIRESTORM, [32, 40], seed=11)
        for row in result.rows:
            self.assertIs(row["effect"], True)
            self.assertLess(row["spy_mispredict_rate"], 0.02)

    def test_control_paths_are_indistinguishable(self):
        result = run_outcome_effect(FIRESTORM, [32, 40], control=True, seed=12)
        for row in result.rows:
            self.assertIs(row["effect"], False)
            self.assertAlmostEqual(row["spy_mispredict_rate"], 0.25, delta=0.05)

    def test_offsets_must_be_addresses(self):
        with self.assertRaises(BitRangeError):
            run_outcome_effect(FIRESTORM, [1])


class BranchTypeTests(SimpleTestCase):
    bits = [3, 8, 12]

    def test_baseline_keeps_the_difference(self):
        result = run_branch_type(FIRESTORM, None, self.bits, seed=13)
        self.assertTrue(all(_effects(result).values()))

    def test_not_taken_buffer_does_not_shift(self):
        result = run_branch_type(FIRESTORM, BranchKind.CONDITIONAL_NOT_TAKEN, self.bits, seed=14)
        self.assertTrue(all(_effects(result).values()))

    def test_direct_buffer_shifts(self):
        result = run_branch_type(FIRESTORM, BranchKind.DIRECT_UNCONDITIONAL, self.bits, seed=15)
        self.assertFalse(any(_effects(result).values()))


class HighBitsTests(SimpleTestCase):
    def test_bits_above_31_do_not_matter(self):
        result = run_high_bits(FIRESTORM, [26, 30, 32, 40, 46], seed=16)
        self.assertEqual(_effects(result), {26: True, 30: True, 32: False, 40: False, 46: False})

    def test_rejects_bits_inside_the_layout(self):
        with self.assertRaises(BitRangeError):
            run_high_bits(FIRESTORM, [8])


class CounterProbeTests(SimpleTestCase):
    def test_recovers_three_bit_counters(self):
        result = run_counter_probe(FIRESTORM, [8, 16, 32], blocks=32, seed=17)
        for row in result.rows:
            self.assertEqual(row["mispredict_rate"], 4 / row["period"])
        self.assertEqual(result.summary["counter_bits"], 3)
        self.assertIsNotNone(result.predictor)

    def test_fit(self):
        self.assertEqual(fit_counter_bits([(16, 0.5), (32, 0.25)]), 4)
        self.assertIsNone(fit_counter_bits([(16, 0.0)]))


class IsolationScenarioTests(SimpleTestCase):
    def _success(self, microarch, crossing, isolation=None):
        return run_isolation(microarch, crossing, isolation, seed=18).rows[0]["mistraining_success"]

    def test_shared_predictor_leaks_across_privilege(self):
        self.assertTrue(self._success(FIRESTORM, "el"))

    def test_privilege_tag_blocks_user_to_kernel(self):
        self.assertFalse(self._success(ICESTORM, "el"))

    def test_privilege_tag_does_not_separate_processes(self):
        self.assertTrue(self._success(ICESTORM, "process"))

    def test_process_tag_separates_processes(self):
        self.assertFalse(self._success(FIRESTORM, "process", Isolation.PROCESS_TAG))

    def test_unknown_crossing(self):
        with self.assertRaises(ValueError):
            run_isolation(FIRESTORM, "vm")


class AliasDetectScenarioTests(SimpleTestCase):
    def test_classifies_every_pair(self):
        result = run_alias_detect(FIRESTORM, pairs=3, seed=19)
        self.assertEqual(len(result.rows), 6)
        for row in result.rows:
            self.assertEqual(row["classification"], row["expected"])


class CampaignTests(SimpleTestCase):
    def test_search_row(self):
        result = run_search_campaign(TINY, TrainingMode.LPC, 2, 300, rounds=16, train_slide=False, full_reset=True, seed=20)
        row = result.rows[0]
        self.assertEqual(row["trials"], 300)
        self.assertEqual(row["expected_rate"], 1 / 64)
        self.assertEqual(result.summary["report"].successes, row["successes"])

    def test_empty_search_has_no_estimate(self):
        result = run_search_campaign(TINY, "brute-force", 1, 0, seed=21)
        self.assertIsNone(result.rows[0]["estimated_exponent"])

    def test_victim_depth_is_checked(self):
        with self.assertRaises(ValueError):
            run_search_campaign(TINY, TrainingMode.LPC, 3, 10)


class LpcCompareTests(SimpleTestCase):
    def test_one_row_per_depth(self):
        result = run_lpc_compare(TINY, [2, 1], 200, rounds=16, train_slide=False, full_reset=True, seed=23)
        self.assertEqual([row["victim_depth"] for row in result.rows], [1, 2])
        for row in result.rows:
            self.assertLessEqual(row["bf_successes"], 200)
            self.assertLessEqual(row["lpc_successes"], 200)
            self.assertEqual(row["expected_gain"], lpc_gain(TINY.tage.alias_probability, row["victim_depth"], 2))
            self.assertEqual(row["expected_lpc_rate"], 1 / 64)


class EstimateScenarioTests(SimpleTestCase):
    def test_published_observations(self):
        result = run_estimate()
        self.assertEqual([row["exponent"] for row in result.rows], [30, 27, 25, 23])
        self.assertEqual(len(result.rows), len(PUBLISHED_OBSERVATIONS))

    def test_synthetic_rows(self):
        result = run_estimate(observations=(), synthetic_exponents=(16,), seed=22)
        self.assertEqual(result.rows[0]["source"], "synthetic")
        self.assertEqual(result.rows[0]["exponent"], 16)


class DispatchTests(SimpleTestCase):
    def test_every_scenario_is_registered(self):
        self.assertEqual(
            set(SCENARIOS),
            {
                "bit-effect", "distance-sweep", "update-policy", "outcome-effect", "counter-probe", "search",
                "lpc-compare", "isolation", "alias-detect", "estimate", "branch-types", "high-bits",
            },
        )

    def test_run_scenario_passes_seed(self):
        result = run_scenario("estimate", TINY, {"synthetic_exponents": (12,)}, seed=3)
        again = run_scenario("estimate", FIRESTORM, {"synthetic_exponents": (12,)}, seed=3)
        self.assertEqual(result.rows, again.rows)
