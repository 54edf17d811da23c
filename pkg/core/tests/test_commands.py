import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase, override_settings

from core.models import ResultRecord, ScenarioRun, SearchCampaign
from core.scenarios import ScenarioResult


def _write_config(directory: Path, document: dict) -> str:
    path = directory / "config.json"
    path.write_text(json.dumps(document))
    return str(path)


class SimCommandTests(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_estimate_to_stdout(self):
        out = StringIO()
        call_command("sim", "estimate", stdout=out)
        lines = out.getvalue().splitlines()
        self.assertTrue(lines[0].startswith("scenario,source,true_exponent,trials,successes"))
        self.assertEqual(len(lines), 5)

    def test_writes_csv_file(self):
        target = self.dir / "rates.csv"
        config = _write_config(self.dir, {"params": {"periods": [8, 16], "blocks": 8}})
        out = StringIO()
        call_command("sim", "counter-probe", "--config", config, "--out", str(target), stdout=out)
        self.assertIn("Wrote 2 rows", out.getvalue())
        frame = pd.read_csv(target)
        self.assertEqual(list(frame["period"]), [8, 16])
        self.assertEqual(list(frame["mispredict_rate"]), [0.5, 0.25])

    def test_dump_state(self):
        state = self.dir / "state.csv"
        config = _write_config(self.dir, {"preset": "tiny", "params": {"periods": [8], "blocks": 2}})
        call_command("sim", "counter-probe", "--config", config, "--dump-state", str(state), stdout=StringIO())
        frame = pd.read_csv(state)
        self.assertEqual(list(frame["component"]), [1, 2, 0])

    def test_dump_state_without_predictor_warns(self):
        err = StringIO()
        call_command("sim", "estimate", "--dump-state", str(self.dir / "x.csv"), stdout=StringIO(), stderr=err)
        self.assertIn("no predictor state", err.getvalue())
        self.assertFalse((self.dir / "x.csv").exists())

    def test_seed_from_command_line_wins(self):
        config = _write_config(self.dir, {"seed": 1, "params": {"observations": [], "synthetic_exponents": [10]}})
        first, second, third = StringIO(), StringIO(), StringIO()
        call_command("sim", "estimate", "--config", config, "--seed", "5", stdout=first)
        call_command("sim", "estimate", "--config", config, "--seed", "5", stdout=second)
        call_command("sim", "estimate", "--config", config, stdout=third)
        self.assertEqual(first.getvalue(), second.getvalue())
        self.assertEqual(len(third.getvalue().splitlines()), 2)

    @override_settings(SIM_DEFAULT_SEED=3)
    def test_save_records_search_campaign(self):
        config = _write_config(
            self.dir,
            {"preset": "tiny", "params": {"mode": "brute-force", "victim_depth": 1, "trials": 20, "rounds": 16}},
        )
        out = StringIO()
        call_command("sim", "search", "--config", config, "--save", stdout=out)
        run = ScenarioRun.objects.get()
        self.assertEqual(run.scenario, "search")
        self.assertEqual(run.preset, "tiny")
        self.assertEqual(int(run.seed), 3)
        self.assertEqual(run.exit_code, 0)
        self.assertEqual(ResultRecord.objects.filter(run=run).count(), 1)
        campaign = SearchCampaign.objects.get(run=run)
        self.assertEqual(campaign.trials, 20)
        self.assertEqual(campaign.mode, "brute-force")
        self.assertIn(f"Saved run {run.pk}", out.getvalue())

    def test_save_keeps_effect_bits(self):
        config = _write_config(self.dir, {"params": {"attribute": "cond_pc", "bits": "2-3"}})
        call_command("sim", "bit-effect", "--config", config, "--save", stdout=StringIO())
        run = ScenarioRun.objects.get()
        self.assertEqual(run.records.count(), 2)
        self.assertEqual(set(run.effect_bits), {2, 3})
        self.assertEqual(run.microarch["name"], "firestorm")

    def test_invalid_config(self):
        config = _write_config(self.dir, {"params": {"colour": "blue"}})
        with self.assertRaises(CommandError) as ctx:
            call_command("sim", "estimate", "--config", config, stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn("colour", str(ctx.exception))

    def test_unreadable_config(self):
        broken = self.dir / "broken.json"
        broken.write_text("{not json")
        for path in (str(broken), str(self.dir / "missing.json")):
            with self.subTest(path=path), self.assertRaises(CommandError):
                call_command("sim", "estimate", "--config", path, stdout=StringIO())

    def test_runner_errors_become_command_errors(self):
        config = _write_config(self.dir, {"preset": "tiny", "params": {"mode": "lpc", "victim_depth": 3, "trials": 1}})
        with self.assertRaises(CommandError):
            call_command("sim", "search", "--config", config, stdout=StringIO())

    def test_seed_out_of_range(self):
        with self.assertRaises(CommandError):
            call_command("sim", "estimate", "--seed", str(1 << 64), stdout=StringIO())

    def test_indeterminate_exit_code(self):
        result = ScenarioResult("alias-detect", [{"pair": 0, "mispredict_rate": 0.12, "classification": "indeterminate"}])
        out = StringIO()
        with mock.patch("core.management.commands.sim.run_scenario", return_value=result):
            with self.assertRaises(CommandError) as ctx:
                call_command("sim", "alias-detect", "--save", stdout=out)
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertIn("indeterminate", out.getvalue())
        self.assertEqual(ScenarioRun.objects.get().exit_code, 2)
