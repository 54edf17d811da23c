from __future__ import annotations

import json
from pathlib import Path

from django.conf import settings
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from core.forms import parse_config
from core.models import ScenarioRun
from core.reports import to_frame, write_csv
from core.scenarios import SCENARIOS, run_scenario

INDETERMINATE_EXIT = 2


class Command(BaseCommand):
    help = "Run a branch-predictor scenario and write its CSV report."

    def add_arguments(self, parser):
        parser.add_argument("scenario", choices=sorted(SCENARIOS), help="Scenario to run.")
        parser.add_argument("--config", help="JSON configuration file (preset, overrides, params).")
        parser.add_argument("--seed", type=int, help="Master seed (overrides the config's seed).")
        parser.add_argument("--out", help="CSV output path. Defaults to stdout.")
        parser.add_argument("--workers", type=int, help="Worker processes (default: SIM_WORKERS).")
        parser.add_argument("--dump-state", help="Write the final predictor state as CSV to this path.")
        parser.add_argument("--save", action="store_true", help="Store the run in the database.")

    def handle(self, *args, **options):
        name = options["scenario"]
        document = self._load(options["config"]) if options["config"] else {}
        try:
            config = parse_config(document, name)
        except ValidationError as exc:
            raise CommandError(f"Invalid configuration: {' '.join(exc.messages)}") from exc

        seed = options["seed"]
        if seed is None:
            seed = config.seed if config.seed is not None else settings.SIM_DEFAULT_SEED
        if not 0 <= seed < 1 << 64:
            raise CommandError(f"Seed {seed} is not an unsigned 64-bit integer")
        workers = options["workers"] or settings.SIM_WORKERS
        if workers < 1:
            raise CommandError("--workers must be positive")

        try:
            result = run_scenario(
                name, config.microarch, config.params,
                seed=seed, workers=workers, chunk_trials=settings.SIM_CHUNK_TRIALS,
            )
        except ValueError as exc:
            raise CommandError(str(exc)) from exc

        frame = to_frame(result.rows)
        if options["out"]:
            write_csv(frame, options["out"])
            self.stdout.write(self.style.SUCCESS(f"Wrote {len(frame)} rows to {options['out']}"))
        else:
            write_csv(frame, self.stdout)

        if options["dump_state"]:
            if result.predictor is None:
                self.stderr.write(self.style.WARNING(f"{name} keeps no predictor state to dump"))
            else:
                write_csv(result.predictor.dump_state(), options["dump_state"])

        exit_code = INDETERMINATE_EXIT if result.indeterminate else 0
        if options["save"]:
            run = ScenarioRun.record(result, config, seed=seed, exit_code=exit_code)
            self.stdout.write(self.style.SUCCESS(f"Saved run {run.pk}"))

        if exit_code:
            raise CommandError("Indeterminate aliasing classification", returncode=INDETERMINATE_EXIT)

    def _load(self, path):
        try:
            return json.loads(Path(path).read_text())
        except OSError as exc:
            raise CommandError(f"Cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CommandError(f"Config {path} is not valid JSON: {exc}") from exc
