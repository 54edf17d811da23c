import logging
from django.db import models
from django.db import transaction

from .fields import BitSetField
from .reports import jsonable

logger = logging.getLogger(__name__)


class ScenarioRun(models.Model):
    scenario = models.CharField(max_length=32)
    preset = models.CharField(max_length=32)
    # u64: non entra in un BigIntegerField
    seed = models.DecimalField(max_digits=20, decimal_places=0)
    config = models.JSONField(default=dict, blank=True)
    microarch = models.JSONField(default=dict, blank=True)
    exit_code = models.PositiveSmallIntegerField(default=0)
    effect_bits = BitSetField(
        blank=True, null=True,
        help_text="Bit che hanno modificato la storia (solo scenari a due percorsi)"
    )
    created = models.DateTimeField(auto_now_add=True)

    class Meta:
        verbose_name = "Esecuzione"
        verbose_name_plural = "Esecuzioni"
        ordering = ['-created']

    def __str__(self):
        return f"{self.scenario} su {self.preset} (seed {self.seed})"

    @classmethod
    def record(cls, result, config, *, seed, exit_code=0):
        """Salva un ScenarioResult con tutte le sue righe"""
        from .forms import describe

        effect_bits = {
            row["bit"] for row in result.rows
            if row.get("effect") is True and isinstance(row.get("bit"), int)
        }
        with transaction.atomic():
            run = cls.objects.create(
                scenario=result.scenario,
                preset=config.microarch.name,
                seed=seed,
                config=jsonable(config.document),
                microarch=describe(config.microarch),
                exit_code=exit_code,
                effect_bits=effect_bits or None,
            )
            ResultRecord.objects.bulk_create(
                ResultRecord.from_row(run, ordine, row) for ordine, row in enumerate(result.rows)
            )
            if result.scenario == "search":
                SearchCampaign.from_row(run, result.rows[0]).save()
        logger.debug(f"Salvata esecuzione {run.pk} con {len(result.rows)} righe")
        return run


class ResultRecord(models.Model):
    run = models.ForeignKey(ScenarioRun, on_delete=models.CASCADE, related_name='records')
    ordine = models.PositiveIntegerField()
    params = models.JSONField(default=dict, blank=True)
    spy_rate = models.FloatField(blank=True, null=True)
    shadow_rate = models.FloatField(blank=True, null=True)
    classification = models.CharField(max_length=16, blank=True)

    class Meta:
        verbose_name = "Riga risultato"
        verbose_name_plural = "Righe risultato"
        ordering = ['run', 'ordine']
        unique_together = [['run', 'ordine']]

    def __str__(self):
        return f"{self.run.scenario} #{self.ordine}"

    @classmethod
    def from_row(cls, run, ordine, row):
        row = jsonable(row)
        return cls(
            run=run,
            ordine=ordine,
            params=row,
            spy_rate=row.get("spy_mispredict_rate", row.get("mispredict_rate")),
            shadow_rate=row.get("shadow_mispredict_rate"),
            classification=row.get("classification") or "",
        )


class SearchCampaign(models.Model):
    run = models.OneToOneField(ScenarioRun, on_delete=models.CASCADE, related_name='campaign')
    mode = models.CharField(max_length=16)
    victim_depth = models.PositiveSmallIntegerField()
    trials = models.PositiveBigIntegerField()
    successes = models.PositiveBigIntegerField()
    exponent = models.IntegerField(blank=True, null=True)
    chernoff_log_bound = models.FloatField(blank=True, null=True)
    lower_bound_only = models.BooleanField(default=False)

    class Meta:
        verbose_name = "Campagna di ricerca"
        verbose_name_plural = "Campagne di ricerca"

    def __str__(self):
        return f"{self.mode} profondità {self.victim_depth}: {self.successes}/{self.trials}"

    @property
    def success_rate(self):
        return self.successes / self.trials if self.trials else None

    @classmethod
    def from_row(cls, run, row):
        row = jsonable(row)
        return cls(
            run=run,
            mode=row["mode"],
            victim_depth=row["victim_depth"],
            trials=row["trials"],
            successes=row["successes"],
            exponent=row.get("estimated_exponent"),
            chernoff_log_bound=row.get("chernoff_log_bound"),
            lower_bound_only=bool(row.get("lower_bound_only")),
        )
