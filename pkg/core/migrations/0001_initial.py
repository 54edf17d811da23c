# Generated by Django 6.0.1 on 2026-10-18 10:12

import core.fields
import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ScenarioRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('scenario', models.CharField(max_length=32)),
                ('preset', models.CharField(max_length=32)),
                ('seed', models.DecimalField(decimal_places=0, max_digits=20)),
                ('config', models.JSONField(blank=True, default=dict)),
                ('microarch', models.JSONField(blank=True, default=dict)),
                ('exit_code', models.PositiveSmallIntegerField(default=0)),
                ('effect_bits', core.fields.BitSetField(blank=True, help_text='Bit che hanno modificato la storia (solo scenari a due percorsi)', max_length=255, null=True)),
                ('created', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'verbose_name': 'Esecuzione',
                'verbose_name_plural': 'Esecuzioni',
                'ordering': ['-created'],
            },
        ),
        migrations.CreateModel(
            name='SearchCampaign',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('mode', models.CharField(max_length=16)),
                ('victim_depth', models.PositiveSmallIntegerField()),
                ('trials', models.PositiveBigIntegerField()),
                ('successes', models.PositiveBigIntegerField()),
                ('exponent', models.IntegerField(blank=True, null=True)),
                ('chernoff_log_bound', models.FloatField(blank=True, null=True)),
                ('lower_bound_only', models.BooleanField(default=False)),
                ('run', models.OneToOneField(on_delete=django.db.models.deletion.CASCADE, related_name='campaign', to='core.scenariorun')),
            ],
            options={
                'verbose_name': 'Campagna di ricerca',
                'verbose_name_plural': 'Campagne di ricerca',
            },
        ),
        migrations.CreateModel(
            name='ResultRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('ordine', models.PositiveIntegerField()),
                ('params', models.JSONField(blank=True, default=dict)),
                ('spy_rate', models.FloatField(blank=True, null=True)),
                ('shadow_rate', models.FloatField(blank=True, null=True)),
                ('classification', models.CharField(blank=True, max_length=16)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='records', to='core.scenariorun')),
            ],
            options={
                'verbose_name': 'Riga risultato',
                'verbose_name_plural': 'Righe risultato',
                'ordering': ['run', 'ordine'],
                'unique_together': {('run', 'ordine')},
            },
        ),
    ]
