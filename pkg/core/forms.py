"""
Validation of scenario configuration documents.

A document is one JSON object::

    {"scenario": "bit-effect", "preset": "firestorm", "seed": 7,
     "tage": {...}, "bhr": {...}, "params": {...}}

Every section is checked by its own form; unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from django import forms

from .attack import DETECTION_ROUNDS, TrainingMode
from .bhr import IMMEDIATE_BITS, MODELED_ATTRIBUTE_BITS, AttributeMaskSet, BhrConfig, BranchKind, HistoryModel
from .fields import BitRangeFormField, IntegerListFormField, format_bit_ranges
from .presets import PRESETS, Microarch, get_preset
from .scenarios import DEFAULT_SWITCHES, EXECUTIONS_PER_PATH, SCENARIOS, CROSSINGS
from .tage import MASK64, Isolation, TageConfig, geometric_lengths

TOP_LEVEL_KEYS = {"scenario", "preset", "seed", "tage", "bhr", "params"}
ATTRIBUTE_CHOICES = [(name, name) for name in ("cond_pc", "cond_imm", "indir_pc", "indir_target")]
MODE_CHOICES = [(mode.value, mode.value) for mode in TrainingMode]
ISOLATION_CHOICES = [(mode.value, mode.value) for mode in Isolation]
BUFFER_CHOICES = [("none", "none")] + [(kind.value, kind.value) for kind in BranchKind]


class ConfigForm(forms.Form):
    scenario = forms.ChoiceField(choices=[(name, name) for name in SCENARIOS])
    preset = forms.ChoiceField(choices=[(name, name) for name in PRESETS] + [("custom", "custom")], required=False)
    seed = forms.IntegerField(min_value=0, max_value=MASK64, required=False)


class TageOverridesForm(forms.Form):
    tables = forms.IntegerField(min_value=2, max_value=16, required=False)
    sets_log = forms.IntegerField(min_value=1, max_value=24, required=False)
    ways_log = forms.IntegerField(min_value=0, max_value=4, required=False)
    tag_bits = forms.IntegerField(min_value=1, max_value=32, required=False)
    counter_bits = forms.IntegerField(min_value=2, max_value=7, required=False)
    useful_bits = forms.IntegerField(min_value=1, max_value=7, required=False)
    history_lengths = IntegerListFormField(min_value=1, required=False)
    alloc_ratio = forms.IntegerField(min_value=1, required=False)
    decay_period = forms.IntegerField(min_value=1, required=False)
    isolation = forms.ChoiceField(choices=ISOLATION_CHOICES, required=False)
    hash_seed = forms.IntegerField(min_value=0, max_value=MASK64, required=False)
    base_log = forms.IntegerField(min_value=1, max_value=20, required=False)

    def clean_isolation(self):
        value = self.cleaned_data["isolation"]
        return Isolation(value) if value else None


class BhrOverridesForm(forms.Form):
    history_length = forms.IntegerField(min_value=1, max_value=1024, required=False)
    cond_pc_bits = BitRangeFormField(upper=MODELED_ATTRIBUTE_BITS, required=False)
    cond_imm_bits = BitRangeFormField(upper=IMMEDIATE_BITS, required=False)
    indir_pc_bits = BitRangeFormField(upper=MODELED_ATTRIBUTE_BITS, required=False)
    indir_target_bits = BitRangeFormField(upper=MODELED_ATTRIBUTE_BITS, required=False)
    anomalous_cond_pc_bits = BitRangeFormField(upper=MODELED_ATTRIBUTE_BITS, required=False)
    anomalous_cond_imm_bits = BitRangeFormField(upper=IMMEDIATE_BITS, required=False)
    not_taken_updates = forms.BooleanField(required=False)


# scenario parameters


class TwoPathParamsForm(forms.Form):
    switches = forms.IntegerField(min_value=64, initial=DEFAULT_SWITCHES, required=False)


class BitEffectParamsForm(TwoPathParamsForm):
    attribute = forms.ChoiceField(choices=ATTRIBUTE_CHOICES)
    bits = BitRangeFormField(required=False)
    h = forms.IntegerField(min_value=0, initial=0, required=False)

    def clean(self):
        cleaned = super().clean()
        if not cleaned.get("bits") and cleaned.get("attribute"):
            cleaned["bits"] = range(0, IMMEDIATE_BITS) if cleaned["attribute"] == "cond_imm" else range(2, 31)
        return cleaned


class DistanceSweepParamsForm(TwoPathParamsForm):
    attribute = forms.ChoiceField(choices=ATTRIBUTE_CHOICES)
    bits = BitRangeFormField()
    h_values = BitRangeFormField(upper=4096)


class UpdatePolicyParamsForm(TwoPathParamsForm):
    attribute = forms.ChoiceField(choices=ATTRIBUTE_CHOICES, initial="cond_imm", required=False)
    shift = forms.IntegerField(min_value=1, max_value=8, initial=1, required=False)
    bits = BitRangeFormField(required=False)

    def clean(self):
        cleaned = super().clean()
        cleaned["attribute"] = cleaned.get("attribute") or "cond_imm"
        shift = cleaned.get("shift") or 1
        cleaned["shift"] = shift
        if not cleaned.get("bits"):
            top = IMMEDIATE_BITS if cleaned["attribute"] == "cond_imm" else 31
            cleaned["bits"] = range(0 if cleaned["attribute"] == "cond_imm" else 2, top - shift)
        return cleaned


class OutcomeEffectParamsForm(TwoPathParamsForm):
    offsets = BitRangeFormField(required=False)
    control = forms.BooleanField(required=False)

    def clean_offsets(self):
        return self.cleaned_data["offsets"] or range(32, 47)


class CounterProbeParamsForm(forms.Form):
    periods = IntegerListFormField(min_value=1, required=False)
    blocks = forms.IntegerField(min_value=1, initial=64, required=False)

    def clean_periods(self):
        return self.cleaned_data["periods"] or (8, 16, 32, 64)


class SearchParamsForm(forms.Form):
    mode = forms.ChoiceField(choices=MODE_CHOICES)
    victim_depth = forms.IntegerField(min_value=1)
    trials = forms.IntegerField(min_value=0)
    rounds = forms.IntegerField(min_value=0, initial=64, required=False)
    train_slide = forms.BooleanField(required=False)
    full_reset = forms.BooleanField(required=False)

    def clean_mode(self):
        return TrainingMode(self.cleaned_data["mode"])


class LpcCompareParamsForm(forms.Form):
    depths = IntegerListFormField(min_value=1)
    trials = forms.IntegerField(min_value=1)
    rounds = forms.IntegerField(min_value=0, initial=64, required=False)
    train_slide = forms.BooleanField(required=False)
    full_reset = forms.BooleanField(required=False)


class IsolationParamsForm(forms.Form):
    crossing = forms.ChoiceField(choices=[(name, name) for name in CROSSINGS])
    isolation = forms.ChoiceField(choices=ISOLATION_CHOICES, required=False)
    cycles = forms.IntegerField(min_value=1, initial=64, required=False)
    rounds = forms.IntegerField(min_value=1, initial=EXECUTIONS_PER_PATH, required=False)

    def clean_isolation(self):
        value = self.cleaned_data["isolation"]
        return Isolation(value) if value else None


class AliasDetectParamsForm(forms.Form):
    pairs = forms.IntegerField(min_value=1, initial=8, required=False)
    rounds = forms.IntegerField(min_value=1, initial=DETECTION_ROUNDS, required=False)


class EstimateParamsForm(forms.Form):
    observations = forms.JSONField(required=False)
    synthetic_exponents = IntegerListFormField(min_value=0, required=False)
    synthetic_trials = forms.IntegerField(min_value=1, required=False)

    def clean_observations(self):
        value = self.cleaned_data["observations"]
        if value is None:
            return None
        if not isinstance(value, list) or not all(
            isinstance(item, list) and len(item) == 2 and all(isinstance(x, int) and x >= 0 for x in item)
            for item in value
        ):
            raise forms.ValidationError("observations must be a list of [trials, successes] pairs")
        return [tuple(item) for item in value]


class BranchTypesParamsForm(TwoPathParamsForm):
    buffer_kind = forms.ChoiceField(choices=BUFFER_CHOICES)
    bits = BitRangeFormField(required=False)

    def clean_buffer_kind(self):
        value = self.cleaned_data["buffer_kind"]
        return None if value == "none" else BranchKind(value)

    def clean_bits(self):
        return self.cleaned_data["bits"] or range(2, 24)


class HighBitsParamsForm(TwoPathParamsForm):
    bits = BitRangeFormField(required=False)

    def clean_bits(self):
        return self.cleaned_data["bits"] or range(26, 47)


PARAM_FORMS = {
    "bit-effect": BitEffectParamsForm,
    "distance-sweep": DistanceSweepParamsForm,
    "update-policy": UpdatePolicyParamsForm,
    "outcome-effect": OutcomeEffectParamsForm,
    "counter-probe": CounterProbeParamsForm,
    "search": SearchParamsForm,
    "lpc-compare": LpcCompareParamsForm,
    "isolation": IsolationParamsForm,
    "alias-detect": AliasDetectParamsForm,
    "estimate": EstimateParamsForm,
    "branch-types": BranchTypesParamsForm,
    "high-bits": HighBitsParamsForm,
}

# forms.JSONField expects encoded text
_JSON_FIELDS = {"observations"}


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    microarch: Microarch
    seed: int | None
    params: dict
    document: dict


def _section(document: dict, key: str) -> dict:
    section = document.get(key) or {}
    if not isinstance(section, dict):
        raise forms.ValidationError(f"'{key}' must be an object")
    return section


def _validate(form_class, data: dict, label: str) -> dict:
    """Run ``form_class`` on ``data``; returns only the keys given or defaulted by ``clean``."""
    unknown = sorted(set(data) - set(form_class.base_fields))
    if unknown:
        raise forms.ValidationError(f"Unknown {label} keys: {', '.join(unknown)}")
    bound = {k: json.dumps(v) if k in _JSON_FIELDS else v for k, v in data.items()}
    form = form_class(data=bound)
    if not form.is_valid():
        messages = "; ".join(f"{field}: {' '.join(errors)}" for field, errors in form.errors.items())
        raise forms.ValidationError(f"Invalid {label}: {messages}")
    return {
        k: v for k, v in form.cleaned_data.items()
        if k in data or (v is not None and v != "" and not isinstance(form.fields.get(k), forms.BooleanField))
    }


def build_microarch(preset: str, tage_overrides: dict, bhr_overrides: dict) -> Microarch:
    mask_keys = {f.name for f in AttributeMaskSet.__dataclass_fields__.values()}
    mask_changes = {k: v for k, v in bhr_overrides.items() if k in mask_keys}
    config_changes = {k: v for k, v in bhr_overrides.items() if k not in mask_keys}
    try:
        if preset == "custom":
            missing = sorted(
                {"history_length", "cond_pc_bits", "cond_imm_bits", "indir_pc_bits", "indir_target_bits"} - set(bhr_overrides)
                | {"tables", "sets_log", "tag_bits"} - set(tage_overrides)
            )
            if missing:
                raise forms.ValidationError(f"A custom preset needs explicit {', '.join(missing)}")
            history = HistoryModel(AttributeMaskSet(**mask_changes), BhrConfig(**config_changes))
            tage_fields = dict(tage_overrides)
            tage_fields.setdefault(
                "history_lengths", geometric_lengths(tage_fields["tables"], min(5, history.width - 1), history.width)
            )
            return Microarch("custom", history, TageConfig(**tage_fields))

        base = get_preset(preset)
        history = base.history
        if mask_changes or config_changes:
            history = HistoryModel(replace(history.masks, **mask_changes), replace(history.config, **config_changes))
        changes = dict(tage_overrides)
        lengths = base.tage.history_lengths
        if "history_lengths" not in changes and ("tables" in changes or lengths[-1] != history.width):
            tables = changes.get("tables", base.tage.tables)
            changes["history_lengths"] = geometric_lengths(tables, min(lengths[0], history.width - 1), history.width)
        return Microarch(preset, history, replace(base.tage, **changes))
    except (TypeError, ValueError) as exc:
        raise forms.ValidationError(str(exc)) from exc


def parse_config(document: dict, scenario: str | None = None) -> RunConfig:
    """Validate a configuration document; raises ``forms.ValidationError``."""
    if not isinstance(document, dict):
        raise forms.ValidationError("The configuration must be a JSON object")
    document = dict(document)
    if scenario is not None:
        given = document.setdefault("scenario", scenario)
        if given != scenario:
            raise forms.ValidationError(f"Config is for scenario '{given}', not '{scenario}'")
    unknown = sorted(set(document) - TOP_LEVEL_KEYS)
    if unknown:
        raise forms.ValidationError(f"Unknown keys: {', '.join(unknown)}")

    top = _validate(ConfigForm, {k: document[k] for k in ("scenario", "preset", "seed") if k in document}, "config")
    name = top["scenario"]
    preset = top.get("preset") or "firestorm"
    tage_overrides = _validate(TageOverridesForm, _section(document, "tage"), "tage")
    bhr_overrides = _validate(BhrOverridesForm, _section(document, "bhr"), "bhr")
    tage_overrides = {k: v for k, v in tage_overrides.items() if v is not None}
    bhr_overrides = {k: v for k, v in bhr_overrides.items() if v is not None}
    microarch = build_microarch(preset, tage_overrides, bhr_overrides)
    params = _validate(PARAM_FORMS[name], _section(document, "params"), f"{name} params")
    params = {k: v for k, v in params.items() if v is not None}
    return RunConfig(name, microarch, top.get("seed"), params, document)


def describe(microarch: Microarch) -> dict:
    """JSON-ready description of a microarchitecture, stored with saved runs."""
    masks = microarch.history.masks
    return {
        "name": microarch.name,
        "bhr": {
            "history_length": microarch.history.history_length,
            "cond_pc_bits": format_bit_ranges(masks.cond_pc_bits),
            "cond_imm_bits": format_bit_ranges(masks.cond_imm_bits),
            "indir_pc_bits": format_bit_ranges(masks.indir_pc_bits),
            "indir_target_bits": format_bit_ranges(masks.indir_target_bits),
            "anomalous_cond_pc_bits": format_bit_ranges(masks.anomalous_cond_pc_bits),
            "anomalous_cond_imm_bits": format_bit_ranges(masks.anomalous_cond_imm_bits),
            "not_taken_updates": microarch.history.config.not_taken_updates,
        },
        "tage": microarch.tage.to_dict(),
    }
