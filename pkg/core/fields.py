from django import forms
from django.db import models
import re

from .bhr import ADDRESS_BITS


_RANGE_RE = re.compile(r'^(?P<start>\d+)(?:\s*-\s*(?P<end>\d+))?$')


def parse_bit_ranges(raw, *, upper=ADDRESS_BITS):
    """Converte "2-24,25-30" (o una lista di interi) in un frozenset di bit"""
    if raw is None:
        return frozenset()
    if isinstance(raw, (set, frozenset, list, tuple)):
        bits = set()
        for item in raw:
            if isinstance(item, bool) or not isinstance(item, int):
                raise ValueError(f"'{item}' non è un numero di bit")
            bits.add(item)
    else:
        bits = set()
        for part in str(raw).split(','):
            part = part.strip()
            if not part:
                continue
            match = _RANGE_RE.match(part)
            if not match:
                raise ValueError(f"Intervallo di bit non valido: '{part}' (es. 2-24,25-30)")
            start = int(match.group('start'))
            end = int(match.group('end') or start)
            if end < start:
                raise ValueError(f"Intervallo decrescente: '{part}'")
            bits.update(range(start, end + 1))
    out_of_range = sorted(b for b in bits if not 0 <= b < upper)
    if out_of_range:
        raise ValueError(f"Bit fuori da [0, {upper}): {out_of_range}")
    return frozenset(bits)


def format_bit_ranges(bits):
    """Formatta un insieme di bit come intervalli compatti, es. "2-5,25-30" """
    if not bits:
        return ""
    ordered = sorted(bits)
    ranges = []
    start = prev = ordered[0]
    for bit in ordered[1:]:
        if bit == prev + 1:
            prev = bit
            continue
        ranges.append((start, prev))
        start = prev = bit
    ranges.append((start, prev))
    return ",".join(f"{a}-{b}" if a != b else f"{a}" for a, b in ranges)


class BitSet(frozenset):
    """frozenset di bit che si stampa come intervalli"""

    def __str__(self):
        return format_bit_ranges(self)

    def __repr__(self):
        return f"BitSet({format_bit_ranges(self)!r})"


class BitRangeWidget(forms.TextInput):
    """Widget che mostra e accetta intervalli di bit"""

    def __init__(self, attrs=None):
        default_attrs = {'placeholder': '2-24,25-30', 'style': 'width: 200px;'}
        if attrs:
            default_attrs.update(attrs)
        super().__init__(attrs=default_attrs)

    def format_value(self, value):
        if value is None or value == '':
            return ''
        if isinstance(value, (set, frozenset)):
            return format_bit_ranges(value)
        return value


class BitRangeFormField(forms.Field):
    """Form field che valida intervalli di bit (stringa "2-24,25-30" o lista di interi)"""
    widget = BitRangeWidget

    def __init__(self, *, upper=ADDRESS_BITS, **kwargs):
        self.upper = upper
        # CharField.formfield passa anche opzioni di testo
        for option in ('max_length', 'min_length', 'empty_value'):
            kwargs.pop(option, None)
        super().__init__(**kwargs)

    def to_python(self, value):
        if value in (None, '', []):
            return None
        try:
            return BitSet(parse_bit_ranges(value, upper=self.upper))
        except ValueError as exc:
            raise forms.ValidationError(str(exc)) from exc

    def prepare_value(self, value):
        if isinstance(value, (set, frozenset)):
            return format_bit_ranges(value)
        return value


class IntegerListFormField(forms.Field):
    """Lista di interi, da JSON (lista) o da stringa "8,16,32" """

    def __init__(self, *, min_value=None, **kwargs):
        self.min_value = min_value
        super().__init__(**kwargs)

    def to_python(self, value):
        if value in (None, '', []):
            return None
        items = value.split(',') if isinstance(value, str) else value
        if not isinstance(items, (list, tuple)):
            raise forms.ValidationError("Attesa una lista di interi")
        result = []
        for item in items:
            if isinstance(item, bool):
                raise forms.ValidationError(f"'{item}' non è un intero")
            try:
                number = int(str(item).strip())
            except ValueError:
                raise forms.ValidationError(f"'{item}' non è un intero") from None
            if self.min_value is not None and number < self.min_value:
                raise forms.ValidationError(f"{number} è minore di {self.min_value}")
            result.append(number)
        return tuple(result)


class BitSetField(models.CharField):
    """
    Insieme di bit salvato come testo "2-24,25-30".

    Internamente è un CharField; in Python il valore è sempre un BitSet.
    """

    def __init__(self, *args, **kwargs):
        kwargs.setdefault('max_length', 255)
        super().__init__(*args, **kwargs)

    def formfield(self, **kwargs):
        defaults = {'form_class': BitRangeFormField}
        defaults.update(kwargs)
        return super().formfield(**defaults)

    def from_db_value(self, value, expression, connection):
        """Converte il valore dal DB in BitSet"""
        if value is None:
            return None
        return BitSet(parse_bit_ranges(value))

    def to_python(self, value):
        if value is None or isinstance(value, BitSet):
            return value
        return BitSet(parse_bit_ranges(value))

    def get_prep_value(self, value):
        if value is None:
            return None
        if isinstance(value, (set, frozenset, list, tuple)):
            return format_bit_ranges(value)
        return str(value)

    def value_to_string(self, obj):
        """Per serializzazione"""
        return format_bit_ranges(self.value_from_object(obj) or ())
