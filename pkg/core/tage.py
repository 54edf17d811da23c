"""
Configurable TAGE predictor: a bimodal base plus T partially tagged components
indexed by hashes of the PC and geometrically longer BHR suffixes.

Component ``i`` is numbered 1..T (component 0 is the base); arrays are stored
zero-based as ``[i - 1, set, way]``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from functools import lru_cache

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
PC_HASH_MASK = 0xFFFF_FFFC  # PC bits 2..31
GOLDEN64 = 0x9E37_79B9_7F4A_7C15


class ContractViolation(ValueError):
    """The predict/update protocol was not followed."""


class Isolation(enum.Enum):
    OFF = "off"
    PRIVILEGE_TAG = "privilege"
    PROCESS_TAG = "process"


class PrivilegeLevel(enum.IntEnum):
    EL0 = 0
    EL1 = 1


@dataclass(frozen=True)
class SecurityContext:
    privilege_level: PrivilegeLevel = PrivilegeLevel.EL0
    process_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "privilege_level", PrivilegeLevel(self.privilege_level))
        if self.process_id < 0:
            raise ValueError("process_id must be non-negative")

    def security_tag(self, isolation: Isolation) -> int:
        if isolation is Isolation.OFF:
            return 0
        if isolation is Isolation.PRIVILEGE_TAG:
            return int(self.privilege_level)
        return int(self.privilege_level) | (self.process_id << 1)

    def __str__(self):
        return f"EL{int(self.privilege_level)}/pid{self.process_id}"


USER_CONTEXT = SecurityContext()
KERNEL_CONTEXT = SecurityContext(PrivilegeLevel.EL1)


def geometric_lengths(tables: int, shortest: int, longest: int) -> tuple[int, ...]:
    """Strictly increasing history lengths from ``shortest`` to ``longest``."""
    if tables < 2:
        raise ValueError("At least two tagged components are required")
    if not 1 <= shortest < longest:
        raise ValueError("History lengths must satisfy 1 <= shortest < longest")
    ratio = (longest / shortest) ** (1 / (tables - 1))
    lengths = []
    for k in range(tables):
        length = round(shortest * ratio**k)
        if lengths and length <= lengths[-1]:
            length = lengths[-1] + 1
        lengths.append(length)
    lengths[-1] = longest
    if any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise ValueError(f"Cannot fit {tables} increasing lengths in [{shortest}, {longest}]")
    return tuple(lengths)


@dataclass(frozen=True)
class TageConfig:
    tables: int
    sets_log: int
    tag_bits: int
    history_lengths: tuple[int, ...]
    ways_log: int = 0
    counter_bits: int = 3
    useful_bits: int = 2
    alloc_ratio: int = 2
    decay_period: int = 1 << 18
    isolation: Isolation = Isolation.OFF
    hash_seed: int = 0
    base_log: int = 12

    def __post_init__(self):
        object.__setattr__(self, "history_lengths", tuple(int(x) for x in self.history_lengths))
        object.__setattr__(self, "isolation", Isolation(self.isolation))
        if self.tables < 2:
            raise ValueError("tables must be >= 2")
        if len(self.history_lengths) != self.tables:
            raise ValueError(f"Expected {self.tables} history lengths, got {len(self.history_lengths)}")
        if self.history_lengths[0] < 1 or any(
            b <= a for a, b in zip(self.history_lengths, self.history_lengths[1:])
        ):
            raise ValueError(f"History lengths must be positive and strictly increasing: {self.history_lengths}")
        if not 1 <= self.sets_log <= 24 or not 1 <= self.tag_bits <= 32:
            raise ValueError("sets_log must be in [1, 24] and tag_bits in [1, 32]")
        if not 0 <= self.ways_log <= 4:
            raise ValueError("ways_log must be in [0, 4]")
        if not 2 <= self.counter_bits <= 7 or not 1 <= self.useful_bits <= 7:
            raise ValueError("counter_bits must be in [2, 7] and useful_bits in [1, 7]")
        if self.alloc_ratio < 1 or self.decay_period < 1:
            raise ValueError("alloc_ratio and decay_period must be positive")
        if not 0 <= self.hash_seed <= MASK64:
            raise ValueError("hash_seed must be an unsigned 64-bit value")
        if not 1 <= self.base_log <= 20:
            raise ValueError("base_log must be in [1, 20]")

    @classmethod
    def geometric(cls, tables: int, width: int, shortest: int = 5, **kwargs) -> "TageConfig":
        return cls(tables=tables, history_lengths=geometric_lengths(tables, shortest, width), **kwargs)

    @property
    def sets(self) -> int:
        return 1 << self.sets_log

    @property
    def ways(self) -> int:
        return 1 << self.ways_log

    @property
    def alias_probability(self) -> Fraction:
        """Probability that two random (PC, BHR) pairs share a set and tag in one component."""
        return Fraction(1, 1 << (self.sets_log + self.tag_bits))

    @property
    def weak_taken(self) -> int:
        return 1 << (self.counter_bits - 1)

    @property
    def counter_max(self) -> int:
        return (1 << self.counter_bits) - 1

    @property
    def useful_max(self) -> int:
        return (1 << self.useful_bits) - 1

    def to_dict(self) -> dict:
        data = asdict(self)
        data["history_lengths"] = list(self.history_lengths)
        data["isolation"] = self.isolation.value
        return data

    def with_changes(self, **changes) -> "TageConfig":
        return replace(self, **changes)


@lru_cache(maxsize=64)
def _table_seeds(hash_seed: int, tables: int) -> tuple[int, ...]:
    state = np.random.SeedSequence(hash_seed).generate_state(tables, dtype=np.uint64)
    return tuple(int(x) for x in state)


def _finalize(z: int) -> int:
    z = (z + GOLDEN64) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB) & MASK64
    return z ^ (z >> 31)


def fold_history(bhr: int, length: int, width: int = 64) -> int:
    """XOR-fold the low ``length`` BHR bits into ``width`` bits."""
    suffix = bhr & ((1 << length) - 1)
    mask = (1 << width) - 1
    folded = 0
    while suffix:
        folded ^= suffix & mask
        suffix >>= width
    return folded


def component_hash(i: int, pc: int, bhr: int, cfg: TageConfig) -> tuple[int, int]:
    """
    (set, tag) for component ``i`` (1..T). PC bits at or above 32 do not participate.

    The set index XORs a PC hash with the history suffix folded to ``sets_log``
    bits, so two histories that differ in a single covered bit never share a set.
    """
    if not 1 <= i <= cfg.tables:
        raise ValueError(f"Component {i} outside 1..{cfg.tables}")
    length = cfg.history_lengths[i - 1]
    pc_key = (((pc & PC_HASH_MASK) >> 2) * GOLDEN64) & MASK64
    table_seed = _table_seeds(cfg.hash_seed, cfg.tables)[i - 1]
    set_index = _finalize(pc_key ^ table_seed) ^ fold_history(int(bhr), length, cfg.sets_log)
    z = _finalize(fold_history(int(bhr), length) ^ pc_key ^ table_seed)
    return set_index & (cfg.sets - 1), (z >> 32) & ((1 << cfg.tag_bits) - 1)


@dataclass(frozen=True)
class Prediction:
    direction: bool
    provider: int
    alt_direction: bool


@dataclass
class _Pending:
    key: tuple
    keys: tuple[tuple[int, int], ...]
    sec_tag: int
    provider_way: int | None
    alt: tuple[int, int] | None
    prediction: Prediction


@dataclass
class _Lookup:
    keys: tuple[tuple[int, int], ...]
    sec_tag: int
    hits: list[tuple[int, int]] = field(default_factory=list)


def _histogram(counters: np.ndarray, counter_max: int) -> dict[str, int]:
    counts = np.bincount(counters.astype(np.int64).ravel(), minlength=counter_max + 1)
    return {f"counter_{value}": int(count) for value, count in enumerate(counts[: counter_max + 1])}


class TagePredictor:
    """
    Deterministic given ``(config, seed)``. Every ``update`` must follow a
    ``predict`` on the same ``(pc, bhr, ctx)``.

    Under isolation every security domain gets its own bimodal table, so no
    component, tagged or base, is shared across domains.
    """

    def __init__(self, config: TageConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self._key_cache: dict[tuple[int, int], tuple[tuple[int, int], ...]] = {}
        self.reset()

    def reset(self):
        """Clear the tables. The allocation generator keeps its position."""
        cfg = self.config
        shape = (cfg.tables, cfg.sets, cfg.ways)
        self.valid = np.zeros(shape, dtype=bool)
        self.tags = np.zeros(shape, dtype=np.int64)
        self.counters = np.zeros(shape, dtype=np.int16)
        self.useful = np.zeros(shape, dtype=np.int16)
        self.sec_tags = np.zeros(shape, dtype=np.int64)
        self.bases: dict[int, np.ndarray] = {}
        self.updates = 0
        self._pending: _Pending | None = None

    def spawn(self, seed: int) -> "TagePredictor":
        """Fresh predictor with the same configuration."""
        return TagePredictor(self.config, seed)

    # hashing

    def component_hash(self, i: int, pc: int, bhr: int) -> tuple[int, int]:
        return self._keys(pc, int(bhr))[i - 1]

    def _keys(self, pc: int, bhr: int) -> tuple[tuple[int, int], ...]:
        cache_key = (pc & PC_HASH_MASK, bhr)
        keys = self._key_cache.get(cache_key)
        if keys is None:
            if len(self._key_cache) > 1 << 16:
                self._key_cache.clear()
            keys = tuple(component_hash(i, pc, bhr, self.config) for i in range(1, self.config.tables + 1))
            self._key_cache[cache_key] = keys
        return keys

    def base_index(self, pc: int) -> int:
        return ((pc & PC_HASH_MASK) >> 2) & ((1 << self.config.base_log) - 1)

    def base_table(self, ctx: SecurityContext = USER_CONTEXT) -> np.ndarray:
        """Bimodal counters of ``ctx``'s security domain."""
        sec_tag = ctx.security_tag(self.config.isolation)
        table = self.bases.get(sec_tag)
        if table is None:
            table = self.bases[sec_tag] = np.full(1 << self.config.base_log, 2, dtype=np.int8)
        return table

    # lookup

    def _match(self, i: int, set_index: int, tag: int, sec_tag: int) -> int | None:
        t = i - 1
        check_sec = self.config.isolation is not Isolation.OFF
        for way in range(self.config.ways):
            if self.valid[t, set_index, way] and self.tags[t, set_index, way] == tag:
                if not check_sec or self.sec_tags[t, set_index, way] == sec_tag:
                    return way
        return None

    def _lookup(self, pc: int, bhr: int, ctx: SecurityContext) -> _Lookup:
        lookup = _Lookup(self._keys(pc, bhr), ctx.security_tag(self.config.isolation))
        for i in range(self.config.tables, 0, -1):
            set_index, tag = lookup.keys[i - 1]
            way = self._match(i, set_index, tag, lookup.sec_tag)
            if way is not None:
                lookup.hits.append((i, way))
                if len(lookup.hits) == 2:
                    break
        return lookup

    def _direction(self, i: int, way: int, lookup: _Lookup) -> bool:
        set_index = lookup.keys[i - 1][0]
        return bool(self.counters[i - 1, set_index, way] >= self.config.weak_taken)

    def _resolve(self, pc: int, bhr: int, ctx: SecurityContext) -> tuple[_Lookup, Prediction]:
        lookup = self._lookup(pc, bhr, ctx)
        base_direction = bool(self.base_table(ctx)[self.base_index(pc)] >= 2)
        if not lookup.hits:
            return lookup, Prediction(base_direction, 0, base_direction)
        provider, way = lookup.hits[0]
        direction = self._direction(provider, way, lookup)
        if len(lookup.hits) > 1:
            alt_direction = self._direction(*lookup.hits[1], lookup)
        else:
            alt_direction = base_direction
        return lookup, Prediction(direction, provider, alt_direction)

    def peek(self, pc: int, bhr: int, ctx: SecurityContext = USER_CONTEXT) -> Prediction:
        """Prediction without arming an update."""
        return self._resolve(pc, int(bhr), ctx)[1]

    def provider_of(self, pc: int, bhr: int, ctx: SecurityContext = USER_CONTEXT) -> int:
        return self.peek(pc, bhr, ctx).provider

    def predict(self, pc: int, bhr: int, ctx: SecurityContext = USER_CONTEXT) -> Prediction:
        bhr = int(bhr)
        lookup, prediction = self._resolve(pc, bhr, ctx)
        hits = lookup.hits
        self._pending = _Pending(
            key=(pc, bhr, ctx),
            keys=lookup.keys,
            sec_tag=lookup.sec_tag,
            provider_way=hits[0][1] if hits else None,
            alt=hits[1] if len(hits) > 1 else None,
            prediction=prediction,
        )
        return prediction

    # training

    def update(self, pc: int, bhr: int, taken: bool, ctx: SecurityContext = USER_CONTEXT):
        """
        Train the provider, pull a not-confident alternate toward the outcome and,
        on a provider misprediction below T, allocate a longer entry. A provider
        with a zero useful counter that is superseded this way is released.
        """
        bhr = int(bhr)
        pending = self._pending
        if pending is None or pending.key != (pc, bhr, ctx):
            raise ContractViolation(f"update({pc:#x}) without a matching predict")
        self._pending = None
        cfg = self.config
        prediction = pending.prediction
        provider = prediction.provider
        replaceable = False

        if provider == 0:
            base, b = self.base_table(ctx), self.base_index(pc)
            base[b] = min(base[b] + 1, 3) if taken else max(base[b] - 1, 0)
        else:
            t, set_index, way = provider - 1, pending.keys[provider - 1][0], pending.provider_way
            u = int(self.useful[t, set_index, way])
            replaceable = u == 0
            ctr = int(self.counters[t, set_index, way])
            self.counters[t, set_index, way] = min(ctr + 1, cfg.counter_max) if taken else max(ctr - 1, 0)
            if prediction.direction != prediction.alt_direction:
                if prediction.direction == taken:
                    self.useful[t, set_index, way] = min(u + 1, cfg.useful_max)
                else:
                    self.useful[t, set_index, way] = max(u - 1, 0)
            self._train_alternate(pending, pc, ctx, taken)

        if prediction.direction != taken and provider < cfg.tables:
            allocated = self._allocate(provider, pending.keys, taken, pending.sec_tag, self.rng)
            if allocated is not None and replaceable:
                self.valid[t, set_index, way] = False

        self.updates += 1
        if self.updates % cfg.decay_period == 0:
            self.useful >>= 1
            logger.debug(f"Useful counters halved after {self.updates} updates")

    def _train_alternate(self, pending: _Pending, pc: int, ctx: SecurityContext, taken: bool):
        # confident tagged alternates keep their direction
        cfg = self.config
        if pending.alt is None:
            base, b = self.base_table(ctx), self.base_index(pc)
            if (base[b] >= 2) != taken:
                base[b] = 2 if taken else 1
            return
        i, way = pending.alt
        set_index = pending.keys[i - 1][0]
        ctr = int(self.counters[i - 1, set_index, way])
        if ctr in (cfg.weak_taken - 1, cfg.weak_taken) and (ctr >= cfg.weak_taken) != taken:
            self.counters[i - 1, set_index, way] = cfg.weak_taken if taken else cfg.weak_taken - 1

    def _free_way(self, i: int, set_index: int) -> int | None:
        """First invalid way, else the first way whose useful counter is zero."""
        t = i - 1
        for candidates in (~self.valid[t, set_index], self.useful[t, set_index] == 0):
            ways = np.flatnonzero(candidates)
            if ways.size:
                return int(ways[0])
        return None

    def _allocate(self, provider, keys, taken, sec_tag, rng) -> int | None:
        cfg = self.config
        eligible = []
        for j in range(provider + 1, cfg.tables + 1):
            way = self._free_way(j, keys[j - 1][0])
            if way is not None:
                eligible.append((j, way))
        if not eligible:
            for j in range(provider + 1, cfg.tables + 1):
                row = self.useful[j - 1, keys[j - 1][0]]
                np.maximum(row - 1, 0, out=row)
            return None
        weights = np.array([float(cfg.alloc_ratio) ** (cfg.tables - j) for j, _ in eligible])
        choice = int(rng.choice(len(eligible), p=weights / weights.sum()))
        j, way = eligible[choice]
        set_index, tag = keys[j - 1]
        t = j - 1
        self.valid[t, set_index, way] = True
        self.tags[t, set_index, way] = tag
        self.counters[t, set_index, way] = cfg.weak_taken if taken else cfg.weak_taken - 1
        self.useful[t, set_index, way] = 0
        self.sec_tags[t, set_index, way] = sec_tag
        return j

    def allocate_higher(
        self,
        provider: int,
        pc: int,
        bhr: int,
        taken: bool,
        ctx: SecurityContext = USER_CONTEXT,
        rng: np.random.Generator | None = None,
    ) -> int | None:
        """Allocate one entry above ``provider``; returns the component used or None."""
        return self._allocate(
            provider,
            self._keys(pc, int(bhr)),
            taken,
            ctx.security_tag(self.config.isolation),
            rng if rng is not None else self.rng,
        )

    # direct state manipulation

    def install_entry(
        self, i: int, pc: int, bhr: int, direction: bool, ctx: SecurityContext = USER_CONTEXT, useful: int = 1
    ) -> int:
        """Write a strong entry for ``(pc, bhr)`` at component ``i``; returns the way used."""
        if not 1 <= i <= self.config.tables:
            raise ValueError(f"Component {i} outside 1..{self.config.tables}")
        cfg = self.config
        set_index, tag = self._keys(pc, int(bhr))[i - 1]
        sec_tag = ctx.security_tag(cfg.isolation)
        way = self._match(i, set_index, tag, sec_tag)
        if way is None:
            way = self._free_way(i, set_index)
        if way is None:
            way = 0
        t = i - 1
        self.valid[t, set_index, way] = True
        self.tags[t, set_index, way] = tag
        self.counters[t, set_index, way] = cfg.counter_max if direction else 0
        self.useful[t, set_index, way] = min(useful, cfg.useful_max)
        self.sec_tags[t, set_index, way] = sec_tag
        return way

    def evict(self, pc: int, bhr: int, ctx: SecurityContext = USER_CONTEXT, keep: int | None = None) -> int:
        """Invalidate entries matching ``(pc, bhr, ctx)`` outside component ``keep``."""
        keys = self._keys(pc, int(bhr))
        sec_tag = ctx.security_tag(self.config.isolation)
        evicted = 0
        for i in range(1, self.config.tables + 1):
            if i == keep:
                continue
            way = self._match(i, *keys[i - 1], sec_tag)
            if way is not None:
                self.valid[i - 1, keys[i - 1][0], way] = False
                self.useful[i - 1, keys[i - 1][0], way] = 0
                evicted += 1
        return evicted

    def seed_base(self, pc: int, direction: bool, ctx: SecurityContext = USER_CONTEXT):
        self.base_table(ctx)[self.base_index(pc)] = 3 if direction else 0

    # inspection

    def dump_state(self) -> pd.DataFrame:
        cfg = self.config
        rows = []
        for i in range(1, cfg.tables + 1):
            valid = self.valid[i - 1]
            counters = self.counters[i - 1][valid]
            row = {
                "component": i,
                "history_length": cfg.history_lengths[i - 1],
                "valid_entries": int(valid.sum()),
                "occupancy": float(valid.mean()),
                "useful_entries": int((self.useful[i - 1][valid] > 0).sum()),
                "predict_taken": int((counters >= cfg.weak_taken).sum()),
                **_histogram(counters, cfg.counter_max),
            }
            rows.append(row)
        self.base_table()
        base = np.concatenate(list(self.bases.values()))
        rows.append({
            "component": 0,
            "history_length": 0,
            "valid_entries": int(base.size),
            "occupancy": 1.0,
            "useful_entries": 0,
            "predict_taken": int((base >= 2).sum()),
            **_histogram(base, cfg.counter_max),
        })
        return pd.DataFrame(rows)
