"""
Bit-accurate model of the M1 branch history register (BHR).

Each executed branch contributes ``attrs(B)``, a fold of the branch attribute
bits that reach the history. Shifting branches update the register with
``(BHR << 1) ^ attrs(B)``; non-taken conditional branches XOR without shifting.

Address-valued attributes (PC, indirect target) are 4-byte aligned, so their
bit ``b`` lands at position ``b - 2``; immediates are instruction offsets and
their bit ``b`` lands at position ``b``. Bits that affect the history but fail
the shift-and-XOR cancellation test are folded one position higher.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from functools import cached_property

logger = logging.getLogger(__name__)

ADDRESS_BITS = 48
ADDRESS_MASK = (1 << ADDRESS_BITS) - 1
IMMEDIATE_BITS = 19
IMMEDIATE_MASK = (1 << IMMEDIATE_BITS) - 1
IMMEDIATE_MIN = -(1 << (IMMEDIATE_BITS - 1))
IMMEDIATE_MAX = (1 << (IMMEDIATE_BITS - 1)) - 1
MODELED_ATTRIBUTE_BITS = 32
UNMODELED_BIT = 31
ADDRESS_POSITION_OFFSET = 2


class SlideError(ValueError):
    """A branch slide does not satisfy the shape an operation requires."""


class BitRangeError(ValueError):
    """An attribute bit lies outside the modeled range."""


class BranchKind(enum.Enum):
    CONDITIONAL_TAKEN = "cond-taken"
    CONDITIONAL_NOT_TAKEN = "cond-not-taken"
    INDIRECT_TAKEN = "indirect"
    DIRECT_UNCONDITIONAL = "direct"

    @property
    def shifts(self) -> bool:
        return self is not BranchKind.CONDITIONAL_NOT_TAKEN

    @property
    def is_conditional(self) -> bool:
        return self in (BranchKind.CONDITIONAL_TAKEN, BranchKind.CONDITIONAL_NOT_TAKEN)

    @property
    def taken(self) -> bool:
        return self is not BranchKind.CONDITIONAL_NOT_TAKEN


def sign_extend_immediate(raw: int) -> int:
    """Decode a 19-bit two's complement immediate field."""
    raw &= IMMEDIATE_MASK
    if raw >> (IMMEDIATE_BITS - 1):
        return raw - (1 << IMMEDIATE_BITS)
    return raw


@dataclass(frozen=True)
class BranchEvent:
    """One executed branch; the unit of BHR updates."""

    kind: BranchKind
    pc: int
    target: int = 0
    immediate: int = 0

    def __post_init__(self):
        if not 0 <= self.pc <= ADDRESS_MASK or not 0 <= self.target <= ADDRESS_MASK:
            raise ValueError(f"Addresses must fit in {ADDRESS_BITS} bits: pc={self.pc:#x} target={self.target:#x}")
        if self.pc & 0b11 or self.target & 0b11:
            raise ValueError(f"Branch addresses must be 4-byte aligned: pc={self.pc:#x} target={self.target:#x}")
        if self.kind.is_conditional:
            if not IMMEDIATE_MIN <= self.immediate <= IMMEDIATE_MAX:
                raise ValueError(f"Immediate {self.immediate} does not fit a signed {IMMEDIATE_BITS}-bit field")
            if self.target != (self.pc + 4 * self.immediate) & ADDRESS_MASK:
                raise ValueError(f"Conditional target {self.target:#x} != pc + 4*immediate")
        elif self.immediate:
            raise ValueError(f"{self.kind.value} branches carry no immediate")

    @classmethod
    def conditional(cls, pc: int, immediate: int, taken: bool = True) -> "BranchEvent":
        kind = BranchKind.CONDITIONAL_TAKEN if taken else BranchKind.CONDITIONAL_NOT_TAKEN
        return cls(kind, pc, (pc + 4 * immediate) & ADDRESS_MASK, immediate)

    @classmethod
    def indirect(cls, pc: int, target: int) -> "BranchEvent":
        return cls(BranchKind.INDIRECT_TAKEN, pc, target)

    @classmethod
    def direct(cls, pc: int, target: int) -> "BranchEvent":
        return cls(BranchKind.DIRECT_UNCONDITIONAL, pc, target)

    @property
    def immediate_field(self) -> int:
        return self.immediate & IMMEDIATE_MASK

    @property
    def uses_unmodeled_bit(self) -> bool:
        return bool((self.pc | self.target) >> UNMODELED_BIT & 1)

    def with_pc(self, pc: int) -> "BranchEvent":
        if self.kind.is_conditional:
            return BranchEvent.conditional(pc, self.immediate, self.kind.taken)
        return BranchEvent(self.kind, pc, self.target)

    def with_target(self, target: int) -> "BranchEvent":
        if self.kind.is_conditional:
            raise ValueError("Conditional targets follow the immediate; use with_immediate_field")
        return BranchEvent(self.kind, self.pc, target)

    def with_immediate_field(self, raw: int) -> "BranchEvent":
        return BranchEvent.conditional(self.pc, sign_extend_immediate(raw), self.kind.taken)

    def with_outcome(self, taken: bool) -> "BranchEvent":
        if not self.kind.is_conditional:
            raise ValueError(f"{self.kind.value} branches have no outcome to change")
        return BranchEvent.conditional(self.pc, self.immediate, taken)


def _bits_to_mask(bits) -> int:
    mask = 0
    for bit in bits:
        mask |= 1 << bit
    return mask


@dataclass(frozen=True)
class AttributeMaskSet:
    """Which attribute bits reach the BHR, per branch attribute."""

    cond_pc_bits: frozenset[int]
    cond_imm_bits: frozenset[int]
    indir_pc_bits: frozenset[int]
    indir_target_bits: frozenset[int]
    anomalous_cond_pc_bits: frozenset[int] = frozenset()
    anomalous_cond_imm_bits: frozenset[int] = frozenset()

    def __post_init__(self):
        for name in (
            "cond_pc_bits", "cond_imm_bits", "indir_pc_bits", "indir_target_bits",
            "anomalous_cond_pc_bits", "anomalous_cond_imm_bits",
        ):
            bits = frozenset(getattr(self, name))
            object.__setattr__(self, name, bits)
            bad = sorted(b for b in bits if not 0 <= b < MODELED_ATTRIBUTE_BITS)
            if bad:
                raise BitRangeError(f"{name} contains bits outside [0, {MODELED_ATTRIBUTE_BITS}): {bad}")
            if UNMODELED_BIT in bits:
                raise BitRangeError(f"{name} may not contain bit {UNMODELED_BIT}")
        for name in ("cond_imm_bits", "anomalous_cond_imm_bits"):
            if any(b >= IMMEDIATE_BITS for b in getattr(self, name)):
                raise BitRangeError(f"{name} exceeds the {IMMEDIATE_BITS}-bit immediate field")
        for name in ("cond_pc_bits", "indir_pc_bits", "indir_target_bits", "anomalous_cond_pc_bits"):
            if any(b < ADDRESS_POSITION_OFFSET for b in getattr(self, name)):
                raise BitRangeError(f"{name} contains alignment bits 0-1")

    @cached_property
    def _cond_pc(self) -> tuple[int, int]:
        return (
            _bits_to_mask(self.cond_pc_bits - self.anomalous_cond_pc_bits),
            _bits_to_mask(self.anomalous_cond_pc_bits),
        )

    @cached_property
    def _cond_imm(self) -> tuple[int, int]:
        return (
            _bits_to_mask(self.cond_imm_bits - self.anomalous_cond_imm_bits),
            _bits_to_mask(self.anomalous_cond_imm_bits),
        )

    @cached_property
    def _indir_pc(self) -> int:
        return _bits_to_mask(self.indir_pc_bits)

    @cached_property
    def _indir_target(self) -> int:
        return _bits_to_mask(self.indir_target_bits)

    def bits_for(self, attribute: str) -> frozenset[int]:
        """Every bit of ``attribute`` with an effect on the BHR (confirmed or anomalous)."""
        if attribute == "cond_pc":
            return self.cond_pc_bits | self.anomalous_cond_pc_bits
        if attribute == "cond_imm":
            return self.cond_imm_bits | self.anomalous_cond_imm_bits
        if attribute == "indir_pc":
            return self.indir_pc_bits
        if attribute == "indir_target":
            return self.indir_target_bits
        raise ValueError(f"Unknown attribute '{attribute}'")

    def position_of(self, attribute: str, bit: int) -> int | None:
        """BHR position bit ``bit`` of ``attribute`` is folded into, or None if masked off."""
        if bit not in self.bits_for(attribute):
            return None
        offset = 0 if attribute == "cond_imm" else ADDRESS_POSITION_OFFSET
        anomalous = self.anomalous_cond_pc_bits if attribute == "cond_pc" else (
            self.anomalous_cond_imm_bits if attribute == "cond_imm" else frozenset()
        )
        return bit - offset + (1 if bit in anomalous else 0)


def _place(value: int, masks: tuple[int, int], offset: int) -> int:
    confirmed, anomalous = masks
    return ((value & confirmed) >> offset) ^ (((value & anomalous) >> offset) << 1)


def attrs(event: BranchEvent, masks: AttributeMaskSet) -> int:
    """XOR-fold of the masked attribute bits ``event`` contributes to the BHR."""
    if event.kind.is_conditional:
        return _place(event.pc, masks._cond_pc, ADDRESS_POSITION_OFFSET) ^ _place(
            event.immediate_field, masks._cond_imm, 0
        )
    if event.kind is BranchKind.INDIRECT_TAKEN:
        return ((event.pc & masks._indir_pc) ^ (event.target & masks._indir_target)) >> ADDRESS_POSITION_OFFSET
    return _place(event.pc, masks._cond_pc, ADDRESS_POSITION_OFFSET)


@dataclass(frozen=True)
class BhrConfig:
    history_length: int
    shift_per_update: int = 1
    not_taken_updates: bool = True

    def __post_init__(self):
        if self.history_length < 1:
            raise ValueError("history_length must be positive")
        if self.shift_per_update != 1:
            raise ValueError("Only a shift of one bit per update is modeled")

    @property
    def width(self) -> int:
        return self.history_length * self.shift_per_update

    @property
    def mask(self) -> int:
        return (1 << self.width) - 1


@dataclass(frozen=True)
class BhrState:
    bits: int
    width: int

    def __post_init__(self):
        if self.bits >> self.width:
            raise ValueError(f"BHR value does not fit in {self.width} bits")

    @classmethod
    def zero(cls, cfg: BhrConfig) -> "BhrState":
        return cls(0, cfg.width)

    def __int__(self) -> int:
        return self.bits

    __index__ = __int__

    @property
    def msb(self) -> int:
        return self.bits >> (self.width - 1)

    def flip(self, position: int) -> "BhrState":
        return BhrState(self.bits ^ (1 << position), self.width)

    def differing_positions(self, other: "BhrState") -> list[int]:
        diff = self.bits ^ other.bits
        return [i for i in range(max(self.width, other.width)) if diff >> i & 1]

    def __str__(self):
        return f"{self.bits:0{(self.width + 3) // 4}x}"


def _step(bits: int, event: BranchEvent, masks: AttributeMaskSet, cfg: BhrConfig) -> int:
    if event.kind.shifts:
        return ((bits << cfg.shift_per_update) ^ attrs(event, masks)) & cfg.mask
    if not cfg.not_taken_updates:
        return bits
    return (bits ^ attrs(event, masks)) & cfg.mask


def bhr_update(state: BhrState, event: BranchEvent, masks: AttributeMaskSet, cfg: BhrConfig) -> BhrState:
    if state.width != cfg.width:
        raise ValueError(f"BHR width {state.width} does not match configured width {cfg.width}")
    return BhrState(_step(state.bits, event, masks, cfg), cfg.width)


def fold_events(events, masks: AttributeMaskSet, cfg: BhrConfig, start: int = 0) -> int:
    bits = start
    for event in events:
        bits = _step(bits, event, masks, cfg)
    return bits


@dataclass(frozen=True)
class BranchSlide:
    """Ordered branch sequence ending at a mistraining, victim or spy branch."""

    events: tuple[BranchEvent, ...]
    terminal: BranchEvent

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if not self.terminal.kind.is_conditional:
            raise SlideError("The terminal branch of a slide must be conditional")

    def __len__(self):
        return len(self.events) + 1

    @property
    def taken(self) -> bool:
        return self.terminal.kind.taken

    def with_outcome(self, taken: bool) -> "BranchSlide":
        return BranchSlide(self.events, self.terminal.with_outcome(taken))


def bhr_of_slide(slide: BranchSlide, masks: AttributeMaskSet, cfg: BhrConfig) -> BhrState:
    """History seen by the terminal branch, folded from the zero state."""
    if not slide.events:
        raise SlideError("Cannot derive a history from an empty slide")
    return BhrState(fold_events(slide.events, masks, cfg), cfg.width)


def _check_lpc_eligible(slide: BranchSlide, cfg: BhrConfig):
    if len(slide.events) != cfg.history_length:
        raise SlideError(
            f"Slide has {len(slide.events)} branches before the terminal; "
            f"exactly {cfg.history_length} are needed to own the last BHR bit"
        )
    if slide.events[0].kind is not BranchKind.CONDITIONAL_TAKEN:
        raise SlideError("The branch feeding the last BHR bit must be a taken conditional branch")
    if not all(event.kind.shifts for event in slide.events[1:]):
        raise SlideError("Non-shifting branches after the lead branch would move the last BHR bit")


def flip_last_bhr_bit(slide: BranchSlide, cfg: BhrConfig) -> BranchSlide:
    """
    Move the first branch of an ``HL + 1`` branch slide 4 bytes, toggling PC bit 2
    and with it the BHR's most significant bit. Other lengths raise ``SlideError``.
    """
    _check_lpc_eligible(slide, cfg)
    lead, *rest = slide.events
    return BranchSlide((lead.with_pc(lead.pc ^ 0b100), *rest), slide.terminal)


@dataclass(frozen=True)
class HistoryModel:
    """Masks and register geometry bundled for the harness and the experiments."""

    masks: AttributeMaskSet
    config: BhrConfig
    _prefix_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    @property
    def width(self) -> int:
        return self.config.width

    @property
    def history_length(self) -> int:
        return self.config.history_length

    def zero(self) -> BhrState:
        return BhrState.zero(self.config)

    def attrs(self, event: BranchEvent) -> int:
        return attrs(event, self.masks)

    def update(self, state: BhrState, event: BranchEvent) -> BhrState:
        return bhr_update(state, event, self.masks, self.config)

    def fold(self, events) -> BhrState:
        return BhrState(fold_events(events, self.masks, self.config), self.config.width)

    def of_slide(self, slide: BranchSlide) -> BhrState:
        return bhr_of_slide(slide, self.masks, self.config)

    def flip_last_bit(self, slide: BranchSlide) -> BranchSlide:
        return flip_last_bhr_bit(slide, self.config)

    def position_of(self, attribute: str, bit: int) -> int | None:
        position = self.masks.position_of(attribute, bit)
        if position is None or position >= self.width:
            return None
        return position

    def history_prefixes(self, slide: BranchSlide) -> tuple[int, ...]:
        """BHR value before each slide event, followed by the terminal's history."""
        cached = self._prefix_cache.get(slide)
        if cached is not None:
            return cached
        if not slide.events:
            raise SlideError("Cannot derive a history from an empty slide")
        values = [0]
        for event in slide.events:
            values.append(_step(values[-1], event, self.masks, self.config))
        prefixes = tuple(values)
        if len(self._prefix_cache) > 4096:
            self._prefix_cache.clear()
        self._prefix_cache[slide] = prefixes
        return prefixes
