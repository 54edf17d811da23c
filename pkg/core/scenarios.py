"""
Reverse-engineering experiments and attack campaigns. Each scenario returns a
ScenarioResult whose rows become one CSV report.

Every parameter point runs on its own predictor seeded from ``(seed, point)``,
so rows depend neither on worker count nor on completion order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .attack import (
    DEFAULT_CHUNK_TRIALS,
    DETECTION_ROUNDS,
    Classification,
    TrainingMode,
    TrialConfig,
    VictimSpec,
    aliasing_detect,
    classify_rate,
    execute_branch,
    random_slide,
    run_search,
    train_mistrain,
)
from .bhr import (
    ADDRESS_BITS,
    ADDRESS_MASK,
    IMMEDIATE_BITS,
    UNMODELED_BIT,
    AttributeMaskSet,
    BitRangeError,
    BranchEvent,
    BranchKind,
    BranchSlide,
    HistoryModel,
)
from .presets import Microarch
from .stats import ModelParams, estimate_search_space, lpc_gain
from .tage import (
    KERNEL_CONTEXT,
    PC_HASH_MASK,
    USER_CONTEXT,
    Isolation,
    PrivilegeLevel,
    SecurityContext,
    TagePredictor,
)

logger = logging.getLogger(__name__)

EXECUTIONS_PER_PATH = 16
DEFAULT_SWITCHES = 128
SETUP_PC = 0x0000_1234_5670
SETUP_TARGET = 0x0000_1234_9AB0
VICTIM_STREAM = 0x5EED
USER_HIGH_BITS = 0x0000_0001
KERNEL_HIGH_BITS = 0xFFFF
HIGH_BITS_BASE = 0x0000_0010_0000
PUBLISHED_OBSERVATIONS = (
    (1_000_000_000, 1),
    (650_000_000, 4),
    (1_100_000_000, 33),
    (565_000_000, 61),
)

ATTRIBUTE_BITS = {
    "cond_pc": range(2, ADDRESS_BITS),
    "cond_imm": range(0, IMMEDIATE_BITS),
    "indir_pc": range(2, ADDRESS_BITS),
    "indir_target": range(2, ADDRESS_BITS),
}


@dataclass
class ScenarioResult:
    scenario: str
    rows: list[dict]
    summary: dict = field(default_factory=dict)
    predictor: TagePredictor | None = field(default=None, repr=False)

    @property
    def indeterminate(self) -> bool:
        return any(row.get("classification") == Classification.INDETERMINATE.value for row in self.rows)


def point_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=keys))


def point_predictor(microarch: Microarch, seed: int, *keys: int) -> TagePredictor:
    state = np.random.SeedSequence(seed, spawn_key=(1, *keys)).generate_state(1, dtype=np.uint64)
    return microarch.predictor(int(state[0]))


def _map(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(job) for job in jobs]


def _random_pc(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 1 << 29)) << 2


def check_bits(attribute: str, bits) -> list[int]:
    try:
        valid = ATTRIBUTE_BITS[attribute]
    except KeyError:
        raise ValueError(f"Unknown attribute '{attribute}'") from None
    bits = sorted(bits)
    if not bits:
        raise BitRangeError("No bits selected")
    bad = [b for b in bits if b not in valid]
    if bad:
        raise BitRangeError(f"{attribute} bits outside [{valid.start}, {valid.stop - 1}]: {bad}")
    if UNMODELED_BIT in bits and attribute != "cond_imm":
        logger.warning(f"{attribute} bit {UNMODELED_BIT} is not modeled; its result is reported but not trusted")
    return bits


# setup branches


def base_event(attribute: str, pc: int = SETUP_PC) -> BranchEvent:
    if attribute in ("cond_pc", "cond_imm"):
        return BranchEvent.conditional(pc, 1)
    return BranchEvent.indirect(pc, SETUP_TARGET)


def toggle_attribute(event: BranchEvent, attribute: str, bit: int) -> BranchEvent:
    """``event`` with one attribute bit flipped."""
    if attribute in ("cond_pc", "indir_pc"):
        return event.with_pc(event.pc ^ (1 << bit))
    if attribute == "cond_imm":
        return event.with_immediate_field(event.immediate_field ^ (1 << bit))
    if attribute == "indir_target":
        return event.with_target(event.target ^ (1 << bit))
    raise ValueError(f"Unknown attribute '{attribute}'")


def setup_variants(attribute: str, bit: int) -> tuple[BranchEvent, BranchEvent]:
    event = base_event(attribute)
    return event, toggle_attribute(event, attribute, bit)


def bit_survives(model: HistoryModel, attribute: str, bit: int, distance: int) -> bool:
    """Whether a difference in ``bit`` is still in the BHR after ``distance`` shifting branches."""
    position = model.position_of(attribute, bit)
    return position is not None and position + distance < model.width


# two-path template


@dataclass(frozen=True)
class TwoPathExperiment:
    """
    Two paths identical save for the setup branches, each ending at a spy branch
    whose outcome differs between paths. A shadow branch with a fixed history
    and the spy's outcome runs after every spy execution as the 25% baseline.
    """

    reset: tuple[BranchEvent, ...]
    setup_a: tuple[BranchEvent, ...]
    setup_b: tuple[BranchEvent, ...]
    buffer: tuple[BranchEvent, ...]
    spy_pcs: tuple[int, int]
    shadow: BranchSlide
    spy_outcomes: tuple[bool, bool] = (True, False)
    executions_per_path: int = EXECUTIONS_PER_PATH

    def __post_init__(self):
        if self.spy_outcomes[0] == self.spy_outcomes[1]:
            raise ValueError("Spy outcomes must differ between paths")

    @property
    def buffer_length(self) -> int:
        return len(self.buffer)

    def path(self, k: int) -> tuple[BranchEvent, ...]:
        return self.reset + (self.setup_a if k == 0 else self.setup_b) + self.buffer

    def histories(self, model: HistoryModel) -> tuple[int, int]:
        return int(model.fold(self.path(0))), int(model.fold(self.path(1)))

    def expected_effect(self, model: HistoryModel) -> bool:
        a, b = self.histories(model)
        return a != b or bool((self.spy_pcs[0] ^ self.spy_pcs[1]) & PC_HASH_MASK)

    def run(self, tage: TagePredictor, model: HistoryModel, switches: int = DEFAULT_SWITCHES) -> tuple[float, float]:
        """Alternate the paths ``switches`` times; returns (spy, shadow) misprediction rates."""
        histories = self.histories(model)
        shadow_pc, shadow_history = self.shadow.terminal.pc, model.history_prefixes(self.shadow)[-1]
        spy_misses = shadow_misses = 0
        for switch in range(switches):
            path = switch % 2
            outcome = self.spy_outcomes[path]
            for _ in range(self.executions_per_path):
                spy_misses += execute_branch(tage, self.spy_pcs[path], histories[path], outcome)
                shadow_misses += execute_branch(tage, shadow_pc, shadow_history, outcome)
        total = switches * self.executions_per_path
        return spy_misses / total, shadow_misses / total


def two_path(model: HistoryModel, rng: np.random.Generator, setup_a, setup_b, buffer, spy_pcs=None) -> TwoPathExperiment:
    reset = random_slide(rng, model).events
    if spy_pcs is None:
        spy_pc = _random_pc(rng)
        spy_pcs = (spy_pc, spy_pc)
    return TwoPathExperiment(
        reset=tuple(reset),
        setup_a=tuple(setup_a),
        setup_b=tuple(setup_b),
        buffer=tuple(buffer),
        spy_pcs=spy_pcs,
        shadow=random_slide(rng, model),
    )


@dataclass(frozen=True)
class _PathJob:
    microarch: Microarch
    experiment: TwoPathExperiment
    switches: int
    seed: int
    index: int


def _run_path_job(job: _PathJob) -> tuple[float, float]:
    tage = point_predictor(job.microarch, job.seed, job.index)
    return job.experiment.run(tage, job.microarch.history, job.switches)


def _effect(classification: Classification) -> bool | None:
    if classification is Classification.INDETERMINATE:
        return None
    return classification is Classification.NON_ALIASED


def _path_rows(scenario: str, points: list[dict], rates, expected) -> list[dict]:
    rows = []
    for params, (spy, shadow), expect in zip(points, rates, expected):
        classification = classify_rate(spy)
        if classification is Classification.INDETERMINATE:
            logger.warning(f"{scenario} {params}: spy misprediction rate {spy:.3f} is indeterminate")
        rows.append({
            "scenario": scenario,
            **params,
            "spy_mispredict_rate": spy,
            "shadow_mispredict_rate": shadow,
            "classification": classification.value,
            "effect": _effect(classification),
            "expected_effect": expect,
        })
    return rows


def _run_two_path(microarch, scenario, points, experiments, expected, seed, switches, workers) -> ScenarioResult:
    jobs = [_PathJob(microarch, experiment, switches, seed, index) for index, experiment in enumerate(experiments)]
    rates = _map(_run_path_job, jobs, workers)
    return ScenarioResult(scenario, _path_rows(scenario, points, rates, expected))


def run_bit_effect(
    microarch: Microarch,
    attribute: str,
    bits,
    h: int = 0,
    *,
    seed: int = 0,
    switches: int = DEFAULT_SWITCHES,
    workers: int = 1,
) -> ScenarioResult:
    """Does toggling one attribute bit of the setup branch change the spy's history?"""
    bits = check_bits(attribute, bits)
    if h < 0:
        raise ValueError("Buffer length must be non-negative")
    model = microarch.history
    points, experiments, expected = [], [], []
    for index, bit in enumerate(bits):
        rng = point_rng(seed, index)
        setup_a, setup_b = setup_variants(attribute, bit)
        buffer = random_slide(rng, model, length=h).events
        experiments.append(two_path(model, rng, (setup_a,), (setup_b,), buffer))
        points.append({"attribute": attribute, "bit": bit, "h": h, "unmodeled_bit": bit == UNMODELED_BIT})
        expected.append(bit_survives(model, attribute, bit, h))
    return _run_two_path(microarch, "bit-effect", points, experiments, expected, seed, switches, workers)


def run_distance_sweep(
    microarch: Microarch,
    attribute: str,
    bits,
    h_values,
    *,
    seed: int = 0,
    switches: int = DEFAULT_SWITCHES,
    workers: int = 1,
) -> ScenarioResult:
    """Bit-effect over buffer lengths; reports where each bit's effect is lost."""
    bits = check_bits(attribute, bits)
    h_values = sorted(set(h_values))
    if not h_values or h_values[0] < 0:
        raise ValueError("Buffer lengths must be non-negative")
    model = microarch.history
    points, experiments, expected = [], [], []
    for bit in bits:
        setup_a, setup_b = setup_variants(attribute, bit)
        for h in h_values:
            rng = point_rng(seed, len(points))
            buffer = random_slide(rng, model, length=h).events
            experiments.append(two_path(model, rng, (setup_a,), (setup_b,), buffer))
            points.append({"attribute": attribute, "bit": bit, "h": h})
            expected.append(bit_survives(model, attribute, bit, h))
    result = _run_two_path(microarch, "distance-sweep", points, experiments, expected, seed, switches, workers)

    cutoffs = {}
    for bit in bits:
        lost = [row["h"] for row in result.rows if row["bit"] == bit and row["effect"] is False]
        cutoffs[bit] = min(lost) if lost else None
    for row in result.rows:
        position = model.masks.position_of(attribute, row["bit"])
        row["cutoff"] = cutoffs[row["bit"]]
        row["expected_cutoff"] = None if position is None else max(model.width - position, 0)
    result.summary["cutoffs"] = cutoffs
    try:
        history_length = recover_history_length(cutoffs, attribute, model.masks)
    except ValueError:
        history_length = None
    result.summary["history_length"] = history_length
    result.summary["bhr_width"] = None if history_length is None else history_length * model.config.shift_per_update
    return result


def recover_history_length(cutoffs: dict[int, int | None], attribute: str, masks: AttributeMaskSet) -> int:
    """History length implied by the cutoff of the lowest-position bit that has one."""
    candidates = [
        (masks.position_of(attribute, bit), cutoff)
        for bit, cutoff in cutoffs.items()
        if cutoff is not None and cutoff > 0 and masks.position_of(attribute, bit) is not None
    ]
    if not candidates:
        raise ValueError("No bit lost its effect inside the swept range")
    position, cutoff = min(candidates)
    return cutoff + position


def run_update_policy(
    microarch: Microarch,
    attribute: str,
    shift: int,
    bits,
    *,
    seed: int = 0,
    switches: int = DEFAULT_SWITCHES,
    workers: int = 1,
) -> ScenarioResult:
    """
    Two consecutive setup branches: bit ``i`` of the first and bit ``i + shift``
    of the second are flipped together. The paths coincide only if the update
    shifts the first branch's contribution by exactly ``shift`` before XORing.
    """
    if shift < 1:
        raise ValueError("shift must be >= 1")
    bits = check_bits(attribute, bits)
    check_bits(attribute, [bit + shift for bit in bits])
    model = microarch.history
    first = base_event(attribute)
    second = base_event(attribute, first.target)
    points, experiments, expected = [], [], []
    for index, bit in enumerate(bits):
        rng = point_rng(seed, index)
        setup_a = (first, second)
        setup_b = (toggle_attribute(first, attribute, bit), toggle_attribute(second, attribute, bit + shift))
        experiment = two_path(model, rng, setup_a, setup_b, ())
        experiments.append(experiment)
        points.append({"attribute": attribute, "shift": shift, "bit": bit})
        expected.append(experiment.expected_effect(model))
    return _run_two_path(microarch, "update-policy", points, experiments, expected, seed, switches, workers)


def outcome_paths(model: HistoryModel, offset: int) -> tuple[tuple[BranchEvent, ...], BranchEvent, BranchEvent, int]:
    """
    Branches placed at multiples of ``2^offset``: a taken conditional (immediate 1)
    falling into an indirect branch to the next multiple. Returns the prefix, the
    switch branch taken and not taken, and the spy PC.
    """
    stride = 1 << offset
    events = []
    pairs = model.history_length + 1
    for k in range(1, pairs + 1):
        pc = (k * stride) & ADDRESS_MASK
        events.append(BranchEvent.conditional(pc, 1))
        events.append(BranchEvent.indirect((pc + 4) & ADDRESS_MASK, ((k + 1) * stride) & ADDRESS_MASK))
    switch_pc = ((pairs + 1) * stride) & ADDRESS_MASK
    spy_pc = ((pairs + 2) * stride) & ADDRESS_MASK
    return tuple(events), BranchEvent.conditional(switch_pc, 1), BranchEvent.conditional(switch_pc, 1, taken=False), spy_pc


def run_outcome_effect(
    microarch: Microarch,
    offsets,
    control: bool = False,
    *,
    seed: int = 0,
    switches: int = DEFAULT_SWITCHES,
    workers: int = 1,
) -> ScenarioResult:
    """
    Does a not-taken conditional branch change the history? The paths differ only
    in the switch branch's outcome; both continue through the same indirect branch.
    ``control`` disables not-taken updates, making the paths indistinguishable.
    """
    offsets = sorted(offsets)
    if not offsets or offsets[0] < 2 or offsets[-1] >= ADDRESS_BITS:
        raise BitRangeError(f"Offsets must lie in [2, {ADDRESS_BITS - 1}]")
    microarch_run = microarch
    if control:
        history = HistoryModel(microarch.history.masks, replace(microarch.history.config, not_taken_updates=False))
        microarch_run = Microarch(microarch.name, history, microarch.tage)
    model = microarch_run.history
    points, experiments, expected = [], [], []
    for index, offset in enumerate(offsets):
        rng = point_rng(seed, index)
        prefix, taken, not_taken, spy_pc = outcome_paths(model, offset)
        follow = BranchEvent.indirect(taken.target, spy_pc)
        experiment = TwoPathExperiment(
            reset=prefix,
            setup_a=(taken, follow),
            setup_b=(not_taken, follow),
            buffer=(),
            spy_pcs=(spy_pc, spy_pc),
            shadow=random_slide(rng, model),
        )
        experiments.append(experiment)
        points.append({"offset": offset, "control": control})
        expected.append(experiment.expected_effect(model))
    return _run_two_path(microarch_run, "outcome-effect", points, experiments, expected, seed, switches, workers)


def run_branch_type(
    microarch: Microarch,
    buffer_kind: BranchKind | None = None,
    bits=range(2, 24),
    *,
    seed: int = 0,
    switches: int = DEFAULT_SWITCHES,
    workers: int = 1,
) -> ScenarioResult:
    """
    Which branch kinds shift the history? The setup difference in PC bit ``i`` is
    pushed to the MSB by ``HL - (i - 1)`` taken branches, then ``i - 1`` branches of
    ``buffer_kind`` follow (none for the baseline, ``buffer_kind=None``).
    """
    bits = check_bits("cond_pc", bits)
    model = microarch.history
    hl = model.history_length
    if bits[-1] - 1 > hl:
        raise BitRangeError(f"Bit {bits[-1]} cannot be pushed to the MSB of a {hl}-branch history")
    points, experiments, expected = [], [], []
    for index, bit in enumerate(bits):
        rng = point_rng(seed, index)
        setup_a, setup_b = setup_variants("cond_pc", bit)
        lead = random_slide(rng, model, length=hl - (bit - 1)).events
        tail = _buffer_of(buffer_kind, bit - 1, rng)
        experiment = two_path(model, rng, (setup_a,), (setup_b,), tuple(lead) + tail)
        experiments.append(experiment)
        points.append({"buffer_kind": buffer_kind.value if buffer_kind else "none", "bit": bit})
        expected.append(experiment.expected_effect(model))
    return _run_two_path(microarch, "branch-types", points, experiments, expected, seed, switches, workers)


def _buffer_of(kind: BranchKind | None, count: int, rng: np.random.Generator) -> tuple[BranchEvent, ...]:
    if kind is None or count == 0:
        return ()
    events = []
    for _ in range(count):
        pc = _random_pc(rng)
        if kind is BranchKind.CONDITIONAL_TAKEN:
            events.append(BranchEvent.conditional(pc, int(rng.integers(1, 1 << 10))))
        elif kind is BranchKind.CONDITIONAL_NOT_TAKEN:
            events.append(BranchEvent.conditional(pc, int(rng.integers(1, 1 << 10)), taken=False))
        elif kind is BranchKind.DIRECT_UNCONDITIONAL:
            events.append(BranchEvent.direct(pc, _random_pc(rng)))
        else:
            events.append(BranchEvent.indirect(pc, _random_pc(rng)))
    return tuple(events)


def high_bits_copy(model: HistoryModel, base: int) -> tuple[tuple[BranchEvent, ...], int]:
    """Indirect/conditional pairs laid out relative to ``base``; returns the events and spy PC."""
    events = []
    pairs = model.history_length // 2 + 1
    for k in range(pairs):
        start = base + 64 * k
        events.append(BranchEvent.indirect(start, start + 32))
        events.append(BranchEvent.conditional(start + 32, 8))
    return tuple(events), base + 64 * pairs


def run_high_bits(
    microarch: Microarch,
    bits,
    *,
    seed: int = 0,
    switches: int = DEFAULT_SWITCHES,
    workers: int = 1,
) -> ScenarioResult:
    """Two copies of one slide whose start addresses differ only in bit ``i``."""
    bits = check_bits("indir_pc", bits)
    model = microarch.history
    if any((HIGH_BITS_BASE >> bit) & 1 for bit in bits) or bits[0] < 16:
        raise BitRangeError("High-bit copies need bits above the slide's own layout (>= 16)")
    copy_a, spy_a = high_bits_copy(model, HIGH_BITS_BASE)
    points, experiments, expected = [], [], []
    for index, bit in enumerate(bits):
        rng = point_rng(seed, index)
        copy_b, spy_b = high_bits_copy(model, HIGH_BITS_BASE ^ (1 << bit))
        experiment = TwoPathExperiment(
            reset=(),
            setup_a=copy_a,
            setup_b=copy_b,
            buffer=(),
            spy_pcs=(spy_a, spy_b),
            shadow=random_slide(rng, model),
        )
        experiments.append(experiment)
        points.append({"bit": bit, "unmodeled_bit": bit == UNMODELED_BIT})
        expected.append(experiment.expected_effect(model))
    return _run_two_path(microarch, "high-bits", points, experiments, expected, seed, switches, workers)


# single-branch probes


def run_counter_probe(microarch: Microarch, periods, blocks: int = 64, *, seed: int = 0) -> ScenarioResult:
    """
    One branch with a fixed history, provided by the last component, whose outcome
    flips every ``N`` executions. A ``c``-bit counter mispredicts ``2^(c-1)`` times
    per block.
    """
    periods = sorted(set(periods))
    if not periods or periods[0] < 1 or blocks < 1:
        raise ValueError("Periods and blocks must be positive")
    cfg = microarch.tage
    rows = []
    tage = None
    for index, period in enumerate(periods):
        if period < 1 << cfg.counter_bits:
            logger.warning(f"Period {period} is too short to saturate a {cfg.counter_bits}-bit counter")
        rng = point_rng(seed, index)
        tage = point_predictor(microarch, seed, index)
        pc = _random_pc(rng)
        history = int(microarch.history.of_slide(random_slide(rng, microarch.history)))
        outcome = True
        tage.install_entry(cfg.tables, pc, history, not outcome)
        misses = 0
        for _ in range(blocks):
            for _ in range(period):
                misses += execute_branch(tage, pc, history, outcome)
            outcome = not outcome
        rows.append({
            "scenario": "counter-probe",
            "period": period,
            "blocks": blocks,
            "mispredict_rate": misses / (blocks * period),
            "expected_rate": (1 << (cfg.counter_bits - 1)) / period,
        })
    fitted = fit_counter_bits([(row["period"], row["mispredict_rate"]) for row in rows])
    for row in rows:
        row["fitted_counter_bits"] = fitted
    return ScenarioResult("counter-probe", rows, {"counter_bits": fitted}, tage)


def fit_counter_bits(points) -> int | None:
    """Counter width from ``(period, rate)`` points: rate * period = 2^(c-1)."""
    products = [rate * period for period, rate in points if rate > 0]
    if not products:
        return None
    return round(math.log2(float(np.mean(products)))) + 1


# attack campaigns


def victim_for(microarch: Microarch, depth: int, seed: int) -> VictimSpec:
    if not 1 <= depth <= microarch.tage.tables:
        raise ValueError(f"Victim depth {depth} outside 1..{microarch.tage.tables}")
    rng = np.random.default_rng([seed, VICTIM_STREAM])
    return VictimSpec(random_slide(rng, microarch.history), depth)


def _search(microarch, victim, mode, trials, rounds, train_slide, full_reset, seed, workers, chunk_trials):
    trial_cfg = TrialConfig(mode, rounds, seed, train_slide, full_reset)
    return run_search(
        microarch.predictor(), victim, trial_cfg, trials, microarch.history,
        workers=workers, chunk_trials=chunk_trials,
    )


def run_search_campaign(
    microarch: Microarch,
    mode: TrainingMode,
    victim_depth: int,
    trials: int,
    rounds: int = 64,
    train_slide: bool = True,
    full_reset: bool = False,
    *,
    seed: int = 0,
    workers: int = 1,
    chunk_trials: int = DEFAULT_CHUNK_TRIALS,
) -> ScenarioResult:
    mode = TrainingMode(mode)
    victim = victim_for(microarch, victim_depth, seed)
    report = _search(microarch, victim, mode, trials, rounds, train_slide, full_reset, seed, workers, chunk_trials)
    model = ModelParams(microarch.tage.alias_probability, microarch.tage.tables, victim_depth)
    expected = model.lpc_rate if mode is TrainingMode.LPC else model.brute_force_rate
    row = {
        "scenario": "search",
        "mode": mode.value,
        "victim_depth": victim_depth,
        "seed": seed,
        "trials": report.trials,
        "successes": report.successes,
        "success_rate": report.success_rate,
        "expected_rate": float(expected),
        "estimated_exponent": None,
        "chernoff_log_bound": None,
        "lower_bound_only": None,
    }
    summary = {"report": report}
    if report.trials:
        estimate = report.estimate()
        row.update(
            estimated_exponent=estimate.exponent,
            chernoff_log_bound=estimate.chernoff_log_bound,
            lower_bound_only=estimate.lower_bound_only,
        )
        summary["estimate"] = estimate
    return ScenarioResult("search", [row], summary)


def run_lpc_compare(
    microarch: Microarch,
    depths,
    trials: int,
    rounds: int = 64,
    train_slide: bool = True,
    full_reset: bool = False,
    *,
    seed: int = 0,
    workers: int = 1,
    chunk_trials: int = DEFAULT_CHUNK_TRIALS,
) -> ScenarioResult:
    """Brute force against LPC on the same victim, per victim depth."""
    T = microarch.tage.tables
    p = microarch.tage.alias_probability
    rows = []
    for depth in sorted(set(depths)):
        model = ModelParams(p, T, depth)
        victim = victim_for(microarch, depth, seed)
        reports = {
            mode: _search(microarch, victim, mode, trials, rounds, train_slide, full_reset, seed, workers, chunk_trials)
            for mode in TrainingMode
        }
        brute, lpc = reports[TrainingMode.BRUTE_FORCE], reports[TrainingMode.LPC]
        rows.append({
            "scenario": "lpc-compare",
            "victim_depth": depth,
            "trials": trials,
            "bf_successes": brute.successes,
            "lpc_successes": lpc.successes,
            "bf_rate": brute.success_rate,
            "lpc_rate": lpc.success_rate,
            "observed_gain": lpc.success_rate / brute.success_rate if brute.successes else None,
            "expected_bf_rate": float(model.brute_force_rate),
            "expected_lpc_rate": float(model.lpc_rate),
            "expected_gain": lpc_gain(p, depth, T),
        })
    return ScenarioResult("lpc-compare", rows)


CROSSINGS = {
    "el": (USER_CONTEXT, KERNEL_CONTEXT),
    "process": (SecurityContext(PrivilegeLevel.EL0, 1), SecurityContext(PrivilegeLevel.EL0, 2)),
}


def relocate(slide: BranchSlide, high_bits: int) -> BranchSlide:
    """Same slide with every PC and target moved to the 4 GiB window ``high_bits``."""

    def move(address: int) -> int:
        return ((high_bits << 32) | (address & 0xFFFF_FFFF)) & ADDRESS_MASK

    def moved(event: BranchEvent) -> BranchEvent:
        if event.kind.is_conditional:
            return BranchEvent.conditional(move(event.pc), event.immediate, event.kind.taken)
        return BranchEvent(event.kind, move(event.pc), move(event.target))

    return BranchSlide(tuple(moved(e) for e in slide.events), moved(slide.terminal))


def run_isolation(
    microarch: Microarch,
    crossing: str,
    isolation: Isolation | None = None,
    cycles: int = 64,
    rounds: int = EXECUTIONS_PER_PATH,
    *,
    seed: int = 0,
) -> ScenarioResult:
    """
    The attacker mistrains a shadow of the victim's slide in its own context, then
    the victim runs ``rounds`` iterations. A ~25% victim misprediction rate means
    the attacker's training reached the victim.
    """
    try:
        attacker_ctx, victim_ctx = CROSSINGS[crossing]
    except KeyError:
        raise ValueError(f"Unknown crossing '{crossing}' (choose from {', '.join(CROSSINGS)})") from None
    if isolation is not None:
        microarch = Microarch(microarch.name, microarch.history, microarch.tage.with_changes(isolation=Isolation(isolation)))
    model = microarch.history
    rng = point_rng(seed, 0)
    victim_slide = random_slide(rng, model)
    if crossing == "el":
        victim_slide = relocate(victim_slide, KERNEL_HIGH_BITS)
        attacker_slide = relocate(victim_slide, USER_HIGH_BITS)
    else:
        attacker_slide = victim_slide
    tage = point_predictor(microarch, seed, 0)
    victim_pc, victim_history = victim_slide.terminal.pc, model.history_prefixes(victim_slide)[-1]
    correct = True
    victim_misses = attacker_misses = 0
    for _ in range(cycles):
        attacker_misses += train_mistrain(tage, attacker_slide, not correct, rounds, model, attacker_ctx, train_slide=False)
        for _ in range(rounds):
            victim_misses += execute_branch(tage, victim_pc, victim_history, correct, victim_ctx)
    victim_rate = victim_misses / (cycles * rounds)
    classification = classify_rate(victim_rate)
    row = {
        "scenario": "isolation",
        "isolation": microarch.tage.isolation.value,
        "crossing": crossing,
        "attacker_context": str(attacker_ctx),
        "victim_context": str(victim_ctx),
        "victim_mispredict_rate": victim_rate,
        "attacker_mispredict_rate": attacker_misses / (cycles * rounds),
        "classification": classification.value,
        "mistraining_success": _effect(classification) is False,
    }
    return ScenarioResult("isolation", [row], predictor=tage)


@dataclass(frozen=True)
class _AliasJob:
    microarch: Microarch
    pair_a: BranchSlide
    pair_b: BranchSlide
    rounds: int
    seed: int
    index: int


def _run_alias_job(job: _AliasJob) -> float:
    tage = point_predictor(job.microarch, job.seed, job.index)
    return aliasing_detect(tage, job.pair_a, job.pair_b, job.microarch.history, job.rounds).rate


def run_alias_detect(
    microarch: Microarch,
    pairs: int = 8,
    rounds: int = DETECTION_ROUNDS,
    *,
    seed: int = 0,
    workers: int = 1,
) -> ScenarioResult:
    """Engineered aliased pairs (same slide, flipped outcome) and random unrelated pairs."""
    if pairs < 1:
        raise ValueError("pairs must be positive")
    model = microarch.history
    jobs, kinds = [], []
    for index in range(2 * pairs):
        rng = point_rng(seed, index)
        slide = random_slide(rng, model)
        if index % 2 == 0:
            other = slide.with_outcome(False)
            kinds.append("engineered")
        else:
            other = random_slide(rng, model, taken=False)
            kinds.append("random")
        jobs.append(_AliasJob(microarch, slide, other, rounds, seed, index))
    rates = _map(_run_alias_job, jobs, workers)
    rows = []
    for index, (kind, rate) in enumerate(zip(kinds, rates)):
        classification = classify_rate(rate)
        rows.append({
            "scenario": "alias-detect",
            "pair": index,
            "kind": kind,
            "mispredict_rate": rate,
            "classification": classification.value,
            "expected": (Classification.ALIASED if kind == "engineered" else Classification.NON_ALIASED).value,
        })
    return ScenarioResult("alias-detect", rows)


def run_estimate(
    observations=PUBLISHED_OBSERVATIONS,
    synthetic_exponents=(),
    synthetic_trials: int = 10**8,
    *,
    seed: int = 0,
) -> ScenarioResult:
    """
    Search-space estimates for observed ``(trials, successes)``, plus synthetic
    campaigns drawing successes from Bin(n, 2^-e).
    """
    points = [("observed", None, int(n), int(k)) for n, k in observations]
    rng = point_rng(seed, 0)
    for exponent in synthetic_exponents:
        points.append(("synthetic", exponent, synthetic_trials, int(rng.binomial(synthetic_trials, 2.0**-exponent))))
    rows = []
    for source, true_exponent, n, k in points:
        estimate = estimate_search_space(n, k)
        row = {
            "scenario": "estimate",
            "source": source,
            "true_exponent": true_exponent,
            "trials": n,
            "successes": k,
            "success_rate": k / n,
            "exponent": estimate.exponent,
            "chernoff_log_bound": estimate.chernoff_log_bound,
            "lower_bound_only": estimate.lower_bound_only,
        }
        for delta in (-2, -1, 1, 2):
            row[f"bound_at_{delta:+d}"] = estimate.diagnostics.get(estimate.exponent + delta)
        rows.append(row)
    return ScenarioResult("estimate", rows)


@dataclass(frozen=True)
class Scenario:
    name: str
    runner: Callable
    parallel: bool = False
    chunked: bool = False
    microarch: bool = True


SCENARIOS = {
    scenario.name: scenario
    for scenario in (
        Scenario("bit-effect", run_bit_effect, parallel=True),
        Scenario("distance-sweep", run_distance_sweep, parallel=True),
        Scenario("update-policy", run_update_policy, parallel=True),
        Scenario("outcome-effect", run_outcome_effect, parallel=True),
        Scenario("counter-probe", run_counter_probe),
        Scenario("search", run_search_campaign, parallel=True, chunked=True),
        Scenario("lpc-compare", run_lpc_compare, parallel=True, chunked=True),
        Scenario("isolation", run_isolation),
        Scenario("alias-detect", run_alias_detect, parallel=True),
        Scenario("estimate", run_estimate, microarch=False),
        Scenario("branch-types", run_branch_type, parallel=True),
        Scenario("high-bits", run_high_bits, parallel=True),
    )
}


def run_scenario(
    name: str,
    microarch: Microarch,
    params: dict,
    *,
    seed: int = 0,
    workers: int = 1,
    chunk_trials: int = DEFAULT_CHUNK_TRIALS,
) -> ScenarioResult:
    scenario = SCENARIOS[name]
    kwargs = dict(params, seed=seed)
    if scenario.parallel:
        kwargs["workers"] = workers
    if scenario.chunked:
        kwargs["chunk_trials"] = chunk_trials
    logger.info(f"Running {name} on {microarch.name} with seed {seed}")
    if scenario.microarch:
        return scenario.runner(microarch, **kwargs)
    return scenario.runner(**kwargs)
