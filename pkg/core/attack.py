"""
Mistraining harness: victim setup, brute-force and LPC training, chunked
search campaigns and the alternating-block aliasing detector.

Slide branches only feed the predictor when ``train_slide`` is set; the
terminal branch always goes through predict/update.
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bhr import (
    IMMEDIATE_MAX,
    IMMEDIATE_MIN,
    BranchEvent,
    BranchSlide,
    HistoryModel,
)
from .stats import EstimateResult, estimate_search_space
from .tage import USER_CONTEXT, SecurityContext, TageConfig, TagePredictor, component_hash

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_TRIALS = 4096
ALIASED_BAND = (0.20, 0.30)
NON_ALIASED_CEILING = 0.02
DETECTION_ROUNDS = 128


class VictimSetupError(ValueError):
    """The victim could not be made to be provided by the requested component."""


class TrainingMode(enum.Enum):
    BRUTE_FORCE = "brute-force"
    LPC = "lpc"


class Classification(enum.Enum):
    ALIASED = "aliased"
    NON_ALIASED = "non-aliased"
    INDETERMINATE = "indeterminate"


def classify_rate(rate: float) -> Classification:
    if ALIASED_BAND[0] <= rate <= ALIASED_BAND[1]:
        return Classification.ALIASED
    if rate <= NON_ALIASED_CEILING:
        return Classification.NON_ALIASED
    return Classification.INDETERMINATE


@dataclass(frozen=True)
class VictimSpec:
    slide: BranchSlide
    provider_depth: int
    correct_outcome: bool = True

    @property
    def branch(self) -> BranchEvent:
        return self.slide.terminal


@dataclass(frozen=True)
class TrialConfig:
    mode: TrainingMode = TrainingMode.BRUTE_FORCE
    rounds: int = 64
    seed: int = 0
    train_slide: bool = True
    full_reset: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", TrainingMode(self.mode))
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")

    def check_against(self, config: TageConfig):
        """Training must be long enough to saturate a freshly allocated counter."""
        minimum = 1 << (config.counter_bits + 1)
        if self.rounds < minimum:
            raise ValueError(f"rounds={self.rounds} below 2^(c+1)={minimum}")


@dataclass(frozen=True)
class SearchReport:
    mode: TrainingMode
    seed: int
    trials: int = 0
    successes: int = 0

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0

    def __add__(self, other: "SearchReport") -> "SearchReport":
        if (self.mode, self.seed) != (other.mode, other.seed):
            raise ValueError("Only reports of the same campaign can be merged")
        return SearchReport(self.mode, self.seed, self.trials + other.trials, self.successes + other.successes)

    def estimate(self) -> EstimateResult:
        return estimate_search_space(self.trials, self.successes)


def random_slide(rng: np.random.Generator, model: HistoryModel, length: int | None = None, taken: bool = True) -> BranchSlide:
    """
    ``length`` (default HL) taken conditional branches plus a conditional terminal,
    with PC bits 2..30 and 32..46 and immediates drawn uniformly.
    """
    count = (model.history_length if length is None else length) + 1
    low = rng.integers(0, 1 << 29, size=count, dtype=np.int64) << 2
    high = rng.integers(0, 1 << 15, size=count, dtype=np.int64) << 32
    immediates = rng.integers(IMMEDIATE_MIN, IMMEDIATE_MAX + 1, size=count, dtype=np.int64)
    events = [BranchEvent.conditional(int(lo | hi), int(imm)) for lo, hi, imm in zip(low, high, immediates)]
    terminal = events.pop()
    return BranchSlide(tuple(events), terminal.with_outcome(taken))


def setup_victim(
    tage: TagePredictor, victim: VictimSpec, model: HistoryModel, ctx: SecurityContext = USER_CONTEXT
) -> int:
    """Make component ``provider_depth`` the victim's provider; returns the victim history."""
    pc = victim.branch.pc
    history = model.history_prefixes(victim.slide)[-1]
    depth = victim.provider_depth
    if not 1 <= depth <= tage.config.tables:
        raise VictimSetupError(f"Victim depth {depth} outside 1..{tage.config.tables}")
    tage.evict(pc, history, ctx, keep=depth)
    tage.install_entry(depth, pc, history, victim.correct_outcome, ctx)
    tage.seed_base(pc, victim.correct_outcome, ctx)
    provider = tage.provider_of(pc, history, ctx)
    if provider != depth:
        raise VictimSetupError(f"Victim provided by component {provider}, expected {depth}")
    return history


def execute_branch(
    tage: TagePredictor, pc: int, history: int, taken: bool, ctx: SecurityContext = USER_CONTEXT
) -> bool:
    """Predict and resolve one branch; returns whether it mispredicted."""
    prediction = tage.predict(pc, history, ctx)
    tage.update(pc, history, taken, ctx)
    return prediction.direction != taken


def _execute(tage: TagePredictor, slide: BranchSlide, prefixes, taken: bool, ctx: SecurityContext, train_slide: bool) -> bool:
    if train_slide:
        for event, history in zip(slide.events, prefixes):
            if event.kind.is_conditional:
                tage.predict(event.pc, history, ctx)
                tage.update(event.pc, history, event.kind.taken, ctx)
    return execute_branch(tage, slide.terminal.pc, prefixes[-1], taken, ctx)


def train_mistrain(
    tage: TagePredictor,
    slide: BranchSlide,
    desired: bool,
    rounds: int,
    model: HistoryModel,
    ctx: SecurityContext = USER_CONTEXT,
    train_slide: bool = True,
) -> int:
    """Brute-force training of the slide's terminal toward ``desired``; returns mispredictions."""
    if rounds == 0:
        return 0
    prefixes = model.history_prefixes(slide)
    return sum(_execute(tage, slide, prefixes, desired, ctx, train_slide) for _ in range(rounds))


def lpc_primitive(
    tage: TagePredictor,
    slide: BranchSlide,
    taken: bool,
    rounds: int,
    model: HistoryModel,
    ctx: SecurityContext = USER_CONTEXT,
    train_slide: bool = True,
) -> int:
    """
    Alternate ``slide`` trained toward ``taken`` with its last-bit-flipped twin
    trained the other way, pushing allocation toward the last component.
    """
    flipped = model.flip_last_bit(slide)
    prefixes = model.history_prefixes(slide)
    flipped_prefixes = model.history_prefixes(flipped)
    mispredictions = 0
    for _ in range(rounds):
        mispredictions += _execute(tage, slide, prefixes, taken, ctx, train_slide)
        mispredictions += _execute(tage, flipped, flipped_prefixes, not taken, ctx, train_slide)
    return mispredictions


def trial(
    tage: TagePredictor,
    victim: VictimSpec,
    trial_cfg: TrialConfig,
    rng: np.random.Generator,
    model: HistoryModel,
    attacker_ctx: SecurityContext = USER_CONTEXT,
    victim_ctx: SecurityContext = USER_CONTEXT,
    slide: BranchSlide | None = None,
) -> bool:
    """One attack: restore the victim, train a random slide, check the victim's prediction."""
    if trial_cfg.full_reset:
        tage.reset()
    history = setup_victim(tage, victim, model, victim_ctx)
    if slide is None:
        slide = random_slide(rng, model)
    desired = not victim.correct_outcome
    if trial_cfg.mode is TrainingMode.LPC:
        lpc_primitive(tage, slide, desired, trial_cfg.rounds, model, attacker_ctx, trial_cfg.train_slide)
    else:
        train_mistrain(tage, slide, desired, trial_cfg.rounds, model, attacker_ctx, trial_cfg.train_slide)
    return tage.peek(victim.branch.pc, history, victim_ctx).direction == desired


def last_component_alias(config: TageConfig, victim: VictimSpec, slide: BranchSlide, model: HistoryModel) -> bool:
    """Whether ``slide``'s terminal shares the victim's set and tag in the last component."""
    T = config.tables
    attacker = component_hash(T, slide.terminal.pc, int(model.of_slide(slide)), config)
    target = component_hash(T, victim.branch.pc, int(model.of_slide(victim.slide)), config)
    return attacker == target


@dataclass(frozen=True)
class _Chunk:
    config: TageConfig
    model: HistoryModel
    victim: VictimSpec
    trial_cfg: TrialConfig
    attacker_ctx: SecurityContext
    victim_ctx: SecurityContext
    index: int
    trials: int


def _run_chunk(chunk: _Chunk) -> SearchReport:
    sequence = np.random.SeedSequence(chunk.trial_cfg.seed, spawn_key=(chunk.index,))
    predictor_seq, trial_seq = sequence.spawn(2)
    tage = TagePredictor(chunk.config, int(predictor_seq.generate_state(1, dtype=np.uint64)[0]))
    rng = np.random.default_rng(trial_seq)
    successes = sum(
        trial(tage, chunk.victim, chunk.trial_cfg, rng, chunk.model, chunk.attacker_ctx, chunk.victim_ctx)
        for _ in range(chunk.trials)
    )
    logger.debug(f"Chunk {chunk.index}: {successes}/{chunk.trials} successes")
    return SearchReport(chunk.trial_cfg.mode, chunk.trial_cfg.seed, chunk.trials, successes)


def run_search(
    tage: TagePredictor,
    victim: VictimSpec,
    trial_cfg: TrialConfig,
    n_trials: int,
    model: HistoryModel,
    attacker_ctx: SecurityContext = USER_CONTEXT,
    victim_ctx: SecurityContext = USER_CONTEXT,
    workers: int = 1,
    chunk_trials: int = DEFAULT_CHUNK_TRIALS,
) -> SearchReport:
    """
    Run ``n_trials`` trials in fixed-size chunks, each on a fresh predictor built
    from ``tage.config`` and seeded from ``(trial_cfg.seed, chunk index)``.
    The report does not depend on ``workers``.
    """
    if n_trials < 0:
        raise ValueError("n_trials must be non-negative")
    if n_trials == 0:
        return SearchReport(trial_cfg.mode, trial_cfg.seed)
    if chunk_trials < 1:
        raise ValueError("chunk_trials must be positive")
    trial_cfg.check_against(tage.config)
    chunks = [
        _Chunk(tage.config, model, victim, trial_cfg, attacker_ctx, victim_ctx, index, min(chunk_trials, n_trials - start))
        for index, start in enumerate(range(0, n_trials, chunk_trials))
    ]
    logger.info(f"{trial_cfg.mode.value} search: {n_trials} trials in {len(chunks)} chunks, {workers} workers")
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_chunk, chunks))
    else:
        reports = [_run_chunk(chunk) for chunk in chunks]
    total = SearchReport(trial_cfg.mode, trial_cfg.seed)
    for report in reports:
        total = total + report
    return total


@dataclass(frozen=True)
class AliasingResult:
    mispredictions: int
    executions: int

    @property
    def rate(self) -> float:
        return self.mispredictions / self.executions

    @property
    def classification(self) -> Classification:
        return classify_rate(self.rate)


def aliasing_detect(
    tage: TagePredictor,
    pair_a: BranchSlide,
    pair_b: BranchSlide,
    model: HistoryModel,
    rounds: int = DETECTION_ROUNDS,
    ctx: SecurityContext = USER_CONTEXT,
) -> AliasingResult:
    """
    Run the two pairs in alternating blocks of ``2^(c+1)`` executions, each with
    the fixed outcome of its terminal. Only the terminals touch the predictor.
    """
    if pair_a.taken == pair_b.taken:
        raise ValueError("Aliasing detection needs pairs with opposite outcomes")
    block = 1 << (tage.config.counter_bits + 1)
    pairs = [(slide.terminal.pc, int(model.of_slide(slide)), slide.taken) for slide in (pair_a, pair_b)]
    mispredictions = 0
    for _ in range(rounds):
        for pc, history, taken in pairs:
            for _ in range(block):
                mispredictions += execute_branch(tage, pc, history, taken, ctx)
    result = AliasingResult(mispredictions, rounds * 2 * block)
    if result.classification is Classification.INDETERMINATE:
        logger.warning(f"Aliasing detection indeterminate: misprediction rate {result.rate:.3f}")
    return result
