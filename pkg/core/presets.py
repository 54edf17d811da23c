"""
Named microarchitecture presets. TAGE geometry of the M1 cores is not public;
these values are chosen so the history-side behaviour matches the M1 cores and
the TAGE side stays small enough to simulate.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bhr import AttributeMaskSet, BhrConfig, HistoryModel
from .tage import Isolation, TageConfig, TagePredictor

M1_MASKS = AttributeMaskSet(
    cond_pc_bits=frozenset(range(2, 25)),
    cond_imm_bits=frozenset(range(0, 19)),
    indir_pc_bits=frozenset(range(2, 6)) | frozenset(range(25, 31)),
    indir_target_bits=frozenset(range(2, 31)),
    anomalous_cond_pc_bits=frozenset({5}),
    anomalous_cond_imm_bits=frozenset({2}),
)

FIRESTORM_HISTORY = 100
ICESTORM_HISTORY = 60


@dataclass(frozen=True)
class Microarch:
    name: str
    history: HistoryModel
    tage: TageConfig

    def __post_init__(self):
        if self.tage.history_lengths[-1] != self.history.width:
            raise ValueError(
                f"Longest TAGE history {self.tage.history_lengths[-1]} must equal the BHR width {self.history.width}"
            )

    def predictor(self, seed: int = 0) -> TagePredictor:
        return TagePredictor(self.tage, seed)


def _history(length: int, masks: AttributeMaskSet = M1_MASKS) -> HistoryModel:
    return HistoryModel(masks, BhrConfig(length))


FIRESTORM = Microarch(
    "firestorm",
    _history(FIRESTORM_HISTORY),
    TageConfig.geometric(tables=6, width=FIRESTORM_HISTORY, sets_log=10, tag_bits=12),
)

ICESTORM = Microarch(
    "icestorm",
    _history(ICESTORM_HISTORY),
    TageConfig.geometric(
        tables=5, width=ICESTORM_HISTORY, sets_log=9, tag_bits=11, isolation=Isolation.PRIVILEGE_TAG
    ),
)

# p = 2^-12: mistraining searches finish in seconds
DESK = Microarch(
    "desk",
    _history(FIRESTORM_HISTORY),
    TageConfig.geometric(tables=4, width=FIRESTORM_HISTORY, sets_log=6, tag_bits=6, base_log=10),
)

TINY = Microarch(
    "tiny",
    _history(8),
    TageConfig(tables=2, sets_log=3, tag_bits=3, ways_log=2, history_lengths=(4, 8), base_log=6),
)

PRESETS = {preset.name: preset for preset in (FIRESTORM, ICESTORM, DESK, TINY)}


def get_preset(name: str) -> Microarch:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"Unknown preset '{name}' (choose from {', '.join(PRESETS)})") from None
