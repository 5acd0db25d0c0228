"""Per-trial records shared by the experiments and the command line."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class TrialRecord:
    experiment: str
    trial_index: int
    seed: int
    n: int | None = None
    p: float | None = None
    T: int | None = None  # None when the grid did not percolate
    percolated: bool | None = None
    longest_empty_double_line: int | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "TrialRecord":
        return cls(**json.loads(line))
