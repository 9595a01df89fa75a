"""Ideal pi-pulse schedules for FID, Hahn echo and CPMG-N."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("FID", "CPMG")


@dataclass(frozen=True)
class PulseSequence:
    kind: str
    N: int
    total_time: float

    @property
    def tau(self) -> float:
        """Half pulse spacing t / 2N (the full time for FID)."""
        return self.total_time if self.N == 0 else self.total_time / (2 * self.N)

    @property
    def pulse_times(self) -> np.ndarray:
        if self.N == 0:
            return np.zeros(0)
        j = np.arange(1, self.N + 1)
        return (2 * j - 1) * self.total_time / (2 * self.N)

    @property
    def label(self) -> str:
        return "FID" if self.N == 0 else f"CPMG{self.N}"


def schedule(kind: str, N: int, total_time: float) -> PulseSequence:
    """Pulse j of N sits at (2j - 1) t / 2N; Hahn echo is CPMG with N = 1."""
    kind = kind.upper()
    if kind == "HAHN":
        kind, N = "CPMG", 1
    if kind not in KINDS:
        raise ValueError(f"unknown sequence kind {kind!r}")
    if not total_time > 0:
        raise ValueError("total_time must be positive")
    if kind == "FID":
        return PulseSequence("FID", 0, float(total_time))
    if int(N) != N or N < 1:
        raise ValueError("CPMG needs N >= 1 pulses")
    return PulseSequence("CPMG", int(N), float(total_time))


def parse_sequence(text: str) -> tuple[str, int]:
    """'FID', 'hahn', 'CPMG4' or 'cpmg:4' -> (kind, N)."""
    s = text.strip().upper().replace(":", "")
    if s == "FID":
        return "FID", 0
    if s in ("HAHN", "ECHO"):
        return "CPMG", 1
    if s.startswith("CPMG") and s[4:].isdigit():
        return "CPMG", int(s[4:])
    raise ValueError(f"cannot parse sequence {text!r}")
