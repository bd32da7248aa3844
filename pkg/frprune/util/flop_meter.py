from collections import defaultdict
from typing import Dict


class FlopMeter:
    """
    Tally of multiply-accumulates (one MAC = one FLOP) actually executed, grouped by phase
    ("forward", "relevance").  Kernels and the relevance engine add to it when one is passed in.
    """

    def __init__(self) -> None:
        self.counts: Dict[str, int] = defaultdict(int)

    def add(self, phase: str, flops: int) -> None:
        self.counts[phase] += int(flops)

    def total(self) -> int:
        return int(sum(self.counts.values()))

    def __getitem__(self, phase: str) -> int:
        return int(self.counts.get(phase, 0))

    def reset(self) -> None:
        self.counts.clear()
