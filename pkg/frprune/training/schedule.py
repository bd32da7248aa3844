from dataclasses import dataclass, field
from typing import List, Tuple

from frprune.util.errors import ConfigError


@dataclass
class PruneSchedule:
    """
    Prune x channels after every n-th epoch while epoch < N1, train N epochs in total.  Epochs count from 1.
    """
    total_epochs: int
    prune_until: int
    interval: int
    channels_per_event: int

    def __post_init__(self) -> None:
        if self.total_epochs < 1:
            raise ConfigError("total number of epochs must be at least 1", key="epochs", section="optimizer")
        if self.interval < 1:
            raise ConfigError("epochs between prune events must be at least 1", key="interval", section="prune")
        if self.prune_until > self.total_epochs:
            raise ConfigError("pruning must end at or before the last epoch (N1 <= N)", key="prune_until",
                              section="prune")
        if self.channels_per_event < 0:
            raise ConfigError("channels per prune event must be >= 0", key="channels_per_event", section="prune")

    @property
    def k(self) -> int:
        """ Number of pruning stages, int(N1 / n) """
        return self.prune_until // self.interval

    @property
    def num_events(self) -> int:
        """
        Prune events actually run.  This is k - 1 when n divides N1 (no event on epoch N1 itself) and k
        otherwise, e.g. N1=21, n=3 has k=7 but events after epochs 3..18 only.
        """
        return len(self.event_epochs())

    def event_epochs(self) -> List[int]:
        return [epoch for epoch in range(self.interval, self.prune_until, self.interval)]

    def planned_removals(self) -> int:
        return self.num_events * self.channels_per_event


def should_prune(epoch: int, schedule: PruneSchedule) -> bool:
    """ True after epoch `epoch` (1-based) when it is a multiple of n and strictly before N1 """
    return epoch % schedule.interval == 0 and epoch < schedule.prune_until and epoch >= 1


@dataclass
class LrSchedule:
    """
    Step schedule: the rate is divided by `divisor` once an epoch passes each milestone, i.e. epochs
    1..m use the rate before milestone m and epoch m+1 the divided one.
    """
    initial: float
    milestones: List[Tuple[int, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.initial <= 0:
            raise ConfigError("initial learning rate must be positive", key="lr", section="optimizer")
        epochs = [int(m[0]) for m in self.milestones]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ConfigError("learning-rate milestones must be strictly increasing", key="milestones",
                              section="optimizer")
        if any(float(m[1]) <= 0 for m in self.milestones):
            raise ConfigError("learning-rate divisors must be positive", key="lr_divisor", section="optimizer")

    def rate(self, epoch: int) -> float:
        lr = self.initial
        for milestone, divisor in self.milestones:
            if epoch > milestone:
                lr /= divisor
        return lr
