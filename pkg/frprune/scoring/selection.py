from dataclasses import dataclass, field
from typing import Dict, List, Optional
import numpy as np
import pandas as pd

from frprune.model.layer_spec import ChannelRef
from frprune.model.model_graph import ModelGraph
from frprune.util.errors import SelectionError, ShapeMismatchError

SCORE_COLUMNS = ["layer_id", "channel", "score", "criterion"]


class RankingMode:
    """ How scores are compared when picking victims """
    raw = "raw"  # signed value, negative relevance is pruned first
    absolute = "absolute"  # magnitude, for ablations only

    @staticmethod
    def to_list():
        return [RankingMode.raw, RankingMode.absolute]


@dataclass
class GlobalScoreTable:
    """ One score per prune-eligible channel of a model, ordered by (layer id, channel) """
    refs: List[ChannelRef] = field(default_factory=list)
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))
    criterion: str = ""

    def __post_init__(self) -> None:
        self.refs = [ChannelRef(int(r[0]), int(r[1])) for r in self.refs]
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if len(self.refs) != self.scores.shape[0]:
            raise ShapeMismatchError("score table entries", (len(self.refs),), self.scores.shape)

    def __len__(self) -> int:
        return len(self.refs)

    @staticmethod
    def from_layer_scores(model: ModelGraph, layer_scores: Dict[int, np.ndarray],
                          criterion: str) -> "GlobalScoreTable":
        """
        Assemble a table from per-layer score vectors, which must cover every eligible layer with one score per
        live channel.
        """
        refs, scores = [], []
        for ref in model.eligible_channels():
            layer = np.asarray(layer_scores[ref.layer_id]).reshape(-1)
            if layer.shape[0] != model.channel_count(ref.layer_id):
                raise ShapeMismatchError(f"scores of layer {ref.layer_id}", (model.channel_count(ref.layer_id),),
                                         layer.shape)
            refs.append(ref)
            scores.append(layer[ref.channel])
        return GlobalScoreTable(refs, np.asarray(scores, dtype=np.float64), criterion)

    def layer_scores(self, layer_id: int) -> np.ndarray:
        return np.asarray([s for ref, s in zip(self.refs, self.scores) if ref.layer_id == layer_id])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "layer_id": [ref.layer_id for ref in self.refs],
            "channel": [ref.channel for ref in self.refs],
            "score": self.scores,
            "criterion": [self.criterion] * len(self.refs),
        }, columns=SCORE_COLUMNS)

    @staticmethod
    def from_frame(frame: pd.DataFrame) -> "GlobalScoreTable":
        criterion = str(frame["criterion"].iloc[0]) if len(frame) else ""
        refs = [ChannelRef(int(l), int(c)) for l, c in zip(frame["layer_id"], frame["channel"])]
        return GlobalScoreTable(refs, frame["score"].to_numpy(dtype=np.float64), criterion)


def select_prune_set(table: GlobalScoreTable, x: int, ranking: str = RankingMode.raw,
                     floor: int = 1) -> List[ChannelRef]:
    """
    Pick the x channels with the globally smallest scores.
    Ties are broken by (layer id, channel) ascending.  A candidate whose removal would leave its layer with
    fewer than `floor` channels is skipped in favour of the next-smallest.
    :param table: scores of every eligible channel (the entries per layer are that layer's live channels)
    :param x: number of channels to remove
    :param ranking: "raw" (signed) or "absolute"
    :param floor: channels every layer keeps
    :return: victims ordered by (layer id, channel)
    """
    if ranking not in RankingMode.to_list():
        raise SelectionError(f"Unknown ranking mode '{ranking}', expected one of {RankingMode.to_list()}")
    if x < 0:
        raise SelectionError(f"Cannot select a negative number of channels ({x})")
    if x == 0:
        return []
    layer_ids = np.asarray([ref.layer_id for ref in table.refs], dtype=np.int64)
    channels = np.asarray([ref.channel for ref in table.refs], dtype=np.int64)
    keys = np.abs(table.scores) if ranking == RankingMode.absolute else table.scores
    order = np.lexsort((channels, layer_ids, keys))

    remaining: Dict[int, int] = {}
    for layer_id in layer_ids:
        remaining[int(layer_id)] = remaining.get(int(layer_id), 0) + 1
    victims: List[ChannelRef] = []
    for position in order:
        layer_id = int(layer_ids[position])
        if remaining[layer_id] <= floor:
            continue
        remaining[layer_id] -= 1
        victims.append(table.refs[position])
        if len(victims) == x:
            return sorted(victims)
    raise SelectionError(f"Cannot remove {x} channels: only {len(victims)} can go while every layer keeps "
                         f"{floor} channel(s)")


def selection_capacity(table: GlobalScoreTable, floor: int = 1) -> int:
    """ Largest x select_prune_set can satisfy """
    counts: Dict[int, int] = {}
    for ref in table.refs:
        counts[ref.layer_id] = counts.get(ref.layer_id, 0) + 1
    return int(sum(max(count - floor, 0) for count in counts.values()))


def describe(table: GlobalScoreTable, top: Optional[int] = 5) -> str:
    """ Short human-readable summary of the lowest scores, for debug output """
    frame = table.to_frame().sort_values(["score", "layer_id", "channel"], kind="mergesort")
    return frame.head(top).to_string(index=False)
