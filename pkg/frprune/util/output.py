from pathlib import Path
from typing import Union
import pandas as pd


def pretty_time(t: float) -> str:
    """
    Outputs elapsed time as user-friendly string.  Used e.g. to display the search time of a prune event.
    :param t: time in seconds
    """

    # Sub-second timings are common for small models, keep two decimals there
    if t < 1:
        return f"{t:.2f}s"

    # Less than a minute?
    elif t < 60:
        return str(int(t)) + "s"

    # Less than an hour, more than a minute?
    elif t < 60 * 60:
        return str(int(t / 60)) + "m " + str(int(t % 60)) + "s"

    # More than an hour?
    else:
        return str(int(t / (60 * 60))) + "h " + str(int(int(t / 60) % 60)) + "m " + str(int(t % 60)) + "s"


def write_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """
    Write a report table with a stable column order and a fixed float format, so that two identical runs
    produce byte-identical files.
    :param frame: table to write
    :param path: destination file, parent directories are created
    :return: path written to
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.9g", lineterminator="\n")
    return path
