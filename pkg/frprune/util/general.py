from typing import Dict, Iterable
import numpy as np

from frprune.util.errors import NonFiniteError

# Independent random streams derived from one run seed
SEED_STREAMS = ("init", "shuffle", "augment", "subset", "criterion")


def check_finite(tensor: np.ndarray, where: str) -> np.ndarray:
    """
    Raise if a kernel produced NaN or Inf.
    :param tensor: kernel output
    :param where: name of the kernel, used in the error message
    :return: the tensor itself, so calls can be chained
    """
    if not np.all(np.isfinite(tensor)):
        bad = int(np.size(tensor) - np.count_nonzero(np.isfinite(tensor)))
        raise NonFiniteError(f"{where} produced {bad} non-finite value(s)")
    return tensor


def seed_streams(seed: int, names: Iterable[str] = SEED_STREAMS) -> Dict[str, np.random.Generator]:
    """
    Derive one reproducible generator per named purpose from a single run seed, so that e.g. changing the
    amount of augmentation does not shift the shuffle order.
    """
    names = list(names)
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def fix_decimal_issue(float_number: float, precision: int = 2) -> float:
    """
    Round a float for reporting, so that 59.999999 is shown as 60.0 rather than carried through tables.
    :param float_number: the float number to fix
    :param precision: the precision of the number (in decimal places)
    """
    precision_factor = 10 ** precision
    return round(float_number * precision_factor) / precision_factor


def percent_drop(baseline: float, current: float, precision: int = 2) -> float:
    """
    Relative drop from baseline to current in percent, i.e. 100 * (1 - current / baseline).
    :param baseline: reference value (must be positive)
    :param current: value after pruning
    :param precision: decimal places kept in the result
    """
    if baseline <= 0:
        raise ValueError("baseline must be positive to compute a percentage drop")
    return fix_decimal_issue(100.0 * (1.0 - current / baseline), precision)
