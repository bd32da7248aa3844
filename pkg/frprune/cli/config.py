"""
Run configuration files.

Grammar (see README.md):
    [section]            one of run, architecture, dataset, optimizer, prune
    key = value          booleans (true/false/yes/no), integers, floats, bare strings
    key = a, b, c        comma-separated lists
    # or ;               comment lines, also allowed after a value
Every key may appear once per file.  `[run] profile` picks the defaults the file overrides.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from frprune.cli.profiles import SECTIONS, get_profile
from frprune.data.datasets import DatasetSpec
from frprune.lrp.lrp_config import LrpConfig
from frprune.model.builders import ArchitectureConfig
from frprune.scoring.criteria import Criterion
from frprune.scoring.feature_relevance import WeightingMode
from frprune.scoring.selection import RankingMode
from frprune.training.schedule import LrSchedule, PruneSchedule
from frprune.util.errors import ArchitectureError, ConfigError

# Keys whose value is always a list, even with a single entry
LIST_KEYS = {"channels", "pool_after", "input_shape", "train_files", "test_files", "mean", "std", "image_shape",
             "milestones", "seeds", "sweep_values"}

class SweepKey:
    """ Schedule settings `sweep` can vary, one run per value """
    channels_per_event = "channels_per_event"
    interval = "interval"

    @staticmethod
    def to_list():
        return [SweepKey.channels_per_event, SweepKey.interval]


TRUE_WORDS = ("true", "yes", "on")
FALSE_WORDS = ("false", "no", "off")


def parse_value(text: str) -> Any:
    """ Convert one scalar token to bool, int, float or str """
    token = text.strip()
    lowered = token.lower()
    if lowered in TRUE_WORDS:
        return True
    if lowered in FALSE_WORDS:
        return False
    if lowered in ("none", "null"):
        return None
    for cast in (int, float):
        try:
            return cast(token)
        except ValueError:
            pass
    return token


def _strip_comment(line: str) -> str:
    for marker in ("#", ";"):
        position = line.find(marker)
        if position >= 0:
            line = line[:position]
    return line.strip()


@dataclass
class ConfigEntry:
    value: Any
    line: int


def parse_config_text(text: str, path: Optional[str] = None) -> Dict[str, Dict[str, ConfigEntry]]:
    """
    Parse config text into {section: {key: ConfigEntry}} without applying defaults.
    """
    sections: Dict[str, Dict[str, ConfigEntry]] = {}
    current: Optional[str] = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header '{line}'", line=number, path=path)
            current = line[1:-1].strip().lower()
            if current not in SECTIONS:
                raise ConfigError(f"unknown section '{current}', expected one of {list(SECTIONS)}", line=number,
                                  path=path)
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got '{line}'", line=number, section=current, path=path)
        if current is None:
            raise ConfigError("key outside of any [section]", line=number, path=path)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("missing key before '='", line=number, section=current, path=path)
        if key in sections[current]:
            raise ConfigError(f"duplicate key (first set on line {sections[current][key].line})", key=key,
                              section=current, line=number, path=path)
        if key in LIST_KEYS or "," in value:
            parsed = [parse_value(part) for part in value.split(",") if part.strip()]
        else:
            parsed = parse_value(value)
        sections[current][key] = ConfigEntry(parsed, number)
    return sections


@dataclass
class RunConfig:
    """
    Validated settings of one run.  Each block is a plain dict of parameters for the object it configures;
    `lines` remembers where every key was set for error messages.
    """
    run: dict = field(default_factory=dict)
    architecture: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    prune: dict = field(default_factory=dict)
    path: Optional[str] = None
    lines: Dict[Tuple[str, str], int] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return int(self.run["seed"])

    @property
    def seeds(self) -> List[int]:
        return [int(s) for s in self.run["seeds"]] or [self.seed]

    @property
    def sweep(self) -> Tuple[str, List[int]]:
        return str(self.run["sweep_key"]), [int(v) for v in self.run["sweep_values"]]

    @property
    def output_dir(self) -> Path:
        return Path(self.run["output_dir"])

    @property
    def debug(self) -> bool:
        return bool(self.run["debug"])

    def arch_config(self) -> ArchitectureConfig:
        return ArchitectureConfig(self.architecture)

    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec(self.dataset)

    def lrp_config(self) -> LrpConfig:
        return LrpConfig({key: self.prune[key] for key in ("alpha", "beta", "epsilon", "pool_rule", "bn_handling")})

    def trainer_params(self) -> dict:
        return {
            "epochs": self.optimizer["epochs"],
            "prune_until": self.prune["prune_until"],
            "interval": self.prune["interval"],
            "channels_per_event": self.prune["channels_per_event"],
            "criterion": self.prune["criterion"],
            "ranking": self.prune["ranking"],
            "lr": self.optimizer["lr"],
            "milestones": list(self.optimizer["milestones"]),
            "lr_divisor": self.optimizer["lr_divisor"],
            "momentum": self.optimizer["momentum"],
            "weight_decay": self.optimizer["weight_decay"],
            "batch_size": self.optimizer["batch_size"],
            "seed": self.seed,
        }

    def scorer_params(self) -> dict:
        return {
            "alpha": self.prune["alpha"],
            "beta": self.prune["beta"],
            "epsilon": self.prune["epsilon"],
            "pool_rule": self.prune["pool_rule"],
            "bn_handling": self.prune["bn_handling"],
            "weighting": self.prune["weighting"],
            "scoring_subset": self.prune["scoring_subset"],
            "batch_size": self.prune["scoring_batch_size"],
        }

    def prune_schedule(self, **overrides) -> PruneSchedule:
        """ The configured schedule, with `interval` or `channels_per_event` replaced when given """
        prune = dict(self.prune, **overrides)
        return PruneSchedule(self.optimizer["epochs"], prune["prune_until"], prune["interval"],
                             prune["channels_per_event"])

    def lr_schedule(self) -> LrSchedule:
        return LrSchedule(self.optimizer["lr"], [(int(m), self.optimizer["lr_divisor"])
                                                 for m in self.optimizer["milestones"]])

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[str] = None) -> "RunConfig":
        """ Copy with the only two settings the command line may change """
        run = dict(self.run)
        if seed is not None:
            run["seed"] = int(seed)
        if output_dir is not None:
            run["output_dir"] = str(output_dir)
        return RunConfig(run, dict(self.architecture), dict(self.dataset), dict(self.optimizer), dict(self.prune),
                         self.path, dict(self.lines))

    def validate(self) -> None:
        """ Build every configured object once so all constraint checks run, attributing failures to lines """
        checks = [
            ("architecture", self.arch_config),
            ("dataset", self.dataset_spec),
            ("prune", self.lrp_config),
            ("prune", self.prune_schedule),
            ("optimizer", self.lr_schedule),
            ("prune", self._check_prune),
            ("optimizer", self._check_optimizer),
            ("run", self._check_sweep),
        ]
        for section, check in checks:
            try:
                check()
            except ConfigError as e:
                section = e.section or section
                raise ConfigError(e.message, key=e.key, section=section, line=self.lines.get((section, e.key)),
                                  path=self.path) from e
            except ArchitectureError as e:
                key = "depth" if "depth" in str(e) else "family"
                raise ConfigError(str(e), key=key, section=section, line=self.lines.get((section, key)),
                                  path=self.path) from e

    def _check_prune(self) -> None:
        for key, allowed in (("criterion", Criterion.to_list()), ("ranking", RankingMode.to_list()),
                             ("weighting", WeightingMode.to_list())):
            if self.prune[key] not in allowed:
                raise ConfigError(f"must be one of {allowed}, got '{self.prune[key]}'", key=key, section="prune")
        for key in ("scoring_subset", "scoring_batch_size", "channels_per_event"):
            if int(self.prune[key]) < 0:
                raise ConfigError(f"{key} must be >= 0", key=key, section="prune")
        if int(self.prune["scoring_batch_size"]) < 1:
            raise ConfigError("scoring_batch_size must be at least 1", key="scoring_batch_size", section="prune")

    def _check_optimizer(self) -> None:
        if int(self.optimizer["batch_size"]) < 1:
            raise ConfigError("batch_size must be at least 1", key="batch_size", section="optimizer")
        if not 0 <= float(self.optimizer["momentum"]) < 1:
            raise ConfigError("momentum must be in [0, 1)", key="momentum", section="optimizer")
        if float(self.optimizer["weight_decay"]) < 0:
            raise ConfigError("weight_decay must be >= 0", key="weight_decay", section="optimizer")

    def _check_sweep(self) -> None:
        if self.run["sweep_key"] not in SweepKey.to_list():
            raise ConfigError(f"must be one of {SweepKey.to_list()}, got '{self.run['sweep_key']}'", key="sweep_key",
                              section="run")
        key = self.run["sweep_key"]
        for value in self.run["sweep_values"]:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"sweep values must be integers, got '{value}'", key="sweep_values", section="run")
            try:
                self.prune_schedule(**{key: value})
            except ConfigError as e:
                raise ConfigError(f"{key} = {value}: {e.message}", key="sweep_values", section="run") from e


def build_run_config(sections: Dict[str, Dict[str, ConfigEntry]], path: Optional[str] = None) -> RunConfig:
    """ Apply parsed sections on top of the selected profile and validate """
    profile_entry = sections.get("run", {}).get("profile")
    profile_name = profile_entry.value if profile_entry is not None else "cifar10"
    try:
        defaults = get_profile(str(profile_name))
    except ConfigError as e:
        raise ConfigError(e.message, key="profile", section="run",
                          line=profile_entry.line if profile_entry else None, path=path) from e

    lines: Dict[Tuple[str, str], int] = {}
    blocks = {}
    for section in SECTIONS:
        block = dict(defaults[section])
        allowed = set(block) | _optional_keys(section)
        for key, entry in sections.get(section, {}).items():
            if key not in allowed:
                raise ConfigError(f"unknown key, expected one of {sorted(allowed)}", key=key, section=section,
                                  line=entry.line, path=path)
            block[key] = entry.value
            lines[(section, key)] = entry.line
        blocks[section] = block
    config = RunConfig(blocks["run"], blocks["architecture"], blocks["dataset"], blocks["optimizer"],
                       blocks["prune"], path, lines)
    config.validate()
    return config


def _optional_keys(section: str) -> set:
    """ Keys a section accepts beyond those its profile sets """
    if section == "architecture":
        return set(ArchitectureConfig().__dict__)
    if section == "dataset":
        return set(DatasetSpec().__dict__)
    return set()


def parse_config(file: Union[str, Path]) -> RunConfig:
    """
    Read and validate a run configuration file.
    :param file: path to the config file
    :return: RunConfig with profile defaults filled in for every omitted key
    """
    path = Path(file)
    if not path.is_file():
        raise FileNotFoundError(f"Config file '{path}' does not exist")
    return build_run_config(parse_config_text(path.read_text(encoding="utf-8"), str(path)), str(path))
