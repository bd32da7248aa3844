from typing import Optional

from frprune.util.errors import ConfigError


class PoolRule:
    """ How relevance is redistributed through 2x2 max pooling """
    winner_take_all = "winner-take-all"
    proportional = "proportional"

    @staticmethod
    def to_list():
        return [PoolRule.winner_take_all, PoolRule.proportional]


class BnHandling:
    """ How batch-norm layers take part in relevance propagation """
    fold = "fold"
    identity = "identity"

    @staticmethod
    def to_list():
        return [BnHandling.fold, BnHandling.identity]


def get_default_lrp_params() -> dict:
    return {
        "alpha": 2.0,  # weight of positive contributions
        "beta": 1.0,  # weight of negative contributions, alpha - beta == 1
        "epsilon": 1e-9,  # fractions with a smaller denominator magnitude are set to 0
        "pool_rule": PoolRule.winner_take_all,
        "bn_handling": BnHandling.fold,
    }


class LrpConfig:
    """ Settings of the alpha-beta relevance rule """

    def __init__(self, params: Optional[dict] = None) -> None:
        self.alpha: float = 2.0
        self.beta: float = 1.0
        self.epsilon: float = 1e-9
        self.pool_rule: str = PoolRule.winner_take_all
        self.bn_handling: str = BnHandling.fold

        self.update_params(params or {})

    def update_params(self, params: dict) -> None:
        for key, value in params.items():
            if not hasattr(self, key):
                raise ConfigError(f"LrpConfig does not have an attribute '{key}'", key=key)
            setattr(self, key, value)
        self.alpha = float(self.alpha)
        self.beta = float(self.beta)
        self.epsilon = float(self.epsilon)
        self.validate_params()

    def validate_params(self) -> None:
        if abs(self.alpha - self.beta - 1.0) > 1e-6:
            raise ConfigError(f"alpha - beta must equal 1 (got alpha={self.alpha}, beta={self.beta})", key="alpha")
        if self.beta < 0:
            raise ConfigError("beta must be >= 0", key="beta")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be a positive value", key="epsilon")
        if self.pool_rule not in PoolRule.to_list():
            raise ConfigError(f"pool_rule must be one of {PoolRule.to_list()}", key="pool_rule")
        if self.bn_handling not in BnHandling.to_list():
            raise ConfigError(f"bn_handling must be one of {BnHandling.to_list()}", key="bn_handling")

    def to_json(self) -> dict:
        return dict(self.__dict__)
