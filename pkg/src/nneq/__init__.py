"""Sub-game perfect equilibrium of a net-neutrality market game with brute-force checks."""

from .equilibrium import EquilibriumReport, cp_best_response, solve_spe, stage1_payoff, stage3_prices
from .market_model import CANONICAL, MarketParams, MarketSplit, PayoffVector, StrategyProfile

__all__ = [
    "CANONICAL",
    "EquilibriumReport",
    "MarketParams",
    "MarketSplit",
    "PayoffVector",
    "StrategyProfile",
    "cp_best_response",
    "solve_spe",
    "stage1_payoff",
    "stage3_prices",
]
