"""Private wagering mechanisms and noisy cost-function market makers."""

from .scoring import BRIER, ScoringRule, brier_score, expected_score
from .wagering import (
    PrivacyParams,
    ProfitVector,
    WagerProfile,
    concentration_bound,
    expected_private_profits,
    expected_profit_curve,
    private_profits,
    privacy_params,
    wswm_profits,
)
from .cost_market import LMSR, CostFunction, bregman, chi, run_standard_market, trade_cost
from .noisy_market import fresh_noise, maker_loss, simulate, tree_counter_noise, zero_noise
from .adversary import deviation_strategy, privacy_probe, target_strategy

__version__ = "0.1.0"
