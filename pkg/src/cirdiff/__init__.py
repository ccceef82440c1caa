"""Two-factor CIR difference model r = x - y: bond pricing, calibration, Monte Carlo."""

__version__ = "0.1.0"

from .model import (
    BondFactors,
    CirParams,
    DiffModel,
    DiscriminantError,
    InvalidPhiError,
    Leg,
    PhiTriple,
    bond_factors,
    cond_mean,
    cond_var,
    feller_check,
    inst_forward_rate,
    model_from_phi,
    phi_from_model,
    riccati_residual,
    spot_rate,
    zcb_price,
)
from .marketdata import QuoteSet, ZeroCurve, bootstrap, load_quotes, market_forward_zcb
from .calibration import CalibrationOptions, CalibrationResult, calibrate, is_admissible, objective, project
from .simulation import PathSet, SimConfig, discount_factors, distribution_summary, simulate
from .pricing import (
    SwaptionSpec,
    bachelier_price,
    model_forward_zcb,
    model_swaption_price,
    par_swap_rate_and_annuity,
    swaption_grid_report,
)
