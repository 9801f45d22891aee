"""Dimension reduction and pricing for multi-asset lognormal terminal-value
problems: product-variable and numeraire transforms, closed-form pricers for
the reduced problems, and Monte-Carlo / finite-difference cross-checks."""

from .errors import (
    BsduceError,
    DomainError,
    FactorizationFailure,
    GridTooCoarse,
    InvalidInput,
    NoClosedForm,
    NonDifferentiableKink,
    NotHomogeneous,
    NotPSD,
    NotReducible,
    NotSymmetric,
    PayoffNotReducible,
    PayoffSyntaxError,
    SchemaError,
    UnknownSymbol,
    WeightsNotSimplex,
)
from .payoff import (
    GroupStructure,
    check_homogeneity,
    detect_group_structure,
    eval_payoff,
    parse_payoff,
    payoff_to_string,
    rewrite_payoff,
)
from .problem import (
    BlackScholesProblem,
    MultiplicativeTransform,
    NumeraireStep,
    ParabolicProblem,
    ProductStep,
    ReductionPlan,
)
from .reduction import (
    apply_group_transform,
    apply_numeraire_change,
    apply_pair_transform,
    assert_psd,
    plan_reduction,
    to_log_parabolic,
)
from .pricers import (
    ForeignStrikeParams,
    GeometricBasketParams,
    VasicekFxParams,
    bs_vanilla,
    fx_vol_integral,
    price_fx_option_vasicek,
    price_foreign_strike,
    price_geometric_basket,
    price_reduced_closed_form,
    vasicek_bond,
    vasicek_short_rate_from_bond,
)
from .montecarlo import (
    McConfig,
    PriceEstimate,
    mc_price,
    mc_price_vasicek_fx,
    mc_terminal_samples,
)
from .fd import FdGrid, fd_solve_1d, fd_solve_2d

__version__ = "0.1.0"
