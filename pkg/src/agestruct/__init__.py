"""Age-structured population models: solvers, comparison principles and invariance checks."""
from .comparison import (
    DiscreteModel,
    IterationReport,
    SandwichReport,
    SolutionCheck,
    check_subsolution,
    check_supersolution,
    monotone_iterate,
    order_probe,
    sandwich_verify,
    volterra_iterate_B,
)
from .config import Scenario, dump_schema, parse_config, parse_dict
from .errors import (
    ConfigError,
    DivergenceError,
    InvalidArgument,
    NoRootError,
    OutOfResolventSet,
    PreconditionError,
    StepSizeError,
)
from .general import (
    GeneralModel,
    GeneralParams,
    GeneralState,
    Monotonicity,
    ProbeVerdict,
    assumption_probe,
    birth_C,
    general_simulate,
    general_step,
    modulation,
    mortality_D,
    scalar_params,
    trajectory_monotone_check,
)
from .grid import AgeGrid, AgeProfile, integrate, le, make_grid
from .hiv import HivBounds, HivModel, HivParams, HivState, hiv_bounds, hiv_frozen_simulate, hiv_simulate, hiv_step
from .invariance import INFINITE_AGE, Region, RegionVerdict, a_star, boundary_explicit, classify, invariance_check
from .operators import SurvivalFactors, resolvent_apply, transport_step
from .runner import convergence_study, run
from .sir import SirBounds, SirModel, SirParams, SirState, sir_bounds, sir_frozen_simulate, sir_simulate, sir_step
from .spectral import (
    SpectralData,
    conservation_residual,
    functional_series,
    hiv_characteristic,
    sir_characteristic,
    gamma_functional_hiv,
    gamma_profile_hiv,
    gamma_profile_sir,
    solve_lambda_hiv,
    solve_lambda_sir,
    spectral_hiv,
    spectral_sir,
)
from .trajectory import Trajectory, TruncationWarning

__version__ = "0.1.0"
