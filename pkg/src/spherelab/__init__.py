"""Numerical study of a one-parameter family of conservative systems on S^2
admitting a cubic first integral."""

from .errors import (
    BadBracket,
    BlowUp,
    BudgetExhausted,
    DenominatorVanished,
    DerivativeSingular,
    DomainExceeded,
    IntegrationError,
    NonFiniteRhs,
    OutOfDomain,
    ParameterOutOfWindow,
    SpherelabError,
    StepLimitReached,
    StepSizeTooSmall,
)
from .family import (
    Tau,
    asymptotic_coeffs,
    consistency_check,
    known_threshold,
    set_known_threshold,
    solve_g,
    solve_x,
    u_eval,
    u_residual,
    UView,
)
from .ivp import DEFAULT_CONFIG, Direction, Event, IntegratorConfig, OdeProblem, integrate
from .portrait import PhasePoint, Verdict, classify_orbit, equilibria, p_of_q, portrait_grid, slope_ratio
from .profile import Profile, ThetaJet, build_profile
from .sphere import (
    PhaseState,
    cubic_integral,
    gaussian_curvature,
    hamiltonian,
    hamiltonian_flow,
    identity_residual,
    partial_brackets,
    poisson_bracket_FH,
    pole_report,
    theta_jet,
)
from .threshold import ThresholdResult, find_T

__version__ = "0.1.0"

