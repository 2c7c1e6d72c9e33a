"""Survival analysis of contact intervals in completely observed SEIR epidemics."""

from .hazards import HazardModel, exponential, weibull
from .simulation import (
    ContactNetwork,
    EpidemicDataset,
    IndividualRecord,
    InfectiousPeriod,
    MassAction,
    Network,
    Period,
    ModelRejected,
    SimulationConfig,
    generate_er_network,
    run_with_restarts,
    simulate,
    simulate_mass_action,
    simulate_network,
)
from .likelihoods import (
    DataInconsistencyError,
    FitResult,
    fit_mle,
    infector_posterior,
    loglik,
    observed_information,
    optional_variation,
    profile_ci,
    score,
)
from .r0 import R0Estimate, bootstrap_r0, r0_mass_action, r0_network
from .estimators import ContactIntervalMLE, R0Estimator

__version__ = "0.1.0"

__all__ = [
    "HazardModel",
    "exponential",
    "weibull",
    "ContactNetwork",
    "EpidemicDataset",
    "IndividualRecord",
    "InfectiousPeriod",
    "MassAction",
    "Network",
    "Period",
    "ModelRejected",
    "SimulationConfig",
    "generate_er_network",
    "run_with_restarts",
    "simulate",
    "simulate_mass_action",
    "simulate_network",
    "DataInconsistencyError",
    "FitResult",
    "fit_mle",
    "infector_posterior",
    "loglik",
    "observed_information",
    "optional_variation",
    "profile_ci",
    "score",
    "R0Estimate",
    "bootstrap_r0",
    "r0_mass_action",
    "r0_network",
    "ContactIntervalMLE",
    "R0Estimator",
]
