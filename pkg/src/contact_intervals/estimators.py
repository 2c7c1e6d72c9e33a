"""scikit-learn style estimators over :class:`EpidemicDataset` inputs.

The "X" of these estimators is a whole observed epidemic rather than a
design matrix, so ``fit`` takes a dataset and no ``y``. Hyperparameters live
in ``__init__`` and fitted state in trailing-underscore attributes, so
``get_params``/``set_params``/``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .likelihoods import KINDS, fit_mle, loglik
from .r0 import bootstrap_r0
from .simulation import EpidemicDataset


def check_dataset(data, likelihood: str = "network") -> EpidemicDataset:
    """Validate an epidemic dataset for the given likelihood kind."""
    if not isinstance(data, EpidemicDataset):
        raise TypeError(f"expected an EpidemicDataset, got {type(data).__name__}")
    if likelihood not in KINDS:
        raise ValueError(f"likelihood must be one of {KINDS}, got {likelihood!r}")
    if data.m == 0:
        raise ValueError("dataset has no infections")
    a = data.arrays
    if not np.all(a["t_onset"] >= a["t_inf"]):
        raise ValueError("onset of infectiousness precedes infection")
    if not np.all(a["t_recovery"] > a["t_onset"]):
        raise ValueError("infectious periods must be positive")
    if not np.any(a["imported"]):
        raise ValueError("dataset has no imported infection")
    if len(np.unique(a["id"])) != data.m:
        raise ValueError("duplicate individual ids")
    if likelihood == "network" and data.network is None:
        raise ValueError("network likelihood needs a contact network")
    if likelihood == "with-infectors" and np.any((a["infector"] < 0) & ~a["imported"]):
        raise ValueError("with-infectors likelihood needs every infector recorded")
    return data


def check_family(family: str) -> str:
    if family not in ("exponential", "weibull"):
        raise ValueError(f"family must be 'exponential' or 'weibull', got {family!r}")
    return family


class ContactIntervalMLE(BaseEstimator):
    """Maximum likelihood estimator of the contact-interval distribution.

    Parameters
    ----------
    family : {'exponential', 'weibull'}
    likelihood : {'network', 'mass-action', 'mass-action-exact', 'with-infectors'}
    fixed : dict, optional
        Parameters held fixed, by name.
    level : float
        Confidence level of the profile likelihood intervals.
    profile : bool
        Whether to compute profile intervals at all.

    Attributes
    ----------
    model_ : HazardModel
    params_ : ndarray
    covariance_ : ndarray or None
    confidence_intervals_ : list of (lo, hi)
    loglik_ : float
    fit_result_ : FitResult
    """

    def __init__(self, family="exponential", likelihood="network", fixed=None, level=0.95, profile=True):
        self.family = family
        self.likelihood = likelihood
        self.fixed = fixed
        self.level = level
        self.profile = profile

    def fit(self, X, y=None):
        check_family(self.family)
        X = check_dataset(X, self.likelihood)
        res = fit_mle(
            X, self.family, self.likelihood, fixed=self.fixed, profile=self.profile, level=self.level
        )
        self.fit_result_ = res
        self.model_ = res.model
        self.params_ = res.theta
        self.covariance_ = res.covariance
        self.confidence_intervals_ = list(res.profile_cis)
        self.loglik_ = res.loglik
        self.converged_ = res.converged
        self.n_events_ = res.n_events
        return self

    def score(self, X, y=None):
        """Log likelihood of ``X`` at the fitted parameters."""
        check_is_fitted(self, "model_")
        return loglik(check_dataset(X, self.likelihood), self.model_, self.likelihood)


class R0Estimator(BaseEstimator):
    """Plug-in R0 with a bootstrap percentile interval.

    ``estimator='auto'`` uses the network formula when the likelihood is
    ``network`` (or the data carry degrees and a network), mass action
    otherwise.
    """

    def __init__(
        self,
        family="exponential",
        likelihood="network",
        estimator="auto",
        n_bootstrap=10_000,
        level=0.95,
        random_state=None,
    ):
        self.family = family
        self.likelihood = likelihood
        self.estimator = estimator
        self.n_bootstrap = n_bootstrap
        self.level = level
        self.random_state = random_state

    def _use_network(self, X):
        if self.estimator == "auto":
            return self.likelihood == "network" or (
                self.likelihood == "with-infectors" and X.network is not None
            )
        if self.estimator not in ("network", "mass-action"):
            raise ValueError(f"unknown R0 estimator {self.estimator!r}")
        return self.estimator == "network"

    def fit(self, X, y=None):
        self.mle_ = ContactIntervalMLE(self.family, self.likelihood, level=self.level).fit(X)
        network = self._use_network(X)
        self.estimate_ = bootstrap_r0(
            self.mle_.fit_result_,
            X.infectious_periods,
            X.degrees if network else None,
            n_bootstrap=self.n_bootstrap,
            rng=self.random_state,
            level=self.level,
        )
        self.r0_ = self.estimate_.point
        self.ci_ = self.estimate_.ci
        return self
