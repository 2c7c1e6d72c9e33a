"""Plug-in R0 estimators and parametric/nonparametric bootstrap intervals.

Mass action: ``R0 = E[Lambda0(iota)]``, estimated by the mean of
``Lambda0(iota_k; theta_hat)`` over observed infectious periods.

Network: ``R0 = E[1 - exp(-Lambda(iota))] * (E[D^2] / E[D] - 1)``, estimated
by the mean of ``(1 - exp(-Lambda(iota_k))) * (d_k - 1)`` over infected people.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, special

from .hazards import HazardModel


@dataclass
class R0Estimate:
    point: float
    ci: tuple
    n_bootstrap: int
    samples: Optional[np.ndarray] = None
    seed: Optional[int] = None
    rejection_rate: float = 0.0

    def contains(self, value: float) -> bool:
        return self.ci[0] <= value <= self.ci[1]

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "lo": self.ci[0],
            "hi": self.ci[1],
            "B": self.n_bootstrap,
            "seed": self.seed,
            "rejection_rate": self.rejection_rate,
        }


# ---------------------------------------------------------------------------
# Population values (used for the truth in simulation studies)
# ---------------------------------------------------------------------------


def transmission_probability(model: HazardModel, period) -> float:
    """Per-edge transmission probability ``E[1 - exp(-Lambda(iota))]``."""
    if period.kind == "constant":
        return float(-np.expm1(-model.cum_hazard(period.mean)))
    mu = period.mean
    if model.family == "exponential":
        return model.beta * mu / (1.0 + model.beta * mu)
    # E[exp(-Lambda(iota))] with iota ~ Exp(mean mu), substituting iota = mu * x;
    # break the range at both decay scales of the integrand, with decade
    # knots in between for slowly decaying small shapes; a hazard scale
    # beyond x = 1 is swamped by exp(-x) and only misleads quad
    f = lambda x: math.exp(-float(model.cum_hazard(mu * x)) - x)
    c = 1.0 / (model.beta * mu)
    knots = [1.0]
    if c < 1.0:
        knots = np.geomspace(c, 1.0, int(math.ceil(-math.log10(c))) + 1).tolist()
    edges = [0.0] + knots + [np.inf]
    escape = sum(
        integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        for lo, hi in zip(edges[:-1], edges[1:])
    )
    return 1.0 - escape


def mass_action_r0(model: HazardModel, period) -> float:
    """Limiting mass-action R0, ``E[Lambda0(iota)]``."""
    if period.kind == "constant":
        return float(model.cum_hazard(period.mean))
    a, b = model.alpha, model.beta
    # E[iota ** a] = mu ** a * Gamma(a + 1) for iota ~ Exp(mean mu)
    return float((b * period.mean) ** a * special.gamma(a + 1.0))


def network_r0(model: HazardModel, period, mean_degree: float) -> float:
    """Network R0 under Poisson degrees, where ``E[D^2]/E[D] - 1`` equals the mean."""
    return transmission_probability(model, period) * mean_degree


# ---------------------------------------------------------------------------
# Plug-in estimators
# ---------------------------------------------------------------------------


def _model_of(fit_or_model) -> HazardModel:
    return fit_or_model if isinstance(fit_or_model, HazardModel) else fit_or_model.model


def r0_mass_action(fit, infectious_periods) -> float:
    """Mean of ``Lambda0(iota_k)`` at the fitted parameters."""
    iota = np.asarray(infectious_periods, dtype=float)
    if iota.size == 0:
        raise ValueError("need at least one infectious period")
    return float(np.mean(_model_of(fit).cum_hazard(iota)))


def r0_network(fit, infectious_periods, degrees) -> float:
    """Mean of ``(1 - exp(-Lambda(iota_k))) * (d_k - 1)`` at the fitted parameters."""
    iota = np.asarray(infectious_periods, dtype=float)
    d = np.asarray(degrees, dtype=float)
    if iota.size == 0:
        raise ValueError("need at least one observation")
    if iota.shape != d.shape:
        raise ValueError("infectious periods and degrees must pair up")
    if np.any(d < 0):
        raise ValueError("degrees must be nonnegative")
    p = -np.expm1(-_model_of(fit).cum_hazard(iota))
    return float(np.mean(p * (d - 1.0)))


# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------


def _covariance_factor(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if not np.allclose(cov, cov.T):
        raise ValueError("covariance must be symmetric")
    # fixed parameters carry zero rows/columns and are held at their fitted value
    free = ~(np.all(cov == 0, axis=0) & np.all(cov == 0, axis=1))
    factor = np.zeros_like(cov)
    if free.any():
        try:
            sub = np.linalg.cholesky(cov[np.ix_(free, free)])
        except np.linalg.LinAlgError:
            raise ValueError("covariance matrix is not positive definite") from None
        factor[np.ix_(free, free)] = sub
    return factor


def sample_parameters(theta, cov, size: int, rng: np.random.Generator, max_rounds: int = 1000):
    """Draw ``size`` parameter vectors from N(theta, cov) restricted to positive values.

    Uses the Cholesky factor of ``cov``; draws with any nonpositive component
    are redrawn. Returns ``(samples, rejection_rate)``.
    """
    theta = np.asarray(theta, dtype=float)
    factor = _covariance_factor(cov)
    out = np.empty((size, theta.size))
    filled = 0
    drawn = 0
    for _ in range(max_rounds):
        need = size - filled
        if need == 0:
            break
        z = rng.standard_normal((need, theta.size))
        cand = theta + z @ factor.T
        ok = np.all(cand > 0, axis=1)
        drawn += need
        good = cand[ok]
        out[filled : filled + len(good)] = good
        filled += len(good)
    if filled < size:
        raise RuntimeError("could not draw positive parameter samples")
    return out, 1.0 - size / drawn if drawn else 0.0


def bootstrap_r0(
    fit,
    infectious_periods,
    degrees=None,
    n_bootstrap: int = 10_000,
    rng=None,
    level: float = 0.95,
    keep_samples: bool = True,
) -> R0Estimate:
    """Percentile bootstrap interval for R0.

    Each replicate pairs a parameter draw from the fit's approximate normal
    distribution with a resample (with replacement) of the observations:
    infectious periods, or (infectious period, degree) pairs when ``degrees``
    is given, which selects the network estimator.
    """
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    model = fit.model
    if getattr(fit, "covariance", None) is None:
        raise ValueError("fit has no covariance matrix")
    iota = np.asarray(infectious_periods, dtype=float)
    m = iota.size
    if m == 0:
        raise ValueError("need at least one observation")
    network = degrees is not None
    if network:
        d = np.asarray(degrees, dtype=float)
        point = r0_network(model, iota, d)
    else:
        point = r0_mass_action(model, iota)

    thetas, rejection = sample_parameters(model.params, fit.covariance, n_bootstrap, rng)
    samples = np.empty(n_bootstrap)
    block = max(1, 2_000_000 // m)
    for start in range(0, n_bootstrap, block):
        th = thetas[start : start + block]
        idx = rng.integers(0, m, size=(len(th), m))
        iota_star = iota[idx]
        if model.family == "exponential":
            cum = th[:, 0:1] * iota_star
        else:
            cum = (th[:, 1:2] * iota_star) ** th[:, 0:1]
        if network:
            samples[start : start + block] = np.mean(-np.expm1(-cum) * (d[idx] - 1.0), axis=1)
        else:
            samples[start : start + block] = np.mean(cum, axis=1)
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(samples, [tail, 1.0 - tail])
    return R0Estimate(
        float(point),
        (float(lo), float(hi)),
        int(n_bootstrap),
        samples if keep_samples else None,
        None if seed is None else int(seed),
        float(rejection),
    )
