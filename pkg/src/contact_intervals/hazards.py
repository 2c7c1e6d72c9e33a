"""Parametric contact-interval families.

Two families are supported, both written in terms of a rate ``beta`` and
(for the Weibull) a shape ``alpha``:

* exponential: ``hazard(tau) = beta``, ``cum_hazard(tau) = beta * tau``
* Weibull: ``hazard(tau) = alpha * beta * (beta * tau) ** (alpha - 1)``,
  ``cum_hazard(tau) = (beta * tau) ** alpha``

The exponential family is the Weibull family with ``alpha == 1``.

All functions accept scalars or arrays of durations and broadcast over them.
Gradient and Hessian helpers return arrays whose trailing axes index the
parameters in the order given by :attr:`HazardModel.param_names`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

FAMILIES = ("exponential", "weibull")
PARAM_NAMES = {"exponential": ("beta",), "weibull": ("alpha", "beta")}


@dataclass(frozen=True)
class HazardModel:
    """Contact-interval distribution with positive parameters.

    Parameters
    ----------
    family : {'exponential', 'weibull'}
    params : sequence of float
        ``(beta,)`` for the exponential family, ``(alpha, beta)`` for Weibull.
    """

    family: str
    params: tuple

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown hazard family {self.family!r}")
        params = tuple(float(p) for p in self.params)
        if len(params) != len(PARAM_NAMES[self.family]):
            raise ValueError(
                f"{self.family} expects {len(PARAM_NAMES[self.family])} parameter(s), "
                f"got {len(params)}"
            )
        if not all(np.isfinite(p) and p > 0 for p in params):
            raise ValueError(f"hazard parameters must be finite and positive, got {params}")
        object.__setattr__(self, "params", params)

    @property
    def param_names(self) -> tuple:
        return PARAM_NAMES[self.family]

    @property
    def n_params(self) -> int:
        return len(self.params)

    @property
    def alpha(self) -> float:
        return 1.0 if self.family == "exponential" else self.params[0]

    @property
    def beta(self) -> float:
        return self.params[-1]

    def with_params(self, params: Sequence[float]) -> "HazardModel":
        return HazardModel(self.family, tuple(params))

    def scaled(self, factor: float) -> "HazardModel":
        """Return the model whose hazard is ``factor`` times this one.

        Both families are closed under scaling: the Weibull rate becomes
        ``beta * factor ** (1 / alpha)``.
        """
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        if self.family == "exponential":
            return HazardModel("exponential", (self.beta * factor,))
        return HazardModel("weibull", (self.alpha, self.beta * factor ** (1.0 / self.alpha)))

    # -- distribution functions -------------------------------------------

    def hazard(self, tau):
        tau = _check_positive(tau)
        if self.family == "exponential":
            return _like(tau, self.beta)
        a, b = self.params
        return a * b * (b * tau) ** (a - 1.0)

    def log_hazard(self, tau):
        tau = _check_positive(tau)
        if self.family == "exponential":
            return _like(tau, np.log(self.beta))
        a, b = self.params
        return np.log(a) + np.log(b) + (a - 1.0) * np.log(b * tau)

    def cum_hazard(self, tau):
        tau = _check_nonnegative(tau, "duration")
        if self.family == "exponential":
            return self.beta * tau
        a, b = self.params
        return (b * tau) ** a

    def inv_cum_hazard(self, h):
        h = _check_nonnegative(h, "cumulative hazard")
        if self.family == "exponential":
            return h / self.beta
        a, b = self.params
        return h ** (1.0 / a) / b

    def survival(self, tau):
        return np.exp(-self.cum_hazard(tau))

    # -- parameter derivatives ---------------------------------------------

    def grad_log_hazard(self, tau):
        """Gradient of ``log hazard(tau)``; shape ``tau.shape + (n_params,)``."""
        tau = _check_positive(tau)
        if self.family == "exponential":
            return _full(tau, 1.0 / self.beta)[..., None]
        a, b = self.params
        d_alpha = 1.0 / a + np.log(b * tau)
        d_beta = _full(tau, a / b)
        return np.stack([d_alpha, d_beta], axis=-1)

    def hess_log_hazard(self, tau):
        """Hessian of ``log hazard(tau)``; shape ``tau.shape + (k, k)``."""
        tau = _check_positive(tau)
        if self.family == "exponential":
            return _full(tau, -1.0 / self.beta**2)[..., None, None]
        a, b = self.params
        one = _full(tau, 1.0)
        return np.stack(
            [
                np.stack([-one / a**2, one / b], axis=-1),
                np.stack([one / b, -one * a / b**2], axis=-1),
            ],
            axis=-2,
        )

    def grad_cum_hazard(self, tau):
        """Gradient of ``cum_hazard(tau)``; zero at ``tau == 0``."""
        tau = _check_nonnegative(tau, "duration")
        if self.family == "exponential":
            return np.asarray(tau, dtype=float)[..., None]
        a, b = self.params
        cum = (b * tau) ** a
        log_bt = _safe_log(b * tau)
        with np.errstate(invalid="ignore"):
            d_alpha = np.where(cum > 0, cum * log_bt, 0.0)
        d_beta = a * cum / b
        return np.stack([d_alpha, d_beta], axis=-1)

    def hess_cum_hazard(self, tau):
        tau = _check_nonnegative(tau, "duration")
        if self.family == "exponential":
            return np.zeros(np.shape(tau) + (1, 1))
        a, b = self.params
        cum = (b * tau) ** a
        log_bt = _safe_log(b * tau)
        with np.errstate(invalid="ignore"):
            h_aa = np.where(cum > 0, cum * log_bt**2, 0.0)
            h_ab = np.where(cum > 0, cum * (a * log_bt + 1.0) / b, 0.0)
        h_bb = cum * a * (a - 1.0) / b**2
        return np.stack(
            [np.stack([h_aa, h_ab], axis=-1), np.stack([h_ab, h_bb], axis=-1)], axis=-2
        )

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {"family": self.family, "params": list(self.params)}

    @classmethod
    def from_dict(cls, data: dict) -> "HazardModel":
        return cls(data["family"], tuple(data["params"]))


def exponential(beta: float) -> HazardModel:
    return HazardModel("exponential", (beta,))


def weibull(alpha: float, beta: float) -> HazardModel:
    return HazardModel("weibull", (alpha, beta))


def _like(tau, value):
    return np.full(np.shape(tau), value, dtype=float) if np.ndim(tau) else float(value) + 0.0 * tau


def _full(tau, value):
    return np.full(np.shape(tau), value, dtype=float)


def _safe_log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _check_positive(tau):
    arr = np.asarray(tau, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("hazard is only defined for strictly positive durations")
    return arr if arr.ndim else float(arr)


def _check_nonnegative(x, what):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr >= 0)):
        raise ValueError(f"{what} must be nonnegative")
    return arr if arr.ndim else float(arr)
