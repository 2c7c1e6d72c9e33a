"""Survival likelihoods for contact intervals in complete SEIR data.

Every likelihood handled here has the form

    loglik(theta) = sum_e log( sum_{c in e} hazard(tau_c) )
                    - sum_k weight_k * cum_hazard(w_k) + offset

where ``e`` runs over non-imported infections, ``c`` over the people who
could have infected that person at that moment (``tau_c`` is the time since
their onset of infectiousness), and ``w_k`` are the lengths of the exposure
windows during which an infectious person could reach a susceptible one.
The likelihood kinds differ only in how candidates and windows are built:

``network``
    Candidates and windows follow the edges of the contact network.
``mass-action``
    The large-population limit for mass action: candidates are all
    infectious people; each infected person contributes one window, cut at
    the horizon ``T``.
``mass-action-exact``
    The complete-graph likelihood with per-pair hazard ``baseline / (n - 1)``.
``with-infectors``
    Each event has a single candidate, the recorded infector; windows as for
    ``network`` (or ``mass-action`` when there is no network).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize, stats

from .hazards import PARAM_NAMES, HazardModel
from .simulation import EpidemicDataset

KINDS = ("network", "mass-action", "mass-action-exact", "with-infectors")
TIE_FLOOR = 1e-9


class DataInconsistencyError(ValueError):
    """The data assign zero likelihood to an observed infection."""


@dataclass
class SurvivalTerms:
    cand_tau: np.ndarray
    cand_event: np.ndarray
    cand_source: np.ndarray
    event_target: np.ndarray
    exposure: np.ndarray
    weight: np.ndarray
    offset: float = 0.0

    @property
    def n_events(self) -> int:
        return len(self.event_target)

    @property
    def total_exposure(self) -> float:
        return float(np.dot(self.weight, self.exposure))


# ---------------------------------------------------------------------------
# Building the terms
# ---------------------------------------------------------------------------


def _windows(onset, recov, t_target, T):
    iota = recov - onset
    return np.clip(np.minimum(np.minimum(t_target, T), recov) - onset, 0.0, iota)


def _candidates(t_src, onset_src, recov_src, t_dst, T, eligible):
    return eligible & (t_src < t_dst) & (onset_src <= t_dst) & (t_dst <= recov_src) & (t_dst <= T)


def _finish(data, src, dst_pos, tau, events, exposure, weight, offset=0.0) -> SurvivalTerms:
    ids = data.arrays["id"]
    ties = tau <= 0
    if np.any(ties):
        warnings.warn(
            f"{int(ties.sum())} infection/candidate pair(s) coincide with the candidate's "
            f"onset of infectiousness; using elapsed time {TIE_FLOOR}",
            RuntimeWarning,
            stacklevel=3,
        )
        tau = np.where(ties, TIE_FLOOR, tau)
    event_of_pos = np.full(data.m, -1, dtype=np.int64)
    event_of_pos[events] = np.arange(len(events))
    cand_event = event_of_pos[dst_pos]
    missing = np.setdiff1d(np.arange(len(events)), cand_event)
    if missing.size:
        who = ids[events[missing]].tolist()
        raise DataInconsistencyError(f"no infectious candidate for infection(s) of {who[:10]}")
    order = np.argsort(cand_event, kind="stable")
    keep = exposure > 0
    return SurvivalTerms(
        cand_tau=tau[order],
        cand_event=cand_event[order],
        cand_source=ids[src[order]],
        event_target=ids[events],
        exposure=exposure[keep],
        weight=np.broadcast_to(np.asarray(weight, dtype=float), exposure.shape)[keep].copy(),
        offset=float(offset),
    )


def _event_positions(data, T):
    a = data.arrays
    return np.flatnonzero(~a["imported"] & (a["t_inf"] <= T))


def _network_pairs(data):
    if data.network is None:
        raise ValueError("network likelihood needs the contact network")
    a = data.arrays
    net = data.network
    pos = np.full(net.n, -1, dtype=np.int64)
    pos[a["id"]] = np.arange(data.m)
    deg = net.degree[a["id"]]
    src = np.repeat(np.arange(data.m), deg)
    dst = np.concatenate([net.neighbors(i) for i in a["id"]]) if data.m else np.empty(0, np.int64)
    dst_pos = pos[dst]
    t_dst = np.where(dst_pos >= 0, a["t_inf"][np.maximum(dst_pos, 0)], np.inf)
    return src, dst_pos, t_dst


def network_terms(data: EpidemicDataset) -> SurvivalTerms:
    a = data.arrays
    T = data.T
    src, dst_pos, t_dst = _network_pairs(data)
    onset, recov = a["t_onset"][src], a["t_recovery"][src]
    exposure = _windows(onset, recov, t_dst, T)
    eligible = (dst_pos >= 0) & ~a["imported"][np.maximum(dst_pos, 0)]
    cand = _candidates(a["t_inf"][src], onset, recov, t_dst, T, eligible)
    return _finish(
        data, src[cand], dst_pos[cand], t_dst[cand] - onset[cand], _event_positions(data, T), exposure, 1.0
    )


def _all_pairs(data):
    a = data.arrays
    m = data.m
    src, dst = np.nonzero(~np.eye(m, dtype=bool))
    return src, dst, a["t_inf"][dst]


def mass_action_terms(data: EpidemicDataset, exact: bool = False) -> SurvivalTerms:
    a = data.arrays
    T = data.T
    src, dst, t_dst = _all_pairs(data)
    onset, recov = a["t_onset"][src], a["t_recovery"][src]
    cand = _candidates(a["t_inf"][src], onset, recov, t_dst, T, ~a["imported"][dst])
    censor = _windows(a["t_onset"], a["t_recovery"], np.inf, T)
    events = _event_positions(data, T)
    if not exact:
        return _finish(data, src[cand], dst[cand], t_dst[cand] - onset[cand], events, censor, 1.0)
    n = data.n
    pair_windows = _windows(onset, recov, t_dst, T)
    exposure = np.concatenate([pair_windows, censor])
    weight = np.concatenate(
        [np.full(pair_windows.shape, 1.0 / (n - 1)), np.full(censor.shape, (n - data.m) / (n - 1))]
    )
    offset = -len(events) * math.log(n - 1)
    return _finish(data, src[cand], dst[cand], t_dst[cand] - onset[cand], events, exposure, weight, offset)


def infector_terms(data: EpidemicDataset) -> SurvivalTerms:
    a = data.arrays
    T = data.T
    events = _event_positions(data, T)
    pos = {int(i): k for k, i in enumerate(a["id"])}
    src = []
    for e in events:
        infector = int(a["infector"][e])
        if infector < 0 or infector not in pos:
            raise DataInconsistencyError(f"infection of {int(a['id'][e])} has no recorded infector")
        src.append(pos[infector])
    src = np.asarray(src, dtype=np.int64)
    t_dst = a["t_inf"][events]
    onset, recov = a["t_onset"][src], a["t_recovery"][src]
    ok = _candidates(a["t_inf"][src], onset, recov, t_dst, T, np.ones(len(events), bool))
    if not np.all(ok):
        bad = a["id"][events[~ok]].tolist()
        raise DataInconsistencyError(f"recorded infector not infectious at infection of {bad[:10]}")
    base = network_terms(data) if data.network is not None else mass_action_terms(data)
    terms = _finish(data, src, events, t_dst - onset, events, np.zeros(0), 1.0)
    terms.exposure, terms.weight, terms.offset = base.exposure, base.weight, base.offset
    return terms


_BUILDERS = {
    "network": network_terms,
    "mass-action": mass_action_terms,
    "mass-action-exact": lambda d: mass_action_terms(d, exact=True),
    "with-infectors": infector_terms,
}


def survival_terms(data: EpidemicDataset, kind: str = "network") -> SurvivalTerms:
    """Candidate and exposure terms for ``data`` (cached on the dataset)."""
    if kind not in _BUILDERS:
        raise ValueError(f"unknown likelihood kind {kind!r}; choose from {KINDS}")
    key = ("terms", kind)
    if key not in data.cache:
        data.cache[key] = _BUILDERS[kind](data)
    return data.cache[key]


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _terms(data_or_terms, kind):
    if isinstance(data_or_terms, SurvivalTerms):
        return data_or_terms
    return survival_terms(data_or_terms, kind)


def _event_sums(terms, model):
    lam = model.hazard(terms.cand_tau)
    total = np.bincount(terms.cand_event, lam, minlength=terms.n_events)
    return lam, total


def loglik(data, model: HazardModel, kind: str = "network") -> float:
    t = _terms(data, kind)
    _, total = _event_sums(t, model)
    with np.errstate(divide="ignore"):
        events = np.sum(np.log(total))
    return float(events - np.dot(t.weight, model.cum_hazard(t.exposure)) + t.offset)


def loglik_network_exact(data, model):
    return loglik(data, model, "network")


def loglik_mass_action_asymptotic(data, model):
    return loglik(data, model, "mass-action")


def loglik_mass_action_exact(data, model):
    return loglik(data, model, "mass-action-exact")


def loglik_with_infectors(data, model):
    return loglik(data, model, "with-infectors")


def _event_gradients(t, model):
    """Per-event gradient of ``log sum_c hazard``; also candidate weights and gradients."""
    lam, total = _event_sums(t, model)
    w = lam / total[t.cand_event]
    g = model.grad_log_hazard(t.cand_tau)
    gbar = np.stack(
        [np.bincount(t.cand_event, w * g[:, k], minlength=t.n_events) for k in range(model.n_params)],
        axis=-1,
    )
    return w, g, gbar


def score(data, model: HazardModel, kind: str = "network") -> np.ndarray:
    """Gradient of the log likelihood on the natural parameter scale."""
    t = _terms(data, kind)
    _, _, gbar = _event_gradients(t, model)
    return gbar.sum(axis=0) - t.weight @ model.grad_cum_hazard(t.exposure)


def hessian(data, model: HazardModel, kind: str = "network") -> np.ndarray:
    t = _terms(data, kind)
    w, g, gbar = _event_gradients(t, model)
    h = model.hess_log_hazard(t.cand_tau)
    within = np.einsum("c,cij->ij", w, h + g[:, :, None] * g[:, None, :])
    between = np.einsum("ei,ej->ij", gbar, gbar)
    cum = np.einsum("k,kij->ij", t.weight, model.hess_cum_hazard(t.exposure))
    return within - between - cum


def observed_information(data, model: HazardModel, kind: str = "network") -> np.ndarray:
    return -hessian(data, model, kind)


def optional_variation(data, model: HazardModel, kind: str = "network") -> np.ndarray:
    """Sum over infections of the outer product of the event-time log-hazard gradient."""
    t = _terms(data, kind)
    _, _, gbar = _event_gradients(t, model)
    return gbar.T @ gbar


def infector_posterior(data, model: HazardModel, j: int, kind: str = "network"):
    """Probability that each candidate infected ``j``, given its infection time.

    Returns ``(candidate_ids, probabilities)``.
    """
    if kind == "with-infectors":
        raise ValueError("posterior attribution needs a likelihood without infector labels")
    t = _terms(data, kind)
    hits = np.flatnonzero(t.event_target == j)
    if hits.size == 0:
        raise DataInconsistencyError(f"{j} is not a non-imported infection in the data")
    sel = t.cand_event == hits[0]
    lam = model.hazard(t.cand_tau[sel])
    return t.cand_source[sel].copy(), lam / lam.sum()


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


@dataclass
class FitResult:
    model: HazardModel
    loglik: float
    covariance: Optional[np.ndarray]
    profile_cis: list
    converged: bool
    n_events: int
    total_exposure: float = float("nan")
    kind: str = "network"
    fixed: dict = field(default_factory=dict)
    open_ends: list = field(default_factory=list)
    gradient: Optional[np.ndarray] = None
    n_iter: int = 0
    message: str = ""

    @property
    def theta(self) -> np.ndarray:
        return np.asarray(self.model.params)

    @property
    def param_names(self):
        return self.model.param_names

    def to_dict(self) -> dict:
        cov = None if self.covariance is None else np.asarray(self.covariance).ravel().tolist()
        return {
            "family": self.model.family,
            "params": list(self.model.params),
            "param_names": list(self.model.param_names),
            "loglik": self.loglik,
            "covariance": cov,
            "profile_cis": [list(ci) for ci in self.profile_cis],
            "open_ends": [list(o) for o in self.open_ends],
            "converged": self.converged,
            "n_events": self.n_events,
            "total_exposure": self.total_exposure,
            "likelihood": self.kind,
            "fixed": dict(self.fixed),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        model = HazardModel(d["family"], tuple(d["params"]))
        k = model.n_params
        cov = None if d.get("covariance") is None else np.asarray(d["covariance"], dtype=float).reshape(k, k)
        return cls(
            model=model,
            loglik=float(d["loglik"]),
            covariance=cov,
            profile_cis=[tuple(ci) for ci in d.get("profile_cis", [])],
            converged=bool(d["converged"]),
            n_events=int(d["n_events"]),
            total_exposure=float(d.get("total_exposure", float("nan"))),
            kind=d.get("likelihood", "network"),
            fixed=dict(d.get("fixed", {})),
            open_ends=[tuple(o) for o in d.get("open_ends", [])],
        )


class _Objective:
    """Log likelihood over the log of the free parameters."""

    def __init__(self, terms, family, fixed):
        self.terms = terms
        self.family = family
        names = PARAM_NAMES[family]
        unknown = set(fixed) - set(names)
        if unknown:
            raise ValueError(f"cannot fix unknown parameter(s) {sorted(unknown)}")
        self.fixed = {k: float(v) for k, v in fixed.items()}
        self.names = names
        self.free = [i for i, name in enumerate(names) if name not in self.fixed]

    def theta(self, phi) -> np.ndarray:
        theta = np.array([self.fixed.get(name, np.nan) for name in self.names])
        theta[self.free] = np.exp(phi)
        return theta

    def model(self, phi) -> HazardModel:
        return HazardModel(self.family, tuple(self.theta(phi)))

    def value(self, phi) -> float:
        try:
            model = self.model(phi)
        except ValueError:
            return -np.inf
        with np.errstate(over="ignore", invalid="ignore"):
            v = loglik(self.terms, model)
        return v if np.isfinite(v) else -np.inf

    def grad_hess(self, phi):
        theta = self.theta(phi)
        model = HazardModel(self.family, tuple(theta))
        try:
            with np.errstate(all="ignore"):
                g = score(self.terms, model)[self.free]
                h = hessian(self.terms, model)[np.ix_(self.free, self.free)]
        except (OverflowError, ValueError):
            # parameters have run off to where derivatives are not representable
            return np.full(len(self.free), np.nan), None
        th = theta[self.free]
        g_phi = th * g
        h_phi = th[:, None] * h * th[None, :] + np.diag(g_phi)
        return g_phi, h_phi


def _start(terms, family, fixed, init):
    if init is not None:
        init = np.asarray(init, dtype=float)
        return init
    beta0 = max(terms.n_events, 1) / max(terms.total_exposure, 1e-300)
    theta = {"beta": beta0, "alpha": 1.0}
    theta.update(fixed)
    return np.array([theta[name] for name in PARAM_NAMES[family]])


SHAPE_GRID = np.geomspace(0.05, 20.0, 25)


def _shape_scan(terms):
    """Best (alpha, beta) over a grid of shapes, using the closed-form rate profile."""
    best, theta = -np.inf, None
    for a in SHAPE_GRID:
        sub = _Objective(terms, "weibull", {"alpha": float(a)})
        with np.errstate(all="ignore"):
            phi, v = _profile_max(sub, None)
        if np.isfinite(v) and v > best:
            best, theta = v, np.array([a, math.exp(phi[0])])
    return theta if theta is not None else np.array([1.0, _start(terms, "exponential", {}, None)[0]])


def _newton_polish(obj, phi, max_iter=100, gtol=1e-12):
    value = obj.value(phi)
    it = 0
    for it in range(1, max_iter + 1):
        g, h = obj.grad_hess(phi)
        if h is None or not (np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
            break
        scale = max(1.0, abs(value))
        if np.max(np.abs(g)) <= gtol * scale:
            break
        try:
            step = -np.linalg.solve(h, g)
            if np.dot(step, g) <= 0:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = g / max(1.0, np.max(np.abs(g)))
        for _ in range(60):
            cand = phi + step
            v = obj.value(cand)
            if v >= value - 1e-13 * scale:
                break
            step = step / 2.0
        else:
            break
        if np.array_equal(cand, phi):
            break
        phi, value = cand, v
    return phi, value, it


def _optimize(neg, phi0, k_free):
    if k_free == 1:
        res = optimize.minimize_scalar(neg, bracket=(phi0[0] - 0.5, phi0[0] + 0.5), method="brent")
        return np.atleast_1d(res.x), int(res.nit)
    if k_free > 1:
        res = optimize.minimize(
            neg, phi0, method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000}
        )
        return res.x, int(res.nit)
    return phi0, 0


def fit_mle(
    data,
    family: str = "exponential",
    kind: str = "network",
    init: Optional[Sequence[float]] = None,
    fixed: Optional[dict] = None,
    profile: bool = True,
    level: float = 0.95,
    gtol: float = 1e-8,
) -> FitResult:
    """Maximum likelihood fit of a contact-interval family.

    Optimization runs on the log of the free parameters: Brent's method in
    one dimension, Nelder-Mead in two, followed by Newton steps with the
    analytic Hessian. ``fixed`` pins parameters by name, e.g.
    ``{"alpha": 1.0}``.
    """
    fixed = dict(fixed or {})
    terms = _terms(data, kind)
    obj = _Objective(terms, family, fixed)
    k_free = len(obj.free)
    need = 1 if family == "exponential" else 2
    if terms.n_events < min(need, max(k_free, 1)):
        raise ValueError(f"{family} fit needs at least {need} infection event(s), got {terms.n_events}")

    theta0 = _start(terms, family, fixed, init)
    if family == "weibull" and init is None and k_free == 2:
        theta0 = _shape_scan(terms)
    phi0 = np.log(theta0[obj.free])
    neg = lambda p: -obj.value(np.atleast_1d(p))
    with np.errstate(invalid="ignore", over="ignore"):
        phi, n_iter = _optimize(neg, phi0, k_free)
    if k_free:
        phi, value, polish_it = _newton_polish(obj, phi)
        n_iter += polish_it
    else:
        value = obj.value(phi)
    model = obj.model(phi)
    theta = obj.theta(phi)
    k = model.n_params
    try:
        with np.errstate(all="ignore"):
            grad = score(terms, model)
            info = observed_information(terms, model)[np.ix_(obj.free, obj.free)] if k_free else None
    except (OverflowError, ValueError):
        grad, info = np.full(k, np.nan), None
    free_grad = grad[obj.free]
    rel = np.max(np.abs(theta[obj.free] * free_grad)) / max(1.0, abs(value)) if k_free else 0.0
    converged = bool(np.isfinite(value) and rel < gtol)

    cov = None
    message = "" if converged else f"relative gradient {rel:.3g} above tolerance"
    if k_free:
        try:
            if info is None or not np.all(np.isfinite(info)):
                raise np.linalg.LinAlgError
            np.linalg.cholesky(info)
            sub = np.linalg.inv(info)
            cov = np.zeros((k, k))
            cov[np.ix_(obj.free, obj.free)] = (sub + sub.T) / 2.0
        except np.linalg.LinAlgError:
            message = (message + "; " if message else "") + "observed information is singular"
            converged = False

    fit = FitResult(
        model=model,
        loglik=float(value),
        covariance=cov,
        profile_cis=[],
        converged=converged,
        n_events=terms.n_events,
        total_exposure=terms.total_exposure,
        kind=kind,
        fixed=fixed,
        gradient=grad,
        n_iter=n_iter,
        message=message,
    )
    if profile and converged:
        for idx in range(k):
            if model.param_names[idx] in fixed:
                fit.profile_cis.append((theta[idx], theta[idx]))
                fit.open_ends.append((False, False))
                continue
            lo, hi, open_end = profile_ci(terms, fit, idx, level, return_flags=True)
            fit.profile_cis.append((lo, hi))
            fit.open_ends.append(open_end)
    return fit


def profile_loglik(data, fit: FitResult, index: int, value: float, kind: Optional[str] = None) -> float:
    """Log likelihood maximized over the other free parameters with one held at ``value``."""
    terms = _terms(data, kind or fit.kind)
    name = fit.model.param_names[index]
    fixed = dict(fit.fixed)
    fixed[name] = value
    obj = _Objective(terms, fit.model.family, fixed)
    if not obj.free:
        return obj.value(np.empty(0))
    return _profile_max(obj, fit)[1]


def _profile_max(obj, fit, start=None):
    # Weibull with the shape held fixed: beta ** alpha = events / sum(weight * w ** alpha)
    if obj.family == "weibull" and "alpha" in obj.fixed and obj.free == [1]:
        a = obj.fixed["alpha"]
        t = obj.terms
        s = np.dot(t.weight, t.exposure**a)
        phi = np.array([math.log(t.n_events / s) / a])
        return phi, obj.value(phi)
    theta_hat = np.asarray(fit.model.params)
    phi0 = np.log(theta_hat[obj.free]) if start is None else start
    if obj.family == "weibull" and obj.free == [0] and start is None:
        # the shape profile can have several local maxima under diffuse attribution
        grid = np.concatenate([phi0, np.log(SHAPE_GRID)])
        with np.errstate(invalid="ignore", over="ignore"):
            vals = [obj.value(np.array([g])) for g in grid]
        phi0 = grid[[int(np.argmax(vals))]]
    with np.errstate(invalid="ignore", over="ignore"):
        res = optimize.minimize_scalar(
            lambda p: -obj.value(np.atleast_1d(p)),
            bracket=(phi0[0] - 0.1, phi0[0] + 0.1),
            method="brent",
            tol=1e-10,
        )
    phi = np.atleast_1d(res.x)
    return phi, obj.value(phi)


def profile_ci(data, fit: FitResult, index: int, level: float = 0.95, kind=None, return_flags=False):
    """Likelihood-ratio interval for one parameter from its profile likelihood.

    Endpoints are where the profile drops ``chi2_1(level) / 2`` below the
    maximum, located by bracketing root finding on the log scale. The search
    stops at ``theta_hat * 10 ** (+-3)``; an endpoint there is flagged open.
    """
    if not fit.converged:
        raise ValueError("profile intervals need a converged fit")
    terms = _terms(data, kind or fit.kind)
    theta = np.asarray(fit.model.params)
    name = fit.model.param_names[index]
    est = theta[index]
    if level <= 0:
        return (est, est, (False, False)) if return_flags else (est, est)
    drop = stats.chi2.ppf(level, 1) / 2.0
    target = fit.loglik - drop
    fixed = dict(fit.fixed)

    def prof(log_v):
        fx = dict(fixed)
        fx[name] = math.exp(log_v)
        obj = _Objective(terms, fit.model.family, fx)
        if not obj.free:
            return obj.value(np.empty(0)) - target
        return _profile_max(obj, fit)[1] - target

    centre = math.log(est)
    if fit.covariance is not None and fit.covariance[index, index] > 0:
        step = 0.5 * math.sqrt(fit.covariance[index, index]) / est
    else:
        step = 0.1
    step = min(max(step, 1e-6), 1.0)
    bound = math.log(1e3)
    ends = []
    flags = []
    for direction in (-1.0, 1.0):
        inner, d = centre, step
        outer = centre + direction * min(d, bound)
        open_end = False
        while prof(outer) > 0:
            inner = outer
            d *= 2.0
            if d >= bound:
                outer = centre + direction * bound
                if prof(outer) > 0:
                    open_end = True
                break
            outer = centre + direction * d
        if open_end:
            ends.append(math.exp(outer))
        else:
            root = optimize.brentq(prof, min(inner, outer), max(inner, outer), xtol=1e-10, rtol=1e-10)
            ends.append(math.exp(root))
        flags.append(open_end)
    lo, hi = ends
    return (lo, hi, tuple(flags)) if return_flags else (lo, hi)


def likelihood_ratio_test(null: FitResult, alternative: FitResult, df: int = 1):
    """Return ``(statistic, p_value)`` for nested fits."""
    stat = max(0.0, 2.0 * (alternative.loglik - null.loglik))
    return stat, float(stats.chi2.sf(stat, df))
