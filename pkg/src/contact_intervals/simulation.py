"""Event-driven stochastic SEIR simulation on networks and under mass action.

An infected person ``i`` draws a latent period and an infectious period at
infection. Contacts to other people are drawn at that moment (their times lie
in ``i``'s future infectiousness window) and pushed onto a priority queue. A
contact event infects its target iff the target is still susceptible, so the
first infectious contact wins. Queue ties are broken by ``(time, source,
target)``.

Observation stops at the ``m_target``-th infection; its time is the
observation horizon ``T`` of the returned dataset.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np
from scipy import optimize

from .hazards import HazardModel


class ModelRejected(RuntimeError):
    """Raised when no simulation reached the target size within the restart budget."""

    def __init__(self, message, attempts):
        super().__init__(message)
        self.attempts = attempts


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Period:
    """Distribution of a latent or infectious period: constant or exponential."""

    kind: str = "constant"
    mean: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "exponential"):
            raise ValueError(f"unknown period kind {self.kind!r}")
        if not self.mean >= 0:
            raise ValueError("period mean must be nonnegative")
        if self.kind == "exponential" and self.mean == 0:
            raise ValueError("exponential period needs a positive mean")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "constant":
            return float(self.mean)
        return float(rng.exponential(self.mean))

    def to_dict(self):
        return {"kind": self.kind, "mean": self.mean}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], float(d["mean"]))


InfectiousPeriod = Period


@dataclass(frozen=True)
class IndividualRecord:
    """Observed event times of one infected person.

    ``latent`` and ``infectious`` durations are derived from the stored
    transition times so that records round-trip through text exactly.
    """

    id: int
    imported: bool
    t_inf: float
    t_onset: float
    t_recovery: float
    degree: Optional[int] = None
    neighbors: Optional[tuple] = None
    infector: Optional[int] = None

    @property
    def latent(self) -> float:
        return self.t_onset - self.t_inf

    @property
    def infectious(self) -> float:
        return self.t_recovery - self.t_onset

    def is_infectious(self, t: float) -> bool:
        return self.t_onset < t <= self.t_recovery


class ContactNetwork:
    """Undirected simple graph on nodes ``0 .. n-1`` stored as a sorted edge list."""

    def __init__(self, n: int, edges=()):
        self.n = int(n)
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= self.n):
            raise ValueError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        e = np.sort(e, axis=1)
        order = np.lexsort((e[:, 1], e[:, 0]))
        e = e[order]
        if len(e) > 1 and np.any(np.all(e[1:] == e[:-1], axis=1)):
            raise ValueError("multi-edges are not allowed")
        self.edges = e
        both = np.concatenate([e, e[:, ::-1]])
        both = both[np.lexsort((both[:, 1], both[:, 0]))]
        self.degree = np.bincount(both[:, 0], minlength=self.n).astype(np.int64)
        self.indptr = np.concatenate([[0], np.cumsum(self.degree)])
        self.indices = both[:, 1].copy()

    @classmethod
    def complete(cls, n: int) -> "ContactNetwork":
        u, v = np.triu_indices(n, k=1)
        return cls(n, np.column_stack([u, v]))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def __eq__(self, other):
        return (
            isinstance(other, ContactNetwork)
            and self.n == other.n
            and np.array_equal(self.edges, other.edges)
        )

    def __repr__(self):
        return f"ContactNetwork(n={self.n}, n_edges={self.n_edges})"


@dataclass(frozen=True)
class MassAction:
    n: int


@dataclass(frozen=True)
class Network:
    """Network population: a fixed graph, or an Erdos-Renyi graph drawn per run."""

    network: Optional[ContactNetwork] = None
    n: Optional[int] = None
    expected_degree: Optional[float] = None

    def __post_init__(self):
        if self.network is None and (self.n is None or self.expected_degree is None):
            raise ValueError("Network needs either a graph or (n, expected_degree)")

    @property
    def size(self) -> int:
        return self.network.n if self.network is not None else int(self.n)


@dataclass
class SimulationConfig:
    population: Union[MassAction, Network]
    contact_model: HazardModel
    infectious_period: Period = field(default_factory=Period)
    latent_period: Period = field(default_factory=lambda: Period("constant", 0.0))
    m_target: int = 1000
    seed: int = 0
    max_restarts: int = 100
    index_case: int = 0

    def __post_init__(self):
        n = self.n
        if not 1 <= self.m_target <= n:
            raise ValueError("m_target must lie in [1, n]")
        if not self.infectious_period.mean > 0:
            raise ValueError("mean infectious period must be positive")
        if not 0 <= self.index_case < n:
            raise ValueError("index case out of range")

    @property
    def n(self) -> int:
        pop = self.population
        return pop.n if isinstance(pop, MassAction) else pop.size

    def to_dict(self) -> dict:
        pop = self.population
        if isinstance(pop, MassAction):
            pop_d = {"model": "mass-action", "n": pop.n}
        else:
            pop_d = {"model": "network", "n": pop.size, "expected_degree": pop.expected_degree}
        return {
            "population": pop_d,
            "contact_model": self.contact_model.to_dict(),
            "infectious_period": self.infectious_period.to_dict(),
            "latent_period": self.latent_period.to_dict(),
            "m_target": self.m_target,
            "seed": self.seed,
            "max_restarts": self.max_restarts,
            "index_case": self.index_case,
        }

    @classmethod
    def from_dict(cls, d: dict, network: Optional[ContactNetwork] = None) -> "SimulationConfig":
        pop_d = d["population"]
        if pop_d["model"] == "mass-action":
            pop = MassAction(int(pop_d["n"]))
        elif pop_d["model"] == "network":
            if network is not None:
                pop = Network(network=network)
            else:
                pop = Network(n=int(pop_d["n"]), expected_degree=float(pop_d["expected_degree"]))
        else:
            raise ValueError(f"unknown population model {pop_d['model']!r}")
        return cls(
            population=pop,
            contact_model=HazardModel.from_dict(d["contact_model"]),
            infectious_period=Period.from_dict(d.get("infectious_period", {"kind": "constant", "mean": 1.0})),
            latent_period=Period.from_dict(d.get("latent_period", {"kind": "constant", "mean": 0.0})),
            m_target=int(d.get("m_target", 1000)),
            seed=int(d.get("seed", 0)),
            max_restarts=int(d.get("max_restarts", 100)),
            index_case=int(d.get("index_case", 0)),
        )


@dataclass(eq=False)
class EpidemicDataset:
    """A completely observed epidemic up to the horizon ``T``.

    ``individuals`` holds every person infected on or before ``T``; anyone
    else is susceptible throughout the observation period.
    """

    individuals: list
    T: float
    n: int
    network: Optional[ContactNetwork] = None
    extinct: bool = False
    meta: dict = field(default_factory=dict)
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        return len(self.individuals)

    @cached_property
    def arrays(self) -> dict:
        recs = self.individuals
        return {
            "id": np.array([r.id for r in recs], dtype=np.int64),
            "imported": np.array([r.imported for r in recs], dtype=bool),
            "t_inf": np.array([r.t_inf for r in recs], dtype=float),
            "t_onset": np.array([r.t_onset for r in recs], dtype=float),
            "t_recovery": np.array([r.t_recovery for r in recs], dtype=float),
            "infector": np.array(
                [-1 if r.infector is None else r.infector for r in recs], dtype=np.int64
            ),
            "degree": np.array([-1 if r.degree is None else r.degree for r in recs], dtype=np.int64),
        }

    @property
    def infectious_periods(self) -> np.ndarray:
        a = self.arrays
        return a["t_recovery"] - a["t_onset"]

    @property
    def degrees(self) -> np.ndarray:
        d = self.arrays["degree"]
        if np.any(d < 0):
            raise ValueError("dataset lacks degree information")
        return d

    def without_infectors(self) -> "EpidemicDataset":
        recs = [
            IndividualRecord(r.id, r.imported, r.t_inf, r.t_onset, r.t_recovery, r.degree, r.neighbors, None)
            for r in self.individuals
        ]
        return EpidemicDataset(recs, self.T, self.n, self.network, self.extinct, dict(self.meta))

    def __eq__(self, other):
        return (
            isinstance(other, EpidemicDataset)
            and self.individuals == other.individuals
            and self.T == other.T
            and self.n == other.n
            and self.network == other.network
            and self.extinct == other.extinct
        )


# ---------------------------------------------------------------------------
# Random graphs
# ---------------------------------------------------------------------------


def generate_er_network(n: int, expected_degree: float, rng: np.random.Generator) -> ContactNetwork:
    """Draw G(n, p) with ``p = expected_degree / (n - 1)``.

    The edge count is binomial and, given the count, the edge set is a uniform
    subset of all pairs, which is exactly the G(n, p) law.
    """
    if n < 2:
        raise ValueError("need at least two nodes")
    p = expected_degree / (n - 1)
    if not 0 <= p <= 1:
        raise ValueError(f"expected degree {expected_degree} gives invalid edge probability {p}")
    n_pairs = n * (n - 1) // 2
    n_edges = int(rng.binomial(n_pairs, p))
    idx = np.sort(rng.choice(n_pairs, size=n_edges, replace=False))
    rows = np.arange(n, dtype=np.int64)
    starts = rows * n - rows * (rows + 1) // 2
    u = np.searchsorted(starts, idx, side="right") - 1
    v = idx - starts[u] + u + 1
    return ContactNetwork(n, np.column_stack([u, v]))


# ---------------------------------------------------------------------------
# Simulators
# ---------------------------------------------------------------------------


def _network_contacts(network: ContactNetwork, model: HazardModel):
    def contacts(i, iota, rng):
        nb = network.neighbors(i)
        tau = model.inv_cum_hazard(rng.exponential(size=len(nb)))
        keep = tau <= iota
        return nb[keep], tau[keep]

    return contacts


def _mass_action_contacts(n: int, model: HazardModel):
    # model is the baseline hazard; each pair has hazard baseline / (n - 1)
    scale = n - 1

    def contacts(i, iota, rng):
        q = -math.expm1(-float(model.cum_hazard(iota)) / scale)
        k = int(rng.binomial(scale, q)) if q > 0 else 0
        if k == 0:
            return np.empty(0, dtype=np.int64), np.empty(0)
        targets = rng.choice(scale, size=k, replace=False)
        targets = targets + (targets >= i)
        u = rng.random(k)
        tau = model.inv_cum_hazard(-scale * np.log1p(-u * q))
        return targets, np.minimum(tau, iota)

    return contacts


def _run(config: SimulationConfig, rng: np.random.Generator, contacts, network=None) -> EpidemicDataset:
    n = config.n
    m_target = config.m_target
    state = {}  # id -> (t_inf, t_onset, t_recovery, infector)
    order = []
    queue = []
    T = None

    def infect(j, t, infector):
        nonlocal T
        eps = config.latent_period.sample(rng)
        iota = config.infectious_period.sample(rng)
        onset = t + eps
        state[j] = (t, onset, onset + iota, infector)
        order.append(j)
        if len(order) == m_target:
            T = t
            return
        targets, tau = contacts(j, iota, rng)
        for target, dt in zip(targets.tolist(), tau.tolist()):
            if target not in state:
                heapq.heappush(queue, (onset + dt, j, target))

    infect(config.index_case, 0.0, None)
    while T is None and queue:
        t, src, target = heapq.heappop(queue)
        if target in state:
            continue
        infect(target, t, src)

    extinct = T is None
    if extinct:
        T = max(v[2] for v in state.values())

    records = []
    for j in order:
        t_inf, onset, recov, infector = state[j]
        if network is not None:
            nb = tuple(network.neighbors(j).tolist())
            deg = len(nb)
        else:
            nb, deg = None, None
        records.append(IndividualRecord(j, infector is None, t_inf, onset, recov, deg, nb, infector))
    return EpidemicDataset(
        records, float(T), n, network, extinct, {"config": config.to_dict()}
    )


def simulate_network(config: SimulationConfig, rng: Optional[np.random.Generator] = None) -> EpidemicDataset:
    pop = config.population
    if not isinstance(pop, Network):
        raise TypeError("simulate_network needs a Network population")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    network = pop.network
    if network is None:
        network = generate_er_network(int(pop.n), float(pop.expected_degree), rng)
    return _run(config, rng, _network_contacts(network, config.contact_model), network)


def simulate_mass_action(config: SimulationConfig, rng: Optional[np.random.Generator] = None) -> EpidemicDataset:
    pop = config.population
    if not isinstance(pop, MassAction):
        raise TypeError("simulate_mass_action needs a MassAction population")
    if pop.n < 2:
        raise ValueError("mass action needs n >= 2")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    return _run(config, rng, _mass_action_contacts(pop.n, config.contact_model))


def simulate(config: SimulationConfig, rng: Optional[np.random.Generator] = None) -> EpidemicDataset:
    if isinstance(config.population, MassAction):
        return simulate_mass_action(config, rng)
    return simulate_network(config, rng)


def run_with_restarts(config: SimulationConfig, rng: Optional[np.random.Generator] = None) -> EpidemicDataset:
    """Simulate until an outbreak reaches ``m_target`` infections.

    Network populations without a fixed graph get a fresh Erdos-Renyi graph on
    every attempt. The number of attempts used is stored in
    ``dataset.meta['attempts']``.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    for attempt in range(1, config.max_restarts + 1):
        data = simulate(config, rng)
        if not data.extinct:
            data.meta["attempts"] = attempt
            data.meta["seed"] = config.seed
            return data
    raise ModelRejected(
        f"no outbreak reached {config.m_target} infections in {config.max_restarts} runs",
        config.max_restarts,
    )


# ---------------------------------------------------------------------------
# Scenario parameters
# ---------------------------------------------------------------------------

R0_RANGE = (1.01, 16.0)
WEIBULL_SHAPE_RANGE = (0.5, 2.0)
DEGREE_RANGE = (2, 16)
MAX_EDGE_PROBABILITY = 0.99


@dataclass(frozen=True)
class ScenarioParams:
    contact_model: HazardModel
    infectious_period: Period
    expected_degree: Optional[int]
    true_r0: float


def draw_scenario_params(
    rng: np.random.Generator,
    population: str,
    family: str,
    period_kind: str,
    period_mean: float = 1.0,
) -> ScenarioParams:
    """Draw contact-interval parameters whose implied R0 is uniform on [1.01, 16].

    Weibull shapes are log-uniform on [0.5, 2]. For networks the expected
    degree is uniform on {2, ..., 16}; draws needing a per-edge transmission
    probability above 0.99 are rejected and redrawn.
    """
    from .r0 import mass_action_r0, network_r0, transmission_probability

    period = Period(period_kind, period_mean)
    while True:
        target = rng.uniform(*R0_RANGE)
        alpha = 1.0
        if family == "weibull":
            alpha = float(np.exp(rng.uniform(*np.log(WEIBULL_SHAPE_RANGE))))
        if population == "mass-action":
            unit = _make_model(family, alpha, 1.0)
            # R0 = beta**alpha * E[Lambda(iota) at beta = 1]
            c = mass_action_r0(unit, period)
            beta = (target / c) ** (1.0 / alpha)
            model = _make_model(family, alpha, beta)
            r0 = mass_action_r0(model, period)
            degree = None
        elif population == "network":
            degree = int(rng.integers(DEGREE_RANGE[0], DEGREE_RANGE[1] + 1))
            p_edge = target / degree
            if p_edge >= MAX_EDGE_PROBABILITY:
                continue
            beta = _solve_rate(family, alpha, period, p_edge, transmission_probability)
            model = _make_model(family, alpha, beta)
            r0 = network_r0(model, period, degree)
        else:
            raise ValueError(f"unknown population {population!r}")
        if R0_RANGE[0] <= r0 <= R0_RANGE[1]:
            return ScenarioParams(model, period, degree, float(r0))


def _make_model(family, alpha, beta):
    if family == "exponential":
        return HazardModel("exponential", (beta,))
    return HazardModel("weibull", (alpha, beta))


def _solve_rate(family, alpha, period, p_edge, transmission_probability):
    if period.kind == "constant":
        # 1 - exp(-(beta * iota) ** alpha) = p
        return (-math.log1p(-p_edge)) ** (1.0 / alpha) / period.mean

    def gap(log_beta):
        return transmission_probability(_make_model(family, alpha, math.exp(log_beta)), period) - p_edge

    lo, hi = -30.0, 30.0
    return math.exp(optimize.brentq(gap, lo, hi, xtol=1e-14))
