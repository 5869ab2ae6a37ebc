"""Deterministic state evolution for the Gaussian-mixture retraining loop.

Tracks the scalar pair (m_t, sigma_t) describing the asymptotic law of the
model iterates, the induced test-error prediction, the one-dimensional update
maps for the optimal / full / consensus aggregation rules, their fixed points
and crossover, and the noise-level threshold above which retraining provably
keeps improving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from .errors import BracketError, ConfigError, DomainError
from .gmm import (
    GmmParams,
    OptimalGmm,
    SmoothedConsensusRT,
    SmoothedFullRT,
)
from .numerics import (
    expect_std_normal_split,
    find_root_bisect,
    gauss_hermite,
    std_normal_cdf,
)

# Default Gauss-Hermite order for the scalar expectations here.  The optimal
# aggregator can be a steep tanh, and the self-consistency identities are
# tested at 1e-9; order 201 keeps the quadrature error comfortably below that
# at negligible cost (4 atoms x order evaluations per step).
DEFAULT_ORDER = 201

_SQRT_PI = math.sqrt(math.pi)
_SQRT_2 = math.sqrt(2.0)


@dataclass(frozen=True)
class SeStateGmm:
    """State-evolution pair (m, sigma) with derived channel parameters.

    eta = m/sigma is the signal-to-noise ratio; (m_bar, sigma_bar) describe
    the law of the soft predictions: m_bar = gamma*sqrt(alpha)*m and
    sigma_bar^2 = alpha*(m^2 + sigma^2).
    """

    m: float
    sigma: float
    gamma: float
    alpha: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DomainError("sigma must be positive and finite")
        if not math.isfinite(self.m):
            raise DomainError("m must be finite")

    @property
    def eta(self) -> float:
        return self.m / self.sigma

    @property
    def m_bar(self) -> float:
        return self.gamma * math.sqrt(self.alpha) * self.m

    @property
    def sigma_bar(self) -> float:
        return math.sqrt(self.alpha * (self.m**2 + self.sigma**2))


def se_init_gmm(params: GmmParams) -> SeStateGmm:
    """State after the identity-aggregator first step:
    m_1 = gamma*(1-2p)/sqrt(alpha), sigma_1 = 1."""
    m1 = params.gamma * (1.0 - 2.0 * params.p) / math.sqrt(params.alpha)
    return SeStateGmm(m=m1, sigma=1.0, gamma=params.gamma, alpha=params.alpha)


def label_atoms(params: GmmParams) -> List[Tuple[float, float, float]]:
    """Joint law of (true label Y, flipped label Yhat) as four weighted atoms."""
    p, pp, pm = params.p, params.pi_plus, params.pi_minus
    return [
        (pp * (1 - p), 1.0, 1.0),
        (pp * p, 1.0, -1.0),
        (pm * (1 - p), -1.0, -1.0),
        (pm * p, -1.0, 1.0),
    ]


def _channel_expectations(
    agg, m_bar: float, sigma_bar: float, params: GmmParams, order: int
) -> Tuple[float, float]:
    """(E[g*Y], E[g^2]) over the four label atoms and the Gaussian channel.

    Smooth aggregators use Gauss-Hermite.  Aggregators that declare steep
    transition points (the logistic surrogates at large beta) are integrated
    with the split Gauss-Legendre rule; a global Hermite rule under-resolves
    their transition layer.
    """
    e_gy = 0.0
    e_gg = 0.0
    use_split = bool(getattr(agg, "y_breakpoints", ()))
    if not use_split:
        rule = gauss_hermite(order)
        g_nodes = _SQRT_2 * rule.nodes
        for w, y_lab, yhat in label_atoms(params):
            vals = agg.value(m_bar * y_lab + sigma_bar * g_nodes, yhat)
            e_gy += w * y_lab * float(rule.weights @ vals) / _SQRT_PI
            e_gg += w * float(rule.weights @ (vals * vals)) / _SQRT_PI
        return e_gy, e_gg
    for w, y_lab, yhat in label_atoms(params):
        if sigma_bar == 0.0:
            v = float(agg.value(m_bar * y_lab, yhat))
            e_gy += w * y_lab * v
            e_gg += w * v * v
            continue
        cuts = [(b - m_bar * y_lab) / sigma_bar for b in agg.y_breakpoints]
        e_gy += w * y_lab * expect_std_normal_split(
            lambda g: agg.value(m_bar * y_lab + sigma_bar * g, yhat), cuts, order
        )
        e_gg += w * expect_std_normal_split(
            lambda g: agg.value(m_bar * y_lab + sigma_bar * g, yhat) ** 2, cuts, order
        )
    return e_gy, e_gg


def se_step_gmm(
    state: SeStateGmm, agg, params: GmmParams, order: int = DEFAULT_ORDER
) -> SeStateGmm:
    """One state-evolution step for an arbitrary aggregator:
    m' = (gamma/sqrt(alpha)) E[g*Y], (sigma')^2 = E[g^2]."""
    e_gy, e_gg = _channel_expectations(agg, state.m_bar, state.sigma_bar, params, order)
    m_next = params.gamma / math.sqrt(params.alpha) * e_gy
    s2 = e_gg
    if not (s2 > 0 and math.isfinite(s2) and math.isfinite(m_next)):
        raise DomainError("state-evolution expectation degenerate or non-finite")
    return SeStateGmm(m=m_next, sigma=math.sqrt(s2), gamma=params.gamma, alpha=params.alpha)


def se_error_gmm(state: SeStateGmm, params: GmmParams) -> float:
    """Predicted test error Phi(-m*gamma / sqrt(m^2 + sigma^2))."""
    return std_normal_cdf(-state.m * params.gamma / math.sqrt(state.m**2 + state.sigma**2))


def se_error_from_eta(eta: float, gamma: float) -> float:
    """Same prediction parameterized by the signal-to-noise ratio."""
    return std_normal_cdf(-gamma * eta / math.sqrt(eta**2 + 1.0))


# --------------------------------------------------------------------------
# one-dimensional update maps in u = eta^2
# --------------------------------------------------------------------------

def eta_map_opt(u: float, params: GmmParams, order: int = DEFAULT_ORDER) -> float:
    """Optimal-aggregation map F(u) = (gamma^2/alpha) E[g~(...)^2].

    The reduced aggregator g~ has unit slope pair: the channel is
    gamma^2*u/(1+u)*Y + gamma*sqrt(u/(1+u))*G and the tanh exponent carries a
    plain 2y term.
    """
    if u < 0:
        raise DomainError("u must be non-negative")
    loc = params.gamma**2 * u / (1.0 + u)
    sc = params.gamma * math.sqrt(u / (1.0 + u))
    log_odds = math.log((1 - params.p) / params.p) if params.p > 0 else math.inf
    log_prior = math.log(params.pi_plus / params.pi_minus)
    rule = gauss_hermite(order)
    g_nodes = _SQRT_2 * rule.nodes
    total = 0.0
    for w, y_lab, yhat in label_atoms(params):
        if params.p == 0.0:
            vals = np.full_like(g_nodes, yhat)
        else:
            y = loc * y_lab + sc * g_nodes
            vals = np.tanh(0.5 * (yhat * log_odds + 2.0 * y + log_prior))
        total += w * float(rule.weights @ (vals * vals)) / _SQRT_PI
    return params.gamma**2 / params.alpha * total


def eta_map_ft(u: float, params: GmmParams) -> float:
    """Sharp-limit map of full retraining:
    (gamma^2/alpha) * (2*Phi(gamma*sqrt(u/(1+u))) - 1)^2."""
    if u < 0:
        raise DomainError("u must be non-negative")
    return (
        params.gamma**2
        / params.alpha
        * (2.0 * std_normal_cdf(params.gamma * math.sqrt(u / (1.0 + u))) - 1.0) ** 2
    )


def eta_map_ct(u: float, params: GmmParams) -> float:
    """Sharp-limit map of consensus retraining:
    (gamma^2/alpha) * (Phi(sqrt(eb)) - p)^2 / (p + (1-2p)*Phi(sqrt(eb)))
    with eb = gamma^2 * u/(1+u)."""
    if u < 0:
        raise DomainError("u must be non-negative")
    eb = params.gamma**2 * u / (1.0 + u)
    phi = std_normal_cdf(math.sqrt(eb))
    return params.gamma**2 / params.alpha * (phi - params.p) ** 2 / (params.p + (1 - 2 * params.p) * phi)


@dataclass(frozen=True)
class SeMapSpec:
    """A chosen one-dimensional update map u -> F(u).

    variant: "opt" | "ft_limit" | "ct_limit" | "smoothed_ft" | "smoothed_ct".
    The smoothed variants evaluate one state-evolution step from the
    self-consistent slice m = sqrt(alpha)/gamma * u, sigma = sqrt(alpha*u)/gamma
    (finite-beta dynamics are not exactly one-dimensional; this slice is the
    one the optimal trajectory lives on, and it converges to the sharp-limit
    maps as beta grows).
    """

    variant: str
    params: GmmParams
    beta: Optional[float] = None
    order: int = DEFAULT_ORDER

    def __post_init__(self):
        known = ("opt", "ft_limit", "ct_limit", "smoothed_ft", "smoothed_ct")
        if self.variant not in known:
            raise ConfigError(f"variant must be one of {known}")
        if self.variant.startswith("smoothed") and not self.beta:
            raise ConfigError("smoothed variants need beta")

    def as_function(self) -> Callable[[float], float]:
        if self.variant == "opt":
            return lambda u: eta_map_opt(u, self.params, self.order)
        if self.variant == "ft_limit":
            return lambda u: eta_map_ft(u, self.params)
        if self.variant == "ct_limit":
            return lambda u: eta_map_ct(u, self.params)
        agg = (
            SmoothedFullRT(self.beta)
            if self.variant == "smoothed_ft"
            else SmoothedConsensusRT(self.beta)
        )

        def step(u: float) -> float:
            if u < 0:
                raise DomainError("u must be non-negative")
            scale = math.sqrt(self.params.alpha) / self.params.gamma
            state = SeStateGmm(
                m=scale * u,
                sigma=scale * math.sqrt(u) if u > 0 else 1e-12,
                gamma=self.params.gamma,
                alpha=self.params.alpha,
            )
            return se_step_gmm(state, agg, self.params, self.order).eta ** 2

        return step


MapLike = Union[SeMapSpec, Callable[[float], float]]


def _map_function(map_spec: MapLike) -> Callable[[float], float]:
    return map_spec.as_function() if isinstance(map_spec, SeMapSpec) else map_spec


def find_fixed_points(
    map_spec: MapLike,
    u_max: float = 50.0,
    grid: int = 2000,
    tol: float = 1e-8,
) -> List[float]:
    """Fixed points of F on [0, u_max], sorted ascending.

    Scans a uniform grid for sign changes of F(u) - u and refines each by
    bisection.  For a map spec the scan range is extended past gamma^2/alpha,
    which bounds every map here, so no fixed point can be missed to the right.
    Returns an empty list when no fixed point lies in range.
    """
    if u_max <= 0:
        raise ConfigError("u_max must be positive")
    if isinstance(map_spec, SeMapSpec):
        bound = map_spec.params.gamma**2 / map_spec.params.alpha
        u_max = max(u_max, 1.05 * bound + 1.0)
    f = _map_function(map_spec)
    us = np.linspace(0.0, u_max, grid + 1)
    resid = np.array([f(u) - u for u in us])
    roots: List[float] = []
    for i in range(len(us) - 1):
        if resid[i] == 0.0:
            roots.append(float(us[i]))
        elif resid[i] * resid[i + 1] < 0:
            roots.append(
                find_root_bisect(lambda u: f(u) - u, float(us[i]), float(us[i + 1]), tol=tol)
            )
    if resid[-1] == 0.0:
        roots.append(float(us[-1]))
    return sorted(roots)


@dataclass(frozen=True)
class CobwebTrace:
    """Iterates (u_t, F(u_t)) of a one-dimensional map, for staircase plots."""

    points: List[Tuple[float, float]]
    diverged: bool = False


def cobweb_trace(map_spec: MapLike, u1: float, T: int) -> CobwebTrace:
    """Iterate u_{t+1} = F(u_t) for T steps starting from u1."""
    if u1 < 0:
        raise DomainError("u1 must be non-negative")
    if T < 1:
        raise ConfigError("T must be >= 1")
    f = _map_function(map_spec)
    pts: List[Tuple[float, float]] = []
    u = float(u1)
    for _ in range(T):
        fu = f(u)
        if not math.isfinite(fu):
            return CobwebTrace(points=pts, diverged=True)
        pts.append((u, fu))
        u = fu
    return CobwebTrace(points=pts, diverged=False)


def find_crossover(
    params: GmmParams, u_max: float = 50.0, grid: int = 2000, tol: float = 1e-10
) -> List[float]:
    """Roots of F_ct(u) - F_ft(u) on (0, u_max], ascending.

    Below the first root the consensus rule dominates, above it full
    retraining does.  Empty list means no crossover in range.
    """
    diff = lambda u: eta_map_ct(u, params) - eta_map_ft(u, params)
    us = np.linspace(0.0, u_max, grid + 1)[1:]  # skip u=0 where FT is trivially 0
    vals = np.array([diff(u) for u in us])
    roots: List[float] = []
    for i in range(len(us) - 1):
        if vals[i] == 0.0:
            roots.append(float(us[i]))
        elif vals[i] * vals[i + 1] < 0:
            roots.append(find_root_bisect(diff, float(us[i]), float(us[i + 1]), tol=tol))
    return sorted(roots)


@dataclass(frozen=True)
class PStarResult:
    """Threshold flip probability with the residual of its defining equation.

    condition_met records whether gamma^2 >= sqrt(pi*alpha/2), the regime in
    which the threshold is guaranteed to be the unique interior root.
    """

    value: float
    residual: float
    condition_met: bool


def p_star(params: GmmParams, tol: float = 1e-12) -> PStarResult:
    """Unique root in (0, 1/2) of Phi(-gamma^2(1-2p)/sqrt(gamma^2(1-2p)^2+alpha)) = p.

    For p >= p_star the retraining trajectory is non-decreasing in
    signal-to-noise from its very first step.  p = 1/2 is always a trivial
    root and is excluded by searching (0, 1/2 - eps).
    """
    g2, alpha = params.gamma**2, params.alpha
    condition_met = g2 >= math.sqrt(math.pi * alpha / 2.0)

    def h(p: float) -> float:
        one_m = 1.0 - 2.0 * p
        return std_normal_cdf(-g2 * one_m / math.sqrt(g2 * one_m**2 + alpha)) - p

    try:
        root = find_root_bisect(h, 1e-9, 0.5 - 1e-9, tol=tol)
    except BracketError:
        # outside the guarantee regime the equation may have no interior root
        return PStarResult(value=math.nan, residual=math.nan, condition_met=condition_met)
    return PStarResult(value=root, residual=h(root), condition_met=condition_met)


# --------------------------------------------------------------------------
# traces and schedules for the empirical runs
# --------------------------------------------------------------------------

def optimal_aggregator_for_state(state: SeStateGmm, params: GmmParams) -> OptimalGmm:
    """Posterior-mean aggregator matched to the channel of a given state.

    On the self-consistent trajectory this coincides with the eta-formula
    slope 2*gamma^2/(alpha*(eta^2+1)); after the identity first step the exact
    channel slope 2*m_bar/sigma_bar^2 differs from it by a factor (1-2p), and
    using the exact slope is what makes the empirical run track the
    eta-recursion (and the Bayes identity hold) from t = 1 on.
    """
    return OptimalGmm.from_se_state(state, params)


def opt_se_trace_gmm(
    params: GmmParams, T: int, order: int = DEFAULT_ORDER
) -> List[SeStateGmm]:
    """States 1..T of the optimal-aggregation state evolution."""
    if T < 1:
        raise ConfigError("T must be >= 1")
    states = [se_init_gmm(params)]
    for _ in range(T - 1):
        agg = optimal_aggregator_for_state(states[-1], params)
        states.append(se_step_gmm(states[-1], agg, params, order))
    return states


def make_opt_schedule_gmm(params: GmmParams, T: int, order: int = DEFAULT_ORDER):
    """(states, schedule) with the aggregator for step t built from state t.

    The schedule is theory-driven: the signal-to-noise values come from the
    deterministic trace, not from data.
    """
    states = opt_se_trace_gmm(params, T, order)
    aggs = [optimal_aggregator_for_state(s, params) for s in states]

    def schedule(t: int, state, data) -> OptimalGmm:
        return aggs[t - 1]

    return states, schedule


def estimate_se_state_gmm(theta: np.ndarray, mu: np.ndarray, params: GmmParams) -> SeStateGmm:
    """Plug-in state estimate from a model vector (needs the true mean).

    m_hat = mu.theta/(sqrt(d)*gamma), sigma_hat^2 = ||theta||^2/d - m_hat^2.
    Exploration aid for data-driven schedules; the default schedules use the
    deterministic trace instead.
    """
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[0]
    m_hat = float(mu @ theta) / (math.sqrt(d) * params.gamma)
    s2_hat = float(theta @ theta) / d - m_hat**2
    if s2_hat <= 0:
        raise DomainError("plug-in variance estimate non-positive")
    return SeStateGmm(m=m_hat, sigma=math.sqrt(s2_hat), gamma=params.gamma, alpha=params.alpha)


def make_plugin_opt_schedule_gmm(params: GmmParams):
    """Schedule estimating the channel from the current iterate (exploratory)."""

    def schedule(t: int, state, data) -> OptimalGmm:
        est = estimate_se_state_gmm(state.theta, data.mu, params)
        return OptimalGmm.from_se_state(est, params)

    return schedule


def constant_schedule(agg):
    """Use the same aggregator at every retraining step."""

    def schedule(t: int, state, data):
        return agg

    return schedule
