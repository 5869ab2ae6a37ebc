"""Generalized-linear ground truth under label flipping.

Link functions, data generation, the Bayes-optimal aggregator (generic link
via quadrature, sign link in closed form), the memory-corrected retraining
iteration, and test error through the overlap rho = beta.theta/(|beta||theta|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, ClassVar, Optional, Tuple

import numpy as np

from .errors import (
    ConfigError,
    DegenerateModelError,
    DivergenceError,
    DomainError,
    ShapeError,
)
from scipy.special import ndtr

from .gmm import IdentityAggregator, Trajectory, TrajectoryPoint, _as_float_arrays
from .numerics import (
    RngStream,
    expect_gauss_1d,
    expect_std_normal_split,
    gauss_hermite,
    gauss_legendre,
    stable_logistic,
    std_normal_cdf,
)

_SQRT_PI = math.sqrt(math.pi)
_SQRT_2 = math.sqrt(2.0)

FD_STEP = 1e-5  # central finite-difference step for the memory coefficient


# --------------------------------------------------------------------------
# link functions
# --------------------------------------------------------------------------

def _check_monotone_margin(link) -> None:
    # h(u) > h(-u) for u > 0 is what makes the error curve decreasing in the
    # overlap; asserted numerically on a grid at construction.
    u = np.linspace(1e-3, 8.0, 64)
    if not np.all(link.h(u) > link.h(-u)):
        raise ConfigError(f"link {link!r} violates h(u) > h(-u) for u > 0")


@dataclass(frozen=True)
class SignLink:
    """h(z) = (1 + sign(z))/2: deterministic labels y = sign(x.beta)."""

    name: ClassVar[str] = "sign"
    discontinuities: ClassVar[Tuple[float, ...]] = (0.0,)

    def h(self, z):
        return 0.5 * (1.0 + np.sign(z))


@dataclass(frozen=True)
class LogisticLink:
    scale: float = 1.0

    name: ClassVar[str] = "logistic"
    discontinuities: ClassVar[Tuple[float, ...]] = ()

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ConfigError("link scale must be positive and finite")
        _check_monotone_margin(self)

    def h(self, z):
        return stable_logistic(self.scale * np.asarray(z, dtype=float))


@dataclass(frozen=True)
class ProbitLink:
    scale: float = 1.0

    name: ClassVar[str] = "probit"
    discontinuities: ClassVar[Tuple[float, ...]] = ()

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ConfigError("link scale must be positive and finite")
        _check_monotone_margin(self)

    def h(self, z):
        return ndtr(self.scale * np.asarray(z, dtype=float))


def link_from_name(name: str, scale: float = 1.0):
    if name == "sign":
        return SignLink()
    if name == "logistic":
        return LogisticLink(scale)
    if name == "probit":
        return ProbitLink(scale)
    raise ConfigError(f"unknown link: {name!r}")


def hat_h_p(z, link, p: float):
    """Flip-corrupted label probability (1-p)h(z) + p(1-h(z)).

    Accepts the closed interval [0, 0.5]; p = 0.5 makes labels pure noise.
    """
    if not (0.0 <= p <= 0.5):
        raise DomainError("p must lie in [0, 0.5]")
    return p + (1.0 - 2.0 * p) * link.h(z)


# --------------------------------------------------------------------------
# parameters and data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GlmParams:
    """gamma^2 is the limit of ||beta||^2/d; alpha = d/n; p the flip rate.

    The sign link is invariant to the scale of beta, so gamma is fixed to 1
    internally for it (the supplied value is still recorded).
    """

    gamma: float
    alpha: float
    p: float
    link: object
    n: int = 1000
    d: Optional[int] = None

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ConfigError("gamma must be positive and finite")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ConfigError("alpha must be positive and finite")
        if not (0.0 <= self.p < 0.5):
            raise ConfigError("p must lie in [0, 0.5)")
        if self.n < 1:
            raise ConfigError("n must be a positive integer")
        if self.d is None:
            object.__setattr__(self, "d", int(round(self.alpha * self.n)))
        if self.d < 1:
            raise ConfigError("d must be a positive integer")
        if abs(self.d / self.n - self.alpha) > 1.0 / self.n + 1e-9:
            raise ConfigError(
                f"d/n = {self.d / self.n} inconsistent with alpha = {self.alpha}"
            )

    @property
    def gamma_eff(self) -> float:
        return 1.0 if isinstance(self.link, SignLink) else self.gamma

    @property
    def prior_var(self) -> float:
        """Variance of the latent margin x.beta in the large-system limit."""
        return self.alpha * self.gamma_eff**2


@dataclass(frozen=True, eq=False)
class GlmDataset:
    X: np.ndarray          # (n, d), entries N(0, 1/n)
    beta_true: np.ndarray  # (d,), ||beta||^2/d = gamma_eff^2
    y_true: np.ndarray     # (n,) of +-1
    y_noisy: np.ndarray    # (n,) of +-1

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def sample_glm_dataset(params: GlmParams, rng: RngStream) -> GlmDataset:
    """Rows x_i ~ N(0, I/n); P(y=1|x) = h(x.beta); labels flipped w.p. p."""
    gen = rng.generator()
    beta = gen.standard_normal(params.d)
    beta *= params.gamma_eff * math.sqrt(params.d) / np.linalg.norm(beta)
    X = gen.standard_normal((params.n, params.d)) / math.sqrt(params.n)
    margins = X @ beta
    y = np.where(gen.random(params.n) < params.link.h(margins), 1.0, -1.0)
    flips = gen.random(params.n) < params.p
    y_noisy = np.where(flips, -y, y)
    return GlmDataset(X=X, beta_true=beta, y_true=y, y_noisy=y_noisy)


# --------------------------------------------------------------------------
# posterior-mean integrals
# --------------------------------------------------------------------------

def _label_factor(z, link, p: float, yhat: float):
    hp = hat_h_p(z, link, p)
    return hp if yhat > 0 else 1.0 - hp


def posterior_mean_latent(
    u,
    yhat: float,
    quad_a: float,
    lin_b: float,
    link,
    p: float,
    prior_var: float,
    order: int = 61,
    tail_width: float = 13.0,
):
    """E[Z | channel observation u, flipped label yhat] for the latent margin.

    The posterior density is proportional to
        exp(-quad_a*z^2/2 + lin_b*u*z) * f_yhat(z) * exp(-z^2/(2*prior_var)),
    i.e. a Gaussian N(m, s^2) with s^2 = 1/(quad_a + 1/prior_var), m =
    lin_b*s^2*u, reweighted by the label factor f.  Completing the square and
    centering the quadrature on (m, s) keeps the integrand bounded, so no
    log-domain rescue is needed.  Smooth links use Gauss-Hermite; links with
    jump discontinuities are integrated piecewise with Gauss-Legendre split at
    the jumps (a global Hermite rule converges only polynomially there).

    Vectorized over u.
    """
    u = np.asarray(u, dtype=float)
    s2 = 1.0 / (quad_a + 1.0 / prior_var)
    s = math.sqrt(s2)
    m = lin_b * s2 * u
    if not link.discontinuities:
        rule = gauss_hermite(order)
        z = m[..., None] + _SQRT_2 * s * rule.nodes
        f = _label_factor(z, link, p, yhat)
        den = f @ rule.weights
        num = (f * z) @ rule.weights
    else:
        rule = gauss_legendre(order)
        lo = m - tail_width * s
        hi = m + tail_width * s
        cuts = [lo] + [np.clip(b, lo, hi) for b in sorted(link.discontinuities)] + [hi]
        num = np.zeros_like(m)
        den = np.zeros_like(m)
        for a, b in zip(cuts[:-1], cuts[1:]):
            half = 0.5 * (b - a)
            mid = 0.5 * (b + a)
            z = mid[..., None] + half[..., None] * rule.nodes
            w = half[..., None] * rule.weights
            dens = np.exp(-0.5 * (z - m[..., None]) ** 2 / s2)
            f = _label_factor(z, link, p, yhat)
            den += np.sum(w * dens * f, axis=-1)
            num += np.sum(w * dens * f * z, axis=-1)
    if np.any(den <= 0.0) or not np.all(np.isfinite(den)):
        raise DomainError(
            "posterior normalization vanished (label factor has no mass near the channel)"
        )
    return num / den


# --------------------------------------------------------------------------
# aggregators
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OptimalGlm:
    """Optimal aggregator for a generic link, evaluated by quadrature.

    g(u, yhat) = (1/prior_var + quad_a) * E[Z | u, yhat] - lin_b * u, with the
    channel coefficients (quad_a, lin_b) matched to the law of the soft
    predictions: (eta^2, 1/alpha) on the self-consistent trajectory, or
    ((mu/sigma)^2, mu/sigma^2) for an arbitrary state.
    """

    quad_a: float
    lin_b: float
    link: object
    p: float
    prior_var: float
    alpha: float
    order: int = 61
    eta: Optional[float] = None

    @classmethod
    def from_eta(cls, eta: float, params: GlmParams, order: int = 61) -> "OptimalGlm":
        if not (eta >= 0 and math.isfinite(eta)):
            raise DomainError("eta must be finite and non-negative")
        if eta == 0.0 and isinstance(params.link, SignLink):
            raise DomainError(
                "eta = 0 with the sign link: use the closed-form sign aggregator limit"
            )
        return cls(
            quad_a=eta**2,
            lin_b=1.0 / params.alpha,
            link=params.link,
            p=params.p,
            prior_var=params.prior_var,
            alpha=params.alpha,
            order=order,
            eta=eta,
        )

    @classmethod
    def from_se_state(cls, state, params: GlmParams, order: int = 61) -> "OptimalGlm":
        return cls(
            quad_a=(state.mu / state.sigma) ** 2,
            lin_b=state.mu / state.sigma**2,
            link=params.link,
            p=params.p,
            prior_var=params.prior_var,
            alpha=params.alpha,
            order=order,
            eta=state.eta,
        )

    def value(self, u, yhat):
        u, yhat = _as_float_arrays(u, yhat)
        out = np.empty_like(u)
        for lab in (1.0, -1.0):
            mask = yhat == lab
            if np.any(mask):
                pm = posterior_mean_latent(
                    u[mask], lab, self.quad_a, self.lin_b,
                    self.link, self.p, self.prior_var, self.order,
                )
                out[mask] = (1.0 / self.prior_var + self.quad_a) * pm - self.lin_b * u[mask]
        return out


@dataclass(frozen=True)
class OptimalSign:
    """Closed-form optimal aggregator for the sign link.

    With s^2 = (1/alpha + quad_a)^(-1) and r = lin_b*u*s:
    g(u, yhat) = (1/s) * (1-2p)*yhat*sqrt(2/pi)*exp(-r^2/2)
                 / (1 + (1-2p)*yhat*(2*Phi(r) - 1)).
    """

    quad_a: float
    lin_b: float
    p: float
    alpha: float
    eta: Optional[float] = None

    @classmethod
    def from_eta(cls, eta: float, params: GlmParams) -> "OptimalSign":
        if not (eta > 0 and math.isfinite(eta)):
            raise DomainError("eta must be positive and finite")
        return cls(quad_a=eta**2, lin_b=1.0 / params.alpha, p=params.p,
                   alpha=params.alpha, eta=eta)

    @classmethod
    def from_se_state(cls, state, params: GlmParams) -> "OptimalSign":
        return cls(quad_a=(state.mu / state.sigma) ** 2, lin_b=state.mu / state.sigma**2,
                   p=params.p, alpha=params.alpha, eta=state.eta)

    def value(self, u, yhat):
        u, yhat = _as_float_arrays(u, yhat)
        s2 = 1.0 / (1.0 / self.alpha + self.quad_a)
        s = math.sqrt(s2)
        r = self.lin_b * s * u
        amp = (1.0 - 2.0 * self.p) * yhat
        num = amp * math.sqrt(2.0 / math.pi) * np.exp(-0.5 * r * r)
        den = 1.0 + amp * (2.0 * std_normal_cdf(r) - 1.0)
        return num / (den * s)


def optimal_aggregator_glm(
    u, yhat, eta: float, params: GlmParams, order: int = 61
):
    """Generic-link optimal aggregator at signal-to-noise eta (quadrature)."""
    agg = OptimalGlm.from_eta(eta, params, order)
    out = agg.value(u, yhat)
    return float(out) if np.ndim(u) == 0 and np.ndim(yhat) == 0 else out


def optimal_aggregator_sign(u, yhat, eta: float, params: GlmParams):
    """Sign-link optimal aggregator in closed form at signal-to-noise eta."""
    agg = OptimalSign.from_eta(eta, params)
    out = agg.value(u, yhat)
    return float(out) if np.ndim(u) == 0 and np.ndim(yhat) == 0 else out


def onsager_coefficient_glm(agg, y_soft: np.ndarray, y_noisy: np.ndarray, step: float = FD_STEP) -> float:
    """(1/n) sum_i dg/dy by central finite differences.

    The quadrature-backed aggregators have no convenient closed derivative;
    they are smooth, and only the empirical average enters the update.
    """
    y_soft = np.asarray(y_soft, dtype=float)
    y_noisy = np.asarray(y_noisy, dtype=float)
    if y_soft.shape != y_noisy.shape:
        raise ShapeError(f"length mismatch: {y_soft.shape} vs {y_noisy.shape}")
    up = agg.value(y_soft + step, y_noisy)
    dn = agg.value(y_soft - step, y_noisy)
    return float(np.mean((up - dn) / (2.0 * step)))


# --------------------------------------------------------------------------
# the iteration
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AmpStateGlm:
    beta_est: np.ndarray  # (d,)
    y_soft: np.ndarray    # (n,)
    t: int


def initial_amp_state_glm(data: GlmDataset) -> AmpStateGlm:
    return AmpStateGlm(beta_est=np.zeros(data.d), y_soft=np.zeros(data.n), t=0)


def amp_step_glm(state: AmpStateGlm, data: GlmDataset, agg) -> AmpStateGlm:
    """beta' = X^T g - C*beta ; y' = X beta' - g*d/n.

    No 1/sqrt(n) factors here: the design matrix already carries the 1/n
    covariance scaling.
    """
    if state.beta_est.shape[0] != data.d or state.y_soft.shape[0] != data.n:
        raise ShapeError("state dimensions do not match dataset")
    g = agg.value(state.y_soft, data.y_noisy)
    c = onsager_coefficient_glm(agg, state.y_soft, data.y_noisy)
    beta_new = data.X.T @ g - c * state.beta_est
    y_new = data.X @ beta_new - g * (data.d / data.n)
    t_new = state.t + 1
    if not (np.all(np.isfinite(beta_new)) and np.all(np.isfinite(y_new))):
        raise DivergenceError("non-finite values in retraining update", iteration=t_new)
    return AmpStateGlm(beta_est=beta_new, y_soft=y_new, t=t_new)


# --------------------------------------------------------------------------
# test error
# --------------------------------------------------------------------------

def error_curve_glm(rho: float, params: GlmParams, order: int = 61) -> float:
    """Misclassification rate as a function of the overlap rho, by quadrature.

    E_Z[Phi(rho*Z/sqrt(1-rho^2))*(1-h(sqrt(alpha)*gamma*Z))
        + Phi(-rho*Z/sqrt(1-rho^2))*h(sqrt(alpha)*gamma*Z)],  Z ~ N(0,1).
    Links with jumps are integrated piecewise.  Decreasing in rho whenever
    h(u) > h(-u) for u > 0.
    """
    if not (-1.0 <= rho <= 1.0):
        raise DomainError("rho must lie in [-1, 1]")
    scale = math.sqrt(params.alpha) * params.gamma_eff
    if abs(rho) >= 1.0 - 1e-14:
        sgn = 1.0 if rho > 0 else -1.0

        def integrand_limit(z):
            big = np.where(sgn * z >= 0, np.inf, -np.inf)
            hv = params.link.h(scale * z)
            return np.where(np.isposinf(big), 1.0, 0.0) * (1.0 - hv) + np.where(
                np.isneginf(big), 1.0, 0.0
            ) * hv

        integrand = integrand_limit
    else:
        coef = rho / math.sqrt(1.0 - rho * rho)

        def integrand(z):
            hv = params.link.h(scale * z)
            return ndtr(coef * z) * (1.0 - hv) + ndtr(-coef * z) * hv

    if params.link.discontinuities:
        cuts = [b / scale for b in params.link.discontinuities]
        return expect_std_normal_split(integrand, cuts, order)
    return expect_gauss_1d(integrand, order)


def overlap_glm(theta: np.ndarray, beta_true: np.ndarray) -> float:
    theta = np.asarray(theta, dtype=float)
    beta_true = np.asarray(beta_true, dtype=float)
    tn = np.linalg.norm(theta)
    bn = np.linalg.norm(beta_true)
    if tn == 0.0 or bn == 0.0 or not (np.isfinite(tn) and np.isfinite(bn)):
        raise DegenerateModelError("zero or non-finite norm in overlap")
    return float(np.clip(beta_true @ theta / (bn * tn), -1.0, 1.0))


def test_error_glm(theta: np.ndarray, data: GlmDataset, params: GlmParams, order: int = 61) -> float:
    """Population misclassification rate of sign(x.theta).

    Sign link uses the exact identity arccos(rho)/pi; other links evaluate the
    quadrature error curve.
    """
    rho = overlap_glm(theta, data.beta_true)
    if isinstance(params.link, SignLink):
        return float(np.arccos(rho) / math.pi)
    return error_curve_glm(rho, params, order)


ScheduleGlm = Callable[[int, AmpStateGlm, GlmDataset], object]


def run_retraining_glm(
    params: GlmParams,
    schedule: ScheduleGlm,
    T: int,
    rng: RngStream,
    data: Optional[GlmDataset] = None,
) -> Trajectory:
    """Run T retraining steps; first step is the identity aggregator."""
    if T < 1:
        raise ConfigError("T must be >= 1")
    if data is None:
        data = sample_glm_dataset(params, rng)
    state = initial_amp_state_glm(data)
    identity = IdentityAggregator()
    points = []
    diverged_at = None
    for _ in range(T):
        agg = identity if state.t == 0 else schedule(state.t, state, data)
        try:
            state = amp_step_glm(state, data, agg)
            rho = overlap_glm(state.beta_est, data.beta_true)
            points.append(TrajectoryPoint(
                t=state.t,
                error=test_error_glm(state.beta_est, data, params),
                overlap=rho,
                model_norm=float(np.linalg.norm(state.beta_est)),
            ))
        except DivergenceError as exc:
            diverged_at = exc.iteration
            break
        except DegenerateModelError:
            diverged_at = state.t
            break
    return Trajectory(points=points, diverged_at=diverged_at)
