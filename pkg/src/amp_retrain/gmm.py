"""Two-component Gaussian-mixture classification under label flipping.

Data generation, the retraining aggregator family, the memory-corrected
iterative retraining update, the plain one-shot linear baseline, and test
error.  The iteration alternates a model-update step and a soft-prediction
step; both carry correction terms that debias the reuse of a fixed data
matrix, which keeps the iterates asymptotically Gaussian and lets the
deterministic recursion in :mod:`amp_retrain.gmm_se` predict their behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    ConfigError,
    DegenerateModelError,
    DivergenceError,
    DomainError,
    ShapeError,
)
from .numerics import RngStream, stable_logistic, std_normal_cdf


# --------------------------------------------------------------------------
# parameters and data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GmmParams:
    """Experiment configuration for the Gaussian-mixture ground truth.

    gamma is the norm of the class-mean vector, alpha the feature/sample
    ratio d/n, p the label flip probability, pi_plus the probability of the
    +1 class.  d defaults to round(alpha * n).
    """

    gamma: float
    alpha: float
    p: float
    pi_plus: float = 0.5
    n: int = 1000
    d: Optional[int] = None

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ConfigError("gamma must be positive and finite")
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ConfigError("alpha must be positive and finite")
        if not (0.0 <= self.p < 0.5):
            raise ConfigError("p must lie in [0, 0.5)")
        # pi_plus in the closed interval: the endpoints give single-class data,
        # useful as degenerate edge cases.
        if not (0.0 <= self.pi_plus <= 1.0):
            raise ConfigError("pi_plus must lie in [0, 1]")
        if self.n < 1:
            raise ConfigError("n must be a positive integer")
        if self.d is None:
            object.__setattr__(self, "d", int(round(self.alpha * self.n)))
        if self.d < 1:
            raise ConfigError("d must be a positive integer (n*d nonzero)")
        if abs(self.d / self.n - self.alpha) > 1.0 / self.n + 1e-9:
            raise ConfigError(
                f"d/n = {self.d / self.n} inconsistent with alpha = {self.alpha}"
            )

    @property
    def pi_minus(self) -> float:
        return 1.0 - self.pi_plus


@dataclass(frozen=True, eq=False)
class GmmDataset:
    """Sampled features, clean labels, flipped labels, and the mean direction."""

    X: np.ndarray        # (n, d)
    y_true: np.ndarray   # (n,) of +-1
    y_noisy: np.ndarray  # (n,) of +-1
    mu: np.ndarray       # (d,), norm equals gamma

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def sample_gmm_dataset(params: GmmParams, rng: RngStream) -> GmmDataset:
    """Draw x_i = y_i * mu + z_i with z_i ~ N(0, I_d) and flipped labels.

    The mean is sampled with iid standard normal entries and rescaled so its
    norm equals gamma exactly.  Draw order (mu, labels, noise, flips) is fixed
    so identical streams reproduce identical datasets.
    """
    if params.n * (params.d or 0) == 0:
        raise ConfigError("empty dataset requested")
    gen = rng.generator()
    mu = gen.standard_normal(params.d)
    mu *= params.gamma / np.linalg.norm(mu)
    y = np.where(gen.random(params.n) < params.pi_plus, 1.0, -1.0)
    X = y[:, None] * mu[None, :] + gen.standard_normal((params.n, params.d))
    flips = gen.random(params.n) < params.p
    y_noisy = np.where(flips, -y, y)
    return GmmDataset(X=X, y_true=y, y_noisy=y_noisy, mu=mu)


# --------------------------------------------------------------------------
# aggregators g(y_soft, y_noisy)
# --------------------------------------------------------------------------

def _as_float_arrays(y, yhat):
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    return np.broadcast_arrays(y, yhat)


@dataclass(frozen=True)
class IdentityAggregator:
    """g(y, yhat) = yhat: ignores the model prediction entirely."""

    y_breakpoints = ()

    def value(self, y, yhat):
        y, yhat = _as_float_arrays(y, yhat)
        return yhat.copy()

    def deriv(self, y, yhat):
        y, _ = _as_float_arrays(y, yhat)
        return np.zeros_like(y)


@dataclass(frozen=True)
class OptimalGmm:
    """Posterior-mean aggregator tanh((yhat*L + slope*y + prior) / 2).

    slope is the coefficient on the soft prediction, L = log((1-p)/p) the
    label log-likelihood ratio, prior = log(pi_plus/pi_minus).  Output lies
    strictly inside (-1, 1) for p > 0 and is the conditional mean of the true
    label given (soft prediction, flipped label) when slope matches the
    prediction channel.
    """

    slope: float
    p: float
    log_odds: float
    log_prior: float
    eta: Optional[float] = None  # diagnostic: signal-to-noise this slope corresponds to

    y_breakpoints = ()

    @classmethod
    def from_eta(cls, eta: float, params: GmmParams) -> "OptimalGmm":
        """Slope 2*gamma^2 / (alpha*(eta^2+1)): matched to the self-consistent
        retraining trajectory at signal-to-noise ratio eta."""
        if not (eta >= 0 and math.isfinite(eta)):
            raise DomainError("eta must be finite and non-negative")
        slope = 2.0 * params.gamma**2 / (params.alpha * (eta**2 + 1.0))
        return cls._build(slope, params, eta)

    @classmethod
    def from_se_state(cls, state, params: GmmParams) -> "OptimalGmm":
        """Slope 2*m_bar/sigma_bar^2: exact posterior mean for the prediction
        channel described by a state-evolution state (see gmm_se)."""
        slope = 2.0 * state.m_bar / state.sigma_bar**2
        return cls._build(slope, params, state.eta)

    @classmethod
    def _build(cls, slope, params, eta):
        log_odds = math.log((1 - params.p) / params.p) if params.p > 0 else math.inf
        if params.pi_plus in (0.0, 1.0):
            log_prior = math.inf if params.pi_plus == 1.0 else -math.inf
        else:
            log_prior = math.log(params.pi_plus / params.pi_minus)
        return cls(slope=slope, p=params.p, log_odds=log_odds,
                   log_prior=log_prior, eta=eta)

    def value(self, y, yhat):
        y, yhat = _as_float_arrays(y, yhat)
        if self.p == 0.0:
            # infinite log-odds limit: the flipped label is perfectly reliable
            return yhat.copy()
        return np.tanh(0.5 * (yhat * self.log_odds + self.slope * y + self.log_prior))

    def deriv(self, y, yhat):
        v = self.value(y, yhat)
        if self.p == 0.0:
            return np.zeros_like(v)
        return 0.5 * self.slope * (1.0 - v * v)


@dataclass(frozen=True)
class SmoothedFullRT:
    """Logistic surrogate 2*sigmoid(beta*y) - 1 for retraining on sign(y).

    Lipschitz with constant beta/2; sharpens to the hard sign rule as beta
    grows, which is what makes the memory-correction term well defined.
    """

    beta: float

    y_breakpoints = (0.0,)

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ConfigError("beta must be positive and finite")

    def value(self, y, yhat):
        y, _ = _as_float_arrays(y, yhat)
        return np.tanh(0.5 * self.beta * y)

    def deriv(self, y, yhat):
        v = self.value(y, yhat)
        return 0.5 * self.beta * (1.0 - v * v)


@dataclass(frozen=True)
class SmoothedConsensusRT:
    """Logistic surrogate yhat*sigmoid(beta*y*yhat) for keeping only samples
    whose prediction agrees with the given label."""

    beta: float

    y_breakpoints = (0.0,)

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise ConfigError("beta must be positive and finite")

    def value(self, y, yhat):
        y, yhat = _as_float_arrays(y, yhat)
        return yhat * stable_logistic(self.beta * y * yhat)

    def deriv(self, y, yhat):
        y, yhat = _as_float_arrays(y, yhat)
        s = stable_logistic(self.beta * y * yhat)
        return self.beta * s * (1.0 - s)


def _validate_agg_args(y, yhat):
    y = np.asarray(y, dtype=float)
    yhat_arr = np.asarray(yhat, dtype=float)
    if not np.all(np.isfinite(y)):
        raise DomainError("soft prediction must be finite")
    if not np.all(np.abs(yhat_arr) == 1.0):
        raise DomainError("given label must be +1 or -1")


def eval_aggregator(agg, y, yhat):
    """Evaluate g(y, yhat); scalar in, scalar out."""
    _validate_agg_args(y, yhat)
    out = agg.value(y, yhat)
    return float(out) if np.ndim(y) == 0 and np.ndim(yhat) == 0 else out


def eval_aggregator_deriv(agg, y, yhat):
    """Analytic partial derivative of g in its first argument."""
    _validate_agg_args(y, yhat)
    out = agg.deriv(y, yhat)
    return float(out) if np.ndim(y) == 0 and np.ndim(yhat) == 0 else out


def onsager_coefficient(agg, y_soft: np.ndarray, y_noisy: np.ndarray) -> float:
    """(1/n) sum_i dg/dy(y_soft_i, y_noisy_i): the memory-correction weight."""
    y_soft = np.asarray(y_soft, dtype=float)
    y_noisy = np.asarray(y_noisy, dtype=float)
    if y_soft.shape != y_noisy.shape:
        raise ShapeError(f"length mismatch: {y_soft.shape} vs {y_noisy.shape}")
    return float(np.mean(agg.deriv(y_soft, y_noisy)))


# --------------------------------------------------------------------------
# the iteration
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AmpStateGmm:
    """Model vector, soft predictions on the training set, and the step index."""

    theta: np.ndarray   # (d,)
    y_soft: np.ndarray  # (n,)
    t: int


def initial_amp_state_gmm(data: GmmDataset) -> AmpStateGmm:
    """Zero state at t = 0; the first step with the identity aggregator then
    produces theta^1 = X^T y_noisy / sqrt(n) exactly."""
    return AmpStateGmm(theta=np.zeros(data.d), y_soft=np.zeros(data.n), t=0)


def amp_step_gmm(state: AmpStateGmm, data: GmmDataset, agg) -> AmpStateGmm:
    """One retraining step with memory correction.

    theta' = X^T g(y, yhat)/sqrt(n) - C*theta ; y' = X theta'/sqrt(n) - g*d/n
    where C is the Onsager coefficient of the aggregator at the current state.
    """
    if state.theta.shape[0] != data.d or state.y_soft.shape[0] != data.n:
        raise ShapeError("state dimensions do not match dataset")
    n, d = data.n, data.d
    g = agg.value(state.y_soft, data.y_noisy)
    c = onsager_coefficient(agg, state.y_soft, data.y_noisy)
    theta_new = data.X.T @ g / np.sqrt(n) - c * state.theta
    y_new = data.X @ theta_new / np.sqrt(n) - g * (d / n)
    t_new = state.t + 1
    if not (np.all(np.isfinite(theta_new)) and np.all(np.isfinite(y_new))):
        raise DivergenceError("non-finite values in retraining update", iteration=t_new)
    return AmpStateGmm(theta=theta_new, y_soft=y_new, t=t_new)


def test_error_gmm(theta: np.ndarray, mu: np.ndarray) -> float:
    """Population misclassification rate Phi(-mu.theta / ||theta||)."""
    theta = np.asarray(theta, dtype=float)
    nrm = np.linalg.norm(theta)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise DegenerateModelError("model vector has zero or non-finite norm")
    return std_normal_cdf(-float(mu @ theta) / nrm)


def vanilla_estimator(data: GmmDataset) -> np.ndarray:
    """One-shot linear baseline X^T y_noisy / n (no retraining)."""
    return data.X.T @ data.y_noisy / data.n


# --------------------------------------------------------------------------
# trajectories
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryPoint:
    t: int
    error: float
    overlap: float      # mu.theta / ||theta||  (or rho for the GLM run)
    model_norm: float


@dataclass(frozen=True)
class Trajectory:
    points: list
    diverged_at: Optional[int] = None

    @property
    def errors(self) -> np.ndarray:
        return np.array([pt.error for pt in self.points])


# schedule(t, state, data) -> aggregator used to advance from step t
ScheduleGmm = Callable[[int, AmpStateGmm, GmmDataset], object]


def run_retraining_gmm(
    params: GmmParams,
    schedule: ScheduleGmm,
    T: int,
    rng: RngStream,
    data: Optional[GmmDataset] = None,
) -> Trajectory:
    """Run T retraining steps from the identity-aggregator initialization.

    The first step always uses the identity aggregator on the given labels;
    the schedule supplies the aggregator for every later step.  On divergence
    the trajectory is truncated and flagged rather than raised.
    """
    if T < 1:
        raise ConfigError("T must be >= 1")
    if data is None:
        data = sample_gmm_dataset(params, rng)
    state = initial_amp_state_gmm(data)
    identity = IdentityAggregator()
    points = []
    diverged_at = None
    for _ in range(T):
        agg = identity if state.t == 0 else schedule(state.t, state, data)
        try:
            state = amp_step_gmm(state, data, agg)
            # entries can stay finite while the squared norm overflows
            points.append(TrajectoryPoint(
                t=state.t,
                error=test_error_gmm(state.theta, data.mu),
                overlap=float(data.mu @ state.theta / np.linalg.norm(state.theta)),
                model_norm=float(np.linalg.norm(state.theta)),
            ))
        except DivergenceError as exc:
            diverged_at = exc.iteration
            break
        except DegenerateModelError:
            diverged_at = state.t
            break
    return Trajectory(points=points, diverged_at=diverged_at)


def run_retraining_gmm_hard_baseline(
    params: GmmParams,
    rule: str,
    T: int,
    rng: RngStream,
    data: Optional[GmmDataset] = None,
) -> Trajectory:
    """Hard full/consensus retraining without memory-correction terms.

    The hard sign and indicator rules are not Lipschitz, so the corrected
    iteration is undefined for them; this baseline mode simply iterates
    theta' = X^T g / sqrt(n), y' = X theta' / sqrt(n) with g = sign(y) (rule
    "full") or g = yhat * 1{y*yhat > 0} (rule "consensus").
    """
    if rule not in ("full", "consensus"):
        raise ConfigError(f"unknown hard baseline rule: {rule!r}")
    if T < 1:
        raise ConfigError("T must be >= 1")
    if data is None:
        data = sample_gmm_dataset(params, rng)
    n, d = data.n, data.d
    g = data.y_noisy.astype(float)
    points = []
    diverged_at = None
    theta = None
    for t in range(1, T + 1):
        theta = data.X.T @ g / np.sqrt(n)
        y_soft = data.X @ theta / np.sqrt(n)
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(y_soft))):
            diverged_at = t
            break
        points.append(TrajectoryPoint(
            t=t,
            error=test_error_gmm(theta, data.mu),
            overlap=float(data.mu @ theta / np.linalg.norm(theta)),
            model_norm=float(np.linalg.norm(theta)),
        ))
        if rule == "full":
            g = np.sign(y_soft)
            g[g == 0] = 1.0
        else:
            g = data.y_noisy * (y_soft * data.y_noisy > 0)
    return Trajectory(points=points, diverged_at=diverged_at)
