"""Arrival and service models.

Each model is an immutable dataclass exposing, where meaningful:

* ``mgf_increment(theta)``      E[exp(theta c_k)] of one slot increment,
* ``mgf_path(theta, t)``        exact E[exp(theta S(0, t))],
* ``effective_capacity(theta)`` long-run decay rate of the service MGF at
  -theta (theta > 0), whose theta -> 0 limit is the mean rate,
* ``sample_path(seed, T)`` and ``sample_increments(rng, T, n)`` seeded
  deterministic sample path generators.

Internally rates are megabits per slot and theta is per megabit.  MGFs that
diverge return +inf rather than raising: divergence is a value.

Two-state Markov-modulated models additionally expose the spectral
quantities of the 2x2 slot operator L(theta) = P_transition * diag(M0, M1):
its dominant eigenvalue drives the effective capacity, and the mixing
weight of the spectral decomposition gives an exact two-term form of the
path MGF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

INF = float("inf")

__all__ = [
    "DeterministicService",
    "ExponentialVbrService",
    "ExponentialArrivals",
    "LeftoverService",
    "MmooService",
    "MarkovModulated2Service",
    "leftover_two_state",
    "mmoo_as_two_state",
    "erlang_quantile",
    "regularized_lower_gamma",
]

_EXP_OVERFLOW = 709.0


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < _EXP_OVERFLOW else INF


def _rng_from_seed(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed))


# ===========================================================================
# regularized incomplete gamma and the Erlang quantile
# ===========================================================================

_GAMMA_EPS = 1e-15
_GAMMA_ITMAX = 600


def regularized_lower_gamma(a: float, x: float) -> float:
    """P(a, x), the regularized lower incomplete gamma function.

    Series expansion for x < a + 1, continued fraction (modified Lentz)
    for the complementary function otherwise.
    """
    if a <= 0:
        raise ValueError("shape a must be > 0")
    if x < 0:
        raise ValueError("x must be >= 0")
    if x == 0.0:
        return 0.0
    log_prefactor = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1.0:
        # P(a, x) = prefactor * sum_k x^k / (a (a+1) ... (a+k))
        term = 1.0 / a
        total = term
        denom = a
        for _ in range(_GAMMA_ITMAX):
            denom += 1.0
            term *= x / denom
            total += term
            if abs(term) < abs(total) * _GAMMA_EPS:
                return min(1.0, math.exp(log_prefactor) * total)
        raise RuntimeError(f"incomplete gamma series did not converge (a={a}, x={x})")
    # Q(a, x) via continued fraction, P = 1 - Q
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_ITMAX + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            return max(0.0, 1.0 - math.exp(log_prefactor) * h)
    raise RuntimeError(f"incomplete gamma fraction did not converge (a={a}, x={x})")


def erlang_quantile(eps: float, n: int, mean_per_slot: float) -> float:
    """eps-quantile of a Gamma(shape n, scale C) total, i.e. of the sum of
    n independent exponential slot increments with mean C each.

    Inverts the regularized lower incomplete gamma by bracketing bisection
    followed by Newton refinement, to an absolute tolerance of 1e-9 * n * C.
    Raises on non-convergence instead of clamping.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie strictly between 0 and 1")
    if n < 1:
        raise ValueError("shape n must be >= 1")
    if mean_per_slot <= 0:
        raise ValueError("mean per slot must be > 0")
    scale = float(mean_per_slot)
    a = float(n)
    tol = 1e-9 * n * scale

    def cdf(x: float) -> float:
        return regularized_lower_gamma(a, x / scale)

    lo, hi = 0.0, n * scale
    for _ in range(200):
        if cdf(hi) > eps:
            break
        hi *= 2.0
    else:
        raise RuntimeError("quantile bracketing failed to enclose the target")
    # bisection brings Newton safely inside the bracket
    for _ in range(96):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < eps:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    x = 0.5 * (lo + hi)
    log_gamma_a = math.lgamma(a)
    for _ in range(8):
        f = cdf(x) - eps
        if x <= 0.0:
            break
        log_pdf = (a - 1.0) * math.log(x / scale) - x / scale - log_gamma_a - math.log(scale)
        if log_pdf < -700.0:
            break
        step = f / math.exp(log_pdf)
        x_new = x - step
        if not lo <= x_new <= hi:
            break
        x = x_new
        if abs(step) <= tol:
            break
    if abs(cdf(x) - eps) > 1e-7 and hi - lo > tol:
        raise RuntimeError(f"quantile inversion did not converge (n={n}, eps={eps})")
    return x


# ===========================================================================
# i.i.d. increment models
# ===========================================================================


@dataclass(frozen=True)
class DeterministicService:
    """Constant-rate service of ``rate`` megabits in every slot.

    A zero rate is allowed; it doubles as the empty arrival process.
    """

    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be >= 0")

    @property
    def mean_rate(self) -> float:
        return self.rate

    def mgf_increment(self, theta: float) -> float:
        return _safe_exp(theta * self.rate)

    def mgf_path(self, theta: float, t: int) -> float:
        if t < 0:
            raise ValueError("t must be >= 0")
        return _safe_exp(theta * self.rate * t) if t else 1.0

    def censored_mgf(self, theta: float, cap: float) -> float:
        """E[exp(theta min(c, cap))]."""
        return _safe_exp(theta * min(self.rate, cap))

    def effective_capacity(self, theta: float) -> float:
        if theta <= 0:
            raise ValueError("theta must be > 0")
        return self.rate

    def sample_increments(self, rng: np.random.Generator, T: int, n: int = 1) -> np.ndarray:
        return np.full((n, T), float(self.rate))

    def sample_path(self, seed: int, T: int) -> np.ndarray:
        return self.sample_increments(_rng_from_seed(seed), T, 1)[0]


@dataclass(frozen=True)
class ExponentialVbrService:
    """Work-conserving server with i.i.d. exponential per-slot capacity."""

    mean_rate: float

    def __post_init__(self):
        if self.mean_rate <= 0:
            raise ValueError("mean rate must be > 0")

    def mgf_increment(self, theta: float) -> float:
        c = self.mean_rate
        return 1.0 / (1.0 - c * theta) if theta < 1.0 / c else INF

    def mgf_path(self, theta: float, t: int) -> float:
        if t < 0:
            raise ValueError("t must be >= 0")
        if t == 0:
            return 1.0
        m = self.mgf_increment(theta)
        return m**t if math.isfinite(m) else INF

    def censored_mgf(self, theta: float, cap: float) -> float:
        """E[exp(theta min(c, cap))], finite for every real theta.

        Closed form (1 - C theta e^((theta - 1/C) cap)) / (1 - C theta),
        with the removable singularity at theta = 1/C filled by its limit.
        """
        if cap <= 0:
            raise ValueError("cap must be > 0")
        c = self.mean_rate
        denom = 1.0 - c * theta
        if abs(denom) < 1e-12:
            return 1.0 + cap / c
        return (1.0 - c * theta * _safe_exp((theta - 1.0 / c) * cap)) / denom

    def effective_capacity(self, theta: float) -> float:
        if theta <= 0:
            raise ValueError("theta must be > 0")
        return math.log1p(self.mean_rate * theta) / theta

    def sample_increments(self, rng: np.random.Generator, T: int, n: int = 1) -> np.ndarray:
        # inverse CDF keeps the draw count per path exactly T
        u = rng.random((n, T))
        return -self.mean_rate * np.log1p(-u)

    def sample_path(self, seed: int, T: int) -> np.ndarray:
        return self.sample_increments(_rng_from_seed(seed), T, 1)[0]


@dataclass(frozen=True)
class ExponentialArrivals:
    """i.i.d. exponential arrivals with mean ``mean_rate`` megabits per slot."""

    mean_rate: float

    def __post_init__(self):
        if self.mean_rate <= 0:
            raise ValueError("mean rate must be > 0")

    def mgf_increment(self, theta: float) -> float:
        lam = self.mean_rate
        return 1.0 / (1.0 - lam * theta) if theta < 1.0 / lam else INF

    def log_mgf_increment(self, theta: float) -> float:
        lam = self.mean_rate
        return -math.log1p(-lam * theta) if theta < 1.0 / lam else INF

    def mgf_path(self, theta: float, t: int) -> float:
        if t < 0:
            raise ValueError("t must be >= 0")
        if t == 0:
            return 1.0
        m = self.mgf_increment(theta)
        return m**t if math.isfinite(m) else INF

    def sample_increments(self, rng: np.random.Generator, T: int, n: int = 1) -> np.ndarray:
        u = rng.random((n, T))
        return -self.mean_rate * np.log1p(-u)

    def sample_path(self, seed: int, T: int) -> np.ndarray:
        return self.sample_increments(_rng_from_seed(seed), T, 1)[0]


@dataclass(frozen=True)
class LeftoverService:
    """Capacity left by cross traffic: increment = base increment - cross increment.

    Increments may be negative.  Downstream consumers use leftover paths only
    through interval sums, never clipped per slot.  The model is meaningful
    under the stability condition E[cross] < E[base].
    """

    base: object
    cross: object

    @property
    def mean_rate(self) -> float:
        return self.base.mean_rate - self.cross.mean_rate

    @property
    def is_stable(self) -> bool:
        return self.cross.mean_rate < self.base.mean_rate

    def mgf_increment(self, theta: float) -> float:
        mb = self.base.mgf_increment(theta)
        mc = self.cross.mgf_increment(-theta)
        return mb * mc if math.isfinite(mb) and math.isfinite(mc) else INF

    def mgf_path(self, theta: float, t: int) -> float:
        if t < 0:
            raise ValueError("t must be >= 0")
        if t == 0:
            return 1.0
        m = self.mgf_increment(theta)
        return m**t if math.isfinite(m) else INF

    def censored_mgf(self, theta: float, cap: float) -> float:
        """E[exp(theta min(c, cap))] for deterministic base and exponential cross.

        With base rate C and exponential cross of mean L the increment is
        C - a.  For cap >= C the cap never binds.  Otherwise condition on
        a <=> C - cap; the conditional tail MGF of a requires -theta < 1/L,
        and returns +inf where it diverges.
        """
        if not isinstance(self.base, DeterministicService) or not isinstance(
            self.cross, ExponentialArrivals
        ):
            raise NotImplementedError(
                "censored MGF is implemented for a deterministic base with "
                "exponential cross traffic"
            )
        C = self.base.rate
        lam = self.cross.mean_rate
        if cap >= C:
            return self.mgf_increment(theta)
        x = C - cap  # cap binds exactly when a < x
        p_below = -math.expm1(-x / lam)
        if -theta >= 1.0 / lam:
            return INF
        tail = _safe_exp(theta * C) * math.exp(-x * (1.0 / lam + theta)) / (1.0 + lam * theta)
        return _safe_exp(theta * cap) * p_below + tail

    def effective_capacity(self, theta: float) -> float:
        if theta <= 0:
            raise ValueError("theta must be > 0")
        m = self.mgf_increment(-theta)
        return -math.log(m) / theta if math.isfinite(m) else -INF

    def sample_increments(self, rng: np.random.Generator, T: int, n: int = 1) -> np.ndarray:
        base = self.base.sample_increments(rng, T, n)
        cross = self.cross.sample_increments(rng, T, n)
        return base - cross

    def sample_path(self, seed: int, T: int) -> np.ndarray:
        return self.sample_increments(_rng_from_seed(seed), T, 1)[0]


# ===========================================================================
# two-state Markov-modulated models
# ===========================================================================


def _two_state_eigs(p00: float, p11: float, m0: float, m1: float) -> Tuple[float, float]:
    """Eigenvalues (minus, plus) of [[p00 m0, p01 m1], [p10 m0, p11 m1]].

    The closed-form quadratic is evaluated with the product form for the
    small root to avoid cancellation.  The discriminant is non-negative for
    non-negative m0, m1; tiny negative float residue is clamped.
    """
    if not (math.isfinite(m0) and math.isfinite(m1)):
        return (INF, INF)
    tr = p00 * m0 + p11 * m1
    det = (p00 + p11 - 1.0) * m0 * m1
    disc = tr * tr - 4.0 * det
    root = math.sqrt(max(disc, 0.0))
    plus = 0.5 * (tr + root)
    minus = det / plus if plus > 0.0 else 0.5 * (tr - root)
    return (minus, plus)


def _two_state_mgf_path(
    p00: float, p11: float, p_on: float, m0: float, m1: float, t: int
) -> float:
    if t == 0:
        return 1.0
    if not (math.isfinite(m0) and math.isfinite(m1)):
        return INF
    L = np.array([[p00 * m0, (1.0 - p00) * m1], [(1.0 - p11) * m0, p11 * m1]])
    pi = np.array([1.0 - p_on, p_on])
    return float(pi @ np.linalg.matrix_power(L, t) @ np.ones(2))


def _on_times_probability(p01: float, p10: float, times) -> float:
    """Exact probability of the chain being in state 1 at every listed time."""
    ts = list(times)
    if not ts:
        raise ValueError("times must be non-empty")
    if any(int(x) != x for x in ts):
        raise ValueError("times must be integers")
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("times must be strictly increasing")
    p = p01 / (p01 + p10)
    mu = 1.0 - p01 - p10
    prob = p
    for a, b in zip(ts, ts[1:]):
        prob *= p + (1.0 - p) * mu ** (b - a)
    return prob


def _sample_two_state_chain(
    rng: np.random.Generator, p00: float, p11: float, p_on: float, T: int, n: int
) -> np.ndarray:
    """States in {0, 1}, shape (n, T), chain started in steady state.

    Batches iterate slot by slot across all paths; a single long path is
    generated from geometric sojourn runs, which is equivalent in
    distribution because sojourn times are memoryless given the state.
    """
    if n == 1 and T > 4096:
        state = 1 if rng.random() < p_on else 0
        out = np.empty(T, dtype=np.int8)
        pos = 0
        while pos < T:
            stay = p11 if state else p00
            if stay >= 1.0:
                out[pos:] = state
                break
            run = int(rng.geometric(1.0 - stay))
            end = min(pos + run, T)
            out[pos:end] = state
            pos = end
            state = 1 - state
        return out[None, :]
    states = np.empty((n, T), dtype=np.int8)
    x = (rng.random(n) < p_on).astype(np.int8)
    for k in range(T):
        states[:, k] = x
        if k == T - 1:
            break
        u = rng.random(n)
        stay = np.where(x == 1, p11, p00)
        x = np.where(u < stay, x, 1 - x).astype(np.int8)
    return states


@dataclass(frozen=True)
class MmooService:
    """Two-state Markov-modulated On-Off service.

    State 1 serves ``peak`` megabits per slot, state 0 serves nothing.  The
    chain starts in steady state.  The spectral operations require slow
    switching, p01 + p10 < 1, which keeps the correlation eigenvalue
    mu = 1 - p01 - p10 inside (0, 1).
    """

    p00: float
    p11: float
    peak: float

    def __post_init__(self):
        for name in ("p00", "p11"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.peak <= 0:
            raise ValueError("peak rate must be > 0")

    @property
    def p01(self) -> float:
        return 1.0 - self.p00

    @property
    def p10(self) -> float:
        return 1.0 - self.p11

    @property
    def on_probability(self) -> float:
        return self.p01 / (self.p01 + self.p10)

    @property
    def correlation_eigenvalue(self) -> float:
        return 1.0 - self.p01 - self.p10

    @property
    def mean_rate(self) -> float:
        return self.on_probability * self.peak

    def _require_slow_switching(self):
        total = self.p01 + self.p10
        if total >= 1.0:
            raise ValueError(f"spectral analysis requires p01 + p10 < 1, got {total}")
        if total == 0.0:
            raise ValueError("chain has no unique steady state (p01 = p10 = 0)")

    def _state_mgfs(self, theta: float) -> Tuple[float, float]:
        return (1.0, _safe_exp(theta * self.peak))

    def mgf_increment(self, theta: float) -> float:
        m0, m1 = self._state_mgfs(theta)
        p = self.on_probability
        return (1.0 - p) * m0 + p * m1

    def mgf_path(self, theta: float, t: int) -> float:
        if t < 0:
            raise ValueError("t must be >= 0")
        m0, m1 = self._state_mgfs(theta)
        return _two_state_mgf_path(self.p00, self.p11, self.on_probability, m0, m1, t)

    def eigen_m_plus(self, theta: float) -> float:
        self._require_slow_switching()
        return _two_state_eigs(self.p00, self.p11, *self._state_mgfs(theta))[1]

    def k_theta(self, theta: float) -> float:
        """Weight of the dominant spectral term in the exact path MGF."""
        self._require_slow_switching()
        minus, plus = _two_state_eigs(self.p00, self.p11, *self._state_mgfs(theta))
        if not math.isfinite(plus) or plus - minus <= 1e-7 * max(plus, 1.0):
            raise ValueError("eigenvalues coincide; spectral weight undefined")
        return (self.mgf_increment(theta) - minus) / (plus - minus)

    def effective_capacity(self, theta: float) -> float:
        if theta <= 0:
            raise ValueError("theta must be > 0")
        return -math.log(self.eigen_m_plus(-theta)) / theta

    def on_sequence_probability(self, times) -> float:
        return _on_times_probability(self.p01, self.p10, times)

    def sample_increments(self, rng: np.random.Generator, T: int, n: int = 1) -> np.ndarray:
        states = _sample_two_state_chain(rng, self.p00, self.p11, self.on_probability, T, n)
        return states * float(self.peak)

    def sample_path(self, seed: int, T: int) -> np.ndarray:
        return self.sample_increments(_rng_from_seed(seed), T, 1)[0]


@dataclass(frozen=True)
class MarkovModulated2Service:
    """General two-state Markov-modulated service.

    The chain selects the slot law: increments are drawn i.i.d. from ``law0``
    in state 0 and from ``law1`` in state 1, independently of the chain.
    With degenerate laws (constant 0 and constant P) this reproduces
    MmooService output bit for bit.
    """

    p00: float
    p11: float
    law0: object
    law1: object

    def __post_init__(self):
        for name in ("p00", "p11"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def p01(self) -> float:
        return 1.0 - self.p00

    @property
    def p10(self) -> float:
        return 1.0 - self.p11

    @property
    def on_probability(self) -> float:
        return self.p01 / (self.p01 + self.p10)

    @property
    def correlation_eigenvalue(self) -> float:
        return 1.0 - self.p01 - self.p10

    @property
    def mean_rate(self) -> float:
        p = self.on_probability
        return (1.0 - p) * self.law0.mean_rate + p * self.law1.mean_rate

    def _require_slow_switching(self):
        total = self.p01 + self.p10
        if total >= 1.0:
            raise ValueError(f"spectral analysis requires p01 + p10 < 1, got {total}")
        if total == 0.0:
            raise ValueError("chain has no unique steady state (p01 = p10 = 0)")

    def _state_mgfs(self, theta: float) -> Tuple[float, float]:
        return (self.law0.mgf_increment(theta), self.law1.mgf_increment(theta))

    def mgf_increment(self, theta: float) -> float:
        m0, m1 = self._state_mgfs(theta)
        p = self.on_probability
        return (1.0 - p) * m0 + p * m1

    def mgf_path(self, theta: float, t: int) -> float:
        if t < 0:
            raise ValueError("t must be >= 0")
        m0, m1 = self._state_mgfs(theta)
        return _two_state_mgf_path(self.p00, self.p11, self.on_probability, m0, m1, t)

    def eigen_m_plus(self, theta: float) -> float:
        self._require_slow_switching()
        return _two_state_eigs(self.p00, self.p11, *self._state_mgfs(theta))[1]

    def k_theta(self, theta: float) -> float:
        self._require_slow_switching()
        minus, plus = _two_state_eigs(self.p00, self.p11, *self._state_mgfs(theta))
        if not math.isfinite(plus) or plus - minus <= 1e-7 * max(plus, 1.0):
            raise ValueError("eigenvalues coincide; spectral weight undefined")
        return (self.mgf_increment(theta) - minus) / (plus - minus)

    def effective_capacity(self, theta: float) -> float:
        if theta <= 0:
            raise ValueError("theta must be > 0")
        m = self.eigen_m_plus(-theta)
        return -math.log(m) / theta if math.isfinite(m) and m > 0 else -INF

    def on_sequence_probability(self, times) -> float:
        return _on_times_probability(self.p01, self.p10, times)

    def sample_increments(self, rng: np.random.Generator, T: int, n: int = 1) -> np.ndarray:
        states = _sample_two_state_chain(rng, self.p00, self.p11, self.on_probability, T, n)
        inc0 = self.law0.sample_increments(rng, T, n)
        inc1 = self.law1.sample_increments(rng, T, n)
        return (1 - states) * inc0 + states * inc1

    def sample_path(self, seed: int, T: int) -> np.ndarray:
        return self.sample_increments(_rng_from_seed(seed), T, 1)[0]


def leftover_two_state(base_rate: float, cross: MarkovModulated2Service) -> MarkovModulated2Service:
    """Leftover service of a constant-rate server under two-state cross traffic.

    The per-state leftover laws are base - cross_law, so the composition is
    itself a two-state Markov-modulated service and all spectral bounds
    apply, provided E[cross] < base_rate.
    """
    base = DeterministicService(base_rate)
    return MarkovModulated2Service(
        p00=cross.p00,
        p11=cross.p11,
        law0=LeftoverService(base, cross.law0),
        law1=LeftoverService(base, cross.law1),
    )


def mmoo_as_two_state(m: MmooService) -> MarkovModulated2Service:
    """On-Off model expressed through the general two-state interface."""
    return MarkovModulated2Service(
        p00=m.p00,
        p11=m.p11,
        law0=DeterministicService(0.0),
        law1=DeterministicService(m.peak),
    )
