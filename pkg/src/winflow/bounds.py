"""Analytic bound engine for window flow control with random service.

A flow is throttled so that at most w megabits admitted into a network with
random service may be in flight, with the departure feedback delayed by d
slots.  The bounds below control the moment-generating function of the
resulting feedback-equivalent service process, and derive from it

* statistical service curves (a deterministic envelope violated with
  probability at most eps),
* lower and upper bounds on the effective capacity (the long-run MGF
  decay rate, whose theta -> 0 limit is the mean rate), and
* Chernoff backlog bounds against an arrival MGF.

Every bound family here depends on (s, t) only through the interval length,
so curves are indexed by t alone.  All optimizations over theta use a fixed
logarithmic grid followed by golden-section refinement; the reported
optimum is never worse than the best raw grid point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .models import MarkovModulated2Service, MmooService

INF = float("inf")

__all__ = [
    "FeedbackParams",
    "ThetaGrid",
    "BoundResult",
    "LogMgfCurve",
    "feedback_mgf_series",
    "feedback_mgf_blocks_iid",
    "feedback_mgf_blocks_markov",
    "series_curve",
    "block_curve",
    "per_slot_curve",
    "statistical_service_curve",
    "effcap_lower_series",
    "effcap_lower_blocks",
    "effcap_apriori",
    "best_effcap_lower",
    "backlog_bound",
    "steady_state_backlog_bound",
    "golden_section_max",
]


@dataclass(frozen=True)
class FeedbackParams:
    """Window size w (megabits) and feedback delay d (slots, at least 1)."""

    w: float
    d: int

    def __post_init__(self):
        if self.w <= 0:
            raise ValueError("window size w must be > 0")
        if self.d < 1:
            raise ValueError("feedback delay d must be >= 1")

    @property
    def rate_cap(self) -> float:
        """Long-run ceiling w / d imposed by the feedback loop."""
        return self.w / self.d


@dataclass(frozen=True)
class ThetaGrid:
    """Strictly increasing positive theta values (per megabit)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) < 2:
            raise ValueError("theta grid needs at least two points")
        if not np.all(v > 0) or not np.all(np.diff(v) > 0):
            raise ValueError("theta grid must be strictly increasing and positive")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def logspace(cls, minimum: float = 1e-4, maximum: float = 1e3, count: int = 64) -> "ThetaGrid":
        return cls(np.geomspace(minimum, maximum, count))


@dataclass
class BoundResult:
    """A curve produced by one bound family.

    ``x`` is the running coordinate (t in slots, or theta per megabit),
    ``value`` the bound, ``theta_opt`` the optimizing theta where a scalar
    search was involved, and ``feasible`` marks points where the family's
    validity condition held for at least one theta.
    """

    family: str
    x: np.ndarray
    value: np.ndarray
    theta_opt: np.ndarray
    feasible: np.ndarray
    provenance: Optional[List[str]] = None


# ===========================================================================
# scalar optimization helper
# ===========================================================================

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(
    fn: Callable[[float], float], lo: float, hi: float, rel_tol: float = 1e-4
) -> tuple[float, float]:
    """Golden-section search for a maximum of fn on [lo, hi].

    Assumes fn is unimodal on the bracket; -inf values (infeasible points)
    are treated as arbitrarily bad.  Returns (argmax, max).
    """
    if hi < lo:
        lo, hi = hi, lo
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = fn(x1), fn(x2)
    while (b - a) > rel_tol * max(abs(a), abs(b), 1e-300):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = fn(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = fn(x1)
    if f1 >= f2:
        return x1, f1
    return x2, f2


# ===========================================================================
# MGF bounds for the feedback-equivalent service
# ===========================================================================


def _is_markov(model) -> bool:
    return isinstance(model, (MmooService, MarkovModulated2Service))


def feedback_mgf_series(model, params: FeedbackParams, theta: float, t: int) -> float:
    """Geometric-series bound on E[exp(-theta S_eq(0, t))] for i.i.d. service.

    Counts all window placements with a binomial tail, which telescopes to
    M^t / (1 - M^{-d} e^{-theta w})^{t+2} with M = mgf_increment(-theta).
    Valid only under the convergence condition M^{-d} e^{-theta w} < 1;
    returns +inf where that fails (infeasibility is a value, not an error).
    """
    if theta <= 0:
        raise ValueError("theta must be > 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    m = model.mgf_increment(-theta)
    log_x = -params.d * math.log(m) - theta * params.w
    if log_x >= 0.0:
        return INF
    log_val = t * math.log(m) - (t + 2) * math.log(-math.expm1(log_x))
    return _exp_or_inf(log_val)


def feedback_mgf_blocks_iid(model, params: FeedbackParams, theta: float, t: int) -> float:
    """Block-counting bound on E[exp(-theta S_eq(0, t))] for i.i.d. service.

    Time is grouped into floor(t / d) blocks of d slots; each block either
    contributes its service MGF or one window cost, giving
    (M^d + d e^{-theta w})^{floor(t/d)}.  Always finite.
    """
    if theta <= 0:
        raise ValueError("theta must be > 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    blocks = t // params.d
    if blocks == 0:
        return 1.0
    m = model.mgf_increment(-theta)
    base = m**params.d + params.d * math.exp(-theta * params.w)
    return base**blocks


def feedback_mgf_blocks_markov(model, params: FeedbackParams, theta: float, t: int) -> float:
    """Block-counting bound for two-state Markov-modulated service.

    Identical in shape to the i.i.d. block bound with the per-slot MGF
    replaced by the dominant eigenvalue of the slot operator L(-theta).
    Requires slow switching (p01 + p10 < 1), which is a hard error.
    """
    if theta <= 0:
        raise ValueError("theta must be > 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    if not _is_markov(model):
        raise TypeError("markov block bound needs a two-state Markov-modulated model")
    blocks = t // params.d
    m_plus = model.eigen_m_plus(-theta)  # raises unless p01 + p10 < 1
    if blocks == 0:
        return 1.0
    base = m_plus**params.d + params.d * math.exp(-theta * params.w)
    return base**blocks


def _exp_or_inf(log_value: float) -> float:
    if log_value == INF:
        return INF
    return math.exp(log_value) if log_value < 709.0 else INF


# ---------------------------------------------------------------------------
# log-domain curve objects used by the optimizers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogMgfCurve:
    """theta-indexed family of log MGF bounds, vectorized over interval length.

    ``log_value(theta, lengths)`` returns log E-bound values for an array of
    interval lengths; +inf encodes infeasibility at that theta.
    """

    family: str
    _log_fn: Callable[[float, np.ndarray], np.ndarray] = field(repr=False)

    def log_value(self, theta: float, lengths) -> np.ndarray:
        if theta <= 0:
            raise ValueError("theta must be > 0")
        ell = np.asarray(lengths, dtype=float)
        return self._log_fn(theta, ell)

    def feasible(self, theta: float) -> bool:
        return bool(np.isfinite(self.log_value(theta, np.asarray([1.0]))[0]))


def _times_log(n: np.ndarray, log_base: float) -> np.ndarray:
    """n * log_base with the convention 0 * (+-inf) = 0."""
    if math.isfinite(log_base):
        return n * log_base
    return np.where(n == 0, 0.0, log_base)


def series_curve(model, params: FeedbackParams) -> LogMgfCurve:
    """Geometric-series bound as a curve family (i.i.d. models only)."""

    def log_fn(theta: float, ell: np.ndarray) -> np.ndarray:
        m = model.mgf_increment(-theta)
        log_m = math.log(m) if m > 0 else -INF
        log_x = -params.d * log_m - theta * params.w
        if log_x >= 0.0:
            return np.full_like(ell, INF)
        return _times_log(ell, log_m) - (ell + 2.0) * math.log(-math.expm1(log_x))

    return LogMgfCurve("series", log_fn)


def block_curve(model, params: FeedbackParams) -> LogMgfCurve:
    """Block-counting bound as a curve family; dispatches on the model kind."""
    d = params.d
    markov = _is_markov(model)

    def log_fn(theta: float, ell: np.ndarray) -> np.ndarray:
        m = model.eigen_m_plus(-theta) if markov else model.mgf_increment(-theta)
        base = m**d + d * math.exp(-theta * params.w)
        log_base = math.log(base) if math.isfinite(base) else INF
        return _times_log(np.floor(ell / d), log_base)

    return LogMgfCurve("block-markov" if markov else "block-iid", log_fn)


def per_slot_curve(model, params: FeedbackParams) -> LogMgfCurve:
    """Rate-capped per-slot bound: the service process that in every slot
    offers min(c_k, w/d) for i.i.d. models, or the peak-capped chain for
    Markov-modulated models.

    This is the MGF route of the a-priori envelope.  For d = 1 and i.i.d.
    increments it is the exact equivalent-service MGF, not just a bound.
    """
    cap = params.rate_cap
    if _is_markov(model):
        capped = _peak_capped(model, cap)

        def log_fn(theta: float, ell: np.ndarray) -> np.ndarray:
            return _times_log(ell, math.log(capped.eigen_m_plus(-theta)))

    else:

        def log_fn(theta: float, ell: np.ndarray) -> np.ndarray:
            m = model.censored_mgf(-theta, cap)
            return _times_log(ell, math.log(m) if math.isfinite(m) else INF)

    return LogMgfCurve("per-slot", log_fn)


def _peak_capped(model, cap: float):
    """Markov-modulated model with the ON rate capped at ``cap``."""
    if isinstance(model, MmooService):
        return MmooService(model.p00, model.p11, min(model.peak, cap))
    raise NotImplementedError(
        "peak-capped composition is defined for the On-Off model only"
    )


# ===========================================================================
# statistical service curves
# ===========================================================================


def statistical_service_curve(
    curve: LogMgfCurve, eps: float, grid: ThetaGrid, horizon: int
) -> BoundResult:
    """Envelope S_eps with P(service(0, t) <= S_eps(t)) <= eps for each t.

    Chernoff inversion of the MGF bound: the best (largest) envelope over
    theta of (log eps - log bound(theta, t)) / theta, floored at zero.  A t
    where every grid theta is infeasible yields value 0 with the feasibility
    flag cleared.
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    log_eps = math.log(eps)
    thetas = grid.values
    ts = np.arange(horizon + 1)
    cand = np.empty((len(thetas), horizon + 1))
    for i, theta in enumerate(thetas):
        log_m = curve.log_value(theta, ts)
        with np.errstate(invalid="ignore"):
            cand[i] = (log_eps - log_m) / theta
    cand[~np.isfinite(cand)] = -INF

    values = np.zeros(horizon + 1)
    theta_opt = np.full(horizon + 1, np.nan)
    feasible = np.zeros(horizon + 1, dtype=bool)
    for t in range(horizon + 1):
        col = cand[:, t]
        k = int(np.argmax(col))
        best = col[k]
        if best == -INF:
            continue
        feasible[t] = True
        lo = thetas[max(k - 1, 0)]
        hi = thetas[min(k + 1, len(thetas) - 1)]

        def objective(theta: float, _t=t) -> float:
            lm = float(curve.log_value(theta, np.asarray([float(_t)]))[0])
            return (log_eps - lm) / theta if math.isfinite(lm) else -INF

        x, fx = golden_section_max(objective, lo, hi)
        if fx >= best:
            best_theta, best = x, fx
        else:
            best_theta = thetas[k]
        values[t] = max(best, 0.0)
        theta_opt[t] = best_theta
    return BoundResult(curve.family, ts, values, theta_opt, feasible)


# ===========================================================================
# effective capacity bounds
# ===========================================================================


def effcap_lower_series(model, params: FeedbackParams, theta: float) -> float:
    """Effective-capacity lower bound from the geometric-series MGF bound.

    gamma(-theta) + log(1 - e^{theta (d gamma(-theta) - w)}) / theta, valid
    only where gamma(-theta) < w / d; returns -inf where infeasible so that
    pointwise maxima remain correct.
    """
    if theta <= 0:
        raise ValueError("theta must be > 0")
    gamma = model.effective_capacity(theta)
    arg = theta * (params.d * gamma - params.w)
    if arg >= 0.0:
        return -INF
    return gamma + math.log(-math.expm1(arg)) / theta


def effcap_lower_blocks(model, params: FeedbackParams, theta: float) -> float:
    """Effective-capacity lower bound from the block-counting MGF bound.

    gamma(-theta) - log(1 + d e^{theta (d gamma(-theta) - w)}) / (d theta),
    finite for every theta > 0.  Applies to i.i.d. models and to two-state
    Markov-modulated models through their spectral effective capacity.
    """
    if theta <= 0:
        raise ValueError("theta must be > 0")
    gamma = model.effective_capacity(theta)
    if gamma == -INF:
        return -INF
    arg = theta * (params.d * gamma - params.w)
    return gamma - math.log1p(params.d * math.exp(arg)) / (params.d * theta)


def effcap_apriori(model, params: FeedbackParams, theta: float) -> tuple[float, float]:
    """A-priori envelope (lower, upper) on the feedback effective capacity.

    lower: effective capacity of the rate-capped service (cap w/d per slot),
    exact for d = 1.  upper: min(gamma(-theta), w / d).  For a deterministic
    server both collapse to min(rate, w / d).
    """
    if theta <= 0:
        raise ValueError("theta must be > 0")
    cap = params.rate_cap
    upper = min(model.effective_capacity(theta), cap)
    if _is_markov(model):
        lower = _peak_capped(model, cap).effective_capacity(theta)
    else:
        m = model.censored_mgf(-theta, cap)
        lower = -math.log(m) / theta if math.isfinite(m) else -INF
    return lower, upper


def best_effcap_lower(model, params: FeedbackParams, grid: ThetaGrid) -> BoundResult:
    """Pointwise best lower bound across all applicable families, per theta.

    Families without a defined value for the model (the series route needs
    i.i.d. increments, the a-priori route a known rate-capped composition)
    simply do not compete.
    """
    thetas = grid.values
    n = len(thetas)
    values = np.empty(n)
    feasible = np.zeros(n, dtype=bool)
    provenance: List[str] = []
    iid = not _is_markov(model)
    for i, theta in enumerate(thetas):
        candidates = {"blocks": effcap_lower_blocks(model, params, theta)}
        if iid:
            candidates["series"] = effcap_lower_series(model, params, theta)
        try:
            candidates["apriori"] = effcap_apriori(model, params, theta)[0]
        except NotImplementedError:
            pass
        name = max(candidates, key=lambda k: candidates[k])
        values[i] = candidates[name]
        feasible[i] = math.isfinite(values[i])
        provenance.append(name if feasible[i] else "none")
    return BoundResult("best-lower", thetas, values, thetas.copy(), feasible, provenance)


# ===========================================================================
# backlog bounds
# ===========================================================================


def _log_arrival_mgf(arrivals, theta: float) -> float:
    if hasattr(arrivals, "log_mgf_increment"):
        return arrivals.log_mgf_increment(theta)
    m = arrivals.mgf_increment(theta)
    return math.log(m) if math.isfinite(m) else INF


def _logsumexp(values: np.ndarray) -> float:
    top = np.max(values)
    if not math.isfinite(top):
        return float(top)
    return float(top + math.log(np.sum(np.exp(values - top))))


def _log_backlog_sum(arrivals, curve: LogMgfCurve, theta: float, t: int) -> float:
    """log sum over interval lengths 0..t of M_A(theta)^ell * bound(theta, ell)."""
    log_ma = _log_arrival_mgf(arrivals, theta)
    if log_ma == INF:
        return INF
    ell = np.arange(t + 1, dtype=float)
    log_terms = ell * log_ma + curve.log_value(theta, ell)
    if not np.all(np.isfinite(log_terms)):
        return INF
    return _logsumexp(log_terms)


def backlog_bound(
    arrivals, curve: LogMgfCurve, eps: float, grid: ThetaGrid, t: int
) -> float:
    """Chernoff backlog bound b with P(B(t) > b) <= eps.

    Minimizes over theta the deconvolution sum of the arrival MGF against the
    service MGF bound, both taken over interval lengths up to t.  Returns
    +inf when no grid theta is feasible (the system is unstable at this
    arrival rate for every usable theta).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie strictly between 0 and 1")
    if t < 1:
        raise ValueError("t must be >= 1")
    log_eps = math.log(eps)

    def objective(theta: float) -> float:
        s = _log_backlog_sum(arrivals, curve, theta, t)
        return (s - log_eps) / theta if math.isfinite(s) else INF

    thetas = grid.values
    vals = np.array([objective(th) for th in thetas])
    k = int(np.argmin(vals))
    if vals[k] == INF:
        return INF
    lo = thetas[max(k - 1, 0)]
    hi = thetas[min(k + 1, len(thetas) - 1)]
    x, fx = golden_section_max(lambda th: -objective(th), lo, hi)
    return float(min(vals[k], -fx))


def steady_state_backlog_bound(
    arrivals,
    curve: LogMgfCurve,
    eps: float,
    grid: ThetaGrid,
    rel_tol: float = 1e-6,
    t_start: int = 256,
    t_cap: int = 1 << 22,
) -> float:
    """Backlog bound in the large-t limit, by doubling t until it settles.

    Declares the system unbounded (+inf) when, for every feasible theta, the
    per-slot growth of the summand M_A(theta)^ell * bound(theta, ell) is at
    least one, so the deconvolution sum diverges.
    """
    if _diverges_everywhere(arrivals, curve, grid):
        return INF
    t = t_start
    prev = backlog_bound(arrivals, curve, eps, grid, t)
    while t <= t_cap:
        t *= 2
        cur = backlog_bound(arrivals, curve, eps, grid, t)
        if prev == INF and cur == INF:
            return INF
        if math.isfinite(cur) and math.isfinite(prev):
            if abs(cur - prev) <= rel_tol * max(abs(prev), 1e-12):
                return cur
        prev = cur
    raise RuntimeError(f"steady-state backlog bound did not settle by t={t_cap}")


def _diverges_everywhere(arrivals, curve: LogMgfCurve, grid: ThetaGrid) -> bool:
    """True when every grid theta has non-decaying summands at the tail."""
    span = 256
    probe = np.asarray([1024.0, 1024.0 + span])
    for theta in grid.values:
        log_ma = _log_arrival_mgf(arrivals, theta)
        if log_ma == INF:
            continue
        pair = curve.log_value(theta, probe)
        if not np.all(np.isfinite(pair)):
            continue
        slope = (pair[1] - pair[0]) / span
        if log_ma + slope < 0.0:
            return False
    return True
