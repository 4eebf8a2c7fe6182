"""Discrete-time Monte Carlo simulation of the closed flow control loop.

The loop consists of a throttle at the network entrance, a work-conserving
network queue with random per-slot capacity, and departure feedback delayed
by d slots.  Within slot k the order of events is pinned as follows:

1. the external arrival a_k and the service capacity c_k are drawn,
2. admission: A'(0, k+1) = min(A(0, k+1), D(0, k+1-d) + w), so admitted
   but undeparted traffic never exceeds the window w,
3. service: the network queue drains by max(c_k, 0) after admission, so
   traffic admitted in slot k may depart in the same slot,
4. departures: D(0, k+1) = A'(0, k+1) - q(k+1).

Admission before service inside the slot makes the exact-server relation
D = A' o S hold with the per-slot queue recursion, and d >= 1 means the
feedback reference is always a previously computed value, so no fixed
point is needed.  Negative capacity increments (leftover service) drain
nothing physically; bound comparisons use the signed sums separately.

All runs are deterministic functions of the configured seed.  Replications
use disjoint child seed streams and may execute concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import FeedbackParams
from .oracle import equivalent_service_batch

__all__ = [
    "SimConfig",
    "SimRun",
    "run_flow_control",
    "empirical_equivalent_mgf",
    "backlog_quantile",
]

INF = float("inf")

_CHECKPOINTS = 257


@dataclass(frozen=True)
class SimConfig:
    """One simulation experiment: models, feedback parameters, protocol."""

    seed: int
    total_slots: int
    warmup_slots: int
    arrivals: object
    service: object
    feedback: FeedbackParams
    replications: int = 1

    def __post_init__(self):
        if self.total_slots < 1:
            raise ValueError("total_slots must be >= 1")
        if not 0 <= self.warmup_slots < self.total_slots:
            raise ValueError("warmup_slots must satisfy 0 <= warmup < total")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")


@dataclass
class SimRun:
    """Result of one seeded replication.

    ``backlog`` is the per-slot total backlog B(t) = A(0,t) - D(0,t) and
    ``queue`` the per-slot network backlog q(t) = A'(0,t) - D(0,t), both of
    length total_slots + 1.  Cumulative A, A' and D are sampled at
    ``checkpoints``.
    """

    config: SimConfig
    replication: int
    backlog: np.ndarray
    queue: np.ndarray
    checkpoints: np.ndarray
    arrivals_cum: np.ndarray
    admitted_cum: np.ndarray
    departures_cum: np.ndarray
    throughput: float = field(init=False)

    def __post_init__(self):
        T = self.config.total_slots
        self.throughput = float(self.departures_cum[-1]) / T

    def backlog_drift(self) -> float:
        """Mean post-warmup backlog of the second half over the first half.

        Ratios well above one signal a queue that is still growing, i.e. an
        unstable operating point.
        """
        tail = self.backlog[self.config.warmup_slots + 1 :]
        half = len(tail) // 2
        first = float(np.mean(tail[:half]))
        second = float(np.mean(tail[half:]))
        if first <= 0.0:
            return INF if second > 0.0 else 1.0
        return second / first

    def backlog_quantile(self, eps: float) -> float:
        """Post-warmup (1 - eps)-quantile of this single replication."""
        if not 0.0 < eps < 1.0:
            raise ValueError("eps must lie strictly between 0 and 1")
        tail = self.backlog[self.config.warmup_slots + 1 :]
        k = min(max(math.ceil((1.0 - eps) * len(tail)), 1), len(tail))
        return float(np.partition(tail, k - 1)[k - 1])


def _replication_rngs(seed: int, replication: int) -> tuple[np.random.Generator, np.random.Generator]:
    root = np.random.SeedSequence(entropy=seed, spawn_key=(replication,))
    arrival_seq, service_seq = root.spawn(2)
    return np.random.default_rng(arrival_seq), np.random.default_rng(service_seq)


def run_flow_control(config: SimConfig, replication: int = 0) -> SimRun:
    """Simulate one replication of the closed loop; deterministic per seed."""
    if not 0 <= replication < config.replications:
        raise ValueError("replication index out of range")
    T = config.total_slots
    w = config.feedback.w
    d = config.feedback.d
    arrival_rng, service_rng = _replication_rngs(config.seed, replication)
    a = config.arrivals.sample_increments(arrival_rng, T, 1)[0]
    c = config.service.sample_increments(service_rng, T, 1)[0]
    arrivals_cum = np.concatenate(([0.0], np.cumsum(a)))
    drain = np.maximum(c, 0.0)

    admitted = np.empty(T + 1)
    departed = np.empty(T + 1)
    admitted[0] = 0.0
    departed[0] = 0.0
    ap = 0.0
    q = 0.0
    for k in range(T):
        j = k + 1 - d
        ref = departed[j] if j > 0 else 0.0
        ap_new = arrivals_cum[k + 1]
        cap = ref + w
        if cap < ap_new:
            ap_new = cap
        q += ap_new - ap - drain[k]
        if q < 0.0:
            q = 0.0
        ap = ap_new
        admitted[k + 1] = ap
        departed[k + 1] = ap - q

    backlog = arrivals_cum - departed
    queue = admitted - departed
    step = max(1, T // (_CHECKPOINTS - 1))
    checkpoints = np.unique(np.concatenate((np.arange(0, T + 1, step), [T])))
    return SimRun(
        config=config,
        replication=replication,
        backlog=backlog,
        queue=queue,
        checkpoints=checkpoints,
        arrivals_cum=arrivals_cum[checkpoints],
        admitted_cum=admitted[checkpoints],
        departures_cum=departed[checkpoints],
    )


def empirical_equivalent_mgf(
    service_model,
    params: FeedbackParams,
    theta: float,
    t: int,
    n_paths: int,
    seed: int,
) -> tuple[float, float]:
    """Sample mean and standard error of exp(-theta S_eq(0, t)).

    Draws n_paths service paths, evaluates the exact equivalent service on
    each with the batch oracle, and averages the transform.  Guarded to
    t <= 200 where the exact oracle is practical.
    """
    if t > 200:
        raise ValueError("empirical equivalent-service MGF is guarded to t <= 200")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    paths = service_model.sample_increments(rng, t, n_paths)
    values = equivalent_service_batch(paths, params, t)
    transformed = np.exp(-theta * values)
    mean = float(np.mean(transformed))
    if n_paths == 1:
        return mean, 0.0
    stderr = float(np.std(transformed, ddof=1) / math.sqrt(n_paths))
    return mean, stderr


def backlog_quantile(config: SimConfig, eps: float) -> float:
    """Empirical (1 - eps)-quantile of the total backlog.

    Pools post-warmup slots across all replications.  Requires the expected
    number of tail samples eps * slots * replications to be at least 100,
    otherwise the estimate is statistically meaningless.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie strictly between 0 and 1")
    post = config.total_slots - config.warmup_slots
    if eps * post * config.replications < 100.0:
        raise ValueError(
            "quantile not estimable: eps * post-warmup slots * replications < 100"
        )
    pool = np.empty(post * config.replications)
    for r in range(config.replications):
        run = run_flow_control(config, r)
        pool[r * post : (r + 1) * post] = run.backlog[config.warmup_slots + 1 :]
    k = math.ceil((1.0 - eps) * len(pool))
    k = min(max(k, 1), len(pool))
    return float(np.partition(pool, k - 1)[k - 1])
