"""Finite-horizon bivariate min-plus dioid.

Bivariate functions f(s, t) describe a quantity accumulated over the time
interval [s, t) of a discrete slotted timeline.  The algebra combines them
with the pointwise minimum and the min-plus convolution

    (f o g)(s, t) = min over s <= tau <= t of f(s, tau) + g(tau, t),

which together form a dioid on the family of functions that are non-negative
and non-decreasing in the second argument.  Values live in [0, +inf]; +inf
marks combinations of (s, t) that a non-causal element forbids.

Everything here operates on a fixed finite horizon T.  All indices are exact
integers, there is no interpolation, and every operation is a pure function
of immutable inputs.
"""

from __future__ import annotations

import numpy as np

INF = float("inf")

__all__ = [
    "INF",
    "BivariateFunction",
    "ClosureNonConvergence",
    "make_delta",
    "make_delta_plus_w",
    "make_delta_shift",
    "pointwise_min",
    "convolve",
    "deconvolve",
    "self_convolve",
    "subadditive_closure",
]


class ClosureNonConvergence(RuntimeError):
    """Raised when the truncated subadditive closure fails to stabilize."""


class BivariateFunction:
    """Upper-triangular table of f(s, t) for integer 0 <= s <= t <= T.

    The table is stored as a dense (T+1, T+1) float array whose strict lower
    triangle is set to +inf.  That sentinel makes the min-plus product of two
    tables respect the tau range [s, t] automatically.

    Instances are immutable.
    """

    __slots__ = ("_table",)

    def __init__(self, table: np.ndarray, *, check: bool = True):
        table = np.asarray(table, dtype=float)
        if table.ndim != 2 or table.shape[0] != table.shape[1]:
            raise ValueError(f"table must be square, got shape {table.shape}")
        n = table.shape[0]
        table = table.copy()
        rows, cols = np.indices((n, n))
        table[cols < rows] = INF
        if np.isnan(table).any():
            raise ValueError("table contains NaN")
        if check:
            upper = cols >= rows
            if not np.all(table[upper] >= 0.0):
                raise ValueError("bivariate function must be non-negative")
            # monotone in t on each row: f(s, t) <= f(s, t+1) for t >= s
            grow = table[:, 1:] >= table[:, :-1]
            relevant = cols[:, :-1] >= rows[:, :-1]
            if not np.all(grow | ~relevant):
                raise ValueError("bivariate function must be non-decreasing in t")
        table.flags.writeable = False
        self._table = table

    # -- construction helpers ------------------------------------------------

    @classmethod
    def from_increments(cls, increments, *, check: bool = True) -> "BivariateFunction":
        """Additive function f(s, t) = sum of increments over slots [s, t).

        Negative increments (leftover service paths) are accepted with
        ``check=False``; the resulting table then leaves the non-negative,
        monotone family but all dioid operations remain well defined.
        """
        inc = np.asarray(increments, dtype=float)
        if inc.ndim != 1:
            raise ValueError("increments must be a 1-d sequence")
        cum = np.concatenate(([0.0], np.cumsum(inc)))
        table = cum[None, :] - cum[:, None]
        return cls(table, check=check)

    # -- accessors -----------------------------------------------------------

    @property
    def table(self) -> np.ndarray:
        return self._table

    @property
    def horizon(self) -> int:
        return self._table.shape[0] - 1

    @property
    def is_causal(self) -> bool:
        """True iff f(t, t) = 0 for every t."""
        return bool(np.all(np.diag(self._table) == 0.0))

    def value(self, s: int, t: int) -> float:
        if not 0 <= s <= t <= self.horizon:
            raise IndexError(f"need 0 <= s <= t <= {self.horizon}, got ({s}, {t})")
        return float(self._table[s, t])

    def equals(self, other: "BivariateFunction") -> bool:
        """Exact equality of the two tables (inf compares equal to inf)."""
        return self.horizon == other.horizon and bool(
            np.array_equal(self._table, other._table)
        )

    def __repr__(self) -> str:
        return f"BivariateFunction(horizon={self.horizon}, causal={self.is_causal})"


# -- neutral and shift elements ----------------------------------------------


def make_delta(horizon: int) -> BivariateFunction:
    """Neutral element of the convolution: 0 on the diagonal, +inf above it."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    n = horizon + 1
    table = np.full((n, n), INF)
    np.fill_diagonal(table, 0.0)
    return BivariateFunction(table, check=False)


def make_delta_plus_w(horizon: int, w: float) -> BivariateFunction:
    """Additive offset element: w on the diagonal, +inf above it.

    Convolving with it adds w everywhere, and it commutes with every
    bivariate function although the convolution is not commutative in
    general.  It is not causal.
    """
    if w <= 0:
        raise ValueError("window offset w must be > 0")
    n = horizon + 1
    table = np.full((n, n), INF)
    np.fill_diagonal(table, float(w))
    return BivariateFunction(table, check=False)


def make_delta_shift(horizon: int, d: int) -> BivariateFunction:
    """Pure delay element: 0 where t - s <= d, +inf where t - s > d.

    Convolving f with it yields f(s, max(t - d, s)), which for causal f
    realizes a time shift by d slots.
    """
    if d < 0:
        raise ValueError("delay d must be >= 0")
    n = horizon + 1
    s, t = np.indices((n, n))
    table = np.where(t - s <= d, 0.0, INF)
    return BivariateFunction(table, check=False)


# -- dioid operations ----------------------------------------------------------


def _require_same_horizon(f: BivariateFunction, g: BivariateFunction) -> None:
    if f.horizon != g.horizon:
        raise ValueError(f"horizon mismatch: {f.horizon} != {g.horizon}")


def _min_plus_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # h[s, t] = min_tau a[s, tau] + b[tau, t]; the +inf lower triangles of the
    # operands restrict tau to [s, t] and keep the sentinel in the result.
    n = a.shape[0]
    out = np.empty_like(a)
    for s in range(n):
        np.min(a[s][:, None] + b, axis=0, out=out[s])
    return out


def pointwise_min(f: BivariateFunction, g: BivariateFunction) -> BivariateFunction:
    """Entrywise minimum of two functions on the same horizon."""
    _require_same_horizon(f, g)
    return BivariateFunction(np.minimum(f.table, g.table), check=False)


def convolve(f: BivariateFunction, g: BivariateFunction) -> BivariateFunction:
    """Min-plus convolution h(s, t) = min over tau in [s, t] of f(s, tau) + g(tau, t)."""
    _require_same_horizon(f, g)
    return BivariateFunction(_min_plus_product(f.table, g.table), check=False)


def deconvolve(f: BivariateFunction, g: BivariateFunction) -> BivariateFunction:
    """Min-plus deconvolution h(s, t) = max over tau in [0, s] of f(tau, t) - g(tau, s).

    f must be finite on its whole upper triangle.  +inf entries of g make the
    corresponding tau drop out of the maximum; the diagonal of g must be
    finite so that at least the tau = s candidate survives.
    """
    _require_same_horizon(f, g)
    n = f.horizon + 1
    rows, cols = np.indices((n, n))
    if not np.all(np.isfinite(f.table[cols >= rows])):
        raise ValueError("deconvolve requires a finite-valued left operand")
    if not np.all(np.isfinite(np.diag(g.table))):
        raise ValueError("deconvolve requires finite g(s, s) for every s")
    out = np.full((n, n), INF)
    with np.errstate(invalid="ignore"):
        for s in range(n):
            cand = f.table[: s + 1, :] - g.table[: s + 1, s][:, None]
            out[s] = np.max(cand, axis=0)
    out[cols < rows] = INF
    return BivariateFunction(out, check=False)


def self_convolve(f: BivariateFunction, n: int) -> BivariateFunction:
    """n-fold self convolution, with the zeroth power equal to the neutral element."""
    if n < 0:
        raise ValueError("n must be >= 0")
    acc = make_delta(f.horizon)
    for _ in range(n):
        acc = convolve(acc, f)
    return acc


def subadditive_closure(f: BivariateFunction) -> BivariateFunction:
    """Pointwise minimum of all n-fold self convolutions of f.

    Iterates until the running minimum stops changing, capped at T + 2
    steps.  Stabilization at step n is conclusive: the running minimum R
    satisfies f^(n+1) >= R and, by monotonicity of the convolution, so does
    every later power.  Feedback operands of the form
    S o delta_d o delta_plus_w with w > 0 provably stabilize within the cap
    (an optimal placement uses at most T windows, each of positive cost);
    for other inputs exhausting the cap reports non-convergence.
    """
    horizon = f.horizon
    cap = horizon + 2
    running = make_delta(horizon).table
    term = running
    for _ in range(1, cap + 1):
        term = _min_plus_product(term, f.table)
        updated = np.minimum(running, term)
        if np.array_equal(updated, running):
            return BivariateFunction(running, check=False)
        running = updated
    raise ClosureNonConvergence(
        f"closure did not stabilize within {cap} iterations on horizon {horizon}"
    )
