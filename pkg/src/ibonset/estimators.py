"""Estimators for the learnability threshold beta0 of a finite dataset.

Four routes are provided, all upper bounds on (or exact values of) the
smallest trade-off coefficient at which the bottleneck objective prefers a
non-trivial encoder:

* ``subset_search``: sort examples by confidence toward a pivot class and
  scan contiguous subsets for the one minimizing the threshold ratio.
* ``class_conditional_beta``: closed form when label noise depends only on
  the true class.
* ``beta_for_scores`` / ``minimize_beta``: the variance-ratio functional of
  an arbitrary per-example score vector, and its projected-gradient
  minimization.
* ``max_correlation``: the second singular value of the normalized joint
  table; its squared inverse equals the functional's infimum.

All thresholds are computed from exact probability tables, never from
information estimates, so they are deterministic given their inputs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import rel_entr

from .dist import ConditionalMatrix, DiscreteJoint, Marginal
from .errors import (
    IndependenceError,
    InvalidDirectionError,
    UninformativeSubsetError,
    ValidationError,
)

#: denominators at or below this are treated as "no label information"
DENOM_TOL = 1e-12

#: default relative improvement needed to keep narrowing the search range
SEARCH_RTOL = 1e-6

#: ranges at most this wide are scanned point by point instead of narrowed
EXHAUSTIVE_WIDTH = 32

#: thresholds may dip this far below 1 from floating-point roundoff
_BETA_SLACK = 1e-9


class Method(str, enum.Enum):
    """How a threshold estimate was produced."""

    SUBSET_SEARCH = "subset_search"
    CLASS_CONDITIONAL = "class_conditional"
    FUNCTIONAL = "functional"
    MAX_CORRELATION_INVERSE = "max_correlation_inverse"
    EMPIRICAL_SWEEP = "empirical_sweep"
    INFO_DENSITY = "info_density"


@dataclass(frozen=True)
class SubsetResult:
    """The threshold-minimizing subset of examples and its certified value.

    ``member_indices`` are original example indices (sorted); the subset is
    always non-empty and a strict subset of the dataset.  ``beta0`` is an
    upper bound on the true threshold; it equals 1 exactly when the labels
    are a deterministic function of the examples.
    """

    beta0: float
    pivot_class: int
    member_indices: tuple[int, ...]
    mass: float
    label_dist: Marginal

    def __post_init__(self):
        if not math.isfinite(self.beta0) or self.beta0 < 1.0 - _BETA_SLACK:
            raise ValidationError(f"threshold {self.beta0!r} below 1")
        if not self.member_indices:
            raise ValidationError("subset is empty")
        if not 0.0 < self.mass < 1.0:
            raise ValidationError(f"subset mass {self.mass!r} not in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "beta0": self.beta0,
            "pivot_class": self.pivot_class,
            "member_indices": list(self.member_indices),
            "mass": self.mass,
            "label_dist": self.label_dist.probs.tolist(),
        }


_THEORETICAL = frozenset({
    Method.SUBSET_SEARCH,
    Method.CLASS_CONDITIONAL,
    Method.FUNCTIONAL,
    Method.MAX_CORRELATION_INVERSE,
})


@dataclass(frozen=True)
class BetaEstimate:
    """A threshold value with its method tag and diagnostics."""

    value: float
    method: Method
    subset: SubsetResult | None = None
    scores: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method in _THEORETICAL and self.value < 1.0 - _BETA_SLACK:
            raise ValidationError(
                f"{self.method.value} produced threshold {self.value!r} below 1"
            )
        if self.scores is not None:
            arr = np.array(self.scores, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, "scores", arr)

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "value": self.value,
            "subset": self.subset.to_dict() if self.subset else None,
            "scores": self.scores.tolist() if self.scores is not None else None,
            "diagnostics": dict(self.diagnostics),
        }


# ---------------------------------------------------------------------------
# subset thresholds
# ---------------------------------------------------------------------------

def _subset_ratio(mass: float, label_dist: np.ndarray, p_y: np.ndarray) -> float:
    """(1/p(S) - 1) / (sum_j q_j^2/p_j - 1), +inf when uninformative."""
    if not 0.0 < mass < 1.0 - 1e-15:
        return math.inf
    den = float((label_dist * label_dist / p_y).sum()) - 1.0
    if den <= DENOM_TOL:
        return math.inf
    return (1.0 / mass - 1.0) / den


def beta_for_subset(cond: ConditionalMatrix, members) -> float:
    """Threshold certified by one explicit subset of examples.

    The subset mass comes from the example weights and the subset label
    distribution is the weight-averaged row mean, so with uniform weights
    the numerator reduces to N/n - 1.

    Raises :class:`UninformativeSubsetError` when the subset's label
    distribution matches the marginal (the ratio diverges there).
    """
    idx = np.asarray(members, dtype=int)
    if idx.size == 0:
        raise ValidationError("subset is empty")
    if idx.min() < 0 or idx.max() >= cond.num_examples:
        raise ValidationError("subset index out of range")
    if len(np.unique(idx)) != idx.size:
        raise ValidationError("subset contains duplicate indices")
    if idx.size >= cond.num_examples:
        raise UninformativeSubsetError(
            "subset covers every example; its label distribution is the marginal"
        )
    w = cond.weights[idx]
    mass = float(w.sum())
    label_dist = (w[:, None] * cond.rows[idx]).sum(axis=0) / mass
    value = _subset_ratio(mass, label_dist, cond.label_marginal().probs)
    if not math.isfinite(value):
        raise UninformativeSubsetError(
            "subset carries no label information (denominator ~ 0)"
        )
    return value


class _PrefixTables:
    """Cumulative statistics along one pivot ordering.

    After the O(N C) setup, any contiguous range [lo, hi] (1-based,
    inclusive) is evaluated in O(C).
    """

    def __init__(self, cond: ConditionalMatrix, order: np.ndarray):
        self.order = order
        w = cond.weights[order]
        self.cum_w = np.cumsum(w)
        self.cum_wr = np.cumsum(cond.weights[order, None] * cond.rows[order], axis=0)
        self.p_y = cond.label_marginal().probs
        self.n = len(order)

    def _stats(self, lo: int, hi: int) -> tuple[float, np.ndarray]:
        mass = self.cum_w[hi - 1] - (self.cum_w[lo - 2] if lo > 1 else 0.0)
        acc = self.cum_wr[hi - 1] - (self.cum_wr[lo - 2] if lo > 1 else 0.0)
        return float(mass), acc / mass

    def beta(self, lo: int, hi: int) -> float:
        mass, q = self._stats(lo, hi)
        return _subset_ratio(mass, q, self.p_y)

    def info_density(self, lo: int, hi: int) -> float:
        mass, q = self._stats(lo, hi)
        if not 0.0 < mass < 1.0 - 1e-15:
            return math.inf
        den = float(rel_entr(q, self.p_y).sum())
        if den <= DENOM_TOL:
            return math.inf
        return -math.log(mass) / den

    def members(self, lo: int, hi: int) -> tuple[int, ...]:
        return tuple(sorted(int(i) for i in self.order[lo - 1:hi]))


def _pivot_order(rows: np.ndarray, pivot: int) -> np.ndarray:
    # stable sort keeps original index order among ties
    return np.argsort(-rows[:, pivot], kind="stable")


def _improves(new: float, old: float, rtol: float) -> bool:
    if not math.isfinite(old):
        return math.isfinite(new)
    return (old - new) > rtol * abs(old)


def _narrow_minimum(value_of, lo: int, hi: int, rtol: float) -> tuple[float, int]:
    """Minimize value_of(k) over integers [lo, hi].

    The bracket shrinks by 0.8/0.2 interpolation: each endpoint jumps to
    its interpolated candidate only when that candidate improves on it by
    more than ``rtol`` relative.  Once the surviving bracket is narrow (or
    the search is narrow to begin with) every remaining point is evaluated,
    which makes the result exact for small inputs.
    """
    cache: dict[int, float] = {}

    def ev(k: int) -> float:
        if k not in cache:
            cache[k] = value_of(k)
        return cache[k]

    a, b = lo, hi
    fa, fb = ev(a), ev(b)
    while b - a + 1 > EXHAUSTIVE_WIDTH:
        a2 = int(round(0.8 * a + 0.2 * b))
        b2 = int(round(0.2 * a + 0.8 * b))
        fa2, fb2 = ev(a2), ev(b2)
        moved = False
        if _improves(fa2, fa, rtol):
            a, fa = a2, fa2
            moved = True
        if _improves(fb2, fb, rtol):
            b, fb = b2, fb2
            moved = True
        if not moved:
            break
    if b - a + 1 <= EXHAUSTIVE_WIDTH:
        for k in range(a, b + 1):
            ev(k)
    best_k = min(cache, key=lambda k: (cache[k], k))
    return cache[best_k], best_k


def _search_pivot(tables: _PrefixTables, objective, variant: str, rtol: float):
    """Best (value, lo, hi) for one pivot ordering."""
    n = tables.n
    if variant == "prefix":
        value, k = _narrow_minimum(lambda k: objective(1, k), 1, n, rtol)
        return value, 1, k

    if variant != "range":
        raise ValidationError(f"unknown search variant {variant!r}")

    if n <= EXHAUSTIVE_WIDTH:
        best = (math.inf, 1, 1)
        for lo in range(1, n + 1):
            for hi in range(lo, n + 1):
                v = objective(lo, hi)
                if v < best[0]:
                    best = (v, lo, hi)
        return best

    # coordinate descent: narrow the right edge with the left fixed, then
    # the left with the right fixed, until neither moves; the best tuple is
    # tracked explicitly so the reported value always matches its range
    lo = 1
    value, hi = _narrow_minimum(lambda k: objective(lo, k), 1, n, rtol)
    best = (value, lo, hi)
    for _ in range(64):
        v_lo, new_lo = _narrow_minimum(lambda k: objective(k, hi), 1, hi, rtol)
        if v_lo < best[0]:
            best = (v_lo, new_lo, hi)
        v_hi, new_hi = _narrow_minimum(lambda k: objective(new_lo, k), new_lo, n, rtol)
        if v_hi < best[0]:
            best = (v_hi, new_lo, new_hi)
        if (new_lo, new_hi) == (lo, hi):
            break
        lo, hi = new_lo, new_hi
    return best


def subset_search(
    cond: ConditionalMatrix,
    *,
    tolerance: float = SEARCH_RTOL,
    variant: str = "prefix",
) -> SubsetResult:
    """Find the contiguous subset minimizing the threshold ratio.

    For each pivot class the rows are sorted by that class's probability in
    decreasing order (stable, original index as tie-break) and contiguous
    candidates are searched: prefixes anchored at the top row by default
    (``variant='prefix'``), or free ranges (``variant='range'``).  The
    minimum over pivot classes is returned.  The result is an upper bound
    on the true threshold.

    Raises :class:`IndependenceError` when no candidate subset carries any
    label information.
    """
    n, c = cond.num_examples, cond.num_classes
    if n < 2 or c < 2:
        raise IndependenceError(
            "X or Y takes a single value, so they are independent"
        )
    best = None  # (value, pivot, lo, hi, tables)
    for pivot in range(c):
        tables = _PrefixTables(cond, _pivot_order(cond.rows, pivot))
        value, lo, hi = _search_pivot(tables, tables.beta, variant, tolerance)
        if best is None or value < best[0]:
            best = (value, pivot, lo, hi, tables)
    value, pivot, lo, hi, tables = best
    if not math.isfinite(value):
        raise IndependenceError(
            "every candidate subset has the marginal label distribution; "
            "X and Y are independent"
        )
    mass, q = tables._stats(lo, hi)
    return SubsetResult(
        beta0=value,
        pivot_class=pivot,
        member_indices=tables.members(lo, hi),
        mass=mass,
        label_dist=Marginal(q),
    )


def info_density_beta(
    cond: ConditionalMatrix,
    *,
    tolerance: float = SEARCH_RTOL,
    variant: str = "prefix",
) -> BetaEstimate:
    """Information-density approximation of the threshold.

    Minimizes (-ln p(S)) / KL(p(y|S) || p(y)) over the same candidate
    family as :func:`subset_search`.  Both numerator and denominator are
    relaxations, so the result is a diagnostic, not a bound; it is flagged
    ``diagnostic_only`` in the report.
    """
    n, c = cond.num_examples, cond.num_classes
    if n < 2 or c < 2:
        raise IndependenceError(
            "X or Y takes a single value, so they are independent"
        )
    best = None
    for pivot in range(c):
        tables = _PrefixTables(cond, _pivot_order(cond.rows, pivot))
        value, lo, hi = _search_pivot(tables, tables.info_density, variant, tolerance)
        if best is None or value < best[0]:
            best = (value, pivot, lo, hi, tables)
    value, pivot, lo, hi, tables = best
    if not math.isfinite(value):
        raise IndependenceError(
            "every candidate subset has the marginal label distribution; "
            "X and Y are independent"
        )
    mass, q = tables._stats(lo, hi)
    subset = SubsetResult(
        beta0=tables.beta(lo, hi),
        pivot_class=pivot,
        member_indices=tables.members(lo, hi),
        mass=mass,
        label_dist=Marginal(q),
    )
    return BetaEstimate(
        value=value,
        method=Method.INFO_DENSITY,
        subset=subset,
        diagnostics={"diagnostic_only": True, "variant": variant},
    )


def class_conditional_beta(noise, prior=None) -> BetaEstimate:
    """Closed-form threshold under class-conditional label noise.

    ``noise`` is the row-stochastic confusion table p(observed | true) and
    ``prior`` the true-class probabilities (uniform by default).  Returns
    the minimum over true classes of (1/p(c) - 1) / (sum_y p(y|c)^2/p(y) - 1).
    """
    prior_arr = prior.probs if isinstance(prior, Marginal) else prior
    table = ConditionalMatrix(np.asarray(noise, dtype=float), prior_arr)
    p_y = table.label_marginal().probs
    if p_y.min() <= 0.0:
        raise ValidationError("induced label marginal has a zero entry")
    per_class = [
        _subset_ratio(float(table.weights[k]), table.rows[k], p_y)
        for k in range(table.num_examples)
    ]
    pivot = int(np.argmin(per_class))
    value = per_class[pivot]
    if not math.isfinite(value):
        raise IndependenceError(
            "no class shifts the label distribution; X and Y are independent"
        )
    return BetaEstimate(
        value=value,
        method=Method.CLASS_CONDITIONAL,
        diagnostics={
            "pivot_true_class": pivot,
            "per_class": [v if math.isfinite(v) else None for v in per_class],
        },
    )


# ---------------------------------------------------------------------------
# score-vector functional and maximum correlation
# ---------------------------------------------------------------------------

def beta_for_scores(joint: DiscreteJoint, scores) -> float:
    """Threshold ratio of one per-example score vector.

    Var(s) / (E_y[(E[s|y])^2] - E[s]^2) under the joint.  Invariant under
    affine maps of the scores.  Raises :class:`InvalidDirectionError` for
    scores constant on the support or blind to the labels.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or len(s) != joint.shape[0]:
        raise ValidationError("scores length does not match joint rows")
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores contain non-finite entries")
    p_x = joint.probs.sum(axis=1)
    p_y = joint.probs.sum(axis=0)
    # centering first keeps both quadratic forms non-negative and makes the
    # affine invariance hold to roundoff instead of suffering cancellation
    centered = s - float(p_x @ s)
    var = float(p_x @ (centered * centered))
    scale = max(1.0, float(np.abs(s).max()) ** 2)
    if var <= DENOM_TOL * scale:
        raise InvalidDirectionError("scores are constant on the support")
    cond_mean = (joint.probs.T @ centered) / p_y
    den = float(p_y @ (cond_mean * cond_mean))
    if den <= DENOM_TOL * var:
        raise InvalidDirectionError(
            "scores are uncorrelated with the labels (denominator ~ 0)"
        )
    return var / den


def max_correlation(joint: DiscreteJoint) -> float:
    """Maximum correlation between transforms of X and of Y.

    Equals the second-largest singular value of Q with
    Q[x, y] = p(x, y) / sqrt(p(x) p(y)).  The top singular value of Q is 1
    for any valid joint; a deviation beyond 1e-9 means the table is broken
    and raises.
    """
    p_x = joint.probs.sum(axis=1)
    p_y = joint.probs.sum(axis=0)
    q = joint.probs / np.sqrt(np.outer(p_x, p_y))
    svals = np.linalg.svd(q, compute_uv=False)
    if abs(svals[0] - 1.0) > 1e-9:
        raise ValidationError(
            f"top singular value {svals[0]!r} deviates from 1; joint table invalid"
        )
    if len(svals) < 2:
        return 0.0
    return float(min(max(svals[1], 0.0), 1.0))


def max_correlation_beta(joint: DiscreteJoint) -> BetaEstimate:
    """Threshold 1/rho^2 from the maximum correlation rho, with the
    minimizing score vector recovered from the singular decomposition."""
    p_x = joint.probs.sum(axis=1)
    p_y = joint.probs.sum(axis=0)
    q = joint.probs / np.sqrt(np.outer(p_x, p_y))
    u, svals, _ = np.linalg.svd(q)
    if abs(svals[0] - 1.0) > 1e-9:
        raise ValidationError(
            f"top singular value {svals[0]!r} deviates from 1; joint table invalid"
        )
    rho = float(min(max(svals[1], 0.0), 1.0)) if len(svals) > 1 else 0.0
    if rho * rho <= DENOM_TOL:
        raise IndependenceError("maximum correlation is zero; X and Y are independent")
    scores = u[:, 1] / np.sqrt(p_x)
    return BetaEstimate(
        value=1.0 / (rho * rho),
        method=Method.MAX_CORRELATION_INVERSE,
        scores=scores,
        diagnostics={"rho_m": rho, "top_singular_value": float(svals[0])},
    )


def minimize_beta(
    joint: DiscreteJoint,
    *,
    iters: int = 30_000,
    lr: float = 0.5,
    seed: int = 0,
    conv_window: int = 50,
    conv_rtol: float = 1e-12,
    init_scores=None,
) -> BetaEstimate:
    """Minimize the score-vector threshold by projected gradient descent.

    Runs gradient descent on the log of the ratio from a random
    non-constant start; the ratio is affine-invariant, so after every step
    the scores are re-centered to weighted mean 0 and variance 1.
    Convergence is declared when the value's relative change over
    ``conv_window`` steps drops below ``conv_rtol``; otherwise the best
    iterate is returned with a warning in the diagnostics.

    On well-conditioned tables the result matches 1/max_correlation^2; the
    singular-value route is the exact minimizer and this descent
    cross-validates it.
    """
    if joint.shape[0] < 2:
        raise ValidationError("need at least two x values to define a direction")
    p_x = joint.probs.sum(axis=1)
    p_y = joint.probs.sum(axis=0)
    # the quadratic form h M h with M[x,x'] = sum_y p(x,y)p(x',y)/p(y) is
    # what the centered unit-variance ratio inverts; M is kept factored so
    # one multiply costs O(|X||Y|) even for large discretized alphabets
    left = joint.probs / p_y[None, :]

    def m_times(h: np.ndarray) -> np.ndarray:
        return left @ (joint.probs.T @ h)

    def project(h: np.ndarray) -> np.ndarray:
        h = h - p_x @ h
        v = float(p_x @ (h * h))
        if v <= 0.0:
            raise InvalidDirectionError("scores collapsed to a constant")
        return h / math.sqrt(v)

    if init_scores is not None:
        h = np.asarray(init_scores, dtype=float).copy()
        if h.shape != p_x.shape:
            raise ValidationError("init_scores length does not match joint rows")
    else:
        rng = np.random.default_rng(seed)
        h = rng.standard_normal(len(p_x))
    h = project(h)

    gain = float(h @ m_times(h))  # = 1/ratio at the projected point
    if gain <= DENOM_TOL:
        raise IndependenceError(
            "label-conditional means carry no variance; X and Y are independent"
        )
    history = [gain]
    converged = False
    iterations = 0
    for iterations in range(1, iters + 1):
        grad = 2.0 * p_x * h - 2.0 * m_times(h) / gain
        h = project(h - lr * grad)
        gain = float(h @ m_times(h))
        if gain <= DENOM_TOL:
            raise IndependenceError(
                "label-conditional means carry no variance; X and Y are independent"
            )
        history.append(gain)
        if iterations > conv_window:
            prev = history[-conv_window - 1]
            if abs(gain - prev) <= conv_rtol * abs(gain):
                converged = True
                break

    best_gain = max(history)
    diagnostics = {
        "converged": converged,
        "iterations": iterations,
        "seed": seed,
        "lr": lr,
    }
    if not converged:
        diagnostics["warning"] = (
            f"no convergence after {iters} iterations; best iterate returned"
        )
    return BetaEstimate(
        value=1.0 / best_gain,
        method=Method.FUNCTIONAL,
        scores=h,
        diagnostics=diagnostics,
    )


def onset_correction(joint: DiscreteJoint, scores) -> np.ndarray:
    """Direction in which p(y|x) first departs from p(y) at the onset.

    Returns the matrix (s(x) - mean) * sum_x' p(x', y)(s(x') - mean), one
    entry per (x, y) cell, normalized up to an arbitrary positive scale
    (set to 1 by convention).  Every row sums to zero.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or len(s) != joint.shape[0]:
        raise ValidationError("scores length does not match joint rows")
    p_x = joint.probs.sum(axis=1)
    centered = s - float(p_x @ s)
    scale = max(1.0, float(np.abs(s).max()))
    if np.abs(centered).max() <= 1e-12 * scale:
        raise InvalidDirectionError("scores are constant; no onset direction")
    per_label = joint.probs.T @ centered
    return np.outer(centered, per_label)
