"""Discrete probability containers over finite alphabets.

Joint tables, row-stochastic conditionals, marginals, mutual information,
and the CSV formats used to move them between runs.  All containers are
immutable after construction and safe to share across workers.

Probabilities are validated to a stochasticity tolerance of 1e-9 and then
renormalized exactly, so downstream arithmetic always sees sums of 1.
Internally everything is in nats; conversion to bits happens only at the
reporting boundary.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import rel_entr, xlogy

from .errors import ValidationError

#: inputs whose mass deviates from 1 by more than this are rejected
STOCHASTIC_ATOL = 1e-9

_LN2 = float(np.log(2.0))


def _prob_array(values, name: str, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    if arr.min() < -STOCHASTIC_ATOL:
        raise ValidationError(f"{name} has negative entries (min={arr.min():.3g})")
    return np.clip(arr, 0.0, None)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _to_base(value_nats: float, base: str) -> float:
    if base == "nats":
        return value_nats
    if base == "bits":
        return value_nats / _LN2
    raise ValidationError(f"unknown log base {base!r}, expected 'nats' or 'bits'")


@dataclass(frozen=True)
class Marginal:
    """Probability vector over one finite alphabet."""

    probs: np.ndarray

    def __post_init__(self):
        arr = _prob_array(self.probs, "probs", 1)
        total = arr.sum()
        if abs(total - 1.0) > STOCHASTIC_ATOL:
            raise ValidationError(f"marginal mass is {total!r}, expected 1")
        object.__setattr__(self, "probs", _freeze(arr / total))

    def __len__(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class DiscreteJoint:
    """Full joint probability table p(x, y), rows indexed by x.

    Rows or columns of exactly zero mass are pruned with a warning, so both
    marginals are strictly positive after construction.  Optional labels
    name the alphabet entries for reports.
    """

    probs: np.ndarray
    x_labels: tuple[str, ...] | None = None
    y_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        arr = _prob_array(self.probs, "probs", 2)
        total = arr.sum()
        if abs(total - 1.0) > STOCHASTIC_ATOL:
            raise ValidationError(f"joint mass is {total!r}, expected 1")
        arr = arr / total

        keep_x = arr.sum(axis=1) > 0.0
        keep_y = arr.sum(axis=0) > 0.0
        x_labels, y_labels = self.x_labels, self.y_labels
        if not (keep_x.all() and keep_y.all()):
            dropped = int((~keep_x).sum() + (~keep_y).sum())
            warnings.warn(
                f"pruned {dropped} zero-mass rows/columns from joint table",
                stacklevel=2,
            )
            arr = arr[keep_x][:, keep_y]
            if arr.size == 0:
                raise ValidationError("joint table has no support")
            if x_labels is not None:
                x_labels = tuple(l for l, k in zip(x_labels, keep_x) if k)
            if y_labels is not None:
                y_labels = tuple(l for l, k in zip(y_labels, keep_y) if k)

        if x_labels is not None and len(x_labels) != arr.shape[0]:
            raise ValidationError("x_labels length does not match table rows")
        if y_labels is not None and len(y_labels) != arr.shape[1]:
            raise ValidationError("y_labels length does not match table columns")

        object.__setattr__(self, "probs", _freeze(arr))
        object.__setattr__(self, "x_labels", x_labels)
        object.__setattr__(self, "y_labels", y_labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    def x_marginal(self) -> Marginal:
        return Marginal(self.probs.sum(axis=1))

    def y_marginal(self) -> Marginal:
        return Marginal(self.probs.sum(axis=0))


@dataclass(frozen=True)
class ConditionalMatrix:
    """Row-stochastic table of p(y | x_i) plus example weights p(x_i).

    Weights default to uniform 1/N and must be strictly positive.
    """

    rows: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        rows = _prob_array(self.rows, "rows", 2)
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > STOCHASTIC_ATOL):
            worst = int(np.argmax(np.abs(sums - 1.0)))
            raise ValidationError(
                f"row {worst} sums to {sums[worst]!r}, expected 1"
            )
        rows = rows / sums[:, None]

        if self.weights is None:
            w = np.full(rows.shape[0], 1.0 / rows.shape[0])
        else:
            w = _prob_array(self.weights, "weights", 1)
            if len(w) != rows.shape[0]:
                raise ValidationError("weights length does not match number of rows")
            if w.min() <= 0.0:
                raise ValidationError("weights must be strictly positive")
            total = w.sum()
            if abs(total - 1.0) > STOCHASTIC_ATOL:
                raise ValidationError(f"weights sum to {total!r}, expected 1")
            w = w / total

        object.__setattr__(self, "rows", _freeze(rows))
        object.__setattr__(self, "weights", _freeze(w))

    @property
    def num_examples(self) -> int:
        return self.rows.shape[0]

    @property
    def num_classes(self) -> int:
        return self.rows.shape[1]

    def label_marginal(self) -> Marginal:
        return Marginal(self.weights @ self.rows)


def joint_from_conditional(cond: ConditionalMatrix) -> DiscreteJoint:
    """Assemble the joint table p(x, y) = p(x) p(y|x)."""
    return DiscreteJoint(cond.weights[:, None] * cond.rows)


def marginal(joint: DiscreteJoint, axis: str = "x") -> Marginal:
    """Marginalize the joint over the other variable (axis 'x' or 'y')."""
    if axis == "x":
        return joint.x_marginal()
    if axis == "y":
        return joint.y_marginal()
    raise ValidationError(f"axis must be 'x' or 'y', got {axis!r}")


def conditional_from_joint(joint: DiscreteJoint, axis: str = "x") -> ConditionalMatrix:
    """Condition the joint on one variable.

    axis='x' returns rows p(y|x) weighted by p(x); axis='y' returns rows
    p(x|y) weighted by p(y).  Marginals are positive after joint
    construction, so no row can be empty here.
    """
    if axis == "x":
        mass = joint.probs.sum(axis=1)
        table = joint.probs
    elif axis == "y":
        mass = joint.probs.sum(axis=0)
        table = joint.probs.T
    else:
        raise ValidationError(f"axis must be 'x' or 'y', got {axis!r}")
    if mass.min() <= 0.0:
        raise ValidationError("zero-mass row while conditioning")
    return ConditionalMatrix(table / mass[:, None], mass)


def mutual_information(joint: DiscreteJoint, base: str = "nats") -> float:
    """Mutual information of the joint table.

    Computed as sum of p(x,y) log[p(x,y) / (p(x)p(y))] with the 0 log 0 := 0
    convention.  The result is mathematically non-negative; floating point
    may return values as low as -1e-12.
    """
    px = joint.probs.sum(axis=1)
    py = joint.probs.sum(axis=0)
    value = float(rel_entr(joint.probs, np.outer(px, py)).sum())
    return _to_base(value, base)


def entropy(dist, base: str = "nats") -> float:
    """Shannon entropy of a Marginal or a raw probability vector."""
    probs = dist.probs if isinstance(dist, Marginal) else Marginal(dist).probs
    return _to_base(float(-xlogy(probs, probs).sum()), base)


# ---------------------------------------------------------------------------
# CSV formats
# ---------------------------------------------------------------------------

def _format_float(v: float) -> str:
    return format(float(v), ".17g")


def save_conditional_csv(
    cond: ConditionalMatrix, path, class_names: list[str] | None = None
) -> None:
    """Write a conditional table as CSV: one class column per label plus a
    trailing ``weight`` column."""
    names = class_names or [f"y{j}" for j in range(cond.num_classes)]
    if len(names) != cond.num_classes:
        raise ValidationError("class_names length does not match table columns")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([*names, "weight"])
        for row, w in zip(cond.rows, cond.weights):
            writer.writerow([*(_format_float(v) for v in row), _format_float(w)])


def load_conditional_csv(path) -> ConditionalMatrix:
    """Read a conditional table written by :func:`save_conditional_csv`.

    The ``weight`` column is optional; without it weights are uniform.
    A headerless all-numeric file is also accepted.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValidationError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if _is_numeric_row(header):
        body, header = rows, [f"y{j}" for j in range(len(rows[0]))]
    if not body:
        raise ValidationError(f"{path}: no data rows")
    has_weight = header[-1].strip().lower() == "weight"
    try:
        data = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric cell ({exc})") from exc
    if data.shape[1] != len(header):
        raise ValidationError(f"{path}: ragged rows")
    if has_weight:
        return ConditionalMatrix(data[:, :-1], data[:, -1])
    return ConditionalMatrix(data)


def save_joint_csv(joint: DiscreteJoint, path) -> None:
    """Write a joint table as a dense CSV matrix with a label header row."""
    names = joint.y_labels or [f"y{j}" for j in range(joint.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in joint.probs:
            writer.writerow([_format_float(v) for v in row])


def load_joint_csv(path) -> DiscreteJoint:
    """Read a dense joint table; the header row is optional."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValidationError(f"{path}: empty file")
    y_labels = None
    if not _is_numeric_row(rows[0]):
        y_labels = tuple(rows[0])
        rows = rows[1:]
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric cell ({exc})") from exc
    return DiscreteJoint(data, y_labels=y_labels)


def _is_numeric_row(cells: list[str]) -> bool:
    try:
        for c in cells:
            float(c)
    except ValueError:
        return False
    return True
