"""Synthetic 2D Gaussian-mixture datasets with class-conditional label noise.

Covers the two standard experiment families: well-separated components with
labels flipped at a chosen rate (noise study), and components moved toward
each other at zero noise (overlap study).  Provides sampling, the exact
posterior p(y|x) by Bayes' rule through the confusion table, and
discretization of either a spec (exact cell masses from Gaussian CDF
differences) or a sample set (counts) to a finite joint table.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

from .dist import ConditionalMatrix, DiscreteJoint
from .errors import ValidationError


@dataclass(frozen=True)
class MixtureComponent:
    mean: tuple[float, float]
    variances: tuple[float, float]
    weight: float
    class_id: int


@dataclass(frozen=True)
class MixtureSpec:
    """A 2D diagonal-covariance Gaussian mixture with optional label noise.

    ``noise`` is a row-stochastic confusion table p(observed | true); None
    means labels are observed exactly.
    """

    components: tuple[MixtureComponent, ...]
    noise: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.components:
            raise ValidationError("mixture needs at least one component")
        comps = tuple(
            MixtureComponent(
                mean=tuple(float(v) for v in c.mean),
                variances=tuple(float(v) for v in c.variances),
                weight=float(c.weight),
                class_id=int(c.class_id),
            )
            for c in self.components
        )
        for c in comps:
            if len(c.mean) != 2 or len(c.variances) != 2:
                raise ValidationError("components live in 2 dimensions")
            if min(c.variances) <= 0.0:
                raise ValidationError("variances must be positive")
            if c.weight < 0.0:
                raise ValidationError("component weights must be non-negative")
        total = sum(c.weight for c in comps)
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"component weights sum to {total!r}, expected 1")
        comps = tuple(
            MixtureComponent(c.mean, c.variances, c.weight / total, c.class_id)
            for c in comps
        )
        ids = sorted({c.class_id for c in comps})
        if ids != list(range(len(ids))):
            raise ValidationError("class ids must be 0..C-1")
        noise = self.noise
        if noise is not None:
            noise = np.array(noise, dtype=float)
            if noise.ndim != 2 or noise.shape[0] != len(ids):
                raise ValidationError("confusion table rows must match class count")
            if noise.min() < 0.0 or np.any(np.abs(noise.sum(axis=1) - 1.0) > 1e-9):
                raise ValidationError("confusion rows must be stochastic")
            noise = noise / noise.sum(axis=1, keepdims=True)
            noise.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "noise", noise)

    @property
    def num_true_classes(self) -> int:
        return max(c.class_id for c in self.components) + 1

    @property
    def num_observed_classes(self) -> int:
        if self.noise is None:
            return self.num_true_classes
        return self.noise.shape[1]

    def class_priors(self) -> np.ndarray:
        priors = np.zeros(self.num_true_classes)
        for c in self.components:
            priors[c.class_id] += c.weight
        return priors

    def to_dict(self) -> dict:
        return {
            "components": [
                {
                    "mean": list(c.mean),
                    "variances": list(c.variances),
                    "weight": c.weight,
                    "class_id": c.class_id,
                }
                for c in self.components
            ],
            "noise": None if self.noise is None else self.noise.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MixtureSpec":
        try:
            comps = tuple(
                MixtureComponent(
                    mean=tuple(c["mean"]),
                    variances=tuple(c["variances"]),
                    weight=c["weight"],
                    class_id=c["class_id"],
                )
                for c in doc["components"]
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed mixture document: {exc}") from exc
        return cls(comps, doc.get("noise"), int(doc.get("seed", 0)))


def save_spec_json(spec: MixtureSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2)


def load_spec_json(path) -> MixtureSpec:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return MixtureSpec.from_dict(doc)


@dataclass(frozen=True)
class SampleSet:
    """Drawn points with both observed (possibly flipped) and true labels."""

    points: np.ndarray
    observed_labels: np.ndarray
    true_labels: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        obs = np.array(self.observed_labels, dtype=int)
        true = np.array(self.true_labels, dtype=int)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValidationError("points must be N x 2")
        if len(obs) != len(pts) or len(true) != len(pts):
            raise ValidationError("label arrays must match point count")
        if len(pts) and (obs.min() < 0 or true.min() < 0):
            raise ValidationError("labels must be non-negative")
        for a in (pts, obs, true):
            a.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "observed_labels", obs)
        object.__setattr__(self, "true_labels", true)

    def __len__(self) -> int:
        return len(self.points)


def save_samples_csv(samples: SampleSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "observed_label", "true_label"])
        for (x1, x2), o, t in zip(samples.points, samples.observed_labels, samples.true_labels):
            writer.writerow([format(x1, ".17g"), format(x2, ".17g"), int(o), int(t)])


def load_samples_csv(path) -> SampleSet:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValidationError(f"{path}: no sample rows")
    try:
        data = [(float(r[0]), float(r[1]), int(r[2]), int(r[3])) for r in rows[1:] if r]
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"{path}: malformed sample row ({exc})") from exc
    pts = np.array([(a, b) for a, b, _, _ in data])
    obs = np.array([o for _, _, o, _ in data])
    true = np.array([t for _, _, _, t in data])
    return SampleSet(pts, obs, true)


def sample(spec: MixtureSpec, n: int, seed: int | None = None) -> SampleSet:
    """Draw n points: component by weight, point from its Gaussian, observed
    label flipped through the confusion table.  Deterministic given seed."""
    if n < 1:
        raise ValidationError("need at least one sample")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    weights = np.array([c.weight for c in spec.components])
    means = np.array([c.mean for c in spec.components])
    stds = np.sqrt([c.variances for c in spec.components])
    class_ids = np.array([c.class_id for c in spec.components])

    comp = rng.choice(len(weights), size=n, p=weights)
    points = means[comp] + rng.standard_normal((n, 2)) * stds[comp]
    true = class_ids[comp]
    if spec.noise is None:
        observed = true.copy()
    else:
        observed = np.empty(n, dtype=int)
        for c in range(spec.num_true_classes):
            mask = true == c
            if mask.any():
                observed[mask] = rng.choice(
                    spec.noise.shape[1], size=int(mask.sum()), p=spec.noise[c]
                )
    return SampleSet(points, observed, true)


def _class_log_densities(spec: MixtureSpec, points: np.ndarray) -> np.ndarray:
    """log sum_k w_k N(x; mu_k, Sigma_k) per true class, shape N x C*."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValidationError("points must be N x 2")
    n_classes = spec.num_true_classes
    out = np.full((len(pts), n_classes), -np.inf)
    per_class: dict[int, list[np.ndarray]] = {c: [] for c in range(n_classes)}
    for comp in spec.components:
        if comp.weight <= 0.0:
            continue
        mean = np.array(comp.mean)
        var = np.array(comp.variances)
        log_norm = -0.5 * float(np.log(2.0 * np.pi * var).sum())
        d = pts - mean
        logpdf = log_norm - 0.5 * ((d * d) / var).sum(axis=1)
        per_class[comp.class_id].append(math.log(comp.weight) + logpdf)
    for c, terms in per_class.items():
        if terms:
            out[:, c] = logsumexp(np.stack(terms, axis=0), axis=0)
    return out


def analytic_posterior(spec: MixtureSpec, points) -> ConditionalMatrix:
    """Exact p(y|x): Bayes over mixture densities, then the confusion table.

    Evaluated in log space, so far-out points underflow gracefully instead
    of erroring.
    """
    log_dens = _class_log_densities(spec, np.asarray(points, dtype=float))
    shifted = log_dens - log_dens.max(axis=1, keepdims=True)
    post = np.exp(shifted)
    post /= post.sum(axis=1, keepdims=True)
    rows = post if spec.noise is None else post @ spec.noise
    return ConditionalMatrix(rows)


def default_box(spec: MixtureSpec, sigmas: float = 4.0) -> tuple[tuple[float, float], tuple[float, float]]:
    """Axis-aligned box reaching ``sigmas`` standard deviations beyond the
    extreme component means."""
    lo = [float("inf"), float("inf")]
    hi = [-float("inf"), -float("inf")]
    for c in spec.components:
        for ax in range(2):
            s = np.sqrt(c.variances[ax])
            lo[ax] = min(lo[ax], c.mean[ax] - sigmas * s)
            hi[ax] = max(hi[ax], c.mean[ax] + sigmas * s)
    return (lo[0], hi[0]), (lo[1], hi[1])


def discretize(
    source,
    bins_per_axis: int = 32,
    box: tuple[tuple[float, float], tuple[float, float]] | None = None,
    *,
    mass_floor: float = 1e-12,
) -> DiscreteJoint:
    """Reduce a mixture spec or a sample set to a finite joint table.

    The x alphabet is the set of occupied grid cells.  For a
    :class:`MixtureSpec` the cell masses are exact (products of per-axis
    Gaussian CDF differences, composed with the confusion table); for a
    :class:`SampleSet` they are counts of (cell, observed label) pairs.
    Cells holding at most ``mass_floor`` of the total mass are dropped and
    the table renormalized.

    Raises when all mass (or every sample) falls outside the box.
    """
    if bins_per_axis < 1:
        raise ValidationError("bins_per_axis must be at least 1")
    if isinstance(source, MixtureSpec):
        return _discretize_exact(source, bins_per_axis, box, mass_floor)
    if isinstance(source, SampleSet):
        return _discretize_samples(source, bins_per_axis, box, mass_floor)
    raise ValidationError("source must be a MixtureSpec or a SampleSet")


def _cell_labels(bins: int, occupied: np.ndarray) -> tuple[str, ...]:
    return tuple(f"cell({i // bins},{i % bins})" for i in np.flatnonzero(occupied))


def _discretize_exact(spec, bins, box, mass_floor) -> DiscreteJoint:
    (x_lo, x_hi), (y_lo, y_hi) = box if box is not None else default_box(spec)
    if not (x_hi > x_lo and y_hi > y_lo):
        raise ValidationError("box must have positive extent")
    edges_x = np.linspace(x_lo, x_hi, bins + 1)
    edges_y = np.linspace(y_lo, y_hi, bins + 1)

    class_mass = np.zeros((bins * bins, spec.num_true_classes))
    for comp in spec.components:
        sx, sy = np.sqrt(comp.variances)
        cdf_x = ndtr((edges_x - comp.mean[0]) / sx)
        cdf_y = ndtr((edges_y - comp.mean[1]) / sy)
        cells = np.outer(np.diff(cdf_x), np.diff(cdf_y)) * comp.weight
        class_mass[:, comp.class_id] += cells.ravel()

    table = class_mass if spec.noise is None else class_mass @ spec.noise
    total = table.sum()
    if total <= 1e-12:
        raise ValidationError("all probability mass falls outside the box")
    keep = table.sum(axis=1) > mass_floor * total
    if not keep.any():
        raise ValidationError("no grid cell holds appreciable mass")
    kept = table[keep]
    return DiscreteJoint(kept / kept.sum(), x_labels=_cell_labels(bins, keep))


def _discretize_samples(samples, bins, box, mass_floor) -> DiscreteJoint:
    pts = samples.points
    if box is None:
        box = (
            (float(pts[:, 0].min()), float(pts[:, 0].max())),
            (float(pts[:, 1].min()), float(pts[:, 1].max())),
        )
    (x_lo, x_hi), (y_lo, y_hi) = box
    if not (x_hi > x_lo and y_hi > y_lo):
        raise ValidationError("box must have positive extent")
    edges_x = np.linspace(x_lo, x_hi, bins + 1)
    edges_y = np.linspace(y_lo, y_hi, bins + 1)

    inside = (
        (pts[:, 0] >= x_lo) & (pts[:, 0] <= x_hi)
        & (pts[:, 1] >= y_lo) & (pts[:, 1] <= y_hi)
    )
    if not inside.any():
        raise ValidationError("every sample falls outside the box")
    pts_in = pts[inside]
    labels = samples.observed_labels[inside]
    ix = np.minimum(np.searchsorted(edges_x, pts_in[:, 0], side="right") - 1, bins - 1)
    iy = np.minimum(np.searchsorted(edges_y, pts_in[:, 1], side="right") - 1, bins - 1)
    cell = ix * bins + iy
    n_labels = int(labels.max()) + 1
    counts = np.zeros((bins * bins, n_labels))
    np.add.at(counts, (cell, labels), 1.0)

    total = counts.sum()
    keep = counts.sum(axis=1) > mass_floor * total
    kept = counts[keep]
    return DiscreteJoint(kept / kept.sum(), x_labels=_cell_labels(bins, keep))


# ---------------------------------------------------------------------------
# experiment presets
# ---------------------------------------------------------------------------

#: component variance shared by both presets
PRESET_VARIANCE = 0.25

#: component separation in the noise-study preset (virtually no overlap)
NOISE_PRESET_DISTANCE = 16.0

#: component weights in the overlap-study preset
OVERLAP_PRESET_WEIGHTS = (0.6, 0.4)


def symmetric_flip(rho: float, classes: int = 2) -> np.ndarray:
    """Confusion table that keeps a label with probability 1 - rho and
    spreads rho uniformly over the other classes."""
    if not 0.0 <= rho <= 1.0:
        raise ValidationError("flip rate must lie in [0, 1]")
    off = rho / (classes - 1)
    return np.full((classes, classes), off) + (1.0 - rho - off) * np.eye(classes)


def noise_preset(
    rho: float,
    *,
    distance: float = NOISE_PRESET_DISTANCE,
    variance: float = PRESET_VARIANCE,
    weights: tuple[float, float] = (0.5, 0.5),
    seed: int = 0,
) -> MixtureSpec:
    """Two equal Gaussians ``distance`` apart with labels flipped at rate rho."""
    half = distance / 2.0
    comps = (
        MixtureComponent((-half, 0.0), (variance, variance), weights[0], 0),
        MixtureComponent((half, 0.0), (variance, variance), weights[1], 1),
    )
    return MixtureSpec(comps, symmetric_flip(rho), seed)


def overlap_preset(
    distance: float,
    *,
    variance: float = PRESET_VARIANCE,
    weights: tuple[float, float] = OVERLAP_PRESET_WEIGHTS,
    seed: int = 0,
) -> MixtureSpec:
    """Two unequal-weight Gaussians ``distance`` apart with exact labels."""
    half = distance / 2.0
    comps = (
        MixtureComponent((-half, 0.0), (variance, variance), weights[0], 0),
        MixtureComponent((half, 0.0), (variance, variance), weights[1], 1),
    )
    return MixtureSpec(comps, None, seed)


def get_preset(name: str, seed: int = 0) -> MixtureSpec:
    """Resolve preset names like ``noise-0.2`` or ``overlap-3.2``."""
    parts = name.split("-", 1)
    if len(parts) == 2:
        kind, raw = parts
        try:
            value = float(raw)
        except ValueError:
            value = None
        if value is not None:
            if kind == "noise":
                return noise_preset(value, seed=seed)
            if kind == "overlap":
                return overlap_preset(value, seed=seed)
    raise ValidationError(
        f"unknown preset {name!r}; expected noise-<rate> or overlap-<distance>"
    )
