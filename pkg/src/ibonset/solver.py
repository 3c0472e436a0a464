"""Tabular solver for the bottleneck objective I(X;Z) - beta I(Y;Z).

The encoder p(z|x) is iterated to a fixed point of the self-consistent
equations

    p(z|x) <- p(z) exp(-beta KL(p(y|x) || p(y|z))) / normalizer

with p(z) and p(y|z) recomputed from the current encoder each step.  The
objective never increases along this iteration (the update is a coordinate
minimization of the underlying free energy), which is recorded and checked.

The exactly uniform encoder is a stationary point for every beta, so
initialization perturbs uniform rows with Dirichlet noise; several restarts
are run and the best final objective wins.  A sweep over an ascending beta
grid locates the empirical learnability onset: the first grid point whose
converged I(X;Z) exceeds the mean plus three standard deviations of the
lowest grid points (plus a small floor guarding zero deviation).
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import rel_entr, xlogy

from .dist import DiscreteJoint
from .errors import ValidationError

_LOG_TINY = 1e-300


@dataclass(frozen=True)
class Encoder:
    """Row-stochastic table p(z|x) produced by the solver."""

    probs: np.ndarray
    beta: float
    converged: bool
    iterations: int
    objective: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.array(self.probs, dtype=float)
        if arr.ndim != 2:
            raise ValidationError("encoder table must be 2-dimensional")
        if arr.min() < -1e-9 or not np.all(np.isfinite(arr)):
            raise ValidationError("encoder table has invalid entries")
        sums = np.clip(arr, 0.0, None).sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValidationError("encoder rows do not sum to 1")
        arr = np.clip(arr, 0.0, None) / sums[:, None]
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)


@dataclass(frozen=True)
class SweepPoint:
    beta: float
    i_xz: float
    i_yz: float
    objective: float
    converged: bool


@dataclass(frozen=True)
class SweepResult:
    """Converged information coordinates per beta plus the detected onset."""

    points: tuple[SweepPoint, ...]
    detected_beta0: float | None
    protocol: dict

    def __post_init__(self):
        for p in self.points:
            if p.i_yz > p.i_xz + 1e-9 or p.i_yz < -1e-9:
                raise ValidationError(
                    f"information pair ({p.i_xz}, {p.i_yz}) at beta={p.beta} "
                    "violates the processing inequality"
                )
            # the trivial encoder achieves 0, so a converged minimizer can
            # never end above it; points cut off mid-descent may
            if p.converged and p.objective > 1e-9:
                raise ValidationError(
                    f"objective {p.objective} at beta={p.beta} exceeds the "
                    "trivial solution's 0"
                )

    def to_dict(self) -> dict:
        return {
            "points": [
                {
                    "beta": p.beta,
                    "i_xz_nats": p.i_xz,
                    "i_yz_nats": p.i_yz,
                    "objective": p.objective,
                    "converged": p.converged,
                }
                for p in self.points
            ],
            "detected_beta0": self.detected_beta0,
            "protocol": dict(self.protocol),
        }


def _information_pair(pzx: np.ndarray, joint: DiscreteJoint) -> tuple[float, float]:
    p_x = joint.probs.sum(axis=1)
    p_y = joint.probs.sum(axis=0)
    p_z = p_x @ pzx
    i_xz = float((p_x[:, None] * rel_entr(pzx, p_z[None, :])).sum())
    p_zy = pzx.T @ joint.probs
    i_yz = float(rel_entr(p_zy, np.outer(p_z, p_y)).sum())
    return i_xz, i_yz


def info_plane(encoder, joint: DiscreteJoint) -> tuple[float, float]:
    """Information coordinates (I(X;Z), I(Y;Z)) in nats for an encoder.

    Accepts an :class:`Encoder` or a raw row-stochastic matrix.
    """
    pzx = encoder.probs if isinstance(encoder, Encoder) else np.asarray(encoder, float)
    if pzx.ndim != 2 or pzx.shape[0] != joint.shape[0]:
        raise ValidationError("encoder rows do not match joint x alphabet")
    return _information_pair(pzx, joint)


def default_z_card(joint: DiscreteJoint) -> int:
    """Representation cardinality used when none is given: min(|X|, 2|Y|)."""
    return min(joint.shape[0], 2 * joint.shape[1])


def solve(
    joint: DiscreteJoint,
    beta: float,
    z_card: int | None = None,
    *,
    seed=0,
    max_iters: int = 5000,
    tol: float = 1e-10,
    restarts: int = 5,
    init_concentration: float = 10.0,
    init_probs: np.ndarray | None = None,
) -> Encoder:
    """Iterate the self-consistent equations to a fixed point at one beta.

    ``restarts`` random initializations (Dirichlet-perturbed uniform rows,
    concentration ``init_concentration``) are run for up to ``max_iters``
    iterations each, stopping when the max-norm change of p(z|x) drops
    below ``tol``; the restart with the lowest final objective is returned.
    ``init_probs``, when given, is tried as an additional deterministic
    initialization (used for warm starts and stationarity checks; the
    exactly uniform encoder is itself a fixed point, so random perturbation
    is what breaks that symmetry).

    Non-convergence is not an error: the best iterate comes back with
    ``converged=False``.
    """
    if not (beta > 0.0 and math.isfinite(beta)):
        raise ValidationError(f"beta must be positive, got {beta!r}")
    if z_card is None:
        z_card = default_z_card(joint)
    if z_card < 2:
        raise ValidationError(f"z_card must be at least 2, got {z_card}")
    if restarts < 0:
        raise ValidationError("restarts must be non-negative")

    n_x = joint.shape[0]
    p_x = joint.probs.sum(axis=1)
    p_yx = joint.probs / p_x[:, None]
    # sum_y p(y|x) log p(y|x), reused by the divergence matrix every step
    neg_h_yx = xlogy(p_yx, p_yx).sum(axis=1)

    inits: list[np.ndarray] = []
    if init_probs is not None:
        arr = np.asarray(init_probs, dtype=float)
        if arr.shape != (n_x, z_card):
            raise ValidationError(
                f"init_probs shape {arr.shape} does not match ({n_x}, {z_card})"
            )
        inits.append(arr.copy())
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    for child in seq.spawn(restarts):
        rng = np.random.default_rng(child)
        inits.append(rng.dirichlet(np.full(z_card, init_concentration), size=n_x))
    if not inits:
        raise ValidationError("no initialization: give init_probs or restarts >= 1")

    best: Encoder | None = None
    for start_idx, pzx in enumerate(inits):
        objective = math.inf
        max_increase = 0.0
        converged = False
        iterations = 0
        for iterations in range(1, max_iters + 1):
            p_z = p_x @ pzx
            p_zy = pzx.T @ joint.probs
            with np.errstate(divide="ignore", invalid="ignore"):
                p_y_given_z = np.where(
                    p_z[:, None] > 0.0,
                    p_zy / np.maximum(p_z, _LOG_TINY)[:, None],
                    1.0 / joint.shape[1],
                )
            div = neg_h_yx[:, None] - p_yx @ np.log(
                np.maximum(p_y_given_z, _LOG_TINY)
            ).T
            new = p_z[None, :] * np.exp(-beta * div)
            dead = new.sum(axis=1) <= 0.0
            if dead.any():
                new[dead] = 1.0 / z_card
            new = new / new.sum(axis=1, keepdims=True)

            delta = float(np.abs(new - pzx).max())
            pzx = new
            i_xz, i_yz = _information_pair(pzx, joint)
            current = i_xz - beta * i_yz
            if current > objective:
                max_increase = max(max_increase, current - objective)
            objective = current
            if delta < tol:
                converged = True
                break

        candidate = Encoder(
            probs=pzx,
            beta=beta,
            converged=converged,
            iterations=iterations,
            objective=objective,
            diagnostics={
                "restart": start_idx,
                "max_objective_increase": max_increase,
            },
        )
        if best is None or candidate.objective < best.objective:
            best = candidate
    best.diagnostics["restarts_run"] = len(inits)
    return best


def _sweep_task(args):
    joint, beta, z_card, seed, max_iters, tol, restarts = args
    enc = solve(
        joint, beta, z_card, seed=seed, max_iters=max_iters, tol=tol, restarts=restarts
    )
    i_xz, i_yz = _information_pair(enc.probs, joint)
    return SweepPoint(beta, i_xz, i_yz, enc.objective, enc.converged), enc


def detect_onset(
    betas: np.ndarray,
    i_xz_values: np.ndarray,
    *,
    baseline_points: int = 5,
    sigma_multiplier: float = 3.0,
    floor: float = 1e-6,
) -> tuple[float | None, dict]:
    """First beta where I(X;Z) escapes the low-beta noise band.

    The band is the mean plus ``sigma_multiplier`` standard deviations of
    the ``baseline_points`` lowest grid points; ``floor`` (in nats) guards
    a zero standard deviation.  The onset is reported as the midpoint of
    the first escaping beta and its predecessor.
    """
    mu = float(np.mean(i_xz_values[:baseline_points]))
    sigma = float(np.std(i_xz_values[:baseline_points]))
    threshold = mu + sigma_multiplier * sigma + floor
    detected = None
    for i in range(1, len(betas)):
        if i_xz_values[i] > threshold:
            detected = float((betas[i] + betas[i - 1]) / 2.0)
            break
    stats = {
        "baseline_mean": mu,
        "baseline_std": sigma,
        "threshold": threshold,
        "baseline_points": baseline_points,
        "sigma_multiplier": sigma_multiplier,
        "floor": floor,
    }
    return detected, stats


def sweep(
    joint: DiscreteJoint,
    beta_grid,
    z_card: int | None = None,
    *,
    seed=0,
    max_iters: int = 5000,
    tol: float = 1e-10,
    restarts: int = 5,
    baseline_points: int = 5,
    sigma_multiplier: float = 3.0,
    detection_floor: float = 1e-6,
    warm_start: bool = False,
    workers: int | None = None,
) -> SweepResult:
    """Solve an ascending beta grid and detect the learnability onset.

    Each beta is solved independently with its own derived seed, so the
    result is identical whether points run serially or across ``workers``
    processes.  ``warm_start`` instead anneals from the top of the grid
    downward, feeding each solution as an extra initialization to the next
    lower beta; this can change which local optimum is reached and is off
    by default.
    """
    betas = np.asarray(beta_grid, dtype=float)
    if betas.ndim != 1 or len(betas) < 7:
        raise ValidationError("beta grid must be one-dimensional with >= 7 points")
    if len(betas) < baseline_points + 2:
        raise ValidationError("beta grid too short for the onset baseline")
    if np.any(np.diff(betas) <= 0.0):
        raise ValidationError("beta grid must be strictly ascending")
    if z_card is None:
        z_card = default_z_card(joint)

    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = seq.spawn(len(betas))

    points: list[SweepPoint]
    if warm_start:
        points_rev = []
        prev = None
        for beta, child in zip(betas[::-1], children[::-1]):
            enc = solve(
                joint,
                float(beta),
                z_card,
                seed=child,
                max_iters=max_iters,
                tol=tol,
                restarts=restarts,
                init_probs=prev,
            )
            i_xz, i_yz = _information_pair(enc.probs, joint)
            points_rev.append(SweepPoint(float(beta), i_xz, i_yz, enc.objective, enc.converged))
            prev = enc.probs
        points = points_rev[::-1]
    else:
        tasks = [
            (joint, float(beta), z_card, child, max_iters, tol, restarts)
            for beta, child in zip(betas, children)
        ]
        if workers and workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                points = [p for p, _ in pool.map(_sweep_task, tasks)]
        else:
            points = [_sweep_task(t)[0] for t in tasks]

    i_xz_values = np.array([p.i_xz for p in points])
    detected, stats = detect_onset(
        betas,
        i_xz_values,
        baseline_points=baseline_points,
        sigma_multiplier=sigma_multiplier,
        floor=detection_floor,
    )
    protocol = {
        **stats,
        "z_card": z_card,
        "restarts": restarts,
        "max_iters": max_iters,
        "tol": tol,
        "warm_start": warm_start,
    }
    return SweepResult(points=tuple(points), detected_beta0=detected, protocol=protocol)


def save_sweep_csv(result: SweepResult, path) -> None:
    """Plot-ready CSV: one row per grid point."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beta", "i_xz_nats", "i_yz_nats", "objective"])
        for p in result.points:
            writer.writerow(
                [format(v, ".17g") for v in (p.beta, p.i_xz, p.i_yz, p.objective)]
            )
